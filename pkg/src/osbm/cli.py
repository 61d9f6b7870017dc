"""Command-line interface.

Subcommands: fit, compare, marginals, sample, generate, rank.  Output is
JSON by default; ``--format tsv`` dumps one row per node.  Settings come
from flags, then an optional ``--config`` file of ``key = value`` lines,
then built-in defaults.

Exit codes: 0 success, 1 usage error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import hashlib
import io
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (
    UndefinedCorrelation, compare_fits, fit_summary, kendall_tau,
    lexicographic_order, mean_rank,
)
from .dl import VARIANTS, ModelVariant, QCapExceeded, set_q_cap
from .generators import add_upstream_perturbation, imbalanced_graph
from .graph import EdgeListError, degree_imbalance, dump_edge_list, load_edge_list
from .mcmc import Chain, ChainConfig, anneal_map, collect_marginals

EXIT_USAGE = 1
EXIT_RUNTIME = 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# name -> (converter, default).  Flags are registered with default None so
# that config-file values can fill the gaps.
_SETTINGS = {
    "model": (str, "dc-osbm"),
    "seed": (int, 0),
    "sweeps": (int, None),
    "burn_in": (int, 0),
    "thin": (int, 1),
    "restarts": (int, 10),
    "beta": (float, 1.0),
    "degree_correction": (str, None),
    "q_cap": (int, None),
    "format": (str, "json"),
    "output": (str, None),
    "jobs": (int, 1),
    "patience": (int, 50),
    "anneal_sweeps": (int, 100),
    "merge_splits": (int, 1),
    "models": (str, "sbm,dc-sbm,osbm,dc-osbm"),
    "integer_ids": (bool, False),
    "timing": (bool, False),
}

_SWEEP_DEFAULTS = {"fit": 1000, "compare": 1000, "marginals": 1000, "sample": 100}


def _to_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise UsageError(f"not a boolean: {text!r}")


def read_config(path: str) -> dict:
    """Flat ``key = value`` file; ``#`` starts a comment, dashes and
    underscores in keys are interchangeable."""
    out = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc.strerror}") from None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise UsageError(f"{path}:{lineno}: expected 'key = value'")
        key = key.strip().replace("-", "_")
        value = value.strip()
        if key not in _SETTINGS:
            raise UsageError(f"{path}:{lineno}: unknown setting {key!r}")
        conv = _SETTINGS[key][0]
        try:
            out[key] = _to_bool(value) if conv is bool else conv(value)
        except ValueError:
            raise UsageError(f"{path}:{lineno}: bad value {value!r} for {key}") from None
    return out


def _resolve(args: argparse.Namespace) -> argparse.Namespace:
    cfg = read_config(args.config) if getattr(args, "config", None) else {}
    for key, (_, default) in _SETTINGS.items():
        if getattr(args, key, None) is None:
            setattr(args, key, cfg.get(key, default))
    if getattr(args, "sweeps", None) is None and args.command in _SWEEP_DEFAULTS:
        args.sweeps = _SWEEP_DEFAULTS[args.command]
    return args


def _variant(name: str, dc: str | None) -> ModelVariant:
    try:
        v = VARIANTS[name]
    except KeyError:
        raise UsageError(f"unknown model {name!r}; choose from {', '.join(VARIANTS)}") from None
    if dc is not None:
        if dc not in ("on", "off"):
            raise UsageError("--degree-correction takes 'on' or 'off'")
        v = ModelVariant(dc == "on", v.ordered)
    return v


def _chain_config(args, **over) -> ChainConfig:
    kw = dict(
        seed=args.seed, sweeps=args.sweeps, burn_in=args.burn_in, thinning=args.thin,
        restarts=args.restarts, jobs=args.jobs, patience=args.patience,
        merge_splits=args.merge_splits, anneal_sweeps=args.anneal_sweeps,
    )
    if math.isinf(args.beta):
        kw["anneal_sweeps"] = 0
    else:
        kw["anneal_beta"] = args.beta
    kw.update(over)
    try:
        return ChainConfig(**kw)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _read_graph(path: str, integer_ids: bool):
    if path == "-":
        data = sys.stdin.buffer.read()
    else:
        data = Path(path).read_bytes()
    g = load_edge_list(io.StringIO(data.decode()), integer_ids=integer_ids)
    digest = {
        "path": path,
        "sha256": hashlib.sha256(data).hexdigest(),
        "num_nodes": g.num_nodes,
        "num_edges": g.total_edges,
    }
    return g, digest


def _node_rows(g, p):
    ranks = p.ranks()
    return [
        {"node": nid, "group": int(b), "rank": int(r)}
        for nid, b, r in zip(g.node_ids, p.labels.tolist(), ranks.tolist())
    ]


def _groups(p):
    sizes = np.bincount(p.labels, minlength=p.num_groups)
    gr = p.group_ranks()
    order = np.argsort(gr)
    return [{"rank": int(gr[l]), "group": int(l), "size": int(sizes[l])} for l in order]


def _fit_record(g, fit) -> dict:
    return {
        "model": fit.variant.name,
        "description_length": fit.breakdown.as_dict(),
        "num_groups": fit.num_groups,
        "upstream_fraction": fit.upstream_fraction if fit.variant.ordered else None,
        "alignment": fit.alignment,
        "groups": _groups(fit.partition),
        "partition": _node_rows(g, fit.partition),
    }


def _settings(args, keys) -> dict:
    out = {k: getattr(args, k) for k in keys}
    if "beta" in out and math.isinf(out["beta"]):
        out["beta"] = "inf"
    return out


def _emit(args, obj=None, tsv_rows=None, text=None) -> None:
    if text is None:
        if args.format == "tsv" and tsv_rows is not None:
            text = "".join("\t".join(str(c) for c in row) + "\n" for row in tsv_rows)
        else:
            text = json.dumps(obj, indent=2, allow_nan=False) + "\n"
    if args.output:
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)


# -- commands -----------------------------------------------------------------

def cmd_fit(args) -> int:
    v = _variant(args.model, args.degree_correction)
    cfg = _chain_config(args)
    g, digest = _read_graph(args.edges, args.integer_ids)
    t0 = time.perf_counter()
    res = anneal_map(g, v, cfg)
    fit = fit_summary(g, v, res.partition, res.breakdown)
    report = {
        "command": "fit",
        "version": __version__,
        "input": digest,
        "seed": args.seed,
        "settings": _settings(args, ["sweeps", "restarts", "beta", "patience", "anneal_sweeps", "merge_splits"]),
        **_fit_record(g, fit),
        "restart_sigmas": res.restart_sigmas,
        "wall_clock_seconds": time.perf_counter() - t0 if args.timing else None,
    }
    rows = [(r["node"], r["group"], r["rank"]) for r in report["partition"]]
    _emit(args, report, rows)
    return 0


def _finite_or_none(x: float):
    return x if math.isfinite(x) else None


def cmd_compare(args) -> int:
    names = [n.strip() for n in args.models.split(",") if n.strip()]
    if not names:
        raise UsageError("--models is empty")
    variants = []
    for n in names:
        v = _variant(n, args.degree_correction)
        if v.name not in [w.name for w in variants]:
            variants.append(v)
    cfg = _chain_config(args)
    g, digest = _read_graph(args.edges, args.integer_ids)
    t0 = time.perf_counter()
    fits = {}
    for v in variants:
        res = anneal_map(g, v, cfg)
        fits[v.name] = fit_summary(g, v, res.partition, res.breakdown)
    cmp = compare_fits(fits)
    report = {
        "command": "compare",
        "version": __version__,
        "input": digest,
        "seed": args.seed,
        "settings": _settings(args, ["sweeps", "restarts", "beta", "patience", "anneal_sweeps", "merge_splits"]),
        "best": cmp.best,
        "fits": {n: _fit_record(g, f) for n, f in fits.items()},
        "sigma_diff": cmp.sigma_diff,
        "log2_odds": {a: {b: -d for b, d in row.items()} for a, row in cmp.sigma_diff.items()},
        "odds": {a: {b: _finite_or_none(x) for b, x in row.items()} for a, row in cmp.odds.items()},
        "wall_clock_seconds": time.perf_counter() - t0 if args.timing else None,
    }
    rows = [(n, f.sigma, f.num_groups) for n, f in fits.items()]
    _emit(args, report, rows)
    return 0


def cmd_marginals(args) -> int:
    v = _variant(args.model, args.degree_correction)
    if args.beta != 1.0:
        raise UsageError("marginals are posterior averages and need --beta 1")
    cfg = _chain_config(args)
    g, digest = _read_graph(args.edges, args.integer_ids)
    t0 = time.perf_counter()
    m = collect_marginals(g, v, cfg)
    pi = m.pi()
    used = np.flatnonzero(pi.sum(axis=0) > 0)
    width = int(used.max()) + 1 if used.size else 1
    pi = pi[:, :width]
    mr = mean_rank(m)
    report = {
        "command": "marginals",
        "version": __version__,
        "input": digest,
        "model": v.name,
        "seed": args.seed,
        "settings": _settings(args, ["sweeps", "burn_in", "thin", "merge_splits"]),
        "samples": m.samples,
        "nodes": list(g.node_ids),
        "mean_rank": mr.tolist(),
        "pi": pi.tolist(),
        "wall_clock_seconds": time.perf_counter() - t0 if args.timing else None,
    }
    rows = [(nid, float(b), *row) for nid, b, row in zip(g.node_ids, mr.tolist(), pi.tolist())]
    _emit(args, report, rows)
    return 0


def cmd_sample(args) -> int:
    v = _variant(args.model, args.degree_correction)
    cfg = _chain_config(args, beta=args.beta)
    g, digest = _read_graph(args.edges, args.integer_ids)
    t0 = time.perf_counter()
    chain = Chain(g, v, cfg)
    chain.run(cfg.burn_in)
    samples = []
    for k in range(cfg.sweeps):
        chain.sweep()
        if k % cfg.thinning == 0:
            p = chain.state.partition()
            samples.append({
                "sweep": k,
                "sigma": chain.sigma,
                "num_groups": p.num_groups,
                "groups": p.labels.tolist(),
                "ranks": p.ranks().tolist(),
            })
    report = {
        "command": "sample",
        "version": __version__,
        "input": digest,
        "model": v.name,
        "seed": args.seed,
        "settings": _settings(args, ["sweeps", "burn_in", "thin", "beta", "merge_splits"]),
        "nodes": list(g.node_ids),
        "samples": samples,
        "wall_clock_seconds": time.perf_counter() - t0 if args.timing else None,
    }
    rows = [
        (s["sweep"], nid, b, r)
        for s in samples
        for nid, b, r in zip(g.node_ids, s["groups"], s["ranks"])
    ]
    _emit(args, report, rows)
    return 0


def cmd_generate(args) -> int:
    N, k = args.imbalanced
    if N < 2 or k < 1:
        raise UsageError("--imbalanced needs N >= 2 and k >= 1")
    if (N * k) % 2:
        raise UsageError(f"--imbalanced {N} {k}: N*k must be even for the half-edges to pair up")
    pn, pe = args.perturb_nodes, args.perturb_edges
    if (pn is None) != (pe is None):
        raise UsageError("--perturb-nodes and --perturb-edges go together")
    if pn is not None and not 2 <= pn <= N:
        raise UsageError("--perturb-nodes must lie in [2, N]")
    if pe is not None and pe < 0:
        raise UsageError("--perturb-edges must be >= 0")
    rng = np.random.Generator(np.random.Philox(args.seed))
    g = imbalanced_graph(N, k, rng)
    if pn is not None:
        g = add_upstream_perturbation(g, pn, pe, rng)
    if args.format == "json":
        obj = {
            "command": "generate",
            "version": __version__,
            "seed": args.seed,
            "num_nodes": g.num_nodes,
            "num_edges": g.total_edges,
            "edges": [list(e) for e in g.edges()],
        }
        _emit(args, obj)
    else:
        _emit(args, text=dump_edge_list(g))
    return 0


def cmd_rank(args) -> int:
    g, digest = _read_graph(args.edges, args.integer_ids)
    try:
        fit = json.loads(Path(args.fit).read_text())
    except json.JSONDecodeError as exc:
        raise ValueError(f"{args.fit} is not valid JSON: {exc}") from None
    key = {str(nid): i for i, nid in enumerate(g.node_ids)}
    ranks = np.full(g.num_nodes, -1.0)
    if args.mean_rank:
        if fit.get("command") != "marginals":
            raise ValueError(f"{args.fit} is not a marginals report")
        for nid, r in zip(fit["nodes"], fit["mean_rank"]):
            ranks[key[str(nid)]] = r
        source = "mean"
    else:
        rows = fit.get("partition")
        if rows is None:
            raise ValueError(f"{args.fit} has no partition (expected a fit report)")
        for row in rows:
            ranks[key[str(row["node"])]] = row["rank"]
        source = "map"
    if (ranks < 0).any():
        missing = [g.node_ids[i] for i in np.flatnonzero(ranks < 0)[:5]]
        raise ValueError(f"report does not cover every node of the graph, e.g. {missing}")
    d = degree_imbalance(g)
    order = lexicographic_order(ranks, d) if args.lexicographic else np.lexsort((np.arange(g.num_nodes), ranks))
    report = {
        "command": "rank",
        "version": __version__,
        "input": digest,
        "rank_source": source,
        "nodes": [
            {"node": g.node_ids[i], "rank": float(ranks[i]), "imbalance": int(d[i])}
            for i in order.tolist()
        ],
    }
    if args.tau:
        try:
            report["tau"] = kendall_tau(d, ranks)
        except UndefinedCorrelation as exc:
            report["tau"] = None
            report["tau_undefined"] = str(exc)
    rows = [(r["node"], r["rank"], r["imbalance"]) for r in report["nodes"]]
    _emit(args, report, rows)
    return 0


# -- parser ---------------------------------------------------------------------

def _beta(text: str) -> float:
    x = float(text)
    if not x > 0:
        raise argparse.ArgumentTypeError("beta must be positive (or inf)")
    return x


def _inference_flags(p: argparse.ArgumentParser, sampling: bool) -> None:
    p.add_argument("edges", help="edge-list file, or - for stdin")
    p.add_argument("--model", help="sbm, dc-sbm, osbm or dc-osbm (default dc-osbm)")
    p.add_argument("--degree-correction", choices=["on", "off"], help="override the model's degree correction")
    p.add_argument("--seed", type=int)
    p.add_argument("--sweeps", type=int)
    p.add_argument("--beta", type=_beta, help="inverse temperature; 'inf' skips the exploration phase of a fit")
    p.add_argument("--merge-splits", type=int, help="merge-split proposals per sweep")
    p.add_argument("--q-cap", type=int, help="largest edge count for the restricted-partition table")
    p.add_argument("--config", help="file of 'key = value' settings")
    p.add_argument("--integer-ids", action="store_const", const=True, help="node ids are integers 0..N-1")
    p.add_argument("--format", choices=["json", "tsv"])
    p.add_argument("--output", "-o", help="write here instead of stdout")
    p.add_argument("--timing", action="store_const", const=True, help="record wall-clock time in the report")
    if sampling:
        p.add_argument("--burn-in", type=int)
        p.add_argument("--thin", type=int)
    else:
        p.add_argument("--restarts", type=int)
        p.add_argument("--patience", type=int, help="stop after this many sweeps without improvement")
        p.add_argument("--anneal-sweeps", type=int, help="exploration sweeps at --beta before the greedy phase")
        p.add_argument("--jobs", type=int, help="worker processes for restarts")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="osbm", description="Ordered stochastic block models for directed multigraphs.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("fit", help="minimum description length partition")
    _inference_flags(p, sampling=False)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("compare", help="fit several variants and compare them")
    _inference_flags(p, sampling=False)
    p.add_argument("--models", help="comma-separated variants (default all four)")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("marginals", help="posterior rank marginals and mean ranks")
    _inference_flags(p, sampling=True)
    p.set_defaults(func=cmd_marginals)

    p = sub.add_parser("sample", help="dump posterior partition samples")
    _inference_flags(p, sampling=True)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("generate", help="imbalanced-degree network, optionally perturbed")
    p.add_argument("--imbalanced", nargs=2, type=int, metavar=("N", "K"), required=True)
    p.add_argument("--perturb-nodes", type=int, metavar="M", help="perturb among the first M nodes")
    p.add_argument("--perturb-edges", type=int, metavar="X", help="number of upstream edges to add")
    p.add_argument("--seed", type=int)
    p.add_argument("--format", choices=["edges", "json"], default="edges")
    p.add_argument("--output", "-o")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("rank", help="ranks against degree imbalance")
    p.add_argument("fit", help="fit report (or marginals report with --mean-rank)")
    p.add_argument("edges")
    p.add_argument("--mean-rank", action="store_true", help="use mean ranks from a marginals report")
    p.add_argument("--tau", action="store_true", help="Kendall tau-b between imbalance and rank")
    p.add_argument("--lexicographic", action="store_true", help="order nodes by rank, then imbalance")
    p.add_argument("--integer-ids", action="store_const", const=True)
    p.add_argument("--format", choices=["json", "tsv"])
    p.add_argument("--output", "-o")
    p.set_defaults(func=cmd_rank)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # --help, --version and parse errors
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    try:
        if args.command != "generate":
            _resolve(args)
        elif args.seed is None:
            args.seed = 0
        if getattr(args, "q_cap", None) is not None:
            if args.q_cap < 1:
                raise UsageError("--q-cap must be positive")
            set_q_cap(args.q_cap)
        return args.func(args)
    except UsageError as exc:
        print(f"osbm {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, EdgeListError, QCapExceeded, ValueError, KeyError) as exc:
        msg = exc.strerror if isinstance(exc, OSError) and exc.strerror else str(exc)
        where = f" ({exc.filename})" if isinstance(exc, OSError) and exc.filename else ""
        print(f"osbm {args.command}: {msg}{where}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:  # pragma: no cover - unexpected failure
        print(f"osbm {args.command}: internal error: {exc!r}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
