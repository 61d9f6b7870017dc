"""Metropolis-Hastings sampling over ordered partitions.

The chain lives on (set partition, order values ``u``).  With ``u_r`` drawn
uniformly for every group the joint density that marginalises to the
posterior over ordered partitions is ``P(b | A) * B!``; the ``B!`` factor
enters every acceptance ratio that changes the number of groups.  Tempering
with ``beta`` applies to ``P(b | A)`` only.

Proposal kinds:

* single-node moves, targets mixing a neighbour-guided choice, a uniform
  existing group, and a fresh group with a new ``u``;
* group relocation, drawing a new ``u`` for a whole group;
* merge / split / reallocation of two groups, the split drawn by sequential
  allocation over a random node order with exactly tracked probabilities.
"""

from __future__ import annotations

import bisect
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .dl import DLBreakdown, ModelVariant, breakdown, delta_description_length, delta_order_value
from .graph import DirectedMultigraph
from .state import NEW, BlockState, Partition, build_state

INF = math.inf


@dataclass
class ChainConfig:
    seed: int = 0
    beta: float = 1.0
    sweeps: int = 1000
    burn_in: int = 0
    thinning: int = 1
    init: str | Partition = "single"
    restarts: int = 10
    # proposal mix
    p_new: float = 0.1
    edge_guided: float = 0.5
    relocations: int = 1
    merge_splits: int = 1
    p_merge: float = 0.5
    split_beta: float = 1.0
    split_epsilon: float = 0.02
    # MAP search
    anneal_sweeps: int = 100
    anneal_beta: float = 1.0
    patience: int | None = 50
    jobs: int = 1
    shadow: bool = False

    def __post_init__(self):
        if self.sweeps < 1:
            raise ValueError("sweeps must be >= 1")
        if self.thinning < 1:
            raise ValueError("thinning must be >= 1")
        if self.burn_in < 0:
            raise ValueError("burn_in must be >= 0")
        if not self.beta > 0:
            raise ValueError("beta must be positive (or inf)")
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")
        if not 0 <= self.p_new <= 1 or not 0 <= self.edge_guided <= 1:
            raise ValueError("proposal probabilities must lie in [0, 1]")
        if isinstance(self.init, str) and self.init not in ("single", "singletons"):
            raise ValueError(f"unknown init {self.init!r}")


class Random:
    """Seedable counter-based generator (Philox) with buffered uniforms."""

    _CHUNK = 4096

    def __init__(self, seed=0):
        self.gen = np.random.Generator(np.random.Philox(seed))
        self._buf: list[float] = []
        self._i = 0

    def random(self) -> float:
        if self._i >= len(self._buf):
            self._buf = self.gen.random(self._CHUNK).tolist()
            self._i = 0
        x = self._buf[self._i]
        self._i += 1
        return x

    def randint(self, n: int) -> int:
        return min(int(self.random() * n), n - 1)

    def permutation(self, n: int) -> list[int]:
        return self.gen.permutation(n).tolist()

    def shuffled(self, items: list) -> list:
        return [items[k] for k in self.gen.permutation(len(items))]


def make_rng(seed) -> Random:
    return seed if isinstance(seed, Random) else Random(seed)


def initial_partition(g: DirectedMultigraph, init, rng: Random) -> Partition:
    if isinstance(init, Partition):
        return init
    N = g.num_nodes
    if init == "single":
        return Partition(np.zeros(N, dtype=np.int64), [rng.random()] if N else [])
    u = np.array([rng.random() for _ in range(N)])
    return Partition(np.arange(N), u)


@dataclass
class SweepStats:
    proposed: dict = field(default_factory=dict)
    accepted: dict = field(default_factory=dict)

    def record(self, kind: str, accepted: bool) -> None:
        self.proposed[kind] = self.proposed.get(kind, 0) + 1
        if accepted:
            self.accepted[kind] = self.accepted.get(kind, 0) + 1

    def merge(self, other: "SweepStats") -> None:
        for k, v in other.proposed.items():
            self.proposed[k] = self.proposed.get(k, 0) + v
        for k, v in other.accepted.items():
            self.accepted[k] = self.accepted.get(k, 0) + v

    @property
    def total_accepted(self) -> int:
        return sum(self.accepted.values())


def _log2(x: float) -> float:
    return math.log2(x) if x > 0 else -INF


def _accept(log2_ratio: float, dS: float, beta: float, rng: Random) -> bool:
    """MH test; ``log2_ratio`` holds the Hastings and ``B!`` factors."""
    if beta == INF:
        return dS < 0
    a = -beta * dS + log2_ratio
    if a >= 0:
        return True
    return rng.random() < 2.0 ** a


class Chain:
    """One Markov chain over partitions of ``g`` under variant ``v``."""

    def __init__(self, g: DirectedMultigraph, v: ModelVariant, cfg: ChainConfig,
                 state: BlockState | None = None, rng=None):
        self.g = g
        self.v = v
        self.cfg = cfg
        self.rng = make_rng(cfg.seed if rng is None else rng)
        if state is None:
            state = build_state(g, initial_partition(g, cfg.init, self.rng))
        self.state = state
        self.sigma = breakdown(state, v).total
        self.stats = SweepStats()
        self.total_stats = SweepStats()

        # incident endpoints per node for neighbour-guided targets;
        # a self-loop contributes two endpoints at the node itself
        self._nbrs: list[list[int]] = []
        self._cum: list[list[int]] = []
        for i in range(g.num_nodes):
            nb, cw, acc = [], [], 0
            for j, m in g.out_adj[i] + g.in_adj[i]:
                acc += m
                nb.append(j)
                cw.append(acc)
            if g.self_loops[i]:
                acc += 2 * g.self_loops[i]
                nb.append(i)
                cw.append(acc)
            self._nbrs.append(nb)
            self._cum.append(cw)

    # -- bookkeeping -------------------------------------------------------

    def recompute(self) -> DLBreakdown:
        return breakdown(self.state, self.v)

    def _do(self, prop, dS: float, log: list | None):
        d = self.state.apply(prop)
        self.sigma += dS
        if log is not None:
            log.append((d, dS))
        return d

    def _undo(self, log: list) -> None:
        while log:
            d, dS = log.pop()
            self.state.revert(d)
            self.sigma -= dS

    def _delta(self, prop) -> float:
        dS = delta_description_length(self.state, prop, self.v)
        if self.cfg.shadow:
            before = self.recompute().total
            d = self.state.apply(prop)
            after = self.recompute().total
            self.state.revert(d)
            if abs((after - before) - dS) > 1e-8:
                raise AssertionError(f"incremental dS={dS} but recomputed {after - before}")
        return dS

    def _fresh_u(self) -> float:
        # order values must stay distinct; a clash is a measure-zero event
        s = self.state
        while True:
            x = self.rng.random()
            if all(s.u[r] != x for r in s.blocks):
                return x

    # -- single-node moves -----------------------------------------------

    def _group_counts(self, i: int) -> dict:
        b = self.state.b
        c: dict[int, int] = {}
        cw = self._cum[i]
        prev = 0
        for j, acc in zip(self._nbrs[i], cw):
            t = b[j]
            c[t] = c.get(t, 0) + acc - prev
            prev = acc
        return c

    def _p_existing(self, t: int, counts: dict, k_tot: int, B: int) -> float:
        if k_tot == 0:
            return 1.0 / B
        w = self.cfg.edge_guided
        return w * counts.get(t, 0) / k_tot + (1.0 - w) / B

    def node_step(self, i: int, beta: float) -> bool:
        s, rng, cfg = self.state, self.rng, self.cfg
        r = s.b[i]
        B = s.B
        singleton = s.n[r] == 1
        k_tot = self._cum[i][-1] if self._cum[i] else 0
        p_new = cfg.p_new

        if rng.random() < p_new:
            prop = s.propose(i, NEW, self._fresh_u())
            if singleton:
                log2_ratio = 0.0
            else:
                counts = self._group_counts(i)
                loops = 2 * self.g.self_loops[i]
                counts[r] = counts.get(r, 0) - loops
                counts[prop.target] = loops
                q_rev = (1 - p_new) * self._p_existing(r, counts, k_tot, B + 1)
                log2_ratio = _log2(q_rev) - _log2(p_new) + math.log2(B + 1)
            kind = "node-new"
        else:
            if k_tot and rng.random() < cfg.edge_guided:
                x = rng.random() * k_tot
                j = self._nbrs[i][bisect.bisect_right(self._cum[i], x)]
                t = s.b[j]
            else:
                t = s.blocks[rng.randint(B)]
            if t == r:
                self.stats.record("node", True)
                return True
            counts = self._group_counts(i)
            q_fwd = (1 - p_new) * self._p_existing(t, counts, k_tot, B)
            prop = s.propose(i, t)
            if singleton:
                log2_ratio = _log2(p_new) - _log2(q_fwd) - math.log2(B)
            else:
                loops = 2 * self.g.self_loops[i]
                counts[r] = counts.get(r, 0) - loops
                counts[t] = counts.get(t, 0) + loops
                q_rev = (1 - p_new) * self._p_existing(r, counts, k_tot, B)
                log2_ratio = _log2(q_rev) - _log2(q_fwd)
            kind = "node"

        dS = self._delta(prop)
        ok = _accept(log2_ratio, dS, beta, rng)
        if ok:
            self._do(prop, dS, None)
        self.stats.record(kind, ok)
        return ok

    # -- group relocation --------------------------------------------------

    def relocation_step(self, beta: float) -> bool:
        s, rng = self.state, self.rng
        r = s.blocks[rng.randint(s.B)]
        value = self._fresh_u()
        dS = delta_order_value(s, r, value, self.v)
        ok = _accept(0.0, dS, beta, rng)
        if ok:
            s.set_order_value(r, value)
            self.sigma += dS
        self.stats.record("relocate", ok)
        return ok

    # -- merge / split -----------------------------------------------------

    def _allocate(self, order, new_label: int, forced: set | None, log: list) -> float:
        """Sequentially offer each node in ``order`` a move into group
        ``new_label``.  Returns log2 of the probability of the choices made;
        with ``forced`` the choices are dictated (node in ``forced`` moves)."""
        s, rng, cfg = self.state, self.rng, self.cfg
        eps = cfg.split_epsilon
        logp = 0.0
        for x in order:
            prop = s.propose(x, new_label)
            dS = self._delta(prop)
            z = max(-1000.0, min(1000.0, cfg.split_beta * dS))
            p = 0.5 * eps + (1 - eps) / (1 + 2.0 ** z)
            move = (x in forced) if forced is not None else rng.random() < p
            if move:
                self._do(prop, dS, log)
                logp += math.log2(p)
            else:
                logp += math.log2(1 - p)
        return logp

    def merge_split_step(self, beta: float) -> bool:
        s, rng, cfg = self.state, self.rng, self.cfg
        N = s.N
        if N < 2:
            return False
        i = rng.randint(N)
        j = rng.randint(N - 1)
        if j >= i:
            j += 1
        a, c = s.b[i], s.b[j]
        if a == c:
            return self._split(i, j, beta)
        if rng.random() < cfg.p_merge:
            return self._merge(i, j, beta)
        return self._reallocate(i, j, beta)

    def _rest(self, groups, i, j) -> list[int]:
        s = self.state
        rest = sorted(x for r in groups for x in s.members[r] if x != i and x != j)
        return self.rng.shuffled(rest)

    def _split(self, i: int, j: int, beta: float) -> bool:
        s = self.state
        B = s.B
        order = self._rest([s.b[i]], i, j)
        sigma0 = self.sigma
        log: list = []
        prop = s.propose(j, NEW, self._fresh_u())
        self._do(prop, self._delta(prop), log)
        logp = self._allocate(order, prop.target, None, log)
        dS = self.sigma - sigma0
        log2_ratio = _log2(self.cfg.p_merge) - logp + math.log2(B + 1)
        ok = _accept(log2_ratio, dS, beta, self.rng)
        if not ok:
            self._undo(log)
        self.stats.record("split", ok)
        return ok

    def _merge_into(self, target: int, nodes, log: list) -> None:
        s = self.state
        for x in nodes:
            prop = s.propose(x, target)
            self._do(prop, self._delta(prop), log)

    def _merge(self, i: int, j: int, beta: float) -> bool:
        s = self.state
        B = s.B
        A, C = s.b[i], s.b[j]
        u_c = s.u[C]
        moved = set(s.members[C])
        order = self._rest([A, C], i, j)
        sigma0 = self.sigma
        merge_log: list = []
        self._merge_into(A, sorted(moved), merge_log)
        dS = self.sigma - sigma0

        # probability that a split launched from the merged group would
        # recreate the current pair of groups
        replay: list = []
        prop = s.propose(j, NEW, u_c)
        self._do(prop, self._delta(prop), replay)
        logp = self._allocate(order, prop.target, moved, replay)

        log2_ratio = logp - _log2(self.cfg.p_merge) - math.log2(B)
        ok = _accept(log2_ratio, dS, beta, self.rng)
        if ok:
            self._undo(replay)
        # on rejection the replay already restored the original partition
        self.stats.record("merge", ok)
        return ok

    def _reallocate(self, i: int, j: int, beta: float) -> bool:
        s = self.state
        A, C = s.b[i], s.b[j]
        u_c = s.u[C]
        moved = set(s.members[C])
        order = self._rest([A, C], i, j)
        sigma0 = self.sigma
        log: list = []
        self._merge_into(A, sorted(moved), log)

        replay: list = []
        prop = s.propose(j, NEW, u_c)
        self._do(prop, self._delta(prop), replay)
        logp_old = self._allocate(order, prop.target, moved, replay)
        self._undo(replay)

        prop = s.propose(j, NEW, u_c)
        self._do(prop, self._delta(prop), log)
        logp_new = self._allocate(order, prop.target, None, log)
        dS = self.sigma - sigma0
        ok = _accept(logp_old - logp_new, dS, beta, self.rng)
        if not ok:
            self._undo(log)
        self.stats.record("reallocate", ok)
        return ok

    # -- sweeps ------------------------------------------------------------

    def sweep(self, beta: float | None = None) -> SweepStats:
        """Every node gets one move proposal (random scan order), followed by
        the configured number of relocation and merge-split proposals."""
        beta = self.cfg.beta if beta is None else beta
        self.stats = SweepStats()
        if self.state.N:
            for i in self.rng.permutation(self.state.N):
                self.node_step(i, beta)
            for _ in range(self.cfg.relocations):
                self.relocation_step(beta)
            for _ in range(self.cfg.merge_splits):
                self.merge_split_step(beta)
        self.total_stats.merge(self.stats)
        return self.stats

    def run(self, sweeps: int, beta: float | None = None, callback=None) -> None:
        for k in range(sweeps):
            self.sweep(beta)
            if callback is not None:
                callback(self, k)


def mh_sweep(state: BlockState, v: ModelVariant, cfg: ChainConfig, rng=None) -> SweepStats:
    """One sweep on ``state`` in place."""
    return Chain(state.g, v, cfg, state=state, rng=rng).sweep()


def propose_new_group(state: BlockState, node: int, rng):
    """Single-node move of ``node`` into a fresh group whose order value is
    drawn uniformly from [0, 1]."""
    return state.propose(node, NEW, make_rng(rng).random())


# -- MAP search ----------------------------------------------------------------

@dataclass
class MapResult:
    partition: Partition
    breakdown: DLBreakdown
    restart_sigmas: list
    best_restart: int

    @property
    def sigma(self) -> float:
        return self.breakdown.total

    @property
    def num_groups(self) -> int:
        return self.partition.num_groups


def _restart_seeds(seed, n: int) -> list:
    return np.random.SeedSequence(seed).spawn(n)


def _one_restart(g: DirectedMultigraph, v: ModelVariant, cfg: ChainConfig, seed) -> tuple[float, Partition]:
    chain = Chain(g, v, cfg, rng=Random(seed))
    if cfg.anneal_sweeps:
        # explore at finite beta, then polish the best state visited
        best, keep = chain.sigma, chain.state.partition()
        for _ in range(cfg.anneal_sweeps):
            chain.sweep(cfg.anneal_beta)
            if chain.sigma < best:
                best, keep = chain.sigma, chain.state.partition()
        chain = Chain(g, v, cfg, state=build_state(g, keep), rng=chain.rng)
    best = chain.sigma
    stale = 0
    for _ in range(cfg.sweeps):
        chain.sweep(INF)
        if chain.sigma < best - 1e-10:
            best = chain.sigma
            stale = 0
        else:
            stale += 1
            if cfg.patience is not None and stale >= cfg.patience:
                break
    return chain.recompute().total, chain.state.partition()


def anneal_map(g: DirectedMultigraph, v: ModelVariant, cfg: ChainConfig) -> MapResult:
    """Minimum description length partition over ``cfg.restarts`` runs.

    Each restart optionally explores at ``cfg.anneal_beta`` first, then runs
    zero-temperature sweeps until ``cfg.sweeps`` or ``cfg.patience``
    sweeps without improvement."""
    seeds = _restart_seeds(cfg.seed, cfg.restarts)
    if cfg.jobs > 1 and cfg.restarts > 1:
        with ProcessPoolExecutor(cfg.jobs) as ex:
            results = list(ex.map(_one_restart, [g] * len(seeds), [v] * len(seeds),
                                  [cfg] * len(seeds), seeds))
    else:
        results = [_one_restart(g, v, cfg, sd) for sd in seeds]
    sigmas = [r[0] for r in results]
    k = int(np.argmin(sigmas))
    p = results[k][1]
    return MapResult(p, breakdown(build_state(g, p), v), sigmas, k)


# -- posterior marginals -------------------------------------------------------

@dataclass
class RankMarginals:
    counts: np.ndarray
    samples: int = 0

    @classmethod
    def empty(cls, num_nodes: int) -> "RankMarginals":
        return cls(np.zeros((num_nodes, max(num_nodes, 1)), dtype=np.int64))

    def record(self, ranks) -> None:
        self.counts[np.arange(len(ranks)), ranks] += 1
        self.samples += 1

    def pi(self) -> np.ndarray:
        if self.samples == 0:
            raise ValueError("no samples collected")
        return self.counts / self.samples

    def merged(self, other: "RankMarginals") -> "RankMarginals":
        return RankMarginals(self.counts + other.counts, self.samples + other.samples)


def collect_marginals(g: DirectedMultigraph, v: ModelVariant, cfg: ChainConfig,
                      callback=None) -> RankMarginals:
    """Posterior rank marginals from a chain at ``cfg.beta`` (normally 1).

    ``cfg.burn_in`` sweeps are discarded, then ``cfg.sweeps`` sweeps run and
    every ``cfg.thinning``-th records the rank of each node."""
    if cfg.beta != 1.0:
        raise ValueError("rank marginals need beta = 1")
    chain = Chain(g, v, cfg)
    chain.run(cfg.burn_in)
    marg = RankMarginals.empty(g.num_nodes)
    for k in range(cfg.sweeps):
        chain.sweep()
        if k % cfg.thinning == 0:
            marg.record(chain.state.node_ranks())
            if callback is not None:
                callback(chain)
    return marg
