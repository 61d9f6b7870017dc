"""Synthetic networks: microcanonical SBM samples, the imbalanced-degree null
model, and planted upstream perturbations."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import DegreeSequence, DirectedMultigraph


def _rng(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.Generator(np.random.Philox(rng))


@dataclass
class GeneratorSpec:
    """``e[r, s]`` counts edges from group ``s`` to group ``r``.  Without a
    degree sequence, half-edges are spread uniformly over group members."""

    e: np.ndarray
    b: np.ndarray
    k_out: np.ndarray | None = None
    k_in: np.ndarray | None = None

    def __post_init__(self):
        self.e = np.asarray(self.e, dtype=np.int64)
        self.b = np.asarray(self.b, dtype=np.int64)
        B = self.e.shape[0]
        if self.e.shape != (B, B) or (self.e < 0).any():
            raise ValueError("e must be a square non-negative integer matrix")
        if self.b.size and (self.b.min() < 0 or self.b.max() >= B):
            raise ValueError("group labels out of range for e")
        if (self.k_out is None) != (self.k_in is None):
            raise ValueError("give both k_out and k_in, or neither")
        if self.k_out is not None:
            self.k_out = np.asarray(self.k_out, dtype=np.int64)
            self.k_in = np.asarray(self.k_in, dtype=np.int64)
            out_r = np.bincount(self.b, weights=self.k_out, minlength=B)
            in_r = np.bincount(self.b, weights=self.k_in, minlength=B)
            if not (np.array_equal(out_r, self.e.sum(axis=0))
                    and np.array_equal(in_r, self.e.sum(axis=1))):
                raise ValueError("degree sequence does not match the group marginals of e")
        else:
            sizes = np.bincount(self.b, minlength=B)
            busy = (self.e.sum(axis=0) + self.e.sum(axis=1)) > 0
            if (busy & (sizes == 0)).any():
                raise ValueError("e places edges on an empty group")


def _stubs(nodes: np.ndarray, counts: np.ndarray) -> np.ndarray:
    return np.repeat(nodes, counts)


def sample_microcanonical(spec: GeneratorSpec, rng=None) -> DirectedMultigraph:
    """Pair half-edges uniformly at random subject to the block counts."""
    rng = _rng(rng)
    e, b = spec.e, spec.b
    B = e.shape[0]
    N = b.size
    members = [np.flatnonzero(b == r) for r in range(B)]
    if spec.k_out is None:
        k_out = np.zeros(N, dtype=np.int64)
        k_in = np.zeros(N, dtype=np.int64)
        for r in range(B):
            if members[r].size:
                np.add.at(k_out, rng.choice(members[r], e[:, r].sum()), 1)
                np.add.at(k_in, rng.choice(members[r], e[r, :].sum()), 1)
    else:
        k_out, k_in = spec.k_out, spec.k_in

    # out-stubs of group s, shuffled and cut into blocks for each target r;
    # in-stubs of group r, shuffled and cut into blocks for each source s
    out_chunks = {}
    for s in range(B):
        stubs = rng.permutation(_stubs(members[s], k_out[members[s]]))
        cuts = np.cumsum(e[:, s])[:-1]
        for r, chunk in enumerate(np.split(stubs, cuts)):
            out_chunks[(r, s)] = chunk
    sources, targets = [], []
    for r in range(B):
        stubs = rng.permutation(_stubs(members[r], k_in[members[r]]))
        cuts = np.cumsum(e[r, :])[:-1]
        for s, chunk in enumerate(np.split(stubs, cuts)):
            sources.append(out_chunks[(r, s)])
            targets.append(chunk)
    src = np.concatenate(sources) if sources else np.empty(0, dtype=np.int64)
    tgt = np.concatenate(targets) if targets else np.empty(0, dtype=np.int64)
    return DirectedMultigraph(N, ((s, t, 1) for s, t in zip(src.tolist(), tgt.tolist())))


def sample_imbalanced_degrees(N: int, k: int, rng=None) -> DegreeSequence:
    """Total degree ``k`` per node, out-degree of node ``i`` (1-based)
    drawn from Binomial(k, (N - i) / (N - 1)).  Random single-node redraws
    continue until out- and in-degree totals agree."""
    if N < 2 or k < 1:
        raise ValueError("need N >= 2 and k >= 1")
    if (N * k) % 2:
        raise ValueError(f"N*k = {N * k} is odd; out- and in-degree totals can never match")
    rng = _rng(rng)
    p = (N - np.arange(1, N + 1)) / (N - 1)
    k_out = rng.binomial(k, p)
    target = N * k // 2
    total = int(k_out.sum())
    while total != target:
        i = int(rng.integers(N))
        new = int(rng.binomial(k, p[i]))
        total += new - int(k_out[i])
        k_out[i] = new
    return DegreeSequence(k_out.astype(np.int64), (k - k_out).astype(np.int64))


def imbalanced_graph(N: int, k: int, rng=None) -> DirectedMultigraph:
    """Uniform half-edge pairing on a degree sequence from
    :func:`sample_imbalanced_degrees`."""
    rng = _rng(rng)
    deg = sample_imbalanced_degrees(N, k, rng)
    E = int(deg.out_degrees.sum())
    spec = GeneratorSpec(np.array([[E]]), np.zeros(N, dtype=np.int64), deg.out_degrees, deg.in_degrees)
    return sample_microcanonical(spec, rng)


def add_upstream_perturbation(g: DirectedMultigraph, node_count: int, extra: int, rng=None) -> DirectedMultigraph:
    """Add ``extra`` edges between distinct nodes among the first
    ``node_count``, each pointing from the higher index to the lower one."""
    if node_count < 2:
        raise ValueError("node_count must be >= 2")
    if node_count > g.num_nodes:
        raise ValueError("node_count exceeds the number of nodes")
    rng = _rng(rng)
    edges = []
    for _ in range(extra):
        a, c = rng.choice(node_count, 2, replace=False)
        edges.append((int(max(a, c)), int(min(a, c)), 1))
    return g.with_edges(edges) if edges else g
