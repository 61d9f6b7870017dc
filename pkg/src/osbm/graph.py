"""Directed multigraphs and edge-list I/O.

Internally the adjacency follows the convention ``A[i, j]`` = number of edges
from ``j`` to ``i``.  The edge-list text format stays conventional: each line
reads ``source target [multiplicity]``, so the line ``0 1`` contributes to
``A[1, 0]``.  This is the only place where the two conventions meet.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from typing import Hashable, Iterable, Sequence, TextIO

import numpy as np


class EdgeListError(ValueError):
    """Malformed edge-list input."""


@dataclass(frozen=True)
class DegreeSequence:
    out_degrees: np.ndarray
    in_degrees: np.ndarray


class DirectedMultigraph:
    """Immutable directed multigraph with integer edge multiplicities.

    Edges are stored aggregated: one ``(source, target, multiplicity)`` entry
    per ordered pair with multiplicity >= 1.
    """

    def __init__(
        self,
        num_nodes: int,
        edges: Iterable[tuple[int, int, int]] = (),
        node_ids: Sequence[Hashable] | None = None,
    ):
        if num_nodes < 0:
            raise ValueError("num_nodes must be non-negative")
        counts: dict[tuple[int, int], int] = {}
        for s, t, m in edges:
            s, t, m = int(s), int(t), int(m)
            if not (0 <= s < num_nodes and 0 <= t < num_nodes):
                raise ValueError(f"edge ({s}, {t}) has endpoint outside [0, {num_nodes - 1}]")
            if m < 1:
                raise ValueError(f"edge ({s}, {t}) has non-positive multiplicity {m}")
            counts[(s, t)] = counts.get((s, t), 0) + m
        if node_ids is None:
            node_ids = list(range(num_nodes))
        elif len(node_ids) != num_nodes:
            raise ValueError("node_ids must have one entry per node")

        self._n = num_nodes
        self._mult = counts
        self._node_ids = tuple(node_ids)

        pairs = sorted(counts)
        self._sources = np.array([p[0] for p in pairs], dtype=np.int64)
        self._targets = np.array([p[1] for p in pairs], dtype=np.int64)
        self._weights = np.array([counts[p] for p in pairs], dtype=np.int64)

        # per-node adjacency, self-loops kept apart
        out_adj: list[list[tuple[int, int]]] = [[] for _ in range(num_nodes)]
        in_adj: list[list[tuple[int, int]]] = [[] for _ in range(num_nodes)]
        loops = [0] * num_nodes
        for (s, t) in pairs:
            m = counts[(s, t)]
            if s == t:
                loops[s] += m
            else:
                out_adj[s].append((t, m))
                in_adj[t].append((s, m))
        self.out_adj = tuple(tuple(a) for a in out_adj)
        self.in_adj = tuple(tuple(a) for a in in_adj)
        self.self_loops = tuple(loops)

        k_out = np.zeros(num_nodes, dtype=np.int64)
        k_in = np.zeros(num_nodes, dtype=np.int64)
        np.add.at(k_out, self._sources, self._weights)
        np.add.at(k_in, self._targets, self._weights)
        k_out.flags.writeable = False
        k_in.flags.writeable = False
        self._k_out = k_out
        self._k_in = k_in

    @property
    def num_nodes(self) -> int:
        return self._n

    @property
    def total_edges(self) -> int:
        return int(self._weights.sum())

    @property
    def node_ids(self) -> tuple:
        return self._node_ids

    @property
    def k_out(self) -> np.ndarray:
        return self._k_out

    @property
    def k_in(self) -> np.ndarray:
        return self._k_in

    def edges(self) -> list[tuple[int, int, int]]:
        """Aggregated ``(source, target, multiplicity)`` triples, sorted."""
        return list(zip(self._sources.tolist(), self._targets.tolist(), self._weights.tolist()))

    def edge_arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return self._sources, self._targets, self._weights

    def A(self, i: int, j: int) -> int:
        """Number of edges from ``j`` to ``i``."""
        return self._mult.get((j, i), 0)

    def multiplicity(self, source: int, target: int) -> int:
        return self._mult.get((source, target), 0)

    def with_edges(self, extra: Iterable[tuple[int, int, int]]) -> "DirectedMultigraph":
        """New graph with ``extra`` edges added on top of this one."""
        return DirectedMultigraph(self._n, self.edges() + list(extra), self._node_ids)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, DirectedMultigraph):
            return NotImplemented
        return self._n == other._n and self._mult == other._mult

    def __repr__(self) -> str:
        return f"DirectedMultigraph(N={self._n}, E={self.total_edges})"


def load_edge_list(source: str | TextIO, integer_ids: bool = False) -> DirectedMultigraph:
    """Parse edge-list text into a multigraph.

    Node tokens are mapped to dense indices in first-seen order, and the
    original tokens are kept in ``graph.node_ids``.  With ``integer_ids`` the
    tokens must be non-negative integers and are used as indices directly
    (``N`` is one past the largest id).  Duplicate lines accumulate.
    """
    if isinstance(source, str):
        source = io.StringIO(source)

    index: dict[str, int] = {}
    ids: list = []
    edges: list[tuple[int, int, int]] = []
    max_id = -1

    def node(tok: str, lineno: int) -> int:
        nonlocal max_id
        if integer_ids:
            try:
                v = int(tok)
            except ValueError:
                raise EdgeListError(f"line {lineno}: node id {tok!r} is not an integer") from None
            if v < 0:
                raise EdgeListError(f"line {lineno}: negative node id {v}")
            max_id = max(max_id, v)
            return v
        v = index.get(tok)
        if v is None:
            v = index[tok] = len(ids)
            ids.append(tok)
        return v

    for lineno, raw in enumerate(source, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) not in (2, 3):
            raise EdgeListError(f"line {lineno}: expected 'source target [multiplicity]', got {raw.strip()!r}")
        m = 1
        if len(parts) == 3:
            try:
                m = int(parts[2])
            except ValueError:
                raise EdgeListError(f"line {lineno}: multiplicity {parts[2]!r} is not an integer") from None
            if m < 1:
                raise EdgeListError(f"line {lineno}: multiplicity must be >= 1, got {m}")
        s = node(parts[0], lineno)
        t = node(parts[1], lineno)
        edges.append((s, t, m))

    if integer_ids:
        return DirectedMultigraph(max_id + 1, edges)
    return DirectedMultigraph(len(ids), edges, ids)


def dump_edge_list(g: DirectedMultigraph) -> str:
    """Serialize to edge-list text using the original node ids."""
    ids = g.node_ids
    lines = []
    for s, t, m in g.edges():
        if m == 1:
            lines.append(f"{ids[s]} {ids[t]}")
        else:
            lines.append(f"{ids[s]} {ids[t]} {m}")
    return "\n".join(lines) + ("\n" if lines else "")


def degrees(g: DirectedMultigraph) -> DegreeSequence:
    return DegreeSequence(g.k_out.copy(), g.k_in.copy())


def degree_imbalance(g: DirectedMultigraph) -> np.ndarray:
    """``k_out - k_in`` per node."""
    return g.k_out - g.k_in
