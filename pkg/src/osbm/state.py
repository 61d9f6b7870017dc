"""Labelled, ordered partitions and their block-level sufficient statistics.

Group order is carried by an auxiliary value ``u_r`` in [0, 1] per group;
the rank of a group is its position in ascending ``u`` order.  An edge from
group ``s`` to group ``r`` is *upstream* when ``u_r > u_s``, *downstream*
when ``u_r < u_s`` and *lateral* when ``r == s``.

``BlockState`` uses stable internal label slots (at most ``N + 1`` of them, with
a free list) so that single-node moves never relabel other groups.  The
contiguous ``0..B-1`` labelling lives in ``Partition``, produced on demand.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .graph import DirectedMultigraph

NEW = -1


@dataclass
class Partition:
    """Node-to-group assignment with an order value per group."""

    labels: np.ndarray
    order_values: np.ndarray

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.order_values = np.asarray(self.order_values, dtype=float)
        if self.labels.size == 0:
            if self.order_values.size:
                raise ValueError("empty partition cannot carry order values")
            return
        B = int(self.labels.max()) + 1
        if self.labels.min() < 0:
            raise ValueError("group labels must be non-negative")
        if np.unique(self.labels).size != B:
            raise ValueError("group labels must be contiguous and all occupied")
        if self.order_values.shape != (B,):
            raise ValueError(f"expected {B} order values, got {self.order_values.shape}")
        if np.unique(self.order_values).size != B:
            raise ValueError("order values must be pairwise distinct")

    @property
    def num_groups(self) -> int:
        return int(self.order_values.size)

    def group_ranks(self) -> np.ndarray:
        """Rank (0 = lowest ``u``) of every group label."""
        ranks = np.empty(self.num_groups, dtype=np.int64)
        ranks[np.argsort(self.order_values, kind="stable")] = np.arange(self.num_groups)
        return ranks

    def ranks(self) -> np.ndarray:
        """Rank of every node's group."""
        return self.group_ranks()[self.labels]

    def reversed(self) -> "Partition":
        """Same groups in the opposite order.  Order values are respaced
        evenly, since ``1 - u`` can merge values that differ by less than
        the float resolution near 1."""
        B = self.num_groups
        return Partition(self.labels.copy(), (B - self.group_ranks()) / (B + 1.0))

    def relabeled(self, mu) -> "Partition":
        """Apply the label bijection ``mu`` (a sequence, old -> new), keeping
        each group's order value attached to it."""
        mu = np.asarray(mu, dtype=np.int64)
        u = np.empty_like(self.order_values)
        u[mu] = self.order_values
        return Partition(mu[self.labels], u)

    @classmethod
    def from_ranks(cls, ranks) -> "Partition":
        """Partition whose labels are the given ranks, with evenly spaced
        order values."""
        ranks = np.asarray(ranks, dtype=np.int64)
        B = int(ranks.max()) + 1 if ranks.size else 0
        return cls(ranks, (np.arange(B) + 1.0) / (B + 1.0))

    @classmethod
    def single_group(cls, num_nodes: int) -> "Partition":
        return cls.from_ranks(np.zeros(num_nodes, dtype=np.int64))

    @classmethod
    def singletons(cls, num_nodes: int) -> "Partition":
        return cls.from_ranks(np.arange(num_nodes))


@dataclass
class MoveProposal:
    """A single-node move, evaluated but not yet applied.

    ``entries`` maps affinity cells ``(r, s)`` (edges from ``s`` to ``r``) to
    their integer change.
    """

    node: int
    source: int
    target: int
    target_u: float
    created: bool
    removed: bool
    entries: dict
    k_out: int
    k_in: int

    @property
    def is_identity(self) -> bool:
        return self.source == self.target


@dataclass
class MoveDelta:
    """Record of an applied move, sufficient to undo it exactly."""

    node: int
    source: int
    target: int
    source_u: float
    target_u: float
    created: bool
    removed: bool
    entries: dict = field(default_factory=dict)
    d_plus: int = 0
    d_minus: int = 0
    d_zero: int = 0


@dataclass(frozen=True)
class AlignmentStats:
    E_plus: int
    E_minus: int
    E_zero: int
    delta: int
    pair_delta: dict  # (rank_r, rank_s) with rank_r > rank_s -> e_rs - e_sr


class BlockState:
    """Sufficient statistics of a partition of ``g``, updated in
    O(k_out + k_in) per single-node move."""

    def __init__(self, g: DirectedMultigraph, labels, order_values):
        N = g.num_nodes
        labels = [int(x) for x in labels]
        if len(labels) != N:
            raise ValueError(f"expected {N} labels, got {len(labels)}")
        order_values = [float(x) for x in order_values]
        for x in labels:
            if not 0 <= x < len(order_values):
                raise ValueError(f"label {x} out of range [0, {len(order_values) - 1}]")

        self.g = g
        self.N = N
        self.E = g.total_edges
        self.k_out = g.k_out.tolist()
        self.k_in = g.k_in.tolist()

        cap = max(N + 1, len(order_values))
        self.b = labels
        self.u = [0.0] * cap
        self.n = [0] * cap
        self.eout = [0] * cap
        self.ein = [0] * cap
        self.eta_out: list[dict] = [dict() for _ in range(cap)]
        self.eta_in: list[dict] = [dict() for _ in range(cap)]
        self.members: list[set] = [set() for _ in range(cap)]
        self.e: dict[tuple[int, int], int] = {}
        self.blocks: list[int] = []
        self._pos = [-1] * cap

        for r, x in enumerate(order_values):
            self.u[r] = x
        for i, r in enumerate(labels):
            if self.n[r] == 0:
                self._pos[r] = len(self.blocks)
                self.blocks.append(r)
            self.n[r] += 1
            self.members[r].add(i)
            ko, ki = self.k_out[i], self.k_in[i]
            self.eout[r] += ko
            self.ein[r] += ki
            h = self.eta_out[r]
            h[ko] = h.get(ko, 0) + 1
            h = self.eta_in[r]
            h[ki] = h.get(ki, 0) + 1
        # unused slots, popped from the end
        self._free = [r for r in range(cap - 1, -1, -1) if self.n[r] == 0]

        Ep = Em = E0 = 0
        e = self.e
        u = self.u
        for s_node, t_node, m in g.edges():
            r, s = labels[t_node], labels[s_node]
            e[(r, s)] = e.get((r, s), 0) + m
            if r == s:
                E0 += m
            elif u[r] > u[s]:
                Ep += m
            else:
                Em += m
        self.E_plus, self.E_minus, self.E_zero = Ep, Em, E0

    # -- queries ---------------------------------------------------------

    @property
    def B(self) -> int:
        return len(self.blocks)

    def partition(self) -> Partition:
        """Contiguous relabelling, groups numbered by first appearance."""
        relabel = {}
        labels = np.empty(self.N, dtype=np.int64)
        for i, r in enumerate(self.b):
            if r not in relabel:
                relabel[r] = len(relabel)
            labels[i] = relabel[r]
        u = np.empty(len(relabel))
        for r, x in relabel.items():
            u[x] = self.u[r]
        return Partition(labels, u)

    def sorted_blocks(self) -> list[int]:
        """Occupied labels in ascending ``u`` order."""
        return sorted(self.blocks, key=self.u.__getitem__)

    def node_ranks(self) -> list[int]:
        rank = {r: x for x, r in enumerate(self.sorted_blocks())}
        return [rank[r] for r in self.b]

    def affinity_matrix(self) -> np.ndarray:
        """Dense ``e_rs`` with rows/columns in rank order."""
        order = self.sorted_blocks()
        rank = {r: x for x, r in enumerate(order)}
        M = np.zeros((len(order), len(order)), dtype=np.int64)
        for (r, s), c in self.e.items():
            M[rank[r], rank[s]] = c
        return M

    def sym_affinities(self) -> np.ndarray:
        """``m_rs = e_rs + e_sr`` (diagonal ``2 e_rr``), rank order."""
        M = self.affinity_matrix()
        return M + M.T

    def counters(self) -> dict:
        """All integer statistics keyed by occupied label; for equality checks."""
        return {
            "b": list(self.b),
            "blocks": sorted(self.blocks),
            "u": {r: self.u[r] for r in self.blocks},
            "n": {r: self.n[r] for r in self.blocks},
            "eout": {r: self.eout[r] for r in self.blocks},
            "ein": {r: self.ein[r] for r in self.blocks},
            "eta_out": {r: dict(self.eta_out[r]) for r in self.blocks},
            "eta_in": {r: dict(self.eta_in[r]) for r in self.blocks},
            "members": {r: set(self.members[r]) for r in self.blocks},
            "e": dict(self.e),
            "align": (self.E_plus, self.E_minus, self.E_zero),
        }

    def copy(self) -> "BlockState":
        p = self.partition()
        return BlockState(self.g, p.labels, p.order_values)

    # -- moves -----------------------------------------------------------

    def free_label(self) -> int:
        """The label a NEW group would receive."""
        return self._free[-1]

    def neighbor_groups(self, i: int) -> tuple[dict, dict, int]:
        """Edge multiplicities from ``i`` into each group, from each group
        into ``i``, and the self-loop count of ``i``."""
        b = self.b
        c_out: dict[int, int] = {}
        for j, m in self.g.out_adj[i]:
            t = b[j]
            c_out[t] = c_out.get(t, 0) + m
        c_in: dict[int, int] = {}
        for j, m in self.g.in_adj[i]:
            t = b[j]
            c_in[t] = c_in.get(t, 0) + m
        return c_out, c_in, self.g.self_loops[i]

    def propose(self, i: int, target: int, new_u: float | None = None) -> MoveProposal:
        """Evaluate moving node ``i`` to group ``target`` (or ``NEW``).

        A NEW target requires ``new_u``; ``target`` may also name an
        unoccupied label, which is then created (used by exact undo)."""
        r = self.b[i]
        if target == NEW:
            if new_u is None:
                raise ValueError("a NEW target needs an order value")
            target = self.free_label()
        created = self.n[target] == 0
        if created:
            if new_u is None:
                raise ValueError("creating a group needs an order value")
            s_u = float(new_u)
        else:
            s_u = self.u[target]
        if target == r:
            return MoveProposal(i, r, r, s_u, False, False, {}, self.k_out[i], self.k_in[i])
        s = target

        c_out, c_in, loops = self.neighbor_groups(i)
        D: dict[tuple[int, int], int] = {}
        for t, c in c_out.items():  # edges r -> t become s -> t
            D[(t, r)] = D.get((t, r), 0) - c
            D[(t, s)] = D.get((t, s), 0) + c
        for t, c in c_in.items():  # edges t -> r become t -> s
            D[(r, t)] = D.get((r, t), 0) - c
            D[(s, t)] = D.get((s, t), 0) + c
        if loops:
            D[(r, r)] = D.get((r, r), 0) - loops
            D[(s, s)] = D.get((s, s), 0) + loops
        D = {k: v for k, v in D.items() if v}
        return MoveProposal(
            i, r, s, s_u, created, self.n[r] == 1, D, self.k_out[i], self.k_in[i]
        )

    def alignment_change(self, prop: MoveProposal) -> tuple[int, int, int]:
        """Changes of (E+, E-, E0) that ``prop`` would cause."""
        u = self.u
        s, su = prop.target, prop.target_u
        dp = dm = d0 = 0
        for (a, c), d in prop.entries.items():
            if a == c:
                d0 += d
                continue
            ua = su if a == s else u[a]
            uc = su if c == s else u[c]
            if ua > uc:
                dp += d
            else:
                dm += d
        return dp, dm, d0

    def apply(self, prop: MoveProposal) -> MoveDelta:
        i, r, s = prop.node, prop.source, prop.target
        if prop.is_identity:
            return MoveDelta(i, r, r, self.u[r], self.u[r], False, False)
        if prop.created:
            if self.n[s] != 0:
                raise ValueError(f"label {s} is already occupied")
            self._take_label(s)
            self.u[s] = prop.target_u
        dp, dm, d0 = self.alignment_change(prop)

        e = self.e
        for key, d in prop.entries.items():
            v = e.get(key, 0) + d
            if v:
                e[key] = v
            else:
                del e[key]
        ko, ki = prop.k_out, prop.k_in
        self.eout[r] -= ko
        self.eout[s] += ko
        self.ein[r] -= ki
        self.ein[s] += ki
        _hist_dec(self.eta_out[r], ko)
        _hist_inc(self.eta_out[s], ko)
        _hist_dec(self.eta_in[r], ki)
        _hist_inc(self.eta_in[s], ki)
        self.n[r] -= 1
        self.n[s] += 1
        self.members[r].discard(i)
        self.members[s].add(i)
        self.b[i] = s
        self.E_plus += dp
        self.E_minus += dm
        self.E_zero += d0
        removed = self.n[r] == 0
        if removed:
            self._release_label(r)
        return MoveDelta(
            i, r, s, self.u[r], prop.target_u, prop.created, removed,
            prop.entries, dp, dm, d0,
        )

    def move(self, i: int, target: int, new_u: float | None = None) -> MoveDelta:
        return self.apply(self.propose(i, target, new_u))

    def revert(self, delta: MoveDelta) -> MoveDelta:
        """Undo ``delta``; must be called in LIFO order w.r.t. other moves."""
        if delta.source == delta.target:
            return delta
        return self.apply(self.propose(delta.node, delta.source, delta.source_u))

    def set_order_value(self, r: int, value: float) -> int:
        """Move group ``r`` to a new position; returns the change of E+
        (E- changes by the negative, E0 unchanged)."""
        old = self.u[r]
        dp = 0
        for (a, c), m in self.e.items():
            if a == c or (a != r and c != r):
                continue
            ua = value if a == r else self.u[a]
            uc = value if c == r else self.u[c]
            ua_old = old if a == r else self.u[a]
            uc_old = old if c == r else self.u[c]
            was_up = ua_old > uc_old
            now_up = ua > uc
            if was_up != now_up:
                dp += m if now_up else -m
        self.u[r] = value
        self.E_plus += dp
        self.E_minus -= dp
        return dp

    def reverse_order(self) -> None:
        """Invert the group order (order values respaced evenly); swaps E+
        and E-."""
        order = self.sorted_blocks()
        B = len(order)
        for x, r in enumerate(order):
            self.u[r] = (B - x) / (B + 1.0)
        self.E_plus, self.E_minus = self.E_minus, self.E_plus

    def _take_label(self, s: int) -> None:
        free = self._free
        if free and free[-1] == s:
            free.pop()
        else:
            free.remove(s)
        self._pos[s] = len(self.blocks)
        self.blocks.append(s)

    def _release_label(self, r: int) -> None:
        p = self._pos[r]
        last = self.blocks.pop()
        if last != r:
            self.blocks[p] = last
            self._pos[last] = p
        self._pos[r] = -1
        self._free.append(r)


def _hist_inc(h: dict, k: int) -> None:
    h[k] = h.get(k, 0) + 1


def _hist_dec(h: dict, k: int) -> None:
    v = h[k] - 1
    if v:
        h[k] = v
    else:
        del h[k]


def build_state(g: DirectedMultigraph, p: Partition) -> BlockState:
    if len(p.labels) != g.num_nodes:
        raise ValueError(f"partition has {len(p.labels)} labels for {g.num_nodes} nodes")
    return BlockState(g, p.labels, p.order_values)


def alignment_stats(s: BlockState) -> AlignmentStats:
    rank = {r: x for x, r in enumerate(s.sorted_blocks())}
    pair: dict[tuple[int, int], int] = {}
    for (r, c), m in s.e.items():
        if r == c:
            continue
        hi, lo = (rank[r], rank[c]) if rank[r] > rank[c] else (rank[c], rank[r])
        sign = 1 if rank[r] > rank[c] else -1
        pair[(hi, lo)] = pair.get((hi, lo), 0) + sign * m
    return AlignmentStats(
        s.E_plus, s.E_minus, s.E_zero, s.E_plus - s.E_minus, pair
    )
