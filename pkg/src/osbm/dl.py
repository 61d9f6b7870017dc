"""Description length of ordered and unordered directed SBMs, in bits.

Every probability is handled as a base-2 logarithm.  Factorials and
binomials go through a lazily grown log-factorial table (falling back to
``lgamma`` for very large arguments), so edge counts far beyond machine
integers are fine.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .graph import DirectedMultigraph
from .state import BlockState, MoveProposal, Partition, build_state

LN2 = math.log(2.0)
_TABLE_LIMIT = 1 << 22
_lf_table: list[float] = [0.0, 0.0]


def log2_factorial(n: int) -> float:
    try:
        return _lf_table[n]
    except IndexError:
        pass
    if n < 0:
        raise ValueError(f"factorial of negative number {n}")
    if n >= _TABLE_LIMIT:
        return math.lgamma(n + 1) / LN2
    start = len(_lf_table)
    stop = max(n + 1, 2 * start)
    stop = min(stop, _TABLE_LIMIT)
    _lf_table.extend(math.lgamma(k + 1) / LN2 for k in range(start, stop))
    return _lf_table[n]


def log2_binom(n: int, k: int) -> float:
    if k < 0 or k > n:
        return -math.inf
    return log2_factorial(n) - log2_factorial(k) - log2_factorial(n - k)


def log2_multiset(n: int, m: int) -> float:
    """log2 of the number of m-combinations of n items with repetition,
    ``C(n + m - 1, m)``."""
    if m == 0:
        return 0.0
    if n <= 0:
        return -math.inf
    return log2_binom(n + m - 1, m)


# -- restricted partitions ---------------------------------------------------

DEFAULT_Q_CAP = 20000


class QCapExceeded(RuntimeError):
    """Requested q(m, n) beyond the configured table cap."""


class RestrictedPartitionTable:
    """log2 q(m, n): number of partitions of ``m`` into at most ``n`` parts.

    Built column by column from ``q(m, n) = q(m, n-1) + q(m-n, n)`` in log
    space, with ``q(0, n) = 1`` for every ``n >= 0``.  Since ``q(m, n) =
    q(m, m)`` for ``n > m`` only ``n <= m`` is ever stored.  The table grows
    on demand up to ``m <= cap``; beyond that an error is raised.
    """

    def __init__(self, cap: int = DEFAULT_Q_CAP):
        self.cap = int(cap)
        self._m_max = -1
        self._cols: list[list[float]] = []

    def _build(self, m_max: int, n_max: int) -> None:
        m_max = max(m_max, 2 * self._m_max, 64)
        m_max = min(m_max, self.cap)
        n_max = min(max(n_max, 2 * (len(self._cols) - 1), 16), m_max)
        prev = np.full(m_max + 1, -np.inf)
        prev[0] = 0.0  # q(m, 0) = [m == 0]
        cols = [prev.tolist()]
        for n in range(1, n_max + 1):
            L = -(-(m_max + 1) // n)
            padded = np.full(L * n, -np.inf)
            padded[: m_max + 1] = prev
            cur = np.logaddexp2.accumulate(padded.reshape(L, n), axis=0).ravel()[: m_max + 1]
            cols.append(cur.tolist())
            prev = cur
        self._cols = cols
        self._m_max = m_max

    def log_q(self, m: int, n: int) -> float:
        if m < 0 or n < 0:
            return -math.inf
        if m == 0:
            return 0.0
        if n == 0:
            return -math.inf
        if m > self.cap:
            raise QCapExceeded(
                f"q({m}, {n}) needs a restricted-partition table beyond the cap "
                f"m <= {self.cap}; raise it with --q-cap"
            )
        if n > m:
            n = m
        if m > self._m_max or n >= len(self._cols):
            self._build(max(m, self._m_max), max(n, len(self._cols) - 1))
        return self._cols[n][m]


_q_table = RestrictedPartitionTable()


def set_q_cap(cap: int) -> None:
    """Replace the shared q-table with one capped at ``cap``."""
    global _q_table
    _q_table = RestrictedPartitionTable(cap)


def get_q_cap() -> int:
    return _q_table.cap


def log_q_restricted(m: int, n: int) -> float:
    return _q_table.log_q(m, n)


def restricted_partition_count(m: int, n: int) -> int:
    """Exact integer q(m, n) by the same recursion, for small arguments."""
    table = [[0] * (n + 1) for _ in range(m + 1)]
    for k in range(n + 1):
        table[0][k] = 1
    for mm in range(1, m + 1):
        for k in range(1, n + 1):
            table[mm][k] = table[mm][k - 1] + (table[mm - k][k] if mm >= k else 0)
    return table[m][n]


# -- model variants ----------------------------------------------------------

@dataclass(frozen=True)
class ModelVariant:
    degree_corrected: bool
    ordered: bool

    @property
    def name(self) -> str:
        return ("dc-" if self.degree_corrected else "") + ("osbm" if self.ordered else "sbm")

    @classmethod
    def from_name(cls, name: str) -> "ModelVariant":
        try:
            return VARIANTS[name.lower()]
        except KeyError:
            raise ValueError(
                f"unknown model {name!r}; expected one of {', '.join(VARIANTS)}"
            ) from None

    def __str__(self) -> str:
        return self.name.upper()


VARIANTS = {
    "sbm": ModelVariant(False, False),
    "dc-sbm": ModelVariant(True, False),
    "osbm": ModelVariant(False, True),
    "dc-osbm": ModelVariant(True, True),
}


@dataclass(frozen=True)
class DLBreakdown:
    """Description-length terms in bits (each is ``-log2`` of a factor)."""

    likelihood: float
    affinity: float
    degrees: float
    partition: float

    @property
    def total(self) -> float:
        return self.likelihood + self.affinity + self.degrees + self.partition

    def as_dict(self) -> dict:
        # + 0.0 turns a negative zero into a plain zero
        return {
            "likelihood": self.likelihood + 0.0,
            "affinity": self.affinity + 0.0,
            "degrees": self.degrees + 0.0,
            "partition": self.partition + 0.0,
            "total": self.total + 0.0,
        }


# -- full evaluation ---------------------------------------------------------

def _check(g: DirectedMultigraph, s: BlockState) -> None:
    if g.num_nodes != s.N or g.total_edges != s.E:
        raise ValueError("block state was not built from this graph")


def log_likelihood_micro(g: DirectedMultigraph, s: BlockState) -> float:
    """log2 P(A | k, e, b) of the microcanonical directed DC-SBM."""
    _check(g, s)
    lf = log2_factorial
    L = sum(lf(x) for x in s.e.values())
    L += sum(lf(k) for k in s.k_out) + sum(lf(k) for k in s.k_in)
    L -= sum(lf(m) for _, _, m in g.edges())
    L -= sum(lf(s.eout[r]) + lf(s.ein[r]) for r in s.blocks)
    return L


def log_prior_degrees_dc(s: BlockState) -> float:
    lf = log2_factorial
    P = 0.0
    for r in s.blocks:
        n = s.n[r]
        P += sum(lf(c) for c in s.eta_out[r].values())
        P += sum(lf(c) for c in s.eta_in[r].values())
        P -= 2 * lf(n)
        P -= log_q_restricted(s.eout[r], n) + log_q_restricted(s.ein[r], n)
    return P


def _ndc_group(eo: int, ei: int, n: int) -> float:
    if n == 0:
        return 0.0
    lf = log2_factorial
    return lf(eo) + lf(ei) - (eo + ei) * math.log2(n)


def log_prior_degrees_ndc(s: BlockState) -> float:
    lf = log2_factorial
    P = sum(_ndc_group(s.eout[r], s.ein[r], s.n[r]) for r in s.blocks)
    P -= sum(lf(k) for k in s.k_out) + sum(lf(k) for k in s.k_in)
    return P


def _partition_B(N: int, B: int) -> float:
    return -log2_binom(N - 1, B - 1) - math.log2(N)


def log_prior_partition(s: BlockState) -> float:
    if s.N < 1:
        raise ValueError("partition prior needs N >= 1")
    lf = log2_factorial
    P = sum(lf(s.n[r]) for r in s.blocks) - lf(s.N)
    return P + _partition_B(s.N, s.B)


def log_prior_affinity_uniform(s: BlockState) -> float:
    return -log2_multiset(s.B * s.B, s.E)


def _pair_term(a: int, b: int) -> float:
    # log2 C(a + b, a); symmetric, so orientation of the pair is immaterial
    lf = log2_factorial
    return lf(a + b) - lf(a) - lf(b)


def _alignment_term(Ep: int, Em: int) -> float:
    return -log2_binom(Ep + Em, Ep) - math.log2(Ep + Em + 1)


def _sym_multiset_term(B: int, E: int) -> float:
    return -log2_multiset(B * (B + 1) // 2, E)


def log_prior_affinity_ordered(s: BlockState) -> float:
    P = 0.0
    e = s.e
    for (r, c), x in e.items():
        if r < c:
            P += _pair_term(x, e.get((c, r), 0))
        elif r > c and (c, r) not in e:
            P += _pair_term(x, 0)
    P += _alignment_term(s.E_plus, s.E_minus)
    return P + _sym_multiset_term(s.B, s.E)


def log_prior_affinity_ordered_matrix(e) -> float:
    """Ordered affinity prior for a dense matrix ``e[r, s]`` (edges from
    ``s`` to ``r``) whose rows/columns are already in rank order."""
    e = np.asarray(e, dtype=np.int64)
    B = e.shape[0]
    E = int(e.sum())
    P = 0.0
    for r in range(B):
        for c in range(r + 1, B):
            P += _pair_term(int(e[r, c]), int(e[c, r]))
    Ep = int(np.tril(e, -1).sum())  # e_rs with r > s
    Em = int(np.triu(e, 1).sum())
    return P + _alignment_term(Ep, Em) + _sym_multiset_term(B, E)


def log_prior_affinity_uniform_matrix(e) -> float:
    e = np.asarray(e, dtype=np.int64)
    return -log2_multiset(e.shape[0] ** 2, int(e.sum()))


def breakdown(s: BlockState, v: ModelVariant) -> DLBreakdown:
    g = s.g
    return DLBreakdown(
        likelihood=-log_likelihood_micro(g, s),
        affinity=-(log_prior_affinity_ordered(s) if v.ordered else log_prior_affinity_uniform(s)),
        degrees=-(log_prior_degrees_dc(s) if v.degree_corrected else log_prior_degrees_ndc(s)),
        partition=-log_prior_partition(s),
    )


def description_length(g: DirectedMultigraph, p: Partition, v: ModelVariant) -> DLBreakdown:
    return breakdown(build_state(g, p), v)


# -- incremental evaluation --------------------------------------------------

def delta_description_length(s: BlockState, prop: MoveProposal, v: ModelVariant) -> float:
    """Change of the description length (bits) caused by ``prop``,
    touching only the groups and cells the move affects."""
    if prop.is_identity:
        return 0.0
    lf = log2_factorial
    r, t = prop.source, prop.target
    ko, ki = prop.k_out, prop.k_in
    e = s.e
    D = prop.entries

    dP = 0.0
    for key, d in D.items():
        x = e.get(key, 0)
        dP += lf(x + d) - lf(x)
    ro, ri = s.eout[r], s.ein[r]
    to, ti = s.eout[t], s.ein[t]
    dP -= lf(ro - ko) - lf(ro) + lf(to + ko) - lf(to)
    dP -= lf(ri - ki) - lf(ri) + lf(ti + ki) - lf(ti)

    nr, nt = s.n[r], s.n[t]
    dn = lf(nr - 1) - lf(nr) + lf(nt + 1) - lf(nt)
    if v.degree_corrected:
        logq = log_q_restricted
        h, g_ = s.eta_out[r], s.eta_out[t]
        x, y = h[ko], g_.get(ko, 0)
        dP += lf(x - 1) - lf(x) + lf(y + 1) - lf(y)
        h, g_ = s.eta_in[r], s.eta_in[t]
        x, y = h[ki], g_.get(ki, 0)
        dP += lf(x - 1) - lf(x) + lf(y + 1) - lf(y)
        dP -= 2 * dn
        dP -= logq(ro - ko, nr - 1) - logq(ro, nr) + logq(to + ko, nt + 1) - logq(to, nt)
        dP -= logq(ri - ki, nr - 1) - logq(ri, nr) + logq(ti + ki, nt + 1) - logq(ti, nt)
    else:
        dP += (
            _ndc_group(ro - ko, ri - ki, nr - 1) - _ndc_group(ro, ri, nr)
            + _ndc_group(to + ko, ti + ki, nt + 1) - _ndc_group(to, ti, nt)
        )

    B = s.B
    B2 = B - prop.removed + prop.created
    dP += dn
    if B2 != B:
        dP += _partition_B(s.N, B2) - _partition_B(s.N, B)

    if v.ordered:
        seen = set()
        for (a, c) in D:
            if a == c:
                continue
            pair = (a, c) if a < c else (c, a)
            if pair in seen:
                continue
            seen.add(pair)
            x, y = e.get(pair, 0), e.get((pair[1], pair[0]), 0)
            dx, dy = D.get(pair, 0), D.get((pair[1], pair[0]), 0)
            dP += _pair_term(x + dx, y + dy) - _pair_term(x, y)
        dp, dm, _ = s.alignment_change(prop)
        Ep, Em = s.E_plus, s.E_minus
        dP += _alignment_term(Ep + dp, Em + dm) - _alignment_term(Ep, Em)
        if B2 != B:
            dP += _sym_multiset_term(B2, s.E) - _sym_multiset_term(B, s.E)
    elif B2 != B:
        dP += log2_multiset(B * B, s.E) - log2_multiset(B2 * B2, s.E)
    return -dP


def delta_order_value(s: BlockState, r: int, value: float, v: ModelVariant) -> float:
    """Change of the description length if group ``r`` takes order value
    ``value``.  Only the alignment term depends on the order."""
    if not v.ordered:
        return 0.0
    old = s.u[r]
    dp = 0
    for (a, c), m in s.e.items():
        if a == c or (a != r and c != r):
            continue
        if a == r:
            was_up, now_up = old > s.u[c], value > s.u[c]
        else:
            was_up, now_up = s.u[a] > old, s.u[a] > value
        if was_up != now_up:
            dp += m if now_up else -m
    if dp == 0:
        return 0.0
    Ep, Em = s.E_plus, s.E_minus
    return -(_alignment_term(Ep + dp, Em - dp) - _alignment_term(Ep, Em))
