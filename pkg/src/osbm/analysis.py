"""Summaries of fitted partitions: mean ranks, rank correlations and
model comparison."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .dl import VARIANTS, DLBreakdown, ModelVariant
from .graph import DirectedMultigraph
from .mcmc import ChainConfig, RankMarginals, anneal_map
from .state import BlockState, Partition, alignment_stats, build_state


class UndefinedCorrelation(ValueError):
    """Correlation requested for an input with no variance."""


def mean_rank(m: RankMarginals) -> np.ndarray:
    pi = m.pi()
    return pi @ np.arange(pi.shape[1])


def kendall_tau(x, y) -> float:
    """Kendall's tau-b (tie corrected)."""
    x = np.asarray(x)
    y = np.asarray(y)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("kendall_tau needs two 1-d sequences of equal length")
    if x.size < 2:
        raise ValueError("kendall_tau needs at least two observations")
    if np.all(x == x[0]) or np.all(y == y[0]):
        raise UndefinedCorrelation("kendall_tau is undefined for a constant input")
    return float(stats.kendalltau(x, y, variant="b").statistic)


def posterior_odds(sigma_1: float, sigma_2: float, prior_odds: float = 1.0) -> float:
    """Odds in favour of model 1 over model 2 given their description
    lengths in bits.  Overflows to ``inf``."""
    try:
        return prior_odds * 2.0 ** (sigma_2 - sigma_1)
    except OverflowError:
        return math.inf


def upstream_fraction(s: BlockState) -> float:
    off = s.E_plus + s.E_minus
    return s.E_plus / off if off else 0.0


def orient_upstream(g: DirectedMultigraph, p: Partition) -> Partition:
    """Reverse the group order if more edges flow down than up."""
    s = build_state(g, p)
    return p.reversed() if s.E_minus > s.E_plus else p


def lexicographic_order(ranks, imbalance) -> np.ndarray:
    """Nodes sorted by rank, ties broken by degree imbalance."""
    return np.lexsort((np.asarray(imbalance), np.asarray(ranks)))


@dataclass
class Fit:
    variant: ModelVariant
    partition: Partition
    breakdown: DLBreakdown
    upstream_fraction: float
    alignment: dict

    @property
    def sigma(self) -> float:
        return self.breakdown.total

    @property
    def num_groups(self) -> int:
        return self.partition.num_groups


def fit_summary(g: DirectedMultigraph, v: ModelVariant, p: Partition, bd: DLBreakdown) -> Fit:
    if v.ordered:
        p = orient_upstream(g, p)
    s = build_state(g, p)
    a = alignment_stats(s)
    return Fit(
        v, p, bd, upstream_fraction(s),
        {"E_plus": a.E_plus, "E_minus": a.E_minus, "E_zero": a.E_zero, "delta": a.delta},
    )


@dataclass
class ModelComparison:
    fits: dict
    best: str
    sigma_diff: dict = field(default_factory=dict)
    odds: dict = field(default_factory=dict)


def compare_fits(fits: dict) -> ModelComparison:
    """Pairwise differences and odds for ``{name: Fit}``; ``odds[a][b]`` is
    the posterior odds of ``a`` over ``b``."""
    names = list(fits)
    best = min(names, key=lambda n: fits[n].sigma)
    diff = {a: {b: fits[a].sigma - fits[b].sigma for b in names} for a in names}
    odds = {a: {b: posterior_odds(fits[a].sigma, fits[b].sigma) for b in names} for a in names}
    return ModelComparison(fits, best, diff, odds)


def model_select(g: DirectedMultigraph, variants, cfg: ChainConfig) -> ModelComparison:
    """MAP fit of each variant with the same chain settings."""
    fits = {}
    for v in variants:
        if isinstance(v, str):
            v = VARIANTS[v]
        res = anneal_map(g, v, cfg)
        fits[v.name] = fit_summary(g, v, res.partition, res.breakdown)
    return compare_fits(fits)
