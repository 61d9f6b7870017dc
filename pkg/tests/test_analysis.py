import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from osbm.analysis import (
    UndefinedCorrelation, compare_fits, fit_summary, kendall_tau, lexicographic_order,
    mean_rank, model_select, orient_upstream, posterior_odds, upstream_fraction,
)
from osbm.dl import VARIANTS, DLBreakdown, description_length
from osbm.graph import DirectedMultigraph, load_edge_list
from osbm.mcmc import ChainConfig, RankMarginals
from osbm.state import Partition, build_state


def kendall_oracle(x, y):
    """tau-b by explicit pair counting."""
    n = len(x)
    conc = disc = tx = ty = 0
    for i in range(n):
        for j in range(i + 1, n):
            dx = (x[i] > x[j]) - (x[i] < x[j])
            dy = (y[i] > y[j]) - (y[i] < y[j])
            if dx == 0 and dy == 0:
                continue
            if dx == 0:
                tx += 1
            elif dy == 0:
                ty += 1
            elif dx == dy:
                conc += 1
            else:
                disc += 1
    return (conc - disc) / math.sqrt((conc + disc + tx) * (conc + disc + ty))


def _marginals(rows):
    m = RankMarginals.empty(len(rows))
    m.counts = np.zeros((len(rows), len(rows[0])), dtype=np.int64)
    m.counts[:] = rows
    m.samples = int(np.sum(rows[0]))
    return m


def test_mean_rank_examples():
    assert mean_rank(_marginals([[0, 0, 0, 4]]))[0] == 3
    assert mean_rank(_marginals([[2, 2]]))[0] == 0.5
    assert mean_rank(_marginals([[1, 3]]))[0] == 0.75


def test_kendall_examples():
    assert kendall_tau([1, 2, 3], [1, 2, 3]) == pytest.approx(1.0)
    assert kendall_tau([1, 2, 3], [3, 2, 1]) == pytest.approx(-1.0)
    assert kendall_tau([1, 2, 3, 4], [1, 3, 2, 4]) == pytest.approx(2 / 3)


def test_kendall_errors():
    with pytest.raises(UndefinedCorrelation):
        kendall_tau([1, 1, 1], [1, 2, 3])
    with pytest.raises(ValueError):
        kendall_tau([1], [2])
    with pytest.raises(ValueError):
        kendall_tau([1, 2], [1, 2, 3])


def test_kendall_matches_oracle_with_ties():
    rng = np.random.default_rng(0)
    done = 0
    while done < 1000:
        n = int(rng.integers(2, 30))
        x = rng.integers(0, 5, size=n)
        y = rng.integers(0, 5, size=n)
        if len(set(x)) == 1 or len(set(y)) == 1:
            continue
        assert kendall_tau(x, y) == pytest.approx(kendall_oracle(x.tolist(), y.tolist()), abs=1e-12)
        done += 1


def test_posterior_odds_examples():
    assert posterior_odds(1247.8, 1250.9) == pytest.approx(8.6, rel=0.02)
    assert posterior_odds(10.0, 10.0) == 1.0
    assert posterior_odds(0.0, 10.0) == 1024.0
    assert posterior_odds(0.0, 10.0, prior_odds=0.5) == 512.0
    assert posterior_odds(0.0, 5000.0) == math.inf
    assert posterior_odds(5000.0, 0.0) == 0.0


@given(st.floats(-500, 500), st.floats(-500, 500))
def test_posterior_odds_reciprocal(a, b):
    assert posterior_odds(a, b) * posterior_odds(b, a) == pytest.approx(1.0, rel=1e-12)


def _fake_fit(name, sigma):
    g = load_edge_list("a b")
    p = Partition.single_group(2)
    return fit_summary(g, VARIANTS[name], p, DLBreakdown(sigma, 0.0, 0.0, 0.0))


@given(st.lists(st.integers(0, 10**4), min_size=4, max_size=4), st.integers(-1000, 1000))
def test_best_model_shift_invariant(sigmas, c):
    names = list(VARIANTS)
    a = compare_fits({n: _fake_fit(n, s) for n, s in zip(names, sigmas)})
    b = compare_fits({n: _fake_fit(n, s + c) for n, s in zip(names, sigmas)})
    assert a.fits[a.best].sigma == min(sigmas)
    assert a.best == b.best


def test_comparison_odds_consistent_with_differences():
    fits = {n: _fake_fit(n, s) for n, s in zip(VARIANTS, [100.0, 97.5, 101.0, 96.0])}
    c = compare_fits(fits)
    assert c.best == "dc-osbm"
    for a in fits:
        for b in fits:
            assert c.odds[a][b] == pytest.approx(2 ** -c.sigma_diff[a][b], rel=1e-9)


def test_upstream_fraction_and_orientation():
    g = DirectedMultigraph(3, [(0, 1, 3), (1, 2, 2), (2, 0, 1)])
    p = Partition([0, 1, 2], [0.9, 0.5, 0.1])  # most edges flow downstream here
    s = build_state(g, p)
    assert upstream_fraction(s) == pytest.approx(1 / 6)
    q = orient_upstream(g, p)
    assert upstream_fraction(build_state(g, q)) == pytest.approx(5 / 6)
    assert upstream_fraction(build_state(g, Partition.single_group(3))) == 0.0


def test_lexicographic_order():
    ranks = [1, 0, 1, 0]
    d = [5, 2, -1, -3]
    assert lexicographic_order(ranks, d).tolist() == [3, 1, 2, 0]


def test_model_select_all_lateral_reports_zero_upstream():
    g = load_edge_list("a a\nb b\na b\nb a")
    res = model_select(g, list(VARIANTS), ChainConfig(seed=0, restarts=1, sweeps=20, patience=5, anneal_sweeps=5))
    for name in ("osbm", "dc-osbm"):
        fit = res.fits[name]
        if fit.num_groups == 1:
            assert fit.upstream_fraction == 0.0


def test_ordered_beats_unordered_on_acyclic_toy():
    rng = np.random.default_rng(1)
    wins = 0
    for seed in range(3):
        edges = []
        sizes = [5, 5, 5]
        start = np.cumsum([0] + sizes)
        for _ in range(80):
            a, c = sorted(rng.choice(3, 2, replace=False))
            s = int(start[a] + rng.integers(sizes[a]))
            t = int(start[c] + rng.integers(sizes[c]))
            edges.append((s, t, 1))
        g = DirectedMultigraph(15, edges)
        res = model_select(g, ["sbm", "osbm"], ChainConfig(seed=seed, restarts=2, sweeps=100, patience=10, anneal_sweeps=30))
        wins += res.fits["osbm"].sigma < res.fits["sbm"].sigma
    assert wins == 3


def test_uniform_null_prefers_one_group():
    ok = 0
    for seed in range(10):
        rng = np.random.default_rng(40 + seed)
        src = rng.integers(50, size=200)
        tgt = rng.integers(50, size=200)
        g = DirectedMultigraph(50, [(int(a), int(b), 1) for a, b in zip(src, tgt)])
        res = model_select(g, list(VARIANTS), ChainConfig(seed=seed, restarts=1, sweeps=60, patience=10, anneal_sweeps=20))
        one = min(description_length(g, Partition.single_group(50), VARIANTS[n]).total for n in VARIANTS)
        best = res.fits[res.best]
        ok += not (best.num_groups > 1 and best.sigma < one - 1.0)
    assert ok >= 9
