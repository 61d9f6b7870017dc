import math

import numpy as np
import pytest

from osbm.dl import VARIANTS, description_length
from osbm.graph import DirectedMultigraph, load_edge_list
from osbm.mcmc import (
    Chain, ChainConfig, RankMarginals, Random, _accept, anneal_map, collect_marginals,
    mh_sweep, propose_new_group,
)
from osbm.state import Partition, build_state

from conftest import ordered_partitions, random_graph

TOY = "0 1\n1 2\n2 0\n0 3\n3 4\n4 4\n1 3 2\n2 4"


def exact_posterior(g, v, n):
    states = list(ordered_partitions(n))
    S = np.array([description_length(g, Partition.from_ranks(l), v).total for l in states])
    P = 2.0 ** -(S - S.min())
    return states, P / P.sum()


def visit_frequencies(g, v, cfg, states, sweeps):
    idx = {l: k for k, l in enumerate(states)}
    counts = np.zeros(len(states))
    chain = Chain(g, v, cfg)

    def record(c, k):
        counts[idx[tuple(c.state.node_ranks())]] += 1

    chain.run(sweeps, callback=record)
    return counts / counts.sum(), chain


def test_config_validation():
    with pytest.raises(ValueError):
        ChainConfig(sweeps=0)
    with pytest.raises(ValueError):
        ChainConfig(thinning=0)
    with pytest.raises(ValueError):
        ChainConfig(beta=0)
    with pytest.raises(ValueError):
        ChainConfig(init="random")
    assert ChainConfig(beta=math.inf).beta == math.inf


def test_zero_temperature_acceptance():
    rng = Random(0)
    for _ in range(100):
        assert not _accept(50.0, 1e-9, math.inf, rng)
        assert _accept(-50.0, -1e-9, math.inf, rng)
        assert not _accept(0.0, 0.0, math.inf, rng)


def test_finite_temperature_acceptance_rate():
    rng = Random(1)
    hits = sum(_accept(0.0, 1.0, 1.0, rng) for _ in range(20000))
    assert hits / 20000 == pytest.approx(0.5, abs=0.02)
    hits = sum(_accept(0.0, 1.0, 2.0, rng) for _ in range(20000))
    assert hits / 20000 == pytest.approx(0.25, abs=0.02)


def test_random_is_reproducible():
    a, b = Random(5), Random(5)
    assert [a.random() for _ in range(10000)] == [b.random() for _ in range(10000)]
    assert Random(5).permutation(20) == Random(5).permutation(20)


def test_new_group_position_follows_order_value():
    g = load_edge_list("0 1\n1 2\n2 3", integer_ids=True)
    s = build_state(g, Partition([0, 0, 1, 2], [0.3, 0.5, 0.7]))
    prop = propose_new_group(s, 1, Random(0))
    assert prop.created and 0 <= prop.target_u <= 1
    s.apply(s.propose(1, -1, 0.1))
    assert s.node_ranks()[1] == 0
    s.apply(s.propose(0, -1, 0.6))
    assert s.node_ranks() == [2, 0, 1, 3]


def test_relocation_visits_both_orders():
    g = DirectedMultigraph(4, [(0, 1, 1), (2, 3, 1), (1, 2, 1)])
    cfg = ChainConfig(seed=3, init=Partition([0, 0, 1, 1], [0.2, 0.8]))
    chain = Chain(g, VARIANTS["osbm"], cfg)
    seen = set()
    for _ in range(10000):
        chain.relocation_step(1.0)
        seen.add(tuple(chain.state.node_ranks()))
        if len(seen) == 2:
            break
    assert seen == {(0, 0, 1, 1), (1, 1, 0, 0)}


def test_identity_proposal_is_accepted():
    g = load_edge_list("0 0", integer_ids=True)
    chain = Chain(g, VARIANTS["dc-osbm"], ChainConfig(p_new=0.0))
    for _ in range(20):
        assert chain.node_step(0, 1.0)


def test_shadow_mode_and_sigma_tracking():
    rng = np.random.default_rng(4)
    for name, v in VARIANTS.items():
        g = random_graph(rng, 10, 30)
        chain = Chain(g, v, ChainConfig(seed=2, shadow=True, merge_splits=2, init="singletons"))
        chain.run(30)
        assert abs(chain.sigma - chain.recompute().total) < 1e-6


def test_sigma_drift_over_many_moves():
    rng = np.random.default_rng(9)
    g = random_graph(rng, 25, 80)
    chain = Chain(g, VARIANTS["dc-osbm"], ChainConfig(seed=1, merge_splits=2))
    moves = 0
    while moves < 100_000:
        chain.sweep()
        moves += sum(chain.stats.proposed.values())
        if chain.stats.proposed:
            assert abs(chain.sigma - chain.recompute().total) < 1e-6
    assert abs(chain.sigma - chain.recompute().total) < 1e-6


def test_mh_sweep_updates_state_in_place():
    g = load_edge_list(TOY, integer_ids=True)
    s = build_state(g, Partition.single_group(5))
    stats = mh_sweep(s, VARIANTS["dc-osbm"], ChainConfig(seed=0), Random(0))
    assert sum(stats.proposed.values()) >= 5
    assert s.E_plus + s.E_minus + s.E_zero == g.total_edges


def test_determinism():
    g = load_edge_list(TOY, integer_ids=True)
    a = Chain(g, VARIANTS["dc-osbm"], ChainConfig(seed=11))
    b = Chain(g, VARIANTS["dc-osbm"], ChainConfig(seed=11))
    a.run(200)
    b.run(200)
    assert a.state.node_ranks() == b.state.node_ranks()
    assert a.sigma == b.sigma


@pytest.mark.parametrize("name", ["sbm", "dc-osbm"])
def test_single_node_moves_alone_sample_exactly(name):
    g = load_edge_list("0 1\n1 2\n2 0\n0 3 2\n3 3", integer_ids=True)
    v = VARIANTS[name]
    states, P = exact_posterior(g, v, 4)
    cfg = ChainConfig(seed=7, merge_splits=0, relocations=0)
    Q, _ = visit_frequencies(g, v, cfg, states, 30000)
    assert 0.5 * np.abs(P - Q).sum() < 0.04


@pytest.mark.parametrize("name", list(VARIANTS))
def test_full_move_set_samples_exactly(name):
    g = load_edge_list("0 1\n1 2\n2 0\n0 3 2\n3 3", integer_ids=True)
    v = VARIANTS[name]
    states, P = exact_posterior(g, v, 4)
    cfg = ChainConfig(seed=8, merge_splits=2)
    Q, chain = visit_frequencies(g, v, cfg, states, 20000)
    assert 0.5 * np.abs(P - Q).sum() < 0.04
    # every kind of merge-split move was tried and some were accepted
    acc = chain.total_stats.accepted
    assert acc.get("merge", 0) > 0 and acc.get("split", 0) > 0


def test_marginals_single_node():
    g = load_edge_list("a a")
    m = collect_marginals(g, VARIANTS["dc-osbm"], ChainConfig(sweeps=20))
    assert m.pi()[:, :1].tolist() == [[1.0]]


def test_marginals_require_beta_one():
    g = load_edge_list("a b")
    with pytest.raises(ValueError):
        collect_marginals(g, VARIANTS["osbm"], ChainConfig(beta=2.0, sweeps=5))


def test_marginals_rows_sum_to_one_and_match_enumeration():
    g = load_edge_list("0 1\n1 2\n2 0\n0 3 2\n3 3", integer_ids=True)
    v = VARIANTS["dc-osbm"]
    states, P = exact_posterior(g, v, 4)
    exact = np.zeros((4, 4))
    for lab, p in zip(states, P):
        exact[np.arange(4), lab] += p
    m = collect_marginals(g, v, ChainConfig(seed=5, sweeps=30000, burn_in=100))
    pi = m.pi()
    assert np.allclose(pi.sum(axis=1), 1.0)
    assert np.abs(pi - exact).max() < 0.02


def test_marginals_respect_automorphism():
    # swapping nodes 1 and 2 is an automorphism
    g = load_edge_list("0 1\n0 2\n1 3\n2 3\n3 0", integer_ids=True)
    m = collect_marginals(g, VARIANTS["dc-osbm"], ChainConfig(seed=2, sweeps=20000, thinning=2))
    pi = m.pi()
    assert np.abs(pi[1] - pi[2]).max() < 0.03


def test_rank_marginals_merge():
    a = RankMarginals.empty(3)
    a.record([0, 1, 1])
    b = RankMarginals.empty(3)
    b.record([0, 0, 1])
    m = a.merged(b)
    assert m.samples == 2
    assert m.pi()[1, :2].tolist() == [0.5, 0.5]
    with pytest.raises(ValueError):
        RankMarginals.empty(2).pi()


def test_anneal_map_null_gives_one_group():
    hits = 0
    for seed in range(5):
        rng = np.random.default_rng(100 + seed)
        g = random_graph(rng, 20, 60, loops=False)
        res = anneal_map(g, VARIANTS["dc-osbm"], ChainConfig(seed=seed, restarts=2, sweeps=100, patience=10, anneal_sweeps=30))
        hits += res.num_groups == 1
    assert hits >= 4


def planted_dominance(rng, size=8, cross=30):
    """Two cliques with every cross edge pointing the same way."""
    edges = [
        (a + lo, b + lo, 1)
        for lo in (0, size) for a in range(size) for b in range(size) if a != b
    ]
    for _ in range(cross):
        edges.append((int(rng.integers(size)), int(size + rng.integers(size)), 1))
    return DirectedMultigraph(2 * size, edges), Partition([0] * size + [1] * size, [0.25, 0.75])


def test_anneal_map_finds_planted_order():
    rng = np.random.default_rng(3)
    g, planted = planted_dominance(rng)
    v = VARIANTS["dc-osbm"]
    res = anneal_map(g, v, ChainConfig(seed=1, restarts=3, sweeps=200, patience=20, anneal_sweeps=50))
    assert res.num_groups >= 2
    assert res.sigma <= description_length(g, planted, v).total + 1e-9
    assert res.sigma < description_length(g, Partition.single_group(16), v).total


def test_more_restarts_never_hurt():
    rng = np.random.default_rng(6)
    g, _ = planted_dominance(rng, size=6, cross=12)
    v = VARIANTS["osbm"]
    kw = dict(seed=4, sweeps=50, patience=5, anneal_sweeps=10)
    few = anneal_map(g, v, ChainConfig(restarts=2, **kw))
    many = anneal_map(g, v, ChainConfig(restarts=5, **kw))
    assert many.restart_sigmas[:2] == few.restart_sigmas
    assert many.sigma <= few.sigma
