import itertools

import numpy as np
import pytest
from hypothesis import strategies as st

from osbm.graph import DirectedMultigraph
from osbm.state import Partition


def random_graph(rng, n, e, loops=True):
    src = rng.integers(n, size=e)
    tgt = rng.integers(n, size=e)
    if not loops:
        keep = src != tgt
        src, tgt = src[keep], tgt[keep]
    return DirectedMultigraph(n, [(int(a), int(b), 1) for a, b in zip(src, tgt)])


def random_partition(rng, n, max_groups=None):
    max_groups = max_groups or n
    B = int(rng.integers(1, min(n, max_groups) + 1))
    labels = np.concatenate([np.arange(B), rng.integers(B, size=n - B)])
    rng.shuffle(labels)
    u = rng.permutation(B) / B + rng.random() / (2 * B)
    return Partition(labels, u)


def ordered_partitions(n):
    """Every surjection of n nodes onto ranks 0..B-1, for all B."""
    for B in range(1, n + 1):
        for lab in itertools.product(range(B), repeat=n):
            if len(set(lab)) == B:
                yield lab


@st.composite
def graphs(draw, max_nodes=8, max_edges=20):
    n = draw(st.integers(1, max_nodes))
    pairs = draw(st.lists(
        st.tuples(st.integers(0, n - 1), st.integers(0, n - 1), st.integers(1, 3)),
        max_size=max_edges,
    ))
    return DirectedMultigraph(n, pairs)


@st.composite
def graph_and_partition(draw, max_nodes=8, max_edges=20):
    g = draw(graphs(max_nodes, max_edges))
    n = g.num_nodes
    B = draw(st.integers(1, n))
    labels = draw(st.lists(st.integers(0, B - 1), min_size=n, max_size=n))
    # make the labels contiguous
    uniq = sorted(set(labels))
    labels = [uniq.index(x) for x in labels]
    B = len(uniq)
    u = draw(st.lists(st.floats(0, 1), min_size=B, max_size=B, unique=True))
    return g, Partition(labels, u)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_verdicts = pytest.StashKey[list]()


@pytest.fixture
def verdict(request):
    """Record one PASS/FAIL line for the terminal summary."""
    lines = request.config.stash.setdefault(_verdicts, [])

    def record(n, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}"
        lines.append(line)
        print(line, flush=True)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_verdicts, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
