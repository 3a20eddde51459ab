import sys

import numpy as np
import pytest
from hypothesis import strategies as st

from daln.io import load_network
from daln.network import build_network


def diamond(arm_a=3.0, arm_b=5.0, stem_in=2.0, stem_out=2.0):
    """Stem 1 (1->2), arms 2 (2->3) and 3 (2->4) closing through 4 (3->5) and 5 (4->5), tail 6 (5->6).

    The arms are split in two segments each so both have a junction-free
    interior; arm lengths are the sums along each branch.
    """
    return build_network(
        [1, 2, 3, 4, 5, 6],
        [(1, 1, 2, stem_in), (2, 2, 3, arm_a / 2), (3, 2, 4, arm_b / 2),
         (4, 3, 5, arm_a / 2), (5, 4, 5, arm_b / 2), (6, 5, 6, stem_out)],
        root=1,
    )


def chain(lengths):
    n = len(lengths)
    return build_network(range(1, n + 2), [(i + 1, i + 1, i + 2, L) for i, L in enumerate(lengths)], root=1)


@pytest.fixture(scope="session")
def stem_diamond():
    return load_network("stem_diamond")


@pytest.fixture(scope="session")
def long_diamond():
    return load_network("long_diamond")


@pytest.fixture(scope="session")
def branching_tree():
    return load_network("branching_tree")


@st.composite
def random_dalns(draw, max_segments=8):
    """Random acyclic networks: edges only run from lower to higher vertex rank."""
    n_v = draw(st.integers(2, 7))
    pairs = [(a, b) for a in range(n_v) for b in range(a + 1, n_v)]
    chosen = draw(st.lists(st.sampled_from(pairs), min_size=1, max_size=max_segments))
    lengths = draw(st.lists(st.floats(0.2, 5.0), min_size=len(chosen), max_size=len(chosen)))
    # vertex ids and segment ids are shuffled so the rank order is not the id order
    vperm = draw(st.permutations(range(1, n_v + 1)))
    sperm = draw(st.permutations(range(1, len(chosen) + 1)))
    segs = [(sperm[k], vperm[a], vperm[b], L) for k, ((a, b), L) in enumerate(zip(chosen, lengths))]
    return build_network(vperm, segs)


def random_locations(net, rng, n):
    sids = list(net.segments)
    from daln.network import NetworkLocation
    out = []
    for _ in range(n):
        s = sids[rng.integers(len(sids))]
        out.append(NetworkLocation(s, float(rng.uniform(0, net.length(s)))))
    return out


def random_linear_extension(net, rng):
    """A uniformly shuffled Kahn order: any segment whose predecessors are done may come next."""
    preds = {s: {p.id for p in net.segments.values() if p.head == net.segments[s].tail} for s in net.segments}
    done, order = set(), []
    while len(order) < len(preds):
        ready = sorted(s for s in preds if s not in done and preds[s] <= done)
        s = ready[rng.integers(len(ready))]
        order.append(s)
        done.add(s)
    return order


def pytest_terminal_summary(terminalreporter):
    acceptance = sys.modules.get("test_acceptance")
    if acceptance is None or not acceptance.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in acceptance.RESULTS:
        terminalreporter.write_line(line)
