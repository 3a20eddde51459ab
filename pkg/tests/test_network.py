import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import chain, diamond, random_dalns
from oracles import all_segment_paths, brute_distance, brute_upstream
from daln.errors import (
    AmbiguousAllocation,
    CycleDetected,
    DanglingVertexRef,
    InvalidLocation,
    IsolatedVertex,
    MissingLengthAndCoords,
    NoRootDesignated,
    NonpositiveFactor,
    NonpositiveLength,
    RootCannotReach,
    UnknownSegment,
)
from daln.network import (
    NetworkLocation as Loc,
    allocate_vertex_point,
    build_network,
    distance_from_root,
    enumerate_directed_paths,
    path_splits,
    scale_lengths,
    shortest_directed_distance,
    topological_order,
    upstream_segments,
)


class TestBuild:
    def test_stem_diamond_network(self, stem_diamond):
        assert len(stem_diamond.segments) == 6
        assert stem_diamond.total_length == pytest.approx(10.0)

    def test_single_segment(self):
        net = build_network([1, 2], [(1, 1, 2, 1.0)])
        assert net.order == (1,)

    def test_two_cycle(self):
        with pytest.raises(CycleDetected) as exc:
            build_network([1, 2], [(1, 1, 2, 1.0), (2, 2, 1, 1.0)])
        assert set(exc.value.cycle) == {1, 2}

    def test_self_loop_is_a_cycle(self):
        with pytest.raises(CycleDetected):
            build_network([1], [(1, 1, 1, 1.0)])

    def test_longer_cycle_named(self):
        with pytest.raises(CycleDetected) as exc:
            build_network([1, 2, 3, 4], [(1, 1, 2, 1), (2, 2, 3, 1), (3, 3, 2, 1), (4, 3, 4, 1)])
        assert set(exc.value.cycle) == {2, 3}

    def test_dangling_vertex(self):
        with pytest.raises(DanglingVertexRef):
            build_network([1, 2], [(1, 1, 3, 1.0)])

    @pytest.mark.parametrize("length", [0.0, -1.0])
    def test_nonpositive_length(self, length):
        with pytest.raises(NonpositiveLength):
            build_network([1, 2], [(1, 1, 2, length)])

    def test_missing_length_and_coords(self):
        with pytest.raises(MissingLengthAndCoords):
            build_network([1, 2], [(1, 1, 2)])

    def test_euclidean_default_length(self):
        net = build_network([{"id": 1, "coords": [0, 0]}, {"id": 2, "coords": [3, 4]}],
                            [{"id": 7, "from": 1, "to": 2}])
        assert net.length(7) == 5.0

    def test_explicit_length_wins(self):
        net = build_network([{"id": 1, "coords": [0, 0]}, {"id": 2, "coords": [3, 4]}],
                            [{"id": 7, "from": 1, "to": 2, "length": 2.5}])
        assert net.length(7) == 2.5

    def test_duplicate_ids_rejected(self):
        with pytest.raises(ValueError):
            build_network([1, 2], [(1, 1, 2, 1.0), (1, 1, 2, 2.0)])

    def test_bundled_lengths_match_coordinates(self, stem_diamond, long_diamond, branching_tree):
        for net in (stem_diamond, long_diamond, branching_tree):
            for s in net.segments.values():
                a, b = net.vertices[s.tail].coords, net.vertices[s.head].coords
                assert math.dist(a, b) == pytest.approx(s.length, abs=1e-5)


class TestOrder:
    def test_stem_diamond_order(self, stem_diamond):
        order = topological_order(stem_diamond)
        assert order[0] == 1 and order[-1] == 4
        assert order == (1, 2, 3, 5, 6, 4)

    def test_parallel_segments_by_id(self):
        net = build_network(range(1, 7), [(3, 5, 6, 1), (1, 1, 2, 1), (2, 3, 4, 1)])
        assert topological_order(net) == (1, 2, 3)

    def test_upstream_stem_diamond(self, stem_diamond):
        assert upstream_segments(stem_diamond, 4) == {1, 2, 3, 5, 6} == brute_upstream(stem_diamond, 4)

    def test_upstream_source_and_chain(self):
        net = chain([1, 1, 1])
        assert upstream_segments(net, 1) == set()
        assert upstream_segments(net, 3) == {1, 2}

    def test_upstream_unknown(self, stem_diamond):
        with pytest.raises(UnknownSegment):
            upstream_segments(stem_diamond, 99)

    @settings(max_examples=200, deadline=None)
    @given(random_dalns())
    def test_no_back_path(self, net):
        order = net.order
        assert sorted(order) == sorted(net.segments)
        for i, a in enumerate(order):
            for b in order[:i]:
                assert not all_segment_paths(net, a, b)


class TestDistance:
    def test_same_point(self, stem_diamond):
        u = Loc(2, 0.7)
        assert shortest_directed_distance(stem_diamond, u, u) == 0.0

    def test_upstream_in_out_tree_unreachable(self, branching_tree):
        assert shortest_directed_distance(branching_tree, Loc(3, 1.0), Loc(1, 1.0)) == math.inf
        # sibling branches are unreachable both ways
        assert shortest_directed_distance(branching_tree, Loc(3, 1.0), Loc(4, 1.0)) == math.inf

    def test_diamond_takes_short_arm(self):
        net = diamond(3.0, 5.0, stem_in=2.0, stem_out=2.0)
        u, v = Loc(1, 0.5), Loc(6, 1.25)
        expected = min(1.5 + a + 1.25 for a in (3.0, 5.0))
        assert shortest_directed_distance(net, u, v) == pytest.approx(expected)
        assert brute_distance(net, u, v) == pytest.approx(expected)

    def test_invalid_location(self, stem_diamond):
        with pytest.raises(InvalidLocation):
            shortest_directed_distance(stem_diamond, Loc(1, 5.0), Loc(2, 0.0))
        with pytest.raises((InvalidLocation, UnknownSegment)):
            shortest_directed_distance(stem_diamond, Loc(42, 0.0), Loc(2, 0.0))

    @settings(max_examples=200, deadline=None)
    @given(random_dalns(), st.integers(0, 2**32 - 1))
    def test_quasi_metric_axioms(self, net, seed):
        from conftest import random_locations
        rng = np.random.default_rng(seed)
        u, v, w = random_locations(net, rng, 3)
        d = lambda a, b: shortest_directed_distance(net, a, b)  # noqa: E731
        assert d(u, u) == 0.0
        if math.isfinite(d(u, v)) and math.isfinite(d(v, w)):
            assert d(u, w) <= d(u, v) + d(v, w) + 1e-12
        if math.isfinite(d(u, v)) and u != v:
            assert d(v, u) == math.inf

    @settings(max_examples=200, deadline=None)
    @given(random_dalns(), st.integers(0, 2**32 - 1))
    def test_distance_is_min_over_paths(self, net, seed):
        from conftest import random_locations
        rng = np.random.default_rng(seed)
        u, v = random_locations(net, rng, 2)
        d = shortest_directed_distance(net, u, v)
        paths = enumerate_directed_paths(net, u, v, net.total_length)
        if u == v:
            assert d == 0.0
        elif not paths:
            assert d == math.inf
        else:
            assert d == pytest.approx(min(p.length for p in paths), rel=1e-12)
        assert d == pytest.approx(brute_distance(net, u, v), rel=1e-12)


class TestPaths:
    def test_diamond_two_paths(self):
        net = diamond(3.0, 5.0)
        u, v = Loc(1, 0.5), Loc(6, 1.0)
        paths = enumerate_directed_paths(net, u, v, 10.0)
        assert [p.segments for p in paths] == [(1, 2, 4, 6), (1, 3, 5, 6)]
        assert sorted(p.length for p in paths) == pytest.approx([1.5 + 3 + 1, 1.5 + 5 + 1])
        assert [p.n_splits for p in paths] == [2, 2]

    def test_cutoff_drops_long_path(self):
        net = diamond(3.0, 5.0)
        paths = enumerate_directed_paths(net, Loc(1, 0.5), Loc(6, 1.0), 6.0)
        assert [p.segments for p in paths] == [(1, 2, 4, 6)]

    def test_unreachable(self, branching_tree):
        assert enumerate_directed_paths(branching_tree, Loc(3, 1.0), Loc(4, 1.0), 100.0) == []

    def test_same_segment(self, stem_diamond):
        (p,) = enumerate_directed_paths(stem_diamond, Loc(2, 0.5), Loc(2, 1.5), 10.0)
        assert p.length == 1.0 and p.n_splits == 1

    @settings(max_examples=200, deadline=None)
    @given(random_dalns(), st.integers(0, 2**32 - 1))
    def test_split_product_recomputed(self, net, seed):
        from conftest import random_locations
        rng = np.random.default_rng(seed)
        u, v = random_locations(net, rng, 2)
        paths = enumerate_directed_paths(net, u, v, net.total_length)
        if u.segment != v.segment:
            assert {p.segments for p in paths} == set(all_segment_paths(net, u.segment, v.segment))
        for p in paths:
            expected = 1
            for s in p.segments[:-1]:
                head = net.segments[s].head
                expected *= sum(1 for t in net.segments.values() if t.tail == head)
            assert p.n_splits == expected == path_splits(net, p.segments)


class TestRoot:
    def test_root_adjacent(self, branching_tree):
        d, seq = distance_from_root(branching_tree, Loc(1, 0.75))
        assert d == 0.75 and seq == (1,)

    def test_out_tree_unique_path(self, branching_tree):
        for sid in branching_tree.segments:
            u = Loc(sid, 0.5)
            (seq,) = [p for p in all_segment_paths(branching_tree, 1, sid)]
            d, got = distance_from_root(branching_tree, u)
            assert got == seq
            assert d == pytest.approx(sum(branching_tree.length(s) for s in seq[:-1]) + 0.5)

    def test_equal_arms_tie_break(self):
        net = diamond(4.0, 4.0)
        _, seq = distance_from_root(net, Loc(6, 0.5))
        assert seq == (1, 2, 4, 6)

    def test_no_root(self):
        net = build_network([1, 2], [(1, 1, 2, 1.0)])
        with pytest.raises(NoRootDesignated):
            distance_from_root(net, Loc(1, 0.5))

    def test_root_cannot_reach(self):
        net = build_network([1, 2, 3], [(1, 1, 2, 1.0), (2, 3, 2, 1.0)], root=1)
        with pytest.raises(RootCannotReach):
            distance_from_root(net, Loc(2, 0.5))
        assert not net.root_reaches_all()


class TestScaling:
    def test_factor_one(self, long_diamond):
        net = scale_lengths(long_diamond, 1.0)
        assert [s.length for s in net.segments.values()] == [s.length for s in long_diamond.segments.values()]

    @pytest.mark.parametrize("size", [1, 2, 3, 4])
    def test_repeated_growth(self, long_diamond, size):
        net = long_diamond
        for _ in range(size - 1):
            net = scale_lengths(net, 1.5)
        for s in long_diamond.segments.values():
            assert net.length(s.id) == pytest.approx(s.length * 1.5 ** (size - 1))
        assert net.total_length == pytest.approx(long_diamond.total_length * 1.5 ** (size - 1))

    def test_topology_kept_coords_dropped(self, long_diamond):
        net = scale_lengths(long_diamond, 2.0)
        assert net.order == long_diamond.order and net.root == long_diamond.root
        assert all(v.coords is None for v in net.vertices.values())

    @pytest.mark.parametrize("factor", [0.0, -2.0, float("nan")])
    def test_bad_factor(self, long_diamond, factor):
        with pytest.raises(NonpositiveFactor):
            scale_lengths(long_diamond, factor)


class TestAllocation:
    def test_root(self, branching_tree):
        assert allocate_vertex_point(branching_tree, 1) == Loc(1, 0.0)

    def test_leaf(self, branching_tree):
        assert allocate_vertex_point(branching_tree, 4) == Loc(3, 3.0)

    def test_inner_out_tree_vertex(self, branching_tree):
        assert allocate_vertex_point(branching_tree, 2) == Loc(1, 2.0)

    def test_converging_junction(self, stem_diamond):
        with pytest.raises(AmbiguousAllocation):
            allocate_vertex_point(stem_diamond, 5)

    def test_isolated(self):
        net = build_network([1, 2, 3], [(1, 1, 2, 1.0)])
        with pytest.raises(IsolatedVertex):
            allocate_vertex_point(net, 3)
