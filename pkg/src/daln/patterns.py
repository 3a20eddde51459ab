"""Point patterns on a network and the genealogy relations between their points."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import DuplicateLocation, InvalidLocation, UnknownMark, UnknownPoint
from .network import Network, NetworkLocation


@dataclass(frozen=True)
class IntereventRecord:
    child: int
    parent: int
    distance: float
    crossing: bool


class PointPattern:
    """A finite set of distinct points on a :class:`Network`.

    Points are stored sorted by segment id and then offset; a point's id is
    its position in that order. Offsets must lie in ``[0, length]`` of their
    segment (endpoints only arise from vertex allocation).
    """

    marks = None
    n_marks = None

    def __init__(self, network: Network, segments: Sequence[int], offsets: Sequence[float]):
        segs = np.asarray(segments, dtype=np.int64).reshape(-1)
        offs = np.asarray(offsets, dtype=float).reshape(-1)
        if segs.shape != offs.shape:
            raise ValueError("segments and offsets differ in length")
        self._init(network, segs, offs, None)

    def _init(self, network, segs, offs, marks):
        self.network = network
        for sid in np.unique(segs):
            if int(sid) not in network.segments:
                raise InvalidLocation(f"unknown segment {sid}")
        if len(segs):
            lens = np.array([network.segments[int(s)].length for s in segs])
            bad = ~((offs >= 0) & (offs <= lens))
            if bad.any():
                k = int(np.flatnonzero(bad)[0])
                raise InvalidLocation(f"offset {offs[k]} outside segment {segs[k]}")
        order = np.lexsort((offs, segs))
        segs, offs = segs[order], offs[order]
        if len(segs) > 1:
            dup = (segs[1:] == segs[:-1]) & (offs[1:] == offs[:-1])
            if dup.any():
                k = int(np.flatnonzero(dup)[0])
                raise DuplicateLocation(f"two points at offset {offs[k]} on segment {segs[k]}")
        self.segments = segs
        self.offsets = offs
        self.segments.setflags(write=False)
        self.offsets.setflags(write=False)
        if marks is not None:
            marks = marks[order]
            marks.setflags(write=False)
        self.marks = marks
        self._slices = {}
        bounds = np.flatnonzero(np.diff(segs)) + 1
        starts = np.concatenate(([0], bounds)) if len(segs) else np.array([], dtype=int)
        stops = np.concatenate((bounds, [len(segs)])) if len(segs) else np.array([], dtype=int)
        for a, b in zip(starts, stops):
            self._slices[int(segs[a])] = (int(a), int(b))
        self._upstream_cache = {}
        self._path_cache = {}

    @classmethod
    def from_locations(cls, network: Network, locations: Iterable[NetworkLocation]) -> "PointPattern":
        locs = list(locations)
        return cls(network, [u.segment for u in locs], [u.offset for u in locs])

    @classmethod
    def empty(cls, network: Network) -> "PointPattern":
        return cls(network, [], [])

    def __len__(self):
        return len(self.segments)

    def __repr__(self):
        return f"{type(self).__name__}({len(self)} points on {len(self.network.segments)} segments)"

    def location(self, x: int) -> NetworkLocation:
        self._check(x)
        return NetworkLocation(int(self.segments[x]), float(self.offsets[x]))

    def locations(self) -> list[NetworkLocation]:
        return [NetworkLocation(int(s), float(t)) for s, t in zip(self.segments, self.offsets)]

    def _check(self, x: int):
        if not (0 <= x < len(self)):
            raise UnknownPoint(f"no point with id {x}")

    def on_segment(self, sid: int) -> range:
        """Ids of the points on segment ``sid`` in increasing offset order."""
        a, b = self._slices.get(sid, (0, 0))
        return range(a, b)

    def offsets_on(self, sid: int) -> np.ndarray:
        a, b = self._slices.get(sid, (0, 0))
        return self.offsets[a:b]

    def count_on(self, sid: int) -> int:
        a, b = self._slices.get(sid, (0, 0))
        return b - a

    def subset(self, ids: Sequence[int]) -> "PointPattern":
        ids = np.asarray(ids, dtype=np.intp)
        out = object.__new__(type(self))
        out.n_marks = self.n_marks
        out._init(self.network, self.segments[ids], self.offsets[ids],
                  None if self.marks is None else self.marks[ids].copy())
        return out

    # cached geometry used by the models

    def upstream(self, sid: int) -> tuple[np.ndarray, np.ndarray]:
        """Points on segments leading into ``sid`` and their distances to its tail."""
        hit = self._upstream_cache.get(sid)
        if hit is None:
            if len(self):
                d = self.network.distances_to_tail(sid, self.segments, self.offsets)
                ids = np.flatnonzero(np.isfinite(d))
                hit = (ids, d[ids])
            else:
                hit = (np.empty(0, dtype=np.intp), np.empty(0))
            self._upstream_cache[sid] = hit
        return hit

    def upstream_paths(self, sid: int, cutoff: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Every directed path from an upstream point to the tail of ``sid``.

        Returns point ids, path lengths and split weights ``1/n_p`` for each
        path no longer than ``cutoff``; ``n_p`` includes the junction at the
        tail of ``sid``. Path enumerations are cached on a power-of-two grid
        of cutoffs and filtered to the exact cutoff.
        """
        grid = 2.0 ** math.ceil(math.log2(max(cutoff, 1e-300)))
        key = (sid, grid)
        hit = self._path_cache.get(key)
        net = self.network
        if hit is None:
            seg = net.segment(sid)
            tail = net._vidx[seg.tail]
            deg_tail = len(net.out_segments(seg.tail))
            ids_l, len_l, w_l = [], [], []
            for s, (a, b) in self._slices.items():
                if s == sid:
                    continue
                k = net._sidx[s]
                if not net._reach[k, net._sidx[sid]]:
                    continue
                rem = net._len[k] - self.offsets[a:b]
                for end, plen, n in net._vertex_paths(int(net._head[k]), grid):
                    if end != tail:
                        continue
                    total = rem + plen
                    keep = total <= grid
                    ids_l.append(np.arange(a, b)[keep])
                    len_l.append(total[keep])
                    w_l.append(np.full(int(keep.sum()), 1.0 / (n * deg_tail)))
            if ids_l:
                hit = (np.concatenate(ids_l), np.concatenate(len_l), np.concatenate(w_l))
            else:
                hit = (np.empty(0, dtype=np.intp), np.empty(0), np.empty(0))
            self._path_cache[key] = hit
        ids, lens, w = hit
        keep = lens <= cutoff
        return ids[keep], lens[keep], w[keep]

    # genealogy

    def _leads(self, y: int, x: int) -> bool:
        sy, sx = int(self.segments[y]), int(self.segments[x])
        if sy == sx:
            return self.offsets[y] < self.offsets[x]
        return self.network.leads_to(sy, sx)

    def ancestors(self, x: int) -> set[int]:
        """Points ``y`` with a directed path from ``y`` to ``x``."""
        self._check(x)
        sx = int(self.segments[x])
        a, _ = self._slices[sx]
        out = set(range(a, x))
        ids, _ = self.upstream(sx)
        out.update(int(i) for i in ids)
        return out

    def descendants(self, x: int) -> set[int]:
        self._check(x)
        sx = int(self.segments[x])
        _, b = self._slices[sx]
        out = set(range(x + 1, b))
        net = self.network
        down = net.downstream_segments(sx)
        for s in down:
            out.update(self.on_segment(s))
        return out

    def parents(self, x: int) -> set[int]:
        """Ancestors joined to ``x`` by a directed path containing no other point."""
        self._check(x)
        sx = int(self.segments[x])
        a, _ = self._slices[sx]
        if x > a:
            return {x - 1}
        return set(self._last_points_upstream(sx))

    def children(self, x: int) -> set[int]:
        self._check(x)
        sx = int(self.segments[x])
        _, b = self._slices[sx]
        if x < b - 1:
            return {x + 1}
        return set(self._first_points_downstream(sx))

    def _last_points_upstream(self, sid: int) -> list[int]:
        """Last points of the nearest nonempty segments reached against the direction."""
        net = self.network
        found, seen = [], set()
        stack = [net.segments[sid].tail]
        while stack:
            v = stack.pop()
            for s in net.in_segments(v):
                if s in seen:
                    continue
                seen.add(s)
                if s in self._slices:
                    found.append(self._slices[s][1] - 1)
                else:
                    stack.append(net.segments[s].tail)
        return sorted(found)

    def _first_points_downstream(self, sid: int) -> list[int]:
        net = self.network
        found, seen = [], set()
        stack = [net.segments[sid].head]
        while stack:
            v = stack.pop()
            for s in net.out_segments(v):
                if s in seen:
                    continue
                seen.add(s)
                if s in self._slices:
                    found.append(self._slices[s][0])
                else:
                    stack.append(net.segments[s].head)
        return sorted(found)

    def interevent_arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """Child ids, parent ids, distances and crossing flags, ordered by (child, parent)."""
        child, parent, dist, cross = [], [], [], []
        net = self.network
        for sid, (a, b) in sorted(self._slices.items(), key=lambda kv: kv[1]):
            for p in self._last_points_upstream(sid):
                child.append(a)
                parent.append(p)
                dist.append(net.distance(self.location(p), self.location(a)))
                cross.append(True)
            if b - a > 1:
                child.extend(range(a + 1, b))
                parent.extend(range(a, b - 1))
                dist.extend(np.diff(self.offsets[a:b]))
                cross.extend([False] * (b - a - 1))
        child = np.asarray(child, dtype=np.intp)
        parent = np.asarray(parent, dtype=np.intp)
        dist = np.asarray(dist, dtype=float)
        cross = np.asarray(cross, dtype=bool)
        order = np.lexsort((parent, child))
        return child[order], parent[order], dist[order], cross[order]

    def interevent_distances(self) -> list[IntereventRecord]:
        """Distance from each parent to each of its children."""
        c, p, d, x = self.interevent_arrays()
        return [IntereventRecord(int(ci), int(pi), float(di), bool(xi))
                for ci, pi, di, xi in zip(c, p, d, x)]

    def history_before(self, u: NetworkLocation) -> "PointPattern":
        """Sub-pattern of the points with a directed path to ``u``."""
        self.network.check_location(u)
        a, b = self._slices.get(u.segment, (0, 0))
        same = [i for i in range(a, b) if self.offsets[i] < u.offset]
        ids, _ = self.upstream(u.segment)
        return self.subset(sorted(same + [int(i) for i in ids]))


class MarkedPointPattern(PointPattern):
    """Point pattern where each point carries a label in ``{1, ..., n_marks}``."""

    def __init__(self, network: Network, segments: Sequence[int], offsets: Sequence[float],
                 marks: Sequence[int], n_marks: int):
        segs = np.asarray(segments, dtype=np.int64).reshape(-1)
        offs = np.asarray(offsets, dtype=float).reshape(-1)
        mk = np.asarray(marks, dtype=np.int64).reshape(-1)
        if not (segs.shape == offs.shape == mk.shape):
            raise ValueError("segments, offsets and marks differ in length")
        if n_marks < 1:
            raise ValueError("mark space must hold at least one label")
        if len(mk) and (mk.min() < 1 or mk.max() > n_marks):
            bad = mk[(mk < 1) | (mk > n_marks)][0]
            raise UnknownMark(f"mark {bad} outside 1..{n_marks}")
        self.n_marks = int(n_marks)
        self._init(network, segs, offs, mk.copy())

    @classmethod
    def empty(cls, network: Network, n_marks: int = 1) -> "MarkedPointPattern":
        return cls(network, [], [], [], n_marks)

    def with_mark(self, m: int) -> PointPattern:
        """Unmarked sub-pattern of the points carrying mark ``m``."""
        if not 1 <= m <= self.n_marks:
            raise UnknownMark(f"mark {m} outside 1..{self.n_marks}")
        ids = np.flatnonzero(self.marks == m)
        return PointPattern(self.network, self.segments[ids], self.offsets[ids])

    def unmarked(self) -> PointPattern:
        return PointPattern(self.network, self.segments, self.offsets)


def parents(pattern: PointPattern, x: int) -> set[int]:
    return pattern.parents(x)


def ancestors(pattern: PointPattern, x: int) -> set[int]:
    return pattern.ancestors(x)


def descendants(pattern: PointPattern, x: int) -> set[int]:
    return pattern.descendants(x)


def children(pattern: PointPattern, x: int) -> set[int]:
    return pattern.children(x)


def interevent_distances(pattern: PointPattern) -> list[IntereventRecord]:
    return pattern.interevent_distances()


def history_before(pattern: PointPattern, u: NetworkLocation) -> PointPattern:
    return pattern.history_before(u)
