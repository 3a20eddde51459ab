"""Directed acyclic linear networks.

A network is a finite set of directed line segments joined at vertices with
no directed loops. Points on the network are addressed by a segment id and an
offset measured from the segment's tail, so the network can be purely abstract
(lengths only) as well as embedded in Euclidean space.
"""
from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import (
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
    UnknownVertex,
)

# relative tolerance used when deciding that two path lengths are equal
_TIE_RTOL = 1e-12


@dataclass(frozen=True)
class Vertex:
    id: int
    coords: tuple[float, ...] | None = None


@dataclass(frozen=True)
class DirectedSegment:
    """Segment running from vertex ``tail`` to vertex ``head``."""

    id: int
    tail: int
    head: int
    length: float


@dataclass(frozen=True, order=True)
class NetworkLocation:
    """The point at distance ``offset`` from the tail of ``segment``."""

    segment: int
    offset: float


@dataclass(frozen=True)
class DirectedPath:
    """A directed path between two network locations.

    ``entry`` is the offset on the first segment where the path starts and
    ``exit`` the offset on the last segment where it stops. ``n_splits`` is
    the product of the out-degrees of the junctions the path runs through.
    """

    segments: tuple[int, ...]
    entry: float
    exit: float
    length: float
    n_splits: int


def _as_vertex(item) -> Vertex:
    if isinstance(item, Vertex):
        return item
    if isinstance(item, Mapping):
        coords = item.get("coords")
        return Vertex(int(item["id"]), None if coords is None else tuple(float(c) for c in coords))
    return Vertex(int(item))


def _as_segment_tuple(item):
    if isinstance(item, DirectedSegment):
        return item.id, item.tail, item.head, item.length
    if isinstance(item, Mapping):
        return int(item["id"]), int(item["from"]), int(item["to"]), item.get("length")
    item = tuple(item)
    if len(item) == 3:
        return int(item[0]), int(item[1]), int(item[2]), None
    return int(item[0]), int(item[1]), int(item[2]), item[3]


class Network:
    """An immutable directed acyclic linear network.

    Use :func:`build_network` to construct one from raw vertex and segment
    lists; the constructor expects already-normalised objects.

    Attributes
    ----------
    vertices : dict
        Vertex id -> :class:`Vertex`, in ascending id order.
    segments : dict
        Segment id -> :class:`DirectedSegment`, in ascending id order.
    root : int or None
        Designated root vertex, if any.
    order : tuple of int
        Topological order of the segment ids. Ties are broken by ascending
        segment id so the order is reproducible.
    """

    def __init__(self, vertices: Iterable[Vertex], segments: Iterable[DirectedSegment],
                 root: int | None = None, *, allow_zero_length: bool = False):
        self.vertices = {v.id: v for v in sorted(vertices, key=lambda v: v.id)}
        self.segments = {s.id: s for s in sorted(segments, key=lambda s: s.id)}
        if len(self.vertices) == 0 and len(self.segments) > 0:
            raise DanglingVertexRef("segments given but no vertices declared")
        for s in self.segments.values():
            for end in (s.tail, s.head):
                if end not in self.vertices:
                    raise DanglingVertexRef(f"segment {s.id} references undeclared vertex {end}")
            if not (s.length > 0 or (allow_zero_length and s.length == 0)) or not math.isfinite(s.length):
                raise NonpositiveLength(f"segment {s.id} has length {s.length}")
            if s.tail == s.head:
                raise CycleDetected([s.id])
        if root is not None and root not in self.vertices:
            raise DanglingVertexRef(f"root {root} is not a declared vertex")
        self.root = root

        self._out = {v: [] for v in self.vertices}
        self._in = {v: [] for v in self.vertices}
        for s in self.segments.values():
            self._out[s.tail].append(s.id)
            self._in[s.head].append(s.id)
        self._out = {v: tuple(ids) for v, ids in self._out.items()}
        self._in = {v: tuple(ids) for v, ids in self._in.items()}

        self.order = self._kahn()

        # dense index arrays used by the vectorised distance queries
        self._vidx = {v: k for k, v in enumerate(self.vertices)}
        self._sidx = {s: k for k, s in enumerate(self.segments)}
        seg_list = list(self.segments.values())
        self._len = np.array([s.length for s in seg_list], dtype=float)
        self._tail = np.array([self._vidx[s.tail] for s in seg_list], dtype=np.intp)
        self._head = np.array([self._vidx[s.head] for s in seg_list], dtype=np.intp)
        self._outdeg = np.array([len(self._out[v]) for v in self.vertices], dtype=np.int64)
        self._path_cache: dict = {}
        self._root_path_cache: dict = {}

    def _kahn(self) -> tuple[int, ...]:
        indeg = {s.id: len(self._in[s.tail]) for s in self.segments.values()}
        ready = [sid for sid, d in indeg.items() if d == 0]
        heapq.heapify(ready)
        order = []
        while ready:
            sid = heapq.heappop(ready)
            order.append(sid)
            for nxt in self._out[self.segments[sid].head]:
                indeg[nxt] -= 1
                if indeg[nxt] == 0:
                    heapq.heappush(ready, nxt)
        if len(order) < len(self.segments):
            raise CycleDetected(self._find_cycle(set(self.segments) - set(order)))
        return tuple(order)

    def _find_cycle(self, left: set[int]) -> list[int]:
        # every leftover segment has a leftover predecessor, so walking
        # backwards must revisit a segment
        sid = min(left)
        seen: dict[int, int] = {}
        walk = []
        while sid not in seen:
            seen[sid] = len(walk)
            walk.append(sid)
            sid = min(p for p in self._in[self.segments[sid].tail] if p in left)
        cycle = walk[seen[sid]:]
        return cycle[::-1]

    def __repr__(self):
        return (f"Network({len(self.vertices)} vertices, {len(self.segments)} segments, "
                f"total length {self.total_length:g}, root={self.root})")

    # basic structure

    @property
    def total_length(self) -> float:
        return float(self._len.sum())

    def segment(self, sid: int) -> DirectedSegment:
        try:
            return self.segments[sid]
        except KeyError:
            raise UnknownSegment(f"unknown segment {sid}") from None

    def length(self, sid: int) -> float:
        return self.segment(sid).length

    def out_segments(self, v: int) -> tuple[int, ...]:
        if v not in self._out:
            raise UnknownVertex(f"unknown vertex {v}")
        return self._out[v]

    def in_segments(self, v: int) -> tuple[int, ...]:
        if v not in self._in:
            raise UnknownVertex(f"unknown vertex {v}")
        return self._in[v]

    def out_degree(self, v: int) -> int:
        return len(self.out_segments(v))

    def check_location(self, u: NetworkLocation) -> NetworkLocation:
        if u.segment not in self.segments:
            raise InvalidLocation(f"unknown segment {u.segment}")
        t = u.offset
        if not (0.0 <= t <= self.segments[u.segment].length):
            raise InvalidLocation(
                f"offset {t} outside [0, {self.segments[u.segment].length}] on segment {u.segment}")
        return u

    # ordering and reachability

    def topological_order(self) -> tuple[int, ...]:
        return self.order

    @cached_property
    def _vdist(self) -> np.ndarray:
        """All-pairs shortest directed distances between vertices (Dijkstra)."""
        n = len(self.vertices)
        dist = np.full((n, n), np.inf)
        adj = [[] for _ in range(n)]
        for k, s in enumerate(self.segments.values()):
            adj[self._tail[k]].append((self._head[k], s.length))
        for src in range(n):
            row = dist[src]
            row[src] = 0.0
            heap = [(0.0, src)]
            while heap:
                d, a = heapq.heappop(heap)
                if d > row[a]:
                    continue
                for b, w in adj[a]:
                    nd = d + w
                    if nd < row[b]:
                        row[b] = nd
                        heapq.heappush(heap, (nd, b))
        dist.setflags(write=False)
        return dist

    @cached_property
    def _reach(self) -> np.ndarray:
        """``_reach[i, j]`` is True when segment index i leads to segment index j."""
        r = np.isfinite(self._vdist[self._head][:, self._tail])
        r.setflags(write=False)
        return r

    def leads_to(self, i: int, j: int) -> bool:
        """True when a directed path runs from segment ``i`` to segment ``j``."""
        ii, jj = self._seg_index(i), self._seg_index(j)
        return bool(self._reach[ii, jj])

    def upstream_segments(self, sid: int) -> frozenset[int]:
        """Segments with a directed path into ``sid`` (``sid`` excluded)."""
        k = self._seg_index(sid)
        ids = list(self.segments)
        return frozenset(ids[j] for j in np.flatnonzero(self._reach[:, k]))

    def downstream_segments(self, sid: int) -> frozenset[int]:
        k = self._seg_index(sid)
        ids = list(self.segments)
        return frozenset(ids[j] for j in np.flatnonzero(self._reach[k, :]))

    def _seg_index(self, sid: int) -> int:
        try:
            return self._sidx[sid]
        except KeyError:
            raise UnknownSegment(f"unknown segment {sid}") from None

    def vertex_distance(self, a: int, b: int) -> float:
        """Shortest directed distance between two vertices."""
        try:
            return float(self._vdist[self._vidx[a], self._vidx[b]])
        except KeyError as exc:
            raise UnknownVertex(f"unknown vertex {exc.args[0]}") from None

    # distances

    def distance(self, u: NetworkLocation, v: NetworkLocation) -> float:
        """Shortest directed distance from ``u`` to ``v``; ``inf`` if ``v`` is not reachable."""
        self.check_location(u)
        self.check_location(v)
        if u.segment == v.segment:
            if u.offset == v.offset:
                return 0.0
            if u.offset < v.offset:
                return v.offset - u.offset
            return math.inf
        su, sv = self.segments[u.segment], self.segments[v.segment]
        between = self._vdist[self._vidx[su.head], self._vidx[sv.tail]]
        return float((su.length - u.offset) + between + v.offset)

    def distances_to_tail(self, sid: int, segs: np.ndarray, offsets: np.ndarray) -> np.ndarray:
        """Vectorised distances from points ``(segs, offsets)`` to the tail of ``sid``.

        Points on ``sid`` itself get ``inf``; they are handled separately by
        the callers because they lie downstream of the tail.
        """
        k = self._seg_index(sid)
        if len(segs) == 0:
            return np.empty(0)
        idx = np.fromiter((self._sidx[s] for s in segs), dtype=np.intp, count=len(segs))
        d = (self._len[idx] - offsets) + self._vdist[self._head[idx], self._tail[k]]
        return d

    def paths(self, u: NetworkLocation, v: NetworkLocation, max_length: float) -> list[DirectedPath]:
        """All directed paths from ``u`` to ``v`` no longer than ``max_length``.

        Paths are returned in lexicographic order of their segment sequences.
        An empty list means ``u`` does not lead to ``v`` within the cutoff.
        """
        self.check_location(u)
        self.check_location(v)
        if max_length < 0:
            raise ValueError("max_length must be nonnegative")
        if u.segment == v.segment:
            if u.offset < v.offset and v.offset - u.offset <= max_length:
                return [DirectedPath((u.segment,), u.offset, v.offset, v.offset - u.offset, 1)]
            return []
        su, sv = self.segments[u.segment], self.segments[v.segment]
        target = self._vidx[sv.tail]
        vdist = self._vdist
        found = []

        def walk(vertex: int, seq: list[int], length: float, n_splits: int):
            if length + vdist[self._vidx[vertex], target] + v.offset > max_length:
                return
            n_here = n_splits * len(self._out[vertex])
            for sid in self._out[vertex]:
                if sid == sv.id:
                    found.append(DirectedPath(tuple(seq + [sid]), u.offset, v.offset,
                                              length + v.offset, n_here))
                    continue
                seg = self.segments[sid]
                walk(seg.head, seq + [sid], length + seg.length, n_here)

        walk(su.head, [su.id], su.length - u.offset, 1)
        found.sort(key=lambda p: p.segments)
        return found

    def _vertex_paths(self, a: int, cutoff: float) -> list[tuple[int, float, int]]:
        """Every vertex path leaving vertex index ``a`` with length <= ``cutoff``.

        Returns ``(end vertex index, length, product of out-degrees of all
        vertices on the path except the end)``, including the empty path.
        Results are cached per (vertex, cutoff).
        """
        key = (a, cutoff)
        hit = self._path_cache.get(key)
        if hit is not None:
            return hit
        out = []
        vids = list(self.vertices)
        stack = [(a, 0.0, 1)]
        while stack:
            v, length, n = stack.pop()
            out.append((v, length, n))
            vid = vids[v]
            deg = len(self._out[vid])
            for sid in self._out[vid]:
                k = self._sidx[sid]
                nl = length + self._len[k]
                if nl <= cutoff:
                    stack.append((int(self._head[k]), nl, n * deg))
        self._path_cache[key] = out
        return out

    # root

    def root_distance(self, u: NetworkLocation) -> float:
        return self.root_path(u)[0]

    def root_path(self, u: NetworkLocation, root: int | None = None) -> tuple[float, tuple[int, ...]]:
        """Distance from the root to ``u`` and the realised shortest path.

        Among equally short paths the lexicographically smallest sequence of
        segment ids is returned. ``root`` overrides the designated root.
        """
        self.check_location(u)
        tail = self.segments[u.segment].tail
        root = self._resolve_root(root)
        seq = self.root_vertex_path(tail, root)
        return self.vertex_distance(root, tail) + u.offset, seq + (u.segment,)

    def _resolve_root(self, root):
        root = self.root if root is None else root
        if root is None:
            raise NoRootDesignated("network has no designated root")
        if root not in self.vertices:
            raise UnknownVertex(f"unknown vertex {root}")
        return root

    def root_vertex_path(self, b: int, root: int | None = None) -> tuple[int, ...]:
        """Segments of the tie-broken shortest path from the root to vertex ``b``."""
        root = self._resolve_root(root)
        cache = self._root_path_cache
        if (root, b) in cache:
            return cache[root, b]
        vd = self._vdist
        bi = self._vidx[b]
        v = root
        total = vd[self._vidx[v], bi]
        if not math.isfinite(total):
            raise RootCannotReach(f"vertex {b} is not reachable from root {root}")
        seq = []
        tol = _TIE_RTOL * max(1.0, total)
        while v != b:
            rest = vd[self._vidx[v], bi]
            # greedy choice of the smallest id that stays on a shortest path
            for sid in self._out[v]:
                seg = self.segments[sid]
                if abs(seg.length + vd[self._vidx[seg.head], bi] - rest) <= tol:
                    seq.append(sid)
                    v = seg.head
                    break
            else:  # pragma: no cover - guarded by the finiteness check
                raise RootCannotReach(f"vertex {b} is not reachable from root {root}")
        cache[root, b] = tuple(seq)
        return cache[root, b]

    def root_reaches_all(self) -> bool:
        if self.root is None:
            return False
        row = self._vdist[self._vidx[self.root]]
        return bool(np.all(np.isfinite(row[self._tail])))

    def is_out_tree(self) -> bool:
        if self.root is None or not self.segments:
            return False
        for v in self.vertices:
            need = 0 if v == self.root else 1
            if len(self._in[v]) != need:
                return False
        return bool(np.all(np.isfinite(self._vdist[self._vidx[self.root]])))

    # derived networks and vertex points

    def scaled(self, factor: float) -> "Network":
        """Copy with every segment length multiplied by ``factor``; coordinates are dropped."""
        if not factor > 0 or not math.isfinite(factor):
            raise NonpositiveFactor(f"scale factor must be positive, got {factor}")
        return Network(
            [Vertex(v.id) for v in self.vertices.values()],
            [DirectedSegment(s.id, s.tail, s.head, s.length * factor) for s in self.segments.values()],
            root=self.root,
        )

    def with_lengths(self, lengths: Mapping[int, float]) -> "Network":
        """Abstract copy with new segment lengths (zero lengths allowed)."""
        return Network(
            [Vertex(v.id) for v in self.vertices.values()],
            [DirectedSegment(s.id, s.tail, s.head, float(lengths[s.id])) for s in self.segments.values()],
            root=self.root,
            allow_zero_length=True,
        )

    def allocate_vertex_point(self, v: int) -> NetworkLocation:
        """Location on a segment that a point observed exactly at vertex ``v`` belongs to.

        A root with one outgoing segment maps to the start of that segment;
        otherwise a vertex with a single ingoing segment maps to the end of
        it. A source vertex with a single outgoing segment is treated like a
        root.
        """
        if v not in self.vertices:
            raise UnknownVertex(f"unknown vertex {v}")
        ins, outs = self._in[v], self._out[v]
        if not ins and not outs:
            raise IsolatedVertex(f"vertex {v} has no segments")
        if (v == self.root or not ins) and len(outs) == 1:
            return NetworkLocation(outs[0], 0.0)
        if len(ins) == 1:
            return NetworkLocation(ins[0], self.segments[ins[0]].length)
        raise AmbiguousAllocation(
            f"vertex {v} has in-degree {len(ins)} and out-degree {len(outs)}; no unique segment")

    def to_dict(self) -> dict:
        return {
            "root": self.root,
            "vertices": [
                {"id": v.id, **({"coords": list(v.coords)} if v.coords is not None else {})}
                for v in self.vertices.values()
            ],
            "segments": [
                {"id": s.id, "from": s.tail, "to": s.head, "length": s.length}
                for s in self.segments.values()
            ],
        }


def build_network(vertices: Iterable, segments: Iterable, root: int | None = None) -> Network:
    """Validate raw vertex and segment lists and build a :class:`Network`.

    Parameters
    ----------
    vertices : iterable
        :class:`Vertex` objects, plain ids, or mappings with ``id`` and
        optional ``coords``.
    segments : iterable
        :class:`DirectedSegment` objects, ``(id, tail, head[, length])``
        tuples, or mappings with ``id``, ``from``, ``to`` and optional
        ``length``. A missing length is taken as the Euclidean distance
        between the endpoint coordinates.
    root : int, optional
        Designated root vertex.
    """
    verts = [_as_vertex(v) for v in vertices]
    by_id = {}
    for v in verts:
        if v.id in by_id:
            raise ValueError(f"duplicate vertex id {v.id}")
        by_id[v.id] = v
    segs = []
    seen = set()
    for item in segments:
        sid, tail, head, length = _as_segment_tuple(item)
        if sid in seen:
            raise ValueError(f"duplicate segment id {sid}")
        seen.add(sid)
        for end in (tail, head):
            if end not in by_id:
                raise DanglingVertexRef(f"segment {sid} references undeclared vertex {end}")
        if length is None:
            a, b = by_id[tail].coords, by_id[head].coords
            if a is None or b is None:
                raise MissingLengthAndCoords(f"segment {sid} has no length and its endpoints lack coords")
            if len(a) != len(b):
                raise ValueError(f"segment {sid} joins vertices of different dimension")
            length = math.dist(a, b)
        length = float(length)
        if not length > 0:
            raise NonpositiveLength(f"segment {sid} has length {length}")
        segs.append(DirectedSegment(sid, tail, head, length))
    return Network(verts, segs, root=root)


def topological_order(net: Network) -> tuple[int, ...]:
    return net.order


def upstream_segments(net: Network, sid: int) -> frozenset[int]:
    return net.upstream_segments(sid)


def shortest_directed_distance(net: Network, u: NetworkLocation, v: NetworkLocation) -> float:
    return net.distance(u, v)


def enumerate_directed_paths(net: Network, u: NetworkLocation, v: NetworkLocation,
                             max_length: float) -> list[DirectedPath]:
    return net.paths(u, v, max_length)


def distance_from_root(net: Network, u: NetworkLocation) -> tuple[float, tuple[int, ...]]:
    return net.root_path(u)


def scale_lengths(net: Network, factor: float) -> Network:
    return net.scaled(factor)


def allocate_vertex_point(net: Network, v: int) -> NetworkLocation:
    return net.allocate_vertex_point(v)


def path_splits(net: Network, segments: Sequence[int]) -> int:
    """Product of out-degrees at the junctions between consecutive segments."""
    n = 1
    for sid in segments[:-1]:
        n *= net.out_degree(net.segment(sid).head)
    return n
