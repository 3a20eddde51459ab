"""Reading and writing networks, patterns and model specifications.

Network JSON::

    {"root": 1, "vertices": [{"id": 1, "coords": [0, 0]}, ...],
     "segments": [{"id": 1, "from": 1, "to": 2, "length": 3.0}, ...]}

Pattern CSV: header ``segment_id,offset`` or ``segment_id,offset,mark``;
lines starting with ``#`` are comments. A ``segment_id`` of the form
``v<id>`` places the point at that vertex through the allocation rule
(the offset field is then ignored).
"""
from __future__ import annotations

import csv
import io
import json
from importlib import resources
from pathlib import Path

from .errors import FormatError
from .models import IntensityModel, model_from_spec
from .network import Network, build_network
from .patterns import MarkedPointPattern, PointPattern

_NET_KEYS = {"root", "vertices", "segments"}
_VERTEX_KEYS = {"id", "coords"}
_SEGMENT_KEYS = {"id", "from", "to", "length"}

BUNDLED = ("stem_diamond", "long_diamond", "branching_tree")


def network_from_dict(data: dict) -> Network:
    if not isinstance(data, dict):
        raise FormatError("network JSON must be an object")
    for key, allowed, items in (("network", _NET_KEYS, [data]),
                                ("vertex", _VERTEX_KEYS, data.get("vertices", [])),
                                ("segment", _SEGMENT_KEYS, data.get("segments", []))):
        for item in items:
            if not isinstance(item, dict):
                raise FormatError(f"{key} entries must be objects")
            extra = set(item) - allowed
            if extra:
                raise FormatError(f"unknown {key} keys: {sorted(extra)}")
    for key in ("vertices", "segments"):
        if key not in data:
            raise FormatError(f"network JSON lacks {key!r}")
    for s in data["segments"]:
        missing = {"id", "from", "to"} - set(s)
        if missing:
            raise FormatError(f"segment entry lacks {sorted(missing)}")
    for v in data["vertices"]:
        if "id" not in v:
            raise FormatError("vertex entry lacks 'id'")
    return build_network(data["vertices"], data["segments"], data.get("root"))


def load_network(path: str | Path) -> Network:
    """Load a network JSON file, or a bundled network by name (e.g. ``long_diamond``)."""
    p = Path(path)
    if not p.exists() and str(path) in BUNDLED:
        text = resources.files("daln").joinpath(f"data/{path}.json").read_text(encoding="utf-8")
    else:
        text = p.read_text(encoding="utf-8")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: {exc}") from None
    return network_from_dict(data)


def save_network(net: Network, path: str | Path):
    write_json(path, net.to_dict())


def read_pattern(text: str, net: Network, n_marks: int | None = None) -> PointPattern:
    """Parse pattern CSV text; marked if the header has a ``mark`` column."""
    lines = [ln for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
    if not lines:
        raise FormatError("pattern file has no header")
    reader = csv.reader(lines)
    header = [h.strip() for h in next(reader)]
    if header not in (["segment_id", "offset"], ["segment_id", "offset", "mark"]):
        raise FormatError(f"pattern header must be segment_id,offset[,mark], got {','.join(header)}")
    marked = len(header) == 3
    segs, offs, marks = [], [], []
    for lineno, row in enumerate(reader, start=2):
        row = [c.strip() for c in row]
        if len(row) != len(header):
            raise FormatError(f"pattern row {lineno}: expected {len(header)} fields, got {len(row)}")
        try:
            if row[0].startswith("v"):
                u = net.allocate_vertex_point(int(row[0][1:]))
                sid, off = u.segment, u.offset
            else:
                sid, off = int(row[0]), float(row[1])
            if marked:
                marks.append(int(row[2]))
        except ValueError:
            raise FormatError(f"pattern row {lineno}: cannot parse {row}") from None
        segs.append(sid)
        offs.append(off)
    if marked:
        k = n_marks if n_marks is not None else max(marks, default=1)
        return MarkedPointPattern(net, segs, offs, marks, k)
    return PointPattern(net, segs, offs)


def load_pattern(path: str | Path, net: Network, n_marks: int | None = None) -> PointPattern:
    return read_pattern(Path(path).read_text(encoding="utf-8"), net, n_marks)


def format_pattern(pattern: PointPattern) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    if pattern.marks is None:
        w.writerow(["segment_id", "offset"])
        for s, t in zip(pattern.segments, pattern.offsets):
            w.writerow([int(s), repr(float(t))])
    else:
        w.writerow(["segment_id", "offset", "mark"])
        for s, t, m in zip(pattern.segments, pattern.offsets, pattern.marks):
            w.writerow([int(s), repr(float(t)), int(m)])
    return buf.getvalue()


def save_pattern(pattern: PointPattern, path: str | Path):
    Path(path).write_text(format_pattern(pattern), encoding="utf-8")


def load_model(path: str | Path) -> IntensityModel:
    """Model from a spec JSON file; a fit result JSON (with a ``spec`` entry) also works."""
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: {exc}") from None
    if isinstance(data, dict) and "spec" in data and "model" in data:
        data = data["spec"]
    return model_from_spec(data)


def write_json(path: str | Path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")
