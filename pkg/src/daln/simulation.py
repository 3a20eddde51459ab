"""Exact simulation segment by segment in topological order.

Two per-segment samplers are provided: the inverse method, which maps a
running sum of unit exponentials through the inverse of the integrated
intensity, and Ogata's modified thinning. Both condition on everything
already simulated upstream, so the segments are visited in the network's
topological order.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import BoundViolation, NonfiniteIntensity, RootSolveFailure
from .models import IntensityModel, SegmentIntensity
from .network import Network
from .patterns import MarkedPointPattern, PointPattern

ALGORITHMS = ("inverse", "ogata")
MAX_ROOT_ITER = 200


@dataclass(frozen=True)
class SimulationConfig:
    """How to simulate.

    ``tolerance`` is relative: the inverse method locates each point to
    within ``tolerance * segment length``.
    """

    algorithm: str = "inverse"
    seed: int = 0
    tolerance: float = 1e-10

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"algorithm must be one of {ALGORITHMS}, got {self.algorithm!r}")
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")


def make_rng(seed: int) -> np.random.Generator:
    """Counter-based generator (Philox) for a 64-bit seed."""
    return np.random.Generator(np.random.Philox(int(seed) % 2**64))


class StepResult(NamedTuple):
    kind: str              # "accept", "advance" or "exhausted"
    offset: float | None


def inverse_step(view: SegmentIntensity, target: float, start: float = 0.0,
                 tol: float | None = None) -> float | None:
    """Offset where the integrated intensity reaches ``target``, or None past the segment end.

    The integrated intensity must be nondecreasing; ``start`` is an offset
    where it is known to be at most ``target``. The root is bracketed and
    refined by Newton steps whenever the intensity is large enough to divide by.
    """
    length = view.length
    if tol is None:
        tol = 1e-10 * length
    end_val = view.integrated(length)
    if not math.isfinite(end_val):
        raise NonfiniteIntensity(f"integrated intensity at segment end is {end_val}")
    if end_val < target:
        return None
    lo, hi = start, length
    ftol = 1e-13 * max(1.0, abs(target))
    x = lo
    lam = view.intensity(x)
    fx = view.integrated(x) - target
    for _ in range(MAX_ROOT_ITER):
        if abs(fx) <= ftol:
            return x
        if fx > 0:
            hi = x
        else:
            lo = x
        if hi - lo <= tol:
            return hi
        if lam > 1e-12 and math.isfinite(lam):
            nx = x - fx / lam
            if not (lo < nx < hi):
                nx = 0.5 * (lo + hi)
        else:
            nx = 0.5 * (lo + hi)
        x = nx
        lam = view.intensity(x)
        fx = view.integrated(x) - target
        if not math.isfinite(fx):
            raise NonfiniteIntensity(f"integrated intensity not finite at offset {x}")
    raise RootSolveFailure(f"no root within {tol} after {MAX_ROOT_ITER} iterations")


def ogata_step(view: SegmentIntensity, t: float, rng: np.random.Generator) -> StepResult:
    """One pass of the thinning loop from offset ``t``."""
    M, reach = view.bounds(t)
    if not (math.isfinite(M) and M >= 0):
        raise NonfiniteIntensity(f"thinning bound {M} at offset {t}")
    T = rng.exponential(1.0 / M) if M > 0 else math.inf
    U = rng.random()
    if t + T > view.length:
        return StepResult("exhausted", None)
    if T > reach:
        return StepResult("advance", t + reach)
    cand = t + T
    if cand <= t:
        raise NonfiniteIntensity(f"bound {M} too large to move past offset {t}; the intensity is exploding")
    lam = view.intensity(cand)
    if not math.isfinite(lam):
        raise NonfiniteIntensity(f"intensity {lam} at offset {cand}")
    if lam > M * (1.0 + 1e-9) + 1e-300:
        raise BoundViolation(f"intensity {lam} exceeds bound {M} at offset {cand}")
    if U > lam / M:
        return StepResult("advance", cand)
    return StepResult("accept", cand)


def _draw_mark(view, t, rng) -> int:
    p = view.mark_distribution(t)
    cdf = np.cumsum(p)
    return int(min(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"), len(p) - 1)) + 1


def _simulate_segment(view: SegmentIntensity, rng, algorithm: str, tol: float, marked: bool):
    length = view.length
    if algorithm == "inverse":
        target, last = 0.0, 0.0
        while True:
            target += rng.exponential()
            t = inverse_step(view, target, last, tol * length)
            if t is None or t >= length:
                break
            if view.points and t <= view.points[-1]:
                raise NonfiniteIntensity(f"points collide at offset {t}; the intensity is exploding")
            view.add_point(t, _draw_mark(view, t, rng) if marked else None)
            last = t
    else:
        t = 0.0
        while True:
            step = ogata_step(view, t, rng)
            if step.kind == "exhausted":
                break
            t = step.offset
            if step.kind == "accept":
                if view.points and t <= view.points[-1]:
                    raise NonfiniteIntensity(f"points collide at offset {t}; the intensity is exploding")
                view.add_point(t, _draw_mark(view, t, rng) if marked else None)
    return view.points, view.point_marks


def simulate_with_rng(model: IntensityModel, network: Network, rng: np.random.Generator,
                      algorithm: str = "inverse", tolerance: float = 1e-10) -> PointPattern:
    """Simulate ``model`` on ``network`` drawing from ``rng``."""
    if algorithm not in ALGORITHMS:
        raise ValueError(f"algorithm must be one of {ALGORITHMS}, got {algorithm!r}")
    model.check(network)
    marked = model.marked
    n_marks = getattr(model, "n_marks", None)
    segs, offs, marks = [], [], []
    for sid in network.order:
        if marked:
            history = MarkedPointPattern(network, segs, offs, marks, n_marks)
        else:
            history = PointPattern(network, segs, offs)
        view = model.segment(network, sid, history, include_own=False)
        pts, mks = _simulate_segment(view, rng, algorithm, tolerance, marked)
        segs.extend([sid] * len(pts))
        offs.extend(pts)
        marks.extend(mks)
    if marked:
        return MarkedPointPattern(network, segs, offs, marks, n_marks)
    return PointPattern(network, segs, offs)


def simulate(model: IntensityModel, network: Network,
             cfg: SimulationConfig = SimulationConfig()) -> PointPattern:
    """Simulate one pattern; identical ``cfg`` gives an identical pattern."""
    return simulate_with_rng(model, network, make_rng(cfg.seed), cfg.algorithm, cfg.tolerance)


def simulate_marked(model: IntensityModel, network: Network,
                    cfg: SimulationConfig = SimulationConfig()) -> MarkedPointPattern:
    if not model.marked:
        raise ValueError("simulate_marked needs a model with a mark distribution")
    return simulate(model, network, cfg)


def _one(args):
    model, network, cfg = args
    return simulate(model, network, cfg)


def simulate_replicates(model: IntensityModel, network: Network, cfg: SimulationConfig,
                        replicates: int, jobs: int = 1) -> list[PointPattern]:
    """Replicate ``r`` uses seed ``cfg.seed + r``; results do not depend on ``jobs``."""
    cfgs = [SimulationConfig(cfg.algorithm, cfg.seed + r, cfg.tolerance) for r in range(replicates)]
    tasks = [(model, network, c) for c in cfgs]
    if jobs > 1 and replicates > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_one, tasks))
    return [_one(t) for t in tasks]
