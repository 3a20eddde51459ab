"""Residual analysis: map a pattern through its fitted integrated intensity.

Under the true model the transformed points on each segment form a
unit-rate Poisson process on ``(0, Lambda(segment end))``. The residual
network keeps the topology and replaces each segment length by that end
value, so interevent distances can be compared with the unit-rate law,
either directly (Kolmogorov-Smirnov against Exp(1)) or by a Monte Carlo
rank envelope.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .errors import EmptySample, ModelError, ZeroLengthSegment
from .models import IntensityModel
from .network import Network
from .patterns import MarkedPointPattern, PointPattern


@dataclass
class ResidualProcess:
    """Transformed pattern on the residual network."""

    network: Network
    pattern: PointPattern
    zero_length: tuple[int, ...] = ()

    def interevent(self) -> tuple[np.ndarray, np.ndarray]:
        """Interevent distances on the residual network and their crossing flags."""
        _, _, dist, cross = self.pattern.interevent_arrays()
        return dist, cross

    @property
    def total_length(self) -> float:
        return self.network.total_length


def _build(network, lengths, segs, offs):
    zero = tuple(sid for sid, v in lengths.items() if v == 0.0)
    for sid in zero:
        if np.any(np.asarray(segs) == sid):
            raise ZeroLengthSegment(f"segment {sid} has zero integrated intensity but holds points")
    if zero:
        warnings.warn(f"residual segments {list(zero)} have zero length", RuntimeWarning, stacklevel=3)
    net = network.with_lengths(lengths)
    return ResidualProcess(net, PointPattern(net, segs, offs), zero)


def residual_transform(model: IntensityModel, network: Network, pattern: PointPattern) -> ResidualProcess:
    """Residual process of ``pattern`` under ``model`` (usually the fitted model).

    Raises
    ------
    ZeroLengthSegment
        If a segment with points has zero integrated intensity.
    """
    if model.marked:
        raise ModelError("use residual_transform_marked for marked models")
    model.check(network)
    lengths, segs, offs = {}, [], []
    for sid in network.order:
        view = model.segment(network, sid, pattern, include_own=True)
        lengths[sid] = float(view.integrated(view.length))
        if view.points:
            segs.extend([sid] * len(view.points))
            offs.extend(view.point_integrated())
    return _build(network, lengths, segs, offs)


def residual_transform_marked(model: IntensityModel, network: Network,
                              pattern: MarkedPointPattern) -> dict[int, ResidualProcess]:
    """One residual process per mark, each built from that mark's own intensity."""
    if not model.marked:
        raise ModelError("residual_transform_marked needs a marked model")
    model.check(network)
    K = model.n_marks
    lengths = {m: {} for m in range(1, K + 1)}
    segs = {m: [] for m in range(1, K + 1)}
    offs = {m: [] for m in range(1, K + 1)}
    for sid in network.order:
        view = model.segment(network, sid, pattern, include_own=True)
        end = view.mark_integrated(view.length)
        for m in range(1, K + 1):
            lengths[m][sid] = float(end[m - 1])
        for t, m in zip(view.points, view.point_marks):
            segs[m].append(sid)
            offs[m].append(float(view.mark_integrated(t)[m - 1]))
    return {m: _build(network, lengths[m], segs[m], offs[m]) for m in range(1, K + 1)}


def ks_exp1(gaps, crossing=None, include_crossing: bool = True) -> tuple[float, float]:
    """One-sample Kolmogorov-Smirnov test of ``gaps`` against Exp(1).

    ``gaps`` is an array of distances (with an optional boolean ``crossing``
    mask) or a sequence of :class:`IntereventRecord`. Gaps whose path
    crosses a junction are dropped when ``include_crossing`` is False.
    """
    gaps = list(gaps) if not isinstance(gaps, np.ndarray) else gaps
    if len(gaps) and hasattr(gaps[0], "distance"):
        crossing = np.array([g.crossing for g in gaps], dtype=bool)
        gaps = np.array([g.distance for g in gaps], dtype=float)
    gaps = np.asarray(gaps, dtype=float)
    if np.any(gaps < 0):
        raise ValueError("gaps must be nonnegative")
    if not include_crossing and crossing is not None:
        gaps = gaps[~np.asarray(crossing, dtype=bool)]
    if len(gaps) == 0:
        raise EmptySample("no interevent distances to test")
    res = stats.kstest(gaps, "expon")
    return float(res.statistic), float(res.pvalue)


def simulate_unit_poisson(network: Network, rng: np.random.Generator) -> PointPattern:
    """Unit-rate Poisson pattern: Poisson counts per segment with uniform offsets."""
    segs, offs = [], []
    for sid in network.order:
        L = network.length(sid)
        n = rng.poisson(L) if L > 0 else 0
        if n:
            segs.extend([sid] * n)
            offs.extend(np.sort(rng.uniform(0.0, L, size=n)))
    return PointPattern(network, segs, offs)


def ecdf_curve(values: np.ndarray, grid: np.ndarray) -> np.ndarray:
    values = np.sort(np.asarray(values, dtype=float))
    if len(values) == 0:
        return np.zeros(len(grid))
    return np.searchsorted(values, grid, side="right") / len(values)


def pointwise_ranks(curves: np.ndarray) -> np.ndarray:
    """Pointwise two-sided ranks of each row of ``curves`` on a common grid.

    The rank of a curve at one grid point is the smaller of its rank from
    below and from above among all curves, ties counted in its favour.
    """
    curves = np.asarray(curves, dtype=float)
    srt = np.sort(curves, axis=0)
    ranks = np.empty_like(curves)
    n = len(curves)
    for j in range(curves.shape[1]):
        col = srt[:, j]
        below = np.searchsorted(col, curves[:, j], side="right")
        above = n - np.searchsorted(col, curves[:, j], side="left")
        ranks[:, j] = np.minimum(below, above)
    return ranks


def extreme_ranks(curves: np.ndarray) -> np.ndarray:
    """Global extreme rank: the minimum pointwise rank of each curve."""
    return pointwise_ranks(curves).min(axis=1)


def extremeness_order(curves: np.ndarray) -> np.ndarray:
    """Integer extremeness of each curve, smaller meaning more extreme.

    Curves are compared by their extreme rank and, among equal extreme
    ranks, by the rest of their sorted pointwise ranks (lexicographically),
    the extreme rank length ordering. Equal integers mean a genuine tie.
    """
    keys = np.sort(pointwise_ranks(curves), axis=1)
    _, idx = np.unique(keys, axis=0, return_inverse=True)
    return idx.reshape(-1)


@dataclass
class EnvelopeResult:
    """Global rank envelope test of the interevent-distance ECDF.

    ``p_liberal`` and ``p_conservative`` bound the p-value of the test that
    orders curves by extreme rank with ties broken by extreme rank length;
    ``rank_p_liberal``/``rank_p_conservative`` are the wider bounds from the
    extreme rank alone. ``lower``/``upper`` enclose the simulated curves
    that are not among the ``level`` fraction of most extreme ones.
    """

    grid: np.ndarray
    observed: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    p_liberal: float
    p_conservative: float
    rank_p_liberal: float
    rank_p_conservative: float
    n_sim: int
    level: float = 0.05
    simulated_mean: np.ndarray = field(default=None, repr=False)

    @property
    def inside(self) -> bool:
        return bool(np.all((self.observed >= self.lower) & (self.observed <= self.upper)))

    def as_dict(self) -> dict:
        return {
            "grid": self.grid.tolist(),
            "observed": self.observed.tolist(),
            "lower": self.lower.tolist(),
            "upper": self.upper.tolist(),
            "simulated_mean": None if self.simulated_mean is None else self.simulated_mean.tolist(),
            "p_liberal": self.p_liberal,
            "p_conservative": self.p_conservative,
            "rank_p_liberal": self.rank_p_liberal,
            "rank_p_conservative": self.rank_p_conservative,
            "n_sim": self.n_sim,
            "level": self.level,
            "inside": self.inside,
        }


def mc_envelope(residual: ResidualProcess, n_sim: int = 99, rng: np.random.Generator | int = 0,
                *, level: float = 0.05, n_grid: int = 100,
                include_crossing: bool = True) -> EnvelopeResult:
    """Global rank envelope test of the interevent-distance ECDF.

    ``n_sim`` unit-rate Poisson patterns are drawn on the residual network;
    the observed ECDF is ranked among the simulated ones on a common grid
    of ``n_grid`` distances from 0 to the largest distance seen.
    """
    if n_sim < 99:
        raise ValueError("the envelope needs at least 99 simulations")
    if isinstance(rng, (int, np.integer)):
        rng = np.random.Generator(np.random.Philox(int(rng)))

    def distances(res_pattern):
        _, _, d, x = res_pattern.interevent_arrays()
        return d if include_crossing else d[~x]

    obs = distances(residual.pattern)
    if len(obs) == 0:
        raise EmptySample("no interevent distances in the residual pattern")
    sims = [distances(simulate_unit_poisson(residual.network, rng)) for _ in range(n_sim)]
    top = max([obs.max()] + [s.max() for s in sims if len(s)])
    grid = np.linspace(0.0, top, n_grid)
    curves = np.vstack([ecdf_curve(obs, grid)] + [ecdf_curve(s, grid) for s in sims])
    total = n_sim + 1
    R = extreme_ranks(curves)
    E = extremeness_order(curves)
    # envelope: simulated curves outside the most extreme `level` fraction
    sim_E = extremeness_order(curves[1:])
    as_extreme = np.array([np.sum(sim_E <= e) for e in sim_E])
    keep = as_extreme > level * n_sim
    kept = curves[1:][keep] if keep.any() else curves[1:]
    return EnvelopeResult(
        grid, curves[0], kept.min(axis=0), kept.max(axis=0),
        float(np.sum(E < E[0]) / total), float(np.sum(E <= E[0]) / total),
        float(np.sum(R < R[0]) / total), float(np.sum(R <= R[0]) / total),
        n_sim, level, curves[1:].mean(axis=0))


def qq_table(residual: ResidualProcess) -> list[tuple[float, float, str]]:
    """Empirical vs Exp(1) quantiles of the residual interevent distances.

    Rows are ``(empirical, theoretical, label)`` with label ``within`` or
    ``across`` depending on whether the gap crosses a junction; theoretical
    quantiles use plotting positions ``(i - 0.5)/n`` within each label.
    """
    dist, cross = residual.interevent()
    rows = []
    for label, sel in (("within", ~cross), ("across", cross)):
        d = np.sort(dist[sel])
        n = len(d)
        if n == 0:
            continue
        q = -np.log1p(-(np.arange(1, n + 1) - 0.5) / n)
        rows.extend((float(a), float(b), label) for a, b in zip(d, q))
    return rows


def within_segment_gaps(residual: ResidualProcess) -> np.ndarray:
    dist, cross = residual.interevent()
    return dist[~cross]

