"""Conditional intensity models on directed acyclic linear networks.

Each model builds, for one segment at a time, a :class:`SegmentIntensity`
holding everything that the points upstream of the segment contribute. The
view then evaluates the conditional intensity and its integral along the
segment as a function of the offset, taking into account only the points on
the segment itself that lie strictly before the evaluation offset. The same
views drive simulation (points are appended as they are generated), the
likelihood and the residual transform.
"""
from __future__ import annotations

import bisect
import math
from abc import ABC, abstractmethod
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy import integrate, special

from .errors import ModelError, NegativeRate, NoRootDesignated, RootCannotReach, UnknownMark
from .network import Network, NetworkLocation
from .patterns import MarkedPointPattern, PointPattern

# kernel tail mass ignored when enumerating paths for the modified Hawkes model
PATH_TAIL_MASS = 1e-12
# absolute tolerance of the non-linear Hawkes quadrature, per segment
NONLINEAR_QUAD_TOL = 1e-10


class ExponentialKernel:
    """Exponential offspring density ``kappa * exp(-kappa * d)``."""

    decreasing = True

    def __init__(self, kappa: float):
        if not kappa > 0:
            raise ModelError(f"kernel rate must be positive, got {kappa}")
        self.kappa = float(kappa)

    def __repr__(self):
        return f"ExponentialKernel({self.kappa:g})"

    def density(self, d):
        return self.kappa * np.exp(-self.kappa * np.asarray(d, dtype=float))

    def cdf(self, d):
        return -np.expm1(-self.kappa * np.asarray(d, dtype=float))

    def survival(self, d):
        return np.exp(-self.kappa * np.asarray(d, dtype=float))

    def cutoff(self, tail_mass: float = PATH_TAIL_MASS) -> float:
        """Distance beyond which the kernel holds less than ``tail_mass``."""
        return -math.log(tail_mass) / self.kappa


# ---------------------------------------------------------------------------
# segment views


class SegmentIntensity(ABC):
    """Conditional intensity along one segment given the upstream history."""

    def __init__(self, length: float):
        self.length = float(length)
        self.points: list[float] = []
        self.point_marks: list[int] = []

    @abstractmethod
    def intensity(self, t: float) -> float:
        """Intensity at offset ``t`` given the segment's points strictly before ``t``."""

    @abstractmethod
    def integrated(self, t: float) -> float:
        """Integral of the intensity from the tail of the segment to offset ``t``."""

    @abstractmethod
    def bounds(self, t: float) -> tuple[float, float]:
        """``(M, L)`` with ``M`` dominating the intensity on ``[t, t + L]`` absent new points."""

    def add_point(self, t: float, mark: int | None = None):
        if self.points and t <= self.points[-1]:
            raise ModelError("points must be added in increasing offset order")
        self.points.append(float(t))
        if mark is not None:
            self.point_marks.append(int(mark))

    def add_points(self, offsets, marks=None):
        """Add increasing ``offsets`` in one call; views with running state add them one by one."""
        for i, t in enumerate(offsets):
            self.add_point(t, None if marks is None else marks[i])

    def point_intensities(self) -> np.ndarray:
        return np.array([self.intensity(t) for t in self.points])

    def point_integrated(self) -> np.ndarray:
        return np.array([self.integrated(t) for t in self.points])


class _ConstantView(SegmentIntensity):
    def __init__(self, length, rate):
        super().__init__(length)
        self.rate = rate

    def intensity(self, t):
        return self.rate

    def integrated(self, t):
        return self.rate * t

    def bounds(self, t):
        return self.rate, self.length - t

    def add_points(self, offsets, marks=None):
        offsets = np.asarray(offsets, dtype=float)
        if len(offsets) == 0:
            return
        if np.any(np.diff(offsets) <= 0) or (self.points and offsets[0] <= self.points[-1]):
            raise ModelError("points must be added in increasing offset order")
        self.points.extend(offsets.tolist())
        if marks is not None:
            self.point_marks.extend(int(m) for m in marks)

    def point_intensities(self):
        return np.full(len(self.points), self.rate)

    def point_integrated(self):
        return self.rate * np.asarray(self.points)


class _FunctionView(SegmentIntensity):
    def __init__(self, length, sid, model):
        super().__init__(length)
        self.sid = sid
        self.model = model

    def intensity(self, t):
        v = float(self.model.rate(self.sid, t))
        if v < 0:
            raise NegativeRate(f"rate {v} < 0 at offset {t} on segment {self.sid}")
        return v

    def integrated(self, t):
        if self.model.integrated_rate is not None:
            return float(self.model.integrated_rate(self.sid, t))
        if t <= 0:
            return 0.0
        val, _ = integrate.quad(self.intensity, 0.0, t, epsabs=1e-13, epsrel=1e-12, limit=200)
        return val

    def bounds(self, t):
        if self.model.bound is not None:
            b = self.model.bound
            return (float(b(self.sid, t, self.length)) if callable(b) else float(b)), self.length - t
        grid = np.linspace(t, self.length, 257)
        top = max(self.intensity(s) for s in grid)
        return 1.05 * top + 1e-12, self.length - t


class _Excitation:
    """Kernel sum ``sum_paths w * gamma(d)`` from upstream points plus own earlier points."""

    def __init__(self, kernel, up_len: np.ndarray, up_w: np.ndarray | None, points: list[float]):
        self.kernel = kernel
        self.points = points
        self._exp = isinstance(kernel, ExponentialKernel)
        if self._exp:
            k = kernel.kappa
            s = np.exp(-k * up_len)
            if up_w is not None:
                s = s * up_w
            self.up_surv = float(s.sum())        # sum of w * survival(a)
            self.up_dens = k * self.up_surv      # sum of w * density(a)
            self._state_n = 0
            self._state = 0.0                    # sum_j exp(-k (t_last - t_j))
        else:
            self.up_len = up_len
            self.up_w = np.ones_like(up_len) if up_w is None else up_w

    def _sync(self):
        # bring the recursion state up to date with appended points
        pts = self.points
        k = self.kernel.kappa
        while self._state_n < len(pts):
            n = self._state_n
            if n:
                self._state *= math.exp(-k * (pts[n] - pts[n - 1]))
            self._state += 1.0
            self._state_n += 1

    def value(self, t: float, inclusive: bool = False) -> float:
        pts = self.points
        cut = bisect.bisect_right(pts, t) if inclusive else bisect.bisect_left(pts, t)
        if self._exp:
            k = self.kernel.kappa
            out = self.up_dens * math.exp(-k * t)
            if cut == 0:
                return out
            if cut == len(pts):
                self._sync()
                return out + k * self._state * math.exp(-k * (t - pts[-1]))
            before = np.asarray(pts[:cut])
            return out + k * float(np.exp(-k * (t - before)).sum())
        out = float((self.up_w * self.kernel.density(self.up_len + t)).sum())
        if cut:
            out += float(self.kernel.density(t - np.asarray(pts[:cut])).sum())
        return out

    def integral(self, t: float) -> float:
        pts = self.points
        cut = bisect.bisect_left(pts, t)
        if self._exp:
            k = self.kernel.kappa
            out = -self.up_surv * math.expm1(-k * t)
            if cut == 0:
                return out
            if cut == len(pts):
                self._sync()
                return out + cut - self._state * math.exp(-k * (t - pts[-1]))
            before = np.asarray(pts[:cut])
            return out + float((-np.expm1(-k * (t - before))).sum())
        surv = self.kernel.survival
        out = float((self.up_w * (surv(self.up_len) - surv(self.up_len + t))).sum())
        if cut:
            out += float(self.kernel.cdf(t - np.asarray(pts[:cut])).sum())
        return out

    def frozen(self, a: float):
        """Vectorised excitation on ``[a, next point]``, counting own points up to ``a``."""
        before = np.asarray(self.points[:bisect.bisect_right(self.points, a)])
        dens = self.kernel.density

        def f(s):
            s = np.asarray(s, dtype=float)
            out = (self.up_w * dens(self.up_len + s[..., None])).sum(axis=-1)
            if len(before):
                out = out + dens(s[..., None] - before).sum(axis=-1)
            return out
        return f

    def at_points(self) -> tuple[np.ndarray, np.ndarray]:
        """Excitation and its integral at every own point, each excluding itself."""
        pts = np.asarray(self.points)
        n = len(pts)
        if self._exp:
            k = self.kernel.kappa
            decay = np.exp(-k * np.diff(pts)) if n > 1 else np.empty(0)
            r = np.zeros(n)
            acc = 0.0
            for j in range(1, n):
                acc = (acc + 1.0) * decay[j - 1]
                r[j] = acc
            val = self.up_dens * np.exp(-k * pts) + k * r
            integ = -self.up_surv * np.expm1(-k * pts) + np.arange(n) - r
            return val, integ
        val = np.array([self.value(t) for t in pts])
        integ = np.array([self.integral(t) for t in pts])
        return val, integ


class _HawkesView(SegmentIntensity):
    def __init__(self, length, mu, alpha, kernel, up_len, up_w=None):
        super().__init__(length)
        self.mu, self.alpha = mu, alpha
        self.exc = _Excitation(kernel, up_len, up_w, self.points)

    def intensity(self, t):
        return self.mu + self.alpha * self.exc.value(t)

    def integrated(self, t):
        return self.mu * t + self.alpha * self.exc.integral(t)

    def bounds(self, t):
        if not self.exc.kernel.decreasing:
            raise ModelError("thinning bounds need a nonincreasing kernel")
        return self.mu + self.alpha * self.exc.value(t, inclusive=True), self.length - t

    def point_intensities(self):
        val, _ = self.exc.at_points()
        return self.mu + self.alpha * val

    def point_integrated(self):
        _, integ = self.exc.at_points()
        return self.mu * np.asarray(self.points) + self.alpha * integ


_EPS = float(np.finfo(float).eps)


def adaptive_simpson(f, a: float, b: float, tol: float, max_level: int = 40) -> float:
    """Adaptive Simpson quadrature of a vectorised ``f`` over ``[a, b]``.

    Intervals are refined breadth first: every interval whose Richardson
    error estimate exceeds its share of ``tol`` is halved, and all new
    nodes of one level are evaluated in a single call to ``f``.
    """
    if b <= a:
        return 0.0
    fa, fm, fb = f(np.array([a, 0.5 * (a + b), b]))
    A, B = np.array([a]), np.array([b])
    FA, FM, FB = np.array([fa]), np.array([fm]), np.array([fb])
    W = (B - A) / 6.0 * (FA + 4.0 * FM + FB)
    T = np.array([tol])
    total = 0.0
    for _ in range(max_level):
        M = 0.5 * (A + B)
        fq = f(np.concatenate([0.5 * (A + M), 0.5 * (M + B)]))
        FLM, FRM = fq[:len(A)], fq[len(A):]
        left = (M - A) / 6.0 * (FA + 4.0 * FLM + FM)
        right = (B - M) / 6.0 * (FM + 4.0 * FRM + FB)
        delta = left + right - W
        # stop once the requested accuracy is below what rounding allows
        floor = 64.0 * _EPS * (np.abs(left) + np.abs(right))
        done = np.abs(delta) <= 15.0 * np.maximum(T, floor)
        est = left + right + delta / 15.0
        total += float(est[done].sum())
        if done.all():
            return total
        k = ~done
        A, M, B = A[k], M[k], B[k]
        FA, FLM, FM, FRM, FB = FA[k], FLM[k], FM[k], FRM[k], FB[k]
        A, B = np.concatenate([A, M]), np.concatenate([M, B])
        FA, FM, FB = np.concatenate([FA, FM]), np.concatenate([FLM, FRM]), np.concatenate([FM, FB])
        W = np.concatenate([left[k], right[k]])
        T = np.concatenate([T[k], T[k]]) * 0.5
    return total + float((W).sum())


def _safe_exp(x):
    # an exploding intensity surfaces as inf rather than OverflowError
    return math.exp(x) if x < 709.0 else math.inf


def _exp_decay_integral(mu: float, c: float, k: float, h: float) -> float:
    """``int_0^h exp(mu + c exp(-k s)) ds`` through the exponential integral."""
    if c == 0.0:
        return math.exp(mu) * h
    if abs(c) <= 1.0:
        # Ei(c) - Ei(c q) = k h + sum_j c^j (1 - q^j) / (j j!), with q = exp(-k h)
        tot, term = k * h, 1.0
        for j in range(1, 60):
            term *= c / j
            add = term * -math.expm1(-j * k * h) / j
            tot += add
            if abs(add) <= 1e-17 * abs(tot):
                break
        return math.exp(mu) / k * tot
    with np.errstate(over="ignore"):
        val = math.exp(mu) / k * (special.expi(c) - special.expi(c * math.exp(-k * h)))
    return float(val) if math.isfinite(val) else math.inf


class _NonlinearView(SegmentIntensity):
    def __init__(self, length, mu, alpha, kernel, up_len, quadrature=False):
        super().__init__(length)
        self.mu, self.alpha = mu, alpha
        self.quadrature = quadrature or not isinstance(kernel, ExponentialKernel)
        self.exc = _Excitation(kernel, up_len, None, self.points)
        self._cum = [0.0]   # integral up to each knot: 0, p_1, p_2, ...

    def intensity(self, t):
        return _safe_exp(self.mu + self.alpha * self.exc.value(t))

    def _piece(self, a, b):
        if b <= a:
            return 0.0
        tol = NONLINEAR_QUAD_TOL * (b - a) / self.length
        mu, al = self.mu, self.alpha
        if self.exc._exp:
            k = self.exc.kernel.kappa
            s0 = self.exc.value(a, inclusive=True)
            if not self.quadrature:
                return _exp_decay_integral(mu, al * s0, k, b - a)
            f = lambda s: np.exp(np.minimum(mu + al * s0 * np.exp(-k * (s - a)), 709.0))  # noqa: E731
        else:
            # right limit at a: the point sitting at a already counts there
            fixed = self.exc.frozen(a)
            f = lambda s: np.exp(np.minimum(mu + al * fixed(s), 709.0))  # noqa: E731
        val = adaptive_simpson(f, a, b, tol)
        return val if val < 1e300 else math.inf

    def integrated(self, t):
        pts = self.points
        cut = bisect.bisect_left(pts, t)
        while len(self._cum) <= cut:
            j = len(self._cum)
            lo = pts[j - 2] if j >= 2 else 0.0
            self._cum.append(self._cum[-1] + self._piece(lo, pts[j - 1]))
        lo = pts[cut - 1] if cut else 0.0
        return self._cum[cut] + self._piece(lo, t)

    def bounds(self, t):
        if not self.exc.kernel.decreasing:
            raise ModelError("thinning bounds need a nonincreasing kernel")
        if self.alpha >= 0:
            return _safe_exp(self.mu + self.alpha * self.exc.value(t, inclusive=True)), self.length - t
        return math.exp(self.mu), self.length - t

    def point_intensities(self):
        val, _ = self.exc.at_points()
        return np.exp(self.mu + self.alpha * val)


class _SelfCorrectingView(SegmentIntensity):
    def __init__(self, length, mu, alpha, d0, n0):
        super().__init__(length)
        self.mu, self.alpha = mu, alpha
        self.d0, self.n0 = d0, n0
        self._cum = [0.0]

    def _log_level(self, t, k):
        return self.mu * (self.d0 + t) - self.alpha * (self.n0 + k)

    def intensity(self, t):
        return math.exp(self._log_level(t, bisect.bisect_left(self.points, t)))

    def _piece(self, a, b, k):
        if b <= a:
            return 0.0
        # exp(level at a) * (exp(mu (b - a)) - 1) / mu
        return math.exp(self._log_level(a, k)) * math.expm1(self.mu * (b - a)) / self.mu

    def integrated(self, t):
        pts = self.points
        cut = bisect.bisect_left(pts, t)
        while len(self._cum) <= cut:
            j = len(self._cum)
            lo = pts[j - 2] if j >= 2 else 0.0
            self._cum.append(self._cum[-1] + self._piece(lo, pts[j - 1], j - 1))
        lo = pts[cut - 1] if cut else 0.0
        return self._cum[cut] + self._piece(lo, t, cut)

    def bounds(self, t):
        k = bisect.bisect_right(self.points, t)
        return math.exp(self._log_level(self.length, k)), self.length - t

    def point_intensities(self):
        pts = np.asarray(self.points)
        return np.exp(self.mu * (self.d0 + pts) - self.alpha * (self.n0 + np.arange(len(pts))))


class _MultitypeView(SegmentIntensity):
    """Per-mark intensities; ``intensity`` is the ground intensity."""

    def __init__(self, length, mu, alpha, kappa, up_len, up_marks):
        super().__init__(length)
        self.mu, self.alpha, self.kappa = mu, alpha, kappa
        # upstream survival sums per (source mark, target mark)
        K = len(mu)
        self.up_surv = np.zeros((K, K))
        for m in range(K):
            sel = up_len[up_marks == m + 1]
            if len(sel):
                self.up_surv[m] = np.exp(-np.outer(sel, kappa[m])).sum(axis=0)
        self.ak = alpha * kappa

    def mark_intensities(self, t, inclusive=False):
        pts = self.points
        cut = bisect.bisect_right(pts, t) if inclusive else bisect.bisect_left(pts, t)
        out = self.mu + (self.ak * self.up_surv * np.exp(-self.kappa * t)).sum(axis=0)
        if cut:
            d = t - np.asarray(pts[:cut])
            src = np.asarray(self.point_marks[:cut]) - 1
            out = out + (self.ak[src] * np.exp(-self.kappa[src] * d[:, None])).sum(axis=0)
        return out

    def mark_integrated(self, t):
        pts = self.points
        cut = bisect.bisect_left(pts, t)
        out = self.mu * t - (self.alpha * self.up_surv * np.expm1(-self.kappa * t)).sum(axis=0)
        if cut:
            d = t - np.asarray(pts[:cut])
            src = np.asarray(self.point_marks[:cut]) - 1
            out = out - (self.alpha[src] * np.expm1(-self.kappa[src] * d[:, None])).sum(axis=0)
        return out

    def mark_distribution(self, t, inclusive=False):
        lam = self.mark_intensities(t, inclusive)
        return lam / lam.sum()

    def intensity(self, t):
        return float(self.mark_intensities(t).sum())

    def integrated(self, t):
        return float(self.mark_integrated(t).sum())

    def bounds(self, t):
        return float(self.mark_intensities(t, inclusive=True).sum()), self.length - t

    def add_point(self, t, mark=None):
        if mark is None:
            raise ModelError("multitype views need a mark for every point")
        super().add_point(t, mark)

    def point_mark_intensities(self) -> np.ndarray:
        """Intensity of each own point's mark at that point."""
        return np.array([self.mark_intensities(t)[m - 1] for t, m in zip(self.points, self.point_marks)])

    def point_mark_integrated(self) -> np.ndarray:
        return np.array([self.mark_integrated(t)[m - 1] for t, m in zip(self.points, self.point_marks)])


# ---------------------------------------------------------------------------
# models


class IntensityModel(ABC):
    """A conditional intensity specification with a real parameter vector.

    Subclasses set ``family``, ``param_names`` and ``positive`` (which
    parameters are constrained to be positive) and implement
    :meth:`segment`.
    """

    family: str = ""
    marked = False
    param_names: tuple[str, ...] = ()
    positive: tuple[bool, ...] = ()

    @abstractmethod
    def segment(self, network: Network, sid: int, history: PointPattern,
                include_own: bool = True) -> SegmentIntensity:
        """View of the intensity along ``sid`` given ``history``.

        With ``include_own`` the history's points on ``sid`` itself are
        loaded into the view.
        """

    def check(self, network: Network):
        """Raise if the model cannot be used on ``network``."""

    def _load_own(self, view, network, sid, history, include_own):
        if include_own:
            ids = history.on_segment(sid)
            idx = slice(ids.start, ids.stop)
            view.add_points(history.offsets[idx], None if history.marks is None else history.marks[idx])
        return view

    def intensity(self, network: Network, u: NetworkLocation, history: PointPattern) -> float:
        network.check_location(u)
        return self.segment(network, u.segment, history).intensity(u.offset)

    def integrated(self, network: Network, sid: int, t: float, history: PointPattern) -> float:
        network.check_location(NetworkLocation(sid, t))
        return self.segment(network, sid, history).integrated(t)

    def thinning_bounds(self, network: Network, sid: int, t: float,
                        history: PointPattern) -> tuple[float, float]:
        """Dominating intensity bound and its range of validity from offset ``t``.

        Only the history's points on ``sid`` at offsets up to ``t`` count, as
        in a simulation that has reached ``t``.
        """
        network.check_location(NetworkLocation(sid, t))
        view = self.segment(network, sid, history, include_own=False)
        for i in history.on_segment(sid):
            if history.offsets[i] <= t:
                view.add_point(float(history.offsets[i]),
                               None if history.marks is None else int(history.marks[i]))
        return view.bounds(t)

    def params(self) -> dict:
        return {name: getattr(self, name) for name in self.param_names}

    def to_vector(self) -> np.ndarray:
        return np.concatenate([np.ravel(np.asarray(getattr(self, n), dtype=float))
                               for n in self.param_names])

    def positive_mask(self) -> np.ndarray:
        return np.concatenate([np.full(np.size(getattr(self, n)), pos)
                               for n, pos in zip(self.param_names, self.positive)])

    def vector_labels(self) -> list[str]:
        labels = []
        for n in self.param_names:
            v = np.asarray(getattr(self, n))
            if v.ndim == 0:
                labels.append(n)
            else:
                labels.extend(f"{n}[{','.join(str(i + 1) for i in idx)}]" for idx in np.ndindex(v.shape))
        return labels

    def with_vector(self, vec: Sequence[float]) -> "IntensityModel":
        vec = np.asarray(vec, dtype=float)
        kw, pos = {}, 0
        for n in self.param_names:
            cur = np.asarray(getattr(self, n), dtype=float)
            size = cur.size
            chunk = vec[pos:pos + size]
            kw[n] = float(chunk[0]) if cur.ndim == 0 else chunk.reshape(cur.shape)
            pos += size
        return self.replace(**kw)

    def replace(self, **kw) -> "IntensityModel":
        current = self.params()
        current.update(kw)
        return type(self)(**current, **self._extra())

    def _extra(self) -> dict:
        return {}

    def to_spec(self) -> dict:
        def plain(v):
            return v.tolist() if isinstance(v, np.ndarray) else v
        return {"model": self.family, "params": {k: plain(v) for k, v in self.params().items()}}

    def __repr__(self):
        inner = ", ".join(f"{k}={v!r}" for k, v in self.params().items())
        return f"{type(self).__name__}({inner})"


class PoissonModel(IntensityModel):
    """Homogeneous Poisson process with constant ``rate`` per unit length."""

    family = "poisson"
    param_names = ("rate",)
    positive = (True,)

    def __init__(self, rate: float):
        if not rate >= 0:
            raise NegativeRate(f"rate must be nonnegative, got {rate}")
        self.rate = float(rate)

    def segment(self, network, sid, history, include_own=True):
        view = _ConstantView(network.length(sid), self.rate)
        return self._load_own(view, network, sid, history, include_own)


class InhomogeneousPoissonModel(IntensityModel):
    """Poisson process with a deterministic rate function ``rate(segment_id, offset)``.

    ``bound`` (a constant, or a callable ``bound(segment_id, t0, t1)``
    dominating the rate on ``[t0, t1]``) is used by thinning; without it the
    bound is taken from a grid with 5% headroom. ``integrated_rate`` may
    supply the integral in closed form; otherwise adaptive quadrature is used.
    """

    family = "inhomogeneous_poisson"

    def __init__(self, rate: Callable[[int, float], float], bound=None,
                 integrated_rate: Callable[[int, float], float] | None = None):
        self.rate = rate
        self.bound = bound
        self.integrated_rate = integrated_rate

    def segment(self, network, sid, history, include_own=True):
        view = _FunctionView(network.length(sid), sid, self)
        return self._load_own(view, network, sid, history, include_own)

    def params(self):
        return {}

    def to_spec(self):
        raise ModelError("inhomogeneous Poisson models cannot be serialised")

    def __repr__(self):
        return f"InhomogeneousPoissonModel({self.rate!r})"


class HawkesModel(IntensityModel):
    """Self-exciting process; only the shortest directed distance from each point counts.

    ``kernel`` defaults to the exponential density with rate ``kappa``; any
    object with ``density``, ``cdf``, ``survival`` and a ``decreasing`` flag
    may be passed instead.
    """

    family = "hawkes"
    param_names = ("mu", "alpha", "kappa")
    positive = (True, True, True)

    def __init__(self, mu: float, alpha: float, kappa: float | None = None, kernel=None):
        if not mu > 0 or not alpha > 0:
            raise ModelError(f"mu and alpha must be positive, got {mu}, {alpha}")
        if kernel is None:
            if kappa is None:
                raise ModelError("give kappa or a kernel")
            kernel = ExponentialKernel(kappa)
        self.mu, self.alpha = float(mu), float(alpha)
        self.kappa = getattr(kernel, "kappa", kappa)
        self.kernel = kernel

    def _extra(self):
        return {} if isinstance(self.kernel, ExponentialKernel) else {"kernel": self.kernel}

    def replace(self, **kw):
        if "kappa" in kw and not isinstance(self.kernel, ExponentialKernel):
            raise ModelError("kappa only applies to the exponential kernel")
        return super().replace(**kw)

    def segment(self, network, sid, history, include_own=True):
        _, dist = history.upstream(sid)
        view = _HawkesView(network.length(sid), self.mu, self.alpha, self.kernel, dist)
        return self._load_own(view, network, sid, history, include_own)


class ModifiedHawkesModel(HawkesModel):
    """Hawkes process whose offspring mass is split equally at diverging junctions.

    Every directed path from an upstream point contributes ``gamma(|p|)/n_p``.
    Paths longer than the distance holding all but ``1e-12`` of the kernel
    mass (measured to the tail of the segment) are dropped.
    """

    family = "modified_hawkes"

    def segment(self, network, sid, history, include_own=True):
        cutoff = self.kernel.cutoff() if hasattr(self.kernel, "cutoff") else network.total_length
        _, lens, w = history.upstream_paths(sid, cutoff)
        view = _HawkesView(network.length(sid), self.mu, self.alpha, self.kernel, lens, w)
        return self._load_own(view, network, sid, history, include_own)


class NonlinearHawkesModel(IntensityModel):
    """``exp(mu + alpha * sum gamma(d))``: clustered for alpha > 0, regular for alpha < 0.

    Between consecutive points the integrated intensity is evaluated exactly
    through the exponential integral; ``quadrature=True`` switches to
    adaptive Simpson with absolute tolerance 1e-10 per segment instead.
    """

    family = "nonlinear_hawkes"
    param_names = ("mu", "alpha", "kappa")
    positive = (False, False, True)

    def __init__(self, mu: float, alpha: float, kappa: float, quadrature: bool = False):
        self.mu, self.alpha = float(mu), float(alpha)
        self.kappa = float(kappa)
        self.kernel = ExponentialKernel(kappa)
        self.quadrature = bool(quadrature)

    def _extra(self):
        return {"quadrature": self.quadrature}

    def segment(self, network, sid, history, include_own=True):
        _, dist = history.upstream(sid)
        view = _NonlinearView(network.length(sid), self.mu, self.alpha, self.kernel, dist,
                              self.quadrature)
        return self._load_own(view, network, sid, history, include_own)


class SelfCorrectingModel(IntensityModel):
    """Intensity growing with distance from the root and dropping at each point on the way.

    Only points on the realised shortest path from the root count (ties
    between equally short paths go to the smallest segment-id sequence).
    """

    family = "self_correcting"
    param_names = ("mu", "alpha")
    positive = (True, True)

    def __init__(self, mu: float, alpha: float, root: int | None = None):
        if not mu > 0 or not alpha >= 0:
            raise ModelError(f"need mu > 0 and alpha >= 0, got {mu}, {alpha}")
        self.mu, self.alpha = float(mu), float(alpha)
        self.root = root

    def _extra(self):
        return {"root": self.root}

    def _root(self, network):
        root = network.root if self.root is None else self.root
        if root is None:
            raise NoRootDesignated("self-correcting model needs a root vertex")
        return root

    def check(self, network):
        root = self._root(network)
        for sid in network.order:
            network.root_vertex_path(network.segments[sid].tail, root)

    def segment(self, network, sid, history, include_own=True):
        root = self._root(network)
        tail = network.segment(sid).tail
        seq = network.root_vertex_path(tail, root)
        d0 = network.vertex_distance(root, tail)
        n0 = sum(history.count_on(s) for s in seq)
        view = _SelfCorrectingView(network.length(sid), self.mu, self.alpha, d0, n0)
        return self._load_own(view, network, sid, history, include_own)

    def to_spec(self):
        spec = super().to_spec()
        if self.root is not None:
            spec["params"]["root"] = self.root
        return spec


class MultitypeHawkesModel(IntensityModel):
    """Hawkes process with ``K`` point types.

    ``alpha[i, j]`` and ``kappa[i, j]`` govern how a type ``i + 1`` point
    excites type ``j + 1`` points downstream.
    """

    family = "multitype_hawkes"
    marked = True
    param_names = ("mu", "alpha", "kappa")
    positive = (True, True, True)

    def __init__(self, mu: Sequence[float], alpha, kappa):
        self.mu = np.asarray(mu, dtype=float).reshape(-1)
        K = len(self.mu)
        self.alpha = np.asarray(alpha, dtype=float).reshape(K, K)
        self.kappa = np.asarray(kappa, dtype=float).reshape(K, K)
        if (self.mu <= 0).any() or (self.alpha < 0).any() or (self.kappa <= 0).any():
            raise ModelError("multitype Hawkes needs mu > 0, alpha >= 0, kappa > 0")

    @property
    def n_marks(self) -> int:
        return len(self.mu)

    def segment(self, network, sid, history, include_own=True):
        ids, dist = history.upstream(sid)
        marks = history.marks[ids] if history.marks is not None else np.ones(len(ids), dtype=np.int64)
        if len(marks) and marks.max() > self.n_marks:
            raise UnknownMark(f"history mark {marks.max()} outside 1..{self.n_marks}")
        view = _MultitypeView(network.length(sid), self.mu, self.alpha, self.kappa, dist, marks)
        if include_own:
            for i in history.on_segment(sid):
                view.add_point(float(history.offsets[i]),
                               1 if history.marks is None else int(history.marks[i]))
        return view

    def _check_mark(self, m):
        if not 1 <= m <= self.n_marks:
            raise UnknownMark(f"mark {m} outside 1..{self.n_marks}")

    def mark_intensity(self, network, u, m, history):
        self._check_mark(m)
        network.check_location(u)
        return float(self.segment(network, u.segment, history).mark_intensities(u.offset)[m - 1])

    def ground_intensity(self, network, u, history):
        return self.intensity(network, u, history)

    def mark_distribution(self, network, u, history):
        network.check_location(u)
        return self.segment(network, u.segment, history).mark_distribution(u.offset)

    def mark_integrated(self, network, sid, t, m, history):
        self._check_mark(m)
        network.check_location(NetworkLocation(sid, t))
        return float(self.segment(network, sid, history).mark_integrated(t)[m - 1])


MODEL_CLASSES = {
    cls.family: cls
    for cls in (PoissonModel, HawkesModel, ModifiedHawkesModel, NonlinearHawkesModel,
                SelfCorrectingModel, MultitypeHawkesModel)
}


def model_from_spec(spec: Mapping) -> IntensityModel:
    """Build a model from ``{"model": family, "params": {...}}``."""
    extra = set(spec) - {"model", "params"}
    if extra:
        raise ModelError(f"unknown keys in model spec: {sorted(extra)}")
    family = spec.get("model")
    if family not in MODEL_CLASSES:
        raise ModelError(f"unknown model family {family!r}; expected one of {sorted(MODEL_CLASSES)}")
    cls = MODEL_CLASSES[family]
    params = dict(spec.get("params", {}))
    allowed = set(cls.param_names) | ({"root"} if cls is SelfCorrectingModel else set())
    unknown = set(params) - allowed
    missing = set(cls.param_names) - set(params)
    if unknown or missing:
        raise ModelError(f"{family} params: unknown {sorted(unknown)}, missing {sorted(missing)}")
    return cls(**params)
