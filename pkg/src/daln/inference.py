"""Likelihood evaluation and maximum likelihood fitting.

The log-likelihood of a pattern factorises over segments taken in any
order compatible with the network direction: each segment contributes the
log intensities at its points minus the integrated intensity up to its end.
"""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy import optimize

from .errors import DegenerateData, DomainError, ModelError, NonConvergence
from .models import (
    IntensityModel,
    MODEL_CLASSES,
    MultitypeHawkesModel,
    NonlinearHawkesModel,
)
from .network import Network
from .patterns import MarkedPointPattern, PointPattern

log = logging.getLogger(__name__)

MAX_ITER = 2000
SIMPLEX_TOL = 1e-8


def log_likelihood(model: IntensityModel, network: Network, pattern: PointPattern,
                   theta: Sequence[float] | None = None,
                   order: Sequence[int] | None = None) -> float:
    """Log-likelihood of ``pattern`` under ``model``.

    Parameters
    ----------
    theta : optional parameter vector replacing the model's own parameters
        (in the order of ``model.vector_labels()``).
    order : segment accumulation order; defaults to the network's
        topological order. Any order gives the same value.

    Raises
    ------
    DomainError
        If the intensity vanishes (or is not finite) at an observed point.
    """
    if theta is not None:
        model = model.with_vector(theta)
    model.check(network)
    marked = model.marked
    if marked and not isinstance(pattern, MarkedPointPattern):
        raise ModelError("a marked model needs a marked pattern")
    total = 0.0
    for sid in (network.order if order is None else order):
        view = model.segment(network, sid, pattern, include_own=True)
        if view.points:
            lam = view.point_mark_intensities() if marked else view.point_intensities()
            if not np.all(np.isfinite(lam)) or np.any(lam <= 0):
                raise DomainError(f"intensity {lam[~(np.isfinite(lam) & (lam > 0))][0]} "
                                  f"at an observed point on segment {sid}")
            total += float(np.log(lam).sum())
        total -= view.integrated(view.length)
    if not math.isfinite(total):
        raise DomainError(f"log-likelihood is {total}")
    return total


@dataclass
class FitResult:
    """Outcome of a maximum likelihood fit.

    ``estimate`` is the fitted parameter vector with entries named by
    ``labels``; ``model`` is the fitted model itself.
    """

    family: str
    labels: list[str]
    estimate: np.ndarray
    loglik: float
    converged: bool
    n_iter: int
    n_eval: int
    model: IntensityModel
    start_loglik: float = -math.inf
    free: list[str] = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "model": self.family,
            "params": dict(zip(self.labels, map(float, self.estimate))),
            "free": list(self.free),
            "loglik": self.loglik,
            "converged": self.converged,
            "iterations": self.n_iter,
            "evaluations": self.n_eval,
            "spec": self.model.to_spec(),
        }


def _template(model) -> IntensityModel:
    if isinstance(model, IntensityModel):
        return model
    if model not in MODEL_CLASSES:
        raise ModelError(f"unknown model family {model!r}")
    cls = MODEL_CLASSES[model]
    if cls is MultitypeHawkesModel:
        raise ModelError("a multitype fit needs a template model fixing the number of marks")
    return cls(**{n: 1.0 for n in cls.param_names})


def initial_parameters(model: IntensityModel, network: Network, pattern: PointPattern) -> np.ndarray:
    """Moment-based starting point.

    Baselines start at ``n/|L|`` (per mark for multitype models, on the log
    scale for the non-linear model), excitation weights at 0.5 and kernel
    rates at the reciprocal mean interevent distance.
    """
    n, total = len(pattern), network.total_length
    rate = n / total
    _, _, dist, _ = pattern.interevent_arrays()
    dist = dist[dist > 0]
    kappa = 1.0 / dist.mean() if len(dist) else 1.0 / total
    guess = {"rate": rate, "mu": rate, "alpha": 0.5, "kappa": kappa}
    if isinstance(model, NonlinearHawkesModel):
        guess["mu"] = math.log(rate)
    kw = {}
    for name in model.param_names:
        cur = np.asarray(getattr(model, name), dtype=float)
        if isinstance(model, MultitypeHawkesModel) and name == "mu":
            counts = np.bincount(pattern.marks, minlength=model.n_marks + 1)[1:]
            kw[name] = np.maximum(counts, 0.5) / total
        else:
            kw[name] = np.full(cur.shape, guess[name]) if cur.ndim else guess[name]
    return model.replace(**kw).to_vector()


class _Objective:
    """Negative log-likelihood on the unconstrained (log for positive) scale."""

    def __init__(self, model, network, pattern, free, base):
        self.model, self.network, self.pattern = model, network, pattern
        self.free = np.asarray(free)
        self.base = np.asarray(base, dtype=float)
        self.pos = model.positive_mask()[self.free]
        self.n_eval = 0

    def to_theta(self, z):
        theta = self.base.copy()
        z = np.asarray(z, dtype=float)
        theta[self.free] = np.where(self.pos, np.exp(np.clip(z, -700, 700)), z)
        return theta

    def to_z(self, theta):
        vals = np.asarray(theta, dtype=float)[self.free]
        return np.where(self.pos, np.log(vals), vals)

    def __call__(self, z):
        self.n_eval += 1
        try:
            with np.errstate(over="ignore", invalid="ignore"):
                val = -log_likelihood(self.model, self.network, self.pattern, self.to_theta(z))
        except (DomainError, ModelError, OverflowError, ValueError, ZeroDivisionError):
            return math.inf
        return val if math.isfinite(val) else math.inf


def _check_data(pattern):
    if len(pattern) == 0:
        raise DegenerateData("cannot fit a model to an empty pattern")


def _start_vector(model, network, pattern, start):
    if start is None:
        return initial_parameters(model, network, pattern)
    if isinstance(start, Mapping):
        return model.replace(**start).to_vector()
    return np.asarray(start, dtype=float)


def fit_mle(model, network: Network, pattern: PointPattern, start=None, *,
            n_starts: int = 3, seed: int = 0, jitter: float = 0.5,
            max_iter: int = MAX_ITER, xtol: float = SIMPLEX_TOL,
            strict: bool = False) -> FitResult:
    """Joint maximum likelihood fit by Nelder-Mead.

    Positive parameters are optimised on the log scale, so the simplex
    tolerance ``xtol`` is relative for them. The first start is ``start``
    (or the moment heuristic); the others jitter it on the optimisation
    scale with standard deviation ``jitter``. The best fit is returned.

    Raises
    ------
    DegenerateData
        For an empty pattern.
    NonConvergence
        Only with ``strict=True``; otherwise the flag ``converged`` is False.
    """
    model = _template(model)
    _check_data(pattern)
    theta0 = _start_vector(model, network, pattern, start)
    free = np.arange(len(theta0))
    obj = _Objective(model, network, pattern, free, theta0)
    z0 = obj.to_z(theta0)
    start_val = obj(z0)
    rng = np.random.Generator(np.random.Philox(seed))
    best = None
    n_iter = 0
    for k in range(max(1, n_starts)):
        z = z0 if k == 0 else z0 + rng.normal(0.0, jitter, size=len(z0))
        dim = len(z)
        simplex = np.vstack([z] + [z + 0.1 * np.eye(dim)[i] for i in range(dim)])
        res = optimize.minimize(obj, z, method="Nelder-Mead",
                                options={"xatol": xtol, "fatol": math.inf, "maxiter": max_iter,
                                         "maxfev": 20 * max_iter, "initial_simplex": simplex})
        n_iter += int(res.nit)
        if best is None or res.fun < best.fun:
            best = res
    converged = bool(best.success) and math.isfinite(best.fun)
    theta = obj.to_theta(best.x)
    return _result(model, theta, -best.fun, converged, n_iter, obj.n_eval, -start_val,
                   model.vector_labels(), strict)


def _result(model, theta, loglik, converged, n_iter, n_eval, start_ll, free, strict):
    if not converged:
        msg = f"{model.family} fit did not converge (log-likelihood {loglik})"
        if strict:
            raise NonConvergence(msg)
        warnings.warn(msg, RuntimeWarning, stacklevel=3)
    fitted = model.with_vector(theta)
    return FitResult(model.family, model.vector_labels(), np.asarray(theta, dtype=float), loglik,
                     converged, n_iter, n_eval, fitted, start_ll, list(free))


def fit_marginal(model: IntensityModel, network: Network, pattern: PointPattern, free,
                 start: float | None = None, *, xtol: float = SIMPLEX_TOL,
                 max_iter: int = MAX_ITER, strict: bool = False) -> FitResult:
    """Maximise over one parameter with the others fixed at ``model``'s values.

    ``free`` is a parameter label (see ``model.vector_labels()``) or index.
    The one-dimensional search is Brent's method (golden section with
    parabolic steps) on the log scale for positive parameters.
    """
    _check_data(pattern)
    labels = model.vector_labels()
    if isinstance(free, str):
        if free not in labels:
            raise ModelError(f"unknown parameter {free!r}; expected one of {labels}")
        idx = labels.index(free)
    else:
        idx = int(free)
        if not 0 <= idx < len(labels):
            raise ModelError(f"parameter index {idx} out of range")
    base = model.to_vector()
    if start is None:
        start = initial_parameters(model, network, pattern)[idx]
    base0 = base.copy()
    base0[idx] = start
    obj = _Objective(model, network, pattern, [idx], base0)
    z0 = float(obj.to_z(base0)[0])
    start_val = obj([z0])
    f = lambda z: obj([z])  # noqa: E731
    try:
        res = optimize.minimize_scalar(f, bracket=(z0 - 0.5, z0 + 0.5), method="brent",
                                       options={"xtol": xtol, "maxiter": max_iter})
        z, fun, ok, nit = float(res.x), float(res.fun), bool(res.success), int(res.nit)
    except (RuntimeError, ValueError) as exc:
        log.warning("marginal bracket search failed: %s", exc)
        z, fun, ok, nit = z0, start_val, False, 0
    ok = ok and math.isfinite(fun)
    return _result(model, obj.to_theta([z]), -fun, ok, nit, obj.n_eval, -start_val,
                   [labels[idx]], strict)
