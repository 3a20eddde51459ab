"""Simulation study: fit replicates on networks grown by length scaling.

For each size ``s`` the base network's lengths are multiplied by
``growth ** (s - 1)``; replicates are simulated from the true model and
fitted jointly and/or marginally (one parameter free, the others at the
truth). Results are long-format estimate rows plus per-size summaries.
"""
from __future__ import annotations

import csv
import logging
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DalnError
from .inference import fit_marginal, fit_mle
from .models import IntensityModel
from .network import Network
from .simulation import SimulationConfig, simulate

log = logging.getLogger(__name__)

ESTIMATE_FIELDS = ("size", "replicate", "param", "estimate", "converged", "loglik")
SUMMARY_FIELDS = ("size", "param", "n", "truth", "mean", "median", "q1", "q3",
                  "bias", "mean_abs_error", "corr_mu_alpha")


@dataclass
class StudyConfig:
    """What to run.

    ``mode`` is ``joint``, ``marginal`` or ``both``; ``marginal_params``
    restricts which parameters get a marginal fit (default: all).
    Replicate ``r`` at size ``s`` is simulated with seed
    ``seed + (s - 1) * replicates + r``.
    """

    network: Network
    truth: IntensityModel
    sizes: Sequence[int] = (1,)
    replicates: int = 1
    mode: str = "joint"
    marginal_params: Sequence[str] | None = None
    seed: int = 0
    algorithm: str = "inverse"
    growth: float = 1.5
    n_starts: int = 3
    jobs: int = 1

    def __post_init__(self):
        if self.replicates < 1:
            raise ValueError("replicates must be at least 1")
        if self.mode not in ("joint", "marginal", "both"):
            raise ValueError("mode must be joint, marginal or both")
        labels = self.truth.vector_labels()
        if self.marginal_params is None:
            self.marginal_params = list(labels)
        for p in self.marginal_params:
            if p not in labels:
                raise ValueError(f"unknown parameter {p!r}; expected one of {labels}")


@dataclass
class StudyResult:
    estimates: list[dict] = field(default_factory=list)
    summary: list[dict] = field(default_factory=list)
    failures: list[tuple[int, int, str]] = field(default_factory=list)

    def values(self, size: int, param: str) -> np.ndarray:
        return np.array([r["estimate"] for r in self.estimates
                         if r["size"] == size and r["param"] == param])

    def write(self, out_dir: str | Path) -> tuple[Path, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        est, summ = out / "estimates.csv", out / "summary.csv"
        _write_csv(est, ESTIMATE_FIELDS, self.estimates)
        _write_csv(summ, SUMMARY_FIELDS, self.summary)
        return est, summ


def _write_csv(path, fields, rows):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow({k: _fmt(row.get(k)) for k in fields})


def _fmt(v):
    if isinstance(v, float):
        return "nan" if math.isnan(v) else repr(v)
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    return v


def _replicate(args):
    cfg, size, r = args
    net = cfg.network.scaled(cfg.growth ** (size - 1))
    seed = cfg.seed + (size - 1) * cfg.replicates + r
    rows = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        try:
            pattern = simulate(cfg.truth, net, SimulationConfig(cfg.algorithm, seed))
            if cfg.mode in ("joint", "both"):
                fit = fit_mle(cfg.truth, net, pattern, n_starts=cfg.n_starts, seed=seed)
                for label, val in zip(fit.labels, fit.estimate):
                    rows.append(dict(size=size, replicate=r, param=label, estimate=float(val),
                                     converged=fit.converged, loglik=fit.loglik))
            if cfg.mode in ("marginal", "both"):
                for label in cfg.marginal_params:
                    fit = fit_marginal(cfg.truth, net, pattern, label)
                    val = fit.estimate[fit.labels.index(label)]
                    rows.append(dict(size=size, replicate=r, param=f"{label}_marginal",
                                     estimate=float(val), converged=fit.converged, loglik=fit.loglik))
        except DalnError as exc:
            return size, r, [], f"{type(exc).__name__}: {exc}"
    return size, r, rows, None


def summarise(rows: list[dict], truth: dict[str, float]) -> list[dict]:
    """Per (size, param) mean, median, quartiles, bias and mean absolute error.

    ``corr_mu_alpha`` is the Pearson correlation of the joint estimates of
    ``mu`` and ``alpha`` at that size (blank when not available).
    """
    out = []
    sizes = sorted({r["size"] for r in rows})
    for s in sizes:
        at = [r for r in rows if r["size"] == s]
        params = list(dict.fromkeys(r["param"] for r in at))
        corr = _corr(at, "mu", "alpha")
        for p in params:
            v = np.array([r["estimate"] for r in at if r["param"] == p])
            base = p[:-len("_marginal")] if p.endswith("_marginal") else p
            t = truth.get(base, float("nan"))
            out.append(dict(size=s, param=p, n=len(v), truth=t, mean=float(v.mean()),
                            median=float(np.median(v)), q1=float(np.quantile(v, 0.25)),
                            q3=float(np.quantile(v, 0.75)), bias=float(v.mean() - t),
                            mean_abs_error=float(np.abs(v - t).mean()), corr_mu_alpha=corr))
    return out


def _corr(rows, a, b):
    reps = {}
    for r in rows:
        if r["param"] in (a, b):
            reps.setdefault(r["replicate"], {})[r["param"]] = r["estimate"]
    pairs = np.array([(d[a], d[b]) for d in reps.values() if a in d and b in d])
    if len(pairs) < 3 or np.ptp(pairs[:, 0]) == 0 or np.ptp(pairs[:, 1]) == 0:
        return float("nan")
    return float(np.corrcoef(pairs[:, 0], pairs[:, 1])[0, 1])


def run_study(cfg: StudyConfig) -> StudyResult:
    """Simulate and fit every (size, replicate); failures are logged and skipped."""
    tasks = [(cfg, s, r) for s in cfg.sizes for r in range(cfg.replicates)]
    if cfg.jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            results = list(pool.map(_replicate, tasks, chunksize=4))
    else:
        results = [_replicate(t) for t in tasks]
    res = StudyResult()
    for size, r, rows, err in results:
        if err is not None:
            log.warning("size %s replicate %s failed: %s", size, r, err)
            res.failures.append((size, r, err))
        res.estimates.extend(rows)
    truth = dict(zip(cfg.truth.vector_labels(), map(float, cfg.truth.to_vector())))
    res.summary = summarise(res.estimates, truth)
    return res
