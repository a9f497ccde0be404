"""Marginal statistics of trajectory ensembles against the analytic flow marginals."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DomainError
from .flow import Endpoint, GaussianEndpoint
from .integrator import TrajectoryEnsemble

__all__ = [
    "KL_DIRECTIONS",
    "AnalyticMarginal",
    "MarginalReport",
    "analytic_marginal",
    "gaussian_kl",
    "trial_moments",
    "estimate_marginals",
    "report_from_moments",
]

KL_DIRECTIONS = ("estimate_truth", "truth_estimate")


@dataclass(frozen=True, eq=False)
class AnalyticMarginal:
    """Exact per-dimension moments of ``x_t = (1-t) x0 + t x1``.

    For a mixture ``p0`` these are the exact first two moments of a non-Gaussian
    marginal; KL then compares moment-matched Gaussians.
    """

    p0: Endpoint
    p1: GaussianEndpoint

    def __post_init__(self):
        if self.p0.dimension != self.p1.dimension:
            raise ValueError("endpoint dimensions differ")

    @property
    def dimension(self) -> int:
        return self.p1.dimension

    def mean_of_t(self, t):
        m0, _ = self.p0.moments()
        t = np.asarray(t, dtype=np.float64)[..., None]
        return (1 - t) * m0 + t * self.p1.mean

    def variance_of_t(self, t):
        _, v0 = self.p0.moments()
        t = np.asarray(t, dtype=np.float64)[..., None]
        return (1 - t) ** 2 * v0 + t ** 2 * self.p1.variance

    def __call__(self, t):
        return self.mean_of_t(t), self.variance_of_t(t)


def analytic_marginal(p0: Endpoint, p1: GaussianEndpoint, t: float):
    """``(mu_t, sigma_t^2)`` as per-dimension arrays."""
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"t={t} outside [0, 1]")
    return AnalyticMarginal(p0, p1)(t)


def gaussian_kl(m1, v1, m2, v2):
    """KL(N(m1, v1) || N(m2, v2)) for scalar variances, elementwise over arrays."""
    m1, v1, m2, v2 = (np.asarray(a, dtype=np.float64) for a in (m1, v1, m2, v2))
    if np.any(v1 <= 0) or np.any(v2 <= 0):
        raise DomainError("gaussian_kl needs strictly positive variances")
    kl = 0.5 * (v1 / v2 + (m2 - m1) ** 2 / v2 - 1.0 + np.log(v2 / v1))
    kl = np.maximum(kl, 0.0)
    return float(kl) if kl.ndim == 0 else kl


@dataclass(eq=False)
class MarginalReport:
    """Per-time estimates over trials, one row per recorded time (descending).

    Per-dimension arrays have shape ``(T, d)``; the ``pooled_*`` arrays average over
    dimensions (identical to dimension 0 for 1-D problems) and are what gets
    serialized. ``kl`` is the KL between diagonal Gaussians, summed over dimensions.
    Standard deviations are the raw spread of per-trial estimates (ddof=1), not
    standard errors.
    """

    times: np.ndarray
    mean_est: np.ndarray
    mean_err: np.ndarray
    mean_std: np.ndarray
    var_est: np.ndarray
    var_err: np.ndarray
    var_std: np.ndarray
    kl: np.ndarray
    pooled_mean_est: np.ndarray
    pooled_mean_err: np.ndarray
    pooled_mean_std: np.ndarray
    pooled_var_est: np.ndarray
    pooled_var_err: np.ndarray
    pooled_var_std: np.ndarray
    kl_direction: str = "estimate_truth"
    metadata: dict = field(default_factory=dict)

    def rows(self):
        """Serialized columns ``t, mean_est, mean_err, mean_std, var_est, var_err, var_std, kl``."""
        cols = (self.times, self.pooled_mean_est, self.pooled_mean_err, self.pooled_mean_std,
                self.pooled_var_est, self.pooled_var_err, self.pooled_var_std, self.kl)
        return [tuple(float(c[i]) for c in cols) for i in range(len(self.times))]

    def at(self, t: float) -> dict:
        """Pooled row at the recorded time closest to ``t``."""
        i = int(np.argmin(np.abs(self.times - t)))
        keys = ("t", "mean_est", "mean_err", "mean_std", "var_est", "var_err", "var_std", "kl")
        return dict(zip(keys, self.rows()[i]))


def trial_moments(ensemble: TrajectoryEnsemble):
    """Sample mean and unbiased sample variance per recorded time, shapes ``(T, d)``."""
    if ensemble.count < 2:
        raise ValueError("need at least 2 trajectories per trial")
    states = ensemble.states
    # shift by the first trajectory: exact zero variance for constant ensembles
    ref = states[:, :1]
    dev = states - ref
    return ref[:, 0] + dev.mean(axis=1), dev.var(axis=1, ddof=1)


def _kl(mean_est, var_est, mean_true, var_true, direction):
    if direction not in KL_DIRECTIONS:
        raise ValueError(f"kl_direction must be one of {KL_DIRECTIONS}")
    out = np.full(mean_est.shape, np.inf)
    ok = var_est > 0
    if direction == "estimate_truth":
        out[ok] = gaussian_kl(mean_est[ok], var_est[ok], mean_true[ok], var_true[ok])
    else:
        out[ok] = gaussian_kl(mean_true[ok], var_true[ok], mean_est[ok], var_est[ok])
    return out


def report_from_moments(times, means, variances, truth: AnalyticMarginal,
                        kl_direction: str = "estimate_truth",
                        metadata: dict | None = None) -> MarginalReport:
    """Aggregate per-trial moments of shape ``(K, T, d)`` into a report."""
    means = np.asarray(means, dtype=np.float64)
    variances = np.asarray(variances, dtype=np.float64)
    if means.ndim != 3 or means.shape != variances.shape:
        raise ValueError("per-trial moments must have matching shapes (trials, times, d)")
    if means.shape[0] < 2:
        raise ValueError("need at least 2 trials for cross-trial standard deviations")
    times = np.asarray(times, dtype=np.float64)
    mu_t, var_t = truth(times)

    mean_est, var_est = means.mean(0), variances.mean(0)
    pooled_means, pooled_vars = means.mean(-1), variances.mean(-1)
    pm_est, pv_est = pooled_means.mean(0), pooled_vars.mean(0)
    kl = _kl(mean_est, var_est, mu_t, var_t, kl_direction).sum(-1)

    meta = dict(metadata or {})
    meta.setdefault("trials", means.shape[0])
    meta["kl_direction"] = kl_direction
    return MarginalReport(
        times=times,
        mean_est=mean_est, mean_err=mean_est - mu_t, mean_std=means.std(0, ddof=1),
        var_est=var_est, var_err=var_est - var_t, var_std=variances.std(0, ddof=1),
        kl=kl,
        pooled_mean_est=pm_est, pooled_mean_err=pm_est - mu_t.mean(-1),
        pooled_mean_std=pooled_means.std(0, ddof=1),
        pooled_var_est=pv_est, pooled_var_err=pv_est - var_t.mean(-1),
        pooled_var_std=pooled_vars.std(0, ddof=1),
        kl_direction=kl_direction,
        metadata=meta,
    )


def estimate_marginals(ensembles: Sequence[TrajectoryEnsemble], truth: AnalyticMarginal,
                       kl_direction: str = "estimate_truth",
                       metadata: dict | None = None) -> MarginalReport:
    """Pool one ensemble per trial into per-time estimates with cross-trial spread."""
    if len(ensembles) < 2:
        raise ValueError("need at least 2 trials for cross-trial standard deviations")
    times = ensembles[0].recorded_times
    for e in ensembles[1:]:
        if not np.array_equal(e.recorded_times, times):
            raise ValueError("all trials must share the same recorded time grid")
    moments = [trial_moments(e) for e in ensembles]
    meta = dict(metadata or {})
    meta.setdefault("trajectories", ensembles[0].count)
    return report_from_moments(times, [m for m, _ in moments], [v for _, v in moments],
                               truth, kl_direction, meta)
