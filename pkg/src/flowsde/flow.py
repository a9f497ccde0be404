r"""Flow fields with closed-form velocities.

A flow field carries a velocity :math:`v(x, t) = E[x_1 - x_0 \mid x_t = x]` for the
interpolation :math:`x_t = \alpha_t x_0 + \beta_t x_1`, together with the Gaussian
endpoint :math:`p_1 = N(\mu_1, \sigma_1^2 I)` that makes the score recoverable from the
velocity alone.

Endpoints are isotropic: a mean vector and one scalar variance per component.
Arrays of states have shape ``(..., d)``; times are Python floats.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np

from .errors import DomainError

__all__ = [
    "Schedule",
    "LINEAR",
    "GaussianEndpoint",
    "GaussianMixtureEndpoint",
    "FlowField",
    "velocity_two_gaussian",
    "velocity_mixture",
    "mixture_posterior",
    "score_from_velocity",
    "analytic_score_gaussian",
    "analytic_score_mixture",
    "cfg_velocity",
    "two_gaussian_field",
    "mixture_field",
    "guided_field",
    "toy_endpoints",
]

_ENDPOINT_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class Schedule:
    """Interpolation coefficients ``x_t = alpha(t) x0 + beta(t) x1``."""

    alpha_of_t: Callable[[float], float]
    beta_of_t: Callable[[float], float]
    name: str = "custom"

    def __post_init__(self):
        ends = (self.alpha_of_t(0.0), self.alpha_of_t(1.0),
                self.beta_of_t(0.0), self.beta_of_t(1.0))
        if not np.allclose(ends, (1.0, 0.0, 0.0, 1.0), rtol=0, atol=_ENDPOINT_TOL):
            raise ValueError(
                f"schedule endpoints must satisfy alpha(0)=1, alpha(1)=0, "
                f"beta(0)=0, beta(1)=1; got {ends}")
        for t in np.linspace(0.0, 1.0, 65)[1:-1]:
            if self.alpha_of_t(t) <= 0 or self.beta_of_t(t) <= 0:
                raise ValueError(f"schedule coefficients must be positive inside (0, 1); failed at t={t}")

    def k_of_t(self, t: float) -> float:
        return self.alpha_of_t(t) + self.beta_of_t(t)

    @property
    def is_linear(self) -> bool:
        return self.name == "linear"


LINEAR = Schedule(lambda t: 1.0 - t, lambda t: t, name="linear")


def _as_vector(mean) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(mean, dtype=np.float64)).copy()
    if arr.ndim != 1:
        raise ValueError("endpoint mean must be a scalar or a 1-D vector")
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class GaussianEndpoint:
    """Isotropic Gaussian ``N(mean, variance * I)``."""

    mean: np.ndarray
    variance: float

    def __post_init__(self):
        object.__setattr__(self, "mean", _as_vector(self.mean))
        object.__setattr__(self, "variance", float(self.variance))
        if not self.variance > 0:
            raise ValueError(f"variance must be positive, got {self.variance}")

    @property
    def dimension(self) -> int:
        return self.mean.size

    @property
    def std(self) -> float:
        return float(np.sqrt(self.variance))

    def moments(self) -> tuple[np.ndarray, np.ndarray]:
        """Per-dimension mean and variance."""
        return self.mean.copy(), np.full(self.dimension, self.variance)


@dataclass(frozen=True, eq=False)
class GaussianMixtureEndpoint:
    """Weighted mixture of isotropic Gaussians sharing one dimension."""

    components: tuple[tuple[float, GaussianEndpoint], ...]

    def __post_init__(self):
        comps = tuple((float(w), c) for w, c in self.components)
        if not comps:
            raise ValueError("mixture needs at least one component")
        weights = np.array([w for w, _ in comps])
        if np.any(weights <= 0):
            raise ValueError("mixture weights must be positive")
        if abs(weights.sum() - 1.0) > 1e-12:
            raise ValueError(f"mixture weights must sum to 1, got {weights.sum()!r}")
        if len({c.dimension for _, c in comps}) != 1:
            raise ValueError("mixture components must share a dimension")
        object.__setattr__(self, "components", comps)

    @property
    def dimension(self) -> int:
        return self.components[0][1].dimension

    @property
    def weights(self) -> np.ndarray:
        return np.array([w for w, _ in self.components])

    @property
    def means(self) -> np.ndarray:
        return np.stack([c.mean for _, c in self.components])

    @property
    def variances(self) -> np.ndarray:
        return np.array([c.variance for _, c in self.components])

    def moments(self) -> tuple[np.ndarray, np.ndarray]:
        """Per-dimension mean and variance of the mixture."""
        w, mu, var = self.weights, self.means, self.variances
        mean = w @ mu
        second = w @ (mu ** 2 + var[:, None])
        return mean, second - mean ** 2


Endpoint = Union[GaussianEndpoint, GaussianMixtureEndpoint]


def _as_mixture(p: Endpoint) -> GaussianMixtureEndpoint:
    if isinstance(p, GaussianMixtureEndpoint):
        return p
    return GaussianMixtureEndpoint(((1.0, p),))


def velocity_two_gaussian(p0: GaussianEndpoint, p1: GaussianEndpoint, schedule: Schedule,
                          x, t: float) -> np.ndarray:
    """Exact ``E[x1 - x0 | x_t = x]`` for independent Gaussian endpoints."""
    x = np.asarray(x, dtype=np.float64)
    a, b = schedule.alpha_of_t(t), schedule.beta_of_t(t)
    k = a + b
    s0, s1 = p0.variance, p1.variance
    num = (k * p1.mean - x) * a * s0 + (x - k * p0.mean) * b * s1
    return num / (a * a * s0 + b * b * s1)


def _component_marginals(p0: GaussianMixtureEndpoint, p1: GaussianEndpoint,
                         schedule: Schedule, t: float):
    a, b = schedule.alpha_of_t(t), schedule.beta_of_t(t)
    means = a * p0.means + b * p1.mean              # (K, d)
    variances = a * a * p0.variances + b * b * p1.variance  # (K,)
    return means, variances


def mixture_posterior(p0: Endpoint, p1: GaussianEndpoint, schedule: Schedule,
                      x, t: float) -> np.ndarray:
    """Posterior component responsibilities given ``x_t = x``, shape ``(..., K)``."""
    p0 = _as_mixture(p0)
    x = np.asarray(x, dtype=np.float64)
    means, variances = _component_marginals(p0, p1, schedule, t)
    d = p0.dimension
    sq = np.sum((x[..., None, :] - means) ** 2, axis=-1)   # (..., K)
    logw = np.log(p0.weights) - 0.5 * d * np.log(2 * np.pi * variances) - 0.5 * sq / variances
    logw -= logw.max(axis=-1, keepdims=True)
    w = np.exp(logw)
    return w / w.sum(axis=-1, keepdims=True)


def velocity_mixture(p0: Endpoint, p1: GaussianEndpoint, schedule: Schedule,
                     x, t: float) -> np.ndarray:
    """``E[x1 - x0 | x_t = x]`` when ``p0`` is a Gaussian mixture.

    Each component contributes its two-Gaussian velocity, weighted by its posterior
    responsibility under the component's Gaussian marginal at time ``t``.
    """
    p0 = _as_mixture(p0)
    x = np.asarray(x, dtype=np.float64)
    w = mixture_posterior(p0, p1, schedule, x, t)
    out = np.zeros(np.broadcast_shapes(x.shape, (p0.dimension,)))
    for i, (_, comp) in enumerate(p0.components):
        out = out + w[..., i:i + 1] * velocity_two_gaussian(comp, p1, schedule, x, t)
    return out


def analytic_score_gaussian(p0: GaussianEndpoint, p1: GaussianEndpoint, schedule: Schedule,
                            x, t: float) -> np.ndarray:
    """Score of the Gaussian marginal ``N(mu_t, sigma_t^2 I)``."""
    x = np.asarray(x, dtype=np.float64)
    a, b = schedule.alpha_of_t(t), schedule.beta_of_t(t)
    mu_t = a * p0.mean + b * p1.mean
    var_t = a * a * p0.variance + b * b * p1.variance
    return -(x - mu_t) / var_t


def analytic_score_mixture(p0: Endpoint, p1: GaussianEndpoint, schedule: Schedule,
                           x, t: float) -> np.ndarray:
    """Gradient of the log of the mixture marginal density at time ``t``."""
    p0 = _as_mixture(p0)
    x = np.asarray(x, dtype=np.float64)
    means, variances = _component_marginals(p0, p1, schedule, t)
    w = mixture_posterior(p0, p1, schedule, x, t)
    per_comp = -(x[..., None, :] - means) / variances[:, None]   # (..., K, d)
    return np.sum(w[..., None] * per_comp, axis=-2)


@dataclass(frozen=True, eq=False)
class FlowField:
    """A velocity field together with the Gaussian endpoint it transports to.

    ``endpoint_p0`` is optional metadata for closed-form fields; samplers never read it.
    """

    dimension: int
    velocity: Callable[[np.ndarray, float], np.ndarray]
    endpoint_p1: GaussianEndpoint
    schedule: Schedule = field(default=LINEAR)
    endpoint_p0: Endpoint | None = None

    def __post_init__(self):
        if self.dimension < 1:
            raise ValueError("dimension must be positive")
        if self.endpoint_p1.dimension != self.dimension:
            raise ValueError("endpoint_p1 dimension does not match the field")


def score_from_velocity(field: FlowField, x, t: float) -> np.ndarray:
    """Impute the marginal score from the velocity of a Gaussian flow.

    Only valid for the linear schedule. The expression has a ``1/t`` pole, so
    ``t = 0`` is rejected; use :func:`flowsde.sde.fused_score_product` near zero.
    """
    if not field.schedule.is_linear:
        raise ValueError("score imputation from velocity requires the linear schedule")
    if t <= 0:
        raise DomainError(f"score_from_velocity is undefined at t={t}")
    x = np.asarray(x, dtype=np.float64)
    p1 = field.endpoint_p1
    v = field.velocity(x, t)
    return (-(1.0 - t) * v + p1.mean - x) / (t * p1.variance)


def cfg_velocity(v_cond, v_uncond, lam: float):
    """Classifier-free guided velocity ``(1 + lam) v_cond - lam v_uncond``."""
    if lam < 0:
        raise ValueError("guidance weight must be nonnegative")
    return (1.0 + lam) * np.asarray(v_cond, dtype=np.float64) - lam * np.asarray(v_uncond, dtype=np.float64)


def two_gaussian_field(p0: GaussianEndpoint, p1: GaussianEndpoint,
                       schedule: Schedule = LINEAR) -> FlowField:
    if p0.dimension != p1.dimension:
        raise ValueError("endpoint dimensions differ")
    return FlowField(
        dimension=p1.dimension,
        velocity=lambda x, t: velocity_two_gaussian(p0, p1, schedule, x, t),
        endpoint_p1=p1, schedule=schedule, endpoint_p0=p0)


def mixture_field(p0: GaussianMixtureEndpoint, p1: GaussianEndpoint,
                  schedule: Schedule = LINEAR) -> FlowField:
    if p0.dimension != p1.dimension:
        raise ValueError("endpoint dimensions differ")
    return FlowField(
        dimension=p1.dimension,
        velocity=lambda x, t: velocity_mixture(p0, p1, schedule, x, t),
        endpoint_p1=p1, schedule=schedule, endpoint_p0=p0)


def guided_field(cond: FlowField, uncond: FlowField, lam: float) -> FlowField:
    """Field whose velocity is the guided combination of two fields sharing ``p1``."""
    if cond.dimension != uncond.dimension:
        raise ValueError("guided fields must share a dimension")
    if not (np.array_equal(cond.endpoint_p1.mean, uncond.endpoint_p1.mean)
            and cond.endpoint_p1.variance == uncond.endpoint_p1.variance):
        raise ValueError("guided fields must share the endpoint p1")
    return FlowField(
        dimension=cond.dimension,
        velocity=lambda x, t: cfg_velocity(cond.velocity(x, t), uncond.velocity(x, t), lam),
        endpoint_p1=cond.endpoint_p1, schedule=cond.schedule)


def toy_endpoints() -> tuple[GaussianEndpoint, GaussianEndpoint]:
    """The 1-D two-Gaussian toy: ``p0 = N(-1, 0.3)``, ``p1 = N(0, 1)`` (variances)."""
    return GaussianEndpoint(-1.0, 0.3), GaussianEndpoint(0.0, 1.0)
