r"""Marginal-preserving SDE families built from a flow field.

Given a flow ODE ``dx = v dt`` with Gaussian ``p1``, every member of

.. math:: dx = [v + \tfrac{1}{2}\tilde g^2(t) \nabla \ln p_t]\,dt + \tilde g(t)\,dW_t

shares the flow's time marginals. The members catalogued here use
``g~(t) = alpha * t^(n/2) * (1 - t)^(m/2)`` for integer powers ``n >= 0`` and ``m``.

Only scalar, time-dependent diffusion is supported; divergence terms of the
general transform vanish identically in that case and are never computed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable

import numpy as np

from .errors import DomainError
from .flow import FlowField

__all__ = [
    "Family",
    "DiffusionSchedule",
    "GammaSchedule",
    "TimeDirection",
    "SdeCoefficients",
    "g_tilde",
    "fused_score_product",
    "family_coefficients",
    "marginal_preserving_transform",
    "noise_rescaled_coefficients",
    "singular_sde_coefficients",
    "reverse_time_coefficients",
    "reverse_coefficients",
]


class Family(str, Enum):
    DETERMINISTIC = "Deterministic"
    CONSTANT = "Constant"
    SINGULAR = "Singular"
    NONSINGULAR = "NonSingular"
    ZEROENDS = "ZeroEnds"
    CUSTOM = "CustomPower"

    @classmethod
    def parse(cls, name: str) -> "Family":
        key = name.replace("_", "").replace("-", "").lower()
        for fam in cls:
            if fam.value.lower() == key or (fam is cls.CUSTOM and key == "custom"):
                return fam
        raise ValueError(f"unknown diffusion family {name!r}; expected one of "
                         f"{', '.join(f.value for f in cls)}")


# (n, m) in g~ = alpha * t^(n/2) * (1-t)^(m/2)
_POWERS = {
    Family.DETERMINISTIC: (0, 0),
    Family.CONSTANT: (0, 0),
    Family.SINGULAR: (1, -1),
    Family.NONSINGULAR: (1, 0),
    Family.ZEROENDS: (1, 1),
}

CATALOG_FAMILIES = (Family.DETERMINISTIC, Family.CONSTANT, Family.SINGULAR,
                   Family.NONSINGULAR, Family.ZEROENDS)


@dataclass(frozen=True)
class DiffusionSchedule:
    """A choice of diffusion ``g~(t)`` indexing one member of the SDE family."""

    family: Family
    alpha_scale: float = 1.0
    n: int | None = None
    m: int | None = None

    def __post_init__(self):
        fam = self.family if isinstance(self.family, Family) else Family.parse(self.family)
        object.__setattr__(self, "family", fam)
        if fam is Family.DETERMINISTIC:
            object.__setattr__(self, "alpha_scale", 0.0)
        alpha = float(self.alpha_scale)
        if not (alpha >= 0 and math.isfinite(alpha)):
            raise ValueError(f"alpha_scale must be finite and >= 0, got {self.alpha_scale}")
        object.__setattr__(self, "alpha_scale", alpha)
        if fam is Family.CUSTOM:
            if self.n is None or self.m is None:
                raise ValueError("CustomPower needs integer powers n and m")
            if int(self.n) != self.n or int(self.m) != self.m or self.n < 0:
                raise ValueError(f"CustomPower needs integer n >= 0 and integer m, got n={self.n}, m={self.m}")
            object.__setattr__(self, "n", int(self.n))
            object.__setattr__(self, "m", int(self.m))
        else:
            if self.n is not None or self.m is not None:
                if (self.n, self.m) != _POWERS[fam]:
                    raise ValueError(f"{fam.value} has fixed powers {_POWERS[fam]}")
            n, m = _POWERS[fam]
            object.__setattr__(self, "n", n)
            object.__setattr__(self, "m", m)

    @property
    def powers(self) -> tuple[int, int]:
        return self.n, self.m

    @property
    def is_deterministic(self) -> bool:
        return self.alpha_scale == 0.0

    @property
    def default_t_start(self) -> float:
        """Start time avoiding the pole at t=1 for families with negative ``m``."""
        return 1.0 - 1e-3 if self.m < 0 and not self.is_deterministic else 1.0

    def label(self) -> str:
        if self.family is Family.CUSTOM:
            return f"CustomPower(n={self.n},m={self.m})"
        return self.family.value


@dataclass(frozen=True)
class GammaSchedule:
    """Time-dependent blend weight ``gamma(t) >= 0`` between an SDE and its ODE."""

    gamma_of_t: Callable[[float], float]

    def __call__(self, t: float) -> float:
        gamma = float(self.gamma_of_t(t))
        if gamma < 0:
            raise ValueError(f"gamma must be nonnegative, got {gamma} at t={t}")
        return gamma

    @classmethod
    def constant(cls, gamma: float) -> "GammaSchedule":
        return cls(lambda t: gamma)

    @classmethod
    def for_target_diffusion(cls, g_of_t, target_of_t) -> "GammaSchedule":
        """Gamma that turns diffusion ``g`` into ``target`` (``gamma = target^2 / g^2``)."""
        return cls(lambda t: target_of_t(t) ** 2 / g_of_t(t) ** 2)


class TimeDirection(str, Enum):
    FORWARD = "Forward"
    REVERSE = "Reverse"


@dataclass(frozen=True, eq=False)
class SdeCoefficients:
    drift: np.ndarray
    diffusion: float
    time_direction: TimeDirection = TimeDirection.FORWARD

    def __post_init__(self):
        if not self.diffusion >= 0:
            raise ValueError(f"diffusion must be nonnegative, got {self.diffusion}")


def g_tilde(schedule: DiffusionSchedule, t: float) -> float:
    """Diffusion coefficient of the family member at time ``t``."""
    if not 0.0 <= t <= 1.0:
        raise DomainError(f"t={t} outside [0, 1]")
    n, m = schedule.powers
    if m < 0 and t >= 1.0:
        raise DomainError(f"{schedule.label()} diffusion has a pole at t=1")
    if schedule.is_deterministic:
        return 0.0
    return schedule.alpha_scale * t ** (n / 2) * (1.0 - t) ** (m / 2)


def _check_gaussian_flow(field: FlowField):
    if not field.schedule.is_linear:
        raise ValueError("score imputation from velocity requires the linear schedule")


def fused_score_product(field: FlowField, n: int, m: int, scale2: float, x, t: float,
                        v=None) -> np.ndarray:
    """``scale2 * t^n * (1-t)^m * score`` with the ``1/t`` of the score cancelled.

    With ``n >= 1`` the result stays finite at ``t = 0``. ``v`` may be passed to
    reuse an already evaluated velocity.
    """
    _check_gaussian_flow(field)
    if n < 0:
        raise ValueError("n must be >= 0")
    if n == 0 and t <= 0:
        raise DomainError("fused score product with n=0 is undefined at t=0")
    if m < 0 and t >= 1:
        raise DomainError(f"fused score product with m={m} is undefined at t=1")
    x = np.asarray(x, dtype=np.float64)
    if v is None:
        v = field.velocity(x, t)
    p1 = field.endpoint_p1
    residual = -(1.0 - t) * v + p1.mean - x
    return (scale2 * t ** (n - 1) * (1.0 - t) ** m / p1.variance) * residual


def family_coefficients(field: FlowField, schedule: DiffusionSchedule, x, t: float) -> SdeCoefficients:
    """Forward-time coefficients ``(v + g~^2/2 * score, g~)`` of a family member."""
    g = g_tilde(schedule, t)
    v = np.asarray(field.velocity(np.asarray(x, dtype=np.float64), t))
    if schedule.is_deterministic:
        return SdeCoefficients(v, 0.0, TimeDirection.FORWARD)
    n, m = schedule.powers
    drift = v + fused_score_product(field, n, m, schedule.alpha_scale ** 2 / 2, x, t, v=v)
    return SdeCoefficients(drift, g, TimeDirection.FORWARD)


def reverse_coefficients(field: FlowField, schedule: DiffusionSchedule, x, t: float) -> SdeCoefficients:
    """Reverse-time coefficients ``(v - g~^2/2 * score, g~)`` in fused form.

    Equal to ``reverse_time_coefficients(family_coefficients(...), score)`` wherever
    the score exists, but finite at ``t = 0`` for ``n >= 1``.
    """
    g = g_tilde(schedule, t)
    v = np.asarray(field.velocity(np.asarray(x, dtype=np.float64), t))
    if schedule.is_deterministic:
        return SdeCoefficients(v, 0.0, TimeDirection.REVERSE)
    n, m = schedule.powers
    drift = v - fused_score_product(field, n, m, schedule.alpha_scale ** 2 / 2, x, t, v=v)
    return SdeCoefficients(drift, g, TimeDirection.REVERSE)


def marginal_preserving_transform(f, g: float, g_tilde_val: float, gamma: float, score) -> SdeCoefficients:
    """Blend an SDE ``(f, g)`` into another with identical marginals.

    Scalar case: ``f - ((1-gamma) g^2 - g~^2)/2 * score`` and ``sqrt(gamma g^2 + g~^2)``.
    """
    if gamma < 0:
        raise ValueError(f"gamma must be nonnegative, got {gamma}")
    var = gamma * g * g + g_tilde_val * g_tilde_val
    if var < 0:
        raise ValueError("gamma * g^2 + g~^2 must be nonnegative")
    f = np.asarray(f, dtype=np.float64)
    drift = f - 0.5 * ((1.0 - gamma) * g * g - g_tilde_val * g_tilde_val) * np.asarray(score, dtype=np.float64)
    return SdeCoefficients(drift, math.sqrt(var), TimeDirection.FORWARD)


def noise_rescaled_coefficients(f, g: float, gamma: float, score) -> SdeCoefficients:
    """``(f - (1-gamma) g^2/2 * score, sqrt(gamma) g)``: the transform without extra noise."""
    return marginal_preserving_transform(f, g, 0.0, gamma, score)


def singular_sde_coefficients(sigma1: float, x, t: float) -> SdeCoefficients:
    """Affine-drift SDE matching the flow marginals when ``mu1 = 0``.

    Drift ``-x/(1-t)``, diffusion ``sigma1 * sqrt(2t/(1-t))``; both blow up at t=1.
    """
    if t >= 1:
        raise DomainError("singular SDE coefficients have a pole at t=1")
    if t < 0:
        raise DomainError(f"t={t} outside [0, 1)")
    if not sigma1 > 0:
        raise ValueError("sigma1 must be positive")
    x = np.asarray(x, dtype=np.float64)
    return SdeCoefficients(-x / (1.0 - t), sigma1 * math.sqrt(2.0 * t / (1.0 - t)), TimeDirection.FORWARD)


def reverse_time_coefficients(fwd: SdeCoefficients, score) -> SdeCoefficients:
    """Drift ``f - g^2 * score`` of the time-reversed process; diffusion unchanged."""
    if fwd.time_direction is not TimeDirection.FORWARD:
        raise ValueError("reverse_time_coefficients expects forward-time coefficients")
    if fwd.diffusion == 0.0:
        return SdeCoefficients(fwd.drift, 0.0, TimeDirection.REVERSE)
    drift = fwd.drift - fwd.diffusion ** 2 * np.asarray(score, dtype=np.float64)
    return SdeCoefficients(drift, fwd.diffusion, TimeDirection.REVERSE)
