"""Euler-Maruyama simulation of family members backward in time.

Each step from ``t_i`` to ``t_{i+1} < t_i`` applies

    z <- z + drift(z, t_i) * dt + g~(t_i) * sqrt(|dt|) * xi,   xi ~ N(0, I)

with coefficients evaluated at the current (left) time, so ``t = 0`` is never an
evaluation point.

Randomness: trajectories are split into fixed-size blocks of ``BLOCK_SIZE``. Block
``b`` of stream ``s`` draws from its own Philox generator keyed by ``(seed, s, b)``:
first the prior draws for its trajectories, then one normal vector per step. A
trajectory's noise therefore depends only on the seed, the stream and its index, so
any number of worker threads gives bit-identical results.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .flow import FlowField, GaussianEndpoint
from .sde import DiffusionSchedule, Family, g_tilde, reverse_coefficients, family_coefficients

__all__ = [
    "BLOCK_SIZE",
    "MAX_WORKERS_ENV",
    "TimeGrid",
    "RngSpec",
    "TrajectoryEnsemble",
    "sample_prior",
    "simulate_reverse",
    "simulate_ode",
    "default_workers",
]

BLOCK_SIZE = 4096
MAX_WORKERS_ENV = "FLOWSDE_MAX_WORKERS"
DEFAULT_DIVERGENCE_BOUND = 1e6


def default_workers() -> int:
    """Worker threads to use: CPU count, capped by ``FLOWSDE_MAX_WORKERS``."""
    n = os.cpu_count() or 1
    cap = os.environ.get(MAX_WORKERS_ENV)
    if cap:
        try:
            n = min(n, max(1, int(cap)))
        except ValueError:
            raise ValueError(f"{MAX_WORKERS_ENV} must be a positive integer, got {cap!r}") from None
    return n


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid ``t_i = t_start * (1 - i/N)`` descending to 0."""

    t_start: float
    num_steps: int

    def __post_init__(self):
        if not 0.0 < self.t_start <= 1.0:
            raise ValueError(f"t_start must lie in (0, 1], got {self.t_start}")
        if int(self.num_steps) != self.num_steps or self.num_steps < 1:
            raise ValueError(f"num_steps must be a positive integer, got {self.num_steps}")
        object.__setattr__(self, "t_start", float(self.t_start))
        object.__setattr__(self, "num_steps", int(self.num_steps))

    @cached_property
    def points(self) -> np.ndarray:
        i = np.arange(self.num_steps + 1)
        pts = self.t_start * (1.0 - i / self.num_steps)
        pts.flags.writeable = False
        return pts

    @property
    def dt(self) -> float:
        return -self.t_start / self.num_steps


@dataclass(frozen=True)
class RngSpec:
    """Seed plus stream index (one stream per trial)."""

    seed: int
    stream: int = 0

    def __post_init__(self):
        if not 0 <= self.seed < 2 ** 64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        if self.stream < 0:
            raise ValueError("stream must be nonnegative")

    def block_generator(self, block: int) -> np.random.Generator:
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.stream, block))
        return np.random.Generator(np.random.Philox(ss))


@dataclass(eq=False)
class TrajectoryEnsemble:
    """States of ``count`` trajectories at the recorded grid times.

    ``states`` has shape ``(len(recorded_times), count, d)``.
    """

    states: np.ndarray
    recorded_times: np.ndarray
    rng: RngSpec
    diverged: bool = False
    diverged_at: float | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.states.ndim != 3 or self.states.shape[0] != len(self.recorded_times):
            raise ValueError("states must have shape (num_times, count, d)")

    @property
    def count(self) -> int:
        return self.states.shape[1]

    @property
    def dimension(self) -> int:
        return self.states.shape[2]

    def final(self) -> np.ndarray:
        return self.states[-1]


def _blocks(count: int):
    return [(b, s, min(s + BLOCK_SIZE, count)) for b, s in enumerate(range(0, count, BLOCK_SIZE))]


def _prior_block(p1: GaussianEndpoint, gen: np.random.Generator, size: int, d: int) -> np.ndarray:
    return p1.mean + p1.std * gen.standard_normal((size, d))


def sample_prior(p1: GaussianEndpoint, count: int, d: int, rng: RngSpec) -> np.ndarray:
    """I.i.d. draws from ``N(mu1, sigma1^2 I)``; the same draws the simulators start from."""
    if count < 1:
        raise ValueError("count must be >= 1")
    if d != p1.dimension:
        raise ValueError(f"dimension {d} does not match p1 ({p1.dimension})")
    return np.concatenate([_prior_block(p1, rng.block_generator(b), e - s, d)
                           for b, s, e in _blocks(count)])


def _record_indices(num_steps: int, record_every: int) -> np.ndarray:
    idx = np.arange(0, num_steps + 1, record_every)
    if idx[-1] != num_steps:
        idx = np.append(idx, num_steps)
    return idx


def _simulate(field: FlowField, schedule: DiffusionSchedule, grid: TimeGrid, count: int,
              rng: RngSpec, *, workers: int | None, record_every: int,
              divergence_bound: float, final_step_noise: bool) -> TrajectoryEnsemble:
    if count < 1:
        raise ValueError("count must be >= 1")
    if record_every < 1:
        raise ValueError("record_every must be >= 1")
    pts = grid.points
    # fail fast on poles before spawning any work
    g_tilde(schedule, pts[0])
    noisy = not schedule.is_deterministic
    dt = grid.dt
    sqrt_dt = math.sqrt(abs(dt))
    d = field.dimension
    rec_idx = _record_indices(grid.num_steps, record_every)
    rec_slot = {int(i): k for k, i in enumerate(rec_idx)}
    states = np.empty((len(rec_idx), count, d))
    p1 = field.endpoint_p1

    def run_block(block):
        b, start, stop = block
        gen = rng.block_generator(b)
        z = _prior_block(p1, gen, stop - start, d)
        states[0, start:stop] = z
        first_bad = None
        with np.errstate(over="ignore", invalid="ignore"):
            for i in range(grid.num_steps):
                t = float(pts[i])
                coef = reverse_coefficients(field, schedule, z, t)
                z = z + coef.drift * dt
                if noisy and (final_step_noise or i < grid.num_steps - 1):
                    z = z + (coef.diffusion * sqrt_dt) * gen.standard_normal(z.shape)
                if first_bad is None and not np.all(np.abs(z) <= divergence_bound):
                    first_bad = float(pts[i + 1])
                slot = rec_slot.get(i + 1)
                if slot is not None:
                    states[slot, start:stop] = z
        return first_bad

    blocks = _blocks(count)
    n_workers = min(workers or default_workers(), len(blocks))
    if n_workers <= 1:
        results = [run_block(blk) for blk in blocks]
    else:
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            results = list(pool.map(run_block, blocks))
    bad = [t for t in results if t is not None]
    return TrajectoryEnsemble(
        states=states,
        recorded_times=pts[rec_idx].copy(),
        rng=rng,
        diverged=bool(bad),
        diverged_at=max(bad) if bad else None,
        meta={"family": schedule.label(), "alpha": schedule.alpha_scale,
              "num_steps": grid.num_steps, "t_start": grid.t_start},
    )


def simulate_reverse(field: FlowField, schedule: DiffusionSchedule, grid: TimeGrid, count: int,
                     rng: RngSpec, *, workers: int | None = None, record_every: int = 1,
                     divergence_bound: float = DEFAULT_DIVERGENCE_BOUND,
                     final_step_noise: bool = True) -> TrajectoryEnsemble:
    """Simulate a family member from ``p1`` at ``grid.t_start`` down to ``t = 0``.

    Raises :class:`~flowsde.errors.DomainError` when the grid starts on a pole
    (e.g. Singular with ``t_start = 1``). Trajectories leaving ``divergence_bound``
    set ``diverged`` on the result; their states are kept as computed.
    """
    return _simulate(field, schedule, grid, count, rng, workers=workers,
                     record_every=record_every, divergence_bound=divergence_bound,
                     final_step_noise=final_step_noise)


def simulate_ode(field: FlowField, grid: TimeGrid, count: int, rng: RngSpec, *,
                 workers: int | None = None, record_every: int = 1,
                 divergence_bound: float = DEFAULT_DIVERGENCE_BOUND) -> TrajectoryEnsemble:
    """Explicit Euler on ``dx = v dt`` backward in time; ``rng`` only seeds the prior."""
    return _simulate(field, DiffusionSchedule(Family.DETERMINISTIC), grid, count, rng,
                     workers=workers, record_every=record_every,
                     divergence_bound=divergence_bound, final_step_noise=False)


def _simulate_forward(field: FlowField, schedule: DiffusionSchedule, x0: np.ndarray,
                      num_steps: int, gen: np.random.Generator, t0: float = 0.0,
                      t1: float = 1.0) -> np.ndarray:
    """Forward-time Euler-Maruyama from ``x0`` at ``t0`` to ``t1``; returns final states.

    Test helper only. Families with ``n = 0`` need ``t0 > 0``.
    """
    z = np.array(x0, dtype=np.float64)
    dt = (t1 - t0) / num_steps
    for i in range(num_steps):
        t = t0 + i * dt
        coef = family_coefficients(field, schedule, z, t)
        z = z + coef.drift * dt
        if coef.diffusion > 0:
            z = z + coef.diffusion * math.sqrt(dt) * gen.standard_normal(z.shape)
    return z
