"""Experiment configuration: a nested YAML document (JSON is accepted too).

Every key has a default; ``flowsde print-config`` prints them all. Unknown keys are
rejected. The ``variance`` fields are variances, not standard deviations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

import yaml

from .errors import ConfigError
from .flow import (FlowField, GaussianEndpoint, GaussianMixtureEndpoint, mixture_field,
                   two_gaussian_field)
from .sde import DiffusionSchedule, Family
from .stats import KL_DIRECTIONS, AnalyticMarginal

__all__ = ["GaussianSpec", "MixtureSpec", "OutputSpec", "ExperimentConfig",
           "load_config", "parse_config", "dump_config"]

OUTPUT_FORMATS = ("csv", "json")


@dataclass(frozen=True)
class GaussianSpec:
    mean: tuple[float, ...] = (0.0,)
    variance: float = 1.0

    def build(self) -> GaussianEndpoint:
        return GaussianEndpoint(self.mean, self.variance)


@dataclass(frozen=True)
class MixtureSpec:
    components: tuple[tuple[float, GaussianSpec], ...]

    def build(self) -> GaussianMixtureEndpoint:
        return GaussianMixtureEndpoint(tuple((w, g.build()) for w, g in self.components))


@dataclass(frozen=True)
class OutputSpec:
    path: str = "report.csv"
    format: str = "csv"


@dataclass(frozen=True)
class ExperimentConfig:
    p0: GaussianSpec | MixtureSpec = GaussianSpec((-1.0,), 0.3)
    p1: GaussianSpec = GaussianSpec((0.0,), 1.0)
    family: str = "NonSingular"
    alpha: float = 1.0
    n: int | None = None
    m: int | None = None
    t_start: float | None = None
    final_step_noise: bool = True
    num_steps: int = 100
    trials: int = 10
    trajectories_per_trial: int = 10000
    seed: int = 0
    divergence_bound: float = 1e6
    kl_direction: str = "estimate_truth"
    output: OutputSpec = field(default_factory=OutputSpec)

    def diffusion_schedule(self) -> DiffusionSchedule:
        return DiffusionSchedule(Family.parse(self.family), self.alpha, self.n, self.m)

    def effective_t_start(self) -> float:
        if self.t_start is not None:
            return self.t_start
        return self.diffusion_schedule().default_t_start

    def endpoints(self):
        return self.p0.build(), self.p1.build()

    def flow_field(self) -> FlowField:
        p0, p1 = self.endpoints()
        if isinstance(p0, GaussianMixtureEndpoint):
            return mixture_field(p0, p1)
        return two_gaussian_field(p0, p1)

    def truth(self) -> AnalyticMarginal:
        return AnalyticMarginal(*self.endpoints())

    def with_overrides(self, **kw) -> "ExperimentConfig":
        cfg = replace(self, **kw)
        return parse_config(cfg.to_dict())

    def to_dict(self) -> dict:
        return {
            "p0": _endpoint_to_dict(self.p0),
            "p1": _gaussian_to_dict(self.p1),
            "sampler": {
                "family": self.family,
                "alpha": self.alpha,
                "n": self.n,
                "m": self.m,
                "t_start": self.t_start,
                "final_step_noise": self.final_step_noise,
            },
            "simulation": {
                "num_steps": self.num_steps,
                "trials": self.trials,
                "trajectories_per_trial": self.trajectories_per_trial,
                "seed": self.seed,
                "divergence_bound": self.divergence_bound,
            },
            "report": {"kl_direction": self.kl_direction},
            "output": {"path": self.output.path, "format": self.output.format},
        }


def _gaussian_to_dict(g: GaussianSpec) -> dict:
    mean: Any = g.mean[0] if len(g.mean) == 1 else list(g.mean)
    return {"mean": mean, "variance": g.variance}


def _endpoint_to_dict(p) -> dict:
    if isinstance(p, MixtureSpec):
        return {"type": "mixture",
                "components": [{"weight": w, **_gaussian_to_dict(g)} for w, g in p.components]}
    return {"type": "gaussian", **_gaussian_to_dict(p)}


# -- parsing ---------------------------------------------------------------

def _section(data, path: str, allowed: set) -> dict:
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(path or "<root>", "expected a mapping")
    for key in data:
        if key not in allowed:
            where = f"{path}.{key}" if path else str(key)
            raise ConfigError(where, f"unknown key (allowed: {', '.join(sorted(allowed))})")
    return data


def _number(value, path: str, *, integer=False, minimum=None, exclusive=False, maximum=None):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(path, f"expected a number, got {value!r}")
    if integer:
        if isinstance(value, float) and not value.is_integer():
            raise ConfigError(path, f"expected an integer, got {value!r}")
        value = int(value)
    else:
        value = float(value)
        if not math.isfinite(value):
            raise ConfigError(path, "must be finite")
    if minimum is not None:
        if exclusive and not value > minimum:
            raise ConfigError(path, f"must be > {minimum}, got {value}")
        if not exclusive and not value >= minimum:
            raise ConfigError(path, f"must be >= {minimum}, got {value}")
    if maximum is not None and not value <= maximum:
        raise ConfigError(path, f"must be <= {maximum}, got {value}")
    return value


def _mean(value, path: str) -> tuple[float, ...]:
    if isinstance(value, (list, tuple)):
        if not value:
            raise ConfigError(path, "mean vector must not be empty")
        return tuple(_number(v, f"{path}[{i}]") for i, v in enumerate(value))
    return (_number(value, path),)


def _gaussian(data, path: str, extra=()) -> GaussianSpec:
    data = _section(data, path, {"mean", "variance", *extra})
    default = GaussianSpec()
    mean = _mean(data.get("mean", default.mean[0]), f"{path}.mean")
    var = _number(data.get("variance", default.variance), f"{path}.variance", minimum=0.0, exclusive=True)
    return GaussianSpec(mean, var)


def _endpoint(data, path: str, default):
    if data is None:
        return default
    if not isinstance(data, dict):
        raise ConfigError(path, "expected a mapping")
    kind = data.get("type", "gaussian")
    if kind == "gaussian":
        return _gaussian(data, path, extra=("type",))
    if kind != "mixture":
        raise ConfigError(f"{path}.type", f"expected 'gaussian' or 'mixture', got {kind!r}")
    data = _section(data, path, {"type", "components"})
    comps = data.get("components")
    if not isinstance(comps, list) or not comps:
        raise ConfigError(f"{path}.components", "expected a non-empty list")
    parsed = []
    for i, c in enumerate(comps):
        cp = f"{path}.components[{i}]"
        if not isinstance(c, dict) or "weight" not in c:
            raise ConfigError(cp, "each component needs weight, mean and variance")
        w = _number(c["weight"], f"{cp}.weight", minimum=0.0, exclusive=True)
        parsed.append((w, _gaussian(c, cp, extra=("weight",))))
    total = sum(w for w, _ in parsed)
    if abs(total - 1.0) > 1e-12:
        raise ConfigError(f"{path}.components", f"weights must sum to 1, got {total!r}")
    if len({len(g.mean) for _, g in parsed}) != 1:
        raise ConfigError(f"{path}.components", "components must share a dimension")
    return MixtureSpec(tuple(parsed))


def parse_config(data: dict | None) -> ExperimentConfig:
    """Validate a nested mapping and build a config; missing keys take defaults."""
    d = ExperimentConfig()
    root = _section(data or {}, "", {"p0", "p1", "sampler", "simulation", "report", "output"})
    p0 = _endpoint(root.get("p0"), "p0", d.p0)
    p1 = d.p1 if root.get("p1") is None else _gaussian(root["p1"], "p1")
    dim0 = len(p0.components[0][1].mean) if isinstance(p0, MixtureSpec) else len(p0.mean)
    if dim0 != len(p1.mean):
        raise ConfigError("p1.mean", f"dimension {len(p1.mean)} does not match p0 ({dim0})")

    s = _section(root.get("sampler"), "sampler",
                 {"family", "alpha", "n", "m", "t_start", "final_step_noise"})
    family = s.get("family", d.family)
    if not isinstance(family, str):
        raise ConfigError("sampler.family", "expected a string")
    try:
        family = Family.parse(family).value
    except ValueError as exc:
        raise ConfigError("sampler.family", str(exc)) from None
    alpha = _number(s.get("alpha", d.alpha), "sampler.alpha", minimum=0.0)
    n = s.get("n")
    m = s.get("m")
    if family == Family.CUSTOM.value:
        if n is None or m is None:
            raise ConfigError("sampler.n" if n is None else "sampler.m", "CustomPower needs integer powers n and m")
        n = _number(n, "sampler.n", integer=True, minimum=0)
        m = _number(m, "sampler.m", integer=True)
    elif n is not None or m is not None:
        raise ConfigError("sampler.n" if n is not None else "sampler.m",
                          f"powers are fixed for {family}; use family CustomPower")
    t_start = s.get("t_start")
    if t_start is not None:
        t_start = _number(t_start, "sampler.t_start", minimum=0.0, exclusive=True, maximum=1.0)
    fsn = s.get("final_step_noise", d.final_step_noise)
    if not isinstance(fsn, bool):
        raise ConfigError("sampler.final_step_noise", "expected true or false")

    sim = _section(root.get("simulation"), "simulation",
                   {"num_steps", "trials", "trajectories_per_trial", "seed", "divergence_bound"})
    num_steps = _number(sim.get("num_steps", d.num_steps), "simulation.num_steps", integer=True, minimum=1)
    trials = _number(sim.get("trials", d.trials), "simulation.trials", integer=True, minimum=2)
    traj = _number(sim.get("trajectories_per_trial", d.trajectories_per_trial),
                   "simulation.trajectories_per_trial", integer=True, minimum=2)
    seed = _number(sim.get("seed", d.seed), "simulation.seed", integer=True, minimum=0, maximum=2 ** 64 - 1)
    bound = _number(sim.get("divergence_bound", d.divergence_bound), "simulation.divergence_bound",
                    minimum=0.0, exclusive=True)

    r = _section(root.get("report"), "report", {"kl_direction"})
    kl_dir = r.get("kl_direction", d.kl_direction)
    if kl_dir not in KL_DIRECTIONS:
        raise ConfigError("report.kl_direction", f"expected one of {', '.join(KL_DIRECTIONS)}, got {kl_dir!r}")

    o = _section(root.get("output"), "output", {"path", "format"})
    path = o.get("path", d.output.path)
    if not isinstance(path, str) or not path:
        raise ConfigError("output.path", "expected a non-empty string")
    fmt = o.get("format", d.output.format)
    if fmt not in OUTPUT_FORMATS:
        raise ConfigError("output.format", f"expected one of {', '.join(OUTPUT_FORMATS)}, got {fmt!r}")

    return ExperimentConfig(
        p0=p0, p1=p1, family=family, alpha=alpha, n=n, m=m, t_start=t_start,
        final_step_noise=fsn, num_steps=num_steps, trials=trials,
        trajectories_per_trial=traj, seed=seed, divergence_bound=bound,
        kl_direction=kl_dir, output=OutputSpec(path, fmt))


def dump_config(config: ExperimentConfig) -> str:
    return yaml.safe_dump(config.to_dict(), sort_keys=False)


def load_config(path: str | Path) -> ExperimentConfig:
    """Read a YAML or JSON config file.

    A JSON metadata sidecar written by ``simulate`` also loads, via its ``config`` key.
    """
    try:
        data = yaml.safe_load(Path(path).read_text())
    except yaml.YAMLError as exc:
        raise ConfigError("<file>", f"could not parse {path}: {exc}") from None
    if isinstance(data, dict) and "config" in data and "flowsde_version" in data:
        data = data["config"]
    return parse_config(data)
