"""Experiment configuration: a single JSON document, validated into ExperimentConfig."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import kinematics as kin
from .energy import QuadPlan
from .errors import ConfigError
from .geometry import Box

EXPERIMENTS = ("upscale", "localize", "iterate", "reversed", "crystal", "cell", "validate-density")
MIN_CELLS_PER_RADIUS = 4


@dataclass
class ExperimentConfig:
    experiment: str
    deformation: dict = field(default_factory=lambda: {"kind": "two_level_shear", "mu": 0.7, "gamma": 0.3})
    densities: list = field(default_factory=lambda: [{"name": "sin2_periodic", "period": 0.8}])
    n_grid: list = field(default_factory=lambda: [16, 32, 64, 128, 256, 512, 1024])
    r_grid: list = field(default_factory=lambda: [0.1])
    kernel: str = "bump"
    quadrature: dict = field(default_factory=dict)
    refine: int = 0
    seed: int = 0
    output: str = "out"
    params: dict = field(default_factory=dict)
    checks: dict = field(default_factory=dict)

    def validate(self) -> ExperimentConfig:
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"experiment must be one of {EXPERIMENTS}, got {self.experiment!r}")
        needs_n = self.experiment in ("upscale", "iterate", "reversed")
        needs_r = self.experiment in ("upscale", "localize", "iterate", "reversed")
        for name, grid, needed in (("n_grid", self.n_grid, needs_n), ("r_grid", self.r_grid, needs_r)):
            if needed and not grid:
                raise ConfigError(f"{name} must not be empty")
            if len(grid) > 1:
                d = np.diff(np.asarray(grid, dtype=float))
                if not (np.all(d > 0) or np.all(d < 0)):
                    raise ConfigError(f"{name} must be strictly monotone")
        if any(int(n) != n or n < 1 for n in self.n_grid):
            raise ConfigError("n_grid entries must be positive integers")
        if any(r <= 0 for r in self.r_grid):
            raise ConfigError("r_grid entries must be positive")
        if self.quadrature.get("cells_per_radius", 8) < MIN_CELLS_PER_RADIUS:
            raise ConfigError(f"kernel radius must span at least {MIN_CELLS_PER_RADIUS} grid cells")
        if self.refine < 0:
            raise ConfigError("refine must be non-negative")
        if not (0 <= int(self.seed) < 2 ** 64):
            raise ConfigError("seed must fit in an unsigned 64-bit integer")
        return self

    def plan(self) -> QuadPlan:
        try:
            plan = QuadPlan(**self.quadrature)
        except TypeError as exc:
            raise ConfigError(f"bad quadrature settings: {exc}") from None
        for _ in range(self.refine):
            plan = plan.refined()
        return plan

    def to_dict(self) -> dict:
        return asdict(self)


def load_config(path, **overrides) -> ExperimentConfig:
    try:
        raw = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return config_from_dict(raw, **overrides)


def config_from_dict(raw: dict, **overrides) -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    raw = dict(raw)
    if "density" in raw and "densities" not in raw:
        raw["densities"] = [raw.pop("density")]
    known = set(ExperimentConfig.__dataclass_fields__)
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    if "experiment" not in raw:
        raise ConfigError("config needs an 'experiment'")
    cfg = ExperimentConfig(**raw)
    cfg = replace(cfg, **{k: v for k, v in overrides.items() if v is not None})
    return cfg.validate()


def build_deformation(desc: dict) -> kin.StructuredDeformation:
    """Closed-form registry: affine, two_level_shear (1D or with s, m), step_jump."""
    desc = dict(desc)
    kind = desc.pop("kind", None)
    dom = desc.pop("domain", None)
    domain = Box(np.asarray(dom[0], dtype=float), np.asarray(dom[1], dtype=float)) if dom else None
    try:
        if kind == "affine":
            return kin.affine(desc["F"], desc.get("b"), desc.get("G"), domain)
        if kind in ("two_level_shear", "two-level-shear"):
            if "s" in desc:
                return kin.two_level_shear(desc["s"], desc["m"], desc["mu"], desc["gamma"], desc.get("x0"), domain)
            return kin.two_level_shear_1d(desc["mu"], desc["gamma"], domain)
        if kind in ("step_jump", "step-jump"):
            return kin.step_jump(desc["jump"], desc["position"], desc.get("axis", 0), desc.get("F"), desc.get("G"),
                                 domain, desc.get("b"))
    except KeyError as exc:
        raise ConfigError(f"deformation {kind!r} is missing {exc}") from None
    raise ConfigError(f"unknown deformation kind {kind!r}; known: affine, two_level_shear, step_jump")
