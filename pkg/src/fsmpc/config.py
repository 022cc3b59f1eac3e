"""Experiment configuration: YAML files, built-in presets and validation."""
from __future__ import annotations

import copy
import math
import os
from pathlib import Path
from typing import List, Literal, Optional, Union

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from .egdclf import EgdclfSpec
from .exceptions import PreconditionError
from .model import UnicycleParams
from .ocp import CostConfig, Ellipse, SolverOptions

OUTPUT_DIR_ENV = "FSMPC_OUTPUT_DIR"
DEFAULT_OUTPUT_DIR = "fsmpc-out"

PRESET_OBSTACLES = [
    {"center": [6.0, 7.0], "shape": [[0.1, 0.0], [0.0, 0.4]]},
    {"center": [4.0, 0.0], "shape": [[3.5 / 7.0, 0.0], [0.0, 0.6 / 7.0]]},
]

_PRESET_COMMON = {
    "model": {"m": 10.0, "J": 20.0, "k": 5.0, "kappa": 15.0, "h": 1.0},
    "cost": {"rho": 1e5, "terminal_weight": 0.0, "obstacles": PRESET_OBSTACLES},
    "plant": {"kind": "continuous", "substeps": 20},
    "horizon_steps": 300,
}

PRESETS = {
    "sec6-cond1": {
        **_PRESET_COMMON,
        "egdclf": {"condition": 1, "N": 12, "alpha": 0.3, "sigma": 1e-3},
        "initial_state": [15.0, 15.0, -math.pi / 4, 0.0, 0.0],
    },
    "sec6-cond2": {
        **_PRESET_COMMON,
        "egdclf": {"condition": 2, "N": 12, "alpha": 0.3},
        "initial_state": [10.0, 0.0, math.pi / 2, -3.0, 0.0],
    },
}


class ConfigError(ValueError):
    """Invalid experiment configuration; ``errors`` lists ``(field, message)`` pairs."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(f"{loc}: {msg}" for loc, msg in self.errors))


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ModelSection(_Strict):
    m: float = Field(10.0, gt=0)
    J: float = Field(20.0, gt=0)
    k: float = Field(5.0, gt=0)
    kappa: float = Field(15.0, gt=0)
    h: float = Field(1.0, gt=0)


class EgdclfSection(_Strict):
    condition: Literal[1, 2] = 2
    N: int = 12
    alpha: float = Field(0.3, gt=0, lt=1)
    sigma: Optional[Union[float, List[float]]] = None

    @field_validator("N")
    @classmethod
    def _horizon(cls, v):
        if v < 8:
            raise ValueError(f"N must be >= 8 for the steering construction, got {v}")
        return v


class ObstacleSection(_Strict):
    center: List[float] = Field(min_length=2, max_length=2)
    shape: List[List[float]]


class CostSection(_Strict):
    rho: float = Field(0.0, ge=0)
    terminal_weight: float = Field(0.0, ge=0)
    obstacles: List[ObstacleSection] = []


class PlantSection(_Strict):
    kind: Literal["discrete", "continuous"] = "discrete"
    substeps: int = Field(20, ge=1)


class SolverSection(_Strict):
    max_outer: int = Field(8, ge=0)
    max_inner: int = Field(200, ge=1)
    mu0: float = Field(10.0, gt=0)
    growth: float = Field(10.0, ge=1)
    fd_step: float = Field(1e-6, gt=0)
    inner: Literal["gd", "lbfgs"] = "lbfgs"


class ExperimentConfig(_Strict):
    model: ModelSection = ModelSection()
    egdclf: EgdclfSection = EgdclfSection()
    cost: CostSection = CostSection()
    plant: PlantSection = PlantSection()
    solver: SolverSection = SolverSection()
    initial_state: Optional[List[float]] = None
    horizon_steps: int = Field(100, ge=1)
    stop_norm: float = Field(1e-3, ge=0)
    seed: int = 0
    output_dir: Optional[str] = None

    @field_validator("initial_state")
    @classmethod
    def _five_finite(cls, v):
        if v is None:
            return v
        if len(v) != 5 or not all(math.isfinite(c) for c in v):
            raise ValueError("initial_state must be 5 finite numbers [x, y, theta, v, omega]")
        return v

    # -- conversion to library objects ------------------------------------

    def params(self) -> UnicycleParams:
        return UnicycleParams(**self.model.model_dump())

    def spec(self) -> EgdclfSpec:
        e = self.egdclf
        return EgdclfSpec(e.condition, e.N, e.alpha, self.model.h, e.sigma if e.condition == 1 else None)

    def cost_config(self) -> CostConfig:
        obstacles = tuple(Ellipse(o.center, o.shape) for o in self.cost.obstacles)
        return CostConfig(obstacles, self.cost.rho, self.cost.terminal_weight)

    def solver_options(self) -> SolverOptions:
        return SolverOptions(**self.solver.model_dump())

    def x0(self) -> np.ndarray:
        if self.initial_state is not None:
            return np.array(self.initial_state, dtype=float)
        rng = np.random.default_rng(self.seed)
        d = rng.standard_normal(5)
        return d / np.linalg.norm(d) * rng.uniform(0.0, 10.0)

    def resolve_output_dir(self, override: Optional[str] = None) -> Path:
        return Path(override or self.output_dir or os.environ.get(OUTPUT_DIR_ENV) or DEFAULT_OUTPUT_DIR)


def _merge(base: dict, extra: dict) -> dict:
    out = copy.deepcopy(base)
    for key, val in extra.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], val)
        else:
            out[key] = copy.deepcopy(val)
    return out


def load_config(path=None, preset: Optional[str] = None, overrides: Optional[dict] = None) -> ExperimentConfig:
    """Build a validated config from a preset, a YAML file and overrides, in that order.

    Raises :class:`ConfigError` with field-level messages on any problem,
    including violations detected by the library constructors.
    """
    raw: dict = {}
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError([("preset", f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")])
        raw = copy.deepcopy(PRESETS[preset])
    if path is not None:
        try:
            with open(path) as fh:
                loaded = yaml.safe_load(fh) or {}
        except OSError as exc:
            raise ConfigError([("config", str(exc))]) from exc
        except yaml.YAMLError as exc:
            raise ConfigError([("config", f"YAML parse error: {exc}")]) from exc
        if not isinstance(loaded, dict):
            raise ConfigError([("config", "top level must be a mapping")])
        raw = _merge(raw, loaded)
    if overrides:
        raw = _merge(raw, overrides)
    try:
        cfg = ExperimentConfig.model_validate(raw)
    except ValidationError as exc:
        raise ConfigError(
            [(".".join(str(p) for p in err["loc"]) or "config", err["msg"]) for err in exc.errors()]
        ) from None
    errors = []
    for section, build in (
        ("model", cfg.params),
        ("egdclf", cfg.spec),
        ("cost", cfg.cost_config),
        ("solver", cfg.solver_options),
    ):
        try:
            build()
        except PreconditionError as exc:
            errors.append((section, str(exc)))
    if errors:
        raise ConfigError(errors)
    return cfg
