"""Run configuration: JSON documents validated before any computation."""
from __future__ import annotations

import json
from importlib import resources
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .integrator import IntegratorConfig
from .ld import FIXED, VARIABLE, LdConfig
from .models import ModelError, SystemModel, model_from_dict
from .periodic import ContinuationConfig, ManifoldConfig
from .slices import SliceSpec, onshell_window


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending key or line."""


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class ModelSection(_Strict):
    kind: Literal["barbanis2dof", "barbanis3dof"] = "barbanis2dof"
    params: dict[str, float] = Field(default_factory=dict)
    saddle: str | None = None

    def build(self) -> SystemModel:
        return model_from_dict({"model": self.kind, **self.params})


class EnergySection(_Strict):
    total: float | None = None
    excess: float | None = None

    @model_validator(mode="after")
    def _one(self):
        if (self.total is None) == (self.excess is None):
            raise ValueError("give exactly one of 'total' or 'excess'")
        return self

    def resolve(self, model: SystemModel, saddle: str | None = None) -> float:
        if self.total is not None:
            return self.total
        return model.saddle(saddle).energy + self.excess


class SliceSection(_Strict):
    """``uxpx``: 2-DoF ``{y = k, p_y > 0}``; ``x``/``y``/``z``: 3-DoF bottleneck surfaces."""

    surface: Literal["uxpx", "x", "y", "z"] = "uxpx"
    k: float = 0.0
    ranges: Literal["auto"] | tuple[tuple[float, float], tuple[float, float]] = "auto"
    resolution: int | tuple[int, int] = 300
    name: str | None = None

    @field_validator("resolution")
    @classmethod
    def _res(cls, v):
        vals = (v, v) if isinstance(v, int) else v
        if min(vals) < 2:
            raise ValueError("resolution must be at least 2 per axis")
        return v

    @field_validator("ranges")
    @classmethod
    def _ranges(cls, v):
        if v != "auto":
            for lo, hi in v:
                if not hi > lo:
                    raise ValueError("each range needs hi > lo")
        return v

    def label(self) -> str:
        if self.name:
            return self.name
        return f"uxpx_k{self.k:+.3f}" if self.surface == "uxpx" else f"u{self.surface}p{self.surface}"

    def build(self, model: SystemModel, e: float, saddle: str | None, ld: LdConfig) -> SliceSpec:
        if self.surface == "uxpx":
            if model.dof != 2:
                raise ModelError("surface 'uxpx' needs the 2-DoF model")
            base = SliceSpec.uxpx_2dof(self.k)
            ranges = onshell_window(model, base, e) if self.ranges == "auto" else self.ranges
            return SliceSpec.uxpx_2dof(self.k, *ranges)
        if model.dof != 3:
            raise ModelError(f"surface {self.surface!r} needs the 3-DoF model")
        base = SliceSpec.bottleneck_3dof(model, self.surface, ((0.0, 1.0), (0.0, 1.0)), saddle)
        if self.ranges == "auto":
            axis = "xyz".index(self.surface)
            lo, hi = ld.region(model)
            ranges = onshell_window(model, base, e, (lo[axis], hi[axis]))
        else:
            ranges = self.ranges
        return SliceSpec.bottleneck_3dof(model, self.surface, ranges, saddle)


class LdSection(_Strict):
    p_exponent: float = 0.5
    tau: float = 50.0
    mode: Literal["fixed_time", "variable_time"] = FIXED
    saddle_region: tuple[tuple[float, ...], tuple[float, ...]] | None = None
    escape_radius: float = 50.0
    detect_rule: Literal["ld", "stay_time"] = "ld"

    def build(self, saddle: str | None) -> LdConfig:
        return LdConfig(self.p_exponent, self.tau, self.mode, self.saddle_region, self.escape_radius, saddle)


class IntegratorSection(_Strict):
    rel_tol: float = 1e-12
    abs_tol: float = 1e-12
    max_step: float = 0.5
    escape_radius: float = 50.0
    max_time: float = 1.0e4

    def build(self) -> IntegratorConfig:
        return IntegratorConfig(self.rel_tol, self.abs_tol, self.max_step, self.escape_radius, self.max_time)


class ContinuationSection(_Strict):
    seed_amplitude: float = 1e-4
    d_tol: float = 1e-10
    max_iter: int = 25
    step_max: float = 0.05
    energy_tol: float = 1e-10
    samples: int = 1001

    def build(self, saddle: str | None) -> ContinuationConfig:
        return ContinuationConfig(seed_amplitude=self.seed_amplitude, d_tol=self.d_tol, max_iter=self.max_iter,
                                  step_max=self.step_max, energy_tol=self.energy_tol, samples=self.samples,
                                  saddle=saddle or "bottom")


class ManifoldSection(_Strict):
    epsilon: float = 1e-6
    stability: Literal["stable", "unstable", "both"] = "both"
    branch: Literal["+", "-", "both"] = "both"
    time: float | None = None
    n_fibers: int = 50

    def build(self) -> ManifoldConfig:
        return ManifoldConfig(self.epsilon, self.stability, self.branch, self.time, self.n_fibers)


class SectionSection(_Strict):
    resolution: int = 40
    max_crossings: int = 100
    max_time: float = 1.0e4


Command = Literal["ld_map", "po_family", "manifolds", "psection", "validate_nhim"]


class RunConfig(_Strict):
    command: Command
    model: ModelSection = ModelSection()
    energy: EnergySection | None = None
    energies: list[EnergySection] | None = None
    slices: list[SliceSection] = Field(default_factory=list)
    ld: LdSection = LdSection()
    integrator: IntegratorSection = IntegratorSection()
    continuation: ContinuationSection = ContinuationSection()
    manifold: ManifoldSection = ManifoldSection()
    section: SectionSection = SectionSection()
    output_dir: str = "out"
    workers: int | None = None
    image: bool = True

    @model_validator(mode="after")
    def _consistent(self):
        if self.command == "po_family":
            if not self.energies:
                raise ValueError("po_family needs 'energies'")
            if self.model.kind != "barbanis2dof":
                raise ValueError("periodic orbits are computed for the 2-DoF model only")
        else:
            if self.energy is None:
                raise ValueError(f"{self.command} needs 'energy'")
        if self.command in ("manifolds", "validate_nhim", "psection") and self.model.kind != "barbanis2dof":
            raise ValueError(f"{self.command} is defined for the 2-DoF model only")
        if self.command in ("ld_map", "validate_nhim") and not self.slices:
            raise ValueError(f"{self.command} needs at least one entry in 'slices'")
        if self.workers is not None and self.workers < 1:
            raise ValueError("workers must be positive")
        return self

    def build_model(self) -> SystemModel:
        return self.model.build()


def _format_validation(exc: ValidationError) -> str:
    lines = []
    for err in exc.errors():
        loc = ".".join(str(p) for p in err["loc"]) or "<root>"
        lines.append(f"{loc}: {err['msg']}")
    return "; ".join(lines)


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{source}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    return config_from_dict(data, source)


def config_from_dict(data: dict, source: str = "<config>") -> RunConfig:
    try:
        cfg = RunConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(f"{source}: {_format_validation(exc)}") from exc
    try:
        model = cfg.build_model()
        if cfg.model.saddle is not None:
            model.saddle(cfg.model.saddle)
        cfg.ld.build(cfg.model.saddle)
        cfg.integrator.build()
        cfg.continuation.build(cfg.model.saddle)
        cfg.manifold.build()
    except (ValueError, TypeError, KeyError) as exc:
        raise ConfigError(f"{source}: {exc}") from exc
    return cfg


def load_config(path) -> RunConfig:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from exc
    return parse_config(text, str(path))


def recipe_names() -> list[str]:
    root = resources.files("nhimld").joinpath("recipes")
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def load_recipe(name: str) -> RunConfig:
    root = resources.files("nhimld").joinpath("recipes")
    path = root.joinpath(f"{name}.json")
    if not path.is_file():
        raise ConfigError(f"unknown recipe {name!r}; available: {', '.join(recipe_names())}")
    return parse_config(path.read_text(), f"recipe {name}")
