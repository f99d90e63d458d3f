"""Declarative experiment configuration with strict JSON validation."""
from __future__ import annotations

import json
from pathlib import Path
from typing import Literal, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from . import systems
from .derivatives import TvdConfig
from .noise import TYPE1, NoiseSpec
from .pipeline import PipelineConfig
from .screening import ScreeningConfig
from .tuning import SolverBudget, TuningConfig


class ConfigError(ValueError):
    pass


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class SystemBlock(_Strict):
    name: Literal["Lorenz3", "Lorenz96", "HopfNormal", "LogisticMap", "CylinderMeanField"] = "Lorenz3"
    params: dict[str, Union[float, list[float]]] = Field(default_factory=dict)
    x0: Union[list[float], float, None] = None
    dt: float = Field(0.001, gt=0)
    t_end: float = Field(60.0, gt=0)
    steps: int = Field(1000, ge=1)

    @model_validator(mode="after")
    def _check(self):
        self.spec()  # raises on bad parameters
        return self

    def spec(self) -> systems.SystemSpec:
        factory = {
            "Lorenz3": systems.lorenz3,
            "Lorenz96": systems.lorenz96,
            "HopfNormal": systems.hopf,
            "LogisticMap": systems.logistic,
            "CylinderMeanField": systems.cylinder,
        }[self.name]
        try:
            return factory(**self.params)
        except TypeError as exc:
            raise ValueError(f"bad parameters for {self.name}: {exc}") from None


class NoiseBlock(_Strict):
    noise_type: Literal["Type1_OnDerivative", "Type2_OnState"] = TYPE1
    sigma: float = Field(0.0, ge=0)
    sigmas: list[float] | None = None

    @field_validator("sigmas")
    @classmethod
    def _nonempty(cls, v):
        if v is not None:
            if not v:
                raise ValueError("sigma sweep must not be empty")
            if any(s < 0 for s in v):
                raise ValueError("sigma values must be non-negative")
        return v

    def spec(self, seed: int, sigma: float | None = None) -> NoiseSpec:
        return NoiseSpec(self.noise_type, self.sigma if sigma is None else sigma, seed)


class DerivativeBlock(_Strict):
    method: Literal["measured", "tvd", "fd"] = "measured"
    alpha: Union[float, Literal["auto"]] = "auto"
    max_iter: int = Field(200, ge=1)
    tol: float = Field(1e-6, gt=0)
    boundary: Literal["clamped", "extrapolated"] = "clamped"
    states: Literal["smoothed", "measured"] = "smoothed"

    def tvd(self) -> TvdConfig:
        a = 1e-2 if self.alpha == "auto" else float(self.alpha)
        return TvdConfig(alpha=a, max_iter=self.max_iter, tol=self.tol, boundary=self.boundary)


class DictionaryBlock(_Strict):
    degree: int = Field(5, ge=1)
    include_constant: bool = True


class ScreeningBlock(_Strict):
    lambda1: float = Field(1e-6, gt=0)
    eps: float = Field(0.0, ge=0)
    s_max: int = Field(100, ge=1)
    p_max: int = Field(100, ge=1)


class TuningBlock(_Strict):
    k_max: int = Field(5, ge=1)
    m: int = Field(50, ge=2)
    T: int = Field(5, ge=2)
    r_override: float | None = Field(None, gt=0)
    fold_scheme: Literal["contiguous", "strided"] = "contiguous"
    cv_coef: Literal["ridge", "refit"] = "ridge"


class SolverBlock(_Strict):
    box: float = Field(1000.0, gt=0)
    time_limit: float = Field(600.0, gt=0)
    gap_target: float = Field(0.0, ge=0)
    node_limit: int | None = Field(2000, ge=1)


class BaselineBlock(_Strict):
    threshold: float = Field(0.1, ge=0)
    ridge: float = Field(0.05, ge=0)
    iters: int = Field(20, ge=1)


class ExperimentConfig(_Strict):
    system: SystemBlock = Field(default_factory=SystemBlock)
    noise: NoiseBlock = Field(default_factory=NoiseBlock)
    derivative: DerivativeBlock = Field(default_factory=DerivativeBlock)
    dictionary: DictionaryBlock = Field(default_factory=DictionaryBlock)
    screening: ScreeningBlock = Field(default_factory=ScreeningBlock)
    tuning: TuningBlock = Field(default_factory=TuningBlock)
    solver: SolverBlock = Field(default_factory=SolverBlock)
    baseline: BaselineBlock = Field(default_factory=BaselineBlock)
    seeds: list[int] = Field(default_factory=lambda: [0])
    output_dir: str = "out"

    @field_validator("seeds")
    @classmethod
    def _seeds(cls, v):
        if not v:
            raise ValueError("at least one seed is required")
        return v

    def pipeline(self, dummy_columns=()) -> PipelineConfig:
        return PipelineConfig(
            degree=self.dictionary.degree,
            include_constant=self.dictionary.include_constant,
            screening=ScreeningConfig(**self.screening.model_dump()),
            tuning=TuningConfig(**self.tuning.model_dump()),
            budget=SolverBudget(**self.solver.model_dump()),
            dummy_columns=tuple(dummy_columns),
        )

    def to_json(self) -> str:
        return json.dumps(self.model_dump(mode="json"), indent=2, sort_keys=True) + "\n"


def load_config(path=None, overrides: dict | None = None) -> ExperimentConfig:
    """Read and validate a JSON config; a missing path gives the defaults."""
    raw = {}
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file {p} does not exist")
        try:
            raw = json.loads(p.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{p}: invalid JSON ({exc})") from None
    for key, val in (overrides or {}).items():
        raw[key] = val
    try:
        return ExperimentConfig.model_validate(raw)
    except ValidationError as exc:
        raise ConfigError(_summarize(exc)) from None


def _summarize(exc: ValidationError) -> str:
    lines = []
    for e in exc.errors():
        where = ".".join(str(p) for p in e["loc"]) or "<root>"
        lines.append(f"{where}: {e['msg']}")
    return "invalid config:\n  " + "\n  ".join(lines)

