"""Experiment configuration: TOML text in, validated :class:`ExperimentConfig` out.

Sections: ``[experiment]``, ``[model]``, ``[sweep]``, ``[monte_carlo]``,
``[output]``. Unknown keys anywhere are rejected. See README.md for the full
grammar and defaults.
"""
from __future__ import annotations

import enum
from typing import Literal

import tomlkit
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from mimo_spatia.covmodel import ArrayKind


class ConfigError(ValueError):
    """Raised for unparsable or invalid configs; ``key_path`` names the offending entry."""

    def __init__(self, message: str, key_path: str | None = None, line: int | None = None,
                 col: int | None = None):
        self.key_path = key_path
        self.line = line
        self.col = col
        super().__init__(message)


class ExperimentKind(str, enum.Enum):
    SPECTRUM = "spectrum"
    HARDENING_SWEEP = "hardening_sweep"
    NMSE_VS_PARAM = "nmse_vs_param"
    NMSE_VS_SNR = "nmse_vs_snr"
    CONTAMINATION = "contamination"
    TABLE1 = "table1"


SweepAxis = Literal["r", "sigma_db", "M", "snr_db", "interferer_snr_db"]


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class ExperimentSection(_Section):
    kind: ExperimentKind
    name: str | None = None


class ModelSection(_Section):
    arrays: tuple[ArrayKind, ...] = (ArrayKind.ULA,)
    M: int = Field(100, ge=1)
    r: float = Field(0.0, ge=0.0, le=1.0)
    sigma_db: float = Field(0.0, ge=0.0)
    theta_deg: float = Field(30.0, ge=-180.0, lt=180.0)
    phi_deg: float = Field(30.0, ge=-90.0, lt=90.0)
    beta: float = Field(1.0, gt=0.0)
    snr_db: float = 10.0
    interferer_snr_db: tuple[float, ...] = (10.0, 0.0, -10.0)

    @field_validator("arrays", mode="before")
    @classmethod
    def _one_or_many(cls, v):
        return (v,) if isinstance(v, str) else v

    @field_validator("arrays")
    @classmethod
    def _nonempty(cls, v):
        if not v:
            raise ValueError("at least one array kind is required")
        return v


class SweepSection(_Section):
    axis: SweepAxis | None = None
    values: tuple[float, ...] | None = None
    series_axis: SweepAxis | None = None
    series_values: tuple[float, ...] | None = None

    @model_validator(mode="after")
    def _values_nonempty(self):
        for name in ("values", "series_values"):
            v = getattr(self, name)
            if v is not None and len(v) == 0:
                raise ValueError(f"{name} must not be empty")
        if self.series_values is not None and self.series_axis is None:
            raise ValueError("series_values given without series_axis")
        return self


class MonteCarloSection(_Section):
    n: int = Field(1000, ge=1)
    seed: int = Field(0, ge=0)
    batch_size: int = Field(50, ge=1)
    azimuth_points: int = Field(64, ge=1)
    upa_azimuth_points: int = Field(16, ge=1)
    upa_elevation_points: int = Field(16, ge=1)


class OutputSection(_Section):
    stem: str | None = None


_AXIS_DOMAINS = {
    "r": (0.0, 1.0),
    "sigma_db": (0.0, None),
    "M": (1.0, None),
    "snr_db": (None, None),
    "interferer_snr_db": (None, None),
}


class ExperimentConfig(_Section):
    experiment: ExperimentSection
    model: ModelSection = ModelSection()
    sweep: SweepSection = SweepSection()
    monte_carlo: MonteCarloSection = MonteCarloSection()
    output: OutputSection = OutputSection()

    @model_validator(mode="after")
    def _check_sweep_domains(self):
        for axis_name, values_name in (("axis", "values"), ("series_axis", "series_values")):
            axis = getattr(self.sweep, axis_name)
            values = getattr(self.sweep, values_name)
            if axis is None or values is None:
                continue
            lo, hi = _AXIS_DOMAINS[axis]
            for i, v in enumerate(values):
                if (lo is not None and v < lo) or (hi is not None and v > hi):
                    raise _DomainError(f"sweep.{values_name}.{i}", f"{axis} value {v} outside its domain")
                if axis == "M" and v != int(v):
                    raise _DomainError(f"sweep.{values_name}.{i}", f"M must be an integer, got {v}")
        return self

    @property
    def kind(self) -> ExperimentKind:
        return self.experiment.kind

    @property
    def seed(self) -> int:
        return self.monte_carlo.seed

    def with_seed(self, seed: int) -> "ExperimentConfig":
        return self.model_copy(update={"monte_carlo": self.monte_carlo.model_copy(update={"seed": seed})})

    def to_dict(self) -> dict:
        return self.model_dump(mode="json", exclude_none=True)


class _DomainError(ValueError):
    def __init__(self, key_path: str, message: str):
        self.key_path = key_path
        super().__init__(f"{key_path}: {message}")


def _key_path(loc) -> str:
    return ".".join(str(p) for p in loc if p not in ("function-after", "function-before"))


def from_dict(data: dict) -> ExperimentConfig:
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        err = exc.errors()[0]
        ctx_err = (err.get("ctx") or {}).get("error")
        if isinstance(ctx_err, _DomainError):
            raise ConfigError(str(ctx_err), ctx_err.key_path) from None
        path = _key_path(err["loc"])
        raise ConfigError(f"{path or '<root>'}: {err['msg']}", path or None) from None


def parse_config(text: str) -> ExperimentConfig:
    """Parse TOML config text into a validated config with defaults applied."""
    try:
        doc = tomlkit.parse(text)
    except tomlkit.exceptions.ParseError as exc:
        raise ConfigError(f"config parse error at line {exc.line}, column {exc.col}: {exc}",
                          line=exc.line, col=exc.col) from None
    return from_dict(doc.unwrap())


def serialize_config(cfg: ExperimentConfig) -> str:
    return tomlkit.dumps(cfg.to_dict())
