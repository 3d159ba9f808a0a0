"""Experiment configuration: strict JSON documents validated into RunConfig.

Unknown keys are rejected (ParseError naming the key) so a stored manifest
reproduces the exact run.  Invariant violations (negative tolerances, the
alpha < 1/2 requirement for viscous experiments, missing per-experiment
fields) raise ValidationError with the violated rule spelled out.
"""

from __future__ import annotations

import json
import os
from typing import Literal, Optional

import numpy as np
import pydantic
from pydantic import BaseModel, ConfigDict, Field

from . import geometry
from .errors import ParseError, ValidationError

EXPERIMENTS = (
    "solve-elliptic",
    "green-check",
    "run-inviscid",
    "run-viscous",
    "sweep",
    "regularity-audit",
)

_VISCOUS_EXPERIMENTS = ("run-viscous", "sweep")


class MapSeries(BaseModel):
    model_config = ConfigDict(extra="forbid")
    to_disk: list[tuple[float, float]]
    from_disk: list[tuple[float, float]]


class DomainConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")
    family: Literal["disk", "mapped"] = "disk"
    alpha: float = Field(default=0.0, ge=0.0)
    c0: float = Field(default=1.0, gt=0.0)
    resolution: Optional[int] = Field(default=None, ge=16)
    map_series: Optional[MapSeries] = None


class NumericsConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")
    n: int = Field(default=128, ge=16)
    dt: Optional[float] = Field(default=None, gt=0.0)
    kappa: float = Field(default=0.5, gt=0.0)
    theta: float = Field(default=1.0, ge=0.0, le=1.0)
    tol_solve: float = Field(default=1e-8, gt=0.0, le=1e-4)
    tol_picard: float = Field(default=1e-5, gt=0.0)
    tol_div: float = Field(default=1e-6, gt=0.0)
    tol_audit: float = Field(default=0.1, gt=0.0)
    window_init: float = Field(default=0.25, gt=0.0)
    snapshot_cadence: int = Field(default=50, ge=1)


class InitialData(BaseModel):
    """Initial scalar profile; vorticity for flow experiments, the source
    term itself for solve-elliptic."""

    model_config = ConfigDict(extra="forbid")
    type: Literal["uniform", "radial_bump", "shielded_bump", "offset_bump", "zero"] = (
        "radial_bump"
    )
    center: tuple[float, float] = (0.0, 0.0)
    radius: float = Field(default=0.6, gt=0.0)
    amplitude: float = 1.0


class PhysicsConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")
    mu: Optional[float] = Field(default=None, gt=0.0)
    mu_list: Optional[list[float]] = None
    eta: float = Field(default=0.0, ge=0.0)
    beta: float = Field(default=0.0, ge=0.0, lt=1.0)
    T: float = Field(default=1.0, ge=0.0)
    initial_data: InitialData = InitialData()


class OutputConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")
    directory: str = "out"
    formats: list[Literal["json", "csv", "bin"]] = ["json", "csv", "bin"]


class RunConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")
    experiment: Literal[EXPERIMENTS]  # type: ignore[valid-type]
    domain: DomainConfig = DomainConfig()
    numerics: NumericsConfig = NumericsConfig()
    physics: PhysicsConfig = PhysicsConfig()
    output: OutputConfig = OutputConfig()
    seed: int = 0

    @pydantic.model_validator(mode="after")
    def _invariants(self):
        if self.experiment in _VISCOUS_EXPERIMENTS and self.domain.alpha >= 0.5:
            raise ValueError(
                f"alpha must be < 0.5 for viscous runs (got {self.domain.alpha})"
            )
        if self.experiment == "run-viscous" and self.physics.mu is None:
            raise ValueError("run-viscous requires physics.mu")
        if self.experiment == "sweep":
            mus = self.physics.mu_list
            if not mus:
                raise ValueError("sweep requires physics.mu_list")
            if any(m <= 0 for m in mus):
                raise ValueError("mu_list entries must be positive")
            if any(b >= a for a, b in zip(mus, mus[1:])):
                raise ValueError("mu_list must be strictly decreasing")
        if self.domain.family == "mapped" and self.domain.map_series is None:
            raise ValueError("mapped domains need map_series")
        return self

    def grid_resolution(self):
        return self.domain.resolution or self.numerics.n


def _raise_mapped(exc: pydantic.ValidationError):
    first = exc.errors()[0]
    loc = ".".join(str(p) for p in first["loc"])
    if first["type"] == "extra_forbidden":
        raise ParseError(f"unknown key {loc!r} in config") from exc
    msg = first["msg"].removeprefix("Value error, ")
    raise ValidationError(f"{loc}: {msg}" if loc else msg) from exc


def parse_config(source) -> RunConfig:
    """Validate a config from a dict, a JSON string, or a file path."""
    if isinstance(source, RunConfig):
        return source
    if isinstance(source, (str, os.PathLike)):
        text = None
        if isinstance(source, os.PathLike) or (
            len(str(source)) < 4096 and os.path.exists(source)
        ):
            with open(source, "r", encoding="utf-8") as fh:
                text = fh.read()
        else:
            text = str(source)
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ParseError(
                f"malformed JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}"
            ) from exc
    elif isinstance(source, dict):
        doc = source
    else:
        raise ParseError(f"unsupported config source type {type(source).__name__}")
    try:
        return RunConfig.model_validate(doc)
    except pydantic.ValidationError as exc:
        _raise_mapped(exc)


# ---------------------------------------------------------------------------
# initial-data profiles
# ---------------------------------------------------------------------------

def _smooth_bump(s2):
    out = np.zeros(s2.shape)
    m = s2 < 1.0
    out[m] = np.exp(1.0 - 1.0 / (1.0 - s2[m]))
    return out


def _shield_coefficient():
    # zero total circulation: int s w(s) (1 - c s^2) ds = 0
    s = np.linspace(0.0, 1.0, 20001)[1:-1]
    w = np.exp(1.0 - 1.0 / (1.0 - s**2))
    m1 = np.trapezoid(s * w, s)
    m3 = np.trapezoid(s**3 * w, s)
    return m1 / m3


_SHIELD_C = _shield_coefficient()


def initial_field(grid: geometry.Grid, spec: InitialData) -> geometry.ScalarField:
    """Sample the configured profile on the grid (compactly supported)."""
    cx, cy = spec.center
    zc = complex(cx, cy)
    amp = spec.amplitude
    R = spec.radius

    def fn(z):
        if spec.type == "zero":
            return np.zeros(z.shape)
        if spec.type == "uniform":
            return np.full(z.shape, amp)
        s2 = (np.abs(z - zc) / R) ** 2
        base = _smooth_bump(s2)
        if spec.type == "shielded_bump":
            return amp * base * (1.0 - _SHIELD_C * s2)
        return amp * base

    return geometry.ScalarField.from_function(grid, fn, name="omega0")
