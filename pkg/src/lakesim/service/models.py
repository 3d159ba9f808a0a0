"""Request/response models of the experiment service."""

from __future__ import annotations

from typing import Optional

from pydantic import BaseModel, ConfigDict

from ..config import RunConfig


class SubmitRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")
    config: RunConfig
    out_dir: Optional[str] = None


class SubmitResponse(BaseModel):
    job_id: str
    state: str


class JobStatus(BaseModel):
    job_id: str
    state: str                      # queued | running | done | failed
    experiment: str
    out_dir: Optional[str] = None
    error: Optional[str] = None


class GreenCheckRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")
    pairs: int = 10000
    seed: int = 0


class GreenCheckResponse(BaseModel):
    pairs: int
    identity_max_deviation: float
    symmetry_max_deviation: float


class NormRequest(BaseModel):
    """Quick weighted-norm probe of a configured initial profile."""

    model_config = ConfigDict(extra="forbid")
    config: RunConfig
    p: float = 2.0
    weight_mode: str = "b"


class NormResponse(BaseModel):
    value: float
    n_interior: int


class HealthResponse(BaseModel):
    status: str
    version: str
