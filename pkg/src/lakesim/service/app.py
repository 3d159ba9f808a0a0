"""FastAPI service around the experiment runner.

Long experiments are submitted as jobs executed on a single worker thread
(runs are CPU-bound and deterministic; serializing them keeps memory
bounded); quick probes (green-check, weighted norms) answer synchronously.
The CLI is a thin client of these endpoints.
"""

from __future__ import annotations

import math
import threading
import uuid
from concurrent.futures import ThreadPoolExecutor

import numpy as np
from fastapi import FastAPI, HTTPException

from .. import __version__, experiments
from ..config import RunConfig, initial_field
from ..elliptic import green_disk
from ..geometry import build_domain, build_grid, weighted_norm
from .models import (
    GreenCheckRequest,
    GreenCheckResponse,
    HealthResponse,
    JobStatus,
    NormRequest,
    NormResponse,
    SubmitRequest,
    SubmitResponse,
)


class JobStore:
    def __init__(self):
        self._lock = threading.Lock()
        self._jobs = {}
        self._pool = ThreadPoolExecutor(max_workers=1)

    def submit(self, config: RunConfig, out_dir):
        job_id = uuid.uuid4().hex[:12]
        record = {
            "job_id": job_id,
            "state": "queued",
            "experiment": config.experiment,
            "out_dir": None,
            "error": None,
            "report": None,
        }
        with self._lock:
            self._jobs[job_id] = record

        def work():
            with self._lock:
                record["state"] = "running"
            try:
                result = experiments.run(config, out_dir=out_dir)
                with self._lock:
                    record["out_dir"] = str(result.out_dir)
                    record["report"] = result.report if result.ok else None
                    record["state"] = "done" if result.ok else "failed"
                    record["error"] = result.failure
            except Exception as exc:  # job must never take the worker down
                with self._lock:
                    record["state"] = "failed"
                    record["error"] = f"{type(exc).__name__}: {exc}"

        self._pool.submit(work)
        return job_id

    def get(self, job_id):
        with self._lock:
            rec = self._jobs.get(job_id)
            return dict(rec) if rec is not None else None


def create_app() -> FastAPI:
    app = FastAPI(title="lakesim", version=__version__)
    store = JobStore()
    app.state.jobs = store

    @app.get("/api/health", response_model=HealthResponse)
    def health():
        return HealthResponse(status="ok", version=__version__)

    @app.post("/api/experiments", response_model=SubmitResponse)
    def submit(req: SubmitRequest):
        job_id = store.submit(req.config, req.out_dir)
        return SubmitResponse(job_id=job_id, state="queued")

    @app.get("/api/experiments/{job_id}", response_model=JobStatus)
    def status(job_id: str):
        rec = store.get(job_id)
        if rec is None:
            raise HTTPException(status_code=404, detail=f"unknown job {job_id}")
        return JobStatus(**{k: rec[k] for k in
                            ("job_id", "state", "experiment", "out_dir", "error")})

    @app.get("/api/experiments/{job_id}/report")
    def report(job_id: str):
        rec = store.get(job_id)
        if rec is None:
            raise HTTPException(status_code=404, detail=f"unknown job {job_id}")
        if rec["state"] != "done":
            raise HTTPException(status_code=409,
                                detail=f"job {job_id} is {rec['state']}")
        return rec["report"]

    @app.post("/api/green-check", response_model=GreenCheckResponse)
    def green_check(req: GreenCheckRequest):
        rng = np.random.default_rng(req.seed)
        n = req.pairs
        x = np.sqrt(rng.uniform(0, 1, n)) * np.exp(2j * math.pi * rng.uniform(0, 1, n))
        y = np.sqrt(rng.uniform(0, 1, n)) * np.exp(2j * math.pi * rng.uniform(0, 1, n))
        ystar = y / np.abs(y) ** 2
        lhs = np.abs(x - ystar) ** 2 * np.abs(y) ** 2
        rhs = np.abs(x - y) ** 2 + (1 - np.abs(x) ** 2) * (1 - np.abs(y) ** 2)
        return GreenCheckResponse(
            pairs=n,
            identity_max_deviation=float(np.abs(lhs - rhs).max()),
            symmetry_max_deviation=float(
                np.abs(green_disk(x, y) - green_disk(y, x)).max()
            ),
        )

    @app.post("/api/norm", response_model=NormResponse)
    def norm(req: NormRequest):
        domain = build_domain(req.config.domain)
        grid = build_grid(domain, req.config.grid_resolution(),
                          kappa=req.config.numerics.kappa)
        field = initial_field(grid, req.config.physics.initial_data)
        p = math.inf if req.p == float("inf") else req.p
        return NormResponse(
            value=weighted_norm(field, p, req.weight_mode),
            n_interior=grid.n_interior,
        )

    return app


app = create_app()
