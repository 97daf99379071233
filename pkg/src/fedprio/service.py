"""HTTP service wrapping the simulator.

Synchronous endpoints expose the scoring pipeline (score a criteria tuple,
turn raw cohort measurements into aggregation weights); experiment and sweep
runs are submitted as jobs, executed one at a time on a worker thread, and
polled for progress. Reports are served as the same CSV files a CLI run
writes.

    GET  /health
    POST /score                  scores for criteria tuples
    POST /weights                cohort weights from raw criteria measurements
    POST /experiments            submit an experiment config -> job id
    POST /sweeps                 submit a sweep config -> job id
    GET  /jobs                   list jobs
    GET  /jobs/{id}              job status and progress
    GET  /jobs/{id}/records      per-round records of a finished/running job
    GET  /jobs/{id}/reports      available CSV reports
    GET  /jobs/{id}/reports/{name}
"""

from __future__ import annotations

import tempfile
import threading
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Literal

import numpy as np
from fastapi import FastAPI, HTTPException
from fastapi.responses import PlainTextResponse
from pydantic import BaseModel, Field

from . import __version__
from .config import parse_config_dict, parse_sweep_dict
from .criteria import CohortCriteria, normalize_cohort
from .errors import ConfigurationError
from .harness import run_single, run_sweep
from .scoring import compute_weights, score_mean, score_prioritized

REPORT_NAMES = (
    "trace.csv",
    "device_accuracy.csv",
    "target_table.csv",
    "gain_table.csv",
    "comparison.csv",
)


# --------------------------------------------------------------------------
# Request/response models
# --------------------------------------------------------------------------


class ScoreRequest(BaseModel):
    vectors: list[list[float]] = Field(..., description="criteria tuples, priority order")
    score_fn: Literal["prioritized", "mean"] = "prioritized"


class ScoreResponse(BaseModel):
    scores: list[float]


class ClientCriteria(BaseModel):
    client_id: str
    raw: dict[str, float] = Field(..., description="raw criterion measurements by name")


class WeightsRequest(BaseModel):
    clients: list[ClientCriteria]
    ordering: list[str] = Field(..., description="criterion names, highest priority first")
    score_fn: Literal["prioritized", "mean"] = "prioritized"


class WeightsResponse(BaseModel):
    weights: dict[str, float]
    z: float
    normalized: dict[str, dict[str, float]]


class JobSubmission(BaseModel):
    config: dict


class JobCreated(BaseModel):
    job_id: str
    kind: Literal["experiment", "sweep"]


class JobStatus(BaseModel):
    job_id: str
    kind: Literal["experiment", "sweep"]
    state: Literal["queued", "running", "done", "failed"]
    rounds_completed: int
    global_accuracy: float | None = None
    error: str | None = None
    experiment_ids: list[str] = []


class RoundSummary(BaseModel):
    round: int
    global_accuracy: float
    z: float
    cohort: list[str]
    weights: dict[str, float]


class HealthResponse(BaseModel):
    status: str
    version: str


# --------------------------------------------------------------------------
# Job registry
# --------------------------------------------------------------------------


class Job:
    def __init__(self, job_id: str, kind: str, out_dir: Path):
        self.job_id = job_id
        self.kind = kind
        self.out_dir = out_dir
        self.state = "queued"
        self.error: str | None = None
        self.rounds_completed = 0
        self.global_accuracy: float | None = None
        self.experiment_ids: list[str] = []
        self.records: list[RoundSummary] = []
        self.lock = threading.Lock()

    def on_round(self, record) -> None:
        with self.lock:
            self.rounds_completed += 1
            self.global_accuracy = record.global_accuracy
            self.records.append(
                RoundSummary(
                    round=record.round_index,
                    global_accuracy=record.global_accuracy,
                    z=record.z,
                    cohort=list(record.cohort_ids),
                    weights=record.weights,
                )
            )

    def status(self) -> JobStatus:
        with self.lock:
            return JobStatus(
                job_id=self.job_id,
                kind=self.kind,
                state=self.state,
                rounds_completed=self.rounds_completed,
                global_accuracy=self.global_accuracy,
                error=self.error,
                experiment_ids=list(self.experiment_ids),
            )


class JobRegistry:
    """In-memory job table with a single worker thread (runs stay deterministic)."""

    def __init__(self, out_root: Path):
        self.out_root = out_root
        self.jobs: dict[str, Job] = {}
        self.executor = ThreadPoolExecutor(max_workers=1)
        self._counter = 0
        self._lock = threading.Lock()

    def _new_job(self, kind: str) -> Job:
        with self._lock:
            self._counter += 1
            job_id = f"job-{self._counter:04d}"
        job = Job(job_id, kind, self.out_root / job_id)
        self.jobs[job_id] = job
        return job

    def submit_experiment(self, cfg) -> Job:
        job = self._new_job("experiment")

        def work():
            job.state = "running"
            try:
                run_single(cfg, job.out_dir, on_round=job.on_round)
                job.experiment_ids = [">".join(cfg.criteria)]
                job.state = "done"
            except Exception as exc:  # noqa: BLE001 - reported via the API
                job.error = str(exc)
                job.state = "failed"

        self.executor.submit(work)
        return job

    def submit_sweep(self, sweep) -> Job:
        job = self._new_job("sweep")

        def work():
            job.state = "running"
            try:
                outcome = run_sweep(sweep, job.out_dir)
                job.experiment_ids = list(outcome.run_ids)
                with job.lock:
                    job.rounds_completed = sum(len(r.records) for r in outcome.results)
                    job.global_accuracy = outcome.results[0].records[-1].global_accuracy if outcome.results[0].records else None
                job.state = "done"
            except Exception as exc:  # noqa: BLE001
                job.error = str(exc)
                job.state = "failed"

        self.executor.submit(work)
        return job


# --------------------------------------------------------------------------
# Application
# --------------------------------------------------------------------------


def create_app(out_root: Path | str | None = None) -> FastAPI:
    app = FastAPI(title="fedprio", version=__version__)
    root = Path(out_root) if out_root else Path(tempfile.mkdtemp(prefix="fedprio-"))
    registry = JobRegistry(root)
    app.state.registry = registry

    @app.get("/health", response_model=HealthResponse)
    def health():
        return HealthResponse(status="ok", version=__version__)

    @app.post("/score", response_model=ScoreResponse)
    def score(request: ScoreRequest):
        fn = score_prioritized if request.score_fn == "prioritized" else score_mean
        try:
            return ScoreResponse(scores=[fn(v) for v in request.vectors])
        except ValueError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc

    @app.post("/weights", response_model=WeightsResponse)
    def weights(request: WeightsRequest):
        if not request.clients:
            raise HTTPException(status_code=422, detail="empty cohort")
        names = tuple(request.ordering)
        try:
            raw = np.array(
                [[client.raw[name] for name in names] for client in request.clients]
            )
        except KeyError as exc:
            raise HTTPException(
                status_code=422, detail=f"client is missing criterion {exc.args[0]!r}"
            ) from exc
        try:
            normalized = np.column_stack(
                [normalize_cohort(raw[:, j]) for j in range(len(names))]
            )
            cohort = CohortCriteria(
                client_ids=tuple(c.client_id for c in request.clients),
                names=names,
                raw=raw,
                normalized=normalized,
            )
            weight_values, z = compute_weights(cohort, request.score_fn, names)
        except ValueError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        return WeightsResponse(
            weights={cid: float(w) for cid, w in zip(cohort.client_ids, weight_values)},
            z=z,
            normalized={
                cid: {name: float(normalized[i, j]) for j, name in enumerate(names)}
                for i, cid in enumerate(cohort.client_ids)
            },
        )

    @app.post("/experiments", response_model=JobCreated, status_code=202)
    def submit_experiment(submission: JobSubmission):
        try:
            cfg = parse_config_dict(submission.config)
        except ConfigurationError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        job = registry.submit_experiment(cfg)
        return JobCreated(job_id=job.job_id, kind="experiment")

    @app.post("/sweeps", response_model=JobCreated, status_code=202)
    def submit_sweep(submission: JobSubmission):
        try:
            sweep = parse_sweep_dict(submission.config)
        except ConfigurationError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        job = registry.submit_sweep(sweep)
        return JobCreated(job_id=job.job_id, kind="sweep")

    def _job_or_404(job_id: str) -> Job:
        job = registry.jobs.get(job_id)
        if job is None:
            raise HTTPException(status_code=404, detail=f"no such job {job_id!r}")
        return job

    @app.get("/jobs", response_model=list[JobStatus])
    def list_jobs():
        return [job.status() for job in registry.jobs.values()]

    @app.get("/jobs/{job_id}", response_model=JobStatus)
    def job_status(job_id: str):
        return _job_or_404(job_id).status()

    @app.get("/jobs/{job_id}/records", response_model=list[RoundSummary])
    def job_records(job_id: str):
        job = _job_or_404(job_id)
        with job.lock:
            return list(job.records)

    @app.get("/jobs/{job_id}/reports", response_model=list[str])
    def job_reports(job_id: str):
        job = _job_or_404(job_id)
        if not job.out_dir.is_dir():
            return []
        return sorted(
            str(p.relative_to(job.out_dir))
            for p in job.out_dir.rglob("*.csv")
        )

    @app.get("/jobs/{job_id}/reports/{name:path}")
    def job_report(job_id: str, name: str):
        job = _job_or_404(job_id)
        if name not in {str(p.relative_to(job.out_dir)) for p in job.out_dir.rglob("*.csv")}:
            raise HTTPException(status_code=404, detail=f"no report {name!r} for {job_id}")
        return PlainTextResponse((job.out_dir / name).read_text(), media_type="text/csv")

    return app


app = create_app()
