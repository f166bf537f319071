"""HTTP service around the experiment runner.

POST /run takes a config document (plus tolerance scaling and a thread
bound), executes the experiment, and returns the invariant report with
the artifact files inline. POST /compare diffs two trajectory CSVs
column by column. Configs are validated by the same pydantic schema the
CLI uses, so malformed documents come back as 422 with field locations;
solver breakdowns are reported in-band with status "solver_failure"
rather than as transport errors.
"""

from __future__ import annotations

from typing import Literal

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, ConfigDict, Field

from . import __version__
from .config import KINDS, ExperimentConfig
from .errors import ConvergenceError, DomainError, GeomocError, NonFiniteError
from .experiments import compare_artifacts, run_experiment

__all__ = ["create_app", "app"]


class RunRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    config: ExperimentConfig
    tol_scale: float = Field(default=1.0, gt=0)
    threads: int = Field(default=1, ge=1, le=64)


class CheckResult(BaseModel):
    name: str
    value: float
    tolerance: float
    passed: bool


class Artifact(BaseModel):
    name: str
    content: str


class RunResponse(BaseModel):
    status: Literal["passed", "check_failed", "solver_failure"]
    kind: str
    seed: int
    message: str = ""
    checks: list[CheckResult] = Field(default_factory=list)
    artifacts: list[Artifact] = Field(default_factory=list)


class CompareRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    a: str
    b: str
    tol: float = Field(gt=0)


class ColumnDeviation(BaseModel):
    column: str
    max_abs: float
    max_rel: float


class CompareResponse(BaseModel):
    within_tol: bool
    tolerance: float
    max_abs: float
    max_rel: float
    rows: int
    columns: list[ColumnDeviation]


class HealthResponse(BaseModel):
    status: str
    version: str


def create_app() -> FastAPI:
    app = FastAPI(
        title="geomoc",
        version=__version__,
        description="Geometric discrete optimal-control experiment service",
    )

    @app.get("/health", response_model=HealthResponse)
    def health() -> HealthResponse:
        return HealthResponse(status="ok", version=__version__)

    @app.get("/kinds")
    def kinds() -> list[str]:
        return list(KINDS)

    @app.post("/run", response_model=RunResponse)
    def run(request: RunRequest) -> RunResponse:
        cfg = request.config
        try:
            outcome = run_experiment(cfg, tol_scale=request.tol_scale, threads=request.threads)
        except (ConvergenceError, NonFiniteError, DomainError, GeomocError) as exc:
            return RunResponse(
                status="solver_failure",
                kind=cfg.kind,
                seed=cfg.seed,
                message=str(exc),
            )
        checks = [
            CheckResult(name=name, value=entry["value"], tolerance=entry["tolerance"], passed=entry["pass"])
            for name, entry in outcome.report["checks"].items()
        ]
        artifacts = [Artifact(name=name, content=content) for name, content in outcome.artifacts.items()]
        return RunResponse(
            status="passed" if outcome.passed else "check_failed",
            kind=cfg.kind,
            seed=cfg.seed,
            checks=checks,
            artifacts=artifacts,
        )

    @app.post("/compare", response_model=CompareResponse)
    def compare(request: CompareRequest) -> CompareResponse:
        try:
            stats = compare_artifacts(request.a, request.b, request.tol)
        except DomainError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        return CompareResponse(
            within_tol=stats["within_tol"],
            tolerance=stats["tolerance"],
            max_abs=stats["max_abs"],
            max_rel=stats["max_rel"],
            rows=stats["rows"],
            columns=[ColumnDeviation(**c) for c in stats["columns"]],
        )

    return app


app = create_app()
