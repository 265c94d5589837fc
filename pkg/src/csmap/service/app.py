"""FastAPI service wrapping the simulator.

Runs are synchronous: the response carries every artifact as exact text, so
clients (the bundled CLI included) just write the files they want.  The
service holds no state; identical requests give byte-identical artifacts.
"""

from __future__ import annotations

from fastapi import FastAPI, HTTPException

from .. import __version__
from ..presets import PRESETS
from ..runner import execute_preset, execute_scenario_text, execute_sweep
from ..scenario import ScenarioError
from ..trace import parse_jsonl
from ..verify import verify_trace
from .schemas import (
    CheckModel,
    HealthResponse,
    PresetInfo,
    RunRequest,
    RunResponse,
    SweepRequest,
    VerifyRequest,
    VerifyResponse,
)


def create_app() -> FastAPI:
    app = FastAPI(
        title="csmap service",
        description="Deterministic CSMA/AP-T + two-way-sync simulation service",
        version=__version__,
    )

    @app.get("/healthz", response_model=HealthResponse)
    def healthz() -> HealthResponse:
        return HealthResponse(status="ok", version=__version__)

    @app.get("/presets", response_model=list[PresetInfo])
    def presets() -> list[PresetInfo]:
        return [
            PresetInfo(name=p.name, description=p.description)
            for _, p in sorted(PRESETS.items())
        ]

    @app.post("/runs", response_model=RunResponse)
    def runs(req: RunRequest) -> RunResponse:
        if (req.scenario is None) == (req.preset is None):
            raise HTTPException(400, "provide exactly one of 'scenario' or 'preset'")
        try:
            if req.preset is not None:
                result = execute_preset(
                    req.preset, seed=req.seed, duration=req.duration_s,
                    include_trace=req.include_trace,
                )
            else:
                result = execute_scenario_text(
                    req.scenario, seed=req.seed, duration=req.duration_s,
                    include_trace=req.include_trace,
                )
        except ScenarioError as exc:
            raise HTTPException(400, str(exc)) from None
        return RunResponse(
            name=result.name,
            points=result.points,
            summary=result.summary_rows,
            artifacts=result.artifacts,
        )

    @app.post("/sweeps", response_model=RunResponse)
    def sweeps(req: SweepRequest) -> RunResponse:
        try:
            result = execute_sweep(
                req.scenario, req.param, req.values,
                seed=req.seed, include_trace=req.include_trace,
            )
        except ScenarioError as exc:
            raise HTTPException(400, str(exc)) from None
        return RunResponse(
            name=result.name,
            points=result.points,
            summary=result.summary_rows,
            artifacts=result.artifacts,
        )

    @app.post("/verify", response_model=VerifyResponse)
    def verify(req: VerifyRequest) -> VerifyResponse:
        try:
            trace = parse_jsonl(req.trace)
        except ValueError as exc:
            raise HTTPException(400, f"malformed trace: {exc}") from None
        report = verify_trace(trace)
        return VerifyResponse(
            status=report.status,
            checks=[
                CheckModel(
                    name=c.name, status=c.status, detail=c.detail, violations=c.violations
                )
                for c in report.checks
            ],
        )

    return app


app = create_app()
