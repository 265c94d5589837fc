"""Request/response models of the simulation service."""

from __future__ import annotations

from pydantic import BaseModel, Field


class HealthResponse(BaseModel):
    status: str = "ok"
    version: str = ""


class PresetInfo(BaseModel):
    name: str
    description: str


class RunRequest(BaseModel):
    scenario: str | None = Field(None, description="Scenario file text")
    preset: str | None = Field(None, description="Built-in preset name")
    seed: int | None = Field(None, description="Seed override")
    duration_s: float | None = Field(None, gt=0, description="Run-duration override")
    include_trace: bool = Field(True, description="Include trace.jsonl artifacts")


class RunResponse(BaseModel):
    name: str
    points: list[str]
    summary: list[dict]
    artifacts: dict[str, str] = Field(
        default_factory=dict, description="Artifact path -> exact text content"
    )


class SweepRequest(BaseModel):
    scenario: str = Field(..., description="Scenario file text")
    param: str = Field(..., description="section.key to override per point")
    values: list[float] = Field(..., min_length=1)
    seed: int | None = None
    include_trace: bool = False


class CheckModel(BaseModel):
    name: str
    status: str
    detail: str
    violations: list[str] = Field(default_factory=list)


class VerifyRequest(BaseModel):
    trace: str = Field(..., description="trace.jsonl content")


class VerifyResponse(BaseModel):
    status: str = Field(..., description="pass | expected_violations | fail")
    checks: list[CheckModel]
