"""Request and response bodies for the HTTP API."""

from __future__ import annotations

from typing import List, Literal, Optional

from pydantic import BaseModel, Field, model_validator


class HealthResponse(BaseModel):
    status: str = "ok"
    tasks: int = 0
    version: int = 0


class ErrorResponse(BaseModel):
    code: int
    message: str


class RegisterRequest(BaseModel):
    p: int = Field(..., ge=1)
    n1: int = Field(..., ge=2, description="training samples in class 1")
    n2: int = Field(..., ge=2, description="training samples in class 2")
    num_classes: int = 2


class ClassStatsBody(BaseModel):
    n_a: int = Field(..., ge=1)
    n_b: int = Field(..., ge=1)
    h_a: List[float]
    h_b: List[float]

    @model_validator(mode="after")
    def _same_length(self) -> "ClassStatsBody":
        if len(self.h_a) != len(self.h_b) or not self.h_a:
            raise ValueError("h_a and h_b must be non-empty and of equal length")
        return self


class UploadRequest(BaseModel):
    classes: List[ClassStatsBody] = Field(..., min_length=2, max_length=2)


class AckResponse(BaseModel):
    task_id: int


class TaskStatus(BaseModel):
    task_id: int
    p: int
    n1: int
    n2: int
    uploaded: bool


class ProjectionResponse(BaseModel):
    target: int
    p: int
    v: List[float]
    zeta: float
    labels: List[float]


class TransferRequest(BaseModel):
    betas: List[float] = Field(default_factory=lambda: [0.0, 0.5, 1.0])
    reps: int = Field(10, ge=1, le=100)
    seed: int = 0
    n_test: int = Field(10_000, ge=1, le=100_000)


class ReportRowBody(BaseModel):
    method: str
    beta: Optional[float] = None
    num_tasks: Optional[int] = None
    error: float
    std: float
    reps: int
    n_test: int
    seed: Optional[int] = None


class TheoryResponse(BaseModel):
    beta: float
    labels: Literal["optimal", "naive"]
    m1: float
    m2: float
    error: float
