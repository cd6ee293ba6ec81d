"""HTTP view of the central registry.

The binary TCP protocol is the primary transport; this app shares the same
:class:`CentralRegistry` so HTTP and TCP clients see one set of tasks.
"""

from __future__ import annotations

from typing import List, Literal

import numpy as np
from fastapi import FastAPI, Query
from fastapi.responses import JSONResponse

from ..experiments import transfer_experiment, transfer_theory
from ..protocol.codec import ErrorCode, ProtocolError, Register, UploadStats
from ..protocol.server import CentralRegistry
from .schemas import (
    AckResponse,
    ErrorResponse,
    HealthResponse,
    ProjectionResponse,
    RegisterRequest,
    ReportRowBody,
    TaskStatus,
    TheoryResponse,
    TransferRequest,
    UploadRequest,
)

HTTP_STATUS = {
    ErrorCode.UNKNOWN_TASK: 404,
    ErrorCode.MISSING_UPLOADS: 409,
    ErrorCode.DEGENERATE_MODEL: 422,
    ErrorCode.INVALID_REQUEST: 422,
}

ERRORS = {404: {"model": ErrorResponse}, 409: {"model": ErrorResponse}, 422: {"model": ErrorResponse}}


def create_app(registry: CentralRegistry | None = None) -> FastAPI:
    app = FastAPI(title="mtlspca central client", version="0.1.0")
    app.state.registry = registry or CentralRegistry()

    @app.exception_handler(ProtocolError)
    async def _protocol_error(_request, exc: ProtocolError) -> JSONResponse:
        return JSONResponse(status_code=HTTP_STATUS.get(exc.code, 400), content={"code": int(exc.code), "message": exc.message})

    @app.get("/health", response_model=HealthResponse)
    def health() -> HealthResponse:
        snap = app.state.registry.snapshot()
        return HealthResponse(tasks=len(snap.registrations), version=snap.version)

    @app.get("/tasks", response_model=List[TaskStatus])
    def list_tasks() -> list[TaskStatus]:
        snap = app.state.registry.snapshot()
        return [
            TaskStatus(task_id=t, p=r.p, n1=r.n1, n2=r.n2, uploaded=t in snap.stats)
            for t, r in sorted(snap.registrations.items())
        ]

    @app.put("/tasks/{task_id}", response_model=AckResponse, responses=ERRORS)
    def register(task_id: int, body: RegisterRequest) -> AckResponse:
        app.state.registry.register(Register(task_id, body.num_classes, body.p, body.n1, body.n2))
        return AckResponse(task_id=task_id)

    @app.put("/tasks/{task_id}/stats", response_model=AckResponse, responses=ERRORS)
    def upload(task_id: int, body: UploadRequest) -> AckResponse:
        a, b = body.classes
        if len(a.h_a) != len(b.h_a):
            raise ProtocolError(ErrorCode.INVALID_REQUEST, "both classes must share the feature dimension")
        msg = UploadStats(
            task_id, (a.n_a, b.n_a), (a.n_b, b.n_b), np.array([a.h_a, b.h_a]), np.array([a.h_b, b.h_b])
        )
        app.state.registry.upload(msg)
        return AckResponse(task_id=task_id)

    @app.get("/tasks/{task_id}/projection", response_model=ProjectionResponse, responses=ERRORS)
    def projection(task_id: int, labels: Literal["optimal", "naive"] = "optimal") -> ProjectionResponse:
        bundle = app.state.registry.projection(task_id, labels)
        return ProjectionResponse(
            target=task_id, p=bundle.p, v=bundle.v.tolist(), zeta=bundle.zeta, labels=bundle.labels.tolist()
        )

    @app.get("/theory/transfer", response_model=TheoryResponse)
    def theory(
        beta: float = Query(..., ge=0.0, le=1.0), labels: Literal["optimal", "naive"] = "optimal"
    ) -> TheoryResponse:
        model = transfer_theory(beta, labels=labels)
        return TheoryResponse(beta=beta, labels=labels, m1=model.m1, m2=model.m2, error=model.err)

    @app.post("/experiments/transfer", response_model=List[ReportRowBody])
    def run_transfer(body: TransferRequest) -> list[ReportRowBody]:
        if any(not 0.0 <= b <= 1.0 for b in body.betas) or not body.betas:
            raise ProtocolError(ErrorCode.INVALID_REQUEST, "betas must be non-empty and inside [0, 1]")
        report = transfer_experiment(body.betas, reps=body.reps, seed=body.seed, n_test=body.n_test)
        return [
            ReportRowBody(
                method=r.method, beta=r.beta, num_tasks=r.num_tasks, error=r.error,
                std=r.std, reps=r.reps, n_test=r.n_test, seed=r.seed,
            )
            for r in report.sorted_rows()
        ]

    return app
