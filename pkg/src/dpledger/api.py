"""HTTP surface over one query service instance.

Every error body is machine readable: ``{"code": ..., "message": ...}``.
"""

from __future__ import annotations

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from .accountant import BudgetExceededError
from .ledger import InsufficientFundsError, LedgerCorruptError, UnknownAccountError
from .queries import QueryDescriptor
from .service import QueryService, StorageError


class PredicateBody(BaseModel):
    column: str
    comparator: str
    constant: float


class DescriptorBody(BaseModel):
    kind: str
    column: str | None = None
    predicate: PredicateBody | None = None


class QueryBody(BaseModel):
    account_id: str
    descriptor: DescriptorBody
    epsilon: float
    delta: float


def _error(status: int, code: str, message: str) -> JSONResponse:
    return JSONResponse(status_code=status, content={"code": code, "message": message})


def create_app(service: QueryService) -> FastAPI:
    app = FastAPI(title="dpledger")

    @app.exception_handler(RequestValidationError)
    async def _bad_body(request: Request, exc: RequestValidationError):
        return _error(400, "validation", str(exc.errors()))

    @app.exception_handler(ValueError)
    async def _bad_value(request: Request, exc: ValueError):
        return _error(400, "validation", str(exc))

    @app.exception_handler(UnknownAccountError)
    async def _unknown_account(request: Request, exc: UnknownAccountError):
        return _error(404, "unknown_account", str(exc))

    @app.exception_handler(InsufficientFundsError)
    async def _broke(request: Request, exc: InsufficientFundsError):
        return _error(402, "insufficient_funds", str(exc))

    @app.exception_handler(BudgetExceededError)
    async def _over_budget(request: Request, exc: BudgetExceededError):
        return _error(429, "budget_exceeded", str(exc))

    @app.exception_handler(StorageError)
    async def _storage(request: Request, exc: StorageError):
        return _error(500, "storage", str(exc))

    @app.exception_handler(LedgerCorruptError)
    async def _corrupt(request: Request, exc: LedgerCorruptError):
        return _error(500, "storage", str(exc))

    @app.post("/api/queries")
    def submit_query(body: QueryBody):
        descriptor = QueryDescriptor.from_dict(body.descriptor.model_dump())
        response = service.submit_query(
            body.account_id, descriptor, body.epsilon, body.delta
        )
        return response.to_dict()

    @app.get("/api/accounts/{account_id}")
    def get_account(account_id: str):
        return service.get_account(account_id)

    @app.get("/api/budget")
    def get_budget():
        return service.get_budget()

    @app.get("/api/history")
    def get_history(key: str | None = None):
        query_key = None
        if key is not None:
            raw = bytes.fromhex(key)
            if len(raw) != 32:
                raise ValueError(f"key must be 32 bytes of hex, got {len(raw)}")
            query_key = raw
        return {"records": service.get_history(query_key)}

    @app.get("/api/ledger/verify")
    def get_verify():
        result = service.verify_ledger()
        return {"ok": result.ok, "first_bad_index": result.first_bad_index}

    @app.get("/api/meta")
    def get_meta():
        return service.meta()

    static_dir = service.config.static_dir
    if static_dir is not None and static_dir.is_dir():
        app.mount("/", StaticFiles(directory=static_dir, html=True), name="ui")

    return app
