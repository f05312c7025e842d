from fastapi import APIRouter, status
from fastapi.concurrency import run_in_threadpool

from app.exceptions_schemas import MessageSchema
from .schemas import MetricsReport, ReportRequest
from .services import build_report, window_from_records

router = APIRouter(
    prefix="/metrics",
    tags=["metrics"]
)


def _report(request: ReportRequest) -> MetricsReport:
    window = window_from_records(request.records, request.start, request.end)
    return build_report(window, request.policy, request.benefit, request.goodput_unit)


@router.post(
    "/report",
    response_model=MetricsReport,
    status_code=status.HTTP_200_OK,
    responses={
        status.HTTP_200_OK: {
            "model": MetricsReport,
            "description": "Per-request metrics and window aggregates"
        },
        status.HTTP_422_UNPROCESSABLE_ENTITY: {
            "model": MessageSchema,
            "description": "No request arrived inside the window"
        }
    }
)
async def metrics_report(request: ReportRequest):
    """Goodput, smooth goodput, SLO attainment and latency tables of a trace"""
    return await run_in_threadpool(_report, request)
