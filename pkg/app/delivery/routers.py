from typing import List

from fastapi import APIRouter, status

from app.metrics.schemas import TraceRecord
from .schemas import DelayRequest
from .services import delay_records

router = APIRouter(
    prefix="/delivery",
    tags=["delivery"]
)


@router.post(
    "/delay",
    response_model=List[TraceRecord],
    response_model_exclude_none=True,
    status_code=status.HTTP_200_OK
)
async def delay_trace(request: DelayRequest):
    """
    Hold generated tokens back and release them on a fixed cadence

    **records**: trace records\n
    **config**: ``tbt_cap`` or ``fixed_rate`` mode, optionally delaying the first token
    """
    return delay_records(request.records, request.config)
