from typing import List

from fastapi import APIRouter, status
from fastapi.concurrency import run_in_threadpool

from app.exceptions_schemas import MessageSchema
from .schemas import RequestSpec, WorkloadConfig
from .services import generate

router = APIRouter(
    prefix="/workloads",
    tags=["workloads"]
)


@router.post(
    "/generate",
    response_model=List[RequestSpec],
    status_code=status.HTTP_200_OK,
    responses={
        status.HTTP_200_OK: {
            "description": "Generated workload"
        },
        status.HTTP_422_UNPROCESSABLE_ENTITY: {
            "model": MessageSchema,
            "description": "Dataset file is missing or malformed"
        }
    }
)
async def generate_workload(config: WorkloadConfig):
    """
    Generate a seeded Poisson workload

    **rate**: requests per second\n
    **count**: number of requests\n
    **seed**: random seed, same seed gives the same workload\n
    **length_source**: synthetic distributions or a dataset file
    """
    return await run_in_threadpool(generate, config)
