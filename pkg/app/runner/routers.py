from fastapi import APIRouter, Depends, status
from fastapi.concurrency import run_in_threadpool

from app.exceptions_schemas import MessageSchema
from .dependencies import valid_capacity_request, valid_experiment
from .schemas import CapacityRequest, CapacityResult, ExperimentConfig, SweepResult
from .services import ExperimentService

router = APIRouter(
    prefix="/experiments",
    tags=["experiments"]
)


@router.post(
    "/run",
    response_model=SweepResult,
    status_code=status.HTTP_201_CREATED,
    responses={
        status.HTTP_201_CREATED: {
            "model": SweepResult,
            "description": "Sweep finished, artifacts written"
        },
        status.HTTP_400_BAD_REQUEST: {
            "model": MessageSchema,
            "description": "Output directory is not writable"
        }
    }
)
async def run_experiment(
        config: ExperimentConfig = Depends(valid_experiment),
        service: ExperimentService = Depends()
):
    """
    Simulate every (variant, rate) cell of an experiment

    **workload**: workload config, shared by all variants at a given rate\n
    **variants**: scheduler and optional delivery transform per variant\n
    **rates**: swept request rates, the workload rate when omitted
    """
    return await run_in_threadpool(service.run_experiment, config)


@router.post(
    "/capacity",
    response_model=CapacityResult,
    status_code=status.HTTP_200_OK,
    responses={
        status.HTTP_200_OK: {
            "model": CapacityResult,
            "description": "Largest rate meeting the attainment threshold"
        },
        status.HTTP_400_BAD_REQUEST: {
            "model": MessageSchema,
            "description": "Config has no capacity bracket"
        },
        status.HTTP_404_NOT_FOUND: {
            "model": MessageSchema,
            "description": "Variant doesn't exist"
        },
        status.HTTP_422_UNPROCESSABLE_ENTITY: {
            "model": MessageSchema,
            "description": "Infeasible bracket"
        }
    }
)
async def capacity(
        request: CapacityRequest = Depends(valid_capacity_request),
        service: ExperimentService = Depends()
):
    """Bisect the request rate for the given SLO attainment threshold"""
    return await run_in_threadpool(service.capacity_search, request.config, request.threshold, request.variant)
