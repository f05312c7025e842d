import os
from pathlib import Path

from fastapi import HTTPException, status

from .schemas import CapacityRequest, ExperimentConfig


def _writable(path: Path) -> bool:
    while not path.exists():
        if path.parent == path:
            return False
        path = path.parent
    return path.is_dir() and os.access(path, os.W_OK)


async def valid_experiment(config: ExperimentConfig) -> ExperimentConfig:
    if not _writable(Path(config.output_dir)):
        raise HTTPException(
            status_code=status.HTTP_400_BAD_REQUEST,
            detail="Output directory is not writable"
        )
    return config


async def valid_capacity_request(request: CapacityRequest) -> CapacityRequest:
    if request.config.capacity is None:
        raise HTTPException(
            status_code=status.HTTP_400_BAD_REQUEST,
            detail="Config has no capacity bracket"
        )
    if request.variant is not None and request.variant not in {v.name for v in request.config.variants}:
        raise HTTPException(
            status_code=status.HTTP_404_NOT_FOUND,
            detail="Variant doesn't exist"
        )
    return request
