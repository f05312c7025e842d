from fastapi import FastAPI, APIRouter, Request, status
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse

from .delivery.routers import router as delivery_router
from .exceptions import SimulatorError
from .logs import setup_logging
from .metrics.routers import router as metrics_router
from .runner.routers import router as experiments_router
from .workload.routers import router as workloads_router

router = APIRouter()
router.include_router(workloads_router)
router.include_router(metrics_router)
router.include_router(delivery_router)
router.include_router(experiments_router)

app = FastAPI(
    title="LLM serving SLO simulator"
)

app.include_router(router)
app.add_event_handler("startup", setup_logging)
app.add_middleware(
    CORSMiddleware,
    allow_origins=["*"],
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)


@app.exception_handler(SimulatorError)
async def simulator_error_handler(request: Request, exc: SimulatorError):
    return JSONResponse(
        status_code=status.HTTP_422_UNPROCESSABLE_ENTITY,
        content={"detail": str(exc)}
    )
