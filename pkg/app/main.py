import logging
from contextlib import asynccontextmanager
from pathlib import Path

from fastapi import FastAPI, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse

from app.config import LOG_FORMAT, get_settings
from app.database import init_db
from app.exceptions import PdfNetError, exit_code_for
from app.experiment import list_bundled_configs
from app.routes import health_router, runs_router
from app.worker import worker_manager

logger = logging.getLogger(__name__)

# CLI exit code -> HTTP status for library errors raised inside a request
STATUS_FOR_EXIT_CODE = {2: 400, 3: 422, 4: 422}


@asynccontextmanager
async def lifespan(app: FastAPI):
    settings = get_settings()
    logging.basicConfig(
        level=getattr(logging, settings.LOG_LEVEL.upper(), logging.INFO),
        format=LOG_FORMAT,
    )
    Path(settings.RUNS_DIR).mkdir(parents=True, exist_ok=True)
    logger.info(
        "Starting pdfnet experiment service: %d bundled configs in %s, runs under %s",
        len(list_bundled_configs(settings.CONFIG_DIR)),
        settings.CONFIG_DIR,
        settings.RUNS_DIR,
    )

    await init_db()
    await worker_manager.start(settings.NUM_WORKERS)
    logger.info("Workers started: %d (threads per run: %d)", settings.NUM_WORKERS, settings.THREADS)

    yield

    logger.info("Shutting down pdfnet experiment service")
    await worker_manager.stop()


app = FastAPI(
    title="pdfnet experiment service",
    description="Queue derive, train, simulate and compare runs for SDE pdf/chf experiments",
    version="1.0.0",
    lifespan=lifespan,
)

app.add_middleware(
    CORSMiddleware,
    allow_origins=["*"],
    allow_methods=["*"],
    allow_headers=["*"],
)

app.include_router(runs_router)
app.include_router(health_router)


@app.exception_handler(PdfNetError)
async def library_error_handler(request: Request, exc: PdfNetError):
    status = STATUS_FOR_EXIT_CODE.get(exit_code_for(exc), 500)
    return JSONResponse(
        status_code=status,
        content={"detail": str(exc), "error": type(exc).__name__},
    )


@app.exception_handler(ValueError)
async def value_error_handler(request: Request, exc: ValueError):
    return JSONResponse(status_code=400, content={"detail": str(exc)})


@app.exception_handler(Exception)
async def general_exception_handler(request: Request, exc: Exception):
    logger.error("Unhandled exception: %s", exc, exc_info=True)
    return JSONResponse(status_code=500, content={"detail": "Internal server error"})
