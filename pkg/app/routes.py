import json
import logging
from pathlib import Path
from typing import Optional

from fastapi import APIRouter, Depends, HTTPException, Response
from pydantic import ValidationError
from sqlalchemy.ext.asyncio import AsyncSession

from app.config import get_settings
from app.crud import create_run, delete_run, get_queue_depth, get_run, list_runs
from app.database import get_db
from app.exceptions import PdfNetError
from app.experiment import list_bundled_configs, parse_experiment
from app.schemas import (
    ConfigListResponse,
    HealthResponse,
    RunListItem,
    RunListResponse,
    RunStatusResponse,
    RunSubmitRequest,
    RunSubmitResponse,
)

logger = logging.getLogger(__name__)

runs_router = APIRouter()
health_router = APIRouter()


def _bundled_text(name: str) -> str:
    settings = get_settings()
    if Path(name).name != name or name not in list_bundled_configs(settings.CONFIG_DIR):
        raise HTTPException(status_code=404, detail=f"Config '{name}' not found")
    return (Path(settings.CONFIG_DIR) / f"{name}.toml").read_text()


@runs_router.post("/runs", response_model=RunSubmitResponse)
async def submit_run(request: RunSubmitRequest, db: AsyncSession = Depends(get_db)):
    settings = get_settings()

    text = request.config_text if request.config_text is not None else _bundled_text(request.config_name)
    if len(text.encode()) > settings.MAX_CONFIG_SIZE_KB * 1024:
        raise HTTPException(
            status_code=413,
            detail=f"Config exceeds maximum of {settings.MAX_CONFIG_SIZE_KB} KB.",
        )

    # validate up front so bad configs never reach a worker
    try:
        config = parse_experiment(text, paper_scale=request.paper_scale, seed=request.seed)
    except (ValidationError, PdfNetError) as e:
        raise HTTPException(status_code=400, detail=str(e))

    run = await create_run(
        db,
        command=request.command,
        config_name=request.config_name or config.name,
        config_text=text,
        paper_scale=request.paper_scale,
        seed=request.seed,
    )
    logger.info("Queued %s run %s for config %s", request.command, run.run_id, run.config_name)

    return RunSubmitResponse(
        run_id=run.run_id,
        config_name=run.config_name,
        message=f"{request.command} run queued.",
    )


@runs_router.get("/runs/{run_id}", response_model=RunStatusResponse)
async def get_run_status(run_id: str, db: AsyncSession = Depends(get_db)):
    run = await get_run(db, run_id)
    if not run:
        raise HTTPException(status_code=404, detail="Run not found")

    return RunStatusResponse(
        run_id=run.run_id,
        command=run.command,
        config_name=run.config_name,
        status=run.status,
        paper_scale=run.paper_scale,
        seed=run.seed,
        worker_id=run.worker_id,
        output_dir=run.output_dir,
        metrics=json.loads(run.metrics) if run.metrics else None,
        error_message=run.error_message,
        exit_code=run.exit_code,
        created_at=run.created_at,
        updated_at=run.updated_at,
    )


@runs_router.get("/runs", response_model=RunListResponse)
async def list_all_runs(
    status: Optional[str] = None,
    page: int = 1,
    page_size: int = 20,
    db: AsyncSession = Depends(get_db),
):
    if page_size > 100:
        raise HTTPException(status_code=400, detail="page_size must be <= 100")
    if page < 1:
        raise HTTPException(status_code=400, detail="page must be >= 1")

    runs, total = await list_runs(db, status=status, page=page, page_size=page_size)

    return RunListResponse(
        runs=[
            RunListItem(
                run_id=r.run_id,
                command=r.command,
                config_name=r.config_name,
                status=r.status,
                created_at=r.created_at,
            )
            for r in runs
        ],
        total=total,
        page=page,
        page_size=page_size,
    )


@runs_router.delete("/runs/{run_id}", status_code=204)
async def delete_run_endpoint(run_id: str, db: AsyncSession = Depends(get_db)):
    run = await get_run(db, run_id)
    if not run:
        raise HTTPException(status_code=404, detail="Run not found")

    await delete_run(db, run_id)
    return Response(status_code=204)


@runs_router.get("/configs", response_model=ConfigListResponse)
async def list_configs():
    settings = get_settings()
    return ConfigListResponse(
        configs=list_bundled_configs(settings.CONFIG_DIR),
        config_dir=settings.CONFIG_DIR,
    )


@health_router.get("/health", response_model=HealthResponse)
async def health_check(db: AsyncSession = Depends(get_db)):
    settings = get_settings()
    worker_count = settings.NUM_WORKERS
    active_workers = 0

    try:
        from app.worker import worker_manager

        worker_count = worker_manager.worker_count
        active_workers = worker_manager.active_workers
    except (ImportError, AttributeError):
        pass

    queue_depth_val = await get_queue_depth(db)

    return HealthResponse(
        status="ok",
        worker_count=worker_count,
        active_workers=active_workers,
        queue_depth=queue_depth_val,
        db_path=settings.DB_PATH,
    )
