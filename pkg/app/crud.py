import logging
import uuid
from datetime import datetime, timezone
from typing import List, Optional, Tuple

from sqlalchemy import delete, func, select, update
from sqlalchemy.ext.asyncio import AsyncSession

from app.models import ExperimentRun

logger = logging.getLogger(__name__)


async def create_run(
    db: AsyncSession,
    command: str,
    config_name: str,
    config_text: str,
    paper_scale: bool = False,
    seed: Optional[int] = None,
) -> ExperimentRun:
    run = ExperimentRun(
        id=str(uuid.uuid4()),
        command=command,
        config_name=config_name,
        config_text=config_text,
        paper_scale=paper_scale,
        seed=seed,
        status="queued",
    )
    db.add(run)
    await db.flush()
    return run


async def get_run(db: AsyncSession, run_id: str) -> Optional[ExperimentRun]:
    result = await db.execute(select(ExperimentRun).where(ExperimentRun.id == run_id))
    return result.scalar_one_or_none()


async def get_next_queued_run(db: AsyncSession) -> Optional[ExperimentRun]:
    """Get the oldest queued run (does not claim it yet)."""
    result = await db.execute(
        select(ExperimentRun)
        .where(ExperimentRun.status == "queued")
        .order_by(ExperimentRun.created_at)
        .limit(1)
    )
    return result.scalar_one_or_none()


async def claim_run(db: AsyncSession, run_id: str, worker_id: str) -> bool:
    """Atomically claim a run. Returns True if successfully claimed."""
    result = await db.execute(
        update(ExperimentRun)
        .where(ExperimentRun.id == run_id, ExperimentRun.status == "queued")
        .values(
            status="processing",
            worker_id=worker_id,
            updated_at=datetime.now(timezone.utc),
        )
        .returning(ExperimentRun.id)
    )
    await db.flush()
    return result.scalar_one_or_none() is not None


async def update_run_result(
    db: AsyncSession,
    run_id: str,
    status: str,
    *,
    output_dir: Optional[str] = None,
    metrics: Optional[str] = None,
    error_message: Optional[str] = None,
    exit_code: Optional[int] = None,
) -> None:
    await db.execute(
        update(ExperimentRun)
        .where(ExperimentRun.id == run_id)
        .values(
            status=status,
            output_dir=output_dir,
            metrics=metrics,
            error_message=error_message,
            exit_code=exit_code,
            updated_at=datetime.now(timezone.utc),
        )
    )
    await db.flush()


async def list_runs(
    db: AsyncSession,
    status: Optional[str] = None,
    page: int = 1,
    page_size: int = 20,
) -> Tuple[List[ExperimentRun], int]:
    query = select(ExperimentRun)
    count_query = select(func.count(ExperimentRun.id))

    if status:
        query = query.where(ExperimentRun.status == status)
        count_query = count_query.where(ExperimentRun.status == status)

    query = (
        query.order_by(ExperimentRun.created_at.desc())
        .offset((page - 1) * page_size)
        .limit(page_size)
    )

    result = await db.execute(query)
    count_result = await db.execute(count_query)
    return list(result.scalars().all()), count_result.scalar_one()


async def delete_run(db: AsyncSession, run_id: str) -> bool:
    result = await db.execute(
        delete(ExperimentRun).where(ExperimentRun.id == run_id).returning(ExperimentRun.id)
    )
    await db.flush()
    return result.scalar_one_or_none() is not None


async def get_queue_depth(db: AsyncSession) -> int:
    result = await db.execute(
        select(func.count(ExperimentRun.id)).where(ExperimentRun.status == "queued")
    )
    return result.scalar_one()


async def get_latest_output_dir(db: AsyncSession, config_name: str, command: str) -> Optional[str]:
    """Output directory of the newest completed run of command on config_name."""
    result = await db.execute(
        select(ExperimentRun.output_dir)
        .where(
            ExperimentRun.config_name == config_name,
            ExperimentRun.command == command,
            ExperimentRun.status == "completed",
        )
        .order_by(ExperimentRun.updated_at.desc())
        .limit(1)
    )
    return result.scalar_one_or_none()
