import asyncio
import json
import logging
import uuid
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional

from app.config import get_settings
from app.exceptions import exit_code_for

logger = logging.getLogger(__name__)


def execute_run(
    command: str,
    config_text: str,
    paper_scale: bool,
    seed: Optional[int],
    out_dir: Path,
    threads: int,
    train_dir: Optional[Path] = None,
    simulate_dir: Optional[Path] = None,
) -> Dict[str, Any]:
    """Blocking stage execution; runs in a worker thread.

    compare reads the checkpoint and ensemble from the given train and simulate run directories.
    """
    from app.experiment import parse_experiment
    from app.pipeline import CHECKPOINT_NAME, ENSEMBLE_STEM, run_command

    config = parse_experiment(config_text, paper_scale=paper_scale, seed=seed)
    checkpoint = ensemble = None
    if command == "compare":
        if train_dir is not None:
            checkpoint = Path(train_dir) / CHECKPOINT_NAME
        if simulate_dir is not None:
            stored = Path(simulate_dir) / f"{ENSEMBLE_STEM}.{config.oracle.ensemble_format}"
            ensemble = stored if stored.is_file() else None
    return run_command(command, config, out_dir, threads=threads, checkpoint=checkpoint, ensemble=ensemble)


class WorkerManager:
    def __init__(self, session_factory: Optional[Callable] = None):
        self._workers: List[asyncio.Task] = []
        self._stop_event = asyncio.Event()
        self._worker_ids: List[str] = []
        self._active_count = 0
        self._lock = asyncio.Lock()
        self._session_factory = session_factory

    async def start(self, num_workers: int) -> None:
        """Start N worker coroutines."""
        self._stop_event.clear()
        for i in range(num_workers):
            worker_id = f"worker-{i + 1}-{uuid.uuid4().hex[:8]}"
            self._worker_ids.append(worker_id)
            task = asyncio.create_task(self._run_worker(worker_id))
            self._workers.append(task)
        logger.info(f"Started {num_workers} experiment workers")

    async def stop(self) -> None:
        """Signal workers to stop and wait for them."""
        self._stop_event.set()
        if self._workers:
            await asyncio.gather(*self._workers, return_exceptions=True)
        self._workers.clear()
        self._worker_ids.clear()
        logger.info("All experiment workers stopped")

    @property
    def worker_count(self) -> int:
        return len(self._workers)

    @property
    def active_workers(self) -> int:
        return self._active_count

    def _sessions(self):
        if self._session_factory is None:
            from app.database import AsyncSessionLocal

            self._session_factory = AsyncSessionLocal
        return self._session_factory

    async def process_next(self, worker_id: str) -> bool:
        """Claim and execute one queued run. Returns False when the queue is empty."""
        from app.crud import claim_run, get_latest_output_dir, get_next_queued_run, update_run_result

        settings = get_settings()
        sessions = self._sessions()

        async with sessions() as db:
            run = await get_next_queued_run(db)
            if run is None:
                return False
            claimed = await claim_run(db, run.id, worker_id)
            await db.commit()
            if not claimed:
                return True  # another worker got it
            run_id, command = run.id, run.command
            config_text, paper_scale, seed = run.config_text, run.paper_scale, run.seed
            out_dir = Path(settings.RUNS_DIR) / run.config_name / run_id
            sources: Dict[str, Optional[Path]] = {"train": None, "simulate": None}
            if command == "compare":
                for stage in sources:
                    found = await get_latest_output_dir(db, run.config_name, stage)
                    sources[stage] = Path(found) if found else None

        logger.info(f"[{worker_id}] Processing {command} run {run_id}")
        async with self._lock:
            self._active_count += 1
        try:
            metrics = await asyncio.to_thread(
                execute_run,
                command,
                config_text,
                paper_scale,
                seed,
                out_dir,
                settings.THREADS,
                sources["train"],
                sources["simulate"],
            )
            async with sessions() as db:
                await update_run_result(
                    db,
                    run_id,
                    "completed",
                    output_dir=str(out_dir),
                    metrics=json.dumps(metrics, default=float),
                    exit_code=0,
                )
                await db.commit()
            logger.info(f"[{worker_id}] Completed run {run_id}")
        except Exception as e:
            code = exit_code_for(e)
            logger.error(
                f"[{worker_id}] Run {run_id} failed with exit code {code}: {e}",
                exc_info=code == 1,
            )
            async with sessions() as db:
                await update_run_result(
                    db,
                    run_id,
                    "failed",
                    output_dir=str(out_dir),
                    error_message=str(e),
                    exit_code=code,
                )
                await db.commit()
        finally:
            async with self._lock:
                self._active_count -= 1
        return True

    async def _run_worker(self, worker_id: str) -> None:
        """Main worker loop: poll DB, claim runs, execute, save results."""
        logger.info(f"[{worker_id}] Worker started")

        while not self._stop_event.is_set():
            try:
                if not await self.process_next(worker_id):
                    await asyncio.sleep(1.0)
            except Exception as e:
                logger.error(f"[{worker_id}] Worker loop error: {e}", exc_info=True)
                await asyncio.sleep(2.0)

        logger.info(f"[{worker_id}] Worker stopped")


# Singleton instance
worker_manager = WorkerManager()
