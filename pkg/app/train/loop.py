import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Literal, Optional

import numpy as np
import pandas as pd
import torch
from pydantic import BaseModel, ConfigDict, Field

from app.net.checkpoint import save_checkpoint
from app.net.mlp import MlpParams, loss_gradient
from app.net.network import Network
from app.train.losses import LossResult

logger = logging.getLogger(__name__)

# (network, op-point subset or None for the full batch) -> loss
LossAssembler = Callable[[Network, Optional[np.ndarray]], LossResult]


class TrainConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    optimizer: Literal["adam", "adam_then_lbfgs"] = "adam_then_lbfgs"
    adam_steps: int = Field(20000, ge=0)
    lr: float = Field(1e-3, gt=0)
    lr_decay_every: Optional[int] = Field(None, ge=1)
    lr_decay_gamma: float = Field(0.5, gt=0, le=1)
    lbfgs_max_iter: int = Field(5000, ge=0)
    lbfgs_history: int = Field(50, ge=1)
    tolerance_grad: float = Field(1e-9, gt=0)
    tolerance_change: float = Field(1e-12, ge=0)
    batch_size: Optional[int] = Field(None, ge=1)
    seed: int = Field(0, ge=0)
    report_every: int = Field(100, ge=1)
    checkpoint_every: Optional[int] = Field(None, ge=1)
    init_output_bias: float = 0.0


@dataclass
class TrainResult:
    params: MlpParams
    best_loss: float
    steps: int
    trace: List[Dict[str, float]] = field(default_factory=list)

    def trace_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.trace)


class _TraceWriter:
    """Keeps trace rows and appends them to a CSV as they arrive."""

    def __init__(self, path: Optional[Path]):
        self.path = Path(path) if path is not None else None
        self.rows: List[Dict[str, float]] = []
        if self.path is not None:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            if self.path.exists():
                self.path.unlink()

    def add(self, step: int, phase: str, result: LossResult) -> None:
        row = {"step": step, "phase": phase, **result.as_floats()}
        self.rows.append(row)
        if self.path is not None:
            pd.DataFrame([row]).to_csv(
                self.path, mode="a", header=len(self.rows) == 1, index=False, float_format="%.17g"
            )


def _assign_gradients(params: MlpParams, result: LossResult) -> float:
    grads = loss_gradient(
        params, result.total, pointwise=result.residuals, points=result.op_points
    )
    for tensor, grad in zip(params.tensors(), grads.tensors()):
        tensor.grad = grad
    return float(result.total.detach())


def train(
    network: Network,
    assemble: LossAssembler,
    config: TrainConfig,
    n_op: int,
    trace_path: Optional[Path] = None,
    checkpoint_dir: Optional[Path] = None,
) -> TrainResult:
    """Adam (optionally followed by L-BFGS) on the assembled loss; returns the best parameters seen."""
    arch = network.arch
    params = network.params.trainable()
    tensors = params.tensors()
    trace = _TraceWriter(trace_path)
    rng = np.random.default_rng(config.seed)

    initial = assemble(Network(arch, params), None)
    best_loss = float(initial.total.detach())
    best_params = params.detached()
    trace.add(0, "init", initial)
    logger.info("initial loss %.6e %s", best_loss, initial.as_floats())

    step = 0

    def checkpoint(current: int) -> None:
        if checkpoint_dir is not None and config.checkpoint_every and current % config.checkpoint_every == 0:
            save_checkpoint(
                Path(checkpoint_dir) / f"step_{current:07d}.json",
                arch,
                params.detached(),
                {"step": current},
            )

    if config.adam_steps:
        optimizer = torch.optim.Adam(tensors, lr=config.lr)
        scheduler = (
            torch.optim.lr_scheduler.StepLR(
                optimizer, step_size=config.lr_decay_every, gamma=config.lr_decay_gamma
            )
            if config.lr_decay_every
            else None
        )
        batch = config.batch_size if config.batch_size and config.batch_size < n_op else None
        for _ in range(config.adam_steps):
            index = np.sort(rng.choice(n_op, size=batch, replace=False)) if batch else None
            result = assemble(Network(arch, params), index)
            loss = _assign_gradients(params, result)
            report = (step + 1) % config.report_every == 0 or step + 1 == config.adam_steps
            if batch and report:
                # minibatch losses are not comparable with full-batch ones
                with torch.no_grad():
                    result = assemble(Network(arch, params), None)
                loss = float(result.total)
            if (report or not batch) and loss < best_loss:
                best_loss, best_params = loss, params.detached()
            optimizer.step()
            optimizer.zero_grad(set_to_none=True)
            if scheduler is not None:
                scheduler.step()
            step += 1
            if report:
                trace.add(step, "adam", result)
                logger.info("adam step %d loss %.6e", step, loss)
            checkpoint(step)

    if config.optimizer == "adam_then_lbfgs" and config.lbfgs_max_iter:
        optimizer = torch.optim.LBFGS(
            tensors,
            lr=1.0,
            max_iter=config.lbfgs_max_iter,
            tolerance_grad=config.tolerance_grad,
            tolerance_change=config.tolerance_change,
            history_size=config.lbfgs_history,
            line_search_fn="strong_wolfe",
        )

        def closure():
            nonlocal step, best_loss, best_params
            optimizer.zero_grad(set_to_none=True)
            result = assemble(Network(arch, params), None)
            loss = _assign_gradients(params, result)
            if loss < best_loss:
                best_loss, best_params = loss, params.detached()
            step += 1
            if step % config.report_every == 0:
                trace.add(step, "lbfgs", result)
                logger.info("lbfgs evaluation %d loss %.6e", step, loss)
            checkpoint(step)
            return result.total.detach()

        optimizer.step(closure)

    if not math.isfinite(best_loss):
        logger.error("training finished without a finite loss")
    logger.info("training done after %d steps, best loss %.6e", step, best_loss)
    return TrainResult(params=best_params, best_loss=best_loss, steps=step, trace=trace.rows)
