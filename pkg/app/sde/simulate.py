import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from typing import List, Sequence, Tuple

import numpy as np

from app.exceptions import ConfigurationError, EstimatorError, OracleError
from app.sde.model import SdeModel

logger = logging.getLogger(__name__)

BLOCK_SIZE = 8192
MAX_EXCLUDED_FRACTION = 0.01
EXPLOSION_LIMIT = 1e100
JUMP_RATE_WARNING = 0.1


class Scheme(str, Enum):
    EULER = "euler"
    RK4_DRIFT = "rk4_drift"


@dataclass(frozen=True)
class PathEnsemble:
    times: np.ndarray
    states: np.ndarray  # (n_times, n_paths, d)
    seed: int
    scheme: str
    dt: float
    jump_counts: np.ndarray  # (n_paths, m_C)
    n_excluded: int = 0

    @property
    def n_paths(self) -> int:
        return self.states.shape[1]

    @property
    def dim(self) -> int:
        return self.states.shape[2]

    def time_index(self, t: float, atol: float = 1e-9) -> int:
        """Index of the stored grid time nearest t, at most half a step away."""
        gaps = np.abs(self.times - t)
        index = int(np.argmin(gaps))
        if gaps[index] > max(atol, 0.5 * self.dt):
            raise EstimatorError(
                f"time {t} is not stored; stored times are {self.times.tolist()}"
            )
        return index

    def at(self, t: float) -> np.ndarray:
        return self.states[self.time_index(t)]


def _drift_increment(model: SdeModel, x: np.ndarray, dt: float, scheme: Scheme) -> np.ndarray:
    k1 = model.drift_at(x)
    if scheme is Scheme.EULER:
        return dt * k1
    k2 = model.drift_at(x + 0.5 * dt * k1)
    k3 = model.drift_at(x + 0.5 * dt * k2)
    k4 = model.drift_at(x + dt * k3)
    return dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _jump_sums(model: SdeModel, counts: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    n = counts.shape[0]
    sums = np.zeros(counts.shape)
    owners = np.arange(n)
    for r, process in enumerate(model.jumps):
        total = int(counts[:, r].sum())
        if total == 0:
            continue
        sizes = process.law.sample(rng, total)
        sums[:, r] = np.bincount(np.repeat(owners, counts[:, r]), weights=sizes, minlength=n)
    return sums


def _simulate_block(
    model: SdeModel,
    init,
    scheme: Scheme,
    dt: float,
    n_steps: int,
    store_steps: np.ndarray,
    n: int,
    rng: np.random.Generator,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    d = model.dim
    rates = np.array([p.intensity * dt for p in model.jumps])
    x = np.asarray(init.sample(rng, n), dtype=float).reshape(n, d)
    alive = np.ones(n, dtype=bool)
    counts_total = np.zeros((n, model.m_c), dtype=np.int64)
    out = np.empty((len(store_steps), n, d))
    out[store_steps == 0] = x
    sqrt_dt = math.sqrt(dt)

    for step in range(1, n_steps + 1):
        with np.errstate(over="ignore", invalid="ignore"):
            increment = _drift_increment(model, x, dt, scheme)
            if model.m_b:
                dB = rng.standard_normal((n, model.m_b)) * sqrt_dt
                increment += np.einsum("ndm,nm->nd", model.gwn_at(x), dB)
            if model.m_c:
                counts = rng.poisson(rates, size=(n, model.m_c))
                counts_total += counts
                dC = _jump_sums(model, counts, rng)
                increment += np.einsum("ndm,nm->nd", model.jump_at(x), dC)
            x_new = x + increment

        exploded = alive & ~(np.all(np.isfinite(x_new), axis=1) & np.all(np.abs(x_new) < EXPLOSION_LIMIT, axis=1))
        alive &= ~exploded
        # dead paths stay frozen at their last finite state
        x = np.where(alive[:, None], x_new, x)
        hits = store_steps == step
        if hits.any():
            out[hits] = x
    return out, alive, counts_total


def simulate(
    model: SdeModel,
    init,
    scheme: Scheme,
    dt: float,
    store_times: Sequence[float],
    n_paths: int,
    seed: int,
    threads: int = 1,
    block_size: int = BLOCK_SIZE,
) -> PathEnsemble:
    """Monte Carlo paths of the model, recorded at the grid steps nearest store_times.

    Each block of paths draws from its own stream seeded by (seed, block index),
    so the ensemble does not depend on the thread count.
    """
    scheme = Scheme(scheme)
    if dt <= 0:
        raise ConfigurationError(f"dt must be positive, got {dt}")
    if n_paths < 1:
        raise ConfigurationError(f"n_paths must be >= 1, got {n_paths}")
    if init.dim != model.dim:
        raise ConfigurationError(f"initial law has dimension {init.dim}, model has {model.dim}")
    times = np.asarray(sorted(float(t) for t in store_times))
    if times.size == 0 or times[0] < 0:
        raise ConfigurationError("store_times must be non-empty and non-negative")
    for process in model.jumps:
        if process.intensity * dt > JUMP_RATE_WARNING:
            logger.warning(
                "jump intensity %.4g with dt %.4g gives %.3f events per step",
                process.intensity,
                dt,
                process.intensity * dt,
            )

    store_steps = np.rint(times / dt).astype(np.int64)
    snapped = store_steps * dt
    if not np.allclose(snapped, times, rtol=0.0, atol=1e-9):
        logger.info("store times %s snapped to the dt grid: %s", times.tolist(), snapped.tolist())
    times = snapped
    n_steps = int(store_steps.max())
    blocks: List[Tuple[int, int]] = []
    for b, start in enumerate(range(0, n_paths, block_size)):
        blocks.append((b, min(block_size, n_paths - start)))

    def run(block: Tuple[int, int]):
        index, size = block
        rng = np.random.default_rng(np.random.SeedSequence([int(seed), index]))
        return _simulate_block(model, init, scheme, dt, n_steps, store_steps, size, rng)

    logger.info(
        "simulating %d paths of a %d-d model: %s, dt=%g, %d steps, %d blocks",
        n_paths,
        model.dim,
        scheme.value,
        dt,
        n_steps,
        len(blocks),
    )
    with ThreadPoolExecutor(max_workers=max(1, int(threads))) as pool:
        results = list(pool.map(run, blocks))

    states = np.concatenate([r[0] for r in results], axis=1)
    alive = np.concatenate([r[1] for r in results])
    counts = np.concatenate([r[2] for r in results], axis=0)
    n_excluded = int((~alive).sum())
    if n_excluded > MAX_EXCLUDED_FRACTION * n_paths:
        raise OracleError(
            f"{n_excluded} of {n_paths} paths exploded (limit {MAX_EXCLUDED_FRACTION:.0%})"
        )
    if n_excluded:
        logger.warning("excluded %d exploded paths of %d", n_excluded, n_paths)

    return PathEnsemble(
        times=times,
        states=states[:, alive, :],
        seed=int(seed),
        scheme=scheme.value,
        dt=float(dt),
        jump_counts=counts[alive],
        n_excluded=n_excluded,
    )
