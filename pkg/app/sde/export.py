import json
from pathlib import Path
from typing import Union

import numpy as np
import pandas as pd

from app.exceptions import ConfigurationError
from app.sde.simulate import PathEnsemble


def ensemble_frame(ensemble: PathEnsemble) -> pd.DataFrame:
    n_times, n_paths, d = ensemble.states.shape
    frame = pd.DataFrame(
        {
            "time": np.repeat(ensemble.times, n_paths),
            "path_id": np.tile(np.arange(n_paths), n_times),
        }
    )
    flat = ensemble.states.reshape(n_times * n_paths, d)
    for k in range(d):
        frame[f"x_{k + 1}"] = flat[:, k]
    return frame


def _meta(ensemble: PathEnsemble) -> dict:
    return {
        "seed": ensemble.seed,
        "scheme": ensemble.scheme,
        "dt": ensemble.dt,
        "n_excluded": ensemble.n_excluded,
    }


def _meta_path(path: Path) -> Path:
    return path.parent / f"{path.stem}.json"


def write_ensemble_csv(ensemble: PathEnsemble, path: Union[str, Path]) -> Path:
    """Long CSV (time, path_id, x_1..x_d) plus a JSON sidecar with the run metadata."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    ensemble_frame(ensemble).to_csv(path, index=False, float_format="%.17g")
    sidecar = {**_meta(ensemble), "jump_counts": ensemble.jump_counts.tolist()}
    _meta_path(path).write_text(json.dumps(sidecar))
    return path


def read_ensemble_csv(path: Union[str, Path]) -> PathEnsemble:
    path = Path(path)
    try:
        frame = pd.read_csv(path, float_precision="round_trip")
        meta = json.loads(_meta_path(path).read_text())
    except (OSError, ValueError) as e:
        raise ConfigurationError(f"cannot read ensemble {path}: {e}") from e
    columns = sorted((c for c in frame.columns if c.startswith("x_")), key=lambda c: int(c[2:]))
    if not columns or not {"time", "path_id"} <= set(frame.columns):
        raise ConfigurationError(f"ensemble {path} needs time, path_id and x_k columns")
    frame = frame.sort_values(["time", "path_id"], kind="stable")
    times = np.unique(frame["time"].to_numpy(dtype=float))
    n_paths = frame["path_id"].nunique()
    if len(frame) != times.size * n_paths:
        raise ConfigurationError(f"ensemble {path} does not hold every path at every time")
    states = frame[columns].to_numpy(dtype=float).reshape(times.size, n_paths, len(columns))
    jump_counts = np.asarray(meta.get("jump_counts", []), dtype=np.int64).reshape(n_paths, -1)
    try:
        return PathEnsemble(
            times=times,
            states=states,
            seed=int(meta["seed"]),
            scheme=meta["scheme"],
            dt=float(meta["dt"]),
            jump_counts=jump_counts,
            n_excluded=int(meta.get("n_excluded", 0)),
        )
    except KeyError as e:
        raise ConfigurationError(f"ensemble metadata for {path} lacks {e}") from e


def write_ensemble_npz(ensemble: PathEnsemble, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    meta = _meta(ensemble)
    with path.open("wb") as fh:
        np.savez_compressed(
            fh,
            times=ensemble.times,
            states=ensemble.states,
            jump_counts=ensemble.jump_counts,
            meta=np.array(json.dumps(meta)),
        )
    return path


def read_ensemble_npz(path: Union[str, Path]) -> PathEnsemble:
    path = Path(path)
    try:
        with np.load(path, allow_pickle=False) as data:
            meta = json.loads(str(data["meta"]))
            return PathEnsemble(
                times=data["times"],
                states=data["states"],
                seed=int(meta["seed"]),
                scheme=meta["scheme"],
                dt=float(meta["dt"]),
                jump_counts=data["jump_counts"],
                n_excluded=int(meta.get("n_excluded", 0)),
            )
    except (OSError, KeyError, ValueError) as e:
        raise ConfigurationError(f"cannot read ensemble {path}: {e}") from e


def read_ensemble(path: Union[str, Path]) -> PathEnsemble:
    """Reads either stored format, chosen by the file suffix."""
    path = Path(path)
    if path.suffix == ".csv":
        return read_ensemble_csv(path)
    return read_ensemble_npz(path)
