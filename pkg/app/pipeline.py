"""Stage runners behind the command line and the run service.

Each runner takes a validated ExperimentConfig and an output directory, writes
its artifacts there and returns a JSON-serialisable metrics mapping that is
also stored as <stage>_metrics.json.
"""

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np
import pandas as pd
import torch

from app.exceptions import ConfigurationError, TrainingDiagnosticError
from app.experiment import ExperimentConfig
from app.fields import FieldEstimate, Provenance, Quantity, mesh_of
from app.net.checkpoint import load_checkpoint, save_checkpoint
from app.net.mlp import DTYPE, configure_torch, init_params
from app.net.network import Network
from app.post.audits import boundary_audit, chf_constraint_audit, outer_monotone, residual_scatter
from app.post.density import integrate, marginalize, normalize_density
from app.post.evaluate import NetworkDensity, chf_field, chf_line, log_density_field
from app.post.export import write_field
from app.post.inversion import InversionReport, fourier_invert_1d
from app.post.metrics import sup_error
from app.residual.fp import eval_transformed_fp
from app.residual.render import format_residual, residual_to_json
from app.sde.analytic import (
    gaussian_diffusion_chf,
    gaussian_diffusion_pdf,
    verhulst_stationary_pdf,
)
from app.sde.estimators import empirical_chf, histogram, kde
from app.sde.export import read_ensemble, write_ensemble_csv, write_ensemble_npz
from app.sde.simulate import PathEnsemble, simulate
from app.train.collocation import build_collocation
from app.train.loop import train
from app.train.losses import chf_loss, fp_loss
from app.train.quadrature import TimeSliceQuadrature, norm_ratio_update

logger = logging.getLogger(__name__)

COMMANDS = ("derive", "train", "simulate", "compare")
CHECKPOINT_NAME = "checkpoint.json"
ENSEMBLE_STEM = "ensemble"
DIAGNOSTIC_NAME = "diagnostic.json"


@dataclass(frozen=True)
class Peer:
    config: ExperimentConfig
    checkpoint: Path


def _write_json(path: Path, payload: Dict[str, Any]) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, default=float))
    return path


def _time_tag(t: float) -> str:
    return f"t{t:.4f}".replace(".", "p")


def _quadrature(config: ExperimentConfig, colloc) -> TimeSliceQuadrature:
    if config.quadrature.kind == "monte_carlo":
        return TimeSliceQuadrature.monte_carlo(config.domain, colloc.space_nodes)
    return TimeSliceQuadrature.trapezoid(config.domain, config.quadrature.counts)


def _initial_space(colloc) -> np.ndarray:
    return colloc.ic_points[:, :-1]


# derive


def run_derive(config: ExperimentConfig, out_dir: Union[str, Path]) -> Dict[str, Any]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    residual = config.compile()
    text = format_residual(residual)
    (out_dir / "residual.txt").write_text(text + "\n")
    (out_dir / "residual.json").write_text(residual_to_json(residual))
    metrics = {
        "route": config.route,
        "n_terms": len(residual.canonical_terms()),
        "text": text,
    }
    if config.route == "chf":
        metrics["is_real_valued"] = residual.is_real_valued
        metrics["n_dilation_terms"] = len(residual.dilation_terms)
    _write_json(out_dir / "derive_metrics.json", metrics)
    return metrics


# train


def build_training(config: ExperimentConfig):
    """Residual, architecture, collocation set and loss assembler of a config."""
    residual = config.compile()
    arch = config.mlp_architecture(residual)
    colloc = build_collocation(config.collocation, config.domain, config.route)

    if config.route == "fokker_planck":
        quad = _quadrature(config, colloc)
        v0 = torch.as_tensor(config.initial.neg_logpdf(_initial_space(colloc)), dtype=DTYPE)

        def assemble(network, index=None):
            return fp_loss(network, residual, colloc.take_op(index), quad, v0)

    else:
        phi0 = torch.as_tensor(config.initial.chf(_initial_space(colloc)), dtype=torch.complex128)

        def assemble(network, index=None):
            return chf_loss(network, residual, colloc.take_op(index), phi0, config.domain)

    return residual, arch, colloc, assemble


def run_train(
    config: ExperimentConfig,
    out_dir: Union[str, Path],
    threads: int = 1,
) -> Dict[str, Any]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    configure_torch(threads)
    _, arch, colloc, assemble = build_training(config)
    params = init_params(arch, seed=config.train.seed, output_bias=config.train.init_output_bias)
    logger.info(
        "training %s: %d parameters, %d operator points",
        config.name,
        arch.parameter_count,
        colloc.n_op,
    )
    try:
        result = train(
            Network(arch, params),
            assemble,
            config.train,
            n_op=colloc.n_op,
            trace_path=out_dir / "loss_trace.csv",
            checkpoint_dir=out_dir / "checkpoints" if config.train.checkpoint_every else None,
        )
    except TrainingDiagnosticError as e:
        _write_json(out_dir / DIAGNOSTIC_NAME, {"config": config.name, **e.to_dict()})
        logger.error("training aborted, diagnostic written to %s", out_dir / DIAGNOSTIC_NAME)
        raise

    metadata = {
        "config": config.name,
        "route": config.route,
        "best_loss": result.best_loss,
        "steps": result.steps,
        "seed": config.train.seed,
    }
    save_checkpoint(out_dir / CHECKPOINT_NAME, arch, result.params, metadata)
    metrics = {**metadata, "final": result.trace[-1] if result.trace else {}}
    _write_json(out_dir / "train_metrics.json", metrics)
    return metrics


# simulate


def simulate_config(config: ExperimentConfig, threads: int = 1) -> PathEnsemble:
    oracle = config.oracle
    return simulate(
        config.model,
        config.initial,
        oracle.scheme,
        oracle.dt,
        config.outputs.times,
        oracle.n_paths,
        oracle.seed,
        threads=threads,
    )


def _kde_axes(config: ExperimentConfig) -> List[np.ndarray]:
    counts = config.oracle.kde_counts or config.compare.grid_counts or (101,) * config.model.dim
    return [np.linspace(lo, hi, int(c)) for lo, hi, c in zip(config.domain.lower, config.domain.upper, counts)]


def _mc_kde_field(config: ExperimentConfig, ensemble: PathEnsemble, t: float) -> FieldEstimate:
    if config.route == "chf":
        # the domain box is in frequency space; estimate the marginal on the inversion line
        spec = config.compare.inversion
        return kde(ensemble, t, [_line(spec.x)], coordinates=[spec.axis])
    return kde(ensemble, t, _kde_axes(config))


def _mc_chf_field(ensemble: PathEnsemble, axes, t: float) -> FieldEstimate:
    values = empirical_chf(ensemble, t, mesh_of(axes))
    return FieldEstimate(
        axes=tuple(axes),
        values=values.reshape(tuple(len(a) for a in axes)),
        time=t,
        provenance=Provenance.MONTE_CARLO,
        quantity=Quantity.CHF,
        label="empirical_chf",
    )


def run_simulate(
    config: ExperimentConfig,
    out_dir: Union[str, Path],
    threads: int = 1,
) -> Dict[str, Any]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ensemble = simulate_config(config, threads)
    if config.oracle.ensemble_format == "csv":
        path = write_ensemble_csv(ensemble, out_dir / f"{ENSEMBLE_STEM}.csv")
    else:
        path = write_ensemble_npz(ensemble, out_dir / f"{ENSEMBLE_STEM}.npz")

    per_time = []
    for t in ensemble.times:
        x = ensemble.at(t)
        per_time.append(
            {
                "time": float(t),
                "mean": x.mean(axis=0).tolist(),
                "variance": x.var(axis=0, ddof=1).tolist() if x.shape[0] > 1 else None,
            }
        )

    estimates = config.oracle.estimators
    for t in ensemble.times:
        tag = _time_tag(t)
        if "chf" in estimates:
            write_field(_mc_chf_field(ensemble, config.grid_axes(), t), out_dir / f"mc_chf_{tag}")
        if "kde" in estimates:
            write_field(_mc_kde_field(config, ensemble, t), out_dir / f"mc_kde_{tag}")
        if "histogram" in estimates:
            spec = config.compare.histogram
            coordinate = spec.coordinate if spec else 0
            hist = histogram(
                ensemble,
                t,
                coordinate,
                spec.bins if spec else 30,
                spec.range if spec else None,
            )
            pd.DataFrame(
                {"lo": hist.edges[:-1], "hi": hist.edges[1:], "density": hist.density}
            ).to_csv(out_dir / f"mc_hist_x{coordinate + 1}_{tag}.csv", index=False)

    metrics = {
        "ensemble": str(path),
        "n_paths": ensemble.n_paths,
        "n_excluded": ensemble.n_excluded,
        "scheme": ensemble.scheme,
        "dt": ensemble.dt,
        "mean_jump_counts": ensemble.jump_counts.mean(axis=0).tolist()
        if ensemble.jump_counts.size
        else [],
        "moments": per_time,
    }
    _write_json(out_dir / "simulate_metrics.json", metrics)
    return metrics


# compare


def load_network(config: ExperimentConfig, checkpoint: Union[str, Path]) -> Network:
    loaded = load_checkpoint(checkpoint)
    expected = config.mlp_architecture()
    if loaded.arch != expected:
        raise ConfigurationError(
            f"checkpoint architecture {loaded.arch.layer_sizes} does not match the config "
            f"({expected.layer_sizes})"
        )
    return Network(loaded.arch, loaded.params)


def _density_field(network: Network, axes, t: float) -> FieldEstimate:
    return normalize_density(log_density_field(network, axes, t, label="network"))


def _analytic_field(config: ExperimentConfig, axes, t: float) -> Optional[FieldEstimate]:
    spec = config.compare.analytic
    if spec is None or (spec.times is not None and t not in spec.times) or len(axes) != 1:
        return None
    grid = axes[0]
    if spec.kind == "gaussian_diffusion":
        if config.route == "chf":
            values = gaussian_diffusion_chf(grid, t, spec.sigma, spec.nu).astype(complex)
            quantity = Quantity.CHF
        else:
            values = gaussian_diffusion_pdf(grid, t, spec.sigma, spec.nu)
            quantity = Quantity.PDF
    else:
        values = verhulst_stationary_pdf(grid, spec.rho, spec.sigma)
        quantity = Quantity.PDF
    return FieldEstimate(
        axes=(grid,), values=values, time=t, provenance=Provenance.ANALYTIC, quantity=quantity,
        label=spec.kind,
    )


def _line(spec) -> np.ndarray:
    return np.linspace(spec.lower, spec.upper, spec.count)


def _inverted_marginal(config: ExperimentConfig, network: Network, t: float) -> Tuple[FieldEstimate, InversionReport]:
    spec = config.compare.inversion
    line = chf_line(network, spec.axis, _line(spec.u), t, label="network")
    return fourier_invert_1d(line, _line(spec.x))


def _fp_marginal(network: Network, axes, t: float) -> FieldEstimate:
    field = _density_field(network, axes, t)
    while field.dim > 1:
        field = marginalize(field, axis=-1)
    return field


def _on_grid(field: FieldEstimate, grid: np.ndarray) -> FieldEstimate:
    """Linear interpolation of a 1-D field onto another grid."""
    return FieldEstimate(
        axes=(grid,),
        values=np.interp(grid, field.axes[0], field.values),
        time=field.time,
        provenance=field.provenance,
        quantity=field.quantity,
        label=field.label,
    )


def _fp_scatter(config: ExperimentConfig, network: Network, out_dir: Path) -> Dict[str, Any]:
    residual = config.compile()
    colloc = build_collocation(config.collocation, config.domain, config.route)
    quad = _quadrature(config, colloc)
    op = torch.as_tensor(colloc.op_points, dtype=DTYPE)
    net = network.detached()
    with torch.no_grad():
        cache = norm_ratio_update(net, quad, op[:, -1])
        jet = net.jet(op, residual.transformed_requests())
        values = eval_transformed_fp(residual, jet, cache.ratio_at(op[:, -1])).numpy()
    norms = np.linalg.norm(colloc.op_points[:, :-1], axis=1)
    table = residual_scatter(values, norms, config.compare.scatter_bins)
    table.to_csv(out_dir / "residual_scatter.csv", index=False)
    return {"outer_monotone": outer_monotone(table), "max_abs_residual": float(np.abs(values).max())}


def _peer_errors(
    config: ExperimentConfig, network: Network, peer: Peer, t: float, out_dir: Path
) -> Dict[str, float]:
    peer_net = load_network(peer.config, peer.checkpoint)
    tag = _time_tag(t)
    if config.route == "chf" and peer.config.route == "chf":
        ours = chf_field(network, config.grid_axes(), t, label="network")
        theirs = chf_field(peer_net, config.grid_axes(), t, label="peer")
        return {"peer_sup_error": sup_error(ours, theirs)}
    if config.route == "fokker_planck" and peer.config.route == "fokker_planck":
        ours = _density_field(network, config.grid_axes(), t)
        theirs = _density_field(peer_net, config.grid_axes(), t)
        return {"peer_sup_error": sup_error(ours, theirs)}

    fp_config, fp_net, chf_config, chf_net = (
        (config, network, peer.config, peer_net)
        if config.route == "fokker_planck"
        else (peer.config, peer_net, config, network)
    )
    if chf_config.compare.inversion is None:
        raise ConfigurationError("route consistency needs compare.inversion in the chf config")
    inverted, _ = _inverted_marginal(chf_config, chf_net, t)
    marginal = _on_grid(_fp_marginal(fp_net, fp_config.grid_axes(), t), inverted.axes[0])
    write_field(marginal, out_dir / f"fp_marginal_x1_{tag}")
    return {"route_consistency_sup_error": sup_error(marginal, inverted)}


def run_compare(
    config: ExperimentConfig,
    out_dir: Union[str, Path],
    checkpoint: Union[str, Path],
    ensemble: Optional[Union[str, Path]] = None,
    peer: Optional[Peer] = None,
    threads: int = 1,
) -> Dict[str, Any]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    configure_torch(threads)
    network = load_network(config, checkpoint)
    paths = read_ensemble(ensemble) if ensemble is not None else None
    axes = config.grid_axes()
    slices: List[Dict[str, Any]] = []
    chf_fields: List[FieldEstimate] = []

    for t in config.outputs.times:
        tag = _time_tag(t)
        entry: Dict[str, Any] = {"time": t}
        if config.route == "chf":
            field = chf_field(network, axes, t, label="network")
            chf_fields.append(field)
            if paths is not None:
                oracle = _mc_chf_field(paths, axes, t)
                write_field(oracle, out_dir / f"mc_chf_{tag}")
                entry["mc_sup_error"] = sup_error(field, oracle)
                entry["mc_sup_error_real"] = float(np.max(np.abs(field.values.real - oracle.values.real)))
                entry["mc_sup_error_imag"] = float(np.max(np.abs(field.values.imag - oracle.values.imag)))
        else:
            field = _density_field(network, axes, t)
            entry["mass_error"] = abs(integrate(field) - 1.0)
            if paths is not None:
                oracle = kde(paths, t, axes)
                write_field(oracle, out_dir / f"mc_kde_{tag}")
                entry["mc_sup_error"] = sup_error(field, oracle)
            if field.dim == 2:
                marginal = marginalize(field)
                write_field(marginal, out_dir / f"network_marginal_x1_{tag}")
                if paths is not None:
                    entry["mc_marginal_sup_error"] = sup_error(
                        marginal, kde(paths, t, axes[:1], coordinates=[0])
                    )
        write_field(field, out_dir / f"network_{config.route}_{tag}")

        analytic = _analytic_field(config, axes, t)
        if analytic is not None:
            entry["analytic_sup_error"] = sup_error(field, analytic)

        hist_spec = config.compare.histogram
        if hist_spec is not None and paths is not None and config.route == "fokker_planck":
            hist = histogram(paths, t, hist_spec.coordinate, hist_spec.bins, hist_spec.range)
            marginal = field
            while marginal.dim > 1:
                marginal = marginalize(marginal, axis=-1)
            at_centers = np.interp(hist.centers, marginal.axes[0], marginal.values)
            entry["histogram_max_bin_error"] = float(np.max(np.abs(at_centers - hist.density)))

        if config.compare.inversion is not None and config.route == "chf":
            inverted, report = _inverted_marginal(config, network, t)
            write_field(inverted, out_dir / f"inverted_x{config.compare.inversion.axis + 1}_{tag}")
            entry["inversion"] = report.as_dict()
            if paths is not None:
                mc = kde(paths, t, inverted.axes, coordinates=[config.compare.inversion.axis])
                entry["inversion_mc_sup_error"] = sup_error(inverted, mc)

        spec = config.compare.slice_identity
        if spec is not None and (spec.times is None or t in spec.times):
            line = chf_line(network, spec.axis, _line(spec.u), t, label="network")
            exact = line.with_values(
                np.exp(-0.5 * spec.variance * line.axes[0] ** 2).astype(complex),
                provenance=Provenance.ANALYTIC,
            )
            entry["slice_identity_sup_error"] = sup_error(line, exact)

        if peer is not None:
            entry.update(_peer_errors(config, network, peer, t, out_dir))
        slices.append(entry)
        logger.info("compare t=%g: %s", t, {k: v for k, v in entry.items() if k != "inversion"})

    metrics: Dict[str, Any] = {"config": config.name, "route": config.route, "slices": slices}
    if config.route == "chf":
        metrics["chf_constraints"] = chf_constraint_audit(chf_fields)
    else:
        colloc = build_collocation(config.collocation, config.domain, config.route)
        audit = boundary_audit(
            NetworkDensity(network, _quadrature(config, colloc)),
            config.model,
            config.domain,
            config.outputs.times,
            config.compare.boundary_face_nodes,
        )
        audit.to_csv(out_dir / "boundary_audit.csv", index=False)
        metrics["boundary_max"] = float(audit["max_abs"].max())
        metrics["residual_scatter"] = _fp_scatter(config, network, out_dir)
    _write_json(out_dir / "compare_metrics.json", metrics)
    return metrics


def run_command(
    command: str,
    config: ExperimentConfig,
    out_dir: Union[str, Path],
    threads: int = 1,
    checkpoint: Optional[Union[str, Path]] = None,
    ensemble: Optional[Union[str, Path]] = None,
    peer: Optional[Peer] = None,
) -> Dict[str, Any]:
    """Dispatch one stage; compare falls back to artifacts of earlier stages in out_dir."""
    out_dir = Path(out_dir)
    if command == "derive":
        return run_derive(config, out_dir)
    if command == "train":
        return run_train(config, out_dir, threads)
    if command == "simulate":
        return run_simulate(config, out_dir, threads)
    if command == "compare":
        checkpoint = Path(checkpoint) if checkpoint else out_dir / CHECKPOINT_NAME
        if not checkpoint.is_file():
            raise ConfigurationError(f"no checkpoint at {checkpoint}; run train first")
        stored = out_dir / f"{ENSEMBLE_STEM}.{config.oracle.ensemble_format}"
        if ensemble is None and stored.is_file():
            ensemble = stored
        if ensemble is None and config.oracle.estimators:
            raise ConfigurationError(f"no ensemble at {stored}; run simulate first")
        return run_compare(config, out_dir, checkpoint, ensemble, peer, threads)
    raise ConfigurationError(f"unknown command {command!r}; expected one of {', '.join(COMMANDS)}")
