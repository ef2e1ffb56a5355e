"""Experiment configuration: the TOML schema shared by the CLI and the run service."""

import copy
import logging
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from app.exceptions import CompileError, ConfigurationError
from app.net.mlp import MlpArchitecture
from app.residual.chf import DEFAULT_QUADRATURE_ORDER, compile_chf
from app.residual.fp import compile_fp
from app.sde.distributions import InitialDist
from app.sde.model import SdeModel
from app.sde.simulate import Scheme
from app.train.collocation import CollocationConfig, Route
from app.train.domain import DomainBox
from app.train.loop import TrainConfig

logger = logging.getLogger(__name__)

PAPER_SCALE_TABLE = "paper_scale"
SEEDED_SECTIONS = ("collocation", "train", "oracle")


class _Section(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")


class ArchitectureConfig(_Section):
    hidden_widths: Tuple[int, ...] = Field(min_length=1)
    # None: 1 for the FP route and for real-valued chf problems, else 2
    output_dim: Optional[Literal[1, 2]] = None


class QuadratureConfig(_Section):
    """Spatial rule for the normalizer of the FP route."""

    kind: Literal["trapezoid", "monte_carlo"] = "trapezoid"
    counts: Optional[Tuple[int, ...]] = None
    jump_order: int = Field(DEFAULT_QUADRATURE_ORDER, ge=1)


class OracleConfig(_Section):
    n_paths: int = Field(10000, ge=1)
    dt: float = Field(0.001, gt=0)
    scheme: Scheme = Scheme.EULER
    seed: int = Field(0, ge=0)
    estimators: Tuple[Literal["chf", "kde", "histogram"], ...] = ()
    kde_counts: Optional[Tuple[int, ...]] = None
    ensemble_format: Literal["npz", "csv"] = "npz"


class LineSpec(_Section):
    lower: float
    upper: float
    count: int = Field(ge=2)


class AnalyticCompare(_Section):
    kind: Literal["gaussian_diffusion", "verhulst_stationary"]
    sigma: float = 1.0
    nu: float = 1.0
    rho: float = 2.0
    times: Optional[Tuple[float, ...]] = None


class InversionCompare(_Section):
    axis: int = Field(0, ge=0)
    u: LineSpec
    x: LineSpec


class SliceIdentityCompare(_Section):
    axis: int = Field(ge=0)
    variance: float = Field(1.0, gt=0)
    u: LineSpec
    times: Optional[Tuple[float, ...]] = None


class HistogramCompare(_Section):
    coordinate: int = Field(0, ge=0)
    bins: int = Field(30, ge=1)
    range: Optional[Tuple[float, float]] = None


class CompareConfig(_Section):
    grid_counts: Optional[Tuple[int, ...]] = None
    analytic: Optional[AnalyticCompare] = None
    inversion: Optional[InversionCompare] = None
    slice_identity: Optional[SliceIdentityCompare] = None
    histogram: Optional[HistogramCompare] = None
    scatter_bins: int = Field(20, ge=1)
    boundary_face_nodes: int = Field(21, ge=2)


class OutputsConfig(_Section):
    times: Tuple[float, ...] = Field(min_length=1)


class ExperimentConfig(_Section):
    name: str = "experiment"
    description: str = ""
    model: SdeModel
    initial: InitialDist
    route: Route
    domain: DomainBox
    architecture: ArchitectureConfig
    collocation: CollocationConfig
    quadrature: QuadratureConfig = QuadratureConfig()
    train: TrainConfig
    oracle: OracleConfig
    compare: CompareConfig = CompareConfig()
    outputs: OutputsConfig

    @model_validator(mode="before")
    @classmethod
    def _explicit_seeds(cls, data: Any) -> Any:
        if isinstance(data, dict):
            for section in SEEDED_SECTIONS:
                table = data.get(section)
                if isinstance(table, dict) and "seed" not in table:
                    raise ValueError(f"{section}.seed must be set explicitly")
        return data

    @model_validator(mode="after")
    def _consistent(self) -> "ExperimentConfig":
        d = self.model.dim
        if self.initial.dim != d:
            raise ValueError(f"initial has dimension {self.initial.dim}, model has {d}")
        if self.domain.dim != d:
            raise ValueError(f"domain has {self.domain.dim} coordinates, model has {d}")
        if any(t < 0 or t > self.domain.horizon for t in self.outputs.times):
            raise ValueError(f"outputs.times must lie in [0, {self.domain.horizon}]")
        try:
            self.compile()
        except CompileError as e:
            raise ValueError(str(e)) from e

        if self.route == "fokker_planck":
            if self.model.m_c:
                raise ValueError("route fokker_planck needs a model without jump channels")
            if self.collocation.op_sampler == "lhs":
                raise ValueError(
                    "route fokker_planck needs collocation.op_sampler grid or lhs_product "
                    "(the normalizer is evaluated per distinct time)"
                )
            if self.quadrature.kind == "trapezoid" and self.quadrature.counts is None:
                raise ValueError("quadrature.counts is required for the trapezoid rule")
            if self.quadrature.kind == "monte_carlo" and self.collocation.op_sampler != "lhs_product":
                raise ValueError("quadrature.kind monte_carlo reuses the lhs_product spatial points")
            if self.architecture.output_dim == 2:
                raise ValueError("route fokker_planck trains a real log-density, output_dim must be 1")
        if self.compare.slice_identity is not None and self.compare.slice_identity.axis >= d:
            raise ValueError(f"compare.slice_identity.axis must be below {d}")
        if self.compare.inversion is not None and self.compare.inversion.axis >= d:
            raise ValueError(f"compare.inversion.axis must be below {d}")
        if self.route == "chf" and "kde" in self.oracle.estimators and self.compare.inversion is None:
            raise ValueError("oracle.estimators kde on the chf route needs compare.inversion")
        counts = self.compare.grid_counts
        if counts is not None and len(counts) != d:
            raise ValueError(f"compare.grid_counts needs {d} entries")
        return self

    def compile(self):
        if self.route == "chf":
            return compile_chf(self.model, self.initial, self.quadrature.jump_order)
        return compile_fp(self.model)

    def mlp_architecture(self, residual=None) -> MlpArchitecture:
        output_dim = self.architecture.output_dim
        if output_dim is None:
            if self.route == "fokker_planck":
                output_dim = 1
            else:
                residual = residual if residual is not None else self.compile()
                output_dim = 1 if residual.is_real_valued else 2
        return MlpArchitecture(
            input_dim=self.model.dim + 1,
            hidden_widths=self.architecture.hidden_widths,
            output_dim=output_dim,
        )

    def grid_axes(self) -> List:
        """Spatial (or frequency) comparison grid over the domain box."""
        counts = self.compare.grid_counts or (101,) * self.model.dim
        return [
            np.linspace(lo, hi, int(c)) for lo, hi, c in zip(self.domain.lower, self.domain.upper, counts)
        ]


def deep_merge(base: Dict[str, Any], override: Dict[str, Any]) -> Dict[str, Any]:
    merged = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = deep_merge(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def _override_seeds(document: Dict[str, Any], seed: int) -> None:
    for section in SEEDED_SECTIONS:
        table = document.get(section)
        if isinstance(table, dict):
            table["seed"] = int(seed)


def build_experiment(
    document: Dict[str, Any],
    paper_scale: bool = False,
    seed: Optional[int] = None,
) -> ExperimentConfig:
    document = copy.deepcopy(document)
    overrides = document.pop(PAPER_SCALE_TABLE, None)
    if paper_scale:
        if overrides is None:
            raise ConfigurationError("config has no [paper_scale] table")
        document = deep_merge(document, overrides)
    if seed is not None:
        _override_seeds(document, seed)
    return ExperimentConfig.model_validate(document)


def parse_experiment(
    text: str,
    paper_scale: bool = False,
    seed: Optional[int] = None,
) -> ExperimentConfig:
    try:
        document = tomllib.loads(text)
    except tomllib.TOMLDecodeError as e:
        raise ConfigurationError(f"invalid TOML: {e}") from e
    return build_experiment(document, paper_scale=paper_scale, seed=seed)


def resolve_config_path(name_or_path: Union[str, Path], config_dir: Union[str, Path]) -> Path:
    """A file path as given, or the name of a bundled config."""
    path = Path(name_or_path)
    if path.is_file():
        return path
    bundled = Path(config_dir) / f"{path.stem}.toml"
    if bundled.is_file():
        return bundled
    raise ConfigurationError(f"no config file or bundled config named {str(name_or_path)!r}")


def load_experiment(
    path: Union[str, Path],
    paper_scale: bool = False,
    seed: Optional[int] = None,
) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise ConfigurationError(f"cannot read config {path}: {e}") from e
    config = parse_experiment(text, paper_scale=paper_scale, seed=seed)
    logger.info("loaded config %s (%s route, paper_scale=%s)", path.name, config.route, paper_scale)
    return config


def list_bundled_configs(config_dir: Union[str, Path]) -> List[str]:
    directory = Path(config_dir)
    if not directory.is_dir():
        return []
    return sorted(p.stem for p in directory.glob("*.toml"))
