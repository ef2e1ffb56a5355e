import math

import numpy as np
import pytest
import torch

from app.exceptions import ConfigurationError, NormalizationError, TrainingDiagnosticError
from app.net.mlp import DTYPE, MlpArchitecture, init_params
from app.net.network import Network
from app.train.collocation import CollocationConfig, build_collocation
from app.train.domain import DomainBox
from app.train.losses import chf_loss, fp_loss
from app.train.loop import TrainConfig, train
from app.train.quadrature import TimeSliceQuadrature, norm_ratio_update
from app.train.sampling import lhs_in, sample_grid
from tests.helpers import AutogradField, brownian_chf_field, bundled

BOX = DomainBox(lower=(-7.0,), upper=(7.0,), horizon=1.0)


def normalized_brownian_v():
    """v = x^2 / 2s + log sqrt(2 pi s), so e^{-v} integrates to one."""

    def fn(p):
        s = 1.0 + p[:, 1]
        return (0.5 * p[:, 0] ** 2 / s + 0.5 * torch.log(2 * math.pi * s)).unsqueeze(1)

    return AutogradField(fn)


class TestDomainAndSampling:
    def test_box_validation(self):
        with pytest.raises(ValueError):
            DomainBox(lower=(1.0,), upper=(0.0,), horizon=1.0)
        assert BOX.volume == pytest.approx(14.0)
        assert BOX.contains([[0.0, 0.5], [8.0, 0.5]]).tolist() == [True, False]

    def test_lhs_strata(self):
        sample = lhs_in([0.0], [1.0], 10, seed=1)
        occupied = np.sort(np.floor(sample[:, 0] * 10).astype(int))
        assert occupied.tolist() == list(range(10))

    def test_grid_includes_endpoints(self):
        grid = sample_grid(BOX, [3, 2])
        assert grid.shape == (6, 2)
        assert grid[0].tolist() == [-7.0, 0.0]
        assert grid[-1].tolist() == [7.0, 1.0]

    def test_grid_count_mismatch(self):
        with pytest.raises(ConfigurationError):
            sample_grid(BOX, [3])


class TestCollocation:
    def test_chf_sets(self):
        config = CollocationConfig(op_sampler="lhs", n_op=200, ic_sampler="uniform", n_ic=30, n_origin=10, seed=4)
        colloc = build_collocation(config, BOX, "chf")
        assert colloc.op_points.shape == (200, 2)
        assert np.all(colloc.ic_points[:, 1] == 0.0)
        assert np.all(colloc.origin_points[:, 0] == 0.0)
        assert colloc.origin_points[:, 1].tolist() == pytest.approx(np.linspace(0, 1, 10).tolist())
        assert BOX.contains(colloc.op_points).all()

    def test_seeded(self):
        config = CollocationConfig(op_sampler="lhs", n_op=50, n_ic=5, seed=9)
        a = build_collocation(config, BOX, "chf")
        b = build_collocation(config, BOX, "chf")
        assert np.array_equal(a.op_points, b.op_points)

    def test_fp_has_no_origin_points(self):
        config = CollocationConfig(op_sampler="grid", op_counts=(11, 3), ic_sampler="grid", ic_counts=(11,), seed=0)
        colloc = build_collocation(config, BOX, "fokker_planck")
        assert colloc.origin_points.shape == (0, 2)
        assert colloc.n_op == 33

    def test_lhs_product_shares_space_nodes(self):
        box = DomainBox(lower=(-1.0, -1.0), upper=(1.0, 1.0), horizon=1.0)
        config = CollocationConfig(
            op_sampler="lhs_product", n_op_times=4, n_op_space=25, ic_sampler="lhs", n_ic=10, seed=2
        )
        colloc = build_collocation(config, box, "fokker_planck")
        assert colloc.n_op == 100
        assert np.unique(colloc.op_points[:, -1]).size == 4
        assert np.array_equal(colloc.op_points[:25, :2], colloc.space_nodes)

    def test_missing_counts(self):
        with pytest.raises(ValueError):
            CollocationConfig(op_sampler="grid", n_ic=5)

    def test_subset_too_large(self):
        config = CollocationConfig(op_sampler="lhs", n_op=5, ic_sampler="grid_subset", ic_counts=(5,), n_ic=6, seed=0)
        with pytest.raises(ConfigurationError):
            build_collocation(config, BOX, "chf")


class TestNormalizer:
    def test_brownian_ratio(self):
        box = DomainBox(lower=(-10.0,), upper=(10.0,), horizon=1.0)
        quad = TimeSliceQuadrature.trapezoid(box, [801])
        field = AutogradField(lambda p: (0.5 * p[:, :1] ** 2 / (1.0 + p[:, 1:])))
        cache = norm_ratio_update(field, quad, torch.tensor([0.0, 0.5, 1.0, 0.5], dtype=DTYPE))
        assert cache.times.tolist() == [0.0, 0.5, 1.0]
        s = 1.0 + cache.times
        assert torch.allclose(cache.c, torch.sqrt(2 * math.pi * s), rtol=1e-8)
        assert torch.allclose(cache.ratio, 0.5 / s, rtol=1e-6)
        assert torch.allclose(cache.ratio_at(torch.tensor([0.5], dtype=DTYPE)), torch.tensor([0.5 / 1.5], dtype=DTYPE))

    def test_monte_carlo_weights(self):
        nodes = np.zeros((8, 1))
        quad = TimeSliceQuadrature.monte_carlo(BOX, nodes)
        assert quad.weights.sum() == pytest.approx(BOX.volume)

    def test_underflowing_v_aborts(self):
        quad = TimeSliceQuadrature.trapezoid(BOX, [21])
        field = AutogradField(lambda p: -100.0 + 0.0 * p[:, :1] + p[:, 1:])
        with pytest.raises(NormalizationError) as excinfo:
            norm_ratio_update(field, quad, torch.tensor([0.0], dtype=DTYPE))
        assert excinfo.value.details["total"] == 21

    def test_constant_v(self):
        quad = TimeSliceQuadrature.trapezoid(BOX, [101])
        field = AutogradField(lambda p: 2.0 + 0.0 * p[:, :1])
        cache = norm_ratio_update(field, quad, torch.tensor([0.0, 1.0], dtype=DTYPE))
        assert torch.allclose(cache.c, torch.full((2,), math.exp(-2.0) * 14.0, dtype=DTYPE), rtol=1e-12)
        assert torch.allclose(cache.ratio, torch.zeros(2, dtype=DTYPE), atol=1e-14)

    def test_linear_drift_in_time(self):
        # v = x^2/2 + k t: c(t) = e^{-k t} c(0), so the ratio is -k
        quad = TimeSliceQuadrature.trapezoid(BOX, [201])
        field = AutogradField(lambda p: 0.5 * p[:, :1] ** 2 + 0.7 * p[:, 1:])
        cache = norm_ratio_update(field, quad, torch.tensor([0.0, 0.4], dtype=DTYPE))
        assert torch.allclose(cache.ratio, torch.full((2,), -0.7, dtype=DTYPE), rtol=1e-10)
        assert float(cache.c[1] / cache.c[0]) == pytest.approx(math.exp(-0.28), rel=1e-10)

    @pytest.mark.parametrize("sigma, nu", [(0.5, 1.0), (2.0, 0.25)])
    def test_scaled_brownian_ratio(self, sigma, nu):
        box = DomainBox(lower=(-12.0,), upper=(12.0,), horizon=1.0)
        quad = TimeSliceQuadrature.trapezoid(box, [1201])
        field = AutogradField(lambda p: 0.5 * p[:, :1] ** 2 / (nu + sigma**2 * p[:, 1:]))
        cache = norm_ratio_update(field, quad, torch.tensor([0.0, 0.5, 1.0], dtype=DTYPE))
        s = nu + sigma**2 * cache.times
        assert torch.allclose(cache.ratio, sigma**2 / (2 * s), rtol=1e-6)

    def test_two_dimensional_ratio_adds_per_coordinate(self):
        box = DomainBox(lower=(-8.0, -8.0), upper=(8.0, 8.0), horizon=1.0)
        quad = TimeSliceQuadrature.trapezoid(box, [161, 161])
        field = AutogradField(
            lambda p: (0.5 * p[:, 0] ** 2 / (1.0 + p[:, 2]) + 0.5 * p[:, 1] ** 2 / (0.5 + 2.0 * p[:, 2])).unsqueeze(1)
        )
        cache = norm_ratio_update(field, quad, torch.tensor([0.25], dtype=DTYPE))
        t = 0.25
        expected = 0.5 / (1.0 + t) + 1.0 / (0.5 + 2.0 * t)
        assert float(cache.ratio[0]) == pytest.approx(expected, rel=1e-6)
        assert float(cache.c[0]) == pytest.approx(2 * math.pi * math.sqrt((1.0 + t) * (0.5 + 2.0 * t)), rel=1e-6)

    def test_out_of_range_v_is_clamped(self):
        # v < -30 at the single node x = 0, v > 30 for |x| > sqrt(30)
        quad = TimeSliceQuadrature.trapezoid(BOX, [1001])
        field = AutogradField(lambda p: p[:, :1] ** 2 - 31.0 * torch.exp(-1e4 * p[:, :1] ** 2))
        cache = norm_ratio_update(field, quad, torch.tensor([0.5], dtype=DTYPE))
        x = quad.nodes[:, 0]
        v = x**2 - 31.0 * np.exp(-1e4 * x**2)
        assert cache.clamped_low == 1
        assert cache.clamped_high == int((v > 30.0).sum()) > 0
        assert float(cache.c[0]) == pytest.approx(float((quad.weights * np.exp(-np.clip(v, -30.0, 30.0))).sum()), rel=1e-12)
        assert float(cache.c[0]) < float((quad.weights * np.exp(-v)).sum())


class TestLosses:
    def test_chf_loss_vanishes_on_exact_solution(self):
        config = bundled("brownian_chf")
        colloc = build_collocation(config.collocation.model_copy(update={"n_op": 64}), config.domain, "chf")
        residual = config.compile()
        phi0 = torch.as_tensor(config.initial.chf(colloc.ic_points[:, :1]), dtype=torch.complex128)
        result = chf_loss(brownian_chf_field(), residual, colloc, phi0, config.domain)
        assert result.total.item() < 1e-20
        assert set(result.components) == {"operator", "initial", "origin"}

    def test_fp_loss_vanishes_on_exact_solution(self):
        config = bundled("brownian_fp")
        colloc = build_collocation(config.collocation, config.domain, "fokker_planck")
        residual = config.compile()
        quad = TimeSliceQuadrature.trapezoid(config.domain, [701])
        v0 = torch.as_tensor(config.initial.neg_logpdf(colloc.ic_points[:, :1]), dtype=DTYPE)
        result = fp_loss(normalized_brownian_v(), residual, colloc.take_op(np.arange(0, 200)), quad, v0)
        assert result.components["initial"].item() < 1e-20
        assert result.components["operator"].item() < 1e-8

    def test_non_finite_initial_target_is_diagnosed(self):
        config = bundled("brownian_chf")
        colloc = build_collocation(config.collocation.model_copy(update={"n_op": 16}), config.domain, "chf")
        phi0 = torch.full((colloc.ic_points.shape[0],), float("nan"), dtype=torch.complex128)
        with pytest.raises(TrainingDiagnosticError) as excinfo:
            chf_loss(brownian_chf_field(), config.compile(), colloc, phi0, config.domain)
        assert excinfo.value.point is not None


class TestTrainLoop:
    @pytest.fixture
    def problem(self):
        """Fit the constant 1 on a handful of points."""
        arch = MlpArchitecture(input_dim=2, hidden_widths=(6,), output_dim=1)
        points = torch.as_tensor(lhs_in([-1.0, 0.0], [1.0, 1.0], 20, seed=0), dtype=DTYPE)

        def assemble(network, index=None):
            from app.train.losses import LossResult

            op = points if index is None else points[torch.as_tensor(index)]
            residuals = network.values(op)[:, 0] - 1.0
            total = torch.mean(residuals**2)
            return LossResult(total=total, components={"operator": total}, residuals=residuals, op_points=op)

        return arch, assemble

    def test_zero_steps_returns_initial(self, problem):
        arch, assemble = problem
        params = init_params(arch, seed=0)
        result = train(Network(arch, params), assemble, TrainConfig(adam_steps=0, optimizer="adam"), n_op=20)
        assert result.steps == 0
        assert torch.equal(result.params.flatten(), params.flatten().detach())
        assert [row["phase"] for row in result.trace] == ["init"]

    def test_loss_decreases_and_trace_written(self, problem, tmp_path):
        arch, assemble = problem
        config = TrainConfig(adam_steps=50, lr=1e-2, lbfgs_max_iter=20, report_every=10, seed=1)
        result = train(Network(arch, init_params(arch, seed=0)), assemble, config, n_op=20, trace_path=tmp_path / "trace.csv")
        frame = result.trace_frame()
        assert result.best_loss < frame["total"].iloc[0]
        assert set(frame["phase"]) >= {"init", "adam"}
        assert (tmp_path / "trace.csv").read_text().startswith("step,phase,total,operator")

    def test_deterministic(self, problem):
        arch, assemble = problem
        config = TrainConfig(optimizer="adam", adam_steps=20, batch_size=8, seed=3)
        a = train(Network(arch, init_params(arch, seed=0)), assemble, config, n_op=20)
        b = train(Network(arch, init_params(arch, seed=0)), assemble, config, n_op=20)
        assert torch.equal(a.params.flatten(), b.params.flatten())

    def test_checkpoints(self, problem, tmp_path):
        arch, assemble = problem
        config = TrainConfig(optimizer="adam", adam_steps=4, checkpoint_every=2, seed=0)
        train(Network(arch, init_params(arch, seed=0)), assemble, config, n_op=20, checkpoint_dir=tmp_path)
        assert sorted(p.name for p in tmp_path.iterdir()) == ["step_0000002.json", "step_0000004.json"]

    def test_minibatch_best_loss_is_full_batch(self):
        arch = MlpArchitecture(input_dim=2, hidden_widths=(8,), output_dim=1)
        points = torch.as_tensor(lhs_in([-1.0, 0.0], [1.0, 1.0], 40, seed=0), dtype=DTYPE)

        def assemble(network, index=None):
            from app.train.losses import LossResult

            op = points if index is None else points[torch.as_tensor(index)]
            residuals = network.values(op)[:, 0] - torch.sin(5.0 * op[:, 0])
            total = torch.mean(residuals**2)
            return LossResult(total=total, components={"operator": total}, residuals=residuals, op_points=op)

        config = TrainConfig(optimizer="adam", adam_steps=200, lr=1e-2, batch_size=2, report_every=20, seed=4)
        result = train(Network(arch, init_params(arch, seed=0)), assemble, config, n_op=40)

        with torch.no_grad():
            full = float(assemble(Network(arch, result.params), None).total)
        assert full == pytest.approx(result.best_loss, rel=1e-9)
        assert result.best_loss == pytest.approx(result.trace_frame()["total"].min(), rel=1e-12)
        assert result.trace_frame()["step"].tolist() == [0] + list(range(20, 201, 20))
