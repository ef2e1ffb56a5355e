import itertools
import json
import math

import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from app.exceptions import ConfigurationError, TrainingDiagnosticError, UnsupportedDerivativeError
from app.net.checkpoint import load_checkpoint, save_checkpoint
from app.net.jets import jet_eval
from app.net.mlp import (
    DTYPE,
    MlpArchitecture,
    MlpParams,
    forward,
    init_params,
    locate_offending_point,
    loss_gradient,
)
from app.net.network import Network
from tests.helpers import autograd_derivative


def supported_indices(dim: int):
    return [
        index
        for index in itertools.product(range(4), repeat=dim)
        if 0 < sum(index) <= 3 and sum(1 for e in index if e) <= 2
    ]


small_archs = st.builds(
    MlpArchitecture,
    input_dim=st.integers(1, 3),
    hidden_widths=st.lists(st.integers(1, 6), min_size=1, max_size=3).map(tuple),
    output_dim=st.integers(1, 2),
)


@pytest.fixture
def arch():
    return MlpArchitecture(input_dim=3, hidden_widths=(8, 6), output_dim=2)


@pytest.fixture
def network(arch):
    return Network(arch, init_params(arch, seed=3, requires_grad=False))


@pytest.fixture
def points():
    rng = np.random.default_rng(0)
    return rng.uniform(-1.0, 1.0, size=(7, 3))


class TestArchitecture:
    def test_layer_sizes_and_count(self, arch):
        assert arch.layer_sizes == (3, 8, 6, 2)
        assert arch.parameter_count == 3 * 8 + 8 + 8 * 6 + 6 + 6 * 2 + 2

    def test_rejects_zero_width(self):
        with pytest.raises(ValueError):
            MlpArchitecture(input_dim=2, hidden_widths=(4, 0))

    def test_no_hidden_layer_is_affine(self):
        arch = MlpArchitecture(input_dim=2, hidden_widths=())
        params = MlpParams.from_tensors(
            [torch.tensor([[2.0, -1.0]], dtype=DTYPE), torch.tensor([0.5], dtype=DTYPE)]
        )
        out = forward(params, arch, [[1.0, 3.0]])
        assert float(out[0, 0]) == pytest.approx(2.0 - 3.0 + 0.5)


class TestForward:
    def test_batch_shape(self, network, points):
        assert network.values(points).shape == (7, 2)

    def test_single_point(self, network, points):
        single = network.values(points[0])
        assert single.shape == (2,)
        assert torch.allclose(single, network.values(points)[0])

    def test_wrong_input_dim(self, network):
        with pytest.raises(ConfigurationError):
            network.values(np.zeros((4, 2)))

    def test_init_is_seeded(self, arch):
        a = init_params(arch, seed=1).flatten()
        b = init_params(arch, seed=1).flatten()
        c = init_params(arch, seed=2).flatten()
        assert torch.equal(a, b)
        assert not torch.equal(a, c)

    def test_glorot_variance_at_width_100(self):
        arch = MlpArchitecture(input_dim=100, hidden_widths=(100,), output_dim=100)
        params = init_params(arch, seed=0, requires_grad=False)
        for w, b in zip(params.weights, params.biases):
            limit = math.sqrt(6.0 / 200.0)
            assert float(w.abs().max()) <= limit
            assert float(w.var()) == pytest.approx(limit**2 / 3.0, rel=0.05)
            assert abs(float(w.mean())) < 0.005
            assert torch.all(b == 0.0)

    def test_output_bias(self, arch):
        params = init_params(arch, seed=0, output_bias=1.5)
        assert torch.all(params.biases[-1] == 1.5)

    def test_flatten_unflatten(self, arch):
        params = init_params(arch, seed=0, requires_grad=False)
        again = MlpParams.unflatten(arch, params.flatten())
        assert all(torch.equal(a, b) for a, b in zip(params.tensors(), again.tensors()))


class TestJets:
    @pytest.mark.parametrize(
        "index",
        [(1, 0, 0), (0, 0, 1), (2, 0, 0), (1, 0, 1), (0, 3, 0), (2, 1, 0), (1, 2, 0), (0, 1, 1)],
    )
    def test_matches_autograd(self, network, points, index):
        jet = network.jet(points, [index])
        for output in range(2):
            expected = autograd_derivative(network.values, points, index, output)
            assert torch.allclose(jet[index][:, output], expected, rtol=1e-9, atol=1e-11)

    def test_value_matches_forward(self, network, points):
        jet = network.jet(points, [(0, 0, 1)])
        assert torch.allclose(jet.value, network.values(points))
        assert jet[(0, 0, 0)] is jet.value

    def test_finite_difference_first_order(self, network, points):
        h = 1e-3
        shift = np.zeros(3)
        shift[0] = h
        fd = (network.values(points + shift) - network.values(points - shift)) / (2 * h)
        jet = network.jet(points, [(1, 0, 0)])
        assert torch.allclose(jet[(1, 0, 0)], fd, atol=1e-5)

    @pytest.mark.parametrize("index", [(1, 1, 1), (4, 0, 0), (0, 2, 2), (1, 0)])
    def test_unsupported_requests(self, network, points, index):
        with pytest.raises(UnsupportedDerivativeError):
            network.jet(points, [index])

    def test_jets_carry_parameter_gradients(self, arch, points):
        params = init_params(arch, seed=0)
        jet = jet_eval(params, arch, points, [(0, 2, 0)])
        loss = (jet[(0, 2, 0)] ** 2).sum()
        grads = loss_gradient(params, loss)
        assert any(bool(g.abs().sum() > 0) for g in grads.tensors())

    @settings(max_examples=60, deadline=None)
    @given(small_archs, st.integers(0, 2**16))
    def test_every_supported_index_matches_central_difference(self, arch, seed):
        # each derivative is the central difference of the jet one order below
        network = Network(arch, init_params(arch, seed=seed, requires_grad=False))
        x = np.random.default_rng(seed).uniform(-1.5, 1.5, size=(8, arch.input_dim))
        indices = supported_indices(arch.input_dim)
        jet = network.jet(x, indices)
        h = 1e-4
        for index in indices:
            k = next(i for i, e in enumerate(index) if e)
            lower = tuple(e - (i == k) for i, e in enumerate(index))
            shift = np.zeros(arch.input_dim)
            shift[k] = h
            up = network.jet(x + shift, [lower])[lower]
            down = network.jet(x - shift, [lower])[lower]
            assert torch.allclose(jet[index], (up - down) / (2 * h), rtol=1e-5, atol=1e-7), index

    @given(
        st.floats(-2.0, 2.0),
        st.floats(-2.0, 2.0),
        st.lists(st.floats(-1.0, 1.0), min_size=2, max_size=2),
        st.integers(0, 2**16),
    )
    def test_directional_derivatives_are_multilinear(self, a, b, x0, seed):
        arch = MlpArchitecture(input_dim=2, hidden_widths=(6, 5), output_dim=1)
        params = init_params(arch, seed=seed, requires_grad=False)
        w0, b0 = params.weights[0], params.biases[0]
        v = torch.tensor([a, b], dtype=DTYPE)
        origin = torch.tensor(x0, dtype=DTYPE)
        # s -> f(x0 + s v) as a one-input network
        line_arch = MlpArchitecture(input_dim=1, hidden_widths=(6, 5), output_dim=1)
        line_params = MlpParams.from_tensors([w0 @ v[:, None], b0 + w0 @ origin, *params.tensors()[2:]])
        line = jet_eval(line_params, line_arch, [[0.0]], [(1,), (2,), (3,)])
        full = jet_eval(params, arch, [x0], supported_indices(2))
        for n in (1, 2, 3):
            expected = sum(math.comb(n, p) * a**p * b ** (n - p) * full[(p, n - p)] for p in range(n + 1))
            assert torch.allclose(line[(n,)], expected, rtol=1e-9, atol=1e-10)


class TestLossGradient:
    def test_matches_finite_difference(self):
        arch = MlpArchitecture(input_dim=2, hidden_widths=(5,), output_dim=1)
        params = init_params(arch, seed=4)
        x = torch.tensor([[0.3, -0.2], [0.1, 0.9]], dtype=DTYPE)

        def loss_of(p):
            return (forward(p, arch, x) ** 2).mean()

        grads = loss_gradient(params, loss_of(params)).flatten()
        flat = params.flatten().detach()
        h = 1e-6
        for i in (0, 3, 7, flat.numel() - 1):
            bump = torch.zeros_like(flat)
            bump[i] = h
            up = loss_of(MlpParams.unflatten(arch, flat + bump))
            down = loss_of(MlpParams.unflatten(arch, flat - bump))
            assert float(grads[i]) == pytest.approx(float((up - down) / (2 * h)), abs=1e-7)

    @settings(max_examples=10, deadline=None)
    @given(st.lists(st.integers(1, 4), min_size=1, max_size=2).map(tuple), st.integers(0, 2**16))
    def test_jet_residual_gradient_matches_finite_difference_everywhere(self, widths, seed):
        # heat-equation residual f_t - f_xx/2 on (t, x) inputs
        arch = MlpArchitecture(input_dim=2, hidden_widths=widths, output_dim=1)
        params = init_params(arch, seed=seed)
        x = torch.as_tensor(np.random.default_rng(seed).uniform(-1.0, 1.0, size=(6, 2)), dtype=DTYPE)

        def loss_of(p):
            jet = jet_eval(p, arch, x, [(1, 0), (0, 2)])
            return ((jet[(1, 0)] - 0.5 * jet[(0, 2)]) ** 2).mean()

        grads = loss_gradient(params, loss_of(params)).flatten()
        flat = params.flatten().detach()
        h = 1e-6
        for i in range(flat.numel()):
            bump = torch.zeros_like(flat)
            bump[i] = h
            fd = (loss_of(MlpParams.unflatten(arch, flat + bump)) - loss_of(MlpParams.unflatten(arch, flat - bump))) / (2 * h)
            assert float(grads[i]) == pytest.approx(float(fd), rel=1e-5, abs=1e-8), i

    def test_non_finite_loss_reports_point(self):
        arch = MlpArchitecture(input_dim=2, hidden_widths=(3,))
        params = init_params(arch, seed=0)
        pointwise = torch.tensor([1.0, float("nan"), 2.0], dtype=DTYPE)
        points = torch.tensor([[0.0, 0.0], [0.5, 0.25], [1.0, 1.0]], dtype=DTYPE)
        with pytest.raises(TrainingDiagnosticError) as excinfo:
            loss_gradient(params, pointwise.sum(), pointwise=pointwise, points=points)
        assert excinfo.value.point == [0.5, 0.25]

    def test_locate_largest_when_finite(self):
        pointwise = torch.tensor([1.0, -4.0, 2.0], dtype=DTYPE)
        points = torch.tensor([[0.0], [1.0], [2.0]], dtype=DTYPE)
        assert locate_offending_point(pointwise, points) == [1.0]


class TestCheckpoint:
    def test_round_trip_is_exact(self, tmp_path, arch, points):
        params = init_params(arch, seed=9, requires_grad=False)
        path = save_checkpoint(tmp_path / "ckpt.json", arch, params, {"best_loss": 0.25})
        loaded = load_checkpoint(path)
        assert loaded.arch == arch
        assert loaded.metadata["best_loss"] == 0.25
        assert torch.equal(forward(params, arch, points), forward(loaded.params, arch, points))

    def test_rejects_non_finite(self, tmp_path, arch):
        params = init_params(arch, seed=9, requires_grad=False)
        params.weights[0][0, 0] = float("inf")
        with pytest.raises(ConfigurationError):
            save_checkpoint(tmp_path / "ckpt.json", arch, params)

    def test_rejects_shape_mismatch(self, tmp_path, arch):
        path = save_checkpoint(tmp_path / "ckpt.json", arch, init_params(arch, seed=0, requires_grad=False))
        document = json.loads(path.read_text())
        document["biases"][0] = document["biases"][0][:-1]
        path.write_text(json.dumps(document))
        with pytest.raises(ConfigurationError):
            load_checkpoint(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigurationError):
            load_checkpoint(tmp_path / "absent.json")
