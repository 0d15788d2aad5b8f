import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sgrlab.losses import LossKind
from sgrlab.pinn_nd import (MlpParams, NdModel, ResidualWeights, backprop_params,
                            export_field_csv, flatten_grads, forward_batch, hard_bc_poisson,
                            hard_bc_poisson_backprop, init_params, load_checkpoint,
                            pinn_nd_grad, row_weights, save_checkpoint, stacked_residual,
                            weighted_problem)
from sgrlab.problems import StructuredGrid2D, allen_cahn_grid, allen_cahn_problem, poisson_problem


def fd_param_grad(fun, params, h=1e-6):
    theta = params.flat()
    out = np.empty_like(theta)
    for k in range(len(theta)):
        tp, tm = theta.copy(), theta.copy()
        tp[k] += h
        tm[k] -= h
        out[k] = (fun(params.with_flat(tp)) - fun(params.with_flat(tm))) / (2 * h)
    return out


def rel_err(a, b):
    return np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-300)


def random_params(layers, seed):
    p = init_params(layers, seed)
    rng = np.random.default_rng(seed + 100)
    return p.with_flat(p.flat() + 0.3 * rng.standard_normal(p.size))


def single_hidden_jacobian(params, X):
    """Closed-form d q / d theta for a [2, H, 1] tanh net, flat parameter order."""
    W1, W2 = params.weights
    b1 = params.biases[0]
    h = np.tanh(X @ W1 + b1)
    s = W2[:, 0] * (1 - h**2)  # (N, H)
    dW1 = X[:, :, None] * s[:, None, :]
    return np.column_stack([dW1.reshape(len(X), -1), s, h, np.ones(len(X))])


class TestInit:
    def test_deterministic(self):
        a, b = init_params((2, 8, 1), 7), init_params((2, 8, 1), 7)
        np.testing.assert_array_equal(a.flat(), b.flat())
        assert a.size == (2 * 8 + 8) + (8 + 1)

    def test_glorot_bound(self):
        p = init_params((2, 16, 5), 1)
        for W in p.weights:
            assert np.abs(W).max() <= np.sqrt(6 / sum(W.shape))
        assert not any(b.any() for b in p.biases)

    def test_mean_statistic(self):
        W = init_params((100, 100), 3).weights[0].ravel()
        limit = np.sqrt(6 / 200)
        se = limit / np.sqrt(3) / np.sqrt(W.size)
        assert abs(W.mean()) < 3 * se

    def test_default_layers(self):
        assert init_params(seed=0).layer_sizes == (2, 128, 128, 128, 128, 1)

    @pytest.mark.parametrize("sizes", [(2,), (2, 0, 1)])
    def test_invalid(self, sizes):
        with pytest.raises(ValueError):
            init_params(sizes)


class TestForward:
    def test_zero_params(self):
        p = init_params((2, 4, 1), 0)
        p = p.with_flat(np.zeros(p.size))
        assert not forward_batch(p, np.random.default_rng(0).random((5, 2))).any()

    def test_affine(self):
        p = MlpParams((np.array([[2.0], [-3.0]]),), (np.array([0.5]),))
        X = np.array([[1.0, 2.0], [0.25, 0.0]])
        np.testing.assert_array_equal(forward_batch(p, X), [2 - 6 + 0.5, 0.5 + 0.5])

    def test_scripted_trace(self):
        W1 = np.array([[0.1, -0.2, 0.3], [0.4, 0.5, -0.6]])
        b1 = np.array([0.01, -0.02, 0.03])
        W2 = np.array([[0.7], [-0.8], [0.9]])
        b2 = np.array([-0.1])
        p = MlpParams((W1, W2), (b1, b2))
        x, y = 0.3, 0.8
        expect = b2[0]
        for j in range(3):
            expect += W2[j, 0] * np.tanh(W1[0, j] * x + W1[1, j] * y + b1[j])
        assert abs(forward_batch(p, np.array([[x, y]]))[0] - expect) < 1e-14

    def test_dim_mismatch(self):
        with pytest.raises(ValueError):
            forward_batch(init_params((2, 3, 1)), np.zeros((4, 3)))


class TestBackprop:
    def test_zero_cotangent(self):
        p = random_params((2, 3, 1), 0)
        assert not flatten_grads(backprop_params(p, np.ones((4, 2)), np.zeros(4))).any()

    @pytest.mark.parametrize("layers", [(2, 3, 1), (2, 8, 1), (2, 8, 8, 1)])
    def test_matches_fd(self, layers):
        rng = np.random.default_rng(len(layers))
        p = random_params(layers, 1)
        X = rng.random((6, 2))
        gbar = rng.standard_normal(6)
        g = flatten_grads(backprop_params(p, X, gbar))
        fd = fd_param_grad(lambda q: gbar @ forward_batch(q, X), p)
        assert rel_err(g, fd) < 1e-6

    def test_unit_cotangent(self):
        p = random_params((2, 3, 1), 2)
        X = np.random.default_rng(2).random((5, 2))
        gbar = np.zeros(5)
        gbar[3] = 1.0
        g = flatten_grads(backprop_params(p, X, gbar))
        assert rel_err(g, fd_param_grad(lambda q: forward_batch(q, X)[3], p)) < 1e-6
        np.testing.assert_allclose(g, single_hidden_jacobian(p, X)[3], rtol=0, atol=1e-14)

    @given(st.integers(0, 2**32 - 1))
    def test_linear_in_cotangent(self, seed):
        rng = np.random.default_rng(seed)
        p = random_params((2, 5, 4, 1), 3)
        X = rng.random((7, 2))
        g1, g2 = rng.standard_normal(7), rng.standard_normal(7)
        lhs = flatten_grads(backprop_params(p, X, g1 + g2))
        rhs = flatten_grads(backprop_params(p, X, g1)) + flatten_grads(backprop_params(p, X, g2))
        assert np.max(np.abs(lhs - rhs)) < 1e-12 * max(1, np.abs(lhs).max())

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            backprop_params(init_params((2, 3, 1)), np.zeros((4, 2)), np.zeros(5))


class TestHardBc:
    def test_boundary_zero(self):
        p = random_params((2, 6, 1), 4)
        t = np.linspace(0, 1, 7)
        X = np.vstack([np.column_stack([t, 0 * t]), np.column_stack([t, 0 * t + 1]),
                       np.column_stack([0 * t, t]), np.column_stack([0 * t + 1, t])])
        assert not hard_bc_poisson(p, X).any()

    def test_center_factor(self):
        p = random_params((2, 6, 1), 5)
        X = np.array([[0.5, 0.5]])
        assert hard_bc_poisson(p, X)[0] == 6.25 * forward_batch(p, X)[0]

    def test_chain_rule_fd(self):
        p = random_params((2, 4, 1), 6)
        rng = np.random.default_rng(6)
        X = rng.random((5, 2))
        gbar = rng.standard_normal(5)
        g = flatten_grads(hard_bc_poisson_backprop(p, X, gbar))
        assert rel_err(g, fd_param_grad(lambda q: gbar @ hard_bc_poisson(q, X), p)) < 1e-6


class TestStacked:
    def test_zero(self):
        w = ResidualWeights(1.0, 2.0, 5.0, 3, 2, 1)
        assert not stacked_residual(np.zeros(3), np.zeros(2), np.zeros(1), w).any()

    def test_plain_concatenation(self):
        w = ResidualWeights(n_g=2, n_h=2, n_i=2)
        np.testing.assert_array_equal(
            stacked_residual([1, 2], [3, 4], [5, 6], w), [1, 2, 3, 4, 5, 6])

    def test_bc_scale(self):
        w = ResidualWeights(1.0, 2.0, 1.0, 100, 25, 100)
        f = stacked_residual(np.zeros(100), np.ones(25), np.zeros(100), w)
        np.testing.assert_array_equal(f[100:125], 4.0)

    def test_validation(self):
        with pytest.raises(ValueError):
            ResidualWeights(lambda_bc=0.0)
        with pytest.raises(ValueError):
            stacked_residual([1.0], [1.0, 2.0], [1.0], ResidualWeights())

    def test_row_weights_match_stack(self):
        P = allen_cahn_problem(allen_cahn_grid(9, 5))
        q = np.random.default_rng(7).standard_normal(P.dim)
        d = row_weights(P, 1.0, 1.0, 5.0)
        f = P.residual(q)
        groups = P.meta["row_groups"]
        w = ResidualWeights(1.0, 1.0, 5.0, len(groups["pde"]), 0, len(groups["ic"]))
        ref = stacked_residual(f[groups["pde"]], [], f[groups["ic"]], w)
        got = weighted_problem(P, d).residual(q)
        np.testing.assert_allclose(np.sort(got), np.sort(ref), rtol=1e-15)


class TestPinnGrad:
    def setup_method(self):
        self.P = poisson_problem(StructuredGrid2D(5, 5))
        self.A = self.P.meta["system"].A.to_dense()
        self.b = self.P.meta["system"].b

    def test_interpolating_net_zero_gradient(self):
        P = poisson_problem(StructuredGrid2D(3, 3))
        qs = P.meta["system"].b[0] / P.meta["system"].A.to_dense()[0, 0]
        p = MlpParams((np.zeros((2, 1)),), (np.array([qs]),))
        for kind in (LossKind("MSE"), LossKind("QP"), LossKind("GR"), LossKind("SGR", 0.3)):
            _, g = pinn_nd_grad(p, P, kind)
            assert np.abs(flatten_grads(g)).max() < 1e-10

    @pytest.mark.parametrize("hard_bc", [False, True])
    def test_dense_assembly(self, hard_bc):
        p = random_params((2, 3, 1), 8)
        X = self.P.coords
        Jn = single_hidden_jacobian(p, X)
        if hard_bc:
            Jn = Jn * (100 * X[:, 0] * (1 - X[:, 0]) * X[:, 1] * (1 - X[:, 1]))[:, None]
        q = NdModel(self.P, hard_bc).state(p)
        r = self.A @ q - self.b
        for kind, expect in ((LossKind("MSE"), Jn.T @ self.A.T @ r),
                             (LossKind("GR"), Jn.T @ r), (LossKind("QP"), Jn.T @ r)):
            _, g = pinn_nd_grad(p, self.P, kind, hard_bc=hard_bc)
            assert np.max(np.abs(flatten_grads(g) - expect)) < 1e-10 * max(1, np.abs(expect).max())

    def test_mse_matches_fd(self):
        P = allen_cahn_problem(allen_cahn_grid(7, 4))
        p = random_params((2, 8, 8, 1), 9)
        loss = lambda q: 0.5 * np.sum(P.residual(forward_batch(q, P.coords)) ** 2)
        value, g = pinn_nd_grad(p, P, LossKind("MSE"))
        assert value == pytest.approx(loss(p), rel=1e-14)
        assert rel_err(flatten_grads(g), fd_param_grad(loss, p)) < 1e-6

    def test_gr_matches_fd_of_quadratic_energy(self):
        # on symmetric A the GR pseudo-gradient is the true gradient of 1/2 q^T A q - b^T q
        p = random_params((2, 8, 8, 1), 10)
        energy = lambda t: (0.5 * forward_batch(t, self.P.coords) @ self.A
                            @ forward_batch(t, self.P.coords) - self.b @ forward_batch(t, self.P.coords))
        _, g = pinn_nd_grad(p, self.P, LossKind("GR"))
        assert rel_err(flatten_grads(g), fd_param_grad(energy, p)) < 1e-6

    @given(st.floats(0, 1))
    def test_sgr_linearity(self, omega):
        p = random_params((2, 4, 1), 10)
        _, gm = pinn_nd_grad(p, self.P, LossKind("MSE"))
        _, gg = pinn_nd_grad(p, self.P, LossKind("GR"))
        _, gs = pinn_nd_grad(p, self.P, LossKind("SGR", omega))
        expect = (1 - omega) * flatten_grads(gm) + omega * flatten_grads(gg)
        assert np.max(np.abs(flatten_grads(gs) - expect)) < 1e-12 * np.abs(expect).max()

    def test_weights_scale_rows(self):
        P = allen_cahn_problem(allen_cahn_grid(7, 4))
        p = random_params((2, 4, 1), 11)
        d = row_weights(P, 1.0, 1.0, 5.0)
        v, _ = pinn_nd_grad(p, P, LossKind("GR"), weights=d)
        f = P.residual(forward_batch(p, P.coords))
        assert v == pytest.approx(0.5 * np.sum((d * f) ** 2), rel=1e-14)


class TestArtifacts:
    def test_checkpoint_roundtrip(self, tmp_path):
        p = random_params((2, 5, 3, 1), 12)
        p = MlpParams(p.weights, p.biases, 12)
        save_checkpoint(tmp_path / "net.bin", p)
        back = load_checkpoint(tmp_path / "net.bin")
        assert back.layer_sizes == p.layer_sizes and back.seed == 12
        np.testing.assert_array_equal(back.flat(), p.flat())

    def test_rejects_foreign_file(self, tmp_path):
        (tmp_path / "x.bin").write_bytes(b"nope")
        with pytest.raises(ValueError):
            load_checkpoint(tmp_path / "x.bin")

    def test_csv_export(self, tmp_path):
        g = StructuredGrid2D(4, 3)
        p = random_params((2, 3, 1), 13)
        export_field_csv(tmp_path / "f.csv", p, g, hard_bc=True)
        data = np.loadtxt(tmp_path / "f.csv", delimiter=",", skiprows=1)
        assert (tmp_path / "f.csv").read_text().splitlines()[0] == "x,y,q"
        np.testing.assert_allclose(data[:, 2], hard_bc_poisson(p, g.coords()), rtol=1e-15)


def test_gr_training_reduces_loss():
    from sgrlab.harness import load_config, run_experiment
    from pathlib import Path

    cfg = load_config(Path(__file__).parents[1] / "configs/desk/pinn_nd_gr_poisson25.toml")
    res = run_experiment(cfg, write=False)
    assert res.status != "diverged"
    assert res.loss_history[-1] < 0.5 * res.loss_history[0]
    again = run_experiment(cfg, write=False)
    np.testing.assert_array_equal(res.q, again.q)
