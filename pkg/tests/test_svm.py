import numpy as np
import pytest

from saccadet.svm import (
    LinearModel,
    SvmConfig,
    decision,
    load_model,
    primal_objective,
    save_model,
    train,
    train_detailed,
)

cvxopt = pytest.importorskip("cvxopt")
cvxopt.solvers.options["show_progress"] = False
cvxopt.solvers.options["abstol"] = 1e-12
cvxopt.solvers.options["reltol"] = 1e-12


def exact_bias(w, x, y):
    """Exact 1-D minimization of the hinge sum over the bias."""
    margins = x @ w
    best_b, best = 0.0, np.inf
    for b in np.unique(y - margins):
        val = np.sum(np.maximum(0.0, 1.0 - y * (margins + b)))
        if val < best:
            best, best_b = val, b
    return float(best_b)


def qp_reference_objective(x, y, c):
    """Exact primal optimum via the dual quadratic program."""
    n = len(y)
    P = cvxopt.matrix(np.outer(y, y) * (x @ x.T))
    q = cvxopt.matrix(-np.ones(n))
    G = cvxopt.matrix(np.vstack([-np.eye(n), np.eye(n)]))
    h = cvxopt.matrix(np.concatenate([np.zeros(n), c * np.ones(n)]))
    A = cvxopt.matrix(y.reshape(1, -1))
    b = cvxopt.matrix(np.zeros(1))
    sol = cvxopt.solvers.qp(P, q, G, h, A, b)
    alpha = np.array(sol["x"]).ravel()
    w = x.T @ (alpha * y)
    return primal_objective(w, exact_bias(w, x, y), x, y, c)


def two_clouds(rng, n=40, d=5, gap=1.2):
    half = n // 2
    x = np.vstack([rng.normal(gap, 1, (half, d)), rng.normal(-gap, 1, (half, d))])
    y = np.array([1.0] * half + [-1.0] * half)
    return x, y


class TestTrain:
    def test_separable_zero_hinge(self):
        x = np.array([[2.0, 0.0], [3.0, 1.0], [-2.0, 0.0], [-3.0, -1.0]])
        y = np.array([1.0, 1.0, -1.0, -1.0])
        model = train(x, y, SvmConfig(c=1000.0))
        margins = y * (x @ model.w + model.b)
        assert np.all(margins >= 1.0 - 1e-6)

    def test_xor_is_not_linearly_separable(self):
        x = np.array([[0.0, 0.0], [1.0, 1.0], [0.0, 1.0], [1.0, 0.0]])
        y = np.array([1.0, 1.0, -1.0, -1.0])
        for c in (0.1, 1.0, 100.0):
            model = train(x, y, SvmConfig(c=c))
            acc = np.mean(np.sign(x @ model.w + model.b) == y)
            assert acc <= 0.75

    @pytest.mark.parametrize("c", [0.1, 1.0, 100.0])
    def test_objective_within_one_percent_of_qp_oracle(self, c):
        x, y = two_clouds(np.random.default_rng(17))
        sol = train_detailed(x, y, SvmConfig(c=c))
        ref = qp_reference_objective(x, y, c)
        assert sol.objective <= ref * 1.01 + 1e-12
        assert sol.objective >= ref * 0.999 - 1e-9  # cannot beat the optimum

    def test_deterministic_bit_exact(self):
        x, y = two_clouds(np.random.default_rng(3))
        a = train_detailed(x, y, SvmConfig(c=2.0, seed=1))
        b = train_detailed(x, y, SvmConfig(c=2.0, seed=1))
        assert np.array_equal(a.model.w, b.model.w)
        assert a.model.b == b.model.b
        assert a.objective_trace == b.objective_trace

    def test_objective_trace_non_increasing(self):
        rng = np.random.default_rng(11)
        x, y = two_clouds(rng, n=200, d=8, gap=0.4)  # noisy, multi-epoch
        sol = train_detailed(x, y, SvmConfig(c=10.0))
        trace = sol.objective_trace
        assert len(trace) >= 1
        assert all(a >= b for a, b in zip(trace, trace[1:]))

    def test_removing_non_support_point_keeps_solution(self):
        x, y = two_clouds(np.random.default_rng(23), n=60)
        config = SvmConfig(c=1.0)
        sol = train_detailed(x, y, config)
        margins = y * (x @ sol.model.w + sol.model.b)
        loose = np.argmax(margins)  # far outside the margin
        assert margins[loose] > 1.0 + config.tol
        keep = np.arange(len(y)) != loose
        again = train_detailed(x[keep], y[keep], config)
        assert np.allclose(again.model.w, sol.model.w, atol=1e-4)
        assert again.model.b == pytest.approx(sol.model.b, abs=1e-4)

    def test_errors(self):
        x = np.ones((3, 2))
        with pytest.raises(ValueError):
            train(x, np.array([1.0, 1.0, 1.0]), SvmConfig())
        with pytest.raises(ValueError):
            train(x, np.array([1.0, -1.0]), SvmConfig())
        with pytest.raises(ValueError):
            train(x, np.array([1.0, 0.5, -1.0]), SvmConfig())
        with pytest.raises(ValueError):
            SvmConfig(c=-1.0)


class TestDecision:
    def test_zero_model(self):
        model = LinearModel(w=np.zeros(3), b=0.0)
        assert decision(model, np.array([5.0, -2.0, 1.0])) == 0.0

    def test_on_boundary(self):
        model = LinearModel(w=np.array([1.0, 0.0]), b=-1.0)
        assert decision(model, np.array([1.0, 0.0])) == 0.0

    def test_matches_dot_product_oracle(self):
        rng = np.random.default_rng(9)
        for _ in range(50):
            w = rng.normal(size=6)
            b = float(rng.normal())
            xvec = rng.normal(size=6)
            expected = sum(wi * xi for wi, xi in zip(w, xvec)) + b
            assert decision(LinearModel(w=w, b=b), xvec) == pytest.approx(
                expected, abs=1e-12
            )

    def test_dimension_mismatch(self):
        model = LinearModel(w=np.zeros(3), b=0.0)
        with pytest.raises(ValueError):
            decision(model, np.zeros(4))


class TestSerialization:
    def test_round_trip(self, tmp_path):
        model = LinearModel(w=np.array([0.1, -2.5, 1e-17]), b=-0.75)
        path = tmp_path / "model.txt"
        save_model(model, path)
        loaded = load_model(path)
        assert np.array_equal(loaded.w, model.w)
        assert loaded.b == model.b

    def test_truncated_file_rejected(self, tmp_path):
        model = LinearModel(w=np.arange(4.0), b=1.0)
        path = tmp_path / "model.txt"
        save_model(model, path)
        path.write_text(path.read_text().rsplit("\n", 3)[0])
        with pytest.raises(ValueError):
            load_model(path)
