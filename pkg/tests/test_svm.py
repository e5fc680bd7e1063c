import json

import numpy as np
import pytest
from cvxopt import matrix, solvers
from hypothesis import given, settings, strategies as st

from vap.svm import (DegenerateModelError, KernelSpec, OneVsRestSvm, SvmModel, TrainingBuffer, calibrate,
                     dump_model, kkt_residuals, load_model, model_alphas, platt_scale, refine, sigmoid_prob,
                     solve_dual, train_smo)

solvers.options["show_progress"] = False
solvers.options["abstol"] = 1e-10
solvers.options["reltol"] = 1e-10
solvers.options["feastol"] = 1e-10


def qp_dual(K, y, C):
    """Reference dual optimum from a general-purpose QP solver."""
    n = len(y)
    P = matrix(np.outer(y, y) * K + 1e-12 * np.eye(n))
    q = matrix(-np.ones(n))
    G = matrix(np.vstack([-np.eye(n), np.eye(n)]))
    h = matrix(np.concatenate([np.zeros(n), np.full(n, C)]))
    A = matrix(y.astype(float)[None, :])
    sol = solvers.qp(P, q, G, h, A, matrix(0.0))
    a = np.array(sol["x"]).ravel()
    return a, float(a.sum() - 0.5 * a @ (np.outer(y, y) * K) @ a)


def random_instance(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(4, 11))
    X = rng.normal(size=(n, 2))
    y = np.where(rng.uniform(size=n) < 0.5, -1, 1)
    y[0], y[1] = -1, 1
    kernel = KernelSpec("linear") if seed % 2 else KernelSpec("rbf", float(rng.uniform(0.3, 2.0)))
    C = float(rng.choice([0.5, 1.0, 10.0]))
    return X, y, kernel, C


def separable(n=20, seed=0):
    rng = np.random.default_rng(seed)
    X = np.vstack([rng.normal([2, 2], 0.5, (n // 2, 2)), rng.normal([-2, -2], 0.5, (n // 2, 2))])
    y = np.array([1] * (n // 2) + [-1] * (n // 2))
    return X, y


def full_alphas(model, X):
    return model_alphas(model, X)


class TestTraining:
    def test_two_point_margin(self):
        X = np.array([[-1.0, 0.0], [1.0, 0.0]])
        m = train_smo(X, [-1, 1], KernelSpec("linear"), C=10.0)
        assert abs(m.score(np.zeros(2))) < 1e-6
        for x1 in (-2.0, 0.5, 3.0):
            assert m.score(np.array([x1, 7.0])) == pytest.approx(x1, abs=1e-6)

    def test_separable_set(self):
        X, y = separable()
        tol = 1e-3
        m = train_smo(X, y, KernelSpec("linear"), C=1.0, tol=tol)
        assert np.all(m.predict(X) == y)
        r = kkt_residuals(full_alphas(m, X), y, m.decision_function(X), m.C)
        assert r.max() < tol

    def test_xor_rbf(self):
        X = np.array([[0, 0], [1, 1], [0, 1], [1, 0], [0.1, 0.1], [0.9, 0.9], [0.1, 0.9], [0.9, 0.1]], dtype=float)
        y = np.array([-1, -1, 1, 1, -1, -1, 1, 1])
        m = train_smo(X, y, KernelSpec("rbf", 1.0), C=10.0, standardize=False)
        assert np.all(m.predict(X) == y)

    @pytest.mark.parametrize("seed", range(24))
    def test_dual_matches_qp_oracle(self, seed):
        X, y, kernel, C = random_instance(seed)
        tol = 1e-4
        m = train_smo(X, y, kernel, C=C, tol=tol, standardize=False)
        _, ref = qp_dual(kernel(X, X), y, C)
        assert m.dual_objective() == pytest.approx(ref, abs=1e-3)
        r = kkt_residuals(full_alphas(m, X), y, m.decision_function(X), C)
        assert r.max() < 10 * tol

    def test_solve_dual_low_level(self):
        X, y, kernel, C = random_instance(3)
        K = kernel(X, X)
        alpha, bias = solve_dual(K, y, C, tol=1e-6)
        ref_alpha, _ = qp_dual(K, y, C)
        assert np.allclose(alpha, ref_alpha, atol=1e-3)

    def test_degenerate_input(self):
        with pytest.raises(DegenerateModelError):
            train_smo(np.zeros((3, 2)), [1, 1, 1])
        with pytest.raises(ValueError):
            train_smo(np.zeros((2, 2)), [0, 1])

    def test_dimension_mismatch(self):
        m = train_smo(*separable())
        with pytest.raises(ValueError):
            m.score(np.zeros(3))

    def test_kernel_validation(self):
        with pytest.raises(ValueError):
            KernelSpec("poly")
        with pytest.raises(ValueError):
            KernelSpec("rbf", 0.0)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 10_000))
    def test_dual_feasibility(self, seed):
        X, y, kernel, C = random_instance(seed)
        m = train_smo(X, y, kernel, C=C)
        assert np.all(m.alphas > 0) and np.all(m.alphas <= C + 1e-12)
        assert abs(m.dual_coef.sum()) < 1e-6


class TestScoring:
    def test_free_support_vectors_on_margin(self):
        X, y = separable(seed=4)
        tol = 1e-4
        m = train_smo(X, y, KernelSpec("linear"), C=100.0, tol=tol)
        free = m.alphas < m.C
        assert free.any()
        f = m.kernel(m.support_vectors[free], m.support_vectors) @ m.dual_coef + m.bias
        assert np.all(np.abs(f - m.support_labels[free]) < 10 * tol)

    def test_dual_equals_primal_for_linear(self):
        X, y = separable(seed=1)
        m = train_smo(X, y, KernelSpec("linear"), C=1.0)
        w, b = m.weight_vector()
        probe = np.random.default_rng(9).normal(size=(50, 2)) * 3
        assert np.allclose(m.decision_function(probe), probe @ w + b, atol=1e-9)

    def test_rbf_far_away_is_bias(self):
        X, y = separable(seed=2)
        m = train_smo(X, y, KernelSpec("rbf", 1.0), C=1.0)
        assert m.score(np.array([1e3, -1e3])) == pytest.approx(m.bias, abs=1e-12)

    def test_rbf_has_no_weight_vector(self):
        X, y = separable(seed=2)
        with pytest.raises(ValueError):
            train_smo(X, y, KernelSpec("rbf", 1.0)).weight_vector()

    @given(st.lists(st.floats(-5, 5), min_size=2, max_size=2), st.lists(st.floats(-5, 5), min_size=2, max_size=2))
    def test_linear_score_is_affine(self, a, b):
        m = _linear_model()
        a, b = np.array(a), np.array(b)
        f0 = m.score(np.zeros(2))
        assert m.score(a + b) - f0 == pytest.approx((m.score(a) - f0) + (m.score(b) - f0), abs=1e-9)

    @given(st.lists(st.floats(-3, 3), min_size=2, max_size=2), st.floats(1e-7, 1e-5))
    def test_rbf_score_continuous(self, x, eps):
        m = _rbf_model()
        x = np.array(x)
        assert abs(m.score(x + eps) - m.score(x)) < 1e-3


_cache = {}


def _linear_model():
    if "lin" not in _cache:
        _cache["lin"] = train_smo(*separable(seed=5), KernelSpec("linear"))
    return _cache["lin"]


def _rbf_model():
    if "rbf" not in _cache:
        _cache["rbf"] = train_smo(*separable(seed=6), KernelSpec("rbf", 0.5))
    return _cache["rbf"]


def log_loss(p, y):
    p = np.clip(p, 1e-15, 1 - 1e-15)
    t = (np.asarray(y) > 0).astype(float)
    return float(-np.mean(t * np.log(p) + (1 - t) * np.log(1 - p)))


class TestCalibration:
    def test_separated_scores(self):
        rng = np.random.default_rng(0)
        y = np.where(rng.uniform(size=200) < 0.5, -1, 1)
        f = y * rng.uniform(1.0, 3.0, 200)
        A, B = platt_scale(f, y)
        assert A < -1
        yt = np.where(rng.uniform(size=200) < 0.5, -1, 1)
        ft = yt * rng.uniform(1.0, 3.0, 200)
        assert log_loss(sigmoid_prob(ft, A, B), yt) < 0.1

    def test_uninformative_scores(self):
        rng = np.random.default_rng(1)
        y = np.where(rng.uniform(size=4000) < 0.3, 1, -1)
        f = rng.normal(size=4000)
        A, B = platt_scale(f, y)
        p = sigmoid_prob(np.linspace(-3, 3, 25), A, B)
        assert np.all(np.abs(p - np.mean(y > 0)) < 0.05)

    def test_midpoint(self):
        A, B = platt_scale(np.array([-2, -1, 1, 2.0]), np.array([-1, -1, 1, 1]))
        assert sigmoid_prob(np.array([-B / A]), A, B)[0] == pytest.approx(0.5, abs=1e-12)

    def test_single_class_is_flat(self):
        A, B = platt_scale(np.linspace(-1, 1, 12), np.ones(12))
        assert A == 0.0
        assert sigmoid_prob(np.array([5.0]), A, B)[0] == pytest.approx(13 / 14)

    def test_monotone_decreasing_in_a(self):
        A, B = platt_scale(np.array([-2, -1, 0.5, 1, 2.0, -0.3]), np.array([-1, -1, 1, 1, 1, -1]))
        assert A < 0
        p = sigmoid_prob(np.linspace(-4, 4, 30), A, B)
        assert np.all(np.diff(p) > 0)

    def test_needs_ten_samples(self):
        m = _linear_model()
        with pytest.raises(ValueError):
            calibrate(m, np.zeros((5, 2)), np.ones(5))

    def test_sigmoid_no_overflow(self):
        p = sigmoid_prob(np.array([-1e4, 1e4]), -1.0, 0.0)
        assert np.all(np.isfinite(p)) and p[0] == 0.0 and p[1] == 1.0


def shifted_problem(seed=0, center=(0.8, -1.6)):
    """Class +1 around (1.5, 1.5), class -1 around (-1.5, -1.5), and +1 samples moved to ``center``."""
    rng = np.random.default_rng(seed)
    a = rng.normal([1.5, 1.5], 0.6, (60, 2))
    b = rng.normal([-1.5, -1.5], 0.6, (60, 2))
    a_shift = rng.normal(center, 0.4, (60, 2))
    return a, b, a_shift


class TestRefine:
    def test_empty_delta(self):
        X, y = separable(seed=7)
        m = train_smo(X, y, KernelSpec("linear"), tol=1e-6)
        raw_sv = m.support_vectors * m.scale + m.mean
        r = refine(m, raw_sv, m.support_labels, tol=1e-6)
        grid = np.stack(np.meshgrid(np.linspace(-4, 4, 9), np.linspace(-4, 4, 9)), -1).reshape(-1, 2)
        assert np.allclose(r.decision_function(grid), m.decision_function(grid), atol=1e-4)

    def test_shifted_cluster(self):
        a, b, a_shift = shifted_problem()
        X = np.vstack([a[:40], b[:40]])
        y = np.array([1] * 40 + [-1] * 40)
        m = train_smo(X, y, KernelSpec("rbf", 0.5), C=10.0)
        held = a_shift[30:]
        pre = np.mean(m.predict(held) == 1)
        r = refine(m, a_shift[:30], np.ones(30, dtype=int))
        post = np.mean(r.predict(held) == 1)
        assert post > pre
        val = np.vstack([a[40:], b[40:]])
        yv = np.array([1] * 20 + [-1] * 20)
        assert np.mean(r.predict(val) == yv) >= np.mean(m.predict(val) == yv) - 0.05

    def test_refine_keeps_frozen_parts(self):
        X, y = separable(seed=8)
        m = train_smo(X, y)
        r = refine(m, np.array([[0.1, 0.2]]), [1])
        assert np.array_equal(r.mean, m.mean) and r.calibration == m.calibration
        assert abs(r.dual_coef.sum()) < 1e-6 and np.all(r.alphas <= r.C + 1e-12)

    def test_refine_needs_samples(self):
        with pytest.raises(ValueError):
            refine(_linear_model(), np.zeros((0, 2)), [])


class TestBuffer:
    def test_fifo_among_non_support(self):
        buf = TrainingBuffer(3)
        buf.add([0.0], 1, support=True)
        buf.add([1.0], 1)
        buf.add([2.0], 1)
        buf.add([3.0], 1)
        X, _, _ = buf.arrays()
        assert X.ravel().tolist() == [0.0, 2.0, 3.0]

    def test_all_support_evicts_oldest(self):
        buf = TrainingBuffer(2)
        for v in range(3):
            buf.add([float(v)], -1, support=True)
        assert buf.arrays()[0].ravel().tolist() == [1.0, 2.0]

    @given(st.integers(1, 10), st.lists(st.booleans(), max_size=40))
    def test_capacity(self, cap, flags):
        buf = TrainingBuffer(cap)
        for k, s in enumerate(flags):
            buf.add([float(k)], 1, support=s)
            assert len(buf) <= cap

    def test_clear(self):
        buf = TrainingBuffer(2)
        buf.add([1.0], 1)
        buf.clear()
        assert len(buf) == 0


class TestOneVsRest:
    def three_class(self):
        rng = np.random.default_rng(3)
        centers = {0: (0, 3), 4: (3, -2), 7: (-3, -2)}
        X = np.vstack([rng.normal(c, 0.5, (20, 2)) for c in centers.values()])
        labels = np.repeat(list(centers), 20)
        return X, labels

    def test_fit_predict(self):
        X, labels = self.three_class()
        ens = OneVsRestSvm.fit(X, labels, 10, calib_X=X, calib_labels=labels)
        assert ens.accuracy(X, labels) == 1.0
        p = ens.predict_proba(X)
        assert p.shape == (60, 10) and np.all(p[:, 1] == 0)
        assert np.all((p >= 0) & (p <= 1))
        assert ens.margin(X[0], 5) is None

    def test_refine_and_round_trip(self, tmp_path):
        X, labels = self.three_class()
        ens = OneVsRestSvm.fit(X, labels, 10)
        new = ens.refine(X[:5] + 0.1, labels[:5])
        assert new is not ens and new.accuracy(X, labels) == 1.0
        dump_model(new, tmp_path / "m.json", names=[str(i) for i in range(10)])
        again = load_model(tmp_path / "m.json")
        assert np.allclose(again.scores(X), new.scores(X))
        assert json.loads((tmp_path / "m.json").read_text())["class_names"] == ["0", "4", "7"]

    def test_single_model_round_trip(self, tmp_path):
        m = _rbf_model()
        dump_model(m, tmp_path / "b.json")
        again = load_model(tmp_path / "b.json")
        probe = np.random.default_rng(0).normal(size=(10, 2))
        assert isinstance(again, SvmModel) and np.allclose(again.decision_function(probe), m.decision_function(probe))

    def test_rejects_foreign_dump(self):
        with pytest.raises(ValueError):
            SvmModel.from_dict({"format": "other"})

    def test_needs_two_classes(self):
        with pytest.raises(DegenerateModelError):
            OneVsRestSvm.fit(np.zeros((4, 2)), [1, 1, 1, 1], 3)
