"""Kernel support vector machines trained with SMO.

Binary models are trained by sequential minimal optimization over the
dual problem, using the maximal-violating-pair working set with
second-order selection of the second index. Inputs are standardized with
per-dimension statistics frozen at first training; the stored support
vectors live in the standardized space.

Labels are +1/-1 throughout.
"""
from __future__ import annotations

import json
import logging
import warnings
from collections import deque
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import minimize

log = logging.getLogger(__name__)

FORMAT_VERSION = 1


class DegenerateModelError(ValueError):
    """Training data cannot define a decision surface (e.g. one class only)."""


@dataclass(frozen=True)
class KernelSpec:
    kind: str = "linear"
    gamma: float = 1.0

    def __post_init__(self):
        if self.kind not in ("linear", "rbf"):
            raise ValueError(f"unknown kernel kind {self.kind!r}")
        if self.kind == "rbf" and not self.gamma > 0:
            raise ValueError("RBF gamma must be positive")

    def __call__(self, A: np.ndarray, B: np.ndarray) -> np.ndarray:
        A = np.atleast_2d(A)
        B = np.atleast_2d(B)
        if self.kind == "linear":
            return A @ B.T
        sq = (A * A).sum(1)[:, None] + (B * B).sum(1)[None, :] - 2.0 * A @ B.T
        return np.exp(-self.gamma * np.maximum(sq, 0.0))

    def to_dict(self) -> dict:
        return {"kind": self.kind, "gamma": self.gamma}


@dataclass(frozen=True)
class SvmModel:
    """A trained binary SVM.

    ``support_vectors`` are in standardized coordinates; ``dual_coef`` holds
    alpha_i * y_i for each of them.
    """

    support_vectors: np.ndarray
    dual_coef: np.ndarray
    bias: float
    kernel: KernelSpec
    C: float
    mean: np.ndarray
    scale: np.ndarray
    calibration: tuple[float, float] = (-1.0, 0.0)

    @property
    def n_features(self) -> int:
        return self.mean.shape[0]

    @property
    def alphas(self) -> np.ndarray:
        return np.abs(self.dual_coef)

    @property
    def support_labels(self) -> np.ndarray:
        return np.where(self.dual_coef > 0, 1, -1)

    def standardize(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} features, got {X.shape[1]}")
        return (X - self.mean) / self.scale

    def decision_function(self, X: np.ndarray) -> np.ndarray:
        Z = self.standardize(X)
        if len(self.dual_coef) == 0:
            return np.full(Z.shape[0], self.bias)
        return self.kernel(Z, self.support_vectors) @ self.dual_coef + self.bias

    def score(self, x: np.ndarray) -> float:
        x = np.asarray(x, dtype=float)
        if x.ndim != 1:
            raise ValueError("score expects a single feature vector")
        return float(self.decision_function(x[None, :])[0])

    def predict(self, X: np.ndarray) -> np.ndarray:
        return np.where(self.decision_function(X) >= 0, 1, -1)

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        """Calibrated probability of the positive class."""
        A, B = self.calibration
        return sigmoid_prob(self.decision_function(X), A, B)

    def weight_vector(self) -> tuple[np.ndarray, float]:
        """Primal ``(w, b)`` in raw input coordinates; linear kernel only."""
        if self.kernel.kind != "linear":
            raise ValueError("explicit weight vector only exists for the linear kernel")
        w_std = self.support_vectors.T @ self.dual_coef if len(self.dual_coef) else np.zeros(self.n_features)
        w = w_std / self.scale
        b = self.bias - float(w_std @ (self.mean / self.scale))
        return w, b

    def dual_objective(self) -> float:
        K = self.kernel(self.support_vectors, self.support_vectors)
        return float(self.alphas.sum() - 0.5 * self.dual_coef @ K @ self.dual_coef)

    def to_dict(self) -> dict:
        return {
            "format": "vap-svm",
            "version": FORMAT_VERSION,
            "kernel": self.kernel.to_dict(),
            "C": self.C,
            "bias": self.bias,
            "mean": self.mean.tolist(),
            "scale": self.scale.tolist(),
            "calibration": list(self.calibration),
            "dual_coef": self.dual_coef.tolist(),
            "support_vectors": self.support_vectors.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SvmModel":
        if d.get("format") != "vap-svm" or d.get("version") != FORMAT_VERSION:
            raise ValueError("not a version-1 vap-svm model dump")
        n = len(d["mean"])
        return cls(
            support_vectors=np.asarray(d["support_vectors"], dtype=float).reshape(-1, n),
            dual_coef=np.asarray(d["dual_coef"], dtype=float),
            bias=float(d["bias"]),
            kernel=KernelSpec(**d["kernel"]),
            C=float(d["C"]),
            mean=np.asarray(d["mean"], dtype=float),
            scale=np.asarray(d["scale"], dtype=float),
            calibration=tuple(d["calibration"]),
        )


def sigmoid_prob(f: np.ndarray, A: float, B: float) -> np.ndarray:
    """p = 1 / (1 + exp(A f + B)), evaluated without overflow."""
    z = A * np.asarray(f, dtype=float) + B
    out = np.empty_like(z)
    pos = z >= 0
    ez = np.exp(-z[pos])
    out[pos] = ez / (1.0 + ez)
    out[~pos] = 1.0 / (1.0 + np.exp(z[~pos]))
    return out


def _smo(K: np.ndarray, y: np.ndarray, C: np.ndarray, tol: float, max_iter: int):
    """Solve the SVM dual for a precomputed kernel matrix.

    Returns ``(alpha, bias, n_iter)``. ``C`` is a per-sample upper bound.
    """
    n = len(y)
    alpha = np.zeros(n)
    G = -np.ones(n)  # gradient of 0.5 a'Qa - e'a
    QD = np.diag(K).copy()
    tau = 1e-12
    it = 0
    while it < max_iter:
        yG = -y * G
        up = ((y > 0) & (alpha < C)) | ((y < 0) & (alpha > 0))
        low = ((y < 0) & (alpha < C)) | ((y > 0) & (alpha > 0))
        if not up.any() or not low.any():
            break
        i = int(np.argmax(np.where(up, yG, -np.inf)))
        m = yG[i]
        M = np.min(np.where(low, yG, np.inf))
        if m - M < tol:
            break
        # second-order choice of j among violating members of I_low
        b_it = m - yG
        a_it = QD[i] + QD - 2.0 * K[i]
        a_it = np.where(a_it > 0, a_it, tau)
        cand = low & (yG < m)
        j = int(np.argmin(np.where(cand, -(b_it ** 2) / a_it, np.inf)))

        Ci, Cj = C[i], C[j]
        ai_old, aj_old = alpha[i], alpha[j]
        Qij = y[i] * y[j] * K[i, j]
        if y[i] != y[j]:
            quad = QD[i] + QD[j] + 2.0 * Qij
            quad = quad if quad > 0 else tau
            delta = (-G[i] - G[j]) / quad
            diff = ai_old - aj_old
            ai, aj = ai_old + delta, aj_old + delta
            if diff > 0:
                if aj < 0:
                    aj, ai = 0.0, diff
            elif ai < 0:
                ai, aj = 0.0, -diff
            if diff > Ci - Cj:
                if ai > Ci:
                    ai, aj = Ci, Ci - diff
            elif aj > Cj:
                aj, ai = Cj, Cj + diff
        else:
            quad = QD[i] + QD[j] - 2.0 * Qij
            quad = quad if quad > 0 else tau
            delta = (G[i] - G[j]) / quad
            total = ai_old + aj_old
            ai, aj = ai_old - delta, aj_old + delta
            if total > Ci:
                if ai > Ci:
                    ai, aj = Ci, total - Ci
            elif aj < 0:
                aj, ai = 0.0, total
            if total > Cj:
                if aj > Cj:
                    aj, ai = Cj, total - Cj
            elif ai < 0:
                ai, aj = 0.0, total
        alpha[i], alpha[j] = ai, aj
        G += y * (K[:, i] * (y[i] * (ai - ai_old)) + K[:, j] * (y[j] * (aj - aj_old)))
        it += 1
    else:
        warnings.warn(f"SMO stopped at the iteration cap ({max_iter}) before reaching tol={tol}")

    yG = y * G
    free = (alpha > 0) & (alpha < C)
    if free.any():
        rho = yG[free].mean()
    else:
        ub, lb = np.inf, -np.inf
        for t in range(n):
            at_upper = alpha[t] >= C[t]
            if (at_upper and y[t] < 0) or (not at_upper and y[t] > 0):
                ub = min(ub, yG[t])
            else:
                lb = max(lb, yG[t])
        rho = 0.5 * (ub + lb)
    return alpha, -float(rho), it


def _fit_standardized(Z, y, kernel, C, tol, weights, max_iter, mean, scale, calibration=(-1.0, 0.0)):
    y = np.asarray(y)
    if set(np.unique(y)) - {-1, 1}:
        raise ValueError("labels must be +1/-1")
    if len(y) < 2 or len(np.unique(y)) < 2:
        raise DegenerateModelError("training needs at least two samples of both classes")
    if weights is None:
        weights = np.ones(len(y))
    Cvec = C * np.asarray(weights, dtype=float)
    K = kernel(Z, Z)
    yf = y.astype(float)
    alpha, bias, _ = _smo(K, yf, Cvec, tol, max_iter)
    sv = alpha > 0
    return SvmModel(
        support_vectors=Z[sv].copy(),
        dual_coef=alpha[sv] * yf[sv],
        bias=bias,
        kernel=kernel,
        C=float(C),
        mean=mean,
        scale=scale,
        calibration=calibration,
    )


def train_smo(X, y, kernel: KernelSpec = KernelSpec(), C: float = 1.0, tol: float = 1e-3,
              weights=None, standardize: bool = True, max_iter: Optional[int] = None) -> SvmModel:
    """Train a binary SVM.

    Parameters
    ----------
    X : (n, d) array
    y : (n,) array of +1/-1
    kernel : KernelSpec
    C : float
        Box constraint; per-sample bounds are ``C * weights``.
    tol : float
        Stopping tolerance on the maximal KKT violation.
    standardize : bool
        Learn and freeze per-dimension mean/scale from ``X``.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if not C > 0:
        raise ValueError("C must be positive")
    if standardize:
        mean = X.mean(0)
        scale = X.std(0)
        scale = np.where(scale > 1e-12, scale, 1.0)
    else:
        mean = np.zeros(X.shape[1])
        scale = np.ones(X.shape[1])
    Z = (X - mean) / scale
    if max_iter is None:
        max_iter = max(100_000, 200 * len(X))
    return _fit_standardized(Z, y, kernel, C, tol, weights, max_iter, mean, scale)


def solve_dual(K: np.ndarray, y, C, tol: float = 1e-3, max_iter: int = 100_000):
    """Low-level dual solve on a precomputed kernel; returns ``(alpha, bias)``."""
    y = np.asarray(y, dtype=float)
    C = np.broadcast_to(np.asarray(C, dtype=float), y.shape).copy()
    alpha, bias, _ = _smo(np.asarray(K, dtype=float), y, C, tol, max_iter)
    return alpha, bias


def kkt_residuals(alpha, y, f, C) -> np.ndarray:
    """Per-sample KKT violation given the full alpha vector and decision values.

    alpha = 0 requires y f >= 1, 0 < alpha < C requires y f = 1 and
    alpha = C requires y f <= 1.
    """
    alpha = np.asarray(alpha, dtype=float)
    m = np.asarray(y) * np.asarray(f) - 1.0
    C = np.broadcast_to(np.asarray(C, dtype=float), alpha.shape)
    at_zero = alpha <= 0
    at_c = alpha >= C
    free = ~at_zero & ~at_c
    r = np.zeros_like(m)
    r[at_zero] = np.maximum(0.0, -m[at_zero])
    r[at_c] = np.maximum(0.0, m[at_c])
    r[free] = np.abs(m[free])
    return r


def model_alphas(model: SvmModel, X) -> np.ndarray:
    """Alpha of each row of ``X`` in ``model`` (0 for non-support rows)."""
    Z = model.standardize(X)
    alpha = np.zeros(len(Z))
    for k, sv in enumerate(model.support_vectors):
        hit = np.flatnonzero(np.all(Z == sv, axis=1))
        if len(hit):
            alpha[hit[0]] = abs(model.dual_coef[k])
    return alpha


def platt_scale(scores, labels) -> tuple[float, float]:
    """Fit ``p = 1/(1+exp(A f + B))`` by regularized maximum likelihood.

    Targets use the usual (N+ + 1)/(N+ + 2) smoothing. With one class only,
    the fit is flat at the smoothed class prior (A = 0).
    """
    f = np.asarray(scores, dtype=float)
    y = np.asarray(labels)
    n_pos = int((y > 0).sum())
    n_neg = len(y) - n_pos
    prior = (n_pos + 1.0) / (len(y) + 2.0)
    if n_pos == 0 or n_neg == 0:
        return 0.0, float(np.log((1.0 - prior) / prior))
    t = np.where(y > 0, (n_pos + 1.0) / (n_pos + 2.0), 1.0 / (n_neg + 2.0))

    def nll(params):
        A, B = params
        z = A * f + B
        # -[t log p + (1-t) log(1-p)] with p = sigmoid(-z)
        loss = np.logaddexp(0.0, z) - (1.0 - t) * z
        s = sigmoid_prob(f, A, B)  # = p
        dz = (1.0 - s) - (1.0 - t)  # d loss / d z
        return loss.sum(), np.array([(dz * f).sum(), dz.sum()])

    x0 = np.array([0.0, np.log((n_neg + 1.0) / (n_pos + 1.0))])
    res = minimize(nll, x0, jac=True, method="L-BFGS-B")
    A, B = res.x
    return float(A), float(B)


def calibrate(model: SvmModel, X, y) -> tuple[float, float]:
    """Platt parameters for ``model`` fitted on held-out samples."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if len(X) < 10:
        raise ValueError("calibration needs at least 10 samples")
    return platt_scale(model.decision_function(X), y)


@dataclass
class BufferSample:
    x: np.ndarray
    label: int
    weight: float = 1.0
    support: bool = False


class TrainingBuffer:
    """Bounded sample store; the oldest non-support sample is evicted first."""

    def __init__(self, capacity: int = 200):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self.samples: deque[BufferSample] = deque()

    def __len__(self) -> int:
        return len(self.samples)

    def add(self, x, label, weight: float = 1.0, support: bool = False) -> None:
        if len(self.samples) >= self.capacity:
            for k, s in enumerate(self.samples):
                if not s.support:
                    del self.samples[k]
                    break
            else:
                self.samples.popleft()
        self.samples.append(BufferSample(np.asarray(x, dtype=float), label, weight, support))

    def clear(self) -> None:
        self.samples.clear()

    def arrays(self):
        X = np.array([s.x for s in self.samples])
        y = np.array([s.label for s in self.samples])
        w = np.array([s.weight for s in self.samples])
        return X, y, w


def refine(model: SvmModel, X_new, y_new, tol: float = 1e-3, weights=None) -> SvmModel:
    """Retrain on the old support vectors plus new samples.

    The standardization and calibration of ``model`` are kept frozen. Old
    support vectors re-enter with unit weight.
    """
    X_new = np.atleast_2d(np.asarray(X_new, dtype=float))
    if len(X_new) == 0:
        raise ValueError("refine needs at least one new sample")
    Z_new = model.standardize(X_new)
    y_new = np.asarray(y_new, dtype=int)
    w_new = np.ones(len(y_new)) if weights is None else np.asarray(weights, dtype=float)
    Z = np.vstack([model.support_vectors, Z_new])
    y = np.concatenate([model.support_labels, y_new])
    w = np.concatenate([np.ones(len(model.dual_coef)), w_new])
    # exact duplicates with the same label do not change the solution
    keys = np.column_stack([Z, y])
    _, first = np.unique(keys, axis=0, return_index=True)
    first = np.sort(first)
    return _fit_standardized(Z[first], y[first], model.kernel, model.C, tol, w[first],
                             max(100_000, 200 * len(first)), model.mean, model.scale,
                             model.calibration)


class OneVsRestSvm:
    """Multi-class classifier made of one binary SVM per known category.

    ``classes`` are catalog indices; categories without a model get zero
    probability.
    """

    def __init__(self, classes: Sequence[int], models: dict[int, SvmModel], n_categories: int):
        self.classes = list(classes)
        self.models = dict(models)
        self.n_categories = n_categories

    @classmethod
    def fit(cls, X, labels, n_categories: int, kernel: KernelSpec = KernelSpec(), C: float = 1.0,
            tol: float = 1e-3, calib_X=None, calib_labels=None) -> "OneVsRestSvm":
        X = np.atleast_2d(np.asarray(X, dtype=float))
        labels = np.asarray(labels)
        classes = sorted(int(c) for c in np.unique(labels))
        if len(classes) < 2:
            raise DegenerateModelError("one-vs-rest needs at least two classes")
        mean = X.mean(0)
        scale = X.std(0)
        scale = np.where(scale > 1e-12, scale, 1.0)
        Z = (X - mean) / scale
        models = {}
        for c in classes:
            y = np.where(labels == c, 1, -1)
            m = _fit_standardized(Z, y, kernel, C, tol, None, max(100_000, 200 * len(y)), mean, scale)
            if calib_X is not None:
                yc = np.where(np.asarray(calib_labels) == c, 1, -1)
                m = replace(m, calibration=calibrate(m, calib_X, yc))
            models[c] = m
        return cls(classes, models, n_categories)

    def scores(self, X) -> np.ndarray:
        """Raw decision values, shape (n, len(classes))."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return np.column_stack([self.models[c].decision_function(X) for c in self.classes])

    def margin(self, x, category: int) -> Optional[float]:
        m = self.models.get(category)
        return None if m is None else m.score(x)

    def predict_proba(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        out = np.zeros((X.shape[0], self.n_categories))
        for c in self.classes:
            out[:, c] = self.models[c].predict_proba(X)
        return out

    def predict(self, X) -> np.ndarray:
        idx = np.argmax(self.scores(X), axis=1)
        return np.asarray(self.classes)[idx]

    def accuracy(self, X, labels) -> float:
        if len(labels) == 0:
            return float("nan")
        return float(np.mean(self.predict(X) == np.asarray(labels)))

    def refine(self, X_new, labels_new, tol: float = 1e-3, weights=None) -> "OneVsRestSvm":
        """Refine every binary member on the new samples; returns a new ensemble."""
        labels_new = np.asarray(labels_new)
        models = {}
        for c in self.classes:
            y = np.where(labels_new == c, 1, -1)
            models[c] = refine(self.models[c], X_new, y, tol=tol, weights=weights)
        return OneVsRestSvm(self.classes, models, self.n_categories)

    def to_dict(self, names: Optional[Sequence[str]] = None) -> dict:
        return {
            "format": "vap-ovr-svm",
            "version": FORMAT_VERSION,
            "n_categories": self.n_categories,
            "classes": self.classes,
            "class_names": [names[c] for c in self.classes] if names else None,
            "models": [self.models[c].to_dict() for c in self.classes],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "OneVsRestSvm":
        if d.get("format") != "vap-ovr-svm" or d.get("version") != FORMAT_VERSION:
            raise ValueError("not a version-1 vap-ovr-svm dump")
        models = {c: SvmModel.from_dict(m) for c, m in zip(d["classes"], d["models"])}
        return cls(d["classes"], models, d["n_categories"])


def dump_model(obj, path, names=None) -> None:
    d = obj.to_dict(names) if isinstance(obj, OneVsRestSvm) else obj.to_dict()
    with open(path, "w") as fh:
        json.dump(d, fh)


def load_model(path):
    with open(path) as fh:
        d = json.load(fh)
    if d.get("format") == "vap-ovr-svm":
        return OneVsRestSvm.from_dict(d)
    return SvmModel.from_dict(d)
