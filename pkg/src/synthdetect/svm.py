"""Soft-margin RBF-kernel SVM trained by Sequential Minimal Optimization.

Solves the dual

    min_a  1/2 a^T Q a - e^T a,   0 <= a_i <= C,   y^T a = 0,   Q_ij = y_i y_j K(x_i, x_j)

two multipliers at a time. The working pair is the maximal violating pair
with second-order selection of the partner (Fan, Chen & Lin, JMLR 2005),
which terminates only when every KKT condition holds within `tol`.
Labels are +1 (FAKE, the detected class) and -1 (REAL).
"""
from __future__ import annotations

import logging
import warnings
from collections import OrderedDict
from dataclasses import dataclass

import numpy as np

from .errors import ArgumentError, TrainingError
from .rng import RngStream

log = logging.getLogger(__name__)

TAU = 1e-12
FULL_KERNEL_LIMIT = 4000


@dataclass(frozen=True)
class SvmConfig:
    C: float = 1.0
    gamma: float | str = "scale"
    tol: float = 1e-3
    max_passes: int = 100
    seed: int = 0

    def __post_init__(self):
        if not self.C > 0:
            raise ArgumentError(f"C must be > 0, got {self.C}")
        if self.gamma != "scale" and not float(self.gamma) > 0:
            raise ArgumentError(f"gamma must be > 0 or 'scale', got {self.gamma}")
        if not self.tol > 0:
            raise ArgumentError(f"tol must be > 0, got {self.tol}")
        if self.max_passes < 1:
            raise ArgumentError("max_passes must be >= 1")


@dataclass
class SvmModel:
    support_vectors: np.ndarray
    dual_coefs: np.ndarray  # alpha_i * y_i
    bias: float
    gamma: float
    C: float = 1.0
    converged: bool = True
    n_iter: int = 0
    objective: float = float("nan")

    @property
    def dim(self) -> int:
        return self.support_vectors.shape[1]


def scale_gamma(X: np.ndarray) -> float:
    """1 / (n_features · Var(X)), the usual 'scale' default."""
    var = float(np.asarray(X, dtype=np.float64).var())
    return 1.0 / (X.shape[1] * var) if var > 0 else 1.0


def rbf_kernel(x, y, gamma: float) -> float:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ArgumentError(f"rbf_kernel: dimension mismatch {x.shape} vs {y.shape}")
    if not gamma > 0:
        raise ArgumentError("gamma must be > 0")
    d = x - y
    return float(np.exp(-gamma * np.dot(d, d)))


def kernel_matrix(A: np.ndarray, B: np.ndarray, gamma: float) -> np.ndarray:
    A = np.asarray(A, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    if A.shape[1] != B.shape[1]:
        raise ArgumentError(f"kernel_matrix: dimension mismatch {A.shape[1]} vs {B.shape[1]}")
    sq = (A * A).sum(1)[:, None] + (B * B).sum(1)[None, :] - 2.0 * (A @ B.T)
    return np.exp(-gamma * np.maximum(sq, 0.0))


class _KernelRows:
    """Kernel rows on demand: a full matrix for small problems, an LRU row
    cache otherwise."""

    def __init__(self, X, gamma, cache_bytes=512 * 2 ** 20):
        self.X = X
        self.gamma = gamma
        self.sq = (X * X).sum(1)
        n = X.shape[0]
        self.full = kernel_matrix(X, X, gamma) if n <= FULL_KERNEL_LIMIT else None
        self.cache = OrderedDict()
        self.capacity = max(2, cache_bytes // (8 * n))

    def row(self, i):
        if self.full is not None:
            return self.full[i]
        r = self.cache.get(i)
        if r is not None:
            self.cache.move_to_end(i)
            return r
        sq = self.sq[i] + self.sq - 2.0 * (self.X @ self.X[i])
        r = np.exp(-self.gamma * np.maximum(sq, 0.0))
        self.cache[i] = r
        if len(self.cache) > self.capacity:
            self.cache.popitem(last=False)
        return r


def smo_train(X, y, cfg: SvmConfig = SvmConfig()) -> SvmModel:
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise ArgumentError(f"X {X.shape} and y {y.shape} do not align")
    if not np.all(np.isin(y, (-1.0, 1.0))):
        raise ArgumentError("labels must be -1 or +1")
    if not (np.any(y > 0) and np.any(y < 0)):
        raise TrainingError("SMO needs at least one example of each class")
    if not np.all(np.isfinite(X)):
        raise ArgumentError("training rows must be finite")

    n = X.shape[0]
    C = float(cfg.C)
    gamma = scale_gamma(X) if cfg.gamma == "scale" else float(cfg.gamma)
    # permuting the scan order only breaks ties between equally violating indices
    order = RngStream(cfg.seed, "smo").permutation(n)
    Xp, yp = X[order], y[order]
    K = _KernelRows(Xp, gamma)

    alpha = np.zeros(n)
    G = -np.ones(n)  # gradient of the dual objective, Q a - e
    max_iter = cfg.max_passes * max(n, 10)
    converged = False
    it = 0
    while it < max_iter:
        up = ((yp > 0) & (alpha < C)) | ((yp < 0) & (alpha > 0))
        low = ((yp > 0) & (alpha > 0)) | ((yp < 0) & (alpha < C))
        score = -yp * G
        su = np.where(up, score, -np.inf)
        i = int(np.argmax(su))
        gmax = su[i]
        sl = np.where(low, score, np.inf)
        gmin = sl.min()
        if gmax - gmin < cfg.tol:
            converged = True
            break
        Ki = K.row(i)
        b = gmax - score
        a = np.maximum(Ki[i] + 1.0 - 2.0 * Ki, TAU)  # RBF: K_tt = 1
        cand = low & (b > 0)
        obj = np.where(cand, -(b * b) / a, np.inf)
        j = int(np.argmin(obj))
        Kj = K.row(j)

        ai, aj = alpha[i], alpha[j]
        yi, yj = yp[i], yp[j]
        quad = max(Ki[i] + Kj[j] - 2.0 * Ki[j], TAU)
        if yi != yj:
            delta = (-G[i] - G[j]) / quad
            diff = ai - aj
            ai += delta
            aj += delta
            if diff > 0:
                if aj < 0:
                    aj, ai = 0.0, diff
            elif ai < 0:
                ai, aj = 0.0, -diff
            if diff > 0:
                if ai > C:
                    ai, aj = C, C - diff
            elif aj > C:
                aj, ai = C, C + diff
        else:
            delta = (G[i] - G[j]) / quad
            total = ai + aj
            ai -= delta
            aj += delta
            if total > C:
                if ai > C:
                    ai, aj = C, total - C
            elif aj < 0:
                aj, ai = 0.0, total
            if total > C:
                if aj > C:
                    aj, ai = C, total - C
            elif ai < 0:
                ai, aj = 0.0, total
        dai, daj = ai - alpha[i], aj - alpha[j]
        alpha[i], alpha[j] = ai, aj
        G += yp * (yi * dai * Ki + yj * daj * Kj)
        it += 1

    if not converged:
        warnings.warn(f"SMO did not reach tol={cfg.tol} within {max_iter} iterations", RuntimeWarning)

    bias = -_rho(alpha, G, yp, C)
    objective = 0.5 * float(alpha @ (G - 1.0))
    sv = alpha > 0
    log.debug("smo: n=%d iterations=%d support=%d converged=%s", n, it, int(sv.sum()), converged)
    return SvmModel(
        support_vectors=Xp[sv].copy(),
        dual_coefs=(alpha * yp)[sv].copy(),
        bias=float(bias),
        gamma=gamma,
        C=C,
        converged=converged,
        n_iter=it,
        objective=objective,
    )


def _rho(alpha, G, y, C):
    yG = y * G
    free = (alpha > 0) & (alpha < C)
    if free.any():
        return float(yG[free].mean())
    at_upper = alpha >= C
    at_lower = alpha <= 0
    ub_mask = (at_upper & (y < 0)) | (at_lower & (y > 0))
    lb_mask = (at_upper & (y > 0)) | (at_lower & (y < 0))
    ub = yG[ub_mask].min() if ub_mask.any() else np.inf
    lb = yG[lb_mask].max() if lb_mask.any() else -np.inf
    return float((ub + lb) / 2)


def decision_scores(model: SvmModel, X, chunk: int = 2048) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.dim:
        raise ArgumentError(f"expected rows of dimension {model.dim}, got {X.shape}")
    out = np.empty(X.shape[0])
    for s in range(0, X.shape[0], chunk):
        Kb = kernel_matrix(X[s:s + chunk], model.support_vectors, model.gamma)
        out[s:s + chunk] = Kb @ model.dual_coefs + model.bias
    return out


def decision_score(model: SvmModel, x) -> float:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != model.dim:
        raise ArgumentError(f"expected a vector of dimension {model.dim}, got {x.shape}")
    return float(decision_scores(model, x[None])[0])


def predict(model: SvmModel, x) -> int:
    """+1 when the score is >= 0 (ties go to the positive class), else -1."""
    return 1 if decision_score(model, x) >= 0 else -1


def predict_batch(model: SvmModel, X) -> np.ndarray:
    return np.where(decision_scores(model, X) >= 0, 1, -1)


def dual_objective(alpha, X, y, gamma) -> float:
    """1/2 a^T Q a - sum(a) evaluated directly from the kernel matrix."""
    y = np.asarray(y, dtype=np.float64)
    Q = kernel_matrix(X, X, gamma) * np.outer(y, y)
    return 0.5 * float(alpha @ Q @ alpha) - float(alpha.sum())


def full_alphas(model: SvmModel, X) -> np.ndarray:
    """Recover the multiplier of every training row (0 for non-support rows)."""
    X = np.asarray(X, dtype=np.float64)
    alpha = np.zeros(X.shape[0])
    for sv, coef in zip(model.support_vectors, model.dual_coefs):
        hits = np.flatnonzero(np.all(X == sv, axis=1))
        alpha[hits[0]] = abs(coef)
    return alpha
