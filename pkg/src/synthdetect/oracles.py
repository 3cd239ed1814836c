"""Slow, independent reference implementations used to check the fast paths.

Each oracle computes its quantity a different way from the production code:
loops instead of vectorised sweeps, pair counting instead of curve areas,
projected gradient instead of SMO.
"""
from __future__ import annotations

import math

import numpy as np

from .features import BLOCK_EPS, HogConfig


def fd_gradient(f, x: np.ndarray, eps: float = 1e-6) -> np.ndarray:
    """Central differences of the scalar function f at x (modified in place
    and restored)."""
    g = np.zeros_like(x, dtype=np.float64)
    flat = x.reshape(-1)
    gf = g.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + eps
        hi = f()
        flat[i] = old - eps
        lo = f()
        flat[i] = old
        gf[i] = (hi - lo) / (2 * eps)
    return g


def relative_error(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    den = max(np.linalg.norm(a), np.linalg.norm(b))
    return 0.0 if den == 0 else float(np.linalg.norm(a - b) / den)


def mann_whitney_auc(scores, positive_mask) -> float:
    """P(score of a random positive > score of a random negative), ties 1/2."""
    s = list(map(float, scores))
    t = list(map(bool, positive_mask))
    pos = [a for a, k in zip(s, t) if k]
    neg = [a for a, k in zip(s, t) if not k]
    wins = 0.0
    for p in pos:
        for q in neg:
            wins += 1.0 if p > q else 0.5 if p == q else 0.0
    return wins / (len(pos) * len(neg))


def brute_pr_auc(scores, positive_mask) -> float:
    """Average precision by enumerating every distinct threshold and counting
    predictions directly."""
    s = [float(a) for a in scores]
    t = [bool(k) for k in positive_mask]
    n_pos = sum(t)
    area, prev_recall = 0.0, 0.0
    for thr in sorted(set(s), reverse=True):
        tp = sum(1 for a, k in zip(s, t) if a >= thr and k)
        fp = sum(1 for a, k in zip(s, t) if a >= thr and not k)
        recall = tp / n_pos
        precision = tp / (tp + fp)
        area += (recall - prev_recall) * precision
        prev_recall = recall
    return area


def _project(v, y, C, iters=200):
    """Euclidean projection onto {0 <= a <= C, y·a = 0} by bisection on the
    multiplier of the equality constraint."""
    lo, hi = -1.0, 1.0
    while np.dot(y, np.clip(v - lo * y, 0, C)) < 0:
        lo *= 2
    while np.dot(y, np.clip(v - hi * y, 0, C)) > 0:
        hi *= 2
    for _ in range(iters):
        mid = (lo + hi) / 2
        if np.dot(y, np.clip(v - mid * y, 0, C)) > 0:
            lo = mid
        else:
            hi = mid
    return np.clip(v - (lo + hi) / 2 * y, 0, C)


def projected_gradient_dual(K: np.ndarray, y: np.ndarray, C: float, iters: int = 20000,
                            tol: float = 1e-12) -> tuple:
    """Accelerated projected gradient on min 1/2 a^T Q a - sum(a) over the
    SVM dual feasible set. Returns (alpha, objective)."""
    y = np.asarray(y, dtype=np.float64)
    Q = K * np.outer(y, y)
    L = max(float(np.linalg.eigvalsh(Q).max()), 1e-12)

    def obj(a):
        return 0.5 * a @ Q @ a - a.sum()

    a = np.zeros(len(y))
    z, t = a.copy(), 1.0
    prev = obj(a)
    for _step in range(iters):
        a_new = _project(z - (Q @ z - 1.0) / L, y, C)
        t_new = (1 + math.sqrt(1 + 4 * t * t)) / 2
        z = a_new + (t - 1) / t_new * (a_new - a)
        a, t = a_new, t_new
        cur = obj(a)
        if cur > prev:  # restart momentum on an uphill step
            z, t = a.copy(), 1.0
        done = abs(prev - cur) < tol
        prev = cur
        if done:
            break
    return a, float(obj(a))


def brute_conv2d(x, w, b=None, stride: int = 1, padding: int = 0) -> np.ndarray:
    """Cross-correlation by explicit loops over every output element."""
    x = np.asarray(x, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    n, c, h, wd = x.shape
    f, _, kh, kw = w.shape
    xp = np.zeros((n, c, h + 2 * padding, wd + 2 * padding))
    xp[:, :, padding:padding + h, padding:padding + wd] = x
    oh = (h + 2 * padding - kh) // stride + 1
    ow = (wd + 2 * padding - kw) // stride + 1
    out = np.zeros((n, f, oh, ow))
    for i in range(n):
        for o in range(f):
            for r in range(oh):
                for q in range(ow):
                    acc = 0.0
                    for ch in range(c):
                        for u in range(kh):
                            for v in range(kw):
                                acc += xp[i, ch, r * stride + u, q * stride + v] * w[o, ch, u, v]
                    out[i, o, r, q] = acc + (0.0 if b is None else float(b[o]))
    return out


def brute_hog(img, cfg: HogConfig = HogConfig()) -> np.ndarray:
    """HOG with per-pixel loops: replicate-padded centred differences, linear
    vote between the two nearest bin centres, per-block L2 normalisation."""
    a = np.asarray(img, dtype=np.float64)
    h, w = a.shape
    span = 360.0 if cfg.signed else 180.0
    width = span / cfg.n_bins
    cy, cx = h // cfg.cell_size, w // cfg.cell_size
    hist = np.zeros((cy, cx, cfg.n_bins))

    def px(r, c):
        return a[min(max(r, 0), h - 1), min(max(c, 0), w - 1)]

    for r in range(h):
        for c in range(w):
            gx = px(r, c + 1) - px(r, c - 1)
            gy = px(r + 1, c) - px(r - 1, c)
            mag = math.hypot(gx, gy)
            ang = math.degrees(math.atan2(gy, gx)) % span
            pos = ang / width
            lo = math.floor(pos)
            frac = pos - lo
            hist[r // cfg.cell_size, c // cfg.cell_size, lo % cfg.n_bins] += mag * (1 - frac)
            hist[r // cfg.cell_size, c // cfg.cell_size, (lo + 1) % cfg.n_bins] += mag * frac
    out = []
    bs, st = cfg.block_size, cfg.block_stride
    for by in range(0, cy - bs + 1, st):
        for bx in range(0, cx - bs + 1, st):
            v = hist[by:by + bs, bx:bx + bs].reshape(-1)
            out.append(v / math.sqrt(float(v @ v) + BLOCK_EPS ** 2))
    return np.concatenate(out)


# ---------------------------------------------------------------------------
# quick self-check used by the CLI

def selftest(seed: int = 0) -> list:
    """Small randomized comparisons of each fast path against its oracle.
    Returns a list of (name, passed, detail)."""
    from . import tensor as T
    from .evaluation import pr_auc, roc_auc
    from .features import hog_batch
    from .svm import SvmConfig, kernel_matrix, smo_train

    rng = np.random.default_rng(seed)
    results = []

    worst = 0.0
    with T.precision(np.float64):
        for _ in range(5):
            x = T.Tensor(rng.normal(size=(2, 2, 5, 5)), requires_grad=True)
            w = T.Parameter(rng.normal(size=(3, 2, 3, 3)))
            b = T.Parameter(rng.normal(size=3))

            def loss():
                return T.tsum(T.mul(T.relu(T.conv2d(x, w, b, padding=1)), T.relu(T.conv2d(x, w, b, padding=1))))

            L = loss()
            T.backward(L)
            for p in (x, w, b):
                num = fd_gradient(lambda: float(loss().data), p.data)
                worst = max(worst, relative_error(p.grad, num))
    results.append(("conv2d+relu gradient vs finite differences", worst < 1e-4, f"max rel. error {worst:.2e}"))

    xi = rng.integers(-4, 5, size=(1, 2, 5, 6)).astype(np.float64)
    wi = rng.integers(-3, 4, size=(2, 2, 3, 3)).astype(np.float64)
    with T.precision(np.float64):
        fast = T.conv2d(T.Tensor(xi), T.Tensor(wi), stride=2, padding=1).data
    same = np.array_equal(fast, brute_conv2d(xi, wi, stride=2, padding=1))
    results.append(("conv2d vs loop oracle (bitwise)", same, ""))

    worst = 0.0
    for _ in range(200):
        n = int(rng.integers(2, 30))
        s = rng.integers(0, 6, size=n).astype(float)
        t = rng.random(n) < 0.5
        if t.all() or not t.any():
            continue
        worst = max(worst, abs(roc_auc(s, t.astype(int)).auc - mann_whitney_auc(s, t)))
    results.append(("ROC-AUC vs Mann-Whitney", worst < 1e-9, f"max diff {worst:.1e}"))

    worst = 0.0
    for _ in range(200):
        n = int(rng.integers(1, 20))
        s = rng.integers(0, 5, size=n).astype(float)
        t = rng.random(n) < 0.5
        if not t.any():
            continue
        worst = max(worst, abs(pr_auc(s, t.astype(int)) - brute_pr_auc(s, t)))
    results.append(("PR-AUC vs threshold sweep", worst < 1e-12, f"max diff {worst:.1e}"))

    worst = 0.0
    for _ in range(3):
        X = rng.normal(size=(16, 2))
        y = np.where(X[:, 0] * X[:, 1] > 0, 1.0, -1.0)
        if abs(y.sum()) == 16:
            continue
        m = smo_train(X, y, SvmConfig(C=1.0, gamma=1.0, tol=1e-6))
        _, ref = projected_gradient_dual(kernel_matrix(X, X, 1.0), y, 1.0)
        worst = max(worst, abs(m.objective - ref))
    results.append(("SMO dual objective vs projected gradient", worst < 1e-4, f"max gap {worst:.1e}"))

    img = rng.integers(0, 256, size=(16, 16)).astype(float)
    cfg = HogConfig(cell_size=4)
    diff = float(np.abs(hog_batch(img[None], cfg)[0] - brute_hog(img, cfg)).max())
    results.append(("HOG vs per-pixel oracle", diff < 1e-9, f"max diff {diff:.1e}"))
    return results
