"""Penalized logistic regression with in-repo solvers.

Objective: mean negative log-likelihood + alpha * penalty(w), intercept
unpenalized. With the default inverse-strength convention alpha = 1 / lambda,
so larger lambda means a weaker penalty. L2 uses penalty ||w||^2 / 2 and is
solved by damped Newton; L1 uses ||w||_1 and monotone FISTA with backtracking.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve
from scipy.special import expit, log1p

PENALTIES = ("l1", "l2")
STRENGTHS = ("inverse", "direct")


def default_lambda_grid() -> tuple[float, ...]:
    return tuple(float(v) for v in np.logspace(0, 9, 10))


@dataclass(frozen=True)
class ModelConfig:
    penalties: tuple[str, ...] = PENALTIES
    lambda_grid: tuple[float, ...] = field(default_factory=default_lambda_grid)
    max_iter: int = 0  # 0 picks the solver default
    tol: float = 1e-7
    strength: str = "inverse"

    def __post_init__(self):
        object.__setattr__(self, "penalties", tuple(self.penalties))
        object.__setattr__(self, "lambda_grid", tuple(float(v) for v in self.lambda_grid))
        if not self.penalties or any(p not in PENALTIES for p in self.penalties):
            raise ValueError(f"penalties must be drawn from {PENALTIES}")
        if not self.lambda_grid or any(v <= 0 for v in self.lambda_grid):
            raise ValueError("lambda grid must contain positive values")
        if list(self.lambda_grid) != sorted(self.lambda_grid) or len(set(self.lambda_grid)) != len(self.lambda_grid):
            raise ValueError("lambda grid must be strictly ascending")
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if self.strength not in STRENGTHS:
            raise ValueError(f"strength must be one of {STRENGTHS}")


@dataclass
class LogRegFit:
    weights: np.ndarray
    intercept: float
    penalty: str
    lam: float
    converged: bool
    n_iter: int
    loss_history: list[float]

    def decision_function(self, X: np.ndarray) -> np.ndarray:
        return X @ self.weights + self.intercept

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        return expit(self.decision_function(X))


def penalty_weight(lam: float, strength: str = "inverse") -> float:
    if lam <= 0:
        raise ValueError("lambda must be positive")
    return 1.0 / lam if strength == "inverse" else lam


def _nll(z: np.ndarray, y: np.ndarray) -> float:
    # log(1 + e^z) - y z, computed stably
    return float(np.mean(np.maximum(z, 0) + log1p(np.exp(-np.abs(z))) - y * z))


def objective(X, y, w, b, penalty: str, alpha: float) -> float:
    pen = 0.5 * float(w @ w) if penalty == "l2" else float(np.abs(w).sum())
    return _nll(X @ w + b, y) + alpha * pen


def smooth_gradient(X, y, w, b) -> tuple[np.ndarray, float]:
    """Gradient of the mean negative log-likelihood in (w, b)."""
    r = expit(X @ w + b) - y
    return X.T @ r / len(y), float(r.mean())


def _check(X, y) -> tuple[np.ndarray, np.ndarray]:
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or y.ndim != 1 or len(y) != X.shape[0]:
        raise ValueError("X must be n x p and y length n")
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("labels must be 0 or 1")
    if not np.all(np.isfinite(X)):
        raise ValueError("X contains non-finite values")
    return X, y


def _newton_l2(X, y, alpha, w, b, max_iter, tol):
    n, p = X.shape
    A = np.hstack([X, np.ones((n, 1))])
    theta = np.append(w, b)
    reg = np.full(p + 1, alpha)
    reg[-1] = 0.0

    def f(t):
        return _nll(A @ t, y) + 0.5 * alpha * float(t[:-1] @ t[:-1])

    hist = [f(theta)]
    for it in range(1, max_iter + 1):
        mu = expit(A @ theta)
        g = A.T @ (mu - y) / n + reg * theta
        if np.linalg.norm(g) <= tol:
            return theta[:-1], theta[-1], True, it - 1, hist
        H = (A * (mu * (1 - mu))[:, None]).T @ A / n + np.diag(reg)
        H[np.diag_indices_from(H)] += 1e-12
        try:
            d = -cho_solve(cho_factor(H), g)
        except LinAlgError:
            d = -np.linalg.lstsq(H, g, rcond=None)[0]
        step, slope = 1.0, float(g @ d)
        while step > 1e-12:
            cand = theta + step * d
            fc = f(cand)
            if fc <= hist[-1] + 1e-4 * step * slope:
                break
            step *= 0.5
        else:
            break
        theta = cand
        hist.append(fc)
    mu = expit(A @ theta)
    g = A.T @ (mu - y) / n + reg * theta
    return theta[:-1], theta[-1], bool(np.linalg.norm(g) <= tol), len(hist) - 1, hist


def _soft(v, t):
    return np.sign(v) * np.maximum(np.abs(v) - t, 0.0)


def _fista_l1(X, y, alpha, w, b, max_iter, tol):
    """Monotone FISTA with backtracking and function-value restart.

    Convergence is measured by the norm of the gradient mapping. Linear
    predictors are carried along with the iterates so each step costs one
    product with X and one with X^T.
    """
    n = len(y)
    upper = (np.linalg.norm(X, 2) ** 2 + n) / (4 * n)  # Lipschitz bound of the smooth part
    L = max(upper * 1e-2, 1e-12)

    def nll_grad(u):
        r = expit(u) - y
        return _nll(u, y), X.T @ r / n, float(r.mean())

    x_w, x_b = w.copy(), float(b)
    x_u = X @ x_w + x_b
    v_w, v_b, v_u = x_w, x_b, x_u
    t = 1.0
    hist = [_nll(x_u, y) + alpha * float(np.abs(x_w).sum())]
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        fv, gw, gb = nll_grad(v_u)
        while True:
            z_w = _soft(v_w - gw / L, alpha / L)
            z_b = v_b - gb / L
            z_u = X @ z_w + z_b
            dw, db = z_w - v_w, z_b - v_b
            fz_smooth = _nll(z_u, y)
            if fz_smooth <= fv + gw @ dw + gb * db + 0.5 * L * (dw @ dw + db * db) + 1e-15:
                break
            L *= 2.0
        mapping = L * np.sqrt(dw @ dw + db * db)
        fz = fz_smooth + alpha * float(np.abs(z_w).sum())
        if mapping <= tol:
            converged = True
            if fz <= hist[-1]:
                x_w, x_b = z_w, z_b
                hist.append(fz)
            break
        if fz > hist[-1]:
            # restart momentum from the last accepted iterate
            t = 1.0
            v_w, v_b, v_u = x_w, x_b, x_u
            hist.append(hist[-1])
            continue
        t_next = 0.5 * (1 + np.sqrt(1 + 4 * t * t))
        beta = (t - 1) / t_next
        v_w = z_w + beta * (z_w - x_w)
        v_b = z_b + beta * (z_b - x_b)
        v_u = z_u + beta * (z_u - x_u)
        x_w, x_b, x_u, t = z_w, z_b, z_u, t_next
        hist.append(fz)
        L = max(L * 0.9, 1e-12)  # let the step grow again
    return x_w, x_b, converged, it, hist


def fit_logreg(
    X,
    y,
    penalty: str = "l2",
    lam: float = 1.0,
    max_iter: int = 0,
    tol: float = 1e-7,
    strength: str = "inverse",
    warm_start: LogRegFit | None = None,
) -> LogRegFit:
    X, y = _check(X, y)
    if penalty not in PENALTIES:
        raise ValueError(f"penalty must be one of {PENALTIES}")
    alpha = penalty_weight(lam, strength)
    p = X.shape[1]
    if warm_start is not None and len(warm_start.weights) == p:
        w0, b0 = warm_start.weights.copy(), float(warm_start.intercept)
    else:
        m = np.clip(y.mean(), 1e-6, 1 - 1e-6)
        w0, b0 = np.zeros(p), float(np.log(m / (1 - m)))
    if penalty == "l2":
        w, b, conv, it, hist = _newton_l2(X, y, alpha, w0, b0, max_iter or 200, tol)
    else:
        w, b, conv, it, hist = _fista_l1(X, y, alpha, w0, b0, max_iter or 3000, tol)
    return LogRegFit(np.asarray(w), float(b), penalty, lam, conv, it, hist)
