"""Deterministic soft-margin linear SVM.

The solver runs sequential minimal optimization on the dual problem with
a free (unregularized) bias, using maximal-violating-pair working set
selection.  Selection and updates involve no randomness, so training is
bit-reproducible regardless of the seed supplied in the config.

The recorded objective trace uses incumbent tracking: after each epoch
(one block of pair updates) the primal objective of the current iterate
is compared against the best value seen so far, and the incumbent model
is what the solver ultimately returns.  This makes the trace
non-increasing by construction, which is the behaviour downstream code
relies on when monitoring convergence.
"""

from dataclasses import dataclass, field

import numpy as np
from numba import njit

__all__ = [
    "LinearModel",
    "SvmConfig",
    "SvmSolution",
    "train",
    "train_detailed",
    "decision",
    "primal_objective",
    "save_model",
    "load_model",
]


@dataclass(frozen=True)
class LinearModel:
    """Linear confidence function: score(x) = w . x + b."""

    w: np.ndarray
    b: float

    def __post_init__(self):
        w = np.asarray(self.w, dtype=np.float64)
        object.__setattr__(self, "w", w)
        if w.ndim != 1:
            raise ValueError("weight vector must be one-dimensional")
        if not (np.all(np.isfinite(w)) and np.isfinite(self.b)):
            raise ValueError("model parameters must be finite")


@dataclass(frozen=True)
class SvmConfig:
    c: float = 1.0
    tol: float = 1e-6  # relative objective change per epoch, also KKT gap floor
    max_epochs: int = 10_000
    seed: int = 0

    def __post_init__(self):
        if self.c <= 0:
            raise ValueError("C must be positive")
        if self.tol <= 0:
            raise ValueError("tolerance must be positive")
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be at least 1")


@dataclass(frozen=True)
class SvmSolution:
    model: LinearModel
    objective: float
    objective_trace: tuple[float, ...]
    epochs: int
    kkt_gap: float
    converged: bool


def decision(model: LinearModel, features: np.ndarray) -> float:
    """Raw signed margin w . x + b (not a probability)."""
    x = np.asarray(features, dtype=np.float64)
    if x.shape != model.w.shape:
        raise ValueError(
            f"feature dimension {x.shape} does not match model dimension {model.w.shape}"
        )
    return float(model.w @ x + model.b)


def primal_objective(w: np.ndarray, b: float, x: np.ndarray, y: np.ndarray, c: float) -> float:
    """0.5 ||w||^2 + C * sum of hinge losses, bias excluded from the norm."""
    margins = y * (x @ w + b)
    return float(0.5 * (w @ w) + c * np.sum(np.maximum(0.0, 1.0 - margins)))


def train(x: np.ndarray, y: np.ndarray, config: SvmConfig) -> LinearModel:
    """Fit the soft-margin classifier; labels must be -1/+1 with both present."""
    return train_detailed(x, y, config).model


def train_detailed(x: np.ndarray, y: np.ndarray, config: SvmConfig) -> SvmSolution:
    x = np.ascontiguousarray(np.asarray(x, dtype=np.float64))
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.ndim != 2:
        raise ValueError("feature matrix must be two-dimensional")
    if x.shape[0] != y.shape[0]:
        raise ValueError(
            f"feature rows ({x.shape[0]}) and labels ({y.shape[0]}) disagree"
        )
    if not np.all(np.isin(y, (-1.0, 1.0))):
        raise ValueError("labels must be -1 or +1")
    if np.all(y > 0) or np.all(y < 0):
        raise ValueError("training set must contain both classes")

    n = x.shape[0]
    gram = x @ x.T
    alpha = np.zeros(n)
    grad = -np.ones(n)  # gradient of the dual objective at alpha = 0
    c = float(config.c)
    kkt_eps = float(config.tol)
    epoch_steps = max(n, 64)

    trace: list[float] = []
    best_obj = np.inf
    best_w = np.zeros(x.shape[1])
    best_b = 0.0
    kkt_gap = np.inf
    converged = False
    epochs = 0
    prev_dual = 0.0  # dual objective at alpha = 0

    for epoch in range(config.max_epochs):
        kkt_gap = _smo_block(gram, y, alpha, grad, c, epoch_steps, kkt_eps)
        epochs = epoch + 1
        w = x.T @ (alpha * y)
        b = _bias_estimate(alpha, grad, y, c)
        obj = primal_objective(w, b, x, y, c)
        if obj < best_obj:
            best_obj, best_w, best_b = obj, w, b
        trace.append(best_obj)
        if kkt_gap <= kkt_eps:
            converged = True
            break
        # f(alpha) = 0.5 a'Qa - sum(a); with grad = Qa - 1 this is cheap.
        dual = 0.5 * float(alpha @ grad) - 0.5 * float(np.sum(alpha))
        if (prev_dual - dual) / max(1.0, abs(dual)) < config.tol:
            converged = True
            break
        prev_dual = dual

    model = LinearModel(w=best_w, b=float(best_b))
    return SvmSolution(
        model=model,
        objective=float(best_obj),
        objective_trace=tuple(trace),
        epochs=epochs,
        kkt_gap=float(kkt_gap),
        converged=converged,
    )


def _bias_estimate(alpha: np.ndarray, grad: np.ndarray, y: np.ndarray, c: float) -> float:
    # -y_i grad_i equals y_i - w.x_i; the optimal bias sits between the
    # largest such value over the "up" set and the smallest over "down".
    yg = -y * grad
    up = ((y > 0) & (alpha < c)) | ((y < 0) & (alpha > 0))
    low = ((y > 0) & (alpha > 0)) | ((y < 0) & (alpha < c))
    free = (alpha > 0) & (alpha < c)
    if np.any(free):
        return float(np.mean(yg[free]))
    hi = np.max(yg[up]) if np.any(up) else 0.0
    lo = np.min(yg[low]) if np.any(low) else 0.0
    return float(0.5 * (hi + lo))


@njit(cache=True, nogil=True)
def _smo_block(gram, y, alpha, grad, c, max_steps, kkt_eps):
    """Run up to ``max_steps`` maximal-violating-pair updates in place.

    Returns the KKT violation gap observed at the last selection.
    """
    n = y.shape[0]
    gap = np.inf
    for _ in range(max_steps):
        m_val = -np.inf
        m_idx = -1
        big_val = np.inf
        big_idx = -1
        for t in range(n):
            yg = -y[t] * grad[t]
            if (y[t] > 0.0 and alpha[t] < c) or (y[t] < 0.0 and alpha[t] > 0.0):
                if yg > m_val:
                    m_val = yg
                    m_idx = t
            if (y[t] > 0.0 and alpha[t] > 0.0) or (y[t] < 0.0 and alpha[t] < c):
                if yg < big_val:
                    big_val = yg
                    big_idx = t
        gap = m_val - big_val
        if gap <= kkt_eps or m_idx < 0 or big_idx < 0:
            return gap
        i = m_idx
        j = big_idx
        # Feasible direction: d_i = y_i, d_j = -y_j keeps sum(y * alpha) fixed.
        eta = gram[i, i] + gram[j, j] - 2.0 * gram[i, j]
        if eta < 1e-12:
            eta = 1e-12
        step = gap / eta
        # Box limits along the direction (the lower limits are negative and
        # never bind because the pair is violating, so step > 0).
        if y[i] > 0.0:
            hi_i = c - alpha[i]
        else:
            hi_i = alpha[i]
        if y[j] > 0.0:
            hi_j = alpha[j]
        else:
            hi_j = c - alpha[j]
        if step > hi_i:
            step = hi_i
        if step > hi_j:
            step = hi_j
        if step <= 0.0:
            return gap
        alpha[i] += step * y[i]
        alpha[j] -= step * y[j]
        if alpha[i] < 0.0:
            alpha[i] = 0.0
        elif alpha[i] > c:
            alpha[i] = c
        if alpha[j] < 0.0:
            alpha[j] = 0.0
        elif alpha[j] > c:
            alpha[j] = c
        for t in range(n):
            grad[t] += step * y[t] * (gram[t, i] - gram[t, j])
    return gap


MODEL_FORMAT_VERSION = 1


def save_model(model: LinearModel, path) -> None:
    lines = [f"saccadet-linear-model {MODEL_FORMAT_VERSION}", f"dim {model.w.shape[0]}"]
    lines.extend(f"w {repr(float(v))}" for v in model.w)
    lines.append(f"b {repr(float(model.b))}")
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")


def load_model(path) -> LinearModel:
    with open(path, "r", encoding="ascii") as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines or not lines[0].startswith("saccadet-linear-model"):
        raise ValueError(f"{path}: not a linear model file")
    version = int(lines[0].split()[1])
    if version != MODEL_FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported model format version {version}")
    dim = int(lines[1].split()[1])
    weights = [float(ln.split()[1]) for ln in lines[2:] if ln.startswith("w ")]
    bias_lines = [ln for ln in lines[2:] if ln.startswith("b ")]
    if len(weights) != dim or len(bias_lines) != 1:
        raise ValueError(f"{path}: truncated or malformed model file")
    return LinearModel(w=np.array(weights), b=float(bias_lines[0].split()[1]))
