"""Learners implemented from first principles.

- Standardizer: per-dimension z-scoring fitted on training data only.
- SvmModel: soft-margin SVM with a third-degree polynomial kernel, trained
  by sequential minimal optimization (SMO) on the dual.
- MlpModel: one-hidden-layer (width 100, ReLU) regressor trained with
  adaptive-moment SGD on mean squared error plus an L2 penalty.

Everything is deterministic given a seed.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DimensionMismatch,
    DivergenceDetected,
    NonFiniteFeature,
    SingleClass,
)

LABEL_ASD = 1
LABEL_CONTROL = -1


@dataclass
class Standardizer:
    mean: np.ndarray = None
    std: np.ndarray = None

    def fit(self, X: np.ndarray) -> "Standardizer":
        X = np.asarray(X, dtype=float)
        self.mean = X.mean(axis=0)
        self.std = X.std(axis=0)
        return self

    def transform(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        std = np.where(self.std > 1e-12, self.std, 1.0)
        Z = (X - self.mean) / std
        # zero-variance dimensions carry no information; map them to 0
        Z[..., self.std <= 1e-12] = 0.0
        return Z

    def fit_transform(self, X: np.ndarray) -> np.ndarray:
        return self.fit(X).transform(X)


def kernel_poly3(u: np.ndarray, v: np.ndarray, gamma: float, coef0: float) -> float:
    """Third-degree polynomial kernel (gamma * <u, v> + coef0)^3."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape[-1] != v.shape[-1]:
        raise DimensionMismatch(f"dim {u.shape[-1]} vs {v.shape[-1]}")
    return float((gamma * np.dot(u, v) + coef0) ** 3)


def _kernel_matrix(A: np.ndarray, B: np.ndarray, gamma: float, coef0: float) -> np.ndarray:
    return (gamma * (A @ B.T) + coef0) ** 3


def gamma_scale(X: np.ndarray) -> float:
    """Default kernel scale: 1 / (d * mean per-dimension variance)."""
    X = np.asarray(X, dtype=float)
    mean_var = float(X.var(axis=0).mean())
    if mean_var <= 0:
        return 1.0
    return 1.0 / (X.shape[1] * mean_var)


@dataclass
class SvmModel:
    support_vectors: np.ndarray  # (n_sv, d), standardized rows
    dual_coef: np.ndarray  # (n_sv,), alpha_i * y_i
    bias: float
    gamma: float
    coef0: float
    degree: int = 3
    C: float = 1.0
    converged: bool = True
    final_kkt_violation: float = 0.0

    @property
    def dim(self) -> int:
        return self.support_vectors.shape[1]

    def decision_value(self, x: np.ndarray) -> float:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.dim:
            raise DimensionMismatch(f"expected dim {self.dim}, got {x.shape[-1]}")
        k = (self.gamma * (self.support_vectors @ x) + self.coef0) ** self.degree
        return float(self.dual_coef @ k + self.bias)


def svm_predict(model: SvmModel, x: np.ndarray) -> tuple[int, float]:
    """Label and decision value; a decision value of exactly 0 breaks to
    CONTROL (no evidence, no flag)."""
    f = model.decision_value(x)
    return (LABEL_ASD if f > 0 else LABEL_CONTROL), f


def svm_dual_objective(K: np.ndarray, y: np.ndarray, alpha: np.ndarray) -> float:
    ay = alpha * y
    return float(alpha.sum() - 0.5 * ay @ K @ ay)


def _up_low_masks(alpha, y, C):
    # directions in which each alpha may still move under the box and
    # equality constraints
    up = ((y > 0) & (alpha < C - 1e-12)) | ((y < 0) & (alpha > 1e-12))
    low = ((y < 0) & (alpha < C - 1e-12)) | ((y > 0) & (alpha > 1e-12))
    return up, low


def _kkt_gap(alpha, y, G, C):
    """Bias-free optimality gap m - M; <= 0 at the exact optimum.

    G is the bias-free error cache, G_i = sum_j alpha_j y_j K_ij - y_i.
    Also returns the bias midpoint consistent with the gap."""
    up, low = _up_low_masks(alpha, y, C)
    m = float((-G[up]).max()) if up.any() else -np.inf
    M = float((-G[low]).min()) if low.any() else np.inf
    bias = (m + M) / 2.0 if np.isfinite(m) and np.isfinite(M) else 0.0
    return m - M, bias


def svm_train(
    X: np.ndarray,
    y: np.ndarray,
    C: float = 1.0,
    gamma: float | None = None,
    coef0: float = 0.0,
    tol: float = 1e-3,
    max_passes: int = 1000,
    seed: int = 0,
) -> SvmModel:
    """Solve the soft-margin dual by SMO.

    Working pair: the maximal violator of the bias-free optimality gap,
    paired with the partner maximizing the error difference (the classic
    maximal-violating-pair rule), with a seeded-random fallback sweep when
    that partner makes no progress. Terminates when the gap drops below
    ``tol`` or after ``max_passes`` sweeps (then warns and returns the
    model anyway).
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if not np.all(np.isfinite(X)):
        raise NonFiniteFeature("training matrix contains non-finite values")
    if len(np.unique(y)) < 2:
        raise SingleClass("need at least one example of each class")
    if gamma is None:
        gamma = gamma_scale(X)
    n = len(y)
    rng = np.random.default_rng(seed)
    K = _kernel_matrix(X, X, gamma, coef0)
    alpha = np.zeros(n)
    G = -y.astype(float)  # bias-free errors: sum_j a_j y_j K_ij - y_i

    def delta_objective(i, j, aj_new):
        d_aj = aj_new - alpha[j]
        d_ai = -y[i] * y[j] * d_aj
        gi = G[i] + y[i]
        gj = G[j] + y[j]
        return (
            d_ai + d_aj
            - y[i] * d_ai * gi
            - y[j] * d_aj * gj
            - 0.5 * (d_ai**2 * K[i, i] + d_aj**2 * K[j, j])
            - d_ai * d_aj * y[i] * y[j] * K[i, j]
        )

    def take_step(i, j):
        if i == j:
            return False
        if y[i] != y[j]:
            L = max(0.0, alpha[j] - alpha[i])
            H = min(C, C + alpha[j] - alpha[i])
        else:
            L = max(0.0, alpha[i] + alpha[j] - C)
            H = min(C, alpha[i] + alpha[j])
        if H - L < 1e-12:
            return False
        eta = K[i, i] + K[j, j] - 2.0 * K[i, j]
        if eta > 1e-12:
            aj_new = alpha[j] + y[j] * (G[i] - G[j]) / eta
            aj_new = min(max(aj_new, L), H)
        else:
            # flat or concave direction: the dual is maximized at a bound
            dW_L = delta_objective(i, j, L)
            dW_H = delta_objective(i, j, H)
            if dW_L > dW_H and dW_L > 1e-12:
                aj_new = L
            elif dW_H >= dW_L and dW_H > 1e-12:
                aj_new = H
            else:
                return False
        d_aj = aj_new - alpha[j]
        if abs(d_aj) < 1e-12:
            return False
        d_ai = -y[i] * y[j] * d_aj
        G[:] += y[i] * d_ai * K[:, i] + y[j] * d_aj * K[:, j]
        alpha[i] += d_ai
        alpha[j] = aj_new
        return True

    def try_violator(i, partners):
        # prefer the largest error difference, then a seeded-random sweep
        order = partners[np.argsort(-np.abs(G[i] - G[partners]))]
        for j in order[: min(len(order), 8)]:
            if take_step(i, int(j)):
                return True
        for j in rng.permutation(n):
            if take_step(i, int(j)):
                return True
        return False

    max_iter = max_passes * n
    it = 0
    while it < max_iter:
        gap, _ = _kkt_gap(alpha, y, G, C)
        if gap <= tol:
            break
        up, low = _up_low_masks(alpha, y, C)
        up_idx = np.nonzero(up)[0]
        low_idx = np.nonzero(low)[0]
        i_up = int(up_idx[np.argmax(-G[up_idx])])
        i_low = int(low_idx[np.argmin(-G[low_idx])])
        if not (
            take_step(i_up, i_low)
            or try_violator(i_up, low_idx)
            or try_violator(i_low, up_idx)
        ):
            break  # no violating pair can move; stationary point
        it += 1

    gap, b = _kkt_gap(alpha, y, G, C)
    worst = max(0.0, gap)
    converged = gap <= tol
    if not converged:
        warnings.warn(
            f"SMO did not reach tol={tol}: max KKT violation {worst:.3e}",
            RuntimeWarning,
            stacklevel=2,
        )
    sv = alpha > 1e-12
    return SvmModel(
        support_vectors=X[sv].copy(),
        dual_coef=(alpha * y)[sv].copy(),
        bias=b,
        gamma=gamma,
        coef0=coef0,
        C=C,
        converged=converged,
        final_kkt_violation=worst,
    )


@dataclass
class MlpConfig:
    hidden: int = 100
    l2: float = 1e-4
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    max_epochs: int = 200
    batch_size: int = 200
    early_stop_tol: float = 1e-4
    patience: int = 10


@dataclass
class MlpModel:
    W1: np.ndarray  # (d, hidden)
    b1: np.ndarray  # (hidden,)
    W2: np.ndarray  # (hidden, 1)
    b2: np.ndarray  # (1,)
    config: MlpConfig = field(default_factory=MlpConfig)

    @property
    def dim(self) -> int:
        return self.W1.shape[0]


def mlp_forward(model: MlpModel, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    h = np.maximum(X @ model.W1 + model.b1, 0.0)
    out = h @ model.W2 + model.b2
    return h, out[:, 0]


def mlp_predict(model: MlpModel, x: np.ndarray) -> float:
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != model.dim:
        raise DimensionMismatch(f"expected dim {model.dim}, got {x.shape[-1]}")
    _, out = mlp_forward(model, x.reshape(1, -1))
    return float(out[0])


def mlp_loss_and_grads(model: MlpModel, X: np.ndarray, y: np.ndarray):
    """Half-MSE plus L2/(2n) penalty on the weight matrices, with analytic
    gradients for every parameter."""
    n = len(y)
    h = np.maximum(X @ model.W1 + model.b1, 0.0)
    pred = (h @ model.W2 + model.b2)[:, 0]
    resid = pred - y
    l2 = model.config.l2
    loss = 0.5 * float(np.mean(resid**2))
    loss += l2 / (2.0 * n) * (float(np.sum(model.W1**2)) + float(np.sum(model.W2**2)))

    d_out = (resid / n)[:, None]  # (n, 1)
    gW2 = h.T @ d_out + (l2 / n) * model.W2
    gb2 = d_out.sum(axis=0)
    d_h = d_out @ model.W2.T
    d_h[h <= 0.0] = 0.0
    gW1 = X.T @ d_h + (l2 / n) * model.W1
    gb1 = d_h.sum(axis=0)
    return loss, (gW1, gb1, gW2, gb2)


def _glorot_uniform(rng, fan_in, fan_out, shape):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def mlp_train(
    X: np.ndarray,
    y: np.ndarray,
    config: MlpConfig | None = None,
    seed: int = 0,
) -> MlpModel:
    """Train the regressor with adaptive-moment SGD and early stopping."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise NonFiniteFeature("training data contains non-finite values")
    if len(y) < 2:
        raise ValueError("need at least 2 examples")
    cfg = config or MlpConfig()
    n, d = X.shape
    rng = np.random.default_rng(seed)
    model = MlpModel(
        W1=_glorot_uniform(rng, d, cfg.hidden, (d, cfg.hidden)),
        b1=np.zeros(cfg.hidden),
        W2=_glorot_uniform(rng, cfg.hidden, 1, (cfg.hidden, 1)),
        b2=np.zeros(1),
        config=cfg,
    )
    params = [model.W1, model.b1, model.W2, model.b2]
    m = [np.zeros_like(p) for p in params]
    v = [np.zeros_like(p) for p in params]
    t = 0
    batch = min(cfg.batch_size, n)
    best_loss = np.inf
    stall = 0
    for _epoch in range(cfg.max_epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch):
            idx = order[start : start + batch]
            loss, grads = mlp_loss_and_grads(model, X[idx], y[idx])
            if not np.isfinite(loss):
                raise DivergenceDetected(f"loss became {loss}")
            t += 1
            for k, (p, g) in enumerate(zip(params, grads)):
                m[k] = cfg.beta1 * m[k] + (1 - cfg.beta1) * g
                v[k] = cfg.beta2 * v[k] + (1 - cfg.beta2) * g * g
                m_hat = m[k] / (1 - cfg.beta1**t)
                v_hat = v[k] / (1 - cfg.beta2**t)
                p -= cfg.lr * m_hat / (np.sqrt(v_hat) + cfg.eps)
        epoch_loss, _ = mlp_loss_and_grads(model, X, y)
        if not np.isfinite(epoch_loss):
            raise DivergenceDetected(f"loss became {epoch_loss}")
        if best_loss - epoch_loss > cfg.early_stop_tol:
            best_loss = epoch_loss
            stall = 0
        else:
            stall += 1
            if stall >= cfg.patience:
                break
    return model
