"""Rank-objective matrix factorization.

The performance matrix is factorized so that the inner products U_i . V_j
reproduce each row's *ranking* rather than its values: the objective is the
row-wise discounted cumulative gain, smoothed by replacing the pairwise rank
indicators with sigmoids so it becomes differentiable.

Conventions
-----------
An item's smoothed rank is 1 (itself) plus sigmoid(alpha * (phat_k - phat_j))
summed over the other items, so the smoothed objective converges to the exact
DCG as alpha grows.  The gradient of the smoothed loss with respect to a
model vector V_j includes the cross terms that arise because V_j appears in
every other item's smoothed rank; the variant without those cross terms is
kept behind ``v_gradient="printed"`` for comparison experiments but is not an
exact derivative.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .errors import InvalidConfigError, NonFiniteLossError

LN2 = math.log(2.0)


@dataclass(frozen=True)
class OptimizerConfig:
    b: float = 2.0
    alpha: float = 1.0
    lr_base: float = 0.01
    lr_max: float = 0.1
    cycle_len: int = 10
    max_epochs: int = 50
    tol: float = 1e-4
    seed: int = 0
    update_u: bool = True
    v_gradient: str = "complete"

    def __post_init__(self):
        if self.b <= 1.0:
            raise InvalidConfigError("b must be > 1")
        if self.alpha <= 0.0:
            raise InvalidConfigError("alpha must be > 0")
        if not 0.0 < self.lr_base <= self.lr_max:
            raise InvalidConfigError("need 0 < lr_base <= lr_max")
        if self.cycle_len < 1 or self.max_epochs < 0:
            raise InvalidConfigError("cycle_len must be >= 1 and max_epochs >= 0")
        if self.tol <= 0.0:
            raise InvalidConfigError("tol must be > 0")
        if self.v_gradient not in ("complete", "printed"):
            raise InvalidConfigError("v_gradient must be 'complete' or 'printed'")


@dataclass
class LatentFactors:
    U: np.ndarray
    V: np.ndarray
    k: int
    loss_curve: list = field(default_factory=list)


def dcg_exact(p_row, p_hat_row, b: float = 2.0) -> float:
    """Exact row DCG of the ranking induced by predictions.

    rank_j = 1 + #{k: phat_k > phat_j}, with ties broken in favor of the
    smaller model index.
    """
    p = np.asarray(p_row, dtype=np.float64)
    phat = np.asarray(p_hat_row, dtype=np.float64)
    m = p.size
    greater = (phat[None, :] > phat[:, None]).sum(axis=1)
    tie_earlier = np.array([
        int(np.sum(phat[:j] == phat[j])) for j in range(m)
    ])
    ranks = 1 + greater + tie_earlier
    gains = b ** p - 1.0
    return float(np.sum(gains / np.log2(1.0 + ranks)))


def _smoothed_rank_terms(phat: np.ndarray, alpha: float):
    # W[j, k] = alpha * (phat_k - phat_j); sig[j, j] is never used: the
    # self-comparison counts exactly 1 in the smoothed rank.
    W = alpha * (phat[None, :] - phat[:, None])
    sig = expit(W)
    off_sum = sig.sum(axis=1) - 0.5
    beta = 2.0 + off_sum
    return W, sig, beta


def sdcg(p_row, p_hat_row, b: float = 2.0, alpha: float = 1.0) -> float:
    """Smoothed row DCG; converges to dcg_exact as alpha grows (no ties)."""
    p = np.asarray(p_row, dtype=np.float64)
    phat = np.asarray(p_hat_row, dtype=np.float64)
    gains = b ** p - 1.0
    _, _, beta = _smoothed_rank_terms(phat, alpha)
    return float(np.sum(gains / np.log2(beta)))


def _row_grad_common(p_row, u, V, b, alpha):
    phat = V @ u
    gains = b ** p_row - 1.0
    W, sig, beta = _smoothed_rank_terms(phat, alpha)
    sig_prime = sig * (1.0 - sig)
    row_full = sig_prime.sum(axis=1)      # includes the constant diagonal 1/4
    row_off = row_full - 0.25
    log_beta = np.log(beta)
    coeff = gains / (beta * log_beta * log_beta)
    return sig_prime, row_full, row_off, coeff


def grad_u_row(p_row, u, V, b: float, alpha: float) -> np.ndarray:
    """Gradient of -sdcg for one row with respect to its dataset vector."""
    m = V.shape[0]
    if m < 2:
        return np.zeros_like(u)
    sig_prime, row_full, _, coeff = _row_grad_common(p_row, u, V, b, alpha)
    # sum_{k != j} sig'(w_jk) (V_k - V_j) = (sig' V)_j - (full row sum)_j V_j
    inner = coeff @ (sig_prime @ V) - (coeff * row_full) @ V
    return LN2 * alpha * inner


def grad_v_rows(p_row, u, V, b: float, alpha: float, mode: str = "complete") -> np.ndarray:
    """Gradient of -sdcg for one row with respect to every model vector.

    The complete derivative has, for each j, a term from j's own smoothed
    rank and cross terms from every other item's rank in which V_j appears.
    """
    m = V.shape[0]
    if m < 2:
        return np.zeros_like(V)
    sig_prime, _, row_off, coeff = _row_grad_common(p_row, u, V, b, alpha)
    own = -coeff * row_off
    if mode == "complete":
        cross = coeff @ sig_prime - coeff * 0.25
        scale = own + cross
    else:
        scale = own
    return LN2 * alpha * np.outer(scale, u)


def grad_u(i: int, P, U, V, cfg: OptimizerConfig) -> np.ndarray:
    """Gradient of the loss contribution of dataset i with respect to U_i."""
    P = np.asarray(P, dtype=np.float64)
    return grad_u_row(P[i], np.asarray(U)[i], np.asarray(V), cfg.b, cfg.alpha)


def grad_v(i: int, j: int, P, U, V, cfg: OptimizerConfig) -> np.ndarray:
    """Gradient of the loss contribution of dataset i with respect to V_j."""
    P = np.asarray(P, dtype=np.float64)
    rows = grad_v_rows(P[i], np.asarray(U)[i], np.asarray(V), cfg.b, cfg.alpha, cfg.v_gradient)
    return rows[j]


def total_loss(P, U, V, cfg: OptimizerConfig) -> float:
    P = np.asarray(P, dtype=np.float64)
    U = np.asarray(U)
    V = np.asarray(V)
    return float(sum(-sdcg(P[i], V @ U[i], cfg.b, cfg.alpha) for i in range(P.shape[0])))


def cyclical_lr(cfg: OptimizerConfig, epoch: int) -> float:
    """Triangular schedule oscillating lr_base -> lr_max -> lr_base per cycle."""
    if cfg.cycle_len == 1:
        return cfg.lr_base
    pos = epoch % cfg.cycle_len
    half = cfg.cycle_len / 2.0
    frac = 1.0 - abs(pos / half - 1.0)
    return cfg.lr_base + (cfg.lr_max - cfg.lr_base) * frac


def fit(P, U0, cfg: OptimizerConfig) -> LatentFactors:
    """Alternating SGD over dataset rows; returns the best-loss factors.

    V starts from a seeded standard normal; the dataset order is reshuffled
    each epoch; the learning rate follows the triangular cyclical schedule.
    Stops when the relative loss change drops below cfg.tol.
    """
    P = np.asarray(P, dtype=np.float64)
    U0 = np.asarray(U0, dtype=np.float64)
    n, m = P.shape
    if U0.shape[0] != n or U0.ndim != 2:
        raise InvalidConfigError(f"U0 must be ({n}, k), got {U0.shape}")
    if not np.all(np.isfinite(U0)):
        raise InvalidConfigError("U0 must be finite")
    k = U0.shape[1]
    rng = np.random.default_rng(cfg.seed)
    V = rng.standard_normal((m, k))
    U = U0.copy()

    losses: list[float] = []
    best_loss = math.inf
    best = (U.copy(), V.copy())  # max_epochs=0 returns the initial factors
    prev = None
    for epoch in range(cfg.max_epochs):
        lr = cyclical_lr(cfg, epoch)
        for i in rng.permutation(n):
            if cfg.update_u:
                U[i] -= lr * grad_u_row(P[i], U[i], V, cfg.b, cfg.alpha)
            V -= lr * grad_v_rows(P[i], U[i], V, cfg.b, cfg.alpha, cfg.v_gradient)
        loss = total_loss(P, U, V, cfg)
        if not math.isfinite(loss) or not np.all(np.isfinite(U)) or not np.all(np.isfinite(V)):
            raise NonFiniteLossError(
                f"loss diverged at epoch {epoch}; lower lr_max (was {cfg.lr_max})"
            )
        losses.append(loss)
        if loss < best_loss:
            best_loss = loss
            best = (U.copy(), V.copy())
        if prev is not None and abs(prev - loss) <= cfg.tol * max(1.0, abs(prev)):
            break
        prev = loss
    return LatentFactors(best[0], best[1], k, losses)
