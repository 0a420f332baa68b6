"""Loss terms on simplex-valued network outputs, each with its analytic gradient.

Conventions: ``Z`` holds g(x_i) for a mini-batch, ``Zt`` holds g(t_i(x_i)) for
the sampled transformations, both of shape (m, C). Values are in nats.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from . import model as mlp

EPS_NUM = 1e-12
LOG_EPS = math.log(EPS_NUM)


@dataclass(frozen=True)
class CriticConfig:
    alpha: float = 1.0
    tau: float = 0.05

    def __post_init__(self):
        if self.tau < 0:
            raise ValueError(f"tau must be nonnegative, got {self.tau}")
        if self.alpha != 1 and self.tau > 1.0 / abs(1.0 - self.alpha) + 1e-12:
            raise ValueError(f"tau={self.tau} violates tau <= 1/|1-alpha| for alpha={self.alpha}")


def exp_alpha(u, alpha: float):
    """Deformed exponential [1 + (1-alpha) u]_+^(1/(1-alpha)); e^u at alpha = 1."""
    u = np.asarray(u, dtype=np.float64)
    if alpha == 1:
        return np.exp(u)
    base = np.maximum(1.0 + (1.0 - alpha) * u, 0.0)
    with np.errstate(divide="ignore"):
        return base ** (1.0 / (1.0 - alpha))


def _critic_from_dot(s: np.ndarray, cfg: CriticConfig):
    """q as a function of s = z.z', with dq/ds and the mask of floored entries."""
    u = cfg.tau * (s - 1.0)
    if cfg.alpha == 1:
        return u, np.full_like(u, cfg.tau), np.zeros(u.shape, dtype=bool)
    base = 1.0 + (1.0 - cfg.alpha) * u
    with np.errstate(divide="ignore", invalid="ignore"):
        logq = np.where(base > 0, np.log(np.where(base > 0, base, 1.0)) / (1.0 - cfg.alpha), -np.inf)
    if cfg.alpha > 1:
        # base <= 0 sends exp_alpha to +inf; unreachable for s <= 1 but kept explicit.
        logq = np.where(base > 0, logq, np.inf)
    floored = logq < LOG_EPS
    q = np.where(floored, LOG_EPS, logq)
    with np.errstate(divide="ignore", invalid="ignore"):
        dq = np.where(floored | (base <= 0), 0.0, cfg.tau / np.where(base > 0, base, 1.0))
    return q, dq, floored


def _check_simplex(z: np.ndarray, tol: float = 1e-6) -> None:
    if np.any(z < -tol) or np.any(np.abs(z.sum(axis=-1) - 1.0) > tol):
        raise ValueError("inputs must lie on the probability simplex")


def critic(z, zp, cfg: CriticConfig) -> float:
    """q(z, z') = log exp_alpha(tau (z.z' - 1)), floored at log(1e-12)."""
    z = np.asarray(z, dtype=np.float64)
    zp = np.asarray(zp, dtype=np.float64)
    _check_simplex(z)
    _check_simplex(zp)
    q, _, _ = _critic_from_dot(np.asarray(z @ zp), cfg)
    return float(q)


def critic_matrix(Z: np.ndarray, Zt: np.ndarray, cfg: CriticConfig):
    """Q[i, j] = q(Z_i, Zt_j) with dq/ds and floor mask."""
    return _critic_from_dot(Z @ Zt.T, cfg)


def infonce_hat(Z, Zt, cfg: CriticConfig) -> float:
    """Empirical InfoNCE with z_i as anchor and z'_j (j = 1..m) as candidates; <= log m."""
    Z = np.asarray(Z, dtype=np.float64)
    Zt = np.asarray(Zt, dtype=np.float64)
    m = Z.shape[0]
    if m < 2 or Zt.shape[0] != m:
        raise ValueError("InfoNCE needs matching batches of at least 2 rows")
    Q, _, _ = critic_matrix(Z, Zt, cfg)
    return float(np.mean(np.diag(Q) - logsumexp(Q, axis=1)) + math.log(m))


@dataclass
class ContrastiveTerms:
    l_ps: float
    l_ng: float
    i_nce: float
    i_nce_prime: float
    floored: int
    pointwise_ps: np.ndarray
    pointwise_ng: np.ndarray
    # gradients w.r.t. Z and Zt of L_ps + L_ng and of -I_nce
    dsym_dZ: np.ndarray = None
    dsym_dZt: np.ndarray = None
    dplain_dZ: np.ndarray = None
    dplain_dZt: np.ndarray = None


def contrastive_terms(Z: np.ndarray, Zt: np.ndarray, cfg: CriticConfig, grads: bool = True) -> ContrastiveTerms:
    """L_ps, L_ng, both InfoNCE directions, point-wise diagnostics and gradients.

    With Q[i, j] = q(z_i, z'_j), row log-sum-exps give I_nce and column
    log-sum-exps give I'_nce (anchor z'_i against all z_i'). The negative loss
    is the mean of (row LSE_i + column LSE_i) / 2.
    """
    m = Z.shape[0]
    if m < 2 or Zt.shape[0] != m:
        raise ValueError("contrastive terms need matching batches of at least 2 rows")
    Q, dq, floored = critic_matrix(Z, Zt, cfg)
    diag = np.diag(Q)
    row_lse = logsumexp(Q, axis=1)
    col_lse = logsumexp(Q, axis=0)
    ps = -diag
    ng = 0.5 * (row_lse + col_lse)
    out = ContrastiveTerms(
        l_ps=float(ps.mean()),
        l_ng=float(ng.mean()),
        i_nce=float(np.mean(diag - row_lse) + math.log(m)),
        i_nce_prime=float(np.mean(diag - col_lse) + math.log(m)),
        floored=int(floored.sum()),
        pointwise_ps=ps,
        pointwise_ng=ng,
    )
    if grads:
        P_row = np.exp(Q - row_lse[:, None])  # softmax over j for each anchor row
        P_col = np.exp(Q - col_lse[None, :])  # softmax over i for each anchor column
        eye = np.eye(m)
        dQ_sym = (-eye + 0.5 * P_row + 0.5 * P_col) / m
        dQ_plain = (-eye + P_row) / m
        for name, dQ in (("sym", dQ_sym), ("plain", dQ_plain)):
            G = dQ * dq
            setattr(out, f"d{name}_dZ", G @ Zt)
            setattr(out, f"d{name}_dZt", G.T @ Z)
    return out


def symmetric_decomposition(Z, Zt, cfg: CriticConfig) -> tuple[float, float]:
    t = contrastive_terms(np.asarray(Z, float), np.asarray(Zt, float), cfg, grads=False)
    return t.l_ps, t.l_ng


def _xlogx(p: np.ndarray) -> np.ndarray:
    return p * np.log(np.maximum(p, EPS_NUM))


def marginal_entropy(Z) -> float:
    """H(Y) of the batch-mean prediction."""
    pbar = np.asarray(Z, dtype=np.float64).mean(axis=0)
    return float(-_xlogx(pbar).sum())


def conditional_entropy(Z) -> float:
    """H(Y|X): mean per-row entropy."""
    Z = np.asarray(Z, dtype=np.float64)
    return float(-_xlogx(Z).sum() / Z.shape[0])


def marginal_entropy_grad(Z: np.ndarray) -> np.ndarray:
    pbar = Z.mean(axis=0)
    g = -(np.log(np.maximum(pbar, EPS_NUM)) + 1.0) * (pbar > EPS_NUM)
    return np.broadcast_to(g / Z.shape[0], Z.shape).copy()


def conditional_entropy_grad(Z: np.ndarray) -> np.ndarray:
    return -(np.log(np.maximum(Z, EPS_NUM)) + 1.0) * (Z > EPS_NUM) / Z.shape[0]


def kl_div(p, phat) -> float:
    p = np.asarray(p, dtype=np.float64)
    phat = np.asarray(phat, dtype=np.float64)
    return float(np.sum(p * (np.log(np.maximum(p, EPS_NUM)) - np.log(np.maximum(phat, EPS_NUM))), axis=-1))


def _kl_rows(P: np.ndarray, Phat: np.ndarray) -> np.ndarray:
    return np.sum(P * (np.log(np.maximum(P, EPS_NUM)) - np.log(np.maximum(Phat, EPS_NUM))), axis=1)


def _kl_grad_phat(P: np.ndarray, Phat: np.ndarray) -> np.ndarray:
    return -P / np.maximum(Phat, EPS_NUM) * (Phat > EPS_NUM)


def unit_rows(v: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(v, axis=1, keepdims=True)
    return v / np.where(norms > 0, norms, 1.0)


def vat_direction(state: mlp.MlpState, x: np.ndarray, z_clean: np.ndarray, xi: float,
                  rng: np.random.Generator) -> np.ndarray:
    """Unit adversarial directions from one power-iteration step.

    Falls back to the random probe direction for rows whose KL gradient is exactly zero.
    """
    u = unit_rows(rng.standard_normal(x.shape))
    zp, cache = mlp.forward(state, x + xi * u, train=True, update_running_stats=False)
    _, v = mlp.backward(state, cache, _kl_grad_phat(z_clean, zp) / x.shape[0], need_params=False)
    norms = np.linalg.norm(v, axis=1, keepdims=True)
    return np.where(norms > 0, v / np.where(norms > 0, norms, 1.0), u)


def vat_loss(state: mlp.MlpState, x: np.ndarray, radii: np.ndarray, xi: float,
             rng: np.random.Generator, z_clean=None, r_adv=None):
    """Return ``(R_vat, param_grads, r_adv)``.

    ``z_clean`` (the frozen prediction at x) and ``r_adv`` are treated as
    constants; pass ``r_adv`` to evaluate at a fixed perturbation.
    """
    if xi <= 0:
        raise ValueError(f"xi must be positive, got {xi}")
    x = np.asarray(x, dtype=state.dtype)
    m = x.shape[0]
    if z_clean is None:
        z_clean, _ = mlp.forward(state, x, train=True, update_running_stats=False)
    if r_adv is None:
        direction = vat_direction(state, x, z_clean, xi, rng)
        r_adv = np.asarray(radii, dtype=state.dtype).reshape(-1, 1) * direction
    z_adv, cache = mlp.forward(state, x + r_adv, train=True, update_running_stats=False)
    r = float(_kl_rows(z_clean, z_adv).mean())
    grads, _ = mlp.backward(state, cache, _kl_grad_phat(z_clean, z_adv) / m)
    return r, grads, r_adv
