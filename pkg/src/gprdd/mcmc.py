"""Adaptive random-walk Metropolis and convergence diagnostics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class ChainResult:
    samples: np.ndarray  # (n_keep, d)
    aux: list  # per kept draw, whatever the target returned alongside log p
    logp: np.ndarray
    accept_rate: float  # post-warmup
    warmup_accept_rate: float
    proposal_cov: np.ndarray


def adaptive_metropolis(
    target,
    z0,
    cov0,
    n_iter: int,
    n_warmup: int,
    rng: np.random.Generator,
    target_accept: float = 0.3,
    thin: int = 1,
) -> ChainResult:
    """Run one chain.

    ``target(z)`` returns ``(log_density, aux)``. During warmup the proposal
    covariance tracks the empirical covariance of the chain (each coordinate
    keeps its own scale, correlations are learned too) and a global step
    multiplier is tuned by Robbins-Monro toward ``target_accept``. Both are
    frozen afterwards, so kept draws come from a fixed Metropolis kernel.
    """
    z = np.array(z0, dtype=float)
    d = z.size
    logp, aux = target(z)
    if not np.isfinite(logp):
        raise ValueError("chain started at a point of zero density")

    cov = np.array(cov0, dtype=float).reshape(d, d)
    chol = _safe_chol(cov)
    log_scale = np.log(2.38 / np.sqrt(max(d, 1)))
    mean_acc = np.zeros(d)
    m2_acc = np.zeros((d, d))
    n_acc = 0
    adapt_start = min(100, n_warmup // 4)
    adapt_every = 25

    kept, kept_aux, kept_logp = [], [], []
    accepts_post = accepts_warm = 0
    for t in range(n_iter):
        step = np.exp(log_scale) * (chol @ rng.standard_normal(d))
        prop = z + step
        logp_prop, aux_prop = target(prop)
        log_u = np.log(rng.uniform())
        log_ratio = logp_prop - logp if np.isfinite(logp_prop) else -np.inf
        accepted = log_u < log_ratio
        if accepted:
            z, logp, aux = prop, logp_prop, aux_prop

        if t < n_warmup:
            accepts_warm += accepted
            alpha = float(np.exp(min(0.0, log_ratio)))
            log_scale += (alpha - target_accept) / (t + 1) ** 0.6
            # Welford update of the chain's running covariance
            n_acc += 1
            delta = z - mean_acc
            mean_acc += delta / n_acc
            m2_acc += np.outer(delta, z - mean_acc)
            if t >= adapt_start and (t - adapt_start) % adapt_every == 0 and n_acc > d + 1:
                emp = m2_acc / (n_acc - 1)
                chol = _safe_chol(emp + 1e-8 * np.eye(d))
        else:
            accepts_post += accepted
            if (t - n_warmup) % thin == 0:
                kept.append(z.copy())
                kept_aux.append(aux)
                kept_logp.append(logp)

    n_post = n_iter - n_warmup
    return ChainResult(
        samples=np.array(kept).reshape(len(kept), d),
        aux=kept_aux,
        logp=np.array(kept_logp),
        accept_rate=accepts_post / n_post if n_post else float("nan"),
        warmup_accept_rate=accepts_warm / n_warmup if n_warmup else float("nan"),
        proposal_cov=np.exp(2 * log_scale) * chol @ chol.T,
    )


def _safe_chol(cov):
    d = cov.shape[0]
    if d == 0:
        return np.zeros((0, 0))
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        return np.diag(np.sqrt(np.clip(np.diag(cov), 1e-10, None)))


def split_rhat(chains) -> float:
    """Split R-hat (Gelman et al., BDA3) for draws of shape ``(m, n)``."""
    chains = np.asarray(chains, dtype=float)
    if chains.ndim == 1:
        chains = chains[None, :]
    m, n = chains.shape
    half = n // 2
    if half < 2:
        return float("nan")
    split = np.concatenate([chains[:, :half], chains[:, n - half:]], axis=0)
    within = split.var(axis=1, ddof=1).mean()
    between = half * split.mean(axis=1).var(ddof=1)
    if within == 0:
        return 1.0 if between == 0 else float("inf")
    var_plus = (half - 1) / half * within + between / half
    return float(np.sqrt(var_plus / within))


def effective_sample_size(chains) -> float:
    """Multi-chain ESS with Geyer's initial monotone sequence truncation."""
    chains = np.asarray(chains, dtype=float)
    if chains.ndim == 1:
        chains = chains[None, :]
    m, n = chains.shape
    if n < 4:
        return float(m * n)
    centered = chains - chains.mean(axis=1, keepdims=True)
    nfft = 1 << (2 * n - 1).bit_length()
    spec = np.fft.rfft(centered, nfft, axis=1)
    acov = np.fft.irfft(spec * np.conj(spec), nfft, axis=1)[:, :n] / n
    chain_var = acov[:, 0] * n / (n - 1)
    within = chain_var.mean()
    var_plus = within * (n - 1) / n
    if m > 1:
        var_plus += chains.mean(axis=1).var(ddof=1)
    if var_plus <= 0:
        return float(m * n)
    rho = 1.0 - (within - acov.mean(axis=0)) / var_plus
    rho[0] = 1.0
    # pair sums, truncated at the first non-positive pair and made monotone
    pairs = rho[: n - n % 2].reshape(-1, 2).sum(axis=1)
    positive = np.flatnonzero(pairs <= 0)
    k = positive[0] if positive.size else pairs.size
    pairs = np.minimum.accumulate(pairs[:k]) if k else pairs[:0]
    tau = -1.0 + 2.0 * pairs.sum()
    tau = max(tau, 1.0 / np.log10(m * n + 10))
    return float(m * n / tau)
