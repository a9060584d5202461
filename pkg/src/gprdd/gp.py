"""Squared-exponential Gaussian process primitives.

Everything here is a pure function of immutable inputs. Linear systems are
solved through a Cholesky factor of the noisy Gram matrix; a small diagonal
jitter proportional to the kernel variance is always present and is
escalated tenfold at a time when the factorization fails.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import lapack, solve_triangular

from .errors import FactorizationFailure

#: Diagonal jitter relative to the kernel variance, first attempt.
JITTER_START = 1e-8
#: Largest relative jitter tried before giving up.
JITTER_MAX = 1e-2

_LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class KernelParams:
    """Squared-exponential kernel parameters.

    ``noise`` may be zero (noiseless interpolation); the other two must be
    strictly positive.
    """

    lengthscale: float
    variance: float
    noise: float

    def __post_init__(self):
        vals = (self.lengthscale, self.variance, self.noise)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError(f"kernel parameters must be finite, got {vals}")
        if self.lengthscale <= 0 or self.variance <= 0:
            raise ValueError("lengthscale and variance must be > 0")
        if self.noise < 0:
            raise ValueError("noise variance must be >= 0")

    @property
    def log_params(self) -> np.ndarray:
        return np.log([self.lengthscale, self.variance, self.noise])

    @classmethod
    def from_log(cls, z) -> "KernelParams":
        ell, var, noise = np.exp(np.asarray(z, dtype=float))
        return cls(float(ell), float(var), float(noise))


@dataclass(frozen=True)
class MeanBasis:
    """Polynomial mean ``h(x)^T beta`` with ``h(x) = (1, x, ..., x^(p-1))``.

    ``p = 0`` is the zero mean function.
    """

    coefficients: tuple = ()

    def __post_init__(self):
        coefs = tuple(float(c) for c in np.atleast_1d(self.coefficients))
        if not all(math.isfinite(c) for c in coefs):
            raise ValueError("mean coefficients must be finite")
        object.__setattr__(self, "coefficients", coefs)

    @property
    def order(self) -> int:
        return len(self.coefficients)

    @classmethod
    def zero(cls) -> "MeanBasis":
        return cls(())

    def design(self, x) -> np.ndarray:
        return design_matrix(x, self.order)

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.order == 0:
            return np.zeros_like(x)
        return design_matrix(x, self.order) @ np.asarray(self.coefficients)


def design_matrix(x, order: int) -> np.ndarray:
    """Columns ``1, x, ..., x^(order-1)``; shape ``(n, order)``."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    return np.vander(x, order, increasing=True) if order else np.empty((x.size, 0))


@dataclass(frozen=True)
class GPConditional:
    mean: float
    variance: float


def kernel_eval(x_i: float, x_j: float, k: KernelParams) -> float:
    d = x_i - x_j
    return k.variance * math.exp(-d * d / (2.0 * k.lengthscale**2))


def cross_kernel(xa, xb, k: KernelParams) -> np.ndarray:
    xa = np.atleast_1d(np.asarray(xa, dtype=float))
    xb = np.atleast_1d(np.asarray(xb, dtype=float))
    d2 = (xa[:, None] - xb[None, :]) ** 2
    return k.variance * np.exp(d2 * (-0.5 / k.lengthscale**2))


def gram_matrix(xs, k: KernelParams, add_noise: bool = True, jitter: float | None = None) -> np.ndarray:
    """Kernel matrix over ``xs`` with ``(noise + jitter)`` on the diagonal.

    ``jitter`` defaults to ``JITTER_START * variance`` and is always added;
    the noise variance only when ``add_noise`` is set.
    """
    xs = np.atleast_1d(np.asarray(xs, dtype=float))
    return _gram_from_sqdist(_sqdist(xs), k, add_noise, jitter)


def _sqdist(xs: np.ndarray) -> np.ndarray:
    diff = xs[:, None] - xs[None, :]
    return diff * diff


def _gram_from_sqdist(d2, k: KernelParams, add_noise=True, jitter=None):
    if jitter is None:
        jitter = JITTER_START * k.variance
    gram = np.multiply(d2, -0.5 / k.lengthscale**2)
    np.exp(gram, out=gram)
    gram *= k.variance
    diag = jitter + (k.noise if add_noise else 0.0)
    gram.flat[:: gram.shape[0] + 1] += diag
    return gram


def _potrf_inplace(sym: np.ndarray):
    # sym is C-ordered and symmetric, so its transpose is a Fortran-ordered
    # view of the same matrix that LAPACK factors without copying
    return lapack.dpotrf(sym.T, lower=1, clean=1, overwrite_a=1)


def stable_cholesky(matrix: np.ndarray, scale: float) -> tuple[np.ndarray, float]:
    """Lower Cholesky factor of ``matrix``, adding jitter if needed.

    ``matrix`` is expected to already carry ``JITTER_START * scale`` on the
    diagonal. Returns the factor and the total relative jitter used.
    """
    if not np.all(np.isfinite(matrix)):
        raise FactorizationFailure("covariance matrix has non-finite entries")
    rel = JITTER_START
    work = matrix.copy()
    while True:
        chol, info = _potrf_inplace(work)
        if info == 0:
            return chol, rel
        if info < 0:
            raise FactorizationFailure(f"dpotrf rejected argument {-info}")
        if rel * 10 > JITTER_MAX * (1 + 1e-12):
            raise FactorizationFailure(
                f"matrix of size {matrix.shape[0]} not positive definite "
                f"with relative jitter up to {JITTER_MAX:g}"
            )
        extra = (rel * 10 - JITTER_START) * scale
        rel *= 10
        work = matrix.copy()
        work.flat[:: work.shape[0] + 1] += extra


@dataclass(frozen=True)
class Factorization:
    """Cholesky factor of ``K(x, x) + (noise + jitter) I`` for one arm."""

    x: np.ndarray
    kernel: KernelParams
    chol: np.ndarray
    jitter: float  # relative, as returned by stable_cholesky
    sqdist: np.ndarray = field(repr=False)

    @property
    def n(self) -> int:
        return self.x.size

    def solve(self, rhs):
        out, info = lapack.dpotrs(self.chol, rhs, lower=1)
        if info != 0:
            raise FactorizationFailure(f"dpotrs failed with info={info}")
        return out

    def inverse(self) -> np.ndarray:
        """Dense inverse from the factor (LAPACK potri); used only where a
        full trace term needs every entry."""
        inv, info = lapack.dpotri(self.chol, lower=1)
        if info != 0:
            raise FactorizationFailure(f"dpotri failed with info={info}")
        return np.tril(inv) + np.tril(inv, -1).T

    def half_solve(self, rhs):
        """``L^{-1} rhs``."""
        return solve_triangular(self.chol, rhs, lower=True, check_finite=False)

    def logdet(self) -> float:
        return 2.0 * float(np.sum(np.log(np.diag(self.chol))))


def factorize(xs, k: KernelParams, sqdist: np.ndarray | None = None) -> Factorization:
    xs = np.atleast_1d(np.asarray(xs, dtype=float))
    if sqdist is None:
        sqdist = _sqdist(xs)
    gram = _gram_from_sqdist(sqdist, k, add_noise=True)
    if not np.all(np.isfinite(gram)):
        raise FactorizationFailure("covariance matrix has non-finite entries")
    chol, info = _potrf_inplace(gram)
    rel = JITTER_START
    if info != 0:
        chol, rel = stable_cholesky(_gram_from_sqdist(sqdist, k, add_noise=True), k.variance)
    return Factorization(xs, k, chol, rel, sqdist)


def gp_predict(xs, ys, mean_fn: MeanBasis, k: KernelParams, x_star, fact: Factorization | None = None):
    """Posterior means and variances of ``f`` at each point of ``x_star``."""
    xs = np.atleast_1d(np.asarray(xs, dtype=float))
    ys = np.atleast_1d(np.asarray(ys, dtype=float))
    x_star = np.atleast_1d(np.asarray(x_star, dtype=float))
    if xs.shape != ys.shape:
        raise ValueError("xs and ys must have the same length")
    prior_mean = mean_fn(x_star)
    if xs.size == 0:
        return prior_mean, np.full(x_star.shape, k.variance)
    if fact is None:
        fact = factorize(xs, k)
    k_star = cross_kernel(xs, x_star, k)  # (n, m)
    alpha = fact.solve(ys - mean_fn(xs))
    v = fact.half_solve(k_star)
    mean = prior_mean + k_star.T @ alpha
    var = k.variance - np.einsum("ij,ij->j", v, v)
    return mean, var


def gp_conditional(xs, ys, mean_fn: MeanBasis, k: KernelParams, x_star: float) -> GPConditional:
    mean, var = gp_predict(xs, ys, mean_fn, k, [x_star])
    return GPConditional(float(mean[0]), float(var[0]))


def marginal_loglik(xs, ys, mean_fn: MeanBasis, k: KernelParams, fact: Factorization | None = None) -> float:
    """``log N(ys | m(xs), K(xs, xs) + noise I)``."""
    xs = np.atleast_1d(np.asarray(xs, dtype=float))
    ys = np.atleast_1d(np.asarray(ys, dtype=float))
    if xs.size == 0:
        raise ValueError("marginal likelihood needs at least one observation")
    if fact is None:
        fact = factorize(xs, k)
    resid = ys - mean_fn(xs)
    white = fact.half_solve(resid)
    return float(-0.5 * white @ white - 0.5 * fact.logdet() - 0.5 * xs.size * _LOG_2PI)


def marginal_loglik_grad(xs, ys, mean_fn: MeanBasis, k: KernelParams, fact: Factorization | None = None):
    """Value and gradient w.r.t. ``(log lengthscale, log variance, log noise)``.

    The jitter scales with the kernel variance, so its derivative is folded
    into the variance direction.
    """
    xs = np.atleast_1d(np.asarray(xs, dtype=float))
    ys = np.atleast_1d(np.asarray(ys, dtype=float))
    if fact is None:
        fact = factorize(xs, k)
    n = xs.size
    resid = ys - mean_fn(xs)
    alpha = fact.solve(resid)
    value = float(-0.5 * resid @ alpha - 0.5 * fact.logdet() - 0.5 * n * _LOG_2PI)

    kern = k.variance * np.exp(fact.sqdist * (-0.5 / k.lengthscale**2))
    a_inv = fact.inverse()
    inner = np.outer(alpha, alpha) - a_inv

    d_ell = kern * (fact.sqdist / k.lengthscale**2)
    d_var = kern.copy()
    d_var.flat[:: n + 1] += fact.jitter * k.variance
    grad = np.array([
        0.5 * np.sum(inner * d_ell),
        0.5 * np.sum(inner * d_var),
        0.5 * k.noise * np.trace(inner),
    ])
    return value, grad
