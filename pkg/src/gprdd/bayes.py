"""Full-Bayes and maximum-likelihood inference over mean and kernel parameters.

Sampling happens in the transformed space ``(log lengthscale, log variance,
log noise)`` per kernel. The polynomial mean coefficients have a Gaussian
prior, so they are integrated out of the likelihood while the kernel
parameters are sampled and then drawn exactly from their Gaussian
conditional for every kept kernel draw. The result is a draw from the joint
posterior, obtained with a three- (or six-) dimensional random walk.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize
from scipy.linalg import solve_triangular

from .errors import FactorizationFailure, NonConvergence, OptimizationFailure
from .gp import KernelParams, MeanBasis, design_matrix, factorize, marginal_loglik
from .mcmc import adaptive_metropolis, effective_sample_size, split_rhat
from .model import Arm, Assumption, ModelSpec, RddDataset, tau_conditional

BASE_NAMES = ("lengthscale", "variance", "noise")
_LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class PriorSpec:
    """Normal prior on mean coefficients, half-Cauchy on kernel parameters.

    With ``lengthscale_prior="inverse-square"`` the half-Cauchy sits on
    ``1 / lengthscale**2``; ``"lengthscale"`` puts it on the lengthscale
    itself.
    """

    beta_prior_sd: float = 100.0
    hc_scale: float = 5.0
    lengthscale_prior: str = "inverse-square"

    def __post_init__(self):
        if not (self.beta_prior_sd > 0 and self.hc_scale > 0):
            raise ValueError("prior scales must be positive")
        if self.lengthscale_prior not in ("inverse-square", "lengthscale"):
            raise ValueError(f"unknown lengthscale prior {self.lengthscale_prior!r}")


@dataclass(frozen=True)
class MCMCConfig:
    chains: int = 4
    iterations: int = 2000
    warmup: int = 1000
    seed: int = 0
    thin: int = 1
    target_accept: float = 0.3
    rhat_threshold: float = 1.05
    #: ``{name: value}`` pins parameters (natural scale) instead of sampling them.
    fixed: dict = field(default_factory=dict)
    #: Drop the likelihood; draws then come from the prior alone.
    prior_only: bool = False

    def __post_init__(self):
        if self.chains < 1 or self.iterations <= self.warmup or self.warmup < 0 or self.thin < 1:
            raise ValueError("need chains >= 1, warmup >= 0 and iterations > warmup")

    @property
    def seeds(self) -> list:
        """One seed sequence per chain plus a final one for the tau draws."""
        return np.random.SeedSequence(self.seed).spawn(self.chains + 1)


def param_names(spec: ModelSpec) -> tuple:
    if spec.assumption is Assumption.SAME_COVARIANCE:
        return BASE_NAMES
    return tuple(f"{n}_{a.value}" for a in (Arm.TREATED, Arm.CONTROL) for n in BASE_NAMES)


# ---------------------------------------------------------------- densities


def half_cauchy_logpdf(q, scale: float):
    q = np.asarray(q, dtype=float)
    with np.errstate(divide="ignore"):
        out = math.log(2.0 / (math.pi * scale)) - np.log1p((q / scale) ** 2)
    return np.where(q >= 0, out, -np.inf)


def _lengthscale_power(kind: str) -> float:
    """Power ``c`` with ``q = exp(c * log lengthscale)`` for the prior quantity."""
    return -2.0 if kind == "inverse-square" else 1.0


def _log_prior_z(z: np.ndarray, priors: PriorSpec):
    """Half-Cauchy log prior of one kernel in log space, Jacobian included."""
    powers = np.array([_lengthscale_power(priors.lengthscale_prior), 1.0, 1.0])
    w = powers * z - math.log(priors.hc_scale)
    # log HC(q) + log|dq/dz| with q = exp(c z); log1p(q^2/s^2) written stably
    value = np.sum(math.log(2.0 / math.pi) + np.log(np.abs(powers)) + w - np.logaddexp(0.0, 2.0 * w))
    grad = -powers * np.tanh(w)
    return float(value), grad


def log_posterior(data: RddDataset, spec: ModelSpec, priors: PriorSpec = PriorSpec()) -> float:
    """Unnormalized joint log posterior at the parameters carried by ``spec``.

    Density is with respect to the mean coefficients and the quantities the
    half-Cauchy priors are placed on (``1/lengthscale**2`` or the
    lengthscale, the kernel variance, the noise variance).
    """
    data.require_both_arms()
    total = 0.0
    for kern in spec.kernels:
        if kern.noise <= 0:
            return -math.inf
        ell_q = kern.lengthscale ** -2 if priors.lengthscale_prior == "inverse-square" else kern.lengthscale
        total += float(np.sum(half_cauchy_logpdf([ell_q, kern.variance, kern.noise], priors.hc_scale)))
    sd = priors.beta_prior_sd
    for arm in Arm:
        beta = np.asarray(spec.mean(arm).coefficients)
        total += float(np.sum(-0.5 * (beta / sd) ** 2 - math.log(sd) - 0.5 * _LOG_2PI))
        x, y = data.arm(arm)
        total += marginal_loglik(x, y, spec.mean(arm), spec.kernel(arm))
    return total


# ---------------------------------------------------------------- arm algebra


@dataclass(frozen=True)
class _ArmData:
    x: np.ndarray
    y: np.ndarray
    b: float
    order: int

    def __post_init__(self):
        d = self.x[:, None] - self.x[None, :]
        object.__setattr__(self, "sqdist", d * d)
        object.__setattr__(self, "db2", (self.x - self.b) ** 2)
        object.__setattr__(self, "H", design_matrix(self.x, self.order))
        object.__setattr__(self, "hb", design_matrix([self.b], self.order)[0])


@dataclass(frozen=True)
class ArmTerms:
    """Boundary posterior of one arm as an affine function of its coefficients.

    Given coefficients ``beta`` the conditional mean at the boundary is
    ``offset + slope @ beta`` and the variance is ``variance``. The
    coefficient conditional is ``N(beta_mean, C^{-1})`` with ``C = L L^T``.
    """

    offset: float
    slope: np.ndarray
    variance: float
    beta_mean: np.ndarray
    beta_chol: np.ndarray


def _arm_eval(arm: _ArmData, k: KernelParams, prior_sd: float | None, grad: bool = False):
    """Log likelihood of one arm with the mean coefficients either integrated
    against ``N(0, prior_sd^2 I)`` or, when ``prior_sd`` is None, profiled at
    their GLS estimate. Returns ``(value, ArmTerms, gradient or None)``.
    """
    fact = factorize(arm.x, k, arm.sqdist)
    n, p = arm.H.shape
    kstar = k.variance * np.exp(arm.db2 * (-0.5 / k.lengthscale**2))
    sol = fact.solve(np.column_stack([arm.y, arm.H, kstar]))
    a_y, a_h, a_k = sol[:, 0], sol[:, 1:1 + p], sol[:, 1 + p]
    value = -0.5 * arm.y @ a_y - 0.5 * fact.logdet() - 0.5 * n * _LOG_2PI
    if p:
        gram = arm.H.T @ a_h
        c = arm.H.T @ a_y
        if prior_sd is not None:
            gram = gram + np.eye(p) / prior_sd**2
        try:
            lc = np.linalg.cholesky(gram)
        except np.linalg.LinAlgError as exc:
            raise FactorizationFailure("mean-basis normal equations are singular") from exc
        beta = np.linalg.solve(gram, c)
        if prior_sd is not None:
            value += -p * math.log(prior_sd) - np.sum(np.log(np.diag(lc))) + 0.5 * c @ beta
        else:
            value += 0.5 * c @ beta
        alpha = a_y - a_h @ beta
    else:
        lc = np.zeros((0, 0))
        beta = np.zeros(0)
        alpha = a_y
    terms = ArmTerms(
        offset=float(kstar @ a_y),
        slope=arm.hb - a_h.T @ kstar,
        variance=float(k.variance - kstar @ a_k),
        beta_mean=beta,
        beta_chol=lc,
    )
    if not grad:
        return float(value), terms, None
    s_inv = fact.inverse()
    if p and prior_sd is not None:
        s_inv = s_inv - a_h @ np.linalg.solve(lc @ lc.T, a_h.T)
    inner = np.outer(alpha, alpha) - s_inv
    kern = k.variance * np.exp(arm.sqdist * (-0.5 / k.lengthscale**2))
    g = np.array([
        0.5 * np.sum(inner * kern * arm.sqdist) / k.lengthscale**2,
        0.5 * (np.sum(inner * kern) + fact.jitter * k.variance * np.trace(inner)),
        0.5 * k.noise * np.trace(inner),
    ])
    return float(value), terms, g


class _Problem:
    """Maps a free-parameter vector to log densities for one dataset."""

    def __init__(self, arms, n_kernels, priors, fixed=None, names=None, prior_only=False):
        self.arms = arms  # list of _ArmData; kernel index = arm index when n_kernels == 2
        self.n_kernels = n_kernels
        self.priors = priors
        self.prior_only = prior_only
        self.names = names or tuple(
            BASE_NAMES if n_kernels == 1 else (f"{n}_{a}" for a in "TC" for n in BASE_NAMES)
        )
        self.full = np.zeros(3 * n_kernels)
        fixed = dict(fixed or {})
        unknown = set(fixed) - set(self.names)
        if unknown:
            raise ValueError(f"unknown fixed parameter(s) {sorted(unknown)}; expected {self.names}")
        self.free = np.array([i for i, n in enumerate(self.names) if n not in fixed], dtype=int)
        for i, n in enumerate(self.names):
            if n in fixed:
                if fixed[n] <= 0:
                    raise ValueError(f"fixed {n} must be positive")
                self.full[i] = math.log(fixed[n])

    @property
    def dim(self) -> int:
        return self.free.size

    def expand(self, zfree) -> np.ndarray:
        z = self.full.copy()
        z[self.free] = zfree
        return z

    def kernels(self, z) -> list:
        return [KernelParams.from_log(z[3 * j:3 * j + 3]) for j in range(self.n_kernels)]

    def _kernel_index(self, arm_index: int) -> int:
        return 0 if self.n_kernels == 1 else arm_index

    def evaluate(self, zfree, mode="bayes", grad=False):
        """``mode`` is ``"bayes"`` (log posterior, coefficients integrated) or
        ``"profile"`` (profile log likelihood, coefficients at GLS)."""
        z = self.expand(zfree)
        if not np.all(np.isfinite(z)) or np.any(np.abs(z) > 700):
            return -math.inf, None, None
        total = 0.0
        g_full = np.zeros_like(z)
        if mode == "bayes":
            for j in range(self.n_kernels):
                v, gz = _log_prior_z(z[3 * j:3 * j + 3], self.priors)
                total += v
                g_full[3 * j:3 * j + 3] += gz
            if self.prior_only:
                return total, None, g_full[self.free] if grad else None
        prior_sd = self.priors.beta_prior_sd if mode == "bayes" else None
        kernels = self.kernels(z)
        terms = []
        try:
            for i, arm in enumerate(self.arms):
                kj = self._kernel_index(i)
                v, t, g = _arm_eval(arm, kernels[kj], prior_sd, grad)
                total += v
                terms.append(t)
                if grad:
                    g_full[3 * kj:3 * kj + 3] += g
        except FactorizationFailure:
            return -math.inf, None, None
        if not math.isfinite(total):
            return -math.inf, None, None
        return total, terms, g_full[self.free] if grad else None

    def default_bounds(self):
        lo, hi = [], []
        for j in range(self.n_kernels):
            arms = self.arms if self.n_kernels == 1 else [self.arms[j]]
            xs = np.concatenate([a.x for a in arms])
            ys = np.concatenate([a.y for a in arms])
            xr = float(np.ptp(xs)) if xs.size > 1 else 1.0
            xr = xr if xr > 0 else 1.0
            vy = float(np.var(ys)) if ys.size > 1 else 0.0
            vy = vy if vy > 0 else 1.0
            lo += [math.log(1e-3 * xr), math.log(1e-8 * vy), math.log(1e-10 * vy)]
            hi += [math.log(1e2 * xr), math.log(1e4 * vy), math.log(1e2 * vy)]
        return np.array(lo)[self.free], np.array(hi)[self.free]

    def default_starts(self):
        starts = []
        for ell_frac, var_frac, noise_frac in ((0.3, 0.5, 0.2), (0.1, 1.0, 0.05), (1.0, 0.2, 0.5)):
            z = []
            for j in range(self.n_kernels):
                arms = self.arms if self.n_kernels == 1 else [self.arms[j]]
                xs = np.concatenate([a.x for a in arms])
                ys = np.concatenate([a.y for a in arms])
                xr = float(np.ptp(xs)) if xs.size > 1 else 1.0
                vy = float(np.var(ys)) if ys.size > 1 else 0.0
                xr, vy = (xr if xr > 0 else 1.0), (vy if vy > 0 else 1.0)
                z += [math.log(ell_frac * xr), math.log(var_frac * vy), math.log(noise_frac * vy)]
            starts.append(np.array(z)[self.free])
        return starts


def _arm_list(data: RddDataset, order: int):
    data.require_both_arms()
    return [_ArmData(*data.arm(a), data.b, order) for a in (Arm.TREATED, Arm.CONTROL)]


def _maximize(problem: _Problem, mode: str, starts, bounds):
    """Best local optimum over ``starts``; returns ``(z, value, n_failed)``."""
    best_z, best_v, failed = None, -math.inf, 0
    lo, hi = bounds

    def fun(z):
        v, _, g = problem.evaluate(z, mode, grad=True)
        if not math.isfinite(v):
            return 1e300, np.zeros_like(z)
        return -v, -g

    for z0 in starts:
        z0 = np.clip(z0, lo, hi)
        if not math.isfinite(problem.evaluate(z0, mode)[0]):
            failed += 1
            continue
        res = optimize.minimize(fun, z0, jac=True, method="L-BFGS-B", bounds=list(zip(lo, hi)))
        v = -res.fun
        if not math.isfinite(v) or v <= -1e299:
            failed += 1
            continue
        if v > best_v:
            best_z, best_v = res.x, v
    return best_z, best_v, failed


def _laplace_cov(problem: _Problem, z: np.ndarray, step: float = 1e-4) -> np.ndarray:
    d = z.size
    hess = np.zeros((d, d))
    for i in range(d):
        e = np.zeros(d)
        e[i] = step
        gp = problem.evaluate(z + e, "bayes", grad=True)[2]
        gm = problem.evaluate(z - e, "bayes", grad=True)[2]
        if gp is None or gm is None:
            return 0.1 * np.eye(d)
        hess[i] = (gp - gm) / (2 * step)
    hess = -0.5 * (hess + hess.T)
    try:
        vals, vecs = np.linalg.eigh(hess)
    except np.linalg.LinAlgError:
        return 0.1 * np.eye(d)
    if not np.all(np.isfinite(vals)):
        return 0.1 * np.eye(d)
    cov_vals = 1.0 / np.clip(vals, 0.25, 1e8)  # cap variance at 4 in log space
    return (vecs * cov_vals) @ vecs.T


# ---------------------------------------------------------------- draws


@dataclass
class HyperDraws:
    """Joint posterior draws, chains interleaved (draw i of every chain, then i+1).

    ``values`` holds every parameter named in ``names`` on its natural
    scale, including pinned ones.
    """

    names: tuple
    values: np.ndarray
    beta_treated: np.ndarray
    beta_control: np.ndarray
    chain: np.ndarray
    assumption: Assumption
    mean_order: int
    rhat: dict
    ess: dict
    accept_rate: tuple
    tau_mean: np.ndarray | None = None  # conditional tau mean at each draw
    tau_var: np.ndarray | None = None

    def __len__(self):
        return self.values.shape[0]

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.names.index(name)]

    def kernels(self, i: int) -> tuple:
        row = self.values[i]
        return tuple(KernelParams(*row[3 * j:3 * j + 3]) for j in range(len(self.names) // 3))

    def spec(self, i: int) -> ModelSpec:
        return ModelSpec(
            self.assumption, self.mean_order, self.kernels(i),
            MeanBasis(self.beta_treated[i]), MeanBasis(self.beta_control[i]),
        )


def _draw_beta(terms: ArmTerms, rng, order: int, prior_sd: float):
    if order == 0:
        return np.zeros(0)
    zeta = rng.standard_normal(order)
    if terms is None:
        return prior_sd * zeta
    return terms.beta_mean + solve_triangular(terms.beta_chol.T, zeta, lower=False, check_finite=False)


def sample_hyperparams(data: RddDataset, spec: ModelSpec, priors: PriorSpec = PriorSpec(),
                       config: MCMCConfig = MCMCConfig()) -> HyperDraws:
    """Adaptive random-walk Metropolis over the kernel parameters, with the
    mean coefficients drawn exactly from their conditional at each kept draw.

    Chains start from an overdispersed neighbourhood of the posterior mode
    with a Laplace-approximation proposal, then adapt during warmup.
    """
    arms = _arm_list(data, spec.mean_order)
    problem = _Problem(arms, spec.n_kernels, priors, config.fixed, param_names(spec), config.prior_only)
    seeds = config.seeds

    if problem.dim:
        lo, hi = problem.default_bounds()
        if config.prior_only:
            lo, hi = np.full_like(lo, -50.0), np.full_like(hi, 50.0)
        z_mode = None
        for start in problem.default_starts():
            z_mode, _, _ = _maximize(problem, "bayes", [start], (lo, hi))
            if z_mode is not None:
                break
        if z_mode is None:
            raise OptimizationFailure("could not locate a finite posterior density to start from")
        cov0 = _laplace_cov(problem, z_mode)
    else:
        z_mode, cov0 = np.zeros(0), np.zeros((0, 0))

    def target(zfree):
        v, terms, _ = problem.evaluate(zfree, "bayes")
        return v, terms

    chain_z, chain_bt, chain_bc, chain_tm, chain_tv, accept = [], [], [], [], [], []
    p = spec.mean_order
    for c in range(config.chains):
        rng = np.random.default_rng(seeds[c])
        z0 = z_mode
        if problem.dim:
            chol0 = np.linalg.cholesky(cov0)
            for _ in range(20):
                cand = z_mode + 1.5 * chol0 @ rng.standard_normal(problem.dim)
                if math.isfinite(target(cand)[0]):
                    z0 = cand
                    break
        res = adaptive_metropolis(target, z0, cov0, config.iterations, config.warmup, rng,
                                  config.target_accept, config.thin)
        accept.append(res.accept_rate if problem.dim else 1.0)
        chain_z.append(res.samples)
        bt, bc, tm, tv = [], [], [], []
        for terms in res.aux:
            t_t, t_c = (terms if terms is not None else (None, None))
            beta_t = _draw_beta(t_t, rng, p, priors.beta_prior_sd)
            beta_c = _draw_beta(t_c, rng, p, priors.beta_prior_sd)
            bt.append(beta_t)
            bc.append(beta_c)
            if terms is not None:
                tm.append(t_t.offset + t_t.slope @ beta_t - t_c.offset - t_c.slope @ beta_c)
                tv.append(max(t_t.variance + t_c.variance, 0.0))
        chain_bt.append(np.array(bt).reshape(len(bt), p))
        chain_bc.append(np.array(bc).reshape(len(bc), p))
        chain_tm.append(np.array(tm))
        chain_tv.append(np.array(tv))

    z_chains = np.stack(chain_z)  # (chains, draws, free)
    rhat, ess = {}, {}
    for j, idx in enumerate(problem.free):
        name = problem.names[idx]
        rhat[name] = split_rhat(z_chains[:, :, j])
        ess[name] = effective_sample_size(z_chains[:, :, j])
    bad = {k: v for k, v in rhat.items() if v > config.rhat_threshold}
    if bad:
        warnings.warn(f"split R-hat above {config.rhat_threshold}: {bad}", NonConvergence, stacklevel=2)

    def interleave(arrs):
        a = np.stack(arrs)
        return np.swapaxes(a, 0, 1).reshape(a.shape[0] * a.shape[1], *a.shape[2:])

    n_keep = z_chains.shape[1]
    full = np.array([problem.expand(z) for z in interleave(chain_z)]).reshape(-1, problem.full.size)
    has_tau = not config.prior_only
    return HyperDraws(
        names=problem.names,
        values=np.exp(full),
        beta_treated=interleave(chain_bt).reshape(len(full), p),
        beta_control=interleave(chain_bc).reshape(len(full), p),
        chain=np.tile(np.arange(config.chains), n_keep),
        assumption=spec.assumption,
        mean_order=p,
        rhat=rhat,
        ess=ess,
        accept_rate=tuple(accept),
        tau_mean=interleave(chain_tm) if has_tau else None,
        tau_var=interleave(chain_tv) if has_tau else None,
    )


@dataclass
class TauPosterior:
    draws: np.ndarray
    point_estimate: float
    interval: tuple
    diagnostics: dict
    hyper: HyperDraws | None = field(default=None, repr=False)

    @property
    def lower(self) -> float:
        return self.interval[0]

    @property
    def upper(self) -> float:
        return self.interval[1]


def summarize_tau(draws, diagnostics=None, hyper=None) -> TauPosterior:
    draws = np.asarray(draws, dtype=float)
    lo, hi = np.quantile(draws, [0.025, 0.975])
    return TauPosterior(draws, float(draws.mean()), (float(lo), float(hi)), diagnostics or {}, hyper)


def tau_posterior(data: RddDataset, spec: ModelSpec, priors: PriorSpec = PriorSpec(),
                  config: MCMCConfig = MCMCConfig()) -> TauPosterior:
    """One tau draw per joint parameter draw, from the fixed-parameter
    posterior at that draw; summarized by mean and 2.5/97.5% quantiles."""
    if config.prior_only:
        raise ValueError("tau posterior needs the likelihood")
    hyper = sample_hyperparams(data, spec, priors, config)
    rng = np.random.default_rng(config.seeds[-1])
    draws = hyper.tau_mean + np.sqrt(hyper.tau_var) * rng.standard_normal(len(hyper))
    diag = {"rhat": hyper.rhat, "ess": hyper.ess, "accept_rate": hyper.accept_rate}
    return summarize_tau(draws, diag, hyper)


# ---------------------------------------------------------------- MLE


@dataclass(frozen=True)
class MleFit:
    spec: ModelSpec  # carries kernel estimates and GLS mean coefficients
    loglik: float
    failed_starts: int


def _mle(problem: _Problem, order: int, n_starts: int, seed: int, bounds):
    lo, hi = bounds if bounds is not None else problem.default_bounds()
    lo, hi = np.asarray(lo, dtype=float), np.asarray(hi, dtype=float)
    starts = problem.default_starts()
    rng = np.random.default_rng(seed)
    starts += [rng.uniform(lo, hi) for _ in range(max(0, n_starts - len(starts)))]
    z, value, failed = _maximize(problem, "profile", starts, (lo, hi))
    if z is None:
        raise OptimizationFailure(f"all {len(starts)} optimizer starts failed")
    _, terms, _ = problem.evaluate(z, "profile")
    return problem.expand(z), value, failed, terms


def mle_hyperparams(data: RddDataset, spec: ModelSpec, n_starts: int = 4, seed: int = 0,
                    bounds=None) -> MleFit:
    """Maximize the summed arm likelihoods; mean coefficients are profiled
    out at their GLS estimates, kernel parameters by multi-start L-BFGS-B
    on log parameters with analytic gradients."""
    arms = _arm_list(data, spec.mean_order)
    problem = _Problem(arms, spec.n_kernels, PriorSpec(), names=param_names(spec))
    z, value, failed, terms = _mle(problem, spec.mean_order, n_starts, seed, bounds)
    kernels = problem.kernels(z)
    fitted = spec.with_params(kernels, MeanBasis(terms[0].beta_mean), MeanBasis(terms[1].beta_mean))
    return MleFit(fitted, value, failed)


def mle_curve(x, y, mean_order: int = 2, n_starts: int = 4, seed: int = 0, bounds=None):
    """Single-function MLE; returns ``(KernelParams, MeanBasis, loglik)``."""
    x = np.asarray(x, dtype=float)
    arm = _ArmData(x, np.asarray(y, dtype=float), float(x.mean()), mean_order)
    problem = _Problem([arm], 1, PriorSpec())
    z, value, _, terms = _mle(problem, mean_order, n_starts, seed, bounds)
    return problem.kernels(z)[0], MeanBasis(terms[0].beta_mean), value


def mle_tau(data: RddDataset, fit: MleFit) -> TauPosterior:
    """Plug-in tau interval: every parameter, mean coefficients included,
    is held at the estimate in ``fit``, so the interval is the fixed-parameter
    normal of ``tau_conditional``, mean +/- 1.96 sd."""
    t = tau_conditional(data, fit.spec)
    sd = math.sqrt(max(t.variance, 0.0))
    z = 1.959963984540054
    return TauPosterior(np.array([t.mean]), t.mean, (t.mean - z * sd, t.mean + z * sd),
                        {"sd": sd, "loglik": fit.loglik}, None)


def plugin_tau(data: RddDataset, spec: ModelSpec, priors: PriorSpec = PriorSpec()) -> TauPosterior:
    """Tau posterior with the kernel parameters of ``spec`` held fixed.

    The mean coefficients keep their Gaussian prior and are integrated out
    exactly, so the posterior is normal and no sampling is needed; the
    interval is mean +/- 1.96 sd.
    """
    arms = _arm_list(data, spec.mean_order)
    mean, var = 0.0, 0.0
    for sign, arm_data, arm in ((1.0, arms[0], Arm.TREATED), (-1.0, arms[1], Arm.CONTROL)):
        _, t, _ = _arm_eval(arm_data, spec.kernel(arm), priors.beta_prior_sd)
        mean += sign * (t.offset + t.slope @ t.beta_mean)
        var += t.variance
        if spec.mean_order:
            half = solve_triangular(t.beta_chol, t.slope, lower=True, check_finite=False)
            var += float(half @ half)
    sd = math.sqrt(max(var, 0.0))
    z = 1.959963984540054
    return TauPosterior(np.array([mean]), float(mean), (mean - z * sd, mean + z * sd),
                        {"sd": sd}, None)
