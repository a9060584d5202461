"""Fit one of the estimators to ingested data and collect a report."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .bayes import MCMCConfig, PriorSpec, mle_hyperparams, mle_tau, tau_posterior
from .gp import gp_predict
from .errors import InsufficientSupport
from .io import AnalysisConfig
from .llr import Z95, LlrKernel, llr_tau, local_fit, select_bandwidth_cv, select_bandwidth_ik
from .model import Arm, ModelSpec, RddDataset

GRID_POINTS = 60
BAND_DRAWS = 200


@dataclass(frozen=True)
class CurveBand:
    arm: str
    grid: np.ndarray
    mean: np.ndarray
    lower: np.ndarray
    upper: np.ndarray


@dataclass(frozen=True)
class OutcomeFit:
    outcome: str
    method: str
    estimate: float
    lower: float
    upper: float
    n_treated: int
    n_control: int
    bandwidth: float = math.nan
    curves: tuple = ()
    diagnostics: dict = field(default_factory=dict, compare=False)

    @property
    def significant(self) -> bool:
        """The 95% interval excludes zero."""
        return not (self.lower <= 0.0 <= self.upper)


SUMMARY_COLUMNS = ("outcome", "method", "estimate", "lower", "upper", "significant",
                   "n_treated", "n_control", "bandwidth")
CURVE_COLUMNS = ("outcome", "arm", "x", "mean", "lower", "upper")


@dataclass
class FitReport:
    boundary: float
    fits: list

    def summary_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(SUMMARY_COLUMNS)
        for f in self.fits:
            w.writerow([f.outcome, f.method, repr(f.estimate), repr(f.lower), repr(f.upper),
                        int(f.significant), f.n_treated, f.n_control, repr(f.bandwidth)])
        return buf.getvalue()

    def curves_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CURVE_COLUMNS)
        for f in self.fits:
            for c in f.curves:
                for row in zip(c.grid, c.mean, c.lower, c.upper):
                    w.writerow([f.outcome, c.arm] + [repr(float(v)) for v in row])
        return buf.getvalue()

    def to_json(self) -> str:
        out = {"boundary": self.boundary, "fits": []}
        for f in self.fits:
            out["fits"].append({
                "outcome": f.outcome, "method": f.method, "estimate": f.estimate,
                "lower": f.lower, "upper": f.upper, "significant": f.significant,
                "n_treated": f.n_treated, "n_control": f.n_control, "bandwidth": f.bandwidth,
                "curves": [
                    {"arm": c.arm, "x": c.grid.tolist(), "mean": c.mean.tolist(),
                     "lower": c.lower.tolist(), "upper": c.upper.tolist()}
                    for c in f.curves
                ],
            })
        return json.dumps(out, indent=2) + "\n"

    def text(self) -> str:
        lines = [f"boundary b = {self.boundary:.6g}"]
        for f in self.fits:
            star = " *" if f.significant else ""
            bw = f"  h={f.bandwidth:.6g}" if math.isfinite(f.bandwidth) else ""
            lines.append(
                f"{f.outcome}: {f.method} tau = {f.estimate:.6g}  95% [{f.lower:.6g}, {f.upper:.6g}]{star}"
                f"  (n_T={f.n_treated}, n_C={f.n_control}){bw}"
            )
        lines.append("* interval excludes 0")
        return "\n".join(lines)


def parse_summary_csv(text: str) -> list:
    """Rows of a written summary CSV as dicts with typed values."""
    rows = []
    for d in csv.DictReader(io.StringIO(text)):
        rows.append({
            "outcome": d["outcome"], "method": d["method"],
            "estimate": float(d["estimate"]), "lower": float(d["lower"]), "upper": float(d["upper"]),
            "significant": bool(int(d["significant"])),
            "n_treated": int(d["n_treated"]), "n_control": int(d["n_control"]),
            "bandwidth": float(d["bandwidth"]),
        })
    return rows


def _arm_grid(data: RddDataset, arm: Arm) -> np.ndarray:
    x, _ = data.arm(arm)
    if arm is Arm.TREATED:
        return np.linspace(data.b, x.max(), GRID_POINTS)
    return np.linspace(x.min(), data.b, GRID_POINTS)


def _gp_bands(data, post, seed) -> tuple:
    """Pointwise 95% bands of each arm's mean function over posterior draws."""
    hyper = post.hyper
    idx = np.unique(np.linspace(0, len(hyper) - 1, min(BAND_DRAWS, len(hyper))).astype(int))
    rng = np.random.default_rng(seed)
    bands = []
    for arm in (Arm.CONTROL, Arm.TREATED):
        x, y = data.arm(arm)
        grid = _arm_grid(data, arm)
        means, samples = [], []
        for i in idx:
            spec = hyper.spec(i)
            m, v = gp_predict(x, y, spec.mean(arm), spec.kernel(arm), grid)
            means.append(m)
            samples.append(m + np.sqrt(np.clip(v, 0, None)) * rng.standard_normal(grid.size))
        lo, hi = np.quantile(np.array(samples), [0.025, 0.975], axis=0)
        bands.append(CurveBand(arm.value, grid, np.mean(means, axis=0), lo, hi))
    return tuple(bands)


def _plugin_bands(data, spec) -> tuple:
    bands = []
    for arm in (Arm.CONTROL, Arm.TREATED):
        x, y = data.arm(arm)
        grid = _arm_grid(data, arm)
        m, v = gp_predict(x, y, spec.mean(arm), spec.kernel(arm), grid)
        sd = np.sqrt(np.clip(v, 0, None))
        bands.append(CurveBand(arm.value, grid, m, m - Z95 * sd, m + Z95 * sd))
    return tuple(bands)


def _llr_bands(data, h, kernel) -> tuple:
    bands = []
    for arm in (Arm.CONTROL, Arm.TREATED):
        x, y = data.arm(arm)
        grid = _arm_grid(data, arm)
        m, lo, hi = (np.full(grid.size, np.nan) for _ in range(3))
        for i, g in enumerate(grid):
            try:
                est, _, var, _ = local_fit(x, y, g, h, kernel)
            except InsufficientSupport:
                continue
            sd = math.sqrt(var)
            m[i], lo[i], hi[i] = est, est - Z95 * sd, est + Z95 * sd
        bands.append(CurveBand(arm.value, grid, m, lo, hi))
    return tuple(bands)


def fit_dataset(data: RddDataset, config: AnalysisConfig, outcome: str = "y") -> OutcomeFit:
    data.require_both_arms()
    spec = ModelSpec(config.assumption, config.mean_order)
    priors = PriorSpec(beta_prior_sd=config.prior_beta_sd, hc_scale=config.prior_hc_scale)
    mcmc = MCMCConfig(chains=config.chains, iterations=config.iters, warmup=config.warmup, seed=config.seed)
    counts = dict(n_treated=data.arm_size(Arm.TREATED), n_control=data.arm_size(Arm.CONTROL))

    if config.method in ("gpr", "gpr-cut"):
        h = math.nan
        fit_data = data
        if config.method == "gpr-cut":
            h = select_bandwidth_ik(data, LlrKernel.RECTANGULAR)
            fit_data = data.window(h)
            for arm in Arm:
                if fit_data.arm_size(arm) == 0:
                    raise InsufficientSupport(f"{arm.name.lower()} side of the window of half-width {h:g} is empty")
        post = tau_posterior(fit_data, spec, priors, mcmc)
        return OutcomeFit(outcome, config.method, post.point_estimate, post.lower, post.upper,
                          bandwidth=h, curves=_gp_bands(fit_data, post, config.seed),
                          diagnostics=post.diagnostics, **counts)
    if config.method == "gpr-mle":
        mle = mle_hyperparams(data, spec, seed=config.seed)
        post = mle_tau(data, mle)
        return OutcomeFit(outcome, config.method, post.point_estimate, post.lower, post.upper,
                          curves=_plugin_bands(data, mle.spec), diagnostics=post.diagnostics, **counts)
    kernel = LlrKernel.TRIANGULAR
    h = select_bandwidth_cv(data, kernel)
    fit = llr_tau(data, h, kernel)
    return OutcomeFit(outcome, "llr", fit.tau_hat, fit.lower, fit.upper, bandwidth=h,
                      curves=_llr_bands(data, h, kernel), diagnostics={"se": fit.se}, **counts)


def fit_command(config: AnalysisConfig, datasets: dict) -> FitReport:
    """Fit every outcome in ``datasets`` (name to ``RddDataset``)."""
    return FitReport(config.boundary, [fit_dataset(d, config, name) for name, d in datasets.items()])
