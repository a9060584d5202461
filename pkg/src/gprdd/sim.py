"""Monte Carlo campaigns over the registered DGPs, plus curvature diagnostics.

Seeding. Every replication's dataset is generated from a seed derived from
``(master seed, DGP, replication)``, so all methods see the same datasets
(common random numbers make method comparisons paired). Any randomness
inside a method is seeded from ``(master seed, DGP, method, replication)``.
Both are pure functions of counters, never of scheduling order, so reports
do not depend on the degree of parallelism.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import warnings
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields

import numpy as np
from numpy.polynomial import polynomial as P
from threadpoolctl import threadpool_limits

from .bayes import MCMCConfig, PriorSpec, TauPosterior, mle_curve, mle_hyperparams, mle_tau, tau_posterior
from .dgps import DGP_NAMES, DgpSpec, generate_replication, get_dgp
from .errors import CampaignFailure, GprddError, InsufficientSupport, NonConvergence, OptimizationFailure
from .llr import LlrKernel, llr_tau, select_bandwidth_cv, select_bandwidth_ik
from .model import Arm, ModelSpec, RddDataset

REPORT_COLUMNS = ("dgp", "method", "reps", "ec", "mean_il", "bias", "rmse", "failures", "seed")
TRACE_COLUMNS = ("dgp", "method", "rep", "estimate", "lower", "upper", "covered", "error")
FAILURE_LIMIT = 0.01


# ---------------------------------------------------------------- settings


@dataclass(frozen=True)
class CampaignSettings:
    """Per-fit settings shared by every replication of a campaign.

    The sampler defaults are lighter than the single-fit defaults: a
    campaign runs thousands of fits, and two chains of 600 iterations
    already give a stable 95% interval for this three-parameter posterior.
    """

    chains: int = 2
    iterations: int = 600
    warmup: int = 200
    beta_prior_sd: float = 100.0
    hc_scale: float = 5.0
    mean_order: int = 2
    assumption: str = "same-cov"
    mle_starts: int = 3

    def mcmc(self, seed: int) -> MCMCConfig:
        return MCMCConfig(chains=self.chains, iterations=self.iterations, warmup=self.warmup, seed=seed)

    @property
    def priors(self) -> PriorSpec:
        return PriorSpec(beta_prior_sd=self.beta_prior_sd, hc_scale=self.hc_scale)

    def model(self, mean_order: int | None = None) -> ModelSpec:
        return ModelSpec(self.assumption, self.mean_order if mean_order is None else mean_order)


def gpr_cut_fit(data: RddDataset, spec: ModelSpec, priors: PriorSpec = PriorSpec(),
                mcmc_config: MCMCConfig = MCMCConfig()) -> TauPosterior:
    """GPR restricted to ``[b - h, b + h]`` with ``h`` the rectangular-kernel
    IK bandwidth."""
    h = select_bandwidth_ik(data, LlrKernel.RECTANGULAR)
    window = data.window(h)
    for arm in Arm:
        if window.arm_size(arm) == 0:
            raise InsufficientSupport(f"{arm.name.lower()} side of the window of half-width {h:g} is empty")
    post = tau_posterior(window, spec, priors, mcmc_config)
    post.diagnostics["bandwidth"] = h
    return post


# ---------------------------------------------------------------- methods
# each returns (estimate, lower, upper)


def _interval(post):
    return post.point_estimate, post.lower, post.upper


def _gpr(data, dgp, seed, s: CampaignSettings):
    return _interval(tau_posterior(data, s.model(), s.priors, s.mcmc(seed)))


def _gpr_zero_mean(data, dgp, seed, s):
    return _interval(tau_posterior(data, s.model(0), s.priors, s.mcmc(seed)))


def _gpr_cut(data, dgp, seed, s):
    return _interval(gpr_cut_fit(data, s.model(), s.priors, s.mcmc(seed)))


def _gpr_mle(data, dgp, seed, s):
    fit = mle_hyperparams(data, s.model(), n_starts=s.mle_starts, seed=seed)
    return _interval(mle_tau(data, fit))


def _llr_fit(data, h):
    fit = llr_tau(data, h, LlrKernel.TRIANGULAR)
    return fit.tau_hat, fit.lower, fit.upper


def _llr(data, dgp, seed, s):
    return _llr_fit(data, select_bandwidth_cv(data, LlrKernel.TRIANGULAR))


def _llr_ik(data, dgp, seed, s):
    return _llr_fit(data, select_bandwidth_ik(data, LlrKernel.TRIANGULAR))


def _oracle(data, dgp, seed, s):
    return dgp.tau, dgp.tau - 1.0, dgp.tau + 1.0


METHODS = {
    "gpr": _gpr,
    "gpr-cut": _gpr_cut,
    "gpr-zero-mean": _gpr_zero_mean,
    "gpr-mle": _gpr_mle,
    "llr": _llr,
    "llr-ik": _llr_ik,
    "oracle": _oracle,
}


# ---------------------------------------------------------------- seeding


def _tag(name: str) -> int:
    return zlib.crc32(name.encode())


def dataset_seed(master: int, dgp: str, rep: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([master, _tag(dgp), rep])


def method_seed(master: int, dgp: str, method: str, rep: int) -> int:
    ss = np.random.SeedSequence([master, _tag(dgp), _tag(method), rep])
    return int(ss.generate_state(1)[0])


# ---------------------------------------------------------------- records


@dataclass(frozen=True)
class ReplicationRecord:
    dgp: str
    method: str
    rep: int
    estimate: float = math.nan
    lower: float = math.nan
    upper: float = math.nan
    covered: bool = False
    error: str = ""

    @property
    def failed(self) -> bool:
        return bool(self.error)


@dataclass(frozen=True)
class ReportRow:
    dgp: str
    method: str
    reps: int
    ec: float
    mean_il: float
    bias: float
    rmse: float
    failures: int
    seed: int


def aggregate(records, dgp: str, method: str, reps: int, seed: int, tau: float) -> ReportRow:
    """Summary of one (DGP, method) cell from its replication records."""
    ok = sorted((r for r in records if not r.failed), key=lambda r: r.rep)
    failures = sum(r.failed for r in records)
    if not ok:
        nan = math.nan
        return ReportRow(dgp, method, reps, nan, nan, nan, nan, failures, seed)
    m = len(ok)
    err = [r.estimate - tau for r in ok]
    return ReportRow(
        dgp=dgp,
        method=method,
        reps=reps,
        ec=sum(r.covered for r in ok) / m,
        mean_il=math.fsum(r.upper - r.lower for r in ok) / m,
        bias=math.fsum(err) / m,
        rmse=math.sqrt(math.fsum(e * e for e in err) / m),
        failures=failures,
        seed=seed,
    )


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


_ROW_TYPES = {f.name: f.type for f in fields(ReportRow)}


def _parse_row(d: dict) -> ReportRow:
    conv = {"str": str, "int": int, "float": float}
    return ReportRow(**{k: conv[_ROW_TYPES[k]](d[k]) for k in REPORT_COLUMNS})


@dataclass
class SimulationReport:
    rows: list
    records: list = field(default_factory=list)
    n: int = 0

    def row(self, dgp: str, method: str) -> ReportRow:
        for r in self.rows:
            if r.dgp == dgp and r.method == method:
                return r
        raise KeyError((dgp, method))

    def cell_records(self, dgp: str, method: str) -> list:
        return [r for r in self.records if r.dgp == dgp and r.method == method]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(REPORT_COLUMNS)
        for r in self.rows:
            w.writerow([_fmt(getattr(r, c)) for c in REPORT_COLUMNS])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "SimulationReport":
        reader = csv.DictReader(io.StringIO(text))
        if tuple(reader.fieldnames or ()) != REPORT_COLUMNS:
            raise ValueError(f"unexpected report header {reader.fieldnames}")
        return cls([_parse_row(d) for d in reader])

    def to_json(self) -> str:
        payload = {"n": self.n, "rows": [asdict(r) for r in self.rows]}
        return json.dumps(payload, indent=2, allow_nan=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "SimulationReport":
        payload = json.loads(text)
        return cls([ReportRow(**r) for r in payload["rows"]], n=payload.get("n", 0))

    def trace_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        for r in self.records:
            w.writerow([_fmt(getattr(r, c)) if c != "covered" else int(r.covered) for c in TRACE_COLUMNS])
        return buf.getvalue()

    def summary_table(self) -> str:
        """Fixed-width text table, one line per cell, 6 significant digits."""
        head = f"{'dgp':<10} {'method':<14} {'reps':>5} {'EC':>8} {'IL':>10} {'bias':>11} {'RMSE':>10} {'fail':>5}"
        lines = [head, "-" * len(head)]
        for r in self.rows:
            lines.append(
                f"{r.dgp:<10} {r.method:<14} {r.reps:>5d} {r.ec:>8.6g} {r.mean_il:>10.6g} "
                f"{r.bias:>11.6g} {r.rmse:>10.6g} {r.failures:>5d}"
            )
        return "\n".join(lines)


# ---------------------------------------------------------------- runner


def _run_task(task) -> ReplicationRecord:
    dgp_name, method, rep, n, master, settings = task
    dgp = get_dgp(dgp_name)
    data = generate_replication(dgp, n, dataset_seed(master, dgp_name, rep))
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", NonConvergence)
            est, lo, hi = METHODS[method](data, dgp, method_seed(master, dgp_name, method, rep), settings)
        if not all(math.isfinite(v) for v in (est, lo, hi)):
            raise OptimizationFailure("non-finite estimate or interval")
    except (GprddError, np.linalg.LinAlgError, ValueError) as exc:
        return ReplicationRecord(dgp_name, method, rep, error=f"{type(exc).__name__}: {exc}")
    return ReplicationRecord(dgp_name, method, rep, float(est), float(lo), float(hi), bool(lo <= dgp.tau <= hi))


def _run_chunk(tasks) -> list:
    with threadpool_limits(1):
        return [_run_task(t) for t in tasks]


def run_campaign(dgps=DGP_NAMES, methods=("gpr",), n: int = 500, reps: int = 200, seed: int = 0,
                 parallelism: int = 1, settings: CampaignSettings = CampaignSettings(),
                 progress=None) -> SimulationReport:
    """Fit every method to ``reps`` datasets of each DGP and summarize.

    Failed replications are excluded from a cell's metrics and counted in
    its ``failures`` column. More than 1% failures over the whole campaign
    raises ``CampaignFailure`` carrying the report as ``.report``.
    ``progress``, if given, is called with the number of finished tasks.
    """
    if reps < 1:
        raise ValueError("reps must be >= 1")
    if n < 2:
        raise ValueError("n must be >= 2")
    dgps = [get_dgp(d).name for d in ([dgps] if isinstance(dgps, str) else dgps)]
    methods = [methods] if isinstance(methods, str) else list(methods)
    unknown = [m for m in methods if m not in METHODS]
    if unknown:
        raise ValueError(f"unknown method(s) {unknown}; choose from {', '.join(METHODS)}")

    tasks = [(d, m, r, n, seed, settings) for d in dgps for m in methods for r in range(reps)]
    workers = max(1, min(int(parallelism), os.cpu_count() or 1, len(tasks)))
    chunks = [tasks[i::workers * 4] for i in range(min(len(tasks), workers * 4))]
    records = []
    if workers == 1:
        with threadpool_limits(1):
            for i, t in enumerate(tasks):
                records.append(_run_task(t))
                if progress:
                    progress(i + 1)
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for part in pool.map(_run_chunk, chunks):
                records.extend(part)
                if progress:
                    progress(len(records))

    order = {(d, m): i for i, (d, m) in enumerate((d, m) for d in dgps for m in methods)}
    records.sort(key=lambda r: (order[(r.dgp, r.method)], r.rep))
    rows = [
        aggregate([r for r in records if (r.dgp, r.method) == key], key[0], key[1], reps, seed,
                  get_dgp(key[0]).tau)
        for key in order
    ]
    report = SimulationReport(rows, records, n)
    n_failed = sum(r.failed for r in records)
    empty = [f"{r.dgp}/{r.method}" for r in rows if r.failures == r.reps]
    if n_failed > FAILURE_LIMIT * len(records) or empty:
        exc = CampaignFailure(
            f"{n_failed} of {len(records)} replications failed"
            + (f"; no successful fits for {', '.join(empty)}" if empty else "")
        )
        exc.report = report
        raise exc
    return report


# ---------------------------------------------------------------- diagnostics


def default_window_centers(step: float = 0.05) -> np.ndarray:
    k = int(round(0.8 / step))
    right = np.round(0.1 + step * np.arange(k + 1), 10)
    return np.concatenate([-right[::-1], right])


def _side_poly(dgp: DgpSpec, x: float):
    return dgp.treated if x >= dgp.boundary else dgp.control


def second_derivative_profile(dgp: DgpSpec, grid) -> np.ndarray:
    """``|mu''(x)|`` on each grid point; the grid must avoid the boundary."""
    grid = np.atleast_1d(np.asarray(grid, dtype=float))
    if np.any(np.abs(grid) >= 1.0) or np.any(grid == dgp.boundary):
        raise ValueError("grid points must lie in (-1, 1) and avoid the boundary")
    return np.abs(dgp.second_derivative(grid))


def window_mle_ratio(fn, center: float, half_width: float = 0.1, n_grid: int = 41,
                     mean_order: int = 2) -> float:
    """``sigma_GP / lengthscale`` of the MLE fit to noiseless ``fn`` values on
    an even grid over ``[center - half_width, center + half_width]``."""
    xs = np.linspace(center - half_width, center + half_width, n_grid)
    return points_mle_ratio(xs, fn(xs), mean_order)


def points_mle_ratio(xs, ys, mean_order: int = 2) -> float:
    """``sigma_GP / lengthscale`` of the MLE fit to noiseless points."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    kern, _, _ = mle_curve(xs, ys, mean_order=mean_order, bounds=_noiseless_bounds(xs, ys))
    return math.sqrt(kern.variance) / kern.lengthscale


def _noiseless_bounds(xs, ys):
    xr = float(np.ptp(xs))
    vy = max(float(np.var(ys)), 1e-12)
    lo = [math.log(1e-2 * xr), math.log(1e-12 * vy), math.log(1e-12 * vy)]
    hi = [math.log(1e2 * xr), math.log(1e6 * vy), math.log(1e-6 * vy)]
    return np.array(lo), np.array(hi)


def sliding_window_mle_ratio(dgp: DgpSpec, window_centers, half_width: float = 0.1,
                             n_grid: int = 41) -> np.ndarray:
    """Ratio profile over ``window_centers``; each window uses the polynomial
    of the side its center is on. Windows whose fit fails give NaN."""
    centers = np.atleast_1d(np.asarray(window_centers, dtype=float))
    ok = ((centers >= -0.9 - 1e-9) & (centers <= -0.1 + 1e-9)) | ((centers >= 0.1 - 1e-9) & (centers <= 0.9 + 1e-9))
    if not np.all(ok):
        raise ValueError("window centers must lie in [-0.9, -0.1] or [0.1, 0.9]")
    out = np.empty(centers.size)
    for i, c in enumerate(centers):
        coefs = _side_poly(dgp, c)
        try:
            out[i] = window_mle_ratio(lambda x: P.polyval(x, coefs), c, half_width, n_grid)
        except GprddError:
            out[i] = math.nan
    return out
