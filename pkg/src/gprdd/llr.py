"""Kernel-weighted local polynomial estimation of the boundary jump.

Each arm is fit separately by weighted least squares with weights
``K((x - b) / h)``, the design centered at ``b`` so the intercept is the
boundary prediction. Standard errors use the HC1 sandwich.

Bandwidth selectors:

* ``select_bandwidth_cv``: one-sided leave-one-out cross-validation in the
  style of Ludwig and Miller. Each evaluation point is predicted by a local
  linear fit that only uses points on its far side from ``b`` (mimicking
  extrapolation to the boundary), restricted to the half of each arm
  nearest the boundary.
* ``select_bandwidth_ik``: the Imbens-Kalyanaraman plug-in. Constants, in
  the order they are used:

  - pilot bandwidth ``1.84 * sd(x) * N^(-1/5)``
  - third derivative from a global cubic (common slope terms, jump
    indicator) fit between the per-side medians of ``x``
  - second-derivative pilot bandwidths ``3.56 * (s2 / (f m3^2))^(1/7) * N_side^(-1/7)``
  - regularization ``r = 720 * s2 / (N2 * h2^4)`` per side
  - kernel constant ``C_K``: 3.4375 (triangular), 2.7019 (rectangular), the
    boundary local-linear AMSE constants for kernels supported on ``|u| <= 1``

  ``m3^2`` is floored at ``1e-2`` so an exactly quadratic sample cannot
  send the pilot bandwidth to infinity.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from .errors import InsufficientSupport
from .model import Arm, RddDataset

Z95 = float(norm.ppf(0.975))

IK_PILOT = 1.84
IK_M2_PILOT = 3.56
IK_REG = 720.0
IK_M3_FLOOR = 1e-2
IK_KERNEL_CONSTANT = {"rectangular": 2.7019, "triangular": 3.4375}


class LlrKernel(str, enum.Enum):
    RECTANGULAR = "rectangular"
    TRIANGULAR = "triangular"

    def __call__(self, u) -> np.ndarray:
        a = np.abs(np.asarray(u, dtype=float))
        if self is LlrKernel.RECTANGULAR:
            return (a <= 1.0).astype(float)
        return np.clip(1.0 - a, 0.0, None)


@dataclass(frozen=True)
class ArmFit:
    estimate: float
    coef: np.ndarray  # ascending powers of (x - b)
    variance: float
    n_support: int


@dataclass(frozen=True)
class LlrFit:
    tau_hat: float
    se: float
    ci: tuple
    h: float
    treated: ArmFit
    control: ArmFit
    kernel: LlrKernel

    @property
    def lower(self) -> float:
        return self.ci[0]

    @property
    def upper(self) -> float:
        return self.ci[1]


def _wls(x, y, w, order):
    """Weighted fit of ``y`` on ``1, x, ..., x^order`` with HC1 covariance."""
    keep = w > 0
    x, y, w = x[keep], y[keep], w[keep]
    k = order + 1
    if x.size < k:
        raise InsufficientSupport(f"{x.size} weighted points for a degree-{order} fit")
    design = np.vander(x, k, increasing=True)
    xw = design * w[:, None]
    gram = design.T @ xw
    if np.linalg.matrix_rank(gram) < k:
        raise InsufficientSupport("weighted design is rank deficient")
    bread = np.linalg.inv(gram)
    coef = bread @ (xw.T @ y)
    resid = y - design @ coef
    meat = (xw * resid[:, None] ** 2).T @ xw
    dof = x.size - k
    hc1 = x.size / dof if dof > 0 else math.inf
    cov = hc1 * bread @ meat @ bread
    return coef, cov, x.size


def local_fit(x, y, at: float, h: float, kernel=LlrKernel.TRIANGULAR, poly_order: int = 1):
    """Kernel-weighted polynomial fit centered at ``at``; returns
    ``(prediction, coefficients, HC1 variance of the prediction, support size)``."""
    if not h > 0:
        raise ValueError("bandwidth must be positive")
    u = np.asarray(x, dtype=float) - at
    coef, cov, n = _wls(u, np.asarray(y, dtype=float), LlrKernel(kernel)(u / h), poly_order)
    var = float(cov[0, 0])
    return float(coef[0]), coef, var if math.isfinite(var) else math.inf, n


def llr_arm_estimate(data: RddDataset, arm: Arm, h: float, kernel=LlrKernel.TRIANGULAR, poly_order: int = 1) -> ArmFit:
    """Boundary prediction from a kernel-weighted polynomial fit on one arm."""
    x, y = data.arm(arm)
    return ArmFit(*local_fit(x, y, data.b, h, kernel, poly_order))


def llr_tau(data: RddDataset, h: float, kernel=LlrKernel.TRIANGULAR, poly_order: int = 1,
            h_control: float | None = None) -> LlrFit:
    """Jump estimate with a normal-theory 95% interval.

    ``h`` is shared by both arms unless ``h_control`` overrides the control side.
    """
    kernel = LlrKernel(kernel)
    data.require_both_arms()
    fit_t = llr_arm_estimate(data, Arm.TREATED, h, kernel, poly_order)
    fit_c = llr_arm_estimate(data, Arm.CONTROL, h if h_control is None else h_control, kernel, poly_order)
    tau = fit_t.estimate - fit_c.estimate
    se = math.sqrt(fit_t.variance + fit_c.variance)
    return LlrFit(tau, se, (tau - Z95 * se, tau + Z95 * se), float(h), fit_t, fit_c, kernel)


def default_bandwidth_grid(data: RddDataset, size: int = 30) -> np.ndarray:
    span = float(np.max(np.abs(data.x - data.b)))
    return np.geomspace(0.02 * span, span, size)


def _cv_side(u, y, grid, kernel):
    """One-sided LOO squared errors for one arm, ``u`` measured away from b.

    Evaluation points are the half of the arm closest to the boundary; each
    is predicted by a local linear fit on the points strictly farther out.
    Returns one loss per grid value, ``inf`` where any evaluation point has
    too little support.
    """
    order = np.argsort(u)
    u, y = u[order], y[order]
    n_eval = u.size // 2
    if n_eval == 0:
        return np.full(len(grid), np.inf)
    ue, ye = u[:n_eval], y[:n_eval]
    d = u[None, :] - ue[:, None]  # distance outward from each evaluation point
    outward = d > 0
    losses = np.empty(len(grid))
    for g, h in enumerate(grid):
        w = np.where(outward, kernel(d / h), 0.0)
        s0 = w.sum(1)
        s1 = (w * d).sum(1)
        s2 = (w * d * d).sum(1)
        t0 = w @ y
        t1 = (w * d) @ y
        det = s0 * s2 - s1 * s1
        scale = np.maximum(s0 * s2, np.finfo(float).tiny)
        if np.any(det <= 1e-10 * scale) or np.any(np.count_nonzero(w > 0, axis=1) < 2):
            losses[g] = np.inf
            continue
        pred = (s2 * t0 - s1 * t1) / det
        losses[g] = float(np.sum((ye - pred) ** 2))
    return losses


def cv_curve(data: RddDataset, kernel=LlrKernel.TRIANGULAR, grid=None) -> tuple[np.ndarray, np.ndarray]:
    """Grid and summed one-sided LOO loss over both arms."""
    kernel = LlrKernel(kernel)
    grid = default_bandwidth_grid(data) if grid is None else np.asarray(grid, dtype=float).ravel()
    if grid.size == 0 or np.any(grid <= 0):
        raise ValueError("bandwidth grid must be nonempty and positive")
    xt, yt = data.arm(Arm.TREATED)
    xc, yc = data.arm(Arm.CONTROL)
    loss = _cv_side(xt - data.b, yt, grid, kernel) + _cv_side(data.b - xc, yc, grid, kernel)
    return grid, loss


def select_bandwidth_cv(data: RddDataset, kernel=LlrKernel.TRIANGULAR, grid=None, rtol: float = 1e-12) -> float:
    """Grid minimizer of the cross-validation loss; ties go to the larger h.

    Losses within ``rtol`` of the best (relative to the larger of the best
    loss and the total sum of squares of ``y``) count as ties, so an exact
    line, whose losses are all rounding noise, picks the largest h.
    """
    grid, loss = cv_curve(data, kernel, grid)
    finite = np.isfinite(loss)
    if not finite.any():
        raise InsufficientSupport("no bandwidth in the grid admits a cross-validation fit")
    best = loss[finite].min()
    scale = max(best, float(np.sum(data.y**2)) * 1e-6)
    tied = finite & (loss <= best + rtol * scale)
    return float(grid[tied].max())


def _poly_fit(x, y, order):
    design = np.vander(x, order + 1, increasing=True)
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    return coef


def select_bandwidth_ik(data: RddDataset, kernel=LlrKernel.TRIANGULAR) -> float:
    """Imbens-Kalyanaraman plug-in bandwidth (constants in the module doc).

    The result is capped at the largest distance from ``b`` to a data point,
    beyond which a wider window changes nothing.
    """
    kernel = LlrKernel(kernel)
    data.require_both_arms()
    x, y, b = data.x, data.y, data.b
    n = x.size
    left, right = x < b, x >= b
    n_l, n_r = int(left.sum()), int(right.sum())
    if n_l < 4 or n_r < 4:
        raise InsufficientSupport("each side needs at least four points for the IK selector")

    # step 1: density and conditional variances at the boundary
    h1 = IK_PILOT * float(np.std(x, ddof=1)) * n ** (-0.2)
    near_l = left & (x >= b - h1)
    near_r = right & (x <= b + h1)
    if near_l.sum() < 2 or near_r.sum() < 2:
        raise InsufficientSupport("pilot window leaves fewer than two points on a side")
    f_hat = (near_l.sum() + near_r.sum()) / (2.0 * n * h1)
    s2_l = float(np.var(y[near_l], ddof=1))
    s2_r = float(np.var(y[near_r], ddof=1))

    # step 2a: third derivative from a global cubic with a jump
    lo, hi = np.median(x[left]), np.median(x[right])
    mid = (x >= lo) & (x <= hi)
    u = x[mid] - b
    design = np.column_stack([np.ones(u.size), (u >= 0).astype(float), u, u**2, u**3])
    if mid.sum() < 5 or np.linalg.matrix_rank(design) < 5:
        raise InsufficientSupport("too few points between the side medians for the cubic fit")
    gamma, *_ = np.linalg.lstsq(design, y[mid], rcond=None)
    m3_sq = max((6.0 * gamma[4]) ** 2, IK_M3_FLOOR)

    # step 2b: second derivatives from local quadratics on each side
    def side_curvature(mask, s2, n_side, sign):
        h2 = IK_M2_PILOT * (s2 / (f_hat * m3_sq)) ** (1 / 7) * n_side ** (-1 / 7)
        d = sign * (x[mask] - b)
        inside = d <= h2
        if inside.sum() < 3:
            # widen to the three nearest points
            h2 = float(np.sort(d)[2])
            inside = d <= h2
        coef = _poly_fit(x[mask][inside] - b, y[mask][inside], 2)
        return 2.0 * coef[2], int(inside.sum()), h2

    m2_r, n2_r, h2_r = side_curvature(right, s2_r, n_r, 1.0)
    m2_l, n2_l, h2_l = side_curvature(left, s2_l, n_l, -1.0)

    # step 3: regularized plug-in
    r_r = IK_REG * s2_r / (n2_r * h2_r**4)
    r_l = IK_REG * s2_l / (n2_l * h2_l**4)
    denom = f_hat * ((m2_r - m2_l) ** 2 + r_r + r_l)
    h = IK_KERNEL_CONSTANT[kernel.value] * ((s2_l + s2_r) / denom) ** 0.2 * n ** (-0.2)
    if not (math.isfinite(h) and h > 0):
        raise InsufficientSupport(f"IK bandwidth is not a positive number ({h})")
    return float(min(h, np.max(np.abs(x - b))))
