import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from gprdd.dgps import DGP_NAMES, NOISE_SD, generate_replication, get_dgp
from gprdd.errors import InsufficientSupport
from gprdd.llr import (IK_KERNEL_CONSTANT, LlrKernel, cv_curve, default_bandwidth_grid, llr_arm_estimate, llr_tau,
                       local_fit, select_bandwidth_cv, select_bandwidth_ik)
from gprdd.model import Arm, RddDataset

KERNELS = [LlrKernel.TRIANGULAR, LlrKernel.RECTANGULAR]


def _line_data(n=60, seed=0, jump=1.0, noise=0.0):
    rng = np.random.default_rng(seed)
    x = rng.uniform(-1, 1, n)
    y = 0.5 + 2.0 * x + jump * (x >= 0) + noise * rng.normal(size=n)
    return RddDataset(x, y, 0.0)


def test_kernel_shapes():
    u = np.array([-1.5, -1.0, -0.5, 0.0, 0.25, 1.0, 2.0])
    assert LlrKernel.RECTANGULAR(u).tolist() == [0, 1, 1, 1, 1, 1, 0]
    assert LlrKernel.TRIANGULAR(u).tolist() == [0, 0, 0.5, 1, 0.75, 0, 0]


@pytest.mark.parametrize("kernel", KERNELS)
@pytest.mark.parametrize("h", [0.3, 0.8, 5.0])
def test_exact_line_is_reproduced(kernel, h):
    d = _line_data()
    fit = llr_arm_estimate(d, Arm.TREATED, h, kernel)
    assert fit.estimate == pytest.approx(1.5, abs=1e-10)
    np.testing.assert_allclose(fit.coef, [1.5, 2.0], atol=1e-10)
    assert llr_tau(d, h, kernel).tau_hat == pytest.approx(1.0, abs=1e-10)


def test_rectangular_window_equals_ols_on_covered_points():
    rng = np.random.default_rng(1)
    x = np.sort(rng.uniform(0, 1, 30))
    y = np.sin(4 * x) + rng.normal(size=30) * 0.1
    h = 0.5
    inside = np.abs(x) <= h
    pred, coef, _, n = local_fit(x, y, 0.0, h, LlrKernel.RECTANGULAR)
    ols = np.polyfit(x[inside], y[inside], 1)[::-1]
    assert n == inside.sum()
    np.testing.assert_allclose(coef, ols, rtol=1e-10)


def test_rectangular_wide_window_is_global_ols():
    d = _line_data(noise=0.3, seed=4)
    x, y = d.arm(Arm.CONTROL)
    fit = llr_arm_estimate(d, Arm.CONTROL, 10.0, LlrKernel.RECTANGULAR)
    np.testing.assert_allclose(fit.coef, np.polyfit(x, y, 1)[::-1], rtol=1e-10)


def test_six_point_triangular_oracle():
    x = [0.05, 0.12, 0.2, 0.31, 0.44, 0.6]
    y = [1.0, 1.3, 0.9, 1.6, 1.4, 2.0]
    pred, coef, _, n = local_fit(x, y, 0.0, 0.5, LlrKernel.TRIANGULAR)
    want, beta = oracles.wls_normal_equations(x, y, 0.0, 0.5, "triangular")
    assert pred == pytest.approx(want, rel=1e-12)
    np.testing.assert_allclose(coef, beta, rtol=1e-12)
    assert n == 5  # the point at 0.6 has zero weight


def test_quadratic_order_oracle():
    x = [0.05, 0.12, 0.2, 0.31, 0.44, 0.6, 0.7]
    y = [1.0, 1.3, 0.9, 1.6, 1.4, 2.0, 2.2]
    pred, coef, _, _ = local_fit(x, y, 0.0, 1.0, LlrKernel.TRIANGULAR, poly_order=2)
    want, beta = oracles.wls_normal_equations(x, y, 0.0, 1.0, "triangular", order=2)
    np.testing.assert_allclose(coef, beta, rtol=1e-10)


def test_hc1_variance_of_ols_fit():
    # with constant weights the sandwich equals the textbook HC1 formula
    x = np.array([0.1, 0.2, 0.4, 0.5, 0.9])
    y = np.array([1.0, 1.5, 1.2, 2.0, 2.2])
    _, coef, var, _ = local_fit(x, y, 0.0, 10.0, LlrKernel.RECTANGULAR)
    X = np.column_stack([np.ones(5), x])
    e = y - X @ coef
    bread = np.linalg.inv(X.T @ X)
    hc1 = 5 / 3 * bread @ (X.T * e**2) @ X @ bread
    assert var == pytest.approx(hc1[0, 0], rel=1e-10)


def test_insufficient_support():
    d = RddDataset([-0.5, 0.1, 0.9], [1.0, 2.0, 3.0], 0.0)
    with pytest.raises(InsufficientSupport):
        llr_tau(d, 0.5)  # one weighted point per arm
    with pytest.raises(InsufficientSupport):
        local_fit([0.2, 0.2, 0.2], [1, 2, 3], 0.0, 1.0)  # rank deficient
    with pytest.raises(ValueError):
        local_fit([0.1, 0.2], [1, 2], 0.0, 0.0)


def test_mirrored_data_zero_jump():
    rng = np.random.default_rng(2)
    xt = rng.uniform(0.01, 1, 25)
    yt = rng.normal(size=25)
    d = RddDataset(np.concatenate([xt, -xt]), np.concatenate([yt, yt]), 0.0)
    for kernel in KERNELS:
        assert llr_tau(d, 0.6, kernel).tau_hat == 0.0


def test_constructed_jump_recovered_within_three_se():
    d = _line_data(n=400, seed=3, jump=1.0, noise=0.3)
    fit = llr_tau(d, 0.5)
    assert abs(fit.tau_hat - 1.0) <= 3 * fit.se
    assert fit.lower <= fit.tau_hat <= fit.upper
    assert fit.h == 0.5 and fit.se > 0


@given(st.integers(0, 10**6), st.floats(-10, 10))
def test_treated_shift_is_equivariant(seed, c):
    d = _line_data(seed=seed, noise=0.2)
    a = llr_tau(d, 0.7)
    b = llr_tau(RddDataset(d.x, d.y + c * d.w, d.b), 0.7)
    assert b.tau_hat - a.tau_hat == pytest.approx(c, abs=1e-9)
    assert b.se == pytest.approx(a.se, rel=1e-6, abs=1e-12)


@given(st.integers(0, 10**6), st.floats(1e-3, 1e3))
def test_weight_scale_invariance(seed, scale):
    rng = np.random.default_rng(seed)
    x = rng.uniform(0, 1, 20)
    y = rng.normal(size=20)
    base, beta = oracles.wls_normal_equations(list(x), list(y), 0.0, 0.8, "triangular")
    pred, coef, _, _ = local_fit(x, y, 0.0, 0.8)
    assert pred == pytest.approx(base, rel=1e-8, abs=1e-10)
    u = x
    w = np.clip(1 - np.abs(u / 0.8), 0, None)
    X = np.column_stack([np.ones_like(u), u])
    scaled = np.linalg.solve(X.T @ (X * (scale * w)[:, None]), X.T @ (scale * w * y))
    np.testing.assert_allclose(scaled, coef, rtol=1e-7, atol=1e-9)


def test_ci_width_scales_root_n():
    h = 0.5
    widths = {}
    for n in (200, 800):
        ws = []
        for rep in range(40):
            d = _line_data(n=n, seed=1000 * n + rep, noise=0.3)
            f = llr_tau(d, h)
            ws.append(f.upper - f.lower)
        widths[n] = np.mean(ws)
    assert 1.6 <= widths[200] / widths[800] <= 2.4


# ---------------------------------------------------------------- cross-validation


def _cv_enumeration(data, grid, kernel):
    """Direct loop over evaluation points with the normal-equations oracle."""
    losses = []
    for h in grid:
        total = 0.0
        ok = True
        for arm, sign in ((Arm.TREATED, 1.0), (Arm.CONTROL, -1.0)):
            x, y = data.arm(arm)
            u = sign * (x - data.b)
            order = np.argsort(u)
            u, y = u[order], y[order]
            for i in range(u.size // 2):
                out = u > u[i]
                pts_u, pts_y = list(u[out]), list(y[out])
                w = [max(0.0, 1 - abs((p - u[i]) / h)) for p in pts_u] if kernel == "triangular" else \
                    [1.0 if abs((p - u[i]) / h) <= 1 else 0.0 for p in pts_u]
                if sum(wi > 0 for wi in w) < 2:
                    ok = False
                    break
                pred, _ = oracles.wls_normal_equations(pts_u, pts_y, u[i], h, kernel)
                total += (y[i] - pred) ** 2
            if not ok:
                break
        losses.append(total if ok else math.inf)
    return np.array(losses)


@pytest.mark.parametrize("kernel", ["triangular", "rectangular"])
def test_cv_curve_matches_enumeration(kernel):
    rng = np.random.default_rng(6)
    x = rng.uniform(-1, 1, 40)
    y = 0.2 * rng.normal(size=40)  # flat, pure noise
    d = RddDataset(x, y, 0.0)
    grid = default_bandwidth_grid(d, 8)
    _, loss = cv_curve(d, kernel, grid)
    want = _cv_enumeration(d, grid, kernel)
    finite = np.isfinite(want)
    assert np.array_equal(np.isfinite(loss), finite)
    np.testing.assert_allclose(loss[finite], want[finite], rtol=1e-8)
    best = want[finite].min()
    assert select_bandwidth_cv(d, kernel, grid) == grid[finite & (want <= best * (1 + 1e-12))].max()


def test_cv_prefers_wide_windows_on_pure_noise():
    # pure-noise flat data: the widest window wins on average
    picks = []
    for seed in range(20):
        rng = np.random.default_rng(seed)
        d = RddDataset(rng.uniform(-1, 1, 200), rng.normal(size=200), 0.0)
        grid = default_bandwidth_grid(d, 10)
        picks.append(select_bandwidth_cv(d, grid=grid) == grid[-1])
    assert np.mean(picks) >= 0.5


def test_cv_exact_line_ties_to_largest():
    d = _line_data(n=80, seed=2)
    grid = default_bandwidth_grid(d, 12)
    assert select_bandwidth_cv(d, grid=grid) == grid[-1]


def test_cv_single_grid_value():
    d = _line_data(n=80, seed=2, noise=0.1)
    assert select_bandwidth_cv(d, grid=[0.7]) == 0.7


def test_cv_grid_validation_and_support():
    d = _line_data(n=40)
    with pytest.raises(ValueError):
        select_bandwidth_cv(d, grid=[])
    with pytest.raises(ValueError):
        select_bandwidth_cv(d, grid=[0.5, -1.0])
    with pytest.raises(InsufficientSupport):
        select_bandwidth_cv(d, grid=[1e-6])


# ---------------------------------------------------------------- IK


@pytest.mark.parametrize("name", DGP_NAMES)
def test_ik_positive_and_within_range(name):
    d = generate_replication(get_dgp(name), 500, 17)
    for kernel in KERNELS:
        h = select_bandwidth_ik(d, kernel)
        assert 0 < h <= np.ptp(d.x)


@pytest.mark.parametrize("c", [0.5, 2.0])
def test_ik_response_scaling_is_bounded(c):
    d = generate_replication(get_dgp("quad"), 500, 5)
    h = select_bandwidth_ik(d)
    hc = select_bandwidth_ik(RddDataset(d.x, c * d.y, d.b))
    assert abs(hc / h - 1) < 0.5


def test_ik_larger_noise_gives_larger_bandwidth():
    dgp = get_dgp("quad")
    small, large = [], []
    for rep in range(50):
        d = generate_replication(dgp, 500, [3, rep])
        rng = np.random.default_rng([9, rep])
        # top the noise sd up from 0.1295 to 0.4 on the same draw
        extra = rng.normal(size=d.n) * math.sqrt(0.4**2 - NOISE_SD**2)
        small.append(select_bandwidth_ik(d))
        large.append(select_bandwidth_ik(RddDataset(d.x, d.y + extra, d.b)))
    assert np.mean(large) > np.mean(small)


def test_ik_kernel_constant_ratio():
    d = generate_replication(get_dgp("lee"), 500, 1)
    ratio = select_bandwidth_ik(d, LlrKernel.RECTANGULAR) / select_bandwidth_ik(d, LlrKernel.TRIANGULAR)
    want = oracles.boundary_kernel_constant(lambda u: 1.0) / oracles.boundary_kernel_constant(lambda u: 1.0 - u)
    assert ratio == pytest.approx(want, rel=1e-4)


@pytest.mark.parametrize("kernel, shape", [(LlrKernel.TRIANGULAR, lambda u: 1.0 - u),
                                           (LlrKernel.RECTANGULAR, lambda u: 1.0)])
def test_ik_kernel_constant_matches_quadrature(kernel, shape):
    assert IK_KERNEL_CONSTANT[kernel.value] == pytest.approx(oracles.boundary_kernel_constant(shape), rel=1e-4)


def test_ik_needs_points_on_both_sides():
    with pytest.raises(InsufficientSupport):
        select_bandwidth_ik(RddDataset([-0.5, -0.2, 0.1, 0.3, 0.5, 0.7], [1, 2, 3, 4, 5, 6], 0.0))
