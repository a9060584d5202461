import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from gprdd.errors import EmptyArm
from gprdd.gp import KernelParams, MeanBasis, gp_conditional
from gprdd.model import Arm, Assumption, ModelSpec, RddDataset, arm_posterior, tau_conditional

K = KernelParams(0.4, 1.0, 0.05)


def _random_data(seed, n=30, b=0.0):
    rng = np.random.default_rng(seed)
    x = rng.uniform(-1, 1, n)
    x[0], x[1] = -0.5, 0.5  # both arms nonempty
    y = np.sin(2 * x) + 0.3 * (x >= b) + 0.1 * rng.normal(size=n)
    return RddDataset(x, y, b)


def test_sharp_assignment_includes_boundary():
    d = RddDataset([-0.1, 0.0, 0.2], [1, 2, 3], 0.0)
    assert d.w.tolist() == [0, 1, 1]
    assert d.arm_size(Arm.TREATED) == 2


def test_dataset_validation():
    with pytest.raises(ValueError):
        RddDataset([0.0, 1.0], [1.0], 0.0)
    with pytest.raises(ValueError):
        RddDataset([0.0, np.nan], [1.0, 2.0], 0.0)
    d = RddDataset([0.0, 1.0], [1.0, 2.0])
    with pytest.raises(ValueError):
        d.x[0] = 5.0  # read-only


def test_spec_kernel_count():
    with pytest.raises(ValueError):
        ModelSpec(Assumption.SAME_COVARIANCE, 2, (K, K))
    with pytest.raises(ValueError):
        ModelSpec(Assumption.STATIONARY, 2, (K,))
    assert ModelSpec("stationary", 2, (K, KernelParams(1, 1, 1))).n_kernels == 2


def test_single_point_at_boundary_is_interpolated():
    # a unit exactly at b is treated under the sharp rule, so the lone
    # boundary point lives in the treated arm
    spec = ModelSpec(mean_order=0, kernels=(KernelParams(0.5, 1.0, 0.0),))
    d = RddDataset([0.3, 0.1], [5.0, 1.25], 0.3)
    c = arm_posterior(d, spec, Arm.TREATED)
    assert c.mean == pytest.approx(5.0, rel=1e-7)


def test_arm_posterior_is_gp_conditional_on_subset():
    d = _random_data(1)
    spec = ModelSpec(mean_order=2, kernels=(K,), mean_treated=MeanBasis((0.1, 0.2)),
                     mean_control=MeanBasis((-0.1, 0.4)))
    for arm in Arm:
        x, y = d.arm(arm)
        direct = gp_conditional(x, y, spec.mean(arm), K, d.b)
        assert arm_posterior(d, spec, arm) == direct


def test_five_point_arm_oracle():
    x = np.array([-0.9, -0.6, -0.45, -0.2, -0.05, 0.3])
    y = np.array([0.1, 0.5, 0.3, 0.7, 0.6, 1.0])
    d = RddDataset(x, y, 0.0)
    spec = ModelSpec(mean_order=2, kernels=(K,), mean_control=MeanBasis((0.2, -0.3)))
    c = arm_posterior(d, spec, Arm.CONTROL)
    m, v = oracles.conditional(list(x[:5]), list(y[:5]), lambda t: 0.2 - 0.3 * t, K.lengthscale, K.variance,
                               K.noise, 0.0)
    assert c.mean == pytest.approx(m, rel=1e-10)
    assert c.variance == pytest.approx(v, rel=1e-9)


def test_empty_arm():
    d = RddDataset([0.1, 0.2], [1.0, 2.0], 0.0)
    spec = ModelSpec(kernels=(K,))
    with pytest.raises(EmptyArm):
        tau_conditional(d, spec)
    with pytest.raises(EmptyArm):
        arm_posterior(d, spec, Arm.CONTROL)


def test_mirrored_data_gives_zero_tau():
    rng = np.random.default_rng(5)
    xt = rng.uniform(0.01, 1, 20)
    yt = np.cos(xt) + rng.normal(size=20) * 0.1
    d = RddDataset(np.concatenate([xt, -xt]), np.concatenate([yt, yt]), 0.0)
    # mean basis symmetric under reflection: constant term only
    spec = ModelSpec(mean_order=1, kernels=(K,), mean_treated=MeanBasis((0.3,)), mean_control=MeanBasis((0.3,)))
    t = tau_conditional(d, spec)
    assert t.mean == 0.0


def test_one_point_per_arm_noiseless():
    d = RddDataset([0.0, -1e-12], [2.0, 0.5], 0.0)
    spec = ModelSpec(mean_order=0, kernels=(KernelParams(0.5, 1.0, 0.0),))
    t = tau_conditional(d, spec)
    assert t.mean == pytest.approx(1.5, rel=1e-7)
    assert 0 <= t.variance <= 1e-6


@given(st.integers(0, 10**6))
def test_variance_is_sum_of_arm_variances(seed):
    d = _random_data(seed)
    spec = ModelSpec("stationary", 2, (K, KernelParams(0.7, 0.5, 0.02)))
    t = tau_conditional(d, spec)
    assert t.variance == t.treated.variance + t.control.variance
    assert t.mean == t.treated.mean - t.control.mean


@given(st.integers(0, 10**6))
def test_swapping_arms_negates_tau(seed):
    d = _random_data(seed)
    spec = ModelSpec(mean_order=2, kernels=(K,), mean_treated=MeanBasis((0.1, 0.2)),
                     mean_control=MeanBasis((-0.1, 0.4)))
    t = tau_conditional(d, spec)
    # reflect around b so the arms trade places; points exactly at b are avoided by the generator
    mirror = RddDataset(2 * d.b - d.x, d.y, d.b)
    flipped = ModelSpec(mean_order=2, kernels=(K,), mean_treated=MeanBasis((-0.1, -0.4)),
                        mean_control=MeanBasis((0.1, -0.2)))
    s = tau_conditional(mirror, flipped)
    assert s.mean == pytest.approx(-t.mean, rel=1e-9, abs=1e-12)
    assert s.variance == pytest.approx(t.variance, rel=1e-9)


@given(st.integers(0, 10**6), st.floats(-5, 5))
def test_treated_shift_moves_tau(seed, c):
    d = _random_data(seed)
    spec = ModelSpec(mean_order=2, kernels=(K,), mean_treated=MeanBasis((0.1, 0.2)),
                     mean_control=MeanBasis((-0.1, 0.4)))
    shifted = RddDataset(d.x, d.y + c * d.w, d.b)
    moved = ModelSpec(mean_order=2, kernels=(K,), mean_treated=MeanBasis((0.1 + c, 0.2)),
                      mean_control=MeanBasis((-0.1, 0.4)))
    a = tau_conditional(d, spec)
    b = tau_conditional(shifted, moved)
    assert b.mean - a.mean == pytest.approx(c, abs=1e-9)


def test_noiseless_lines_recover_gap():
    x = np.linspace(-1, 1, 41)
    x = x[x != 0.0]
    y = np.where(x >= 0, 1.0 + 0.5 * x, 0.2 - 0.3 * x)
    d = RddDataset(x, y, 0.0)
    spec = ModelSpec(mean_order=2, kernels=(KernelParams(0.5, 1.0, 1e-8),),
                     mean_treated=MeanBasis((1.0, 0.5)), mean_control=MeanBasis((0.2, -0.3)))
    assert tau_conditional(d, spec).mean == pytest.approx(0.8, abs=1e-4)
    # and with a deliberately wrong mean basis the GP still interpolates the line
    spec = ModelSpec(mean_order=2, kernels=(KernelParams(0.5, 1.0, 1e-8),))
    assert tau_conditional(d, spec).mean == pytest.approx(0.8, abs=1e-4)
