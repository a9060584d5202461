import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gprdd.mcmc import adaptive_metropolis, effective_sample_size, split_rhat

COV = np.array([[1.0, 0.8], [0.8, 2.0]])
PREC = np.linalg.inv(COV)


def _gauss(z):
    return -0.5 * z @ PREC @ z, None


def test_adaptive_metropolis_recovers_correlated_gaussian():
    rng = np.random.default_rng(4)
    res = adaptive_metropolis(_gauss, np.array([3.0, -3.0]), np.eye(2) * 0.01, 12000, 2000, rng)
    s = res.samples
    assert s.shape == (10000, 2)
    ess = effective_sample_size(s[:, 0])
    np.testing.assert_allclose(s.mean(axis=0), 0.0, atol=4 * np.sqrt(2.0 / ess))
    np.testing.assert_allclose(np.cov(s.T), COV, rtol=0.2, atol=0.15)
    assert 0.15 <= res.accept_rate <= 0.45
    # the adapted proposal has picked up the correlation
    pc = res.proposal_cov
    assert pc[0, 1] / np.sqrt(pc[0, 0] * pc[1, 1]) > 0.4


def test_chain_is_deterministic_given_rng():
    a = adaptive_metropolis(_gauss, np.zeros(2), np.eye(2), 500, 200, np.random.default_rng(9))
    b = adaptive_metropolis(_gauss, np.zeros(2), np.eye(2), 500, 200, np.random.default_rng(9))
    assert np.array_equal(a.samples, b.samples)


def test_thinning_and_aux_alignment():
    def target(z):
        return -0.5 * float(z @ z), float(z[0])

    res = adaptive_metropolis(target, np.zeros(1), np.eye(1), 300, 100, np.random.default_rng(1), thin=4)
    assert len(res.samples) == 50
    assert [a for a in res.aux] == res.samples[:, 0].tolist()


def test_zero_density_start_rejected():
    with pytest.raises(ValueError):
        adaptive_metropolis(lambda z: (-np.inf, None), np.zeros(1), np.eye(1), 10, 5, np.random.default_rng(0))


def test_rhat_near_one_for_iid_chains():
    rng = np.random.default_rng(0)
    assert split_rhat(rng.normal(size=(4, 2000))) == pytest.approx(1.0, abs=0.01)


def test_rhat_flags_shifted_chain():
    rng = np.random.default_rng(0)
    chains = rng.normal(size=(4, 500))
    chains[0] += 2.0
    assert split_rhat(chains) > 1.1


def test_rhat_flags_trend_within_chain():
    # a single drifting chain is caught by the split
    chain = np.linspace(0, 5, 1000) + np.random.default_rng(1).normal(size=1000) * 0.1
    assert split_rhat(chain) > 1.5


def test_ess_iid_close_to_draw_count():
    rng = np.random.default_rng(2)
    ess = effective_sample_size(rng.normal(size=(4, 2500)))
    assert 0.85 * 10000 <= ess <= 1.15 * 10000


def _ar1(phi, n, rng):
    out = np.empty(n)
    out[0] = rng.normal() / np.sqrt(1 - phi**2)
    eps = rng.normal(size=n)
    for t in range(1, n):
        out[t] = phi * out[t - 1] + eps[t]
    return out


def test_ess_matches_ar1_theory():
    rng = np.random.default_rng(3)
    phi = 0.9
    chains = np.stack([_ar1(phi, 20000, rng) for _ in range(2)])
    expected = chains.size * (1 - phi) / (1 + phi)
    assert effective_sample_size(chains) == pytest.approx(expected, rel=0.25)


@given(st.floats(-100, 100), st.floats(0.01, 100))
def test_diagnostics_affine_invariant(shift, scale):
    rng = np.random.default_rng(7)
    chains = rng.normal(size=(3, 200)).cumsum(axis=1) * 0.1 + rng.normal(size=(3, 200))
    moved = shift + scale * chains
    assert split_rhat(moved) == pytest.approx(split_rhat(chains), rel=1e-6)
    assert effective_sample_size(moved) == pytest.approx(effective_sample_size(chains), rel=1e-6)
