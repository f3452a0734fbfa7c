import math

import numpy as np
import pytest

from diqkd import model
from diqkd.ecc import bounds


def test_binary_entropy_basics():
    assert bounds.binary_entropy(0.0) == 0.0
    assert bounds.binary_entropy(1.0) == 0.0
    assert bounds.binary_entropy(0.5) == pytest.approx(1.0)
    assert bounds.binary_entropy(0.11) == pytest.approx(0.49992, abs=1e-4)


def test_gaussian_tail_inverse_reference():
    assert bounds.gaussian_tail_inverse(1e-3) == pytest.approx(3.0902, abs=1e-3)
    assert bounds.gaussian_tail_inverse(0.5) == pytest.approx(0.0, abs=1e-12)


def test_syndrome_length_reference_point():
    m = bounds.syndrome_length(1_500_000, 13 / 256, 2.64, 0.018)
    assert 296457 <= m <= 296577


def test_syndrome_length_zero_entropy_limit():
    # Q = 0 and S = 4 zero both entropy terms, leaving only the margin
    n = 40_000
    m = bounds.syndrome_length(n, 13 / 256, 4.0, 0.0)
    assert m == math.ceil(50.0 * math.sqrt(n))


def test_finite_bsc_asymptotics():
    delta = 0.11
    res = bounds.finite_bsc_bounds(10**9, delta, 1e-3)
    assert res["m_bsc"] / 10**9 == pytest.approx(
        bounds.binary_entropy(delta), abs=1e-3
    )


def test_finite_bsc_noiseless_limit():
    n = 10**6
    res = bounds.finite_bsc_bounds(n, 1e-12, 1e-3)
    assert res["capacity"] == pytest.approx(1.0 + math.log2(n) / (2 * n), abs=1e-6)


def test_finite_bsc_domain_errors():
    with pytest.raises(ValueError):
        bounds.finite_bsc_bounds(100, 0.0, 1e-3)
    with pytest.raises(ValueError):
        bounds.finite_bsc_bounds(100, 0.5, 1e-3)
    with pytest.raises(ValueError):
        bounds.finite_bsc_bounds(100, 0.1, 0.0)


def _conditional_entropy_oracle(joint):
    """H(A|B) from a 2x2 joint via H(A,B) - H(B)."""
    joint = np.asarray(joint, dtype=float)
    pb = joint.sum(axis=0)
    h_joint = -sum(p * math.log2(p) for p in joint.reshape(-1) if p > 0)
    h_b = -sum(p * math.log2(p) for p in pb if p > 0)
    return h_joint - h_b


def test_eta_inf_matches_model_entropy_oracle():
    # independent route: conditional entropies straight from the model tables
    gamma, chsh, qber = 13 / 256, 2.6507, 0.0239
    dev = model.DeviceModel.parametric(chsh, qber)
    test_joint = dev.tables[(0, 0)]
    key_joint = dev.tables[(0, 2)]
    expected = gamma * _conditional_entropy_oracle(test_joint) + (
        1 - gamma
    ) * _conditional_entropy_oracle(key_joint)
    got = bounds.overhead_bounds(5_000_000, gamma, chsh, qber)["eta_inf"]
    assert got == pytest.approx(expected, abs=1e-12)


def test_finite_size_estimate_frozen_value():
    res = bounds.overhead_bounds(5_000_000, 13 / 256, 2.6507, 0.0239, eps=1e-3)
    assert res["eta_est"] == pytest.approx(0.18915, abs=2e-4)


def test_reference_bounds_ordering():
    n = 5_000_000
    res = bounds.overhead_bounds(n, 13 / 256, 2.6507, 0.0239, eps=1e-3)
    assert res["m_afrv"] > n * res["eta_inf"]
    assert res["m_tsbsrsl"] > n * res["eta_inf"]
    # the general-purpose bound is markedly looser than the tighter one
    assert res["m_afrv"] > res["m_tsbsrsl"]
