import math
from fractions import Fraction

import numpy as np
import pytest

from diqkd import model


def test_test_round_joint_value():
    dev = model.DeviceModel.parametric(2.64, 0.018)
    # (1 + 0.66) / 4
    assert dev.joint_prob(0, 0, 0, 0) == pytest.approx(0.415, abs=1e-12)


def test_key_round_joint_value():
    dev = model.DeviceModel.parametric(2.64, 0.018)
    assert dev.joint_prob(0, 1, 0, 2) == pytest.approx(0.009, abs=1e-15)


def test_tables_normalized():
    dev = model.DeviceModel.parametric(2.3, 0.05)
    for pair in model.SETTING_PAIRS:
        assert abs(dev.tables[pair].sum() - 1.0) <= 1e-12


def test_flip_convention_on_one_one():
    # winning condition is a xor b = x*y, so (1,1) favours disagreement
    dev = model.DeviceModel.parametric(2.64, 0.018)
    assert dev.joint_prob(0, 1, 1, 1) > dev.joint_prob(0, 0, 1, 1)


def test_invalid_setting_pair():
    dev = model.DeviceModel.parametric(2.64, 0.018)
    with pytest.raises(model.InvalidSettingError):
        dev.joint_prob(0, 0, 1, 2)


def test_parametric_marginals_uniform():
    dev = model.DeviceModel.parametric(2.7, 0.02)
    for pair in model.TEST_PAIRS:
        t = dev.tables[pair]
        assert abs(t[0].sum() - 0.5) <= 1e-12
        assert abs(t[:, 0].sum() - 0.5) <= 1e-12


def test_parameter_ranges():
    with pytest.raises(ValueError):
        model.DeviceModel.parametric(2.0, 0.01)
    with pytest.raises(ValueError):
        model.DeviceModel.parametric(2.9, 0.01)
    with pytest.raises(ValueError):
        model.DeviceModel.parametric(2.64, 0.5)


def test_empirical_renormalizes_and_rejects():
    tables = {
        pair: [[0.25, 0.25], [0.25, 0.2501]] for pair in model.SETTING_PAIRS
    }
    dev = model.DeviceModel.empirical(tables)
    for pair in model.SETTING_PAIRS:
        assert abs(dev.tables[pair].sum() - 1.0) <= 1e-12
    bad = dict(tables)
    bad[(0, 0)] = [[0.3, 0.25], [0.25, 0.25]]  # sums to 1.05
    with pytest.raises(ValueError):
        model.DeviceModel.empirical(bad)


def test_empirical_file_loader(tmp_path):
    path = tmp_path / "table.txt"
    path.write_text(
        "# five setting pairs\n"
        "0 0 0.415 0.0688 0.0961 0.420\n"
        "0 1 0.439 0.0805 0.0735 0.4068\n"
        "1 0 0.3928 0.0916 0.0851 0.431\n"
        "1 1 0.0820 0.437 0.3970 0.0841\n"
        "0 2 0.5017 0.00339 0.0110 0.4839\n"
    )
    dev = model.load_empirical_table(path)
    assert dev.joint_prob(0, 0, 0, 0) == pytest.approx(0.415, rel=1e-3)
    # inverted convention swaps Alice's rows
    dev_inv = model.load_empirical_table(path, invert_alice=True)
    assert dev_inv.joint_prob(1, 0, 0, 0) == pytest.approx(
        dev.joint_prob(0, 0, 0, 0)
    )


def test_sample_round_determinism():
    dev = model.DeviceModel.parametric(2.64, 0.018)
    policy = model.InputPolicy(gamma=Fraction(13, 256))
    r1 = model.sample_round(dev, policy, np.random.default_rng(7), index=3)
    r2 = model.sample_round(dev, policy, np.random.default_rng(7), index=3)
    assert r1 == r2


def test_sample_round_forced_testing():
    dev = model.DeviceModel.parametric(2.64, 0.018)
    policy = model.InputPolicy(gamma=Fraction(1, 1))
    rng = np.random.default_rng(0)
    for i in range(200):
        r = model.sample_round(dev, policy, rng, index=i)
        assert r.t == 1 and r.y in (0, 1) and r.u in (0, 1)


def test_sample_round_key_round_override():
    dev = model.DeviceModel.parametric(2.64, 0.018)
    policy = model.InputPolicy(gamma=Fraction(1, 100))
    rng = np.random.default_rng(1)
    rounds = model.sample_rounds(dev, policy, rng, 500)
    for r in rounds:
        if r.t == 0:
            assert r.x == 0 and r.y == 2 and r.u is None


@pytest.mark.slow
def test_sample_round_test_fraction_concentration():
    dev = model.DeviceModel.parametric(2.64, 0.018)
    gamma = Fraction(13, 256)
    policy = model.InputPolicy(gamma=gamma)
    rng = np.random.default_rng(11)
    n = 1_000_000
    tests = sum(model.sample_round(dev, policy, rng, i).t for i in range(n))
    g = float(gamma)
    sigma = math.sqrt(g * (1 - g) / n)
    assert abs(tests / n - g) <= 3 * sigma


def test_chsh_statistics_extremes():
    rounds = [
        model.RoundData(index=0, x=0, y=0, t=1, a=0, b=0, u=1),
        model.RoundData(index=1, x=1, y=1, t=1, a=0, b=1, u=1),
        model.RoundData(index=2, x=0, y=2, t=0, a=1, b=1, u=None),
    ]
    omega, score, qber = model.chsh_statistics(rounds)
    assert omega == 1.0 and score == 4.0 and qber == 0.0


def test_chsh_statistics_classical_bound():
    rounds = []
    for i in range(4):
        won = i < 3  # 3 of 4 -> omega = 0.75
        rounds.append(
            model.RoundData(index=i, x=0, y=0, t=1, a=0, b=0 if won else 1,
                            u=1 if won else 0)
        )
    rounds.append(model.RoundData(index=4, x=0, y=2, t=0, a=0, b=0, u=None))
    omega, score, _ = model.chsh_statistics(rounds)
    assert omega == 0.75 and score == pytest.approx(2.0)


def test_chsh_statistics_empty_category():
    rounds = [model.RoundData(index=0, x=0, y=2, t=0, a=0, b=0, u=None)]
    with pytest.raises(model.UndefinedStatisticError):
        model.chsh_statistics(rounds)


@pytest.mark.slow
def test_chsh_statistics_monte_carlo():
    chsh, qber = 2.64, 0.018
    dev = model.DeviceModel.parametric(chsh, qber)
    policy = model.InputPolicy(gamma=Fraction(13, 256))
    rng = np.random.default_rng(5)
    n = 1_000_000
    rounds = model.sample_rounds(dev, policy, rng, n)
    omega, s_hat, q_hat = model.chsh_statistics(rounds)
    n_test = sum(r.t for r in rounds)
    n_key = n - n_test
    omega_exp = model.expected_winning_probability(chsh)
    sig_omega = math.sqrt(omega_exp * (1 - omega_exp) / n_test)
    sig_q = math.sqrt(qber * (1 - qber) / n_key)
    assert abs(s_hat - chsh) <= 3 * (8 * sig_omega)
    assert abs(q_hat - qber) <= 3 * sig_q


def test_completeness_threshold_reference_point():
    wth = model.completeness_threshold(0.83, Fraction(13, 256), 1_500_000, 3)
    assert wth == pytest.approx(0.825538, abs=5e-7)


def test_completeness_threshold_zero_allowance():
    assert model.completeness_threshold(0.83, 0.05, 10**6, 0) == pytest.approx(0.83)


def test_completeness_threshold_monotonicity():
    vals = [
        model.completeness_threshold(0.83, 0.05, n, 3)
        for n in (10**6, 10**8, 10**10)
    ]
    assert vals[0] < vals[1] < vals[2] < 0.83
    ks = [model.completeness_threshold(0.83, 0.05, 10**6, k) for k in (1, 2, 3)]
    assert ks[0] > ks[1] > ks[2]


def test_completeness_threshold_infeasible():
    with pytest.raises(model.InfeasibleThresholdError):
        model.completeness_threshold(0.7501, 0.05, 4, 3)
