import math

import numpy as np
import pytest

from diqkd import ecc
from diqkd.ecc.bounds import binary_entropy
from diqkd.ecc.code import ScLdpcCode


def _bsc_code(n, m, seed):
    return ecc.build_for_target(n, m, rng=np.random.default_rng(seed))


def _bsc_sample(n, delta, rng):
    a = rng.integers(0, 2, n, dtype=np.uint8)
    b = a ^ (rng.random(n) < delta).astype(np.uint8)
    return a, b


def _bsc_priors(delta):
    return ecc.DecoderPriors.from_parameters(4.0 - 8.0 * delta, delta)


def _key_settings(n):
    return [(0, 2)] * n


def test_priors_validation():
    with pytest.raises(ValueError):
        ecc.DecoderPriors(
            test_joint=np.array([[0.5, 0.5], [0.5, 0.5]]),
            key_joint=np.array([[0.25] * 2] * 2),
        )


def test_llr_vector_conventions():
    priors = ecc.DecoderPriors.from_parameters(2.64, 0.018)
    bob = np.array([0, 1, 0, 0], dtype=np.uint8)
    settings = [(0, 0), (0, 2), (1, 1), (0, 2)]
    llr = ecc.llr_vector(bob, settings, priors)
    # b=0 on an agreeing channel favours a=0 (positive LLR)
    assert llr[0] > 0
    # key round with b=1 favours a=1
    assert llr[1] < 0
    # x=y=1 flips Bob's bit: b=0 acts like b=1
    assert llr[2] < 0
    assert llr[1] == pytest.approx(-llr[3])


def test_decode_perfect_side_information():
    # degenerate noiseless channel: Bob's string equals Alice's
    n, m = 600, 320
    code = _bsc_code(n, m, seed=2)
    rng = np.random.default_rng(0)
    a = rng.integers(0, 2, n, dtype=np.uint8)
    priors = _bsc_priors(1e-9)
    syn = ecc.encode(code, a)
    res = ecc.decode(code, a.copy(), _key_settings(n), priors, syn)
    assert res.success and res.iterations <= 1
    assert np.array_equal(res.bits, a)


def test_decode_moderate_noise():
    n, m = 4000, 2000
    code = _bsc_code(n, m, seed=3)
    rng = np.random.default_rng(1)
    a, b = _bsc_sample(n, 0.05, rng)
    syn = ecc.encode(code, a)
    res = ecc.decode(code, b, _key_settings(n), _bsc_priors(0.05), syn)
    assert res.success
    assert np.array_equal(res.bits, a)


def test_decode_failure_is_reported_not_raised():
    n, m = 2000, 500  # far below the conditional entropy for delta = 0.11
    code = _bsc_code(n, m, seed=4)
    rng = np.random.default_rng(2)
    a, b = _bsc_sample(n, 0.11, rng)
    syn = ecc.encode(code, a)
    res = ecc.decode(code, b, _key_settings(n), _bsc_priors(0.11), syn, max_iters=30)
    assert not res.success and res.bits is None and res.iterations == 30


def test_decode_deterministic():
    n, m = 4000, 2000
    code = _bsc_code(n, m, seed=5)
    rng = np.random.default_rng(3)
    a, b = _bsc_sample(n, 0.05, rng)
    syn = ecc.encode(code, a)
    r1 = ecc.decode(code, b, _key_settings(n), _bsc_priors(0.05), syn)
    r2 = ecc.decode(code, b, _key_settings(n), _bsc_priors(0.05), syn)
    assert r1.success and r2.success
    assert r1.iterations == r2.iterations
    assert np.array_equal(r1.bits, r2.bits)


def test_decode_success_satisfies_syndrome():
    # the self-check inside decode re-encodes; verify externally as well
    n, m = 2000, 1000
    code = _bsc_code(n, m, seed=6)
    rng = np.random.default_rng(4)
    a, b = _bsc_sample(n, 0.04, rng)
    syn = ecc.encode(code, a)
    res = ecc.decode(code, b, _key_settings(n), _bsc_priors(0.04), syn)
    assert res.success
    assert np.array_equal(ecc.encode(code, res.bits), syn)


def test_zero_llr_bit_resolved_by_parity():
    # hand-built 4x4 parity structure, every column degree 2
    code = ScLdpcCode(
        n_code=4, m_code=4,
        edge_row=np.array([0, 0, 1, 1, 2, 2, 3, 3]),
        edge_col=np.array([0, 1, 2, 3, 0, 2, 1, 3]),
        lineage={"d_v": 2, "d_c": 2, "coupling": 1, "width": 0, "lifting": 1,
                 "removed_vars": 0, "merged_checks": 0},
        shuffle_seed=0,
    )
    a = np.array([1, 0, 1, 1], dtype=np.uint8)
    syn = ecc.encode(code, a)
    near_one = np.array([[0.499, 0.001], [0.001, 0.499]])
    flat = np.array([[0.25, 0.25], [0.25, 0.25]])
    priors = ecc.DecoderPriors(test_joint=flat, key_joint=near_one)
    # bit 0 carries no channel information (test joint is flat -> LLR 0);
    # parity with the three known bits pins it
    settings = [(0, 0)] + [(0, 2)] * 3
    res = ecc.decode(code, a.copy(), settings, priors, syn, max_iters=20)
    assert res.success
    assert np.array_equal(res.bits, a)

    # two unknown bits sharing both their checks cannot be pinned: tanh(0)
    # kills every check-to-variable message between them and decoding fails
    code2 = ScLdpcCode(
        n_code=4, m_code=4,
        edge_row=np.array([0, 0, 1, 1, 2, 2, 3, 3]),
        edge_col=np.array([0, 1, 0, 1, 2, 3, 2, 3]),
        lineage=dict(code.lineage),
        shuffle_seed=0,
    )
    unknown = {int(code2.shuffle[0]), int(code2.shuffle[1])}
    settings2 = [(0, 0) if i in unknown else (0, 2) for i in range(4)]
    a2 = np.zeros(4, dtype=np.uint8)
    a2[code2.shuffle[0]] = 1  # odd parity across the unknown pair
    syn2 = ecc.encode(code2, a2)
    observed = np.zeros(4, dtype=np.uint8)
    res2 = ecc.decode(code2, observed, settings2, priors, syn2, max_iters=20)
    assert not res2.success


def test_shuffle_neutrality():
    # permuting inputs consistently with a relabeled code leaves the
    # decoded string equivalent under the same permutation
    n, m = 2000, 1000
    code = _bsc_code(n, m, seed=8)
    rng = np.random.default_rng(5)
    a, b = _bsc_sample(n, 0.04, rng)
    syn = ecc.encode(code, a)
    res = ecc.decode(code, b, _key_settings(n), _bsc_priors(0.04), syn)
    assert res.success

    perm = rng.permutation(n)
    inv = np.empty_like(perm)
    inv[perm] = np.arange(n)
    # rename the rounds by perm: inputs are permuted and the public shuffle
    # is composed so each codeword position keeps the same physical bit
    code2 = ScLdpcCode(
        n_code=n, m_code=m,
        edge_row=code.edge_row.copy(),
        edge_col=code.edge_col.copy(),
        lineage=dict(code.lineage),
        shuffle_seed=code.shuffle_seed,
    )
    code2._shuffle = inv[code.shuffle]
    a_p, b_p = a[perm], b[perm]
    syn_p = ecc.encode(code2, a_p)
    assert np.array_equal(syn_p, syn)
    res_p = ecc.decode(code2, b_p, _key_settings(n), _bsc_priors(0.04), syn_p)
    assert res_p.success
    assert np.array_equal(res_p.bits, res.bits[perm])


@pytest.mark.slow
def test_rate_monotonicity_ladder():
    # success probability non-decreasing in the syndrome length at n = 1e4
    n = 10_000
    gamma, chsh, qber = 13 / 256, 2.6507, 0.0239
    priors = ecc.DecoderPriors.from_parameters(chsh, qber)
    dp = (4.0 - chsh) / 8.0
    rates = []
    for eta in (0.20, 0.26, 0.40):
        m = int(round(eta * n))
        wins = 0
        trials = 6
        for trial in range(trials):
            rng = np.random.default_rng(1000 + trial)
            code = ecc.build_for_target(n, m, rng=rng)
            is_test = rng.random(n) < gamma
            a = rng.integers(0, 2, n, dtype=np.uint8)
            b = a ^ np.where(is_test, rng.random(n) < dp,
                             rng.random(n) < qber).astype(np.uint8)
            settings = [(0, 0) if t else (0, 2) for t in is_test]
            syn = ecc.encode(code, a)
            res = ecc.decode(code, b, settings, priors, syn, max_iters=300)
            wins += bool(res.success and np.array_equal(res.bits, a))
        rates.append(wins / trials)
    assert rates[0] <= rates[1] <= rates[2]
    assert rates[2] == 1.0


@pytest.mark.slow
def test_pure_bsc_capacity_bracketing():
    # single BSC(0.05) at n = 1e5: overhead h+0.03 should decode >= 90%,
    # overhead h-0.02 (below the conditional entropy) at most 10%
    n = 100_000
    delta = 0.05
    priors = _bsc_priors(delta)
    results = {}
    for label, eta, trials in (
        ("above", binary_entropy(delta) + 0.03, 10),
        ("below", binary_entropy(delta) - 0.02, 10),
    ):
        m = int(round(eta * n))
        wins = 0
        for trial in range(trials):
            rng = np.random.default_rng(7000 + trial)
            code = ecc.build_for_target(n, m, rng=rng)
            a, b = _bsc_sample(n, delta, rng)
            syn = ecc.encode(code, a)
            res = ecc.decode(
                code, b, _key_settings(n), priors, syn, max_iters=800
            )
            wins += bool(res.success and np.array_equal(res.bits, a))
        results[label] = wins / trials
    assert results["below"] <= 0.10, results
    assert results["above"] >= 0.90, results
