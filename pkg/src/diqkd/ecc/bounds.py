"""Syndrome-length rule and finite-blocklength overhead bounds.

The reconciliation setting is asymmetric Slepian-Wolf coding: Alice sends
an m-bit syndrome of her n-bit string and Bob reconstructs it using his
correlated observations as side information. The test rounds behave as a
binary symmetric channel with crossover (4 - S)/8 and the key rounds as
one with crossover Q, so the asymptotically optimal overhead m/n is the
corresponding conditional-entropy mixture. The finite-size estimates here
use the normal approximation of the BSC coding rate.
"""

from __future__ import annotations

import math
from typing import Dict

from scipy.special import erfinv


def binary_entropy(x: float) -> float:
    """Binary entropy in bits; 0 at the endpoints."""
    if x <= 0.0 or x >= 1.0:
        return 0.0
    return -x * math.log2(x) - (1.0 - x) * math.log2(1.0 - x)


def gaussian_tail_inverse(eps: float) -> float:
    """Inverse of the upper Gaussian tail Q(x) = P(N(0,1) > x)."""
    if not 0.0 < eps < 1.0:
        raise ValueError(f"tail probability {eps} outside (0, 1)")
    return math.sqrt(2.0) * float(erfinv(1.0 - 2.0 * eps))


def test_round_crossover(chsh_score: float) -> float:
    """Crossover probability of the effective test-round channel."""
    return (4.0 - chsh_score) / 8.0


def syndrome_length(n: int, gamma: float, chsh_score: float, qber: float) -> int:
    """Practical syndrome length for the mixed test/key channel.

    m = ceil(n * ((1-gamma) h(Q) + gamma h((4-S)/8)) + 50 sqrt(n)). The
    sqrt(n) margin keeps the decoding success probability above 90% and
    absorbs moderate deviations of the real statistics from the model.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    gamma = float(gamma)
    if not 0 < gamma < 1:
        raise ValueError(f"gamma {gamma} outside (0, 1)")
    rate = (1.0 - gamma) * binary_entropy(qber) + gamma * binary_entropy(
        test_round_crossover(chsh_score)
    )
    return math.ceil(n * rate + 50.0 * math.sqrt(n))


def finite_bsc_bounds(n: int, delta: float, eps: float) -> Dict[str, float]:
    """Finite-size BSC capacity (normal approximation) and the matching
    minimum syndrome length.

    n*C = n(1 - h(delta)) - sqrt(n delta (1-delta)) log2((1-delta)/delta)
    * Qinv(eps) + (1/2) log2 n, with the O(1) term dropped; the syndrome
    bound is m = n (1 - C).
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if not 0.0 < delta < 0.5:
        raise ValueError(f"delta {delta} outside (0, 1/2)")
    if not 0.0 < eps < 1.0:
        raise ValueError(f"eps {eps} outside (0, 1)")
    n_cap = (
        n * (1.0 - binary_entropy(delta))
        - math.sqrt(n * delta * (1.0 - delta))
        * math.log2((1.0 - delta) / delta)
        * gaussian_tail_inverse(eps)
        + 0.5 * math.log2(n)
    )
    capacity = n_cap / n
    return {"capacity": capacity, "m_bsc": n * (1.0 - capacity)}


def _min_over_eps_prime(f, eps: float) -> float:
    """Minimize f over eps' in (0, eps) by log-spaced grid plus golden refine."""
    import numpy as np

    grid = eps * np.exp(np.linspace(math.log(1e-12), math.log(0.999), 512))
    vals = [f(float(e)) for e in grid]
    i = int(np.argmin(vals))
    lo = float(grid[max(0, i - 1)])
    hi = float(grid[min(len(grid) - 1, i + 1)])
    phi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c, d = b - phi * (b - a), a + phi * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(60):
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - phi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + phi * (b - a)
            fd = f(d)
    return min(vals[i], fc, fd)


def overhead_bounds(
    n: int, gamma: float, chsh_score: float, qber: float, eps: float = 1e-3
) -> Dict[str, float]:
    """Asymptotic and finite-size overhead estimates plus two reference
    bounds from schemes without efficient decoders.

    Returns eta_inf (conditional-entropy limit), eta_est (independent
    finite-size decoding of the two sub-channels at failure probability
    eps), and the syndrome lengths m_afrv and m_tsbsrsl of the two
    reference bounds, each minimized over the split of eps.
    """
    gamma = float(gamma)
    dp = test_round_crossover(chsh_score)
    dpp = qber
    eta_inf = gamma * binary_entropy(dp) + (1.0 - gamma) * binary_entropy(dpp)
    m_est = (
        finite_bsc_bounds(max(1, round(gamma * n)), dp, eps)["m_bsc"]
        + finite_bsc_bounds(max(1, round((1.0 - gamma) * n)), dpp, eps)["m_bsc"]
    )

    log2 = math.log2

    def afrv_tail(ep: float) -> float:
        return (
            4.0 * log2(2.0 * math.sqrt(2.0) + 1.0) * math.sqrt(2.0 * n * log2(8.0 / ep**2))
            + log2(8.0 / ep**2 + 2.0 / (2.0 - ep))
            + log2(1.0 / (eps - ep))
        )

    def tsbsrsl_tail(ep: float) -> float:
        return (
            2.0 * log2(5.0) * math.sqrt(n * log2(2.0 / ep**2))
            + 2.0 * log2(1.0 / (eps - ep))
            + 4.0
        )

    return {
        "eta_inf": eta_inf,
        "eta_est": m_est / n,
        "m_afrv": n * eta_inf + _min_over_eps_prime(afrv_tail, eps),
        "m_tsbsrsl": n * eta_inf + _min_over_eps_prime(tsbsrsl_tail, eps),
    }
