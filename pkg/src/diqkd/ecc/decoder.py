"""Belief-propagation syndrome decoding with mixed per-bit priors.

Flooding-schedule sum-product decoding in the log-likelihood domain.
Check-node updates use the tanh rule with the syndrome bit folded in as
a sign, computed in sign/log-magnitude split form for stability:

    mu_{c->v} = 2 atanh( (-1)^{M_c} prod_{v' != v} tanh(mu_{v'->c} / 2) )

Messages are clipped to +-30. Decoding stops early as soon as the hard
decision satisfies the syndrome; the returned word is always re-checked
against the syndrome, so early termination never changes a reported
success.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from .code import ScLdpcCode, encode

LLR_CLIP = 30.0
PRIOR_CLIP = 1e-12
DEFAULT_MAX_ITERS = 200


@dataclass(frozen=True)
class DecoderPriors:
    """Joint distributions P(a, b) assumed by the decoder, one for test
    rounds (after folding the x = y = 1 outcome flip into b) and one for
    key rounds. Rows index Alice's bit, columns Bob's."""

    test_joint: np.ndarray
    key_joint: np.ndarray

    def __post_init__(self):
        for name in ("test_joint", "key_joint"):
            t = np.asarray(getattr(self, name), dtype=float)
            if t.shape != (2, 2) or (t < 0).any():
                raise ValueError(f"{name} must be a non-negative 2x2 matrix")
            if abs(t.sum() - 1.0) > 1e-9:
                raise ValueError(f"{name} sums to {t.sum()}, expected 1")
            object.__setattr__(self, name, t)

    @classmethod
    def from_parameters(cls, chsh_score: float, qber: float) -> "DecoderPriors":
        """Priors matching the two-parameter device model."""
        dp = (4.0 - chsh_score) / 8.0
        test = np.array([[(1 - dp) / 2, dp / 2], [dp / 2, (1 - dp) / 2]])
        key = np.array([[(1 - qber) / 2, qber / 2], [qber / 2, (1 - qber) / 2]])
        return cls(test_joint=test, key_joint=key)


def llr_vector(
    bob_bits: np.ndarray,
    settings: Sequence[Tuple[int, int]],
    priors: DecoderPriors,
) -> np.ndarray:
    """Per-bit log-likelihood ratios ln P(a=0, b) / ln P(a=1, b).

    `settings` holds (x, y) per round; y = 2 selects the key-round joint,
    otherwise the test-round joint with Bob's bit flipped when x = y = 1.
    Prior entries are clipped away from 0 before taking logs, so the
    result is always finite.
    """
    bob_bits = np.asarray(bob_bits, dtype=np.uint8)
    n = len(bob_bits)
    xs = np.fromiter((s[0] for s in settings), dtype=np.int64, count=n)
    ys = np.fromiter((s[1] for s in settings), dtype=np.int64, count=n)
    is_key = ys == 2
    b_eff = np.where((xs == 1) & (ys == 1), bob_bits ^ 1, bob_bits)

    def _llr_table(joint: np.ndarray) -> np.ndarray:
        j = np.clip(joint, PRIOR_CLIP, 1.0)
        return np.array(
            [math.log(j[0, b] / j[1, b]) for b in (0, 1)], dtype=np.float64
        )

    lt = _llr_table(priors.test_joint)
    lk = _llr_table(priors.key_joint)
    return np.where(is_key, lk[b_eff], lt[b_eff])


@dataclass
class DecodeResult:
    """Outcome of a decode attempt. `bits` is None on failure."""

    success: bool
    bits: Optional[np.ndarray]
    iterations: int


def decode(
    code: ScLdpcCode,
    bob_bits: np.ndarray,
    settings: Sequence[Tuple[int, int]],
    priors: DecoderPriors,
    syndrome: np.ndarray,
    max_iters: int = DEFAULT_MAX_ITERS,
) -> DecodeResult:
    """Reconstruct Alice's string from Bob's observations and the syndrome.

    The public shuffle is applied internally; the returned bits are in
    original (unshuffled) order. Failure to satisfy the syndrome within
    `max_iters` is reported via DecodeResult.success, not an exception.
    """
    syndrome = np.asarray(syndrome, dtype=np.uint8)
    if len(syndrome) != code.m_code:
        raise ValueError(f"expected {code.m_code} syndrome bits, got {len(syndrome)}")
    if len(bob_bits) != code.n_code:
        raise ValueError(f"expected {code.n_code} bits, got {len(bob_bits)}")

    llr = llr_vector(bob_bits, settings, priors)[code.shuffle]
    er, ec = code.edge_row, code.edge_col
    m, n = code.m_code, code.n_code
    syn_sign = 1.0 - 2.0 * syndrome[er].astype(np.float64)
    syn64 = syndrome.astype(np.int64)

    msg_vc = np.clip(llr[ec], -LLR_CLIP, LLR_CLIP)
    word = None
    for iteration in range(1, max_iters + 1):
        x = np.clip(np.abs(msg_vc), 1e-12, LLR_CLIP)
        log_mag = np.log(np.tanh(0.5 * x))
        is_neg = msg_vc < 0
        mag_sum = np.bincount(er, weights=log_mag, minlength=m)
        neg_sum = np.bincount(er, weights=is_neg.astype(np.float64), minlength=m)
        loo_mag = mag_sum[er] - log_mag
        loo_neg = (neg_sum[er].astype(np.int64) - is_neg) & 1
        sign = (1.0 - 2.0 * loo_neg) * syn_sign
        prod = np.minimum(np.exp(loo_mag), 1.0 - 1e-15)
        msg_cv = np.clip(sign * 2.0 * np.arctanh(prod), -LLR_CLIP, LLR_CLIP)

        total = llr + np.bincount(ec, weights=msg_cv, minlength=n)
        msg_vc = np.clip(total[ec] - msg_cv, -LLR_CLIP, LLR_CLIP)

        hard = (total < 0).astype(np.uint8)  # ties at 0 resolve to bit 0
        check = np.bincount(
            er, weights=hard[ec].astype(np.float64), minlength=m
        ).astype(np.int64) & 1
        if np.array_equal(check, syn64):
            word = hard
            break
    else:
        iteration = max_iters

    if word is None:
        return DecodeResult(success=False, bits=None, iterations=max_iters)

    inverse = np.empty_like(code.shuffle)
    inverse[code.shuffle] = np.arange(n)
    result = word[inverse]
    assert np.array_equal(encode(code, result), syndrome)
    return DecodeResult(success=True, bits=result, iterations=iteration)
