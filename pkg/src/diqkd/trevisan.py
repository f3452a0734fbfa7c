"""Quantum-proof strong randomness extraction (Trevisan construction).

The extractor concatenates one-bit extractor outputs, one per output
bit, each fed by a t-bit slice of the long seed selected by a weak
design. The one-bit extractor composes a Reed-Solomon code with a
Hadamard code: the first half of the slice picks an evaluation point
alpha in GF(2^(t/2)), the source is parsed as polynomial coefficients
over that field, and the output bit is the inner-product parity of the
evaluation with the second half of the slice.

Weak design
-----------
The design splits the seed into blocks of t_plus^2 positions, t_plus the
first prime >= t. Output indices are assigned to blocks with a
geometric schedule (each block takes ceil(remaining / e) indices), and
within block b the i-th assigned index gets the set

    { b * t_plus^2 + a * t_plus + p_i(a) : a = 0 .. t-1 },

where p_i is the i-th polynomial of degree < 2 over GF(t_plus) in
coefficient order (constants first, then lines slope-major). Sets in
different blocks never overlap. Within a block, sets with equal slope
never overlap and sets with different slopes overlap in at most one
position, so for every j:

    sum_{i<j} 2^{|S_j cap S_i|} <= (earlier blocks) + 2 (in-block pos)
                                <= (l - R_b) + 2 (ceil(R_b/e) - 1) <= l,

with R_b the indices remaining at block b; the construction verifies
this bound and the block capacity explicitly, giving overlap parameter
r = 1. The block count matches the geometric schedule, so the total
seed length is

    s = max(2, ceil((log(l-e) - log(t_plus-e)) / (log e - log(e-1))) + 1)
        * t_plus^2.

Per-index seed-slice convention (left open by the usual references):
slice bit j of set i is the seed bit at the evaluation-point-j element,
i.e. positions are consumed in evaluation order a = 0..t-1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List

import numpy as np

from . import bits as bitutil
from .gf2 import GF2m, poly_mod, clmul

UPSILON_B = 4.0 / math.log(2.0)

_MR_WITNESSES = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37)


class DesignError(ValueError):
    """Raised when no weak design with the required overlap bound fits."""


def is_prime(n: int) -> bool:
    """Deterministic Miller-Rabin, exact for n < 3.3e24."""
    if n < 2:
        return False
    for p in (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37):
        if n % p == 0:
            return n == p
    d, r = n - 1, 0
    while d % 2 == 0:
        d //= 2
        r += 1
    for a in _MR_WITNESSES:
        x = pow(a, d, n)
        if x in (1, n - 1):
            continue
        for _ in range(r - 1):
            x = x * x % n
            if x == n - 1:
                break
        else:
            return False
    return True


def next_prime(n: int) -> int:
    while not is_prime(n):
        n += 1
    return n


def upsilon(x: float, b: float = UPSILON_B) -> float:
    """Inverse of y -> y + b ln y on [1, inf), by safeguarded Newton.

    Converts an entropy budget into an extractable length; satisfies
    x - b ln x <= upsilon(x) <= x for x >= 1.
    """
    if b <= 0:
        raise ValueError("b must be positive")
    if x < 1.0:
        raise ValueError(f"argument {x} below the supported range [1, inf)")
    lo = max(1e-9, x - b * math.log(max(x, 2.0)))
    hi = x
    y = 0.5 * (lo + hi)
    for _ in range(200):
        f = y + b * math.log(y) - x
        if f > 0:
            hi = y
        else:
            lo = y
        step = y - f / (1.0 + b / y)
        y_next = step if lo < step < hi else 0.5 * (lo + hi)
        if abs(y_next - y) <= 1e-13 * max(1.0, abs(y_next)):
            return y_next
        y = y_next
    return y


def max_extractable(hmin: float, eps_pa: float) -> int:
    """Largest output length the entropy budget supports:
    floor(upsilon(hmin - 6 - 5 log2(1/eps_pa))), clamped at 0."""
    arg = hmin - 6.0 - 5.0 * math.log2(1.0 / eps_pa)
    if arg < 1.0:
        return 0
    return math.floor(upsilon(arg))


@dataclass(frozen=True)
class ExtractorParams:
    """Derived extraction parameters for (source bits, output bits, error).

    eps1 = eps_pa / ell is the per-bit error; t = 2 ceil(log2 n +
    2 log2(2/eps1)) the one-bit seed size; t_plus the first prime >= t;
    s the total seed length.
    """

    n: int
    ell: int
    eps_pa: float
    eps1: float
    t: int
    t_plus: int
    n_blocks: int
    s: int


def plan(n: int, ell: int, eps_pa: float) -> ExtractorParams:
    """Compute extractor parameters for a given source/output shape."""
    if ell < 1:
        raise ValueError("output length must be >= 1")
    if not 0.0 < eps_pa < 1.0:
        raise ValueError(f"eps_pa {eps_pa} outside (0, 1)")
    if n < 1:
        raise ValueError("source length must be >= 1")
    eps1 = eps_pa / ell
    t = 2 * math.ceil(math.log2(n) + 2.0 * math.log2(2.0 / eps1))
    t_plus = next_prime(t)
    e = math.e
    if ell > e and t_plus > e:
        ratio = (math.log2(ell - e) - math.log2(t_plus - e)) / (
            math.log2(e) - math.log2(e - 1.0)
        )
        n_blocks = max(2, math.ceil(ratio) + 1)
    else:
        n_blocks = 2
    return ExtractorParams(
        n=n, ell=ell, eps_pa=eps_pa, eps1=eps1, t=t, t_plus=t_plus,
        n_blocks=n_blocks, s=n_blocks * t_plus * t_plus,
    )


@dataclass(frozen=True)
class WeakDesign:
    """ell subsets of [s] of size t each, overlap parameter r = 1."""

    sets: List[np.ndarray]
    t: int
    s: int
    r: int = 1


def _block_counts(ell: int, n_blocks: int) -> List[int]:
    counts = []
    remaining = ell
    for b in range(n_blocks):
        if b == n_blocks - 1:
            take = remaining
        else:
            take = min(remaining, math.ceil(remaining / math.e))
        counts.append(take)
        remaining -= take
    if remaining > 0:
        raise DesignError(
            f"{remaining} output indices left over after {n_blocks} blocks"
        )
    return counts


def block_weak_design(params: ExtractorParams) -> WeakDesign:
    """Construct the block design described in the module docstring."""
    p, t, ell = params.t_plus, params.t, params.ell
    counts = _block_counts(ell, params.n_blocks)
    earlier = 0
    remaining = ell
    sets: List[np.ndarray] = []
    a_grid = np.arange(t, dtype=np.int64)
    for b, count in enumerate(counts):
        if count == 0:
            continue
        if count > p * p:
            raise DesignError(
                f"block {b} needs {count} sets, above the degree-1 capacity "
                f"{p * p}; decrease the output length or the per-bit error"
            )
        worst = (count - 1) if count <= p else 2 * (count - 1)
        if earlier + worst > ell:
            raise DesignError(
                "overlap budget exceeded: the requested shape cannot meet r = 1"
            )
        base = b * p * p
        for i in range(count):
            c0, c1 = i % p, i // p
            values = base + a_grid * p + (c0 + c1 * a_grid) % p
            sets.append(values)
        earlier += count
        remaining -= count
    return WeakDesign(sets=sets, t=t, s=params.s)


def verify_weak_design(design: WeakDesign, ell: int) -> bool:
    """Exhaustively check |S_i| = t and the overlap bound (quadratic)."""
    set_objs = [frozenset(map(int, s)) for s in design.sets]
    for s in set_objs:
        if len(s) != design.t:
            return False
    for j in range(len(set_objs)):
        total = sum(2 ** len(set_objs[j] & set_objs[i]) for i in range(j))
        if total > design.r * ell:
            return False
    return True


def _source_limbs(source: np.ndarray, w: int) -> List[int]:
    """Parse source bits into w-bit coefficients, LSB-first per limb."""
    n = len(source)
    n_limbs = (n + w - 1) // w
    padded = np.zeros(n_limbs * w, dtype=np.uint8)
    padded[:n] = source
    return [bitutil.bits_to_int(padded[i * w:(i + 1) * w]) for i in range(n_limbs)]


def _rs_hadamard_bit(field: GF2m, limbs: List[int], alpha_table, beta: int) -> int:
    """One-bit extractor: RS evaluation at alpha then Hadamard with beta.

    Evaluates y = sum_j limbs[j] * alpha^j by Horner from the top
    coefficient and returns parity(y & beta).
    """
    y = 0
    for c in reversed(limbs):
        y = field.mul_with_table(alpha_table, y) ^ c
    return (y & beta).bit_count() & 1


def extract(source: np.ndarray, seed: np.ndarray, params: ExtractorParams) -> np.ndarray:
    """Extract params.ell bits from the source under the given seed."""
    source = np.asarray(source, dtype=np.uint8)
    seed = np.asarray(seed, dtype=np.uint8)
    if len(source) != params.n:
        raise ValueError(f"expected {params.n} source bits, got {len(source)}")
    if len(seed) != params.s:
        raise ValueError(f"expected {params.s} seed bits, got {len(seed)}")
    design = block_weak_design(params)
    w = params.t // 2
    field = GF2m(w)
    limbs = _source_limbs(source, w)
    out = np.empty(params.ell, dtype=np.uint8)
    for i, positions in enumerate(design.sets):
        slice_bits = seed[positions]
        alpha = bitutil.bits_to_int(slice_bits[:w])
        beta = bitutil.bits_to_int(slice_bits[w:])
        out[i] = _rs_hadamard_bit(field, limbs, field.mul_table(alpha), beta)
    return out


def reference_extract(
    source: np.ndarray, seed: np.ndarray, params: ExtractorParams
) -> np.ndarray:
    """Plain transliteration of the two-hash composition, used as the
    test oracle for the optimized path.

    Field products are reduced bit-by-bit against the same pinned
    modulus, powers of alpha are accumulated term by term, and the
    Hadamard parity is an explicit loop.
    """
    source = np.asarray(source, dtype=np.uint8)
    seed = np.asarray(seed, dtype=np.uint8)
    design = block_weak_design(params)
    w = params.t // 2
    modulus = GF2m(w).modulus

    def field_mul(a: int, b: int) -> int:
        return poly_mod(clmul(a, b), modulus)

    limbs = _source_limbs(source, w)
    out = np.empty(params.ell, dtype=np.uint8)
    for i, positions in enumerate(design.sets):
        slice_bits = [int(seed[p]) for p in positions]
        alpha = sum(bit << j for j, bit in enumerate(slice_bits[:w]))
        beta_bits = slice_bits[w:]
        y = 0
        alpha_pow = 1
        for c in limbs:
            y ^= field_mul(c, alpha_pow)
            alpha_pow = field_mul(alpha_pow, alpha)
        bit = 0
        for j in range(w):
            bit ^= ((y >> j) & 1) & beta_bits[j]
        out[i] = bit
    return out
