"""Arithmetic in GF(2^w) with pinned field representations.

Field elements are Python ints holding polynomial coefficients over
GF(2), bit i = coefficient of x^i. Every field size uses the lowest
irreducible polynomial of its degree (smallest integer encoding of the
form x^w + lower terms that passes a deterministic irreducibility test),
so representations are reproducible without shipping a data file.

Multiplication uses 4-bit-window carryless multiply plus nibble-table
modular folding; both cost O(w) int operations.
"""

from __future__ import annotations

from functools import lru_cache
from typing import List


def clmul(a: int, b: int) -> int:
    """Carryless (polynomial) product of two non-negative ints."""
    table = _window_table(a)
    acc = 0
    shift = 0
    while b:
        acc ^= table[b & 0xF] << shift
        b >>= 4
        shift += 4
    return acc


def _window_table(a: int) -> List[int]:
    t = [0] * 16
    t[1] = a
    for i in range(2, 16):
        t[i] = (t[i >> 1] << 1) ^ (a if i & 1 else 0)
    return t


def poly_mod(p: int, f: int) -> int:
    """Remainder of p modulo f, bit-by-bit."""
    df = f.bit_length() - 1
    while p.bit_length() - 1 >= df:
        p ^= f << (p.bit_length() - 1 - df)
    return p


def _poly_gcd(a: int, b: int) -> int:
    while b:
        a, b = b, poly_mod(a, b)
    return a


def _poly_powmod_x(exp_log2: int, f: int) -> int:
    """x^(2^exp_log2) mod f via repeated squaring of polynomials."""
    r = 2  # the polynomial x
    df = f.bit_length() - 1
    for _ in range(exp_log2):
        r = poly_mod(clmul(r, r), f)
        assert r.bit_length() - 1 < df
    return r


def _prime_factors(n: int) -> List[int]:
    out = []
    d = 2
    while d * d <= n:
        if n % d == 0:
            out.append(d)
            while n % d == 0:
                n //= d
        d += 1
    if n > 1:
        out.append(n)
    return out


def is_irreducible(f: int) -> bool:
    """Deterministic irreducibility test for a GF(2) polynomial.

    f of degree w is irreducible iff x^(2^w) = x mod f and, for every
    prime divisor q of w, gcd(x^(2^(w/q)) - x, f) = 1.
    """
    w = f.bit_length() - 1
    if w < 1:
        return False
    if not f & 1:  # divisible by x
        return w == 1 and f == 2
    if _poly_powmod_x(w, f) != 2:
        return False
    for q in _prime_factors(w):
        g = _poly_gcd(_poly_powmod_x(w // q, f) ^ 2, f)
        if g != 1:
            return False
    return True


@lru_cache(maxsize=None)
def lowest_irreducible(w: int) -> int:
    """Smallest-integer-encoding irreducible polynomial of degree w."""
    if w < 1:
        raise ValueError("degree must be >= 1")
    if w == 1:
        return 0b10  # x
    for low in range(1, 1 << w, 2):  # constant term must be 1
        f = (1 << w) | low
        if is_irreducible(f):
            return f
    raise RuntimeError(f"no irreducible polynomial of degree {w} found")


class GF2m:
    """GF(2^w) with the pinned modulus for its degree."""

    def __init__(self, w: int):
        self.w = w
        self.modulus = lowest_irreducible(w)
        self.mask = (1 << w) - 1
        # fold_tables[pos][nib]: (nib << (w + 4*pos)) mod modulus
        n_pos = (w + 3) // 4
        self.fold_tables = []
        for pos in range(n_pos):
            row = [poly_mod(nib << (w + 4 * pos), self.modulus) for nib in range(16)]
            self.fold_tables.append(row)

    def reduce(self, p: int) -> int:
        """Reduce a product of two field elements (< 2^(2w-1))."""
        high = p >> self.w
        acc = p & self.mask
        pos = 0
        while high:
            acc ^= self.fold_tables[pos][high & 0xF]
            high >>= 4
            pos += 1
        return acc

    def mul(self, a: int, b: int) -> int:
        return self.reduce(clmul(a, b))

    def mul_table(self, a: int) -> List[int]:
        """Precomputed window table for repeated multiplication by a."""
        return _window_table(a)

    def mul_with_table(self, table: List[int], b: int) -> int:
        """Multiply using a precomputed window table of the left factor."""
        acc = 0
        shift = 0
        while b:
            acc ^= table[b & 0xF] << shift
            b >>= 4
            shift += 4
        return self.reduce(acc)

    def pow(self, a: int, e: int) -> int:
        r = 1
        base = a
        while e:
            if e & 1:
                r = self.mul(r, base)
            base = self.mul(base, base)
            e >>= 1
        return r
