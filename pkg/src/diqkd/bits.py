"""Packed-bit utilities and the shared bit-string file format.

Bit strings are numpy arrays of dtype uint8 with values in {0, 1}.
Packing is LSB-first within each byte: bit i lives in byte i // 8 at
position i % 8. Files carry an 8-byte little-endian bit count followed
by the packed payload.
"""

from __future__ import annotations

import struct

import numpy as np


def pack_bits(bits: np.ndarray) -> bytes:
    """Pack a 0/1 array into bytes, LSB-first within each byte."""
    bits = np.asarray(bits, dtype=np.uint8)
    if bits.ndim != 1:
        raise ValueError("expected a 1-d bit array")
    return np.packbits(bits, bitorder="little").tobytes()


def unpack_bits(data: bytes, nbits: int) -> np.ndarray:
    """Unpack `nbits` bits from LSB-first packed bytes."""
    if len(data) * 8 < nbits:
        raise ValueError(f"need {nbits} bits, got {len(data) * 8}")
    arr = np.frombuffer(data, dtype=np.uint8)
    return np.unpackbits(arr, bitorder="little")[:nbits].copy()


def bits_to_int(bits: np.ndarray) -> int:
    """Interpret bits LSB-first as an unsigned integer."""
    return int.from_bytes(pack_bits(bits), "little")


def int_to_bits(value: int, nbits: int) -> np.ndarray:
    """Inverse of :func:`bits_to_int`."""
    if value < 0 or value >> nbits:
        raise ValueError(f"{value} does not fit in {nbits} bits")
    nbytes = (nbits + 7) // 8
    return unpack_bits(value.to_bytes(nbytes, "little"), nbits)


def write_bit_file(path, bits: np.ndarray) -> None:
    """Write a bit string with the 8-byte length header."""
    with open(path, "wb") as f:
        f.write(struct.pack("<Q", len(bits)))
        f.write(pack_bits(bits))


def read_bit_file(path) -> np.ndarray:
    with open(path, "rb") as f:
        (nbits,) = struct.unpack("<Q", f.read(8))
        data = f.read()
    return unpack_bits(data, nbits)


def random_bits(rng: np.random.Generator, nbits: int) -> np.ndarray:
    return rng.integers(0, 2, size=nbits, dtype=np.uint8)
