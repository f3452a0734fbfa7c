"""64-bit almost-universal hashing, Wegman-Carter tags, and the shared key.

The hash family ("PolyCL64") targets the same contract as the VHASH
family used in high-speed MACs: 64-bit tags, a 1280-bit reusable seed,
messages up to 2^62 bits, and XOR-almost-Delta-universality with
collision parameter at most 2^-61. Bit compatibility with any external
implementation is a non-goal; both parties run this code.

Construction, with the message padded to 128-byte blocks of 16 little-
endian 64-bit words:

1. block compression: per block, v = XOR over the 8 word pairs of the
   carryless product (m_2i xor k_2i) * (m_2i+1 xor k_2i+1), a value of
   at most 127 bits. For the first block where two messages differ, the
   products are linear in one unused key word with a nonzero polynomial
   cofactor, so P(collision) <= 2^-64 over the 1024-bit word key.
2. polynomial evaluation over GF(2^127): y = ((v_1)k + v_2)k ... with a
   final message-bit-length term, Horner-evaluated at the 127-bit key k.
   Distinct (block sequence, length) pairs give difference polynomials
   with at most B+1 roots: P(y = y') <= (B+1) 2^-127 <= 2^-74 for the
   2^62-bit cap.
3. output: tag = low 64 bits of k_out * y in GF(2^127). For y != y' and
   any target difference t, k_out*(y xor y') is uniform over the field,
   so P(tag xor tag' = t) = 2^-64 exactly.

Union bound: eps <= 2^-64 + (B+1) 2^-127 + 2^-64 < 2^-62, within the
2^-61 contract. XORing a fresh one-time pad onto a tag (Wegman-Carter)
makes tags exactly uniform, giving strong universality, and lets the
hash seed be reused across messages.
"""

from __future__ import annotations

import hmac
import math
import struct
from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np

from . import bits as bitutil
from .gf2 import GF2m, clmul

SEED_BITS = 1280
SEED_BYTES = SEED_BITS // 8
TAG_BITS = 64
TAG_BYTES = 8
MAX_MESSAGE_BITS = 1 << 62
EPSILON_FAMILY = 2.0 ** -61  # documented bound; the construction gives < 2^-62

BLOCK_BYTES = 128
_WORDS = BLOCK_BYTES // 8

_F127 = GF2m(127)

K0_MAGIC = b"DIK0"
K0_VERSION = 1


class PadReuseError(RuntimeError):
    """A one-time pad was spent twice; protocol integrity violation."""


@dataclass(frozen=True)
class HashSeed:
    """1280-bit seed: 16 compression words, polynomial key, output key."""

    data: bytes

    def __post_init__(self):
        if len(self.data) != SEED_BYTES:
            raise ValueError(f"seed must be {SEED_BYTES} bytes, got {len(self.data)}")

    @classmethod
    def generate(cls, rng: np.random.Generator) -> "HashSeed":
        return cls(rng.bytes(SEED_BYTES))

    def _parsed(self):
        words = struct.unpack("<16Q", self.data[:128])
        k_poly = _F127.reduce(int.from_bytes(self.data[128:144], "little"))
        k_out = _F127.reduce(int.from_bytes(self.data[144:160], "little"))
        return words, k_poly, k_out


def au_hash(seed: HashSeed, message: bytes) -> bytes:
    """64-bit almost-Delta-universal hash of `message` under `seed`."""
    nbits = 8 * len(message)
    if nbits > MAX_MESSAGE_BITS:
        raise ValueError(f"message of {nbits} bits exceeds the 2^62-bit cap")
    words, k_poly, k_out = seed._parsed()

    # always process at least one block so the key material enters even
    # for the empty message (whose tag must still look random over seeds)
    if len(message) % BLOCK_BYTES or not message:
        message = message + b"\x00" * (BLOCK_BYTES - len(message) % BLOCK_BYTES)

    poly_table = _F127.mul_table(k_poly)
    y = 0
    for off in range(0, len(message), BLOCK_BYTES):
        m = struct.unpack_from("<16Q", message, off)
        v = 0
        for i in range(0, _WORDS, 2):
            v ^= clmul(m[i] ^ words[i], m[i + 1] ^ words[i + 1])
        y = _F127.mul_with_table(poly_table, y ^ v)
    y = _F127.mul_with_table(poly_table, y ^ nbits)
    tag = _F127.mul(k_out, y) & 0xFFFFFFFFFFFFFFFF
    return tag.to_bytes(TAG_BYTES, "little")


def wc_tag(seed: HashSeed, otp: bytes, message: bytes) -> bytes:
    """Wegman-Carter tag: au_hash(seed, message) XOR otp.

    Pad bookkeeping lives with the key object (see SharedKeyK0.take_pad);
    this function assumes the pad handed to it is fresh.
    """
    if len(otp) != TAG_BYTES:
        raise ValueError(f"pad must be {TAG_BYTES} bytes")
    h = au_hash(seed, message)
    return bytes(a ^ b for a, b in zip(h, otp))


def verify_tag(seed: HashSeed, otp: bytes, message: bytes, tag: bytes) -> bool:
    """Constant-time check of a Wegman-Carter tag."""
    return hmac.compare_digest(wc_tag(seed, otp, message), tag)


PAD_NAMES = ("d_ec", "d_a", "d_b", "d_f")


@dataclass
class SharedKeyK0:
    """Pre-shared key: extractor seed, hash seed, and four one-time pads.

    The extractor and hash seeds are reusable after the protocol; each
    64-bit pad may be taken exactly once, and the consumed counter tracks
    64 bits per spent pad. Concurrent spends must be serialized by the
    caller; a double spend raises PadReuseError.
    """

    s_trev: np.ndarray
    s_vhash: HashSeed
    pads: Dict[str, bytes]
    _spent: set = field(default_factory=set)

    def __post_init__(self):
        for name in PAD_NAMES:
            if name not in self.pads:
                raise ValueError(f"missing pad {name}")
            if len(self.pads[name]) != TAG_BYTES:
                raise ValueError(f"pad {name} must be {TAG_BYTES} bytes")

    @classmethod
    def generate(cls, rng: np.random.Generator, trev_seed_bits: int) -> "SharedKeyK0":
        return cls(
            s_trev=bitutil.random_bits(rng, trev_seed_bits),
            s_vhash=HashSeed.generate(rng),
            pads={name: rng.bytes(TAG_BYTES) for name in PAD_NAMES},
        )

    def take_pad(self, name: str) -> bytes:
        if name not in PAD_NAMES:
            raise ValueError(f"unknown pad {name}")
        if name in self._spent:
            raise PadReuseError(f"one-time pad {name} already spent")
        self._spent.add(name)
        return self.pads[name]

    def pad_spent(self, name: str) -> bool:
        return name in self._spent

    @property
    def consumed_bits(self) -> int:
        return TAG_BITS * len(self._spent)

    @property
    def reusable_bits(self) -> int:
        return len(self.s_trev) + SEED_BITS

    def save(self, path) -> None:
        """Binary layout: magic, version, then length-prefixed segments in
        order s_trev, s_vhash, d_ec, d_a, d_b, d_f (lengths in bits)."""
        out = bytearray()
        out += K0_MAGIC
        out += struct.pack("<H", K0_VERSION)
        segments = [
            bitutil.pack_bits(self.s_trev),
            self.s_vhash.data,
        ] + [self.pads[name] for name in PAD_NAMES]
        nbits = [len(self.s_trev), SEED_BITS] + [TAG_BITS] * 4
        for seg, nb in zip(segments, nbits):
            out += struct.pack("<Q", nb)
            out += seg
        with open(path, "wb") as f:
            f.write(bytes(out))

    @classmethod
    def load(cls, path) -> "SharedKeyK0":
        with open(path, "rb") as f:
            data = f.read()
        if data[:4] != K0_MAGIC:
            raise ValueError("not a shared-key file")
        (version,) = struct.unpack_from("<H", data, 4)
        if version != K0_VERSION:
            raise ValueError(f"unsupported shared-key version {version}")
        pos = 6
        segments = []
        for _ in range(6):
            (nb,) = struct.unpack_from("<Q", data, pos)
            pos += 8
            nbytes = (nb + 7) // 8
            segments.append((nb, data[pos:pos + nbytes]))
            pos += nbytes
        s_trev = bitutil.unpack_bits(segments[0][1], segments[0][0])
        seed = HashSeed(segments[1][1])
        pads = {name: segments[2 + i][1] for i, name in enumerate(PAD_NAMES)}
        return cls(s_trev=s_trev, s_vhash=seed, pads=pads)
