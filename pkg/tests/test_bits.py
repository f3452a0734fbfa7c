import numpy as np
import pytest

from diqkd import bits


def test_pack_unpack_roundtrip():
    rng = np.random.default_rng(0)
    for nbits in (0, 1, 7, 8, 9, 64, 1000):
        arr = rng.integers(0, 2, nbits, dtype=np.uint8)
        assert np.array_equal(bits.unpack_bits(bits.pack_bits(arr), nbits), arr)


def test_lsb_first_convention():
    # bit i lives in byte i//8 at position i%8
    arr = np.zeros(16, dtype=np.uint8)
    arr[0] = 1
    arr[9] = 1
    packed = bits.pack_bits(arr)
    assert packed == bytes([0x01, 0x02])


def test_int_conversions():
    assert bits.bits_to_int(np.array([1, 0, 1], dtype=np.uint8)) == 5
    assert np.array_equal(bits.int_to_bits(5, 3), np.array([1, 0, 1], dtype=np.uint8))
    with pytest.raises(ValueError):
        bits.int_to_bits(8, 3)


def test_bit_file_roundtrip(tmp_path):
    rng = np.random.default_rng(1)
    arr = rng.integers(0, 2, 1234, dtype=np.uint8)
    path = tmp_path / "x.bits"
    bits.write_bit_file(path, arr)
    assert np.array_equal(bits.read_bit_file(path), arr)
