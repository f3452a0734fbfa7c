"""Spatially-coupled LDPC reconciliation and finite-size overhead bounds."""

from .bounds import (
    binary_entropy,
    finite_bsc_bounds,
    gaussian_tail_inverse,
    overhead_bounds,
    syndrome_length,
)
from .code import (
    ConstructionError,
    Protograph,
    ScLdpcCode,
    build_code,
    build_for_target,
    choose_protograph,
    encode,
)
from .decoder import DecodeResult, DecoderPriors, decode, llr_vector

__all__ = [
    "binary_entropy",
    "finite_bsc_bounds",
    "gaussian_tail_inverse",
    "overhead_bounds",
    "syndrome_length",
    "ConstructionError",
    "Protograph",
    "ScLdpcCode",
    "build_code",
    "build_for_target",
    "choose_protograph",
    "encode",
    "DecodeResult",
    "DecoderPriors",
    "decode",
    "llr_vector",
]
