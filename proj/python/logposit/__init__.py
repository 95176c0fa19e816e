"""Logarithmic posit numbers: codec, quantization search and array simulator."""

from ._core import (
    InvalidInput,
    IoError,
    LPParams,
    baseline_cycles,
    decode,
    encode,
    encode_many,
    enumerate,
    fake_quantize,
    quantization_rmse,
    quantize,
    selftest,
    simulate_gemm,
    validate,
)

__all__ = [
    "InvalidInput",
    "IoError",
    "LPParams",
    "baseline_cycles",
    "decode",
    "encode",
    "encode_many",
    "enumerate",
    "fake_quantize",
    "quantization_rmse",
    "quantize",
    "selftest",
    "simulate_gemm",
    "validate",
]

__version__ = "0.1.0"
