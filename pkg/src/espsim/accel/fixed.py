"""16-bit signed fixed point with 6 integer and 10 fractional bits.

Values are carried as int64 numpy arrays holding the raw two's-complement
integer; every result saturates to [-2**15, 2**15 - 1].
"""
import numpy as np

FRAC_BITS = 10
SCALE = 1 << FRAC_BITS
FX_MIN = -(1 << 15)
FX_MAX = (1 << 15) - 1
LSB = 1.0 / SCALE


def saturate(raw):
    return np.clip(np.asarray(raw, dtype=np.int64), FX_MIN, FX_MAX)


def to_fx(x):
    """Quantize floats, rounding half to even."""
    return saturate(np.rint(np.asarray(x, dtype=np.float64) * SCALE).astype(np.int64))


def to_float(raw):
    return np.asarray(raw, dtype=np.int64).astype(np.float64) / SCALE


def round_shift(acc, shift: int):
    """Arithmetic right shift of int64 values with round-half-to-even."""
    acc = np.asarray(acc, dtype=np.int64)
    if shift == 0:
        return acc
    q = acc >> shift
    rem = acc & ((1 << shift) - 1)
    half = 1 << (shift - 1)
    up = (rem > half) | ((rem == half) & ((q & 1) == 1))
    return q + up.astype(np.int64)


def add(a, b):
    return saturate(np.asarray(a, dtype=np.int64) + np.asarray(b, dtype=np.int64))


def mul(a, b):
    return saturate(round_shift(np.asarray(a, dtype=np.int64) * np.asarray(b, dtype=np.int64),
                                FRAC_BITS))


def dense(x, w, b):
    """``x @ w + b`` with a wide accumulator, one rounding and one saturation.

    ``w`` has shape (n_in, n_out). Products carry 20 fractional bits; the bias
    is aligned to them before the single rounding back to 10.
    """
    x = np.asarray(x, dtype=np.int64)
    acc = x @ np.asarray(w, dtype=np.int64) + (np.asarray(b, dtype=np.int64) << FRAC_BITS)
    return saturate(round_shift(acc, FRAC_BITS))


def to_words(raw) -> np.ndarray:
    """Pack raw Fx16 values into transport words (low 16 bits)."""
    return (np.asarray(raw, dtype=np.int64) & 0xFFFF).astype(np.uint64)


def from_words(words) -> np.ndarray:
    v = np.asarray(words, dtype=np.uint64).astype(np.int64) & 0xFFFF
    return np.where(v >= 1 << 15, v - (1 << 16), v)
