"""Reduced-precision storage for moments sketches.

Every float field is stored as sign, exponent offset and a truncated
significand.  The exponent offset only spans the exponents that actually
occur in the sketch (one code is reserved for zero), so well-centered
sketches need few exponent bits.  Power and log sums are quantized with
unbiased randomized rounding; ``min`` is rounded down and ``max`` up so the
decoded sketch still encloses the data.

Wire format: the usual sketch header with the compressed flag set, then
``bits_per_value`` (u8), ``exp_base`` (i16), ``exp_width`` (u8) and the
bit-packed values, most significant first, padded to a whole byte.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np

from .errors import InvalidParameterError, SketchFormatError
from .sketch import FLAG_COMPRESSED, MomentsSketch, pack_header, read_header

MIN_BITS = 8
MAX_BITS = 64
_SIG_BITS = 52
_EXTRA = struct.Struct("<BhB")


@dataclass(frozen=True)
class CompressedSketch:
    order: int
    count: int
    bits_per_value: int
    exp_base: int
    exp_width: int
    payload: bytes
    flags: int = 0

    @property
    def significand_bits(self) -> int:
        return min(_SIG_BITS, self.bits_per_value - 1 - self.exp_width)

    @property
    def value_width(self) -> int:
        return 1 + self.exp_width + self.significand_bits

    def to_bytes(self) -> bytes:
        head = pack_header(self.flags | FLAG_COMPRESSED, self.order, self.count)
        return head + _EXTRA.pack(self.bits_per_value, self.exp_base, self.exp_width) + self.payload

    @classmethod
    def from_bytes(cls, data: bytes) -> "CompressedSketch":
        flags, order, count, pos = read_header(data)
        if not flags & FLAG_COMPRESSED:
            raise SketchFormatError("payload is not compressed")
        if len(data) - pos < _EXTRA.size:
            raise SketchFormatError("truncated compressed header")
        bits, base, width = _EXTRA.unpack_from(data, pos)
        pos += _EXTRA.size
        out = cls(order, count, bits, base, width, bytes(data[pos:]), flags & ~FLAG_COMPRESSED)
        if not MIN_BITS <= bits <= MAX_BITS or out.significand_bits < 1:
            raise SketchFormatError(f"invalid bit layout ({bits} bits, {width} exponent bits)")
        need = (out.value_width * (2 + 2 * order) + 7) // 8
        if len(out.payload) != need:
            raise SketchFormatError(f"payload has {len(out.payload)} bytes, expected {need}")
        return out

    def decode(self) -> MomentsSketch:
        return decode(self)

    @property
    def nbytes(self) -> int:
        return len(self.to_bytes())


def _quantize(values: np.ndarray, m: int, mode: np.ndarray, rng: np.random.Generator):
    """Split into (sign, exponent, integer significand in [2^m, 2^(m+1))).

    ``mode`` per value: 0 randomized, -1 toward -inf, +1 toward +inf.
    """
    frac, exp = np.frexp(np.abs(values))
    scaled = np.ldexp(frac, m + 1)  # exact: only rescales the exponent
    lo = np.floor(scaled)
    rem = scaled - lo
    neg = np.signbit(values)
    up_dir = np.where(neg, mode < 0, mode > 0)
    go_up = np.where(mode == 0, rng.random(values.shape) < rem, up_dir & (rem > 0))
    sig = (lo + go_up).astype(np.int64)
    carry = sig == (1 << (m + 1))
    sig[carry] >>= 1
    exp = exp + carry
    return neg, exp.astype(np.int64), sig


def encode_low_precision(sketch: MomentsSketch, bits_per_value: int,
                         rng: np.random.Generator | int | None = None) -> CompressedSketch:
    """Quantize every float field to ``bits_per_value`` bits."""
    if not isinstance(bits_per_value, (int, np.integer)) or not MIN_BITS <= bits_per_value <= MAX_BITS:
        raise InvalidParameterError(f"bits_per_value must be in [{MIN_BITS}, {MAX_BITS}]")
    bits = int(bits_per_value)
    rng = np.random.default_rng(rng)
    vals = np.concatenate(([sketch.min, sketch.max], sketch.power_sums, sketch.log_sums))
    if not np.all(np.isfinite(vals)):
        if sketch.count == 0:
            vals[:2] = 0.0  # empty-sketch sentinels are restored on decode
        else:
            raise InvalidParameterError("cannot encode non-finite sketch fields")
    nz = vals != 0
    if nz.any():
        _, e = np.frexp(vals[nz])
        base = int(e.min())
        span = int(e.max()) + 1 - base + 1  # +1 for rounding carry
    else:
        base, span = 0, 0
    width = max(1, math.ceil(math.log2(span + 1)))
    m = min(_SIG_BITS, bits - 1 - width)
    if m < 1:
        raise InvalidParameterError(
            f"{bits} bits leave no significand for an exponent span of {span}")
    mode = np.zeros(vals.shape, dtype=np.int8)
    mode[0], mode[1] = -1, 1
    neg, exp, sig = _quantize(vals, m, mode, rng)
    w = 1 + width + m
    acc = 0
    for i in range(vals.shape[0]):
        code = 0 if not nz[i] else int(exp[i]) - base + 1
        field = (int(neg[i]) << (w - 1)) | (code << m) | (int(sig[i]) - (1 << m) if nz[i] else 0)
        acc = (acc << w) | field
    total = w * vals.shape[0]
    nbytes = (total + 7) // 8
    acc <<= nbytes * 8 - total
    flags = 1 if sketch.extrema_stale else 0
    return CompressedSketch(sketch.order, sketch.count, bits, base, width,
                            acc.to_bytes(nbytes, "big"), flags)


def decode(cs: CompressedSketch) -> MomentsSketch:
    """Expand a compressed sketch back to full-width floats."""
    m = cs.significand_bits
    w = cs.value_width
    nvals = 2 + 2 * cs.order
    acc = int.from_bytes(cs.payload, "big") >> (len(cs.payload) * 8 - w * nvals)
    out = np.empty(nvals)
    mask = (1 << w) - 1
    for i in range(nvals - 1, -1, -1):
        field = acc & mask
        acc >>= w
        sign = field >> (w - 1)
        code = (field >> m) & ((1 << cs.exp_width) - 1)
        if code == 0:
            v = 0.0
        else:
            sig = (field & ((1 << m) - 1)) | (1 << m)
            v = math.ldexp(sig, code - 1 + cs.exp_base - (m + 1))
        out[i] = -v if sign else v
    xmin, xmax = float(out[0]), float(out[1])
    if cs.count == 0:
        xmin, xmax = math.inf, -math.inf
    k = cs.order
    return MomentsSketch._from_fields(k, cs.count, xmin, xmax, out[2:2 + k].copy(),
                                      out[2 + k:].copy(), bool(cs.flags & 1))
