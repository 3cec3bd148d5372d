"""Integer range coder with 48-bit probability resolution.

Intervals are given as ``(cum_lo, cum_hi)`` with ``0 <= cum_lo < cum_hi <= 2**48``.
The coder keeps a 64-bit ``low``/``range`` pair, renormalizes a byte at a
time whenever ``range < 2**56`` and resolves carries with a cached byte plus
a run of pending 0xFF bytes. No floating point is used here.
"""

from __future__ import annotations

from dataclasses import dataclass

PROB_BITS = 48
PROB_ONE = 1 << PROB_BITS

_STATE_BITS = 64
_TOP = 1 << (_STATE_BITS - 8)
_MASK64 = (1 << _STATE_BITS) - 1
_LOW_BYTE_SHIFT = _STATE_BITS - 8
_FF_TOP = 0xFF << _LOW_BYTE_SHIFT
_KEEP = (1 << _LOW_BYTE_SHIFT) - 1

# The decoder may read this many zero bytes past the end of a stream before
# declaring it exhausted: the encoder's final flush omits trailing zeros.
_MAX_PAD = _STATE_BITS // 8


class DecodeError(ValueError):
    pass


@dataclass(frozen=True)
class CodedStream:
    data: bytes
    symbol_count: int


def _check_interval(cum_lo: int, cum_hi: int) -> None:
    if not (0 <= cum_lo < cum_hi <= PROB_ONE):
        raise AssertionError(f"invalid interval [{cum_lo}, {cum_hi})")


class RangeEncoder:
    def __init__(self):
        self.low = 0
        self.range = _MASK64
        self._cache = 0
        self._pending = 0  # cached byte plus following 0xFF run, not yet final
        self._out = bytearray()
        self._taken = 0
        self.symbol_count = 0

    def state(self) -> tuple:
        return (self.low, self.range, self._cache, self._pending, bytes(self._out), self.symbol_count)

    def _shift_low(self) -> None:
        low = self.low
        if low < _FF_TOP or low > _MASK64:
            carry = low >> _STATE_BITS
            if self._pending:
                self._out.append((self._cache + carry) & 0xFF)
                self._out.extend(bytes([(0xFF + carry) & 0xFF]) * (self._pending - 1))
            self._cache = (low >> _LOW_BYTE_SHIFT) & 0xFF
            self._pending = 1
        elif self._pending:
            self._pending += 1
        else:
            self._cache = 0xFF
            self._pending = 1
        self.low = (low & _KEEP) << 8

    def encode(self, cum_lo: int, cum_hi: int) -> None:
        _check_interval(cum_lo, cum_hi)
        r = self.range >> PROB_BITS
        self.low += r * cum_lo
        if cum_hi == PROB_ONE:
            # top interval absorbs the truncation remainder
            self.range -= r * cum_lo
        else:
            self.range = r * (cum_hi - cum_lo)
        self.symbol_count += 1
        while self.range < _TOP:
            self.range <<= 8
            self._shift_low()

    def take_bytes(self) -> bytes:
        """Bytes finalized since the previous call (for streaming output)."""
        chunk = bytes(self._out[self._taken:])
        self._taken = len(self._out)
        return chunk

    def finish(self) -> CodedStream:
        # Pick the value in [low, low + range) with the most trailing zero bytes
        # and emit only its leading bytes; the decoder pads with zeros.
        low, hi = self.low, self.low + self.range
        for k in range(0, _STATE_BITS // 8 + 1):
            unit = 1 << (_STATE_BITS - 8 * k)
            v = -(-low // unit) * unit
            if v < hi:
                break
        self.low = v
        for _ in range(k):
            self._shift_low()
        # force out the cached byte and pending 0xFF run
        if self._pending:
            carry = self.low >> _STATE_BITS
            self._out.append((self._cache + carry) & 0xFF)
            self._out.extend(bytes([(0xFF + carry) & 0xFF]) * (self._pending - 1))
            self._pending = 0
        data = bytes(self._out)
        # trailing zeros of the final value are implied by decoder padding
        trim = 0
        while trim < k and len(data) > trim and data[-1 - trim] == 0:
            trim += 1
        return CodedStream(data[: len(data) - trim], self.symbol_count)


class RangeDecoder:
    def __init__(self, stream: CodedStream | bytes, symbol_count: int | None = None):
        if isinstance(stream, CodedStream):
            data, count = stream.data, stream.symbol_count
        else:
            data, count = bytes(stream), symbol_count
        self._data = data
        self._pos = 0
        self.symbol_count = count
        self.decoded = 0
        self.range = _MASK64
        self.code = 0
        for _ in range(_STATE_BITS // 8):
            self.code = (self.code << 8) | self._next_byte()
        if self.code >= self.range:
            raise DecodeError("stream does not start inside the initial range")
        self._r = 0

    def state(self) -> tuple:
        return (self.code, self.range, self._pos, self.decoded)

    def _next_byte(self) -> int:
        pos = self._pos
        self._pos += 1
        if pos < len(self._data):
            return self._data[pos]
        if pos >= len(self._data) + _MAX_PAD:
            raise DecodeError("coded stream exhausted")
        return 0

    def target(self) -> int:
        """Current code point scaled into ``[0, 2**48)``."""
        if self.symbol_count is not None and self.decoded >= self.symbol_count:
            raise DecodeError("all symbols of this stream were already decoded")
        self._r = self.range >> PROB_BITS
        t = self.code // self._r
        return t if t < PROB_ONE else PROB_ONE - 1

    def consume(self, cum_lo: int, cum_hi: int) -> None:
        _check_interval(cum_lo, cum_hi)
        r = self._r or (self.range >> PROB_BITS)
        self.code -= r * cum_lo
        if cum_hi == PROB_ONE:
            self.range -= r * cum_lo
        else:
            self.range = r * (cum_hi - cum_lo)
        self._r = 0
        if not (0 <= self.code < self.range):
            raise DecodeError("decoded interval does not contain the code point")
        self.decoded += 1
        while self.range < _TOP:
            self.range <<= 8
            self.code = (self.code << 8) | self._next_byte()


def encode_symbols(intervals) -> CodedStream:
    enc = RangeEncoder()
    for lo, hi in intervals:
        enc.encode(lo, hi)
    return enc.finish()
