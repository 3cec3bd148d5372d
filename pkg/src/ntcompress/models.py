"""Probability models over the integer alphabet ``0..v_max``.

Every model exposes a fixed-point cumulative function ``cum(v)`` with
``cum(0) == 0`` and ``cum(size) == 2**48``; the coding interval of ``v`` is
``[cum(v), cum(v + 1))``. Cumulatives are evaluated in closed form so huge
alphabets never have to be enumerated, and :func:`invert_target` finds a
symbol by binary search.
"""

from __future__ import annotations

import bisect
import decimal
import math
from dataclasses import dataclass

import numpy as np

from .coder import PROB_ONE

MAX_ALPHABET = 1 << 32
UNIFORM_MIX = 2.0 ** -8
B_MIN = 1e-4


@dataclass(frozen=True)
class SymbolAlphabet:
    v_max: int

    def __post_init__(self):
        if self.v_max < 0 or self.v_max + 1 > MAX_ALPHABET:
            raise ValueError(f"alphabet size {self.v_max + 1} outside [1, 2^32]")

    @property
    def size(self) -> int:
        return self.v_max + 1


@dataclass(frozen=True)
class DistParams:
    mu: float
    b: float


class QuantizedDistribution:
    """Base class; subclasses implement :meth:`cum`."""

    alphabet: SymbolAlphabet

    @property
    def size(self) -> int:
        return self.alphabet.size

    def cum(self, v: int) -> int:
        raise NotImplementedError

    def interval(self, v: int) -> tuple[int, int]:
        if not 0 <= v < self.size:
            raise ValueError(f"value {v} outside alphabet 0..{self.size - 1}")
        return self.cum(v), self.cum(v + 1)

    def invert(self, target: int) -> int:
        return invert_target(self, target)

    def widths(self) -> np.ndarray:
        """All interval widths; enumerates the alphabet, meant for small alphabets."""
        c = np.array([self.cum(v) for v in range(self.size + 1)], dtype=object)
        return np.diff(c).astype(np.int64)

    def descriptor(self) -> dict:
        raise NotImplementedError


def invert_target(model: QuantizedDistribution, target: int) -> int:
    """Symbol ``v`` whose interval contains ``target``."""
    if not 0 <= target < PROB_ONE:
        raise ValueError("target outside [0, 2^48)")
    lo, hi = 0, model.size - 1
    while lo < hi:
        mid = (lo + hi + 1) >> 1
        if model.cum(mid) <= target:
            lo = mid
        else:
            hi = mid - 1
    return lo


class UniformModel(QuantizedDistribution):
    def __init__(self, alphabet: SymbolAlphabet):
        self.alphabet = alphabet
        self._q, self._rem = divmod(PROB_ONE, alphabet.size)

    def cum(self, v: int) -> int:
        # the first `rem` symbols get one extra unit
        return v * self._q + min(v, self._rem)

    def invert(self, target: int) -> int:
        q, rem = self._q, self._rem
        split = (q + 1) * rem
        if target < split:
            return target // (q + 1)
        return rem + (target - split) // q

    def descriptor(self) -> dict:
        return {"kind": "uniform", "size": self.size}


def uniform_model(alphabet: SymbolAlphabet) -> UniformModel:
    return UniformModel(alphabet)


class HistogramModel(QuantizedDistribution):
    """Add-one smoothed empirical frequencies.

    Stored sparsely: the smoothed count of ``v`` is ``1 + counts[v]``, so the
    cumulative count below ``v`` is ``v + (observed samples < v)``.
    """

    def __init__(self, alphabet: SymbolAlphabet, values, counts):
        self.alphabet = alphabet
        self.values = [int(v) for v in values]
        self.counts = [int(c) for c in counts]
        if any(not 0 <= v < alphabet.size for v in self.values):
            raise ValueError("histogram value outside the alphabet")
        self._prefix = [0]
        for c in self.counts:
            self._prefix.append(self._prefix[-1] + c)
        self.total = alphabet.size + self._prefix[-1]
        if self.total > PROB_ONE:
            raise ValueError("too many samples for 48-bit probability resolution")

    @classmethod
    def from_samples(cls, alphabet: SymbolAlphabet, samples) -> "HistogramModel":
        samples = np.asarray(samples, dtype=np.int64).ravel()
        if samples.size == 0:
            raise ValueError("histogram needs at least one sample")
        vals, counts = np.unique(samples, return_counts=True)
        return cls(alphabet, vals.tolist(), counts.tolist())

    def smoothed_count_below(self, v: int) -> int:
        return v + self._prefix[bisect.bisect_left(self.values, v)]

    def cum(self, v: int) -> int:
        return (PROB_ONE * self.smoothed_count_below(v)) // self.total

    def probabilities(self) -> np.ndarray:
        p = np.ones(self.size)
        p[self.values] += self.counts
        return p / self.total

    def descriptor(self) -> dict:
        return {"kind": "histogram", "values": list(self.values), "counts": list(self.counts)}


def static_histogram_model(data, alphabet: SymbolAlphabet | None = None) -> HistogramModel:
    """Histogram over a whole dataset (all links pooled) or a single series."""
    values = getattr(data, "values", data)
    if alphabet is None:
        alphabet = SymbolAlphabet(int(getattr(data, "v_max", np.max(values))))
    return HistogramModel.from_samples(alphabet, values)


def adaptive_histogram_model(window_values, alphabet: SymbolAlphabet) -> HistogramModel:
    """Histogram over the values visible in the current sliding window."""
    return HistogramModel.from_samples(alphabet, window_values)


class LogTransform:
    """``T(v) = (log1p(v) - m) / s``, strictly increasing on ``v > -1``."""

    kind = "log1p"

    def __init__(self, mean: float = 0.0, std: float = 1.0):
        if not std > 0 or not math.isfinite(std) or not math.isfinite(mean):
            raise ValueError("transform std must be positive and finite")
        self.mean = float(mean)
        self.std = float(std)

    def __call__(self, v):
        return (np.log1p(v) - self.mean) / self.std

    def scalar(self, v: float) -> float:
        return (math.log1p(v) - self.mean) / self.std

    def inverse(self, x):
        return np.expm1(np.asarray(x) * self.std + self.mean)

    def invert_value(self, x):
        """Nearest integer traffic value; exact on transformed integers."""
        return np.rint(self.inverse(x)).astype(np.int64)

    def __eq__(self, other):
        return isinstance(other, LogTransform) and (self.mean, self.std) == (other.mean, other.std)


class IdentityTransform:
    kind = "identity"

    def __call__(self, v):
        return np.asarray(v, dtype=np.float64)

    def scalar(self, v: float) -> float:
        return float(v)

    def inverse(self, x):
        return np.asarray(x)


def _laplace_cdf(x: float, mu: float, b: float) -> float:
    z = (x - mu) / b
    if z < 0:
        return 0.5 * math.exp(z)
    return 1.0 - 0.5 * math.exp(-z)


class LaplaceModel(QuantizedDistribution):
    """Discretized Laplace over the alphabet mixed with a uniform floor.

    The bin of value ``v`` spans ``[T(v - 1/2), T(v + 1/2))`` in transformed
    space; mass beyond the first/last edge is folded into ``0`` and
    ``v_max``. Cumulatives are floored onto the 2**48 grid, which keeps the
    tiling exact and every width within one unit of the real mass.
    """

    def __init__(self, params: DistParams, alphabet: SymbolAlphabet, transform=None,
                 floor_eps: float = UNIFORM_MIX, b_min: float = B_MIN):
        mu, b = float(params.mu), float(params.b)
        if not (math.isfinite(mu) and math.isfinite(b)):
            raise ValueError(f"non-finite distribution parameters mu={mu}, b={b}")
        if b < b_min:
            raise ValueError(f"Laplace scale {b} below b_min={b_min}")
        if not 0 < floor_eps < 1:
            raise ValueError("floor_eps must lie in (0, 1)")
        self.alphabet = alphabet
        self.params = DistParams(mu, b)
        self.transform = transform if transform is not None else IdentityTransform()
        self.floor_eps = floor_eps
        self._size = alphabet.size
        # eps * PROB_ONE must be an integer for the split in cum() to be exact
        self._uniform_scale = int(floor_eps * PROB_ONE)
        if self._uniform_scale != floor_eps * PROB_ONE:
            raise ValueError("floor_eps must be a multiple of 2**-48")
        self._laplace_scale = PROB_ONE - self._uniform_scale

    def laplace_cum(self, v: int) -> float:
        """Folded Laplace mass of values below ``v``."""
        if v <= 0:
            return 0.0
        if v >= self._size:
            return 1.0
        return _laplace_cdf(self.transform.scalar(v - 0.5), self.params.mu, self.params.b)

    def cum(self, v: int) -> int:
        if v <= 0:
            return 0
        if v >= self._size:
            return PROB_ONE
        # floor(PROB_ONE * ((1 - eps) * F(edge) + eps * v / size)), exactly.
        # The uniform term is integer arithmetic. The Laplace term is carried
        # as its tail mass t (the upper half through the complement), whose
        # float error is a few ulps of t; results that land within that margin
        # of an integer are redone in high-precision decimal from the same
        # float edge.
        edge = self.transform.scalar(v - 0.5)
        u_int, u_rem = divmod(self._uniform_scale * v, self._size)
        z = (edge - self.params.mu) / self.params.b
        t = 0.5 * self._laplace_scale * math.exp(-abs(z))
        margin = t * (2.5 + abs(z)) * 2.0 ** -48 + 2.0 ** -40
        if z < 0:
            x = t + u_rem / self._size
            fx = math.floor(x)
            if margin < x - fx < 1.0 - margin:
                return u_int + fx
        else:
            y = t - u_rem / self._size
            fy = math.floor(y)
            if margin < y - fy < 1.0 - margin:
                return u_int + self._laplace_scale - (fy + 1)
        return u_int + self._exact_floor(edge, u_rem)

    def _exact_floor(self, edge: float, u_rem: int) -> int:
        D = decimal.Decimal
        with decimal.localcontext() as ctx:
            ctx.prec = 50
            z = (D(edge) - D(self.params.mu)) / D(self.params.b)
            half = D(self._laplace_scale) / 2
            lap = half * z.exp() if z < 0 else D(self._laplace_scale) - half * (-z).exp()
            return int((lap + D(u_rem) / D(self._size)).to_integral_value(rounding=decimal.ROUND_FLOOR))

    def descriptor(self) -> dict:
        return {"kind": "laplace", "mu": self.params.mu, "b": self.params.b,
                "floor_eps": self.floor_eps, "transform": self.transform.kind}


def quantized_laplace(params: DistParams, alphabet: SymbolAlphabet, transform=None,
                      floor_eps: float = UNIFORM_MIX) -> LaplaceModel:
    return LaplaceModel(params, alphabet, transform, floor_eps)
