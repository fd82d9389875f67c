"""Bidder value distributions and auction instances.

Three value priors are supported: a point mass, a finite discrete pmf and a
uniform interval. All "value meets price" comparisons use the weak
inequality ``v >= p``; every mechanism in the package inherits that
convention from :func:`prob_at_least`.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

MASS_TOL = 1e-12
# relative slack when comparing candidate-price revenues, so prices that tie
# mathematically still tie after floating-point rounding
TIE_RTOL = 1e-12


class InstanceError(ValueError):
    """Raised for malformed distributions or instances."""


@dataclass(frozen=True)
class PointMass:
    value: float

    def __post_init__(self):
        if self.value < 0:
            raise InstanceError(f"point value must be nonnegative, got {self.value}")


@dataclass(frozen=True)
class DiscretePMF:
    values: tuple
    masses: tuple

    def __post_init__(self):
        values = tuple(self.values)
        masses = tuple(self.masses)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "masses", masses)
        if not values or len(values) != len(masses):
            raise InstanceError("values and masses must be nonempty and of equal length")
        if values[0] < 0:
            raise InstanceError("values must be nonnegative")
        if any(b <= a for a, b in zip(values, values[1:])):
            raise InstanceError("values must be strictly increasing")
        if any(m <= 0 for m in masses):
            raise InstanceError("every mass must be positive")
        total = math.fsum(float(m) for m in masses)
        if abs(total - 1.0) > MASS_TOL:
            raise InstanceError(f"masses sum to {total:.12g}, expected 1")

    @classmethod
    def from_dict(cls, pmf: dict) -> "DiscretePMF":
        items = sorted(pmf.items())
        return cls(tuple(v for v, _ in items), tuple(m for _, m in items))


@dataclass(frozen=True)
class UniformInterval:
    lo: float
    hi: float

    def __post_init__(self):
        if self.lo < 0:
            raise InstanceError(f"uniform lo must be nonnegative, got {self.lo}")
        if not self.lo < self.hi:
            raise InstanceError(f"uniform interval needs lo < hi, got [{self.lo}, {self.hi}]")


ValueDistribution = Union[PointMass, DiscretePMF, UniformInterval]


def support_low(d: ValueDistribution) -> float:
    if isinstance(d, PointMass):
        return d.value
    if isinstance(d, DiscretePMF):
        return d.values[0]
    return d.lo


def support_high(d: ValueDistribution) -> float:
    if isinstance(d, PointMass):
        return d.value
    if isinstance(d, DiscretePMF):
        return d.values[-1]
    return d.hi


def atoms(d: ValueDistribution) -> list:
    """Support atoms of a discrete distribution as ``(value, mass)`` pairs."""
    if isinstance(d, PointMass):
        return [(d.value, 1.0)]
    if isinstance(d, DiscretePMF):
        return list(zip(d.values, d.masses))
    raise TypeError("uniform distributions have no atoms")


def is_discrete(d: ValueDistribution) -> bool:
    return isinstance(d, (PointMass, DiscretePMF))


def prob_at_least(d: ValueDistribution, p: float) -> float:
    """Return ``Pr[v >= p]``; an atom sitting exactly at ``p`` counts fully."""
    if isinstance(d, PointMass):
        return 1 if d.value >= p else 0
    if isinstance(d, DiscretePMF):
        i = bisect.bisect_left(d.values, p)
        if i == 0:
            return 1.0
        return math.fsum(d.masses[i:])
    if p <= d.lo:
        return 1.0
    if p >= d.hi:
        return 0.0
    return (d.hi - p) / (d.hi - d.lo)


def cdf(d: ValueDistribution, x: float) -> float:
    """Return ``Pr[v <= x]``."""
    if isinstance(d, PointMass):
        return 1.0 if d.value <= x else 0.0
    if isinstance(d, DiscretePMF):
        i = bisect.bisect_right(d.values, x)
        return min(1.0, math.fsum(d.masses[:i]))
    if x <= d.lo:
        return 0.0
    if x >= d.hi:
        return 1.0
    return (x - d.lo) / (d.hi - d.lo)


def density(d: ValueDistribution, x: float) -> float:
    """Likelihood of observing ``x``: the atom mass for discrete priors, the pdf otherwise."""
    if isinstance(d, PointMass):
        return 1.0 if x == d.value else 0.0
    if isinstance(d, DiscretePMF):
        i = bisect.bisect_left(d.values, x)
        if i < len(d.values) and d.values[i] == x:
            return d.masses[i]
        return 0.0
    if d.lo <= x <= d.hi:
        return 1.0 / (d.hi - d.lo)
    return 0.0


def monopoly(d: ValueDistribution) -> tuple:
    """Revenue-maximizing take-it-or-leave-it price and its revenue.

    Discrete priors are scanned over their atoms; ties (up to ``TIE_RTOL``)
    go to the lowest price. For ``UniformInterval(lo, hi)`` the optimum is ``max(lo, hi/2)``.
    """
    if isinstance(d, PointMass):
        return d.value, d.value
    if isinstance(d, DiscretePMF):
        revs = [(v, v * prob_at_least(d, v)) for v in d.values]
        top = max(r for _, r in revs)
        return next((v, r) for v, r in revs if r >= top * (1 - TIE_RTOL))
    price = max(d.lo, d.hi / 2)
    return price, price * prob_at_least(d, price)


def median(d: ValueDistribution) -> float:
    """Smallest ``v`` with ``CDF(v) >= 1/2``."""
    if isinstance(d, PointMass):
        return d.value
    if isinstance(d, DiscretePMF):
        acc = 0.0
        for v, m in zip(d.values, d.masses):
            acc += m
            if acc >= 0.5 - MASS_TOL:
                return v
        return d.values[-1]
    return (d.lo + d.hi) / 2


def sample(d: ValueDistribution, rng: np.random.Generator) -> float:
    """Draw one value by inversion. Always consumes exactly one uniform."""
    u = rng.random()
    return _invert(d, np.asarray(u)).item()


def sample_many(d: ValueDistribution, rng: np.random.Generator, size: int) -> np.ndarray:
    return _invert(d, rng.random(size))


def _invert(d: ValueDistribution, u: np.ndarray) -> np.ndarray:
    if isinstance(d, PointMass):
        return np.full(u.shape, float(d.value))
    if isinstance(d, DiscretePMF):
        cum = np.cumsum(np.asarray(d.masses, dtype=float))
        cum[-1] = 1.0
        idx = np.searchsorted(cum, u, side="right")
        return np.asarray(d.values, dtype=float)[np.minimum(idx, len(cum) - 1)]
    return d.lo + u * (d.hi - d.lo)


@dataclass(frozen=True)
class AuctionInstance:
    """Bidder priors sorted so that support lows are nonincreasing.

    ``order[i]`` is the caller's original index of sorted bidder ``i``.
    ``scales`` holds the position scale factors ``s_1 >= ... >= s_m``;
    ``None`` means every one of the ``units`` items has scale 1.
    """

    bidders: tuple
    units: int
    scales: tuple | None = None
    order: tuple = field(default=(), compare=False)

    def __post_init__(self):
        bidders = tuple(self.bidders)
        object.__setattr__(self, "bidders", bidders)
        if not bidders:
            raise InstanceError("an instance needs at least one bidder")
        lows = [support_low(d) for d in bidders]
        if any(b > a for a, b in zip(lows, lows[1:])):
            raise InstanceError("bidders must be sorted by nonincreasing support low")
        if self.units < 1:
            raise InstanceError(f"units must be positive, got {self.units}")
        if self.scales is not None:
            scales = tuple(self.scales)
            object.__setattr__(self, "scales", scales)
            if len(scales) != self.units:
                raise InstanceError(f"expected {self.units} scales, got {len(scales)}")
            if any(s < 0 or s > 1 for s in scales):
                raise InstanceError("scales must lie in [0, 1]")
            if any(b > a for a, b in zip(scales, scales[1:])):
                raise InstanceError("scales must be nonincreasing")
        if not self.order:
            object.__setattr__(self, "order", tuple(range(len(bidders))))

    @classmethod
    def create(
        cls,
        bidders: Sequence[ValueDistribution],
        units: int | None = None,
        scales: Sequence[float] | None = None,
    ) -> "AuctionInstance":
        """Build an instance from unsorted bidders (stable sort by support low, descending)."""
        order = sorted(range(len(bidders)), key=lambda i: -support_low(bidders[i]))
        if units is None:
            units = len(scales) if scales is not None else len(bidders)
        return cls(
            bidders=tuple(bidders[i] for i in order),
            units=units,
            scales=None if scales is None else tuple(scales),
            order=tuple(order),
        )

    @property
    def n(self) -> int:
        return len(self.bidders)

    @property
    def lows(self) -> list:
        return [support_low(d) for d in self.bidders]

    @property
    def highs(self) -> list:
        return [support_high(d) for d in self.bidders]

    @property
    def is_digital(self) -> bool:
        return self.units >= self.n and self.scales is None

    def scale_vector(self) -> np.ndarray:
        """Scale of item ``j`` for ``j = 1..n`` (zero past the last real item)."""
        s = np.zeros(self.n)
        m = min(self.units, self.n)
        if self.scales is None:
            s[:m] = 1.0
        else:
            s[:m] = self.scales[:m]
        return s

    def sample_values(self, rng: np.random.Generator, trials: int) -> np.ndarray:
        """Truthful value profiles, shape ``(trials, n)``; one column per sorted bidder."""
        return np.column_stack([sample_many(d, rng, trials) for d in self.bidders])


def ambiguity(inst: AuctionInstance) -> int:
    """Smallest ``k`` such that ``b_i < a_{i-1-k}`` for every bidder ``i``.

    Supports are closed, so ``a_j <= b_i`` counts as an overlap.
    """
    lows, highs = inst.lows, inst.highs
    k = 0
    for i in range(inst.n):
        k = max(k, sum(1 for j in range(i) if lows[j] <= highs[i]))
    return k
