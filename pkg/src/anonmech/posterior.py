"""Posterior inference behind the optimal anonymous digital-goods auction.

An anonymous mechanism cannot tell which prior produced which bid, so it
reasons about the symmetrized joint density (the average of the product
density over all assignments of priors to bidders). The posterior for one
bidder given everyone else's bids is proportional to a matrix permanent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from .distributions import (
    TIE_RTOL,
    AuctionInstance,
    DiscretePMF,
    PointMass,
    UniformInterval,
    atoms,
    cdf,
    density,
    is_discrete,
)
from .mechanisms import Outcome

PERMANENT_MAX_N = 20
PMF_TOL = 1e-10


class InconsistentEvidence(ValueError):
    """The observed bids have zero likelihood under every assignment of priors."""


def permanent(M) -> float:
    """Permanent by Ryser's formula, visiting column subsets in Gray-code order."""
    A = np.asarray(M, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"permanent needs a square matrix, got shape {A.shape}")
    n = A.shape[0]
    if n > PERMANENT_MAX_N:
        raise ValueError(f"permanent limited to n <= {PERMANENT_MAX_N}, got {n}")
    if n == 0:
        return 1.0
    row_sums = np.zeros(n)
    in_set = [False] * n
    terms = []
    for g in range(1, 1 << n):
        col = (g & -g).bit_length() - 1
        if in_set[col]:
            row_sums -= A[:, col]
        else:
            row_sums += A[:, col]
        in_set[col] = not in_set[col]
        size = bin(g ^ (g >> 1)).count("1")
        prod = float(np.prod(row_sums))
        terms.append(prod if size % 2 == 0 else -prod)
    total = math.fsum(terms)
    total = total if n % 2 == 0 else -total
    # cancellation can leave a tiny negative for a nonnegative matrix
    return 0.0 if total <= 0 and (A >= 0).all() else total


@dataclass(frozen=True)
class PosteriorPMF:
    support: tuple
    masses: tuple

    def __post_init__(self):
        object.__setattr__(self, "support", tuple(self.support))
        object.__setattr__(self, "masses", tuple(self.masses))
        if not self.support:
            raise ValueError("posterior support is empty")
        if len(self.support) != len(self.masses):
            raise ValueError("support and masses differ in length")
        if any(b <= a for a, b in zip(self.support, self.support[1:])):
            raise ValueError("support must be strictly increasing")
        if any(m < 0 for m in self.masses):
            raise ValueError("masses must be nonnegative")
        if abs(math.fsum(self.masses) - 1.0) > PMF_TOL:
            raise ValueError("masses must sum to 1")

    def prob_at_least(self, p: float) -> float:
        return math.fsum(m for v, m in zip(self.support, self.masses) if v >= p)

    def cdf(self, x: float) -> float:
        return math.fsum(m for v, m in zip(self.support, self.masses) if v <= x)

    def as_dict(self) -> dict:
        return dict(zip(self.support, self.masses))


def likelihood_matrix(bidders: Sequence, values: Sequence[float]) -> np.ndarray:
    """``M[j][l]`` is the likelihood that value ``j`` came from prior ``l``."""
    return np.array([[density(d, v) for d in bidders] for v in values])


def union_support(inst: AuctionInstance) -> list:
    return sorted({v for d in inst.bidders for v, _ in atoms(d)})


def posterior_pmf(inst: AuctionInstance, observed: Sequence[float],
                  candidate_support: Sequence[float] | None = None) -> PosteriorPMF:
    """Posterior of the remaining bidder's value given the other ``n-1`` values."""
    if not all(is_discrete(d) for d in inst.bidders):
        raise TypeError("posterior_pmf needs discrete priors")
    if len(observed) != inst.n - 1:
        raise ValueError(f"expected {inst.n - 1} observed values, got {len(observed)}")
    if inst.n > PERMANENT_MAX_N:
        raise ValueError(f"posterior limited to n <= {PERMANENT_MAX_N}")
    if candidate_support is None:
        candidate_support = union_support(inst)
    support = sorted(set(candidate_support))
    base = likelihood_matrix(inst.bidders, observed)
    weights = []
    for x in support:
        row = np.array([[density(d, x) for d in inst.bidders]])
        weights.append(permanent(np.vstack([base, row])) if inst.n > 1 else row[0, 0])
    total = math.fsum(weights)
    if total <= 0:
        raise InconsistentEvidence(f"observed values {list(observed)} are impossible under the priors")
    return PosteriorPMF(tuple(support), tuple(w / total for w in weights))


def optimal_price_from_pmf(h: PosteriorPMF) -> tuple:
    """Revenue-maximizing posted price for ``h``; near-ties go to the lower price."""
    if not h.support:
        raise ValueError("empty posterior")
    revs = [(v * h.prob_at_least(v), v) for v in h.support]
    best = max(r for r, _ in revs)
    for r, v in revs:
        if r >= best * (1 - TIE_RTOL):
            return v, r
    raise AssertionError("unreachable")


def virtual_value(h, v: float) -> float:
    """``v - (1 - H(v)) / h(v)``.

    For a pmf the density is replaced by ``mass / gap`` with ``gap`` the
    distance to the next atom; the top atom maps to itself.
    """
    if isinstance(h, UniformInterval):
        if not h.lo <= v <= h.hi:
            raise ValueError(f"{v} outside [{h.lo}, {h.hi}]")
        return v - (1.0 - cdf(h, v)) / density(h, v)
    if isinstance(h, PointMass):
        h = PosteriorPMF((h.value,), (1.0,))
    elif isinstance(h, DiscretePMF):
        h = PosteriorPMF(h.values, h.masses)
    if v not in h.support:
        raise ValueError(f"{v} is not a support atom")
    j = h.support.index(v)
    if j == len(h.support) - 1:
        return v
    gap = h.support[j + 1] - v
    return v - (1.0 - h.cdf(v)) * gap / h.masses[j]


class PosteriorPricer:
    """Caches posterior prices by the multiset of the other bids."""

    def __init__(self, inst: AuctionInstance):
        if not inst.is_digital:
            raise ValueError("the posterior posted-price auction is for digital goods")
        self.inst = inst
        self._support = union_support(inst)
        self._cache: dict = {}

    def price(self, others: Sequence[float]):
        key = tuple(sorted(others))
        if key not in self._cache:
            try:
                self._cache[key] = optimal_price_from_pmf(posterior_pmf(self.inst, key, self._support))[0]
            except InconsistentEvidence:
                self._cache[key] = None
        return self._cache[key]

    def run(self, bids: Sequence[float]) -> Outcome:
        n = self.inst.n
        if len(bids) != n:
            raise ValueError(f"expected {n} bids, got {len(bids)}")
        alloc, pay, items = [0.0] * n, [0.0] * n, [None] * n
        for i in range(n):
            p = self.price([b for j, b in enumerate(bids) if j != i])
            if p is not None and bids[i] >= p:
                alloc[i], pay[i], items[i] = 1.0, p, i + 1
        return Outcome(tuple(alloc), tuple(pay), tuple(items))


def run_optimal_anonymous_digital(inst: AuctionInstance, bids: Sequence[float]) -> Outcome:
    """Post to each bidder the optimal price for its posterior given the other bids.

    A bidder whose view of the others is impossible under the priors is
    offered nothing.
    """
    return PosteriorPricer(inst).run(bids)


# --- nested uniform instance -------------------------------------------------

@dataclass(frozen=True)
class NestedUniformInstance:
    """``2^i L`` bidders with values uniform on ``[0, 2^-i]`` for each level ``i < levels``."""

    levels: int
    L: int

    def __post_init__(self):
        if self.levels < 1 or self.L < 1:
            raise ValueError("levels and L must be positive")

    @property
    def N(self) -> int:
        return (2 ** self.levels - 1) * self.L

    def to_instance(self) -> AuctionInstance:
        bidders = [UniformInterval(0.0, 2.0 ** -i) for i in range(self.levels)
                   for _ in range(2 ** i * self.L)]
        return AuctionInstance.create(bidders)

    def counts_above(self, values: Sequence[float]) -> list:
        """``b'_i = #{v > 2^-i}`` for ``i = 0..levels-1``, followed by ``N``."""
        if len(values) != self.N:
            raise ValueError(f"expected {self.N} values")
        return [sum(1 for v in values if v > 2.0 ** -i) for i in range(self.levels)] + [self.N]


def falling_factorial(a: int, b: int) -> int:
    if b < 0:
        raise ValueError("falling factorial needs b >= 0")
    if b == 0:
        return 1
    if a < b:
        return 0
    return math.perm(a, b)


def nested_match_count(b_prime: Sequence[int], L: int, n: int) -> int:
    """Number of ways to match the values to the nested uniform priors.

    ``b_prime[i]`` is the number of values above ``2^-i`` for ``i < n``;
    ``b_prime[n]`` is the total number of agents.
    """
    b = [int(x) for x in b_prime]
    if len(b) != n + 1:
        raise ValueError(f"expected {n + 1} counts, got {len(b)}")
    if b[0] != 0:
        raise ValueError("no value can exceed the widest support, so b'_0 must be 0")
    if any(y < x for x, y in zip(b, b[1:])):
        raise ValueError(f"counts must be nondecreasing, got {b}")
    total = 1
    for i in range(n):
        total *= falling_factorial((2 ** (i + 1) - 1) * L - b[i], b[i + 1] - b[i])
        if total == 0:
            return 0
    return total


def nested_density_ratio(L: int, n: int, t: int, b_t: int) -> Fraction:
    """Exact posterior density ratio between a value one level above another."""
    if not 1 <= t <= n - 1:
        raise ValueError(f"t must lie in 1..{n - 1}")
    if b_t < 0:
        raise ValueError("b_t must be nonnegative")
    num = (2 ** t - 1) * L - b_t
    den = (2 ** (t + 1) - 1) * L - b_t
    if den == 0:
        raise ZeroDivisionError("density ratio denominator vanishes")
    return Fraction(num, den)


def low_price_threshold(L: int, t: int) -> Fraction:
    """Counts strictly above this make the ratio fall below 1/4."""
    return Fraction(2 ** (t + 1), 3) * L - L + 1
