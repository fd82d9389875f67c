"""Randomized DPM pricing constructions for k-ambiguous instances.

For ``k = 1`` each rank price is either the bidder's own support low
``a_i`` (safe) or the previous bidder's low ``a_{i-1}`` (greedy), with the
greedy probability tuned so that drops stay rare. For general ``k`` bidders
are grouped into blocks of ``k`` and each block draws how many of its
prices sit at the block's upper boundary.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .distributions import AuctionInstance, InstanceError, ambiguity, monopoly, prob_at_least
from .mechanisms import PricingScheme

E2 = math.e ** 2
BOUND_SLACK = 1e-12


def _require_ambiguity(inst: AuctionInstance, k: int):
    got = ambiguity(inst)
    if got > k:
        raise InstanceError(f"instance is {got}-ambiguous, construction needs at most {k}")


# --- k = 1 -------------------------------------------------------------------

@dataclass(frozen=True)
class K1Rates:
    """Per-bidder exceedance ``q``, greedy rate ``r``, chain ``c`` and drop ``d`` probabilities."""

    q: tuple
    r: tuple
    c: tuple
    d: tuple


def k1_rates(inst: AuctionInstance) -> K1Rates:
    _require_ambiguity(inst, 1)
    lows = inst.lows
    q, r = [0.0], [0.0]
    for i in range(1, inst.n):
        qi = prob_at_least(inst.bidders[i], lows[i - 1])
        rho = 1.0 / (i + 1) ** 2
        ri = 1.0 if qi >= 1.0 else min(rho / (1.0 - qi), 1.0)
        q.append(qi)
        r.append(ri)
    c = tuple((1.0 - ri) * qi for qi, ri in zip(q, r))
    d = tuple(ri * (1.0 - qi) for qi, ri in zip(q, r))
    return K1Rates(tuple(q), tuple(r), c, d)


def k1_sample_scheme(rates: K1Rates, inst: AuctionInstance, rng: np.random.Generator) -> PricingScheme:
    return PricingScheme(tuple(k1_sample_batch(rates, inst, rng, 1)[0]))


def k1_sample_batch(rates: K1Rates, inst: AuctionInstance, rng: np.random.Generator, trials: int) -> np.ndarray:
    """``trials`` independent k=1 schemes as rows of a ``(trials, n)`` array."""
    lows = np.asarray(inst.lows, dtype=float)
    prev = np.concatenate([lows[:1], lows[:-1]])
    greedy = rng.random((trials, inst.n)) < np.asarray(rates.r)
    return np.where(greedy, prev, lows)


# --- general k ---------------------------------------------------------------

def blocks(n: int, k: int) -> list:
    """Half-open index ranges of consecutive blocks of ``k`` bidders (the last may be short)."""
    return [(s, min(s + k, n)) for s in range(0, n, k)]


def block_boundaries(inst: AuctionInstance, k: int) -> list:
    """``A_b`` for each block: the lowest support low inside it."""
    lows = inst.lows
    return [lows[end - 1] for _, end in blocks(inst.n, k)]


def poisson_binomial(probs: Sequence[float]) -> list:
    """Distribution of the number of successes among independent coins."""
    pmf = [1.0]
    for p in probs:
        nxt = [0.0] * (len(pmf) + 1)
        for j, mass in enumerate(pmf):
            nxt[j] += mass * (1.0 - p)
            nxt[j + 1] += mass * p
        pmf = nxt
    return pmf


def block_exceed_pmf(inst: AuctionInstance, k: int, block: int) -> list:
    """``Q`` row for a 1-based ``block``: how many members reach the previous boundary."""
    spans = blocks(inst.n, k)
    if not 1 <= block <= len(spans):
        raise IndexError(f"block {block} out of range 1..{len(spans)}")
    start, end = spans[block - 1]
    if block == 1:
        return [1.0] + [0.0] * (end - start)
    upper = block_boundaries(inst, k)[block - 2]
    return poisson_binomial([prob_at_least(inst.bidders[i], upper) for i in range(start, end)])


def chain_drop(R: Sequence[float], Q: Sequence[float]) -> tuple:
    """Chain and drop probabilities of a block.

    Chain: more members reach the upper boundary than prices were set there.
    Drop: fewer members reach it than prices were set there.
    """
    if len(R) != len(Q):
        raise ValueError(f"R and Q lengths differ: {len(R)} != {len(Q)}")
    k = len(R) - 1
    chain = math.fsum(R[j] * Q[jp] for j in range(k) for jp in range(j + 1, k + 1))
    drop = math.fsum(Q[j] * R[jp] for j in range(k) for jp in range(j + 1, k + 1))
    return chain, drop


def _two_point(Q: Sequence[float], rho: float, s: int) -> list:
    k = len(Q) - 1
    below = math.fsum(Q[:s])
    R = [0.0] * (k + 1)
    if s == 0:
        R[0] = 1.0
        return R
    R[s] = 1.0 if below <= rho else rho / below
    R[0] = 1.0 - R[s]
    return R


def block_rates(Q: Sequence[float], rho: float, k: int | None = None) -> list:
    """Choose the ``R`` row for a block from the two-point family ``{0, s}``.

    Every ``s`` in ``0..k`` is tried; among candidates with drop at most
    ``rho`` the one with the smallest chain probability wins (ties go to the
    smaller drop, then the smaller ``s``). The chosen row always satisfies
    ``C <= 1 - rho**(k/(k+1))``; failing that is an arithmetic bug.
    """
    if k is None:
        k = len(Q) - 1
    if len(Q) != k + 1:
        raise ValueError(f"Q must have k+1 = {k + 1} entries")
    if not 0.0 <= rho <= 1.0:
        raise ValueError(f"rho must lie in [0, 1], got {rho}")
    best = None
    for s in range(k + 1):
        R = _two_point(Q, rho, s)
        C, D = chain_drop(R, Q)
        if D > rho + BOUND_SLACK:
            continue
        key = (C, D, s)
        if best is None or key < best[0]:
            best = (key, R)
    bound = 1.0 - rho ** (k / (k + 1))
    if best is None or best[0][0] > bound + BOUND_SLACK:
        raise AssertionError(f"no two-point R meets the chain bound {bound} for Q={list(Q)}, rho={rho}")
    return best[1]


@dataclass(frozen=True)
class BlockRates:
    Q: tuple
    R: tuple
    C: float
    D: float
    rho: float


def block_rho(k: int, block: int) -> float:
    return (k * block) ** (-(1.0 + 1.0 / k))


def general_rates(inst: AuctionInstance, k: int) -> list:
    """:class:`BlockRates` for every block, block 1 pinned to all-low pricing."""
    _require_ambiguity(inst, k)
    out = []
    for b in range(1, len(blocks(inst.n, k)) + 1):
        Q = block_exceed_pmf(inst, k, b)
        rho = block_rho(k, b)
        R = [1.0] + [0.0] * (len(Q) - 1) if b == 1 else block_rates(Q, rho, len(Q) - 1)
        C, D = chain_drop(R, Q)
        out.append(BlockRates(tuple(Q), tuple(R), C, D, rho))
    return out


@dataclass
class BlockSampler:
    """Draws general-k pricing schemes for one instance."""

    inst: AuctionInstance
    k: int
    rates: list = field(init=False)

    def __post_init__(self):
        self.rates = general_rates(self.inst, self.k)
        self._spans = blocks(self.inst.n, self.k)
        self._bounds = block_boundaries(self.inst, self.k)

    def sample_batch(self, rng: np.random.Generator, trials: int) -> np.ndarray:
        n = self.inst.n
        prices = np.empty((trials, n))
        for b, ((start, end), br) in enumerate(zip(self._spans, self.rates)):
            low = self._bounds[b]
            high = self._bounds[b - 1] if b > 0 else low
            R = np.asarray(br.R)
            cum = np.cumsum(R)
            cum[-1] = 1.0
            j = np.searchsorted(cum, rng.random(trials), side="right")
            pos = np.arange(end - start)
            prices[:, start:end] = np.where(pos[None, :] < j[:, None], high, low)
        return prices

    def sample(self, rng: np.random.Generator) -> PricingScheme:
        return PricingScheme(tuple(self.sample_batch(rng, 1)[0]))


def sample_block_scheme(inst: AuctionInstance, k: int, rng: np.random.Generator) -> PricingScheme:
    return BlockSampler(inst, k).sample(rng)


# --- single prices and mixtures ----------------------------------------------

def best_single_price(inst: AuctionInstance, subset: Sequence[int]) -> tuple:
    """Monopoly price of the subset member with the largest monopoly revenue.

    Returns ``(price, guaranteed)`` where ``guaranteed`` is the average
    monopoly revenue over the subset, a lower bound on what the price earns
    from the subset.
    """
    if not subset:
        raise ValueError("subset must be nonempty")
    revs = [(monopoly(inst.bidders[i]), i) for i in subset]
    (price, _), _ = max(revs, key=lambda t: (t[0][1], -t[1]))
    guaranteed = math.fsum(r for (_, r), _ in revs) / len(subset)
    return price, guaranteed


def harmonic_reserve_mixture(medians: Sequence[float]) -> list:
    """Mix reserve ``p_i`` with probability ``1/(i H_m)``."""
    if not medians:
        raise ValueError("need at least one median")
    if any(b > a for a, b in zip(medians, medians[1:])):
        raise ValueError("medians must be nonincreasing")
    m = len(medians)
    h = math.fsum(1.0 / i for i in range(1, m + 1))
    return [(p, 1.0 / (i * h)) for i, p in enumerate(medians, start=1)]


def mixture_weights(k: int) -> tuple:
    """``(single price weight, DPM weight)`` of the approximation mixture."""
    if k == 1:
        return 0.4, 0.6
    return 2.0 / (3 * E2 + 2), 3 * E2 / (3 * E2 + 2)


@dataclass
class MixedScheme:
    """Two-branch randomized DPM: a constant single price or the ambiguity construction."""

    inst: AuctionInstance
    k: int
    single_price: float = field(init=False)
    weights: tuple = field(init=False)

    def __post_init__(self):
        _require_ambiguity(self.inst, self.k)
        top = list(range(min(2 * self.k, self.inst.n)))
        self.single_price, _ = best_single_price(self.inst, top)
        self.weights = mixture_weights(self.k)
        if self.k == 1:
            self._rates = k1_rates(self.inst)
        else:
            self._sampler = BlockSampler(self.inst, self.k)

    def sample_construction(self, rng: np.random.Generator, trials: int) -> np.ndarray:
        if self.k == 1:
            return k1_sample_batch(self._rates, self.inst, rng, trials)
        return self._sampler.sample_batch(rng, trials)

    def sample_batch(self, rng: np.random.Generator, trials: int) -> np.ndarray:
        constant = rng.random(trials) < self.weights[0]
        schemes = self.sample_construction(rng, trials)
        schemes[constant] = self.single_price
        return schemes

    def sample(self, rng: np.random.Generator) -> PricingScheme:
        return PricingScheme(tuple(self.sample_batch(rng, 1)[0]))


def mixed_mechanism(inst: AuctionInstance, k: int) -> MixedScheme:
    return MixedScheme(inst, k)
