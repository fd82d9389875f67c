"""Executable auction mechanisms.

Every ``run_*`` function takes bids indexed by bidder identity and returns an
:class:`Outcome` indexed the same way. Sorting-based mechanisms break ties
with a uniformly random priority order drawn from ``rng``; callers that need
to enumerate tie-break orders pass ``priority`` explicitly (a permutation of
``range(n)``, lower value = earlier in the sorted order among equal bids).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .distributions import AuctionInstance, median, monopoly


class MechanismInputError(ValueError):
    pass


@dataclass(frozen=True)
class Outcome:
    allocation: tuple
    payments: tuple
    item_index: tuple

    @property
    def total_revenue(self) -> float:
        return math.fsum(self.payments)

    @property
    def winners(self) -> list:
        return [i for i, a in enumerate(self.allocation) if a > 0]

    @classmethod
    def empty(cls, n: int) -> "Outcome":
        return cls((0.0,) * n, (0.0,) * n, (None,) * n)


@dataclass(frozen=True)
class PricingScheme:
    """Nonincreasing rank prices ``p_1 >= ... >= p_n`` defining a DPM."""

    prices: tuple

    def __post_init__(self):
        prices = tuple(self.prices)
        object.__setattr__(self, "prices", prices)
        if any(p < 0 for p in prices):
            raise MechanismInputError("prices must be nonnegative")
        if any(b > a for a, b in zip(prices, prices[1:])):
            raise MechanismInputError(f"prices must be nonincreasing, got {prices}")

    def __len__(self):
        return len(self.prices)

    @classmethod
    def constant(cls, p: float, n: int) -> "PricingScheme":
        return cls((p,) * n)


def rank_order(bids: Sequence[float], rng: np.random.Generator | None = None,
               priority: Sequence[int] | None = None) -> list:
    """Bidder indices sorted by decreasing bid; ties resolved by ``priority``."""
    n = len(bids)
    if priority is None:
        priority = rng.permutation(n) if rng is not None else range(n)
    priority = list(priority)
    return sorted(range(n), key=lambda i: (-bids[i], priority[i]))


def _check_bids(bids: Sequence[float], n: int | None = None):
    if n is not None and len(bids) != n:
        raise MechanismInputError(f"expected {n} bids, got {len(bids)}")
    if any(b < 0 for b in bids):
        raise MechanismInputError("bids must be nonnegative")


def dpm_price_indices(prices: Sequence[float], sorted_bids: Sequence[float]) -> list:
    """Price index ``j(i)`` (0-based) charged to each winning rank of a DPM.

    Winners are the longest prefix of ranks with ``b_(i) >= p_i``. Rank ``i``
    pays at index ``min{j >= i : #{l : b_l >= p_j} == j}`` (1-based counts).
    The returned list has one entry per winner.
    """
    n = len(prices)
    winners = 0
    while winners < n and sorted_bids[winners] >= prices[winners]:
        winners += 1
    if winners == 0:
        return []
    # sorted_bids is descending, so count(j) is the length of the prefix >= p_j
    counts = []
    c = 0
    for j in range(n):
        while c < n and sorted_bids[c] >= prices[j]:
            c += 1
        counts.append(c)
    out = []
    nxt = None
    jhat = [None] * n
    for j in range(n - 1, -1, -1):
        if counts[j] == j + 1:
            nxt = j
        jhat[j] = nxt
    for i in range(winners):
        if jhat[i] is None:
            raise AssertionError("DPM payment index missing; prices or bids are inconsistent")
        out.append(jhat[i])
    return out


def run_dpm(scheme: PricingScheme, bids: Sequence[float], rng: np.random.Generator | None = None,
            priority: Sequence[int] | None = None) -> Outcome:
    """Decreasing price mechanism (the DSIC variant with drop and chain rules)."""
    prices = scheme.prices
    n = len(prices)
    _check_bids(bids, n)
    order = rank_order(bids, rng, priority)
    sorted_bids = [bids[i] for i in order]
    alloc, pay, items = [0.0] * n, [0.0] * n, [None] * n
    for rank, j in enumerate(dpm_price_indices(prices, sorted_bids)):
        who = order[rank]
        alloc[who] = 1.0
        pay[who] = prices[j]
        items[who] = rank + 1
    return Outcome(tuple(alloc), tuple(pay), tuple(items))


def run_dpm_nondsic(scheme: PricingScheme, bids: Sequence[float], rng: np.random.Generator | None = None,
                    priority: Sequence[int] | None = None) -> Outcome:
    """Rank ``i`` buys at ``p_i`` whenever it can afford it; not truthful."""
    prices = scheme.prices
    n = len(prices)
    _check_bids(bids, n)
    order = rank_order(bids, rng, priority)
    alloc, pay, items = [0.0] * n, [0.0] * n, [None] * n
    for rank, who in enumerate(order):
        if bids[who] >= prices[rank]:
            alloc[who] = 1.0
            pay[who] = prices[rank]
            items[who] = rank + 1
    return Outcome(tuple(alloc), tuple(pay), tuple(items))


def run_single_price(p: float, m: int, bids: Sequence[float], rng: np.random.Generator | None = None,
                     priority: Sequence[int] | None = None) -> Outcome:
    """VCG with an anonymous reserve ``p``: top ``m`` bids at or above ``p`` win.

    Each winner pays ``max(p, (m+1)-st highest bid)``; the (m+1)-st bid is 0
    when there are at most ``m`` bidders.
    """
    if m < 1:
        raise MechanismInputError("m must be positive")
    _check_bids(bids)
    n = len(bids)
    order = rank_order(bids, rng, priority)
    eligible = sum(1 for b in bids if b >= p)
    threshold = bids[order[m]] if n > m else 0.0
    price = max(p, threshold)
    alloc, pay, items = [0.0] * n, [0.0] * n, [None] * n
    for rank in range(min(m, eligible)):
        who = order[rank]
        alloc[who] = 1.0
        pay[who] = price
        items[who] = rank + 1
    return Outcome(tuple(alloc), tuple(pay), tuple(items))


def run_posted_prices(prices_by_identity: Sequence[float], bids: Sequence[float]) -> Outcome:
    """Non-anonymous posted prices: bidder ``i`` buys iff ``b_i >= prices[i]``."""
    n = len(prices_by_identity)
    _check_bids(bids, n)
    alloc, pay, items = [0.0] * n, [0.0] * n, [None] * n
    for i, (b, p) in enumerate(zip(bids, prices_by_identity)):
        if b >= p:
            alloc[i] = 1.0
            pay[i] = p
            items[i] = i + 1
    return Outcome(tuple(alloc), tuple(pay), tuple(items))


def run_vcg_median_reserve(inst: AuctionInstance, bids: Sequence[float], rng: np.random.Generator | None = None,
                           priority: Sequence[int] | None = None) -> Outcome:
    """VCG with each bidder's median as a personal reserve (VCG-m)."""
    n, m = inst.n, inst.units
    _check_bids(bids, n)
    reserves = [median(d) for d in inst.bidders]
    eligible = {i for i in range(n) if bids[i] >= reserves[i]}
    order = [i for i in rank_order(bids, rng, priority) if i in eligible]
    competition = bids[order[m]] if len(order) > m else 0.0
    alloc, pay, items = [0.0] * n, [0.0] * n, [None] * n
    for rank, who in enumerate(order[:m]):
        alloc[who] = 1.0
        pay[who] = max(reserves[who], competition)
        items[who] = rank + 1
    return Outcome(tuple(alloc), tuple(pay), tuple(items))


def _scaled_assignment(groups: dict, scales: np.ndarray):
    """Yield ``(bidder, item, prob)``: the item offered to each winner and the
    probability it is actually handed over. ``item`` is 1-based or None."""
    used = set()
    for j in sorted(groups):
        s_j = scales[j]
        members = groups[j]
        if s_j == 0:
            for who in members:
                yield who, None, 0.0
            continue
        used.add(j)
        yield members[0], j + 1, 1.0
        for who in members[1:]:
            jp = next(x for x in range(j) if x not in used)
            used.add(jp)
            yield who, jp + 1, s_j / scales[jp]


def _scaled_groups(scheme: PricingScheme, inst: AuctionInstance, bids, rng, priority):
    if inst.scales is None:
        raise MechanismInputError("scaled DPM needs an instance with scales")
    prices = scheme.prices
    n = inst.n
    if len(prices) != n:
        raise MechanismInputError(f"expected {n} prices, got {len(prices)}")
    _check_bids(bids, n)
    order = rank_order(bids, rng, priority)
    sorted_bids = [bids[i] for i in order]
    groups: dict = {}
    for rank, j in enumerate(dpm_price_indices(prices, sorted_bids)):
        groups.setdefault(j, []).append(order[rank])
    return groups


def run_scaled_dpm(scheme: PricingScheme, inst: AuctionInstance, bids: Sequence[float],
                   rng: np.random.Generator | None = None,
                   priority: Sequence[int] | None = None) -> Outcome:
    """DPM for position auctions.

    A winner whose DPM price index is ``j`` pays ``s_j * p_j``. The first
    winner at index ``j`` takes item ``j``; every further winner at the same
    index is offered the lowest unused item ``j' < j``, which is handed over
    with probability ``s_j / s_j'`` so that the expected scale is ``s_j``.
    Payment is charged whether or not the lottery hands the item over.
    """
    if rng is None:
        rng = np.random.default_rng()
    groups = _scaled_groups(scheme, inst, bids, rng, priority)
    scales = inst.scale_vector()
    n = inst.n
    alloc, pay, items = [0.0] * n, [0.0] * n, [None] * n
    for j, members in groups.items():
        for who in members:
            pay[who] = scales[j] * scheme.prices[j]
    for who, item, prob in _scaled_assignment(groups, scales):
        if item is not None and (prob >= 1.0 or rng.random() < prob):
            alloc[who] = scales[item - 1]
            items[who] = item
    return Outcome(tuple(alloc), tuple(float(p) for p in pay), tuple(items))


def scaled_dpm_expected(scheme: PricingScheme, inst: AuctionInstance, bids: Sequence[float],
                        priority: Sequence[int] | None = None) -> Outcome:
    """Expected allocation scale and payment of :func:`run_scaled_dpm`, computed exactly."""
    groups = _scaled_groups(scheme, inst, bids, None, priority)
    scales = inst.scale_vector()
    n = inst.n
    alloc, pay, items = [0.0] * n, [0.0] * n, [None] * n
    for j, members in groups.items():
        for who in members:
            alloc[who] = float(scales[j])
            pay[who] = float(scales[j] * scheme.prices[j])
            items[who] = j + 1
    return Outcome(tuple(alloc), tuple(pay), tuple(items))


def top_item_reserves(inst: AuctionInstance, k: int) -> list:
    """Reserve mixture ``[(price, weight)]`` over the monopoly prices of bidders 1..k+1."""
    if inst.n < k + 1:
        raise MechanismInputError(f"need at least k+1 = {k + 1} bidders, got {inst.n}")
    if k == 0:
        return [(monopoly(inst.bidders[0])[0], 1.0)]
    out = [(monopoly(inst.bidders[0])[0], 0.5)]
    out += [(monopoly(inst.bidders[i])[0], 1.0 / (2 * k)) for i in range(1, k + 1)]
    return out


def run_top_item_at_reserve(reserve: float, inst: AuctionInstance, bids: Sequence[float],
                            rng: np.random.Generator | None = None,
                            priority: Sequence[int] | None = None) -> Outcome:
    """Second-price sale of item 1 alone at a fixed reserve; price scaled by ``s_1``."""
    n = inst.n
    _check_bids(bids, n)
    s1 = float(inst.scale_vector()[0])
    order = rank_order(bids, rng, priority)
    top = order[0]
    alloc, pay, items = [0.0] * n, [0.0] * n, [None] * n
    if bids[top] >= reserve:
        second = bids[order[1]] if n > 1 else 0.0
        alloc[top] = s1
        pay[top] = s1 * max(reserve, second)
        items[top] = 1
    return Outcome(tuple(alloc), tuple(pay), tuple(items))


def run_top_item_second_price(inst: AuctionInstance, k: int, bids: Sequence[float],
                              rng: np.random.Generator | None = None,
                              priority: Sequence[int] | None = None) -> Outcome:
    """Sell only the top slot in a second-price auction with a randomized anonymous reserve.

    The reserve is bidder 1's monopoly price with probability 1/2 and bidder
    ``i``'s monopoly price with probability ``1/(2k)`` for ``i = 2..k+1``.
    """
    if rng is None:
        rng = np.random.default_rng()
    mixture = top_item_reserves(inst, k)
    weights = np.array([w for _, w in mixture])
    pick = int(rng.choice(len(mixture), p=weights / weights.sum()))
    return run_top_item_at_reserve(mixture[pick][0], inst, bids, rng, priority)


# --- vectorized kernels used by the simulator ---------------------------------

def dpm_batch(prices: np.ndarray, bids: np.ndarray):
    """Vectorized DPM over a batch of trials.

    ``prices`` and ``bids`` have shape ``(T, n)``; prices are rank prices,
    bids are by identity. Returns ``(payments, index)`` by identity where
    ``index`` is the 0-based charged price index, or -1 for losers. Ties
    never change a DPM outcome, so no tie-break randomness is needed.
    """
    prices = np.asarray(prices, dtype=float)
    bids = np.asarray(bids, dtype=float)
    T, n = bids.shape
    order = np.argsort(-bids, axis=1, kind="stable")
    s = np.take_along_axis(bids, order, axis=1)
    win = np.logical_and.accumulate(s >= prices, axis=1)
    counts = (s[:, None, :] >= prices[:, :, None]).sum(axis=2)
    ranks = np.arange(n)
    cand = np.where(counts == ranks + 1, ranks, n)
    jhat = np.minimum.accumulate(cand[:, ::-1], axis=1)[:, ::-1]
    if np.any(win & (jhat >= n)):
        raise AssertionError("DPM payment index missing in batch")
    jhat = np.where(win, jhat, -1)
    pay_sorted = np.where(win, np.take_along_axis(prices, np.clip(jhat, 0, n - 1), axis=1), 0.0)
    payments = np.empty_like(pay_sorted)
    index = np.empty_like(jhat)
    np.put_along_axis(payments, order, pay_sorted, axis=1)
    np.put_along_axis(index, order, jhat, axis=1)
    return payments, index

