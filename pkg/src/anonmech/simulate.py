"""Monte Carlo revenue estimation, payer tails and revenue benchmarks.

Trials are processed in fixed-size chunks. Chunk ``c`` draws from a
generator seeded by ``(seed, c)``, so results depend only on the master
seed and the trial count, never on how many workers ran the chunks.
"""

from __future__ import annotations

import csv
import math
from fractions import Fraction
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .distributions import AuctionInstance, median, monopoly, prob_at_least
from .mechanisms import dpm_batch, run_vcg_median_reserve, top_item_reserves
from .posterior import PosteriorPricer
from .pricing import (
    E2,
    BlockSampler,
    K1Rates,
    MixedScheme,
    block_boundaries,
    blocks,
    harmonic_reserve_mixture,
    k1_rates,
    k1_sample_batch,
)

CHUNK = 4096
Z_GUARD = 3.0

CSV_COLUMNS = ["experiment", "instance_id", "mechanism", "trials", "seed",
               "mean", "stderr", "benchmark", "ratio", "bound", "pass"]


def chunk_rng(seed: int, chunk: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, chunk]))


# --- simulated mechanisms ------------------------------------------------------

class Mechanism:
    """Batch interface: ``payments(values, rng)`` maps ``(T, n)`` values to ``(T, n)`` payments."""

    name = "mechanism"

    def __init__(self, inst: AuctionInstance):
        self.inst = inst

    def payments(self, values: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError


class PostedPrices(Mechanism):
    name = "posted"

    def __init__(self, inst, prices=None):
        super().__init__(inst)
        self.prices = np.asarray(prices if prices is not None else [monopoly(d)[0] for d in inst.bidders],
                                 dtype=float)

    def payments(self, values, rng):
        return np.where(values >= self.prices, self.prices, 0.0)


class FixedDPM(Mechanism):
    name = "dpm"

    def __init__(self, inst, prices):
        super().__init__(inst)
        self.prices = np.asarray(prices, dtype=float)

    def payments(self, values, rng):
        return dpm_batch(np.broadcast_to(self.prices, values.shape), values)[0]


class K1Sampler:
    def __init__(self, inst: AuctionInstance):
        self.inst = inst
        self.rates: K1Rates = k1_rates(inst)

    def sample_batch(self, rng, trials):
        return k1_sample_batch(self.rates, self.inst, rng, trials)


class RandomDPM(Mechanism):
    """DPM whose price vector is redrawn from ``sampler`` every trial."""

    def __init__(self, inst, sampler, name="random-dpm"):
        super().__init__(inst)
        self.sampler = sampler
        self.name = name

    def payments(self, values, rng):
        prices = self.sampler.sample_batch(rng, values.shape[0])
        return dpm_batch(prices, values)[0]


def k1_dpm(inst):
    return RandomDPM(inst, K1Sampler(inst), "k1-dpm")


def block_dpm(inst, k):
    return RandomDPM(inst, BlockSampler(inst, k), f"block-dpm-k{k}")


def mixed_dpm(inst, k):
    return RandomDPM(inst, MixedScheme(inst, k), f"mixed-k{k}")


class SinglePrice(Mechanism):
    name = "single-price"

    def __init__(self, inst, price, m=None):
        super().__init__(inst)
        self.price = price
        self.m = inst.units if m is None else m

    def payments(self, values, rng):
        return _single_price_payments(np.full(values.shape[0], self.price), self.m, values, rng)


def _single_price_payments(p, m, values, rng):
    T, n = values.shape
    order = np.lexsort((rng.random((T, n)), -values), axis=-1)
    s = np.take_along_axis(values, order, axis=1)
    threshold = s[:, m] if n > m else np.zeros(T)
    price = np.maximum(p, threshold)
    eligible = (values >= p[:, None]).sum(axis=1)
    rank_wins = np.arange(n)[None, :] < np.minimum(m, eligible)[:, None]
    pay_sorted = np.where(rank_wins, price[:, None], 0.0)
    out = np.empty_like(pay_sorted)
    np.put_along_axis(out, order, pay_sorted, axis=1)
    return out


class HarmonicReserve(Mechanism):
    """Single price drawn from the harmonic mixture over the bidders' medians."""

    name = "harmonic-reserve"

    def __init__(self, inst, m=None):
        super().__init__(inst)
        meds = sorted((median(d) for d in inst.bidders), reverse=True)
        self.m = inst.units if m is None else m
        self.mixture = harmonic_reserve_mixture(meds[: self.m])

    def payments(self, values, rng):
        prices = np.array([p for p, _ in self.mixture])
        weights = np.array([w for _, w in self.mixture])
        pick = np.searchsorted(np.cumsum(weights) / weights.sum(), rng.random(values.shape[0]), side="right")
        p = prices[np.minimum(pick, len(prices) - 1)]
        return _single_price_payments(p, self.m, values, rng)


class PositionMixture(Mechanism):
    """Scaled DPM over the block construction, mixed with a top-slot second-price sale."""

    name = "position-mixture"

    def __init__(self, inst, k):
        super().__init__(inst)
        if inst.scales is None:
            raise ValueError("position mixture needs scales")
        self.k = k
        self.sampler = BlockSampler(inst, k)
        self.scales = inst.scale_vector()
        self.reserves = top_item_reserves(inst, k)
        self.top_weight = 2.0 / (3 * E2 + 2)

    def payments(self, values, rng):
        T, n = values.shape
        top = rng.random(T) < self.top_weight
        prices = self.sampler.sample_batch(rng, T)
        _, index = dpm_batch(prices, values)
        safe = np.clip(index, 0, n - 1)
        charged = np.take_along_axis(prices, safe, axis=1) * self.scales[safe]
        out = np.where(index >= 0, charged, 0.0)

        res_p = np.array([p for p, _ in self.reserves])
        res_w = np.array([w for _, w in self.reserves])
        pick = np.searchsorted(np.cumsum(res_w) / res_w.sum(), rng.random(T), side="right")
        reserve = res_p[np.minimum(pick, len(res_p) - 1)]
        order = np.lexsort((rng.random((T, n)), -values), axis=-1)
        first = order[:, 0]
        s = np.take_along_axis(values, order, axis=1)
        second = s[:, 1] if n > 1 else np.zeros(T)
        sells = s[:, 0] >= reserve
        top_pay = np.zeros((T, n))
        top_pay[np.arange(T), first] = np.where(sells, self.scales[0] * np.maximum(reserve, second), 0.0)
        out[top] = top_pay[top]
        return out


class ScalarMechanism(Mechanism):
    """Wraps a per-profile function returning an :class:`Outcome`."""

    def __init__(self, inst, fn, name):
        super().__init__(inst)
        self.fn = fn
        self.name = name

    def payments(self, values, rng):
        return np.array([self.fn(list(row), rng).payments for row in values], dtype=float)


def vcg_median(inst):
    return ScalarMechanism(inst, lambda b, rng: run_vcg_median_reserve(inst, b, rng), "vcg-median")


def optimal_anonymous(inst):
    pricer = PosteriorPricer(inst)
    return ScalarMechanism(inst, lambda b, rng: pricer.run(b), "optimal-anonymous")


# --- estimation ---------------------------------------------------------------

@dataclass(frozen=True)
class RevenueStats:
    mean: float
    stddev: float
    stderr: float
    trials: int
    ci95: tuple

    @classmethod
    def from_samples(cls, x: np.ndarray) -> "RevenueStats":
        x = np.asarray(x, dtype=float)
        t = len(x)
        mean = math.fsum(x) / t
        var = math.fsum((x - mean) ** 2) / (t - 1) if t > 1 else 0.0
        sd = math.sqrt(var)
        se = sd / math.sqrt(t)
        return cls(mean, sd, se, t, (mean - 1.96 * se, mean + 1.96 * se))


def _chunks(trials: int):
    return [(c, min(CHUNK, trials - c * CHUNK)) for c in range(math.ceil(trials / CHUNK))]


def simulate_payments(mech: Mechanism, inst: AuctionInstance, trials: int, seed: int, workers: int = 1):
    """Per-trial payments by identity, shape ``(trials, n)``."""
    if trials < 1:
        raise ValueError("trials must be positive")
    if mech.inst.n != inst.n:
        raise ValueError(f"mechanism built for {mech.inst.n} bidders, instance has {inst.n}")

    def run(job):
        c, size = job
        rng = chunk_rng(seed, c)
        values = inst.sample_values(rng, size)
        return mech.payments(values, rng)

    jobs = _chunks(trials)
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(run, jobs))
    else:
        parts = [run(j) for j in jobs]
    return np.concatenate(parts, axis=0)


def estimate_revenue(mech: Mechanism, inst: AuctionInstance, trials: int, seed: int,
                     workers: int = 1) -> RevenueStats:
    pay = simulate_payments(mech, inst, trials, seed, workers)
    return RevenueStats.from_samples(pay.sum(axis=1))


@dataclass(frozen=True)
class PayerTail:
    thresholds: tuple
    counts: tuple
    stderr: tuple
    bound: tuple

    def passes(self, z: float = Z_GUARD) -> bool:
        return all(c >= b - z * s for c, s, b in zip(self.counts, self.stderr, self.bound))


def payer_tail(mech: Mechanism, inst: AuctionInstance, trials: int, seed: int, k: int = 1,
               workers: int = 1) -> PayerTail:
    """Expected number of full blocks whose members all pay at least each boundary price.

    With ``k = 1`` a block is a single bidder, so entry ``t`` is the expected
    number of bidders paying at least ``a_t``; thresholds run over every
    bidder. For ``k > 1`` the last block is left out.
    """
    pay = simulate_payments(mech, inst, trials, seed, workers)
    spans = blocks(inst.n, k)
    bounds = block_boundaries(inst, k)
    full = [(s, e) for s, e in spans if e - s == k]
    ts = range(1, len(spans) + 1) if k == 1 else range(1, len(spans))
    counts, errs, thr, bnd = [], [], [], []
    for t in ts:
        a_t = bounds[t - 1]
        per_trial = np.zeros(trials)
        for s, e in full:
            per_trial += np.all(pay[:, s:e] >= a_t, axis=1)
        stats = RevenueStats.from_samples(per_trial)
        counts.append(stats.mean)
        errs.append(stats.stderr)
        thr.append(a_t)
        bnd.append(t / 3.0 if k == 1 else t / (3 * E2 * k))
    return PayerTail(tuple(thr), tuple(counts), tuple(errs), tuple(bnd))


# --- benchmarks -----------------------------------------------------------------

def opt_digital(inst: AuctionInstance):
    """Optimal non-anonymous digital-goods revenue: the sum of monopoly revenues."""
    revs = [monopoly(d)[1] for d in inst.bidders]
    if all(isinstance(r, Fraction) for r in revs):
        return sum(revs, Fraction(0))
    return math.fsum(revs)


def single_price_revenue(inst: AuctionInstance, p) -> float:
    """Expected digital-goods revenue of posting ``p`` to everyone."""
    return p * sum(prob_at_least(d, p) for d in inst.bidders)


def best_single_price_scan(inst: AuctionInstance, candidates: Sequence) -> tuple:
    """Exhaustive scan: ``(price, revenue)`` of the best digital-goods single price."""
    best = None
    for p in candidates:
        r = single_price_revenue(inst, p)
        if best is None or r > best[1]:
            best = (p, r)
    return best


def position_upper_bound(inst: AuctionInstance, k: int) -> float:
    """Upper bound on optimal position-auction revenue for ``k``-ambiguous bidders.

    Instances without explicit scales are treated as ``units`` items of scale 1.
    """
    s = inst.scale_vector()
    n = inst.n
    lows = inst.lows
    head = math.fsum(s[0] * monopoly(inst.bidders[i])[1] for i in range(min(k + 1, n)))
    tail = math.fsum(s[i] * lows[i] for i in range(max(n - k - 1, 0)))
    return head + tail


def approx_bound(k: int) -> float:
    return 5.0 if k == 1 else (3 * E2 + 2) * k


@dataclass(frozen=True)
class ApproxReport:
    experiment: str
    instance_id: str
    mechanism: str
    trials: int
    seed: int
    mean: float
    stderr: float
    benchmark: float
    ratio: float
    bound: float
    passed: bool

    def row(self) -> dict:
        return {
            "experiment": self.experiment, "instance_id": self.instance_id, "mechanism": self.mechanism,
            "trials": self.trials, "seed": self.seed, "mean": repr(float(self.mean)),
            "stderr": repr(float(self.stderr)), "benchmark": repr(float(self.benchmark)),
            "ratio": repr(float(self.ratio)), "bound": repr(float(self.bound)),
            "pass": "true" if self.passed else "false",
        }


def guarantee_report(experiment, instance_id, mech_name, stats: RevenueStats, seed, benchmark, bound) -> ApproxReport:
    ratio = benchmark / stats.mean if stats.mean > 0 else math.inf
    ok = stats.mean >= benchmark / bound - Z_GUARD * stats.stderr
    return ApproxReport(experiment, instance_id, mech_name, stats.trials, seed, stats.mean,
                        stats.stderr, benchmark, ratio, bound, ok)


def approx_experiment(inst: AuctionInstance, k: int, trials: int, seed: int,
                      instance_id: str = "inst", mech: Mechanism | None = None,
                      bound: float | None = None, workers: int = 1) -> ApproxReport:
    """Estimate revenue of the approximation mixture and compare with the benchmark.

    Digital-goods instances are compared with :func:`opt_digital`, instances
    with scales with :func:`position_upper_bound`. Passing means
    ``mean >= benchmark / bound - 3 * stderr``.
    """
    if inst.scales is not None:
        mech = mech or PositionMixture(inst, k)
        benchmark = position_upper_bound(inst, k)
        default_bound = (3 * E2 + 2) * k
        experiment = "position-approx"
    else:
        mech = mech or mixed_dpm(inst, k)
        benchmark = opt_digital(inst)
        default_bound = approx_bound(k)
        experiment = f"k{k}-approx" if k == 1 else "k-approx"
    stats = estimate_revenue(mech, inst, trials, seed, workers)
    return guarantee_report(experiment, instance_id, mech.name, stats, seed, float(benchmark),
                            default_bound if bound is None else bound)


def derandomize(mixed: MixedScheme, inst: AuctionInstance, candidates: int, trials: int, seed: int):
    """Best fixed scheme among ``candidates`` draws of a randomized construction.

    Returns ``(best_prices, best_stats, mixture_stats)``. All candidates are
    evaluated on common value draws.
    """
    rng = np.random.default_rng(np.random.SeedSequence([seed, 1 << 20]))
    schemes = mixed.sample_batch(rng, candidates)
    values = inst.sample_values(chunk_rng(seed, 0), trials)
    best = None
    for prices in schemes:
        rev = dpm_batch(np.broadcast_to(prices, values.shape), values)[0].sum(axis=1)
        stats = RevenueStats.from_samples(rev)
        if best is None or stats.mean > best[1].mean:
            best = (prices.copy(), stats)
    mix_rev = dpm_batch(mixed.sample_batch(rng, trials), values)[0].sum(axis=1)
    return best[0], best[1], RevenueStats.from_samples(mix_rev)


def write_csv(rows: Sequence[dict], fh) -> None:
    w = csv.DictWriter(fh, fieldnames=CSV_COLUMNS, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow(r)
