"""Benchmark reproductions emitted as CSV rows by ``anonmech bench``."""

from __future__ import annotations

import itertools
import math
from fractions import Fraction

import numpy as np

from . import instances
from .distributions import AuctionInstance, UniformInterval, atoms, median
from .posterior import PosteriorPricer, low_price_threshold, nested_density_ratio
from .simulate import (
    ApproxReport,
    HarmonicReserve,
    approx_experiment,
    best_single_price_scan,
    block_dpm,
    estimate_revenue,
    guarantee_report,
    k1_dpm,
    opt_digital,
    payer_tail,
)


def exact_expected_revenue(inst: AuctionInstance, run) -> float:
    """Expected revenue of a deterministic mechanism by enumerating every discrete profile."""
    supports = [atoms(d) for d in inst.bidders]
    terms = []
    for profile in itertools.product(*supports):
        prob = math.prod(m for _, m in profile)
        terms.append(prob * run([v for v, _ in profile]).total_revenue)
    return math.fsum(terms)


def _exact_row(experiment, instance_id, mechanism, mean, benchmark, ratio, bound, ok) -> dict:
    return ApproxReport(experiment, instance_id, mechanism, 0, 0, float(mean), 0.0,
                        float(benchmark), float(ratio), float(bound), bool(ok)).row()


def bench_intro() -> list:
    inst = AuctionInstance.create([instances.PointMass(2.0), instances.PointMass(1.0)])
    pricer = PosteriorPricer(inst)
    rows = []
    for bids, want in (((2.0, 1.0), 3.0), ((2.0, 2.0), 2.0)):
        rev = pricer.run(list(bids)).total_revenue
        rows.append(_exact_row("intro", f"bids={bids[0]:g},{bids[1]:g}", "optimal-anonymous",
                               rev, want, want / rev if rev else math.inf, 1.0, rev == want))
    return rows


def bench_harmonic(n: int) -> list:
    inst = instances.harmonic(n, exact=True)
    candidates = [d.value for d in inst.bidders]
    _, best = best_single_price_scan(inst, candidates)
    opt = opt_digital(inst)
    h_n = math.fsum(1.0 / i for i in range(1, n + 1))
    ratio = opt / best
    ok = best == 1 and abs(float(opt) - h_n) <= 1e-12
    return [_exact_row("harmonic", f"n={n}", "best-single-price", best, opt, ratio, h_n, ok)]


def bench_geometric(eps: float, n: int) -> list:
    inst = instances.geometric(eps, n)
    candidates = [eps ** -i for i in range(1, n + 1)]
    _, best = best_single_price_scan(inst, candidates)
    opt = opt_digital(inst)
    cap = 1.0 / (1.0 - eps)
    ok = opt == n and best <= cap
    return [_exact_row("geometric", f"eps={eps:g},n={n}", "best-single-price", best, opt, opt / best, cap, ok)]


def bench_geometric_delta(eps: float, n: int, deltas=(1e-1, 1e-2, 1e-3, 1e-4)) -> list:
    """Anonymous-to-optimal revenue fraction on the rare-high-value geometric instance."""
    rows = []
    cap = 1.0 / (n * (1.0 - eps))
    for delta in deltas:
        inst = instances.geometric(eps, n, delta)
        rev = exact_expected_revenue(inst, PosteriorPricer(inst).run)
        opt = opt_digital(inst)
        frac = rev / opt
        rows.append(_exact_row("geometric-delta", f"delta={delta:g}", "optimal-anonymous", rev, opt,
                               frac, cap, frac <= cap + 4 * delta * n))
    return rows


def bench_approx(n: int, k: int, trials: int, seed: int, count: int) -> list:
    rows = []
    for i in range(count):
        inst = instances.random_k_ambiguous(n, k, seed + i)
        rows.append(approx_experiment(inst, k, trials, seed, instance_id=f"rand{seed + i}").row())
    return rows


def bench_position(n: int, k: int, trials: int, seed: int, count: int) -> list:
    rows = []
    for i in range(count):
        inst = instances.random_k_ambiguous(n, k, seed + i, scales=instances.geometric_scales(n))
        rows.append(approx_experiment(inst, k, trials, seed, instance_id=f"rand{seed + i}").row())
    return rows


def bench_payer_tail(n: int, k: int, trials: int, seed: int, count: int) -> list:
    rows = []
    for i in range(count):
        inst = instances.random_k_ambiguous(n, k, seed + i)
        mech = k1_dpm(inst) if k == 1 else block_dpm(inst, k)
        tail = payer_tail(mech, inst, trials, seed, k=k)
        for t, (c, se, b) in enumerate(zip(tail.counts, tail.stderr, tail.bound), start=1):
            rows.append(ApproxReport(f"payer-tail-k{k}", f"rand{seed + i}:t={t}", mech.name, trials, seed,
                                     c, se, float(t), c / b, b, c >= b - 3 * se).row())
    return rows


def harmonic_mixture_instance(m: int, seed: int) -> AuctionInstance:
    rng = np.random.default_rng(seed)
    highs = np.sort(rng.uniform(0.1, 1.0, size=m))[::-1]
    return AuctionInstance.create([UniformInterval(0.0, float(h)) for h in highs])


def bench_harmonic_mixture(m: int, trials: int, seed: int, count: int) -> list:
    rows = []
    h_m = math.fsum(1.0 / i for i in range(1, m + 1))
    for i in range(count):
        inst = harmonic_mixture_instance(m, seed + i)
        target = math.fsum(median(d) for d in inst.bidders) / (2 * h_m)
        stats = estimate_revenue(HarmonicReserve(inst), inst, trials, seed)
        rows.append(guarantee_report("harmonic-mixture", f"rand{seed + i}", "harmonic-reserve",
                                     stats, seed, target, 1.0).row())
    return rows


def bench_nested_uniform(levels: int, L: int) -> list:
    """Exact density ratios for every count meeting the low-price hypothesis, plus the boundary."""
    rows = []
    quarter = Fraction(1, 4)
    for t in range(1, levels):
        boundary = Fraction(2 ** (t + 1), 3) * L - L
        if boundary.denominator == 1:
            r = nested_density_ratio(L, levels, t, int(boundary))
            rows.append(_exact_row("nested-uniform", f"t={t},b={int(boundary)}", "density-ratio",
                                   r, quarter, r, quarter, r == quarter))
        start = math.floor(low_price_threshold(L, t)) + 1
        for b in range(start, (2 ** t - 1) * L + 1):
            r = nested_density_ratio(L, levels, t, b)
            rows.append(_exact_row("nested-uniform", f"t={t},b={b}", "density-ratio",
                                   r, quarter, r, quarter, r < quarter))
    return rows


BENCHES = {
    "intro": bench_intro,
    "harmonic": bench_harmonic,
    "geometric": bench_geometric,
    "geometric-delta": bench_geometric_delta,
    "k1-approx": bench_approx,
    "k-approx": bench_approx,
    "position": bench_position,
    "payer-tail": bench_payer_tail,
    "harmonic-mixture": bench_harmonic_mixture,
    "nested-uniform": bench_nested_uniform,
}
