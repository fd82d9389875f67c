import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from anonmech import instances
from anonmech.distributions import AuctionInstance, InstanceError, PointMass, monopoly, prob_at_least
from anonmech.pricing import (
    BOUND_SLACK,
    E2,
    BlockSampler,
    block_boundaries,
    block_exceed_pmf,
    block_rates,
    block_rho,
    blocks,
    chain_drop,
    best_single_price,
    general_rates,
    harmonic_reserve_mixture,
    k1_rates,
    k1_sample_batch,
    mixed_mechanism,
    mixture_weights,
    poisson_binomial,
)

probs = st.lists(st.floats(0.0, 1.0), min_size=0, max_size=7)


def enumerate_successes(ps):
    # [DERIVED] sum over every outcome of the coins
    out = [0.0] * (len(ps) + 1)
    for flips in itertools.product([0, 1], repeat=len(ps)):
        out[sum(flips)] += math.prod(p if f else 1 - p for p, f in zip(ps, flips))
    return out


@settings(max_examples=200, deadline=None)
@given(probs)
def test_poisson_binomial_matches_enumeration(ps):
    assert poisson_binomial(ps) == pytest.approx(enumerate_successes(ps), abs=1e-12)


def pmf(k):
    return st.lists(st.floats(0.0, 1.0), min_size=k + 1, max_size=k + 1).filter(lambda x: sum(x) > 0).map(
        lambda x: [v / sum(x) for v in x])


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 4).flatmap(lambda k: st.tuples(pmf(k), pmf(k))))
def test_chain_drop_are_strict_comparisons(pair):
    R, Q = pair
    # [DERIVED] chain is Pr[J' > J], drop is Pr[J' < J] for J ~ R, J' ~ Q independent
    joint = np.outer(R, Q)
    C, D = chain_drop(R, Q)
    assert C == pytest.approx(np.triu(joint, 1).sum(), abs=1e-12)
    assert D == pytest.approx(np.tril(joint, -1).sum(), abs=1e-12)


@settings(max_examples=300, deadline=None)
@given(st.integers(1, 4).flatmap(lambda k: st.tuples(st.just(k), pmf(k), st.floats(1e-4, 1.0))))
def test_block_rates_meet_both_bounds(args):
    k, Q, rho = args
    R = block_rates(Q, rho, k)
    C, D = chain_drop(R, Q)
    assert sum(R) == pytest.approx(1.0)
    assert D <= rho + BOUND_SLACK
    assert C <= 1 - rho ** (k / (k + 1)) + BOUND_SLACK
    assert sum(1 for r in R if r > 0) <= 2


def test_blocks_partition():
    assert blocks(7, 3) == [(0, 3), (3, 6), (6, 7)]
    assert blocks(6, 3) == [(0, 3), (3, 6)]


def test_first_block_exceed_pmf_is_degenerate():
    inst = instances.random_k_ambiguous(9, 3, seed=0)
    assert block_exceed_pmf(inst, 3, 1) == [1.0, 0.0, 0.0, 0.0]


def test_block_exceed_pmf_uses_previous_boundary():
    inst = instances.random_k_ambiguous(9, 3, seed=0)
    upper = block_boundaries(inst, 3)[0]
    ps = [prob_at_least(inst.bidders[i], upper) for i in range(3, 6)]
    assert block_exceed_pmf(inst, 3, 2) == pytest.approx(enumerate_successes(ps))


def test_k1_rates_formula():
    inst = instances.random_k_ambiguous(8, 1, seed=4)
    rates = k1_rates(inst)
    for i in range(1, inst.n):
        q = prob_at_least(inst.bidders[i], inst.lows[i - 1])
        assert rates.q[i] == q
        assert rates.r[i] == pytest.approx(min(1 / (i + 1) ** 2 / (1 - q), 1.0) if q < 1 else 1.0)
    assert rates.r[0] == 0.0


@pytest.mark.parametrize("seed", range(10))
def test_k1_rates_bounds(seed):
    rates = k1_rates(instances.random_k_ambiguous(20, 1, seed))
    for i, (c, d) in enumerate(zip(rates.c, rates.d), start=1):
        assert d <= 1 / i**2 + 1e-12
        assert c <= (1 - 1 / i) ** 2 + 1e-12


def test_k1_rates_refuse_ambiguous_instances():
    with pytest.raises(InstanceError):
        k1_rates(instances.random_k_ambiguous(10, 2, seed=2))


def test_k1_sample_frequencies():
    inst = instances.random_k_ambiguous(10, 1, seed=5)
    rates = k1_rates(inst)
    draws = k1_sample_batch(rates, inst, np.random.default_rng(0), 40000)
    lows = np.array(inst.lows)
    for i in range(1, inst.n):
        greedy = np.mean(draws[:, i] == lows[i - 1])
        assert greedy == pytest.approx(rates.r[i], abs=0.01)
    # every draw is a valid nonincreasing scheme
    assert np.all(np.diff(draws, axis=1) <= 0)


@pytest.mark.parametrize("k", [2, 3])
def test_general_rates_bounds(k):
    inst = instances.random_k_ambiguous(30, k, seed=11)
    for b, br in enumerate(general_rates(inst, k), start=1):
        assert br.rho == block_rho(k, b)
        assert br.D <= br.rho + BOUND_SLACK
        assert br.C <= 1 - br.rho ** (k / (k + 1)) + BOUND_SLACK


def test_block_sampler_frequencies():
    inst = instances.random_k_ambiguous(12, 3, seed=6)
    sampler = BlockSampler(inst, 3)
    draws = sampler.sample_batch(np.random.default_rng(1), 40000)
    bounds = block_boundaries(inst, 3)
    for b in range(1, 4):
        start = 3 * b
        high = draws[:, start:start + 3] == bounds[b - 1]
        j = high.sum(axis=1)
        # highs always form a prefix of the block
        assert np.all(high[:, 0] >= high[:, 1]) and np.all(high[:, 1] >= high[:, 2])
        freq = np.bincount(j, minlength=4) / len(j)
        assert freq == pytest.approx(sampler.rates[b].R, abs=0.01)
    assert np.all(np.diff(draws, axis=1) <= 0)


def test_mixture_weights():
    assert mixture_weights(1) == (0.4, 0.6)
    lo, hi = mixture_weights(2)
    assert lo == pytest.approx(2 / (3 * E2 + 2))
    assert lo + hi == pytest.approx(1.0)


def test_harmonic_reserve_mixture_weights():
    mix = harmonic_reserve_mixture([3.0, 2.0, 1.0])
    h = 1 + 1 / 2 + 1 / 3
    assert [w for _, w in mix] == pytest.approx([1 / h, 1 / (2 * h), 1 / (3 * h)])
    assert sum(w for _, w in mix) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        harmonic_reserve_mixture([1.0, 2.0])


def test_best_single_price_guarantee():
    inst = instances.random_k_ambiguous(6, 1, seed=3)
    price, guaranteed = best_single_price(inst, [0, 1])
    revs = [monopoly(inst.bidders[i]) for i in (0, 1)]
    assert price == max(revs, key=lambda t: t[1])[0]
    assert guaranteed == pytest.approx((revs[0][1] + revs[1][1]) / 2)
    # the chosen price earns at least the best monopoly revenue from the pair
    earned = price * (prob_at_least(inst.bidders[0], price) + prob_at_least(inst.bidders[1], price))
    assert earned >= max(r for _, r in revs) - 1e-12 >= guaranteed - 1e-12


def test_mixed_mechanism_samples_valid_schemes():
    inst = instances.random_k_ambiguous(15, 2, seed=8)
    mixed = mixed_mechanism(inst, 2)
    draws = mixed.sample_batch(np.random.default_rng(2), 20000)
    constant = np.all(draws == mixed.single_price, axis=1)
    assert constant.mean() == pytest.approx(mixed.weights[0], abs=0.015)
    assert np.all(np.diff(draws, axis=1) <= 0)


def test_single_bidder_instance():
    inst = AuctionInstance.create([PointMass(2.0)])
    assert k1_rates(inst).r == (0.0,)
    assert general_rates(inst, 2)[0].R == (1.0, 0.0)
