import io

import pytest

from anonmech import instances
from anonmech.distributions import AuctionInstance, PointMass
from anonmech.mechanisms import (
    Outcome,
    PricingScheme,
    run_dpm,
    run_dpm_nondsic,
    run_posted_prices,
    run_single_price,
    run_top_item_at_reserve,
    run_vcg_median_reserve,
    scaled_dpm_expected,
    top_item_reserves,
)
from anonmech.posterior import PosteriorPricer
from anonmech.verify import PROPERTIES, check_all, check_property, mixture, tie_averaged

GRID = [0.5, 1.0, 1.5, 2.0, 3.0]


def dpm(prices):
    scheme = PricingScheme(prices)
    return tie_averaged(lambda b, priority: run_dpm(scheme, b, priority=priority))


def test_dpm_passes_every_property():
    reports = check_all(dpm((3.0, 2.0, 1.0)), GRID, 3)
    for prop in PROPERTIES:
        assert reports[prop].passed, reports[prop].listing()
    assert reports["DSIC"].checks == 5**3 * 3 * 5


def test_nondsic_variant_is_caught():
    scheme = PricingScheme((3.0, 2.0, 1.0))
    mech = tie_averaged(lambda b, priority: run_dpm_nondsic(scheme, b, priority=priority))
    rep = check_property(mech, "DSIC", GRID, 3)
    assert not rep.passed
    v = rep.violations[0]
    assert v.amount > 0
    assert "FAIL" in rep.summary()


def test_single_price_is_truthful():
    mech = tie_averaged(lambda b, priority: run_single_price(1.5, 2, b, priority=priority))
    assert all(r.passed for r in check_all(mech, GRID, 3).values())


def test_vcg_median_is_truthful_but_not_anonymous():
    inst = instances.random_k_ambiguous(3, 1, seed=0)
    inst = AuctionInstance.create(inst.bidders, units=1)
    mech = tie_averaged(lambda b, priority: run_vcg_median_reserve(inst, b, priority=priority))
    grid = sorted({v for d in inst.bidders for v in d.values})[:5]
    reports = check_all(mech, grid, 3)
    assert reports["DSIC"].passed and reports["IR"].passed
    assert not reports["ANONYMITY"].passed


def test_posted_prices_are_not_anonymous():
    mech = lambda b: run_posted_prices([2.0, 1.0], b)
    assert not check_property(mech, "ANONYMITY", [1.0, 2.0], 2).passed
    assert check_property(mech, "DSIC", [1.0, 2.0, 3.0], 2).passed


def test_scaled_dpm_expected_is_truthful():
    inst = AuctionInstance.create([PointMass(3.0), PointMass(2.0), PointMass(1.0)], units=3,
                                  scales=[1.0, 0.5, 0.25])
    scheme = PricingScheme((2.0, 1.5, 1.0))
    mech = tie_averaged(lambda b, priority: scaled_dpm_expected(scheme, inst, b, priority=priority))
    for prop in PROPERTIES:
        assert check_property(mech, prop, GRID, 3).passed, prop


def test_top_item_mixture_is_truthful():
    inst = AuctionInstance.create([PointMass(3.0), PointMass(2.0), PointMass(1.0)], units=3,
                                  scales=[1.0, 0.5, 0.25])
    branches = [(w, tie_averaged(lambda b, priority, r=r: run_top_item_at_reserve(r, inst, b, priority=priority)))
                for r, w in top_item_reserves(inst, 1)]
    mech = mixture(branches)
    for prop in PROPERTIES:
        assert check_property(mech, prop, GRID, 3).passed, prop


def test_optimal_anonymous_is_anonymous_and_ir():
    inst = AuctionInstance.create([PointMass(2.0), PointMass(1.0)])
    pricer = PosteriorPricer(inst)
    reports = check_all(pricer.run, [1.0, 2.0], 2)
    assert reports["ANONYMITY"].passed and reports["IR"].passed


def test_mixture_weights_outcomes():
    a = lambda b: Outcome((1.0,), (2.0,), (1,))
    b = lambda b: Outcome((0.0,), (0.0,), (None,))
    out = mixture([(0.25, a), (0.75, b)])([1.0])
    assert out.allocation == (0.25,)
    assert out.payments == (0.5,)


def test_monotone_catches_reversed_allocation():
    # lower bid always wins
    def backwards(b):
        i = min(range(len(b)), key=lambda j: (b[j], j))
        alloc = tuple(1.0 if j == i else 0.0 for j in range(len(b)))
        return Outcome(alloc, (0.0,) * len(b), (None,) * len(b))

    assert not check_property(backwards, "MONOTONE", [1.0, 2.0], 2).passed


def test_ir_catches_overcharge():
    mech = lambda b: Outcome((1.0,) * len(b), tuple(x + 1 for x in b), (None,) * len(b))
    assert not check_property(mech, "IR", [1.0], 1).passed


def test_report_csv_and_listing():
    scheme = PricingScheme((3.0, 2.0, 1.0))
    rep = check_property(tie_averaged(lambda b, priority: run_dpm_nondsic(scheme, b, priority=priority)),
                         "dsic", GRID, 3)
    buf = io.StringIO()
    rep.write_csv(buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "property,profile,bidder,witness,amount"
    assert len(lines) == len(rep.violations) + 1
    assert "more" in rep.listing(limit=1)


def test_rejects_unknown_property_and_huge_grids():
    with pytest.raises(ValueError):
        check_property(dpm((1.0,)), "FAIRNESS", [1.0], 1)
    with pytest.raises(ValueError):
        check_property(dpm((1.0,) * 7), "IR", list(range(8)), 7)


def test_optimal_anonymous_is_truthful_on_support_grid():
    inst = instances.random_k_ambiguous(3, 1, seed=4)
    pricer = PosteriorPricer(inst)
    grid = sorted({v for d in inst.bidders for v in d.values})
    assert check_property(pricer.run, "DSIC", grid, 3).passed
