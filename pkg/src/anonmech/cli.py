"""``anonmech`` command line: gen, run, simulate, posterior, verify, bench."""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import experiments, instances
from .distributions import AuctionInstance, InstanceError, monopoly
from .mechanisms import (
    MechanismInputError,
    PricingScheme,
    run_dpm,
    run_dpm_nondsic,
    run_posted_prices,
    run_scaled_dpm,
    run_single_price,
    run_top_item_second_price,
    run_vcg_median_reserve,
)
from .posterior import InconsistentEvidence, optimal_price_from_pmf, posterior_pmf, run_optimal_anonymous_digital
from .simulate import (
    ApproxReport,
    HarmonicReserve,
    PositionMixture,
    PostedPrices,
    approx_bound,
    block_dpm,
    estimate_revenue,
    guarantee_report,
    k1_dpm,
    mixed_dpm,
    opt_digital,
    optimal_anonymous,
    payer_tail,
    vcg_median,
    write_csv,
)
from .verify import PROPERTIES, check_property, mixture, tie_averaged


def _floats(text: str) -> list:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _default_seed() -> int:
    raw = os.environ.get("ANONMECH_SEED", "0")
    try:
        return int(raw)
    except ValueError:
        raise SystemExit(f"ANONMECH_SEED must be an integer, got {raw!r}")


def _load(path: str) -> AuctionInstance:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise SystemExit(f"cannot read {path}: {exc.strerror}")
    return instances.parse_instance(text)


def _open_out(path):
    if path in (None, "-"):
        return sys.stdout, False
    try:
        return open(path, "w", newline=""), True
    except OSError as exc:
        raise SystemExit(f"cannot write {path}: {exc.strerror}")


def _emit_rows(rows, path) -> int:
    fh, close = _open_out(path)
    try:
        write_csv(rows, fh)
    finally:
        if close:
            fh.close()
    return 0 if all(r["pass"] == "true" for r in rows) else 1


# --- gen ----------------------------------------------------------------------

def cmd_gen(args) -> int:
    fam = args.family
    if fam == "harmonic":
        inst = instances.harmonic(args.n)
    elif fam == "geometric":
        inst = instances.geometric(args.eps, args.n)
    elif fam == "geometric-delta":
        inst = instances.geometric(args.eps, args.n, args.delta)
    elif fam == "nested-uniform":
        inst = instances.nested_uniform(args.levels, args.L)
    else:
        scales = instances.geometric_scales(args.n) if args.scales else None
        inst = instances.random_k_ambiguous(args.n, args.k, args.seed, scales=scales)
    fh, close = _open_out(args.output)
    fh.write(instances.instance_to_json(inst) + "\n")
    if close:
        fh.close()
    return 0


# --- run ----------------------------------------------------------------------

def _print_outcome(out) -> None:
    print("allocation:", ",".join(f"{a:g}" for a in out.allocation))
    print("payments:", ",".join(f"{float(p):g}" for p in out.payments))
    print("items:", ",".join("-" if j is None else str(j) for j in out.item_index))
    print(f"revenue: {float(out.total_revenue):g}")


def cmd_run(args) -> int:
    bids = args.bids
    rng = np.random.default_rng(args.seed)
    inst = _load(args.instance) if args.instance else None
    mech = args.mech
    needs_instance = {"posted", "vcg-median", "scaled-dpm", "top-item", "optimal"}
    if mech in needs_instance and inst is None:
        raise SystemExit(f"--mech {mech} needs --instance")
    if mech in ("dpm", "dpm-nondsic", "scaled-dpm") and args.prices is None:
        raise SystemExit(f"--mech {mech} needs --prices")
    if mech == "dpm":
        out = run_dpm(PricingScheme(tuple(args.prices)), bids, rng)
    elif mech == "dpm-nondsic":
        out = run_dpm_nondsic(PricingScheme(tuple(args.prices)), bids, rng)
    elif mech == "single":
        if args.price is None:
            raise SystemExit("--mech single needs --price")
        out = run_single_price(args.price, args.m or len(bids), bids, rng)
    elif mech == "posted":
        prices = args.prices or [monopoly(d)[0] for d in inst.bidders]
        out = run_posted_prices(prices, bids)
    elif mech == "vcg-median":
        out = run_vcg_median_reserve(inst, bids, rng)
    elif mech == "scaled-dpm":
        out = run_scaled_dpm(PricingScheme(tuple(args.prices)), inst, bids, rng)
    elif mech == "top-item":
        out = run_top_item_second_price(inst, args.k, bids, rng)
    else:
        out = run_optimal_anonymous_digital(inst, bids)
    _print_outcome(out)
    return 0


# --- simulate -----------------------------------------------------------------

SIM_MECHS = ("posted", "k1-dpm", "block-dpm", "mixed", "harmonic-reserve", "position", "vcg-median", "optimal")


def _sim_mechanism(name, inst, k):
    if name == "posted":
        return PostedPrices(inst)
    if name == "k1-dpm":
        return k1_dpm(inst)
    if name == "block-dpm":
        return block_dpm(inst, k)
    if name == "mixed":
        return mixed_dpm(inst, k)
    if name == "harmonic-reserve":
        return HarmonicReserve(inst)
    if name == "position":
        return PositionMixture(inst, k)
    if name == "vcg-median":
        return vcg_median(inst)
    return optimal_anonymous(inst)


def cmd_simulate(args) -> int:
    inst = _load(args.instance)
    mech = _sim_mechanism(args.mech, inst, args.k)
    if args.tail:
        tail = payer_tail(mech, inst, args.trials, args.seed, k=args.k, workers=args.workers)
        rows = [ApproxReport("payer-tail", f"t={t}", mech.name, args.trials, args.seed, c, se, float(t),
                             c / b, b, c >= b - 3 * se).row()
                for t, (c, se, b) in enumerate(zip(tail.counts, tail.stderr, tail.bound), start=1)]
    else:
        stats = estimate_revenue(mech, inst, args.trials, args.seed, args.workers)
        if inst.is_digital and args.mech in ("k1-dpm", "block-dpm", "mixed"):
            bench, bound = float(opt_digital(inst)), approx_bound(args.k)
        else:
            bench, bound = 0.0, 1.0
        rows = [guarantee_report("simulate", os.path.basename(args.instance), mech.name,
                                 stats, args.seed, bench, bound).row()]
    return _emit_rows(rows, args.output)


# --- posterior ----------------------------------------------------------------

def cmd_posterior(args) -> int:
    inst = _load(args.instance)
    try:
        h = posterior_pmf(inst, args.observed)
    except InconsistentEvidence as exc:
        print(f"no posterior: {exc}")
        return 1
    for v, m in zip(h.support, h.masses):
        print(f"{v:g}\t{m:.12g}")
    price, rev = optimal_price_from_pmf(h)
    print(f"optimal price: {price:g} (expected revenue {rev:.12g})")
    return 0


# --- verify -------------------------------------------------------------------

VERIFY_MECHS = ("dpm", "dpm-nondsic", "single", "vcg-median", "optimal")


def _expected_mechanism(args, n):
    if args.mech in ("dpm", "dpm-nondsic"):
        if args.prices is None:
            raise SystemExit(f"--mech {args.mech} needs --prices")
        scheme = PricingScheme(tuple(args.prices))
        run = run_dpm if args.mech == "dpm" else run_dpm_nondsic
        return tie_averaged(lambda b, priority: run(scheme, b, priority=priority))
    if args.mech == "single":
        if args.price is None:
            raise SystemExit("--mech single needs --price")
        m = args.m or n
        return tie_averaged(lambda b, priority: run_single_price(args.price, m, b, priority=priority))
    if not args.instance:
        raise SystemExit(f"--mech {args.mech} needs --instance")
    inst = _load(args.instance)
    if args.mech == "vcg-median":
        return tie_averaged(lambda b, priority: run_vcg_median_reserve(inst, b, priority=priority))
    return mixture([(1.0, lambda b: run_optimal_anonymous_digital(inst, b))])


def cmd_verify(args) -> int:
    mech = _expected_mechanism(args, args.n)
    props = PROPERTIES if args.property == "ALL" else (args.property,)
    ok = True
    for prop in props:
        report = check_property(mech, prop, args.grid, args.n)
        print(report.listing())
        ok &= report.passed
        if args.csv:
            fh, close = _open_out(args.csv)
            report.write_csv(fh)
            if close:
                fh.close()
    return 0 if ok else 1


# --- bench --------------------------------------------------------------------

def cmd_bench(args) -> int:
    name = args.name
    if name == "intro":
        rows = experiments.bench_intro()
    elif name == "harmonic":
        rows = experiments.bench_harmonic(args.n or 100)
    elif name == "geometric":
        rows = experiments.bench_geometric(args.eps, args.n or 10)
    elif name == "geometric-delta":
        rows = experiments.bench_geometric_delta(args.eps, args.n or 4)
    elif name == "k1-approx":
        rows = experiments.bench_approx(args.n or 20, 1, args.trials, args.seed, args.instances)
    elif name == "k-approx":
        rows = experiments.bench_approx(args.n or 30, args.k, args.trials, args.seed, args.instances)
    elif name == "position":
        rows = experiments.bench_position(args.n or 20, args.k, args.trials, args.seed, args.instances)
    elif name == "payer-tail":
        rows = experiments.bench_payer_tail(args.n or 20, args.k, args.trials, args.seed, args.instances)
    elif name == "harmonic-mixture":
        rows = experiments.bench_harmonic_mixture(args.n or 20, args.trials, args.seed, args.instances)
    else:
        rows = experiments.bench_nested_uniform(args.levels, args.L)
    return _emit_rows(rows, args.output)


# --- parser -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    seed = _default_seed()
    p = argparse.ArgumentParser(prog="anonmech", description="Anonymous auction mechanisms and benchmarks.")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="write an instance file for a named family")
    g.add_argument("family", choices=["harmonic", "geometric", "geometric-delta", "nested-uniform",
                                      "random-k-ambiguous"])
    g.add_argument("--n", type=int, default=10)
    g.add_argument("--eps", type=float, default=0.5)
    g.add_argument("--delta", type=float, default=0.01)
    g.add_argument("--levels", type=int, default=3)
    g.add_argument("--L", type=int, default=12)
    g.add_argument("--k", type=int, default=1)
    g.add_argument("--seed", type=int, default=seed)
    g.add_argument("--scales", action="store_true", help="attach geometric click scales")
    g.add_argument("-o", "--output")
    g.set_defaults(func=cmd_gen)

    r = sub.add_parser("run", help="run one mechanism on explicit bids")
    r.add_argument("--mech", required=True,
                   choices=["dpm", "dpm-nondsic", "single", "posted", "vcg-median", "scaled-dpm",
                            "top-item", "optimal"])
    r.add_argument("--bids", type=_floats, required=True)
    r.add_argument("--prices", type=_floats)
    r.add_argument("--price", type=float)
    r.add_argument("--m", type=int)
    r.add_argument("--k", type=int, default=1)
    r.add_argument("--instance")
    r.add_argument("--seed", type=int, default=seed)
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("simulate", help="Monte Carlo revenue or payer-tail estimate, CSV output")
    s.add_argument("--instance", required=True)
    s.add_argument("--mech", choices=SIM_MECHS, default="mixed")
    s.add_argument("--k", type=int, default=1)
    s.add_argument("--trials", type=int, default=100_000)
    s.add_argument("--seed", type=int, default=seed)
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--tail", action="store_true", help="report payer counts per block")
    s.add_argument("-o", "--output")
    s.set_defaults(func=cmd_simulate)

    q = sub.add_parser("posterior", help="posterior of one value given the others")
    q.add_argument("--instance", required=True)
    q.add_argument("--observed", type=_floats, required=True)
    q.set_defaults(func=cmd_posterior)

    v = sub.add_parser("verify", help="grid check of incentive properties")
    v.add_argument("--mech", choices=VERIFY_MECHS, required=True)
    v.add_argument("--grid", type=_floats, required=True)
    v.add_argument("--n", type=int, required=True)
    v.add_argument("--property", choices=[*PROPERTIES, "ALL"], default="ALL", type=str.upper)
    v.add_argument("--prices", type=_floats)
    v.add_argument("--price", type=float)
    v.add_argument("--m", type=int)
    v.add_argument("--instance")
    v.add_argument("--csv", help="write violations here")
    v.set_defaults(func=cmd_verify)

    b = sub.add_parser("bench", help="reproduce a named experiment")
    b.add_argument("name", choices=sorted(experiments.BENCHES))
    b.add_argument("--n", type=int)
    b.add_argument("--k", type=int, default=1)
    b.add_argument("--eps", type=float, default=0.5)
    b.add_argument("--levels", type=int, default=3)
    b.add_argument("--L", type=int, default=12)
    b.add_argument("--trials", type=int, default=100_000)
    b.add_argument("--instances", type=int, default=1)
    b.add_argument("--seed", type=int, default=seed)
    b.add_argument("-o", "--output")
    b.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (InstanceError, MechanismInputError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
