"""Exhaustive grid checks of DSIC, ex-post IR, anonymity and monotonicity.

A mechanism under test is any callable ``bids -> Outcome`` that returns
*expected* allocations and payments. Randomness is never sampled here:
:func:`tie_averaged` enumerates tie-break orders and :func:`mixture`
weights deterministic branches exactly.
"""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

from .mechanisms import Outcome

PROPERTIES = ("DSIC", "IR", "ANONYMITY", "MONOTONE")
MAX_PROFILES = 10**6

ExpectedMechanism = Callable[[Sequence[float]], Outcome]


@dataclass(frozen=True)
class Violation:
    profile: tuple
    bidder: int
    witness: object  # deviation bid, permutation or the compared bidder
    amount: float


@dataclass
class PropertyReport:
    property: str
    profiles_checked: int
    checks: int = 0
    violations: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.violations

    def summary(self) -> str:
        status = "PASS" if self.passed else f"FAIL ({len(self.violations)} violations)"
        return f"{self.property}: {status} over {self.profiles_checked} profiles, {self.checks} checks"

    def listing(self, limit: int = 20) -> str:
        lines = [self.summary()]
        for v in self.violations[:limit]:
            lines.append(f"  profile={v.profile} bidder={v.bidder} witness={v.witness} amount={v.amount:.6g}")
        if len(self.violations) > limit:
            lines.append(f"  ... {len(self.violations) - limit} more")
        return "\n".join(lines)

    def write_csv(self, fh) -> None:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["property", "profile", "bidder", "witness", "amount"])
        for v in self.violations:
            w.writerow([self.property, " ".join(map(repr, v.profile)), v.bidder, v.witness, repr(v.amount)])


def _average(outcomes: Sequence[Outcome], weights: Sequence[float]) -> Outcome:
    n = len(outcomes[0].allocation)
    total = math.fsum(weights)
    alloc = tuple(math.fsum(w * o.allocation[i] for o, w in zip(outcomes, weights)) / total for i in range(n))
    pay = tuple(math.fsum(w * o.payments[i] for o, w in zip(outcomes, weights)) / total for i in range(n))
    return Outcome(alloc, pay, (None,) * n)


def tie_averaged(fn: Callable[..., Outcome]) -> ExpectedMechanism:
    """Average ``fn(bids, priority=...)`` over every tie-break order that matters."""

    def expected(bids):
        n = len(bids)
        if len(set(bids)) == n:
            return fn(list(bids), priority=list(range(n)))
        outs = [fn(list(bids), priority=list(p)) for p in itertools.permutations(range(n))]
        return _average(outs, [1.0] * len(outs))

    return expected


def mixture(branches: Sequence[tuple]) -> ExpectedMechanism:
    """Exact expectation over ``[(weight, expected_mechanism), ...]``."""

    def expected(bids):
        return _average([m(bids) for _, m in branches], [w for w, _ in branches])

    return expected


def _utility(out: Outcome, i: int, value: float) -> float:
    return out.allocation[i] * value - out.payments[i]


def check_property(mech: ExpectedMechanism, prop: str, grid: Sequence[float], n: int,
                   tol: float = 1e-9) -> PropertyReport:
    """Check one property on every profile in ``grid ** n``."""
    prop = prop.upper()
    if prop not in PROPERTIES:
        raise ValueError(f"unknown property {prop!r}; choose from {PROPERTIES}")
    grid = list(grid)
    if len(grid) ** n > MAX_PROFILES:
        raise ValueError(f"grid of {len(grid)} values over {n} bidders exceeds {MAX_PROFILES} profiles")
    profiles = list(itertools.product(grid, repeat=n))
    outcome = {v: mech(v) for v in profiles}
    report = PropertyReport(prop, len(profiles))

    for v in profiles:
        out = outcome[v]
        if prop == "DSIC":
            for i in range(n):
                honest = _utility(out, i, v[i])
                # the truthful report is counted too; its gain is exactly 0
                for d in grid:
                    dev = v[:i] + (d,) + v[i + 1:]
                    gain = _utility(outcome[dev], i, v[i]) - honest
                    report.checks += 1
                    if gain > tol:
                        report.violations.append(Violation(v, i, d, gain))
        elif prop == "IR":
            for i in range(n):
                report.checks += 1
                u = _utility(out, i, v[i])
                if u < -tol:
                    report.violations.append(Violation(v, i, None, -u))
        elif prop == "ANONYMITY":
            if len(set(v)) < n:
                continue
            for perm in itertools.permutations(range(n)):
                moved = tuple(v[perm[j]] for j in range(n))
                other = outcome[moved]
                report.checks += 1
                gap = max(
                    max(abs(other.allocation[j] - out.allocation[perm[j]]) for j in range(n)),
                    max(abs(other.payments[j] - out.payments[perm[j]]) for j in range(n)),
                )
                if gap > tol:
                    report.violations.append(Violation(v, -1, perm, gap))
        else:
            for i in range(n):
                for j in range(n):
                    if v[i] > v[j]:
                        report.checks += 1
                        short = out.allocation[j] - out.allocation[i]
                        if short > tol:
                            report.violations.append(Violation(v, i, j, short))
    return report


def check_all(mech: ExpectedMechanism, grid: Sequence[float], n: int, tol: float = 1e-9,
              properties: Sequence[str] = PROPERTIES) -> dict:
    return {p: check_property(mech, p, grid, n, tol) for p in properties}
