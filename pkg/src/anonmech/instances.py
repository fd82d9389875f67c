"""Named instance families and JSON instance files."""

from __future__ import annotations

import json
from fractions import Fraction

import numpy as np

from .distributions import (
    AuctionInstance,
    DiscretePMF,
    InstanceError,
    PointMass,
    UniformInterval,
)


def harmonic(n: int, exact: bool = False) -> AuctionInstance:
    """Point values ``1/i``; ``exact`` keeps them as fractions."""
    vals = [Fraction(1, i) if exact else 1.0 / i for i in range(1, n + 1)]
    return AuctionInstance.create([PointMass(v) for v in vals])


def geometric(eps: float, n: int, delta: float = 1.0) -> AuctionInstance:
    """Bidder ``i`` values ``eps**-i`` with probability ``delta * eps**i``, else 0."""
    bidders = []
    for i in range(1, n + 1):
        hi = delta * eps ** i
        bidders.append(DiscretePMF((0.0, eps ** -i), (1.0 - hi, hi)))
    return AuctionInstance.create(bidders)


def nested_uniform(levels: int, L: int) -> AuctionInstance:
    bidders = [UniformInterval(0.0, 2.0 ** -i) for i in range(levels) for _ in range(2 ** i * L)]
    return AuctionInstance.create(bidders)


def random_k_ambiguous(n: int, k: int, seed: int, atoms: int = 3, scales=None) -> AuctionInstance:
    """Discrete bidders whose supports overlap at most ``k`` predecessors.

    Support lows fall geometrically; each high is drawn uniformly between the
    bidder's own low and the low ``k+1`` places ahead, so ``b_i < a_{i-1-k}``.
    Every bidder has ``atoms`` equally likely atoms including both ends.
    """
    rng = np.random.default_rng(seed)
    ratio = rng.uniform(0.5, 0.8)
    top = 1.0

    def low(i):  # 1-based; extrapolates above bidder 1
        return top * ratio ** (i - 1)

    bidders = []
    for i in range(1, n + 1):
        a, cap = low(i), low(i - 1 - k)
        b = rng.uniform(a, cap)
        if b <= a:
            b = (a + cap) / 2
        inner = np.sort(rng.uniform(a, b, size=atoms - 2))
        values = [a, *inner.tolist(), b]
        bidders.append(DiscretePMF(tuple(values), (1.0 / atoms,) * atoms))
    return AuctionInstance.create(bidders, scales=scales)


def geometric_scales(n: int) -> list:
    return [2.0 ** -j for j in range(n)]


# --- JSON files ---------------------------------------------------------------

def _bidder_to_json(d) -> dict:
    if isinstance(d, PointMass):
        return {"kind": "point", "value": float(d.value)}
    if isinstance(d, DiscretePMF):
        return {"kind": "discrete", "values": [float(v) for v in d.values],
                "probs": [float(m) for m in d.masses]}
    return {"kind": "uniform", "lo": float(d.lo), "hi": float(d.hi)}


def instance_to_json(inst: AuctionInstance) -> str:
    doc = {"bidders": [_bidder_to_json(d) for d in inst.bidders], "units": inst.units}
    if inst.scales is not None:
        doc["scales"] = [float(s) for s in inst.scales]
    return json.dumps(doc, indent=2)


def _field(obj: dict, key: str, where: str):
    if key not in obj:
        raise InstanceError(f"{where}: missing field '{key}'")
    return obj[key]


def _bidder_from_json(obj, where: str):
    if not isinstance(obj, dict):
        raise InstanceError(f"{where}: expected an object")
    kind = _field(obj, "kind", where)
    try:
        if kind == "point":
            return PointMass(float(_field(obj, "value", where)))
        if kind == "discrete":
            values = [float(v) for v in _field(obj, "values", where)]
            probs = [float(p) for p in _field(obj, "probs", where)]
            return DiscretePMF(tuple(values), tuple(probs))
        if kind == "uniform":
            return UniformInterval(float(_field(obj, "lo", where)), float(_field(obj, "hi", where)))
    except InstanceError as exc:
        raise InstanceError(f"{where}: {exc}") from None
    except (TypeError, ValueError) as exc:
        raise InstanceError(f"{where}: {exc}") from None
    raise InstanceError(f"{where}.kind: unknown kind {kind!r}")


def parse_instance(text: str) -> AuctionInstance:
    """Parse a JSON instance document; bidders are sorted by support low."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InstanceError(f"malformed JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise InstanceError("top level must be an object")
    raw = _field(doc, "bidders", "instance")
    if not isinstance(raw, list) or not raw:
        raise InstanceError("bidders: expected a nonempty list")
    bidders = [_bidder_from_json(b, f"bidders[{i}]") for i, b in enumerate(raw)]
    units = doc.get("units")
    if units is not None and (not isinstance(units, int) or isinstance(units, bool)):
        raise InstanceError("units: expected an integer")
    scales = doc.get("scales")
    if scales is not None:
        if not isinstance(scales, list):
            raise InstanceError("scales: expected a list")
        scales = [float(s) for s in scales]
        if any(b > a for a, b in zip(scales, scales[1:])):
            raise InstanceError("scales: must be nonincreasing")
    try:
        return AuctionInstance.create(bidders, units=units, scales=scales)
    except InstanceError as exc:
        raise InstanceError(f"instance: {exc}") from None
