"""Synthetic uniform demand for correlation studies and benchmarks."""

from __future__ import annotations

import random
from dataclasses import dataclass

from .core import Request
from .network import Network


@dataclass(frozen=True)
class DemandSpec:
    rate_per_min: int                # requests per whole minute
    horizon: float                   # seconds
    seed: int = 0
    max_wait: float = 300.0
    max_detour: float = 600.0

    def __post_init__(self):
        if self.rate_per_min < 0:
            raise ValueError("rate must be nonnegative")


def generate(spec: DemandSpec, net: Network) -> list[Request]:
    """Deterministic given the seed: exactly `rate` requests in each whole
    minute (times uniform within the minute, dropped past the horizon),
    origin-destination uniform over ordered node pairs with O != D."""
    nodes = net.nodes
    if len(nodes) < 2:
        raise ValueError("need at least two nodes to draw O-D pairs")
    rng = random.Random(spec.seed)
    minutes = int(spec.horizon // 60) + (1 if spec.horizon % 60 else 0)
    raw = []
    for m in range(minutes):
        for _ in range(spec.rate_per_min):
            t = 60.0 * m + rng.random() * 60.0
            o = rng.choice(nodes)
            d = rng.choice(nodes)
            while d == o:
                d = rng.choice(nodes)
            if t < spec.horizon:
                raw.append((t, o, d))
    raw.sort()
    return [Request(i, o, d, t, spec.max_wait, spec.max_detour)
            for i, (t, o, d) in enumerate(raw)]
