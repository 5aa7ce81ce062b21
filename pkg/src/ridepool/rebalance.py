"""Post-assignment relocation of idle vehicles toward unserved origins."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .core import RELOCATE, Request, Stop, VehicleState
from .network import Network
from .optim import transportation_solve

INF = math.inf


@dataclass
class RebalancePlan:
    moves: dict[int, int] = field(default_factory=dict)   # vehicle id -> target node
    objective: float = 0.0                                # total deadhead seconds


def rebalance(net: Network, idle_vehicles: list[VehicleState],
              unserved: list[Request]) -> RebalancePlan:
    """Min-total-time pairing moving exactly min(#idle, #unserved) vehicles
    to unserved request origins. The relocation route is interruptible: any
    later assignment replaces it wholesale."""
    vehicles = sorted(idle_vehicles, key=lambda v: v.id)
    requests = sorted(unserved, key=lambda r: r.id)
    plan = RebalancePlan()
    if not vehicles or not requests:
        return plan
    costs = [[net.shortest_time(v.loc_node, r.origin) + v.time_to_loc
              for r in requests] for v in vehicles]
    if all(c == INF for row in costs for c in row):
        return plan
    big = 1e15  # unreachable pairs priced out, never chosen over reachable ones
    priced = [[c if c < INF else big for c in row] for row in costs]
    for i, j in transportation_solve(priced):
        if costs[i][j] == INF:
            continue
        plan.moves[vehicles[i].id] = requests[j].origin
        plan.objective += costs[i][j]
    return plan


def relocation_stop(target_node: int) -> Stop:
    return Stop(target_node, -1, RELOCATE, INF)
