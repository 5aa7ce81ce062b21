import math

import pytest

from ridepool.config import SimConfig
from ridepool.core import Onboard, Request, make_vehicle
from ridepool.ctsp import CtspOracle, CtspPolicy, RouteMemory
from ridepool.epoch import EpochState
from ridepool.network import euclidean_network

# Node ids for the grid instance used throughout: the vehicle start, the new
# request's origin/destination, and the two scheduled drop-offs.
V, R1D, R2D, R3O, R3D = 10, 1, 2, 30, 31

FIGURE_POINTS = [(V, 0, 0), (R3O, 6, 3), (R3D, 3, 4), (R2D, 0, 6), (R1D, 6, 8)]

OPT_COST = math.sqrt(45) + math.sqrt(10) + math.sqrt(13) + math.sqrt(40)   # 19.8006
FLIP_COST = math.sqrt(45) + 5 + math.sqrt(40) + math.sqrt(13)              # 21.6383


@pytest.fixture
def fig_net():
    return euclidean_network(FIGURE_POINTS)


def build_figure_vehicle(net):
    """Vehicle at the start corner with passengers 1 and 2 onboard (drop-offs
    due by t=20) and request 3 (board by 10, arrive by 20) not yet assigned."""
    veh = make_vehicle(0, V, capacity=4)
    r1 = Request(1, V, R1D, 0.0, 1.0, 0.0, arrival_deadline=20.0)
    r2 = Request(2, V, R2D, 0.0, 1.0, 0.0, arrival_deadline=20.0)
    veh.onboard[1] = Onboard(r1, 20.0, 0.0)
    veh.onboard[2] = Onboard(r2, 20.0, 0.0)
    r3 = Request(3, R3O, R3D, 0.0, 10.0, 0.0, arrival_deadline=20.0)
    return veh, r3


@pytest.fixture
def fig_vehicle(fig_net):
    return build_figure_vehicle(fig_net)


def make_state(net, vehicles, requests, now=0.0, config=None, reassign=False,
               carried=(), committed_owner=None):
    """EpochState over plain collections, with an exact-mode oracle."""
    cfg = config or SimConfig()
    policy = CtspPolicy(mode=cfg.ctsp_mode, enumerate_limit=cfg.enumerate_limit,
                        lrp_eta=cfg.lrp_eta)
    oracle = CtspOracle(net, policy, RouteMemory())
    return EpochState(net, {v.id: v for v in vehicles}, {r.id: r for r in requests},
                      now, cfg, oracle, set(carried), dict(committed_owner or {}),
                      reassign)


def random_epoch_instance(rng, n_vehicles=None, n_requests=None, side=60.0,
                          wait=(30.0, 140.0), detour=(40.0, 240.0), capacity=None):
    """Random planar single-epoch instance at decision time 60 s."""
    if n_vehicles is None:
        n_vehicles = rng.randint(1, 5)
    if n_requests is None:
        n_requests = rng.randint(1, 8)
    pts = []
    for v in range(1, n_vehicles + 1):
        pts.append((v, rng.uniform(0, side), rng.uniform(0, side)))
    for r in range(n_requests):
        pts.append((100 + 2 * r, rng.uniform(0, side), rng.uniform(0, side)))
        pts.append((101 + 2 * r, rng.uniform(0, side), rng.uniform(0, side)))
    net = euclidean_network(pts)
    vehicles = [make_vehicle(v, v, capacity or rng.randint(1, 4))
                for v in range(1, n_vehicles + 1)]
    requests = [Request(r, 100 + 2 * r, 101 + 2 * r, rng.uniform(0.1, 60.0),
                        rng.uniform(*wait), rng.uniform(*detour))
                for r in range(n_requests)]
    return net, vehicles, requests


# -- paper-figure assignment instances -------------------------------------------


def ns_figure_instance():
    """3 vehicles, 4 requests: swap algorithms end with vehicle 1 = {1},
    vehicle 2 = {2} (after swapping 2 away from vehicle 1), vehicle 3 =
    {3, 4}; plain multi-round assignment strands request 1."""
    pts = [(1, 1.0, 1.8), (2, 6.2, 0.8), (3, 6.8, 12.6),
           (11, -2.5, -12.3), (21, -4.2, -14.6),
           (12, 7.4, 7.0), (22, 7.4, 9.0),
           (13, 6.0, 2.0), (23, 6.0, 9.9),
           (14, 6.0, 11.5), (24, 6.0, 1.9)]
    net = euclidean_network(pts)
    vehicles = [make_vehicle(i, i, capacity=4) for i in (1, 2, 3)]
    waits = {1: 21.2, 2: 11.4, 3: 15.9, 4: 7.2}
    requests = [Request(k, 10 + k, 20 + k, 55.0, waits[k], 600.0) for k in (1, 2, 3, 4)]
    return net, vehicles, requests


NS_FIGURE_FINAL = {1: (1,), 2: (2,), 3: (3, 4)}


def la_mr_figure_instance():
    """3 vehicles, 5 requests: multi-round assignment ends with vehicle 1 =
    {1, 2, 3} and vehicle 3 = {4, 5}, vehicle 2 idle."""
    pts = [(1, 0.0, 0.0), (2, 30.0, 0.0), (3, 100.0, 0.0),
           (11, 2.0, 0.0), (21, 12.0, 0.0),
           (12, 1.0, 0.0), (22, 11.0, 0.0),
           (13, 3.0, 0.0), (23, 13.0, 0.0),
           (14, 101.0, 0.0), (24, 111.0, 0.0),
           (15, 102.0, 0.0), (25, 112.0, 0.0)]
    net = euclidean_network(pts)
    vehicles = [make_vehicle(i, i, capacity=4) for i in (1, 2, 3)]
    waits = {1: 10.0, 2: 10.0, 3: 40.0, 4: 10.0, 5: 10.0}
    requests = [Request(k, 10 + k, 20 + k, 55.0, waits[k], 600.0) for k in range(1, 6)]
    return net, vehicles, requests


def twins_instance():
    """Two near-identical co-located requests, one nearby vehicle and one far."""
    pts = [(1, 0.0, 0.0), (2, 50.0, 0.0),
           (11, 1.0, 0.0), (21, 11.0, 0.0),
           (12, 1.5, 0.0), (22, 11.5, 0.0)]
    net = euclidean_network(pts)
    vehicles = [make_vehicle(1, 1, 4), make_vehicle(2, 2, 4)]
    requests = [Request(1, 11, 21, 55.0, 60.0, 600.0),
                Request(2, 12, 22, 55.0, 60.0, 600.0)]
    return net, vehicles, requests


def solution_sets(sol):
    return {vid: tuple(sorted(t.request_ids))
            for vid, t in sol.assigned.items() if t.request_ids}


def brute_force_assignment(state):
    """Independent epoch oracle: recursive search over all request-to-vehicle
    assignments with feasibility pruning. Returns the optimal objective on
    the shared scale (route-cost deltas + penalty per unserved request)."""
    rids = state.request_ids()
    vids = state.vehicle_ids()
    m = state.config.penalty_m
    base = {vid: state.base_cost(state.vehicles[vid]) for vid in vids}
    best = [math.inf]

    def cost_of(vid, subset):
        route, cost = state.plan(state.vehicles[vid], subset)
        return None if route is None else cost - base[vid]

    def rec(idx, sets, partial):
        if partial >= best[0] - 1e-12:
            return
        if idx == len(rids):
            best[0] = partial
            return
        rid = rids[idx]
        rec(idx + 1, sets, partial + m)  # leave it unserved
        for vid in vids:
            new_set = sets[vid] + (rid,)
            delta = cost_of(vid, new_set)
            if delta is None:
                continue
            old = cost_of(vid, sets[vid]) or 0.0
            saved = sets[vid]
            sets[vid] = new_set
            rec(idx + 1, sets, partial - old + delta)
            sets[vid] = saved

    rec(0, {vid: () for vid in vids}, 0.0)
    return best[0]
