import math
from dataclasses import replace

import pytest

from ridepool.config import SimConfig
from ridepool.core import Request, make_vehicle
from ridepool.demand import DemandSpec, generate
from ridepool.network import euclidean_network, load_network_csv
from ridepool.sim import Simulation, compare_algorithms, run_simulation

TOWN_NODES = "data/town/nodes.csv"
TOWN_EDGES = "data/town/edges.csv"


def town():
    return load_network_csv(TOWN_NODES, TOWN_EDGES)


def line_net():
    return euclidean_network([(0, 0.0, 0.0), (1, 60.0, 0.0), (2, 120.0, 0.0),
                              (3, 180.0, 0.0), (4, 240.0, 0.0)])


def cfg(**kw):
    base = dict(horizon=300.0, epoch_interval=60.0, algo="la",
                rebalance_enabled=True)
    base.update(kw)
    return SimConfig(**base)


def audit_qos(requests, events):
    """No pickup after its boarding deadline; no dropoff after the arrival
    deadline implied by the actual boarding time."""
    by_id = {r.id: r for r in requests}
    direct = {}
    boarded = {}
    for ev in events:
        if ev.kind == "pickup":
            r = by_id[ev.request_id]
            assert ev.time <= r.latest_boarding + 1e-9
            boarded[ev.request_id] = ev.time
        elif ev.kind == "dropoff":
            r = by_id[ev.request_id]
            t0 = boarded[ev.request_id]
            deadline = r.arrival_deadline if r.arrival_deadline is not None else \
                t0 + direct[ev.request_id] + r.max_detour
            assert ev.time <= deadline + 1e-9
    return True


def run(config, net, requests, vehicles):
    result = run_simulation(config, net, requests, vehicles)
    # audit needs direct times; recompute here
    by_id = {r.id: r for r in requests}
    board = {}
    for ev in result.events:
        if ev.kind == "pickup":
            r = by_id[ev.request_id]
            assert ev.time <= r.latest_boarding + 1e-9
            board[ev.request_id] = ev.time
        elif ev.kind == "dropoff":
            r = by_id[ev.request_id]
            deadline = board[ev.request_id] + net.shortest_time(r.origin, r.destination) \
                + r.max_detour
            assert ev.time <= deadline + 1e-9
    return result


def test_zero_requests_only_rebalancing():
    net = line_net()
    vehicles = [make_vehicle(0, 0), make_vehicle(1, 1)]
    result = run(cfg(), net, [], vehicles)
    kinds = {e.kind for e in result.events}
    assert kinds <= {"relocation"} and result.metrics.served == 0
    assert result.metrics.zero_denominator and result.metrics.service_rate == 1.0


def test_single_request_served_within_wait():
    net = line_net()
    vehicles = [make_vehicle(0, 0)]
    reqs = [Request(1, 1, 3, 30.0, 300.0, 600.0)]
    result = run(cfg(), net, reqs, vehicles)
    kinds = [e.kind for e in result.events if e.request_id == 1]
    assert kinds == ["arrival", "assignment", "pickup", "dropoff"]
    assert result.metrics.service_rate == 1.0
    assert result.metrics.shared_rate == 0.0
    assert not result.metrics.zero_denominator


def test_crafted_shared_ride_rate_one():
    net = line_net()
    vehicles = [make_vehicle(0, 0)]
    reqs = [Request(1, 1, 4, 30.0, 300.0, 600.0),
            Request(2, 2, 3, 30.0, 300.0, 600.0)]
    result = run(cfg(algo="la-mr"), net, reqs, vehicles)
    assert result.metrics.service_rate == 1.0
    assert result.metrics.shared_rate == 1.0  # 2 rode inside 1's span


def test_unserved_carryover_appears_next_epoch():
    net = line_net()
    # vehicle busy far away during the first epoch of the request
    vehicles = [make_vehicle(0, 4)]
    reqs = [Request(1, 0, 2, 30.0, 200.0, 600.0),
            Request(2, 4, 3, 10.0, 60.0, 600.0)]
    config = cfg(algo="la", rebalance_enabled=False)
    sim = Simulation(config, net, reqs, vehicles)
    rows = [sim.step_epoch(0.0, 60.0)]
    if 1 in sim.carried:
        row2 = sim.step_epoch(60.0, 120.0)
        assert 1 in sim.assigned_to or 1 in sim.carried or 1 in sim.done
    # either way the request must eventually resolve
    sim2 = Simulation(config, net, reqs, vehicles)
    res = sim2.run()
    assert res.metrics.served + res.metrics.expired == 2


def test_expiry_event_for_unreachable_request():
    net = line_net()
    vehicles = [make_vehicle(0, 0)]
    reqs = [Request(1, 4, 3, 10.0, 70.0, 600.0)]  # 24 s away? no: 240 m / 1 m-s
    result = run_simulation(cfg(), net, reqs, vehicles)
    kinds = [e.kind for e in result.events if e.request_id == 1]
    assert kinds == ["arrival", "expiry"]
    assert result.metrics.expired == 1


def test_accounting_identity_at_horizon():
    net = town()
    reqs = generate(DemandSpec(3, 240.0, seed=3), net)
    vehicles = [make_vehicle(0, 0), make_vehicle(1, 9)]
    config = cfg(horizon=240.0, algo="la")
    sim = Simulation(config, net, reqs, vehicles)
    result = sim.run()
    m = result.metrics
    assert m.served + m.expired == m.requests_total
    assert m.requests_total == len(reqs)


@pytest.mark.parametrize("algo", ["la", "la-mr", "la-mr-ns", "la-mr-ps",
                                  "la-mr-ce", "rtv", "cg"])
def test_determinism_and_qos(algo):
    net = town()
    reqs = generate(DemandSpec(2, 180.0, seed=5), net)
    vehicles = [make_vehicle(0, 0), make_vehicle(1, 9)]
    config = cfg(horizon=180.0, algo=algo)
    a = run(config, net, reqs, vehicles)
    b = run(config, net, reqs, vehicles)
    assert a.events == b.events
    assert a.metrics.vmt_m == b.metrics.vmt_m


def test_future_visibility_gates_pickup():
    net = line_net()
    vehicles = [make_vehicle(0, 1)]
    reqs = [Request(1, 1, 3, 100.0, 300.0, 600.0)]  # visible from t=40 with W=60
    config = cfg(visibility_w=60.0)
    result = run(config, net, reqs, vehicles)
    pickups = [e for e in result.events if e.kind == "pickup"]
    assert pickups and pickups[0].time >= 100.0  # never boards before emergence


def test_rtv_reassignment_logs_event():
    net = line_net()
    vehicles = [make_vehicle(0, 0), make_vehicle(1, 2)]
    reqs = [Request(1, 2, 4, 30.0, 280.0, 600.0),
            Request(2, 0, 1, 70.0, 280.0, 600.0)]
    config = cfg(algo="rtv", rtv_reassign=True, rebalance_enabled=False)
    result = run_simulation(config, net, reqs, vehicles)
    assert result.metrics.served == 2


def test_compare_single_algorithm_row():
    net = town()
    reqs = generate(DemandSpec(2, 120.0, seed=5), net)
    vehicles = [make_vehicle(0, 0)]
    rows = compare_algorithms(cfg(horizon=120.0), net, reqs, vehicles, ["la"])
    assert len(rows) == 1 and rows[0]["algo"] == "la"
    assert rows[0]["vmt_pct_of_la"] == 100.0


def test_compare_la_baseline_is_100():
    net = town()
    reqs = generate(DemandSpec(2, 120.0, seed=6), net)
    vehicles = [make_vehicle(0, 0), make_vehicle(1, 5)]
    rows = compare_algorithms(cfg(horizon=120.0), net, reqs, vehicles,
                              ["la", "la-mr"])
    by = {r["algo"]: r for r in rows}
    assert by["la"]["vmt_pct_of_la"] == 100.0
    assert by["la-mr"]["vmt_pct_of_la"] > 0.0
