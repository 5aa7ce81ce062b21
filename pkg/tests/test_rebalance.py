import itertools
import random

import pytest

from ridepool.core import Request, make_vehicle
from ridepool.network import euclidean_network
from ridepool.rebalance import rebalance

from conftest import random_epoch_instance


def _reqs(net_pts, od_pairs):
    return [Request(i, o, d, 0.0, 300.0, 600.0) for i, (o, d) in enumerate(od_pairs)]


def test_no_idle_vehicles_empty_plan():
    net = euclidean_network([(1, 0, 0), (50, 10, 0), (51, 20, 0)])
    plan = rebalance(net, [], _reqs(net, [(50, 51)]))
    assert plan.moves == {} and plan.objective == 0.0


def test_single_vehicle_moves_to_nearer_origin():
    net = euclidean_network([(1, 0, 0), (50, 3, 0), (51, 20, 0), (60, 8, 0), (61, 30, 0)])
    reqs = [Request(0, 50, 51, 0.0, 300.0, 600.0),
            Request(1, 60, 61, 0.0, 300.0, 600.0)]
    plan = rebalance(net, [make_vehicle(1, 1)], reqs)
    assert plan.moves == {1: 50}
    assert plan.objective == pytest.approx(3.0)


def test_two_by_two_min_total_pairing():
    # crossed costs: the identity pairing is worse than the swap
    net = euclidean_network([(1, 0, 0), (2, 10, 0), (50, 9, 0), (51, 50, 0),
                             (60, 1, 0), (61, 60, 0)])
    reqs = [Request(0, 50, 51, 0.0, 300.0, 600.0),
            Request(1, 60, 61, 0.0, 300.0, 600.0)]
    plan = rebalance(net, [make_vehicle(1, 1), make_vehicle(2, 2)], reqs)
    assert plan.moves == {1: 60, 2: 50}
    assert plan.objective == pytest.approx(1.0 + 1.0)


@pytest.mark.parametrize("seed", range(10))
def test_matches_bruteforce_injection(seed):
    rng = random.Random(seed)
    net, vehicles, requests = random_epoch_instance(rng, rng.randint(1, 6),
                                                    rng.randint(1, 6))
    plan = rebalance(net, vehicles, requests)
    k = min(len(vehicles), len(requests))
    assert len(plan.moves) == k
    best = None
    for vsub in itertools.permutations(vehicles, k):
        for rsub in itertools.combinations(requests, k):
            tot = sum(net.shortest_time(v.loc_node, r.origin)
                      for v, r in zip(vsub, rsub))
            best = tot if best is None else min(best, tot)
    assert plan.objective == pytest.approx(best, abs=1e-7)
