"""Multi-epoch engine: batching, algorithm dispatch, rebalancing, vehicle
advancement, metrics, and the event log.

The loop is single-context and fully deterministic given (config, data):
algorithm fan-out returns results in submission order and nothing reads the
wall clock except the optional fast-RTV enumeration budget and the per-epoch
runtime column (reporting only).
"""

from __future__ import annotations

import copy
import math
import time
from dataclasses import dataclass, field

from .ce import la_mr_ce_assign
from .cg import cg_assign
from .config import SimConfig
from .core import Event, Request, VehicleState, batch_requests
from .ctsp import CtspOracle, CtspPolicy, RouteMemory
from .epoch import AssignmentSolution, EpochState, validate_solution
from .la import la_assign, la_mr_assign, la_mr_ns_assign, la_mr_ps_assign
from .network import Network
from .rebalance import rebalance, relocation_stop
from .rtv import fast_rtv_assign, rtv_assign

INF = math.inf

LA_FAMILY = ("la", "la-mr", "la-mr-ns", "la-mr-ps", "la-mr-ce")
RTV_FAMILY = ("rtv", "fast-rtv", "cg")

ALGORITHMS = {
    "la": la_assign,
    "la-mr": la_mr_assign,
    "la-mr-ns": la_mr_ns_assign,
    "la-mr-ps": la_mr_ps_assign,
    "la-mr-ce": la_mr_ce_assign,
    "rtv": rtv_assign,
    "fast-rtv": fast_rtv_assign,
    "cg": cg_assign,
}


@dataclass
class Metrics:
    requests_total: int = 0
    served: int = 0
    expired: int = 0
    pending_at_horizon: int = 0
    service_rate: float = 1.0
    zero_denominator: bool = False
    shared_rate: float = 0.0
    vmt_m: float = 0.0
    per_epoch_assigned: list[int] = field(default_factory=list)
    per_epoch_batch: list[int] = field(default_factory=list)
    per_epoch_runtime_s: list[float] = field(default_factory=list)


@dataclass
class SimResult:
    metrics: Metrics
    events: list[Event]
    epoch_rows: list[dict]


def ctsp_policy(cfg: SimConfig) -> CtspPolicy:
    return CtspPolicy(mode=cfg.ctsp_mode, enumerate_limit=cfg.enumerate_limit,
                      lrp_eta=cfg.lrp_eta)


class Simulation:
    def __init__(self, config: SimConfig, net: Network, requests: list[Request],
                 vehicles: list[VehicleState]):
        self.config = config
        self.net = net
        self.requests = sorted(requests, key=lambda r: (r.emergence_time, r.id))
        self.by_id = {r.id: r for r in self.requests}
        self.vehicles = {v.id: copy.deepcopy(v) for v in vehicles}
        self.memory = RouteMemory()
        self.events: list[Event] = []
        self.assigned_to: dict[int, int] = {}    # rid -> vid, live assignments
        self.done: dict[int, str] = {}           # rid -> served | expired
        self.carried: set[int] = set()           # LA-family carry-over pool
        self.now = 0.0
        self.reassign = config.algo in RTV_FAMILY and config.rtv_reassign

    # -- epoch steps -------------------------------------------------------

    def _advance_fleet(self, t_to: float):
        dt = t_to - self.now
        if dt <= 0:
            return
        for vid in sorted(self.vehicles):
            for ev in self.vehicles[vid].advance(self.net, dt, self.now):
                self.events.append(ev)
                if ev.kind == "dropoff":
                    self.done[ev.request_id] = "served"
                    self.assigned_to.pop(ev.request_id, None)
        self.now = t_to

    def _pool_for_epoch(self, t1: float, t2: float):
        batch, future = batch_requests(self.requests, t1, t2, self.config.visibility_w)
        pool: dict[int, Request] = {}
        committed_owner: dict[int, int] = {}
        for r in batch:
            if r.id in self.done or r.id in self.assigned_to:
                continue
            pool[r.id] = r
        for ev_req in batch:
            if ev_req.emergence_time <= t2 and ev_req.id in pool:
                self.events.append(Event(ev_req.emergence_time, "arrival",
                                         ev_req.id, -1, ev_req.origin))
        carried_now = set()
        if self.config.algo in LA_FAMILY:
            for rid in sorted(self.carried):
                r = self.by_id[rid]
                if rid not in self.done and rid not in self.assigned_to and r.latest_boarding >= t2:
                    pool[rid] = r
                    carried_now.add(rid)
            # future-visible commitments may be replanned until they emerge
            if self.config.visibility_w > 0:
                for vid in sorted(self.vehicles):
                    veh = self.vehicles[vid]
                    for rid in sorted(veh.waiting):
                        if veh.waiting[rid].emergence_time > t2:
                            r = veh.waiting.pop(rid)
                            stops = [s for s in veh.remaining_stops if s.request_id != rid]
                            veh.commit_route(self.net, stops, self.now)
                            self.assigned_to.pop(rid, None)
                            pool[rid] = r
        if self.reassign:
            for vid in sorted(self.vehicles):
                for rid in sorted(self.vehicles[vid].waiting):
                    pool[rid] = self.vehicles[vid].waiting[rid]
                    committed_owner[rid] = vid
        return pool, carried_now, committed_owner

    def _epoch_state(self, pool, carried_now, committed_owner) -> EpochState:
        oracle = CtspOracle(self.net, ctsp_policy(self.config), self.memory)
        return EpochState(self.net, self.vehicles, pool, self.now, self.config,
                          oracle, carried_now, committed_owner, self.reassign)

    def _apply(self, state: EpochState, sol: AssignmentSolution):
        for vid, trip in sorted(sol.assigned.items()):
            veh = self.vehicles[vid]
            new_ids = set(trip.request_ids)
            old_ids = set(veh.waiting) if self.reassign else set()
            for rid in sorted(old_ids - new_ids):
                veh.waiting.pop(rid)
                self.assigned_to.pop(rid, None)
            for rid in sorted(new_ids - old_ids):
                req = state.requests[rid]
                was_owner = state.committed_owner.get(rid)
                veh.waiting[rid] = req
                self.assigned_to[rid] = vid
                kind = "reassignment" if was_owner is not None and was_owner != vid \
                    else "assignment"
                if was_owner is None or was_owner != vid:
                    self.events.append(Event(self.now, kind, rid, vid, req.origin))
            veh.commit_route(self.net, trip.route.stops, self.now)
            self.memory.put(vid, [s.key for s in trip.route.stops])
        # unserved bookkeeping
        next_end = self.now + self.config.epoch_interval
        for rid in sorted(sol.unserved):
            req = state.requests[rid]
            if self.config.algo in LA_FAMILY:
                if req.latest_boarding >= next_end or req.emergence_time > self.now:
                    self.carried.add(rid)
                else:
                    self.carried.discard(rid)
                    self.done[rid] = "expired"
                    self.events.append(Event(self.now, "expiry", rid, -1, req.origin))
            else:
                if rid in state.committed_owner or req.emergence_time > self.now:
                    continue  # still committed elsewhere, or future-visible
                self.done[rid] = "expired"
                self.events.append(Event(self.now, "expiry", rid, -1, req.origin))
        for rid in sorted(set(self.carried) & set(sol.unserved)):
            if self.by_id[rid].latest_boarding < next_end and rid not in self.done:
                self.carried.discard(rid)
                self.done[rid] = "expired"
                self.events.append(Event(self.now, "expiry", rid, -1, self.by_id[rid].origin))

    def _rebalance(self, state: EpochState, sol: AssignmentSolution):
        if not self.config.rebalance_enabled:
            return
        idle = [v for vid, v in sorted(self.vehicles.items())
                if v.idle and not v.waiting and not v.onboard]
        unserved = [state.requests[rid] for rid in sorted(sol.unserved)
                    if rid not in self.done]
        plan = rebalance(self.net, idle, unserved)
        for vid in sorted(plan.moves):
            node = plan.moves[vid]
            veh = self.vehicles[vid]
            if node != veh.loc_node or veh.time_to_loc > 0:
                veh.commit_route(self.net, [relocation_stop(node)], self.now)
                self.events.append(Event(self.now, "relocation", -1, vid, node))

    def step_epoch(self, t1: float, t2: float) -> dict:
        self._advance_fleet(t2)
        pool, carried_now, committed_owner = self._pool_for_epoch(t1, t2)
        state = self._epoch_state(pool, carried_now, committed_owner)
        wall0 = time.perf_counter()
        sol = ALGORITHMS[self.config.algo](state)
        runtime = time.perf_counter() - wall0
        validate_solution(state, sol)
        self._apply(state, sol)
        self._rebalance(state, sol)
        assigned_new = sum(
            len(set(t.request_ids) - set(committed_owner)) for t in sol.assigned.values())
        return {
            "t_end": t2,
            "batch": len(pool) - len(committed_owner),
            "assigned": assigned_new,
            "unserved": len(sol.unserved),
            "objective": sol.objective,
            "runtime_s": runtime,
        }

    def drain(self):
        """Let committed routes finish after the horizon; no new assignments."""
        guard = 0
        while any(not v.idle for v in self.vehicles.values()):
            self._advance_fleet(self.now + self.config.epoch_interval)
            guard += 1
            if guard > 100000:
                raise RuntimeError("fleet failed to drain")
        for rid in sorted(self.carried):
            if rid not in self.done:
                self.done[rid] = "expired"
                self.events.append(Event(self.by_id[rid].latest_boarding, "expiry",
                                         rid, -1, self.by_id[rid].origin))
        self.carried.clear()

    def run(self) -> SimResult:
        cfg = self.config
        epoch_rows = []
        n_epochs = int(math.ceil(cfg.horizon / cfg.epoch_interval))
        for k in range(n_epochs):
            t1 = k * cfg.epoch_interval
            t2 = t1 + cfg.epoch_interval
            epoch_rows.append(self.step_epoch(t1, t2))
        pending = [r.id for r in self.requests
                   if r.id not in self.done and r.id not in self.assigned_to
                   and r.id not in self.carried]
        self.drain()
        metrics = self._metrics(epoch_rows)
        metrics.pending_at_horizon = len(pending)
        return SimResult(metrics, self.events, epoch_rows)

    def _metrics(self, epoch_rows) -> Metrics:
        m = Metrics()
        m.requests_total = len(self.requests)
        m.served = sum(1 for s in self.done.values() if s == "served")
        m.expired = sum(1 for s in self.done.values() if s == "expired")
        if m.requests_total == 0:
            m.service_rate, m.zero_denominator = 1.0, True
        else:
            m.service_rate = m.served / m.requests_total
        m.vmt_m = sum(v.distance_m(self.now) for v in self.vehicles.values())
        m.shared_rate = self._shared_rate()
        m.per_epoch_assigned = [row["assigned"] for row in epoch_rows]
        m.per_epoch_batch = [row["batch"] for row in epoch_rows]
        m.per_epoch_runtime_s = [row["runtime_s"] for row in epoch_rows]
        return m

    def _shared_rate(self) -> float:
        """Fraction of served requests whose onboard interval overlaps another
        request's onboard interval on the same vehicle (positive overlap)."""
        spans: dict[int, tuple[int, float, float]] = {}
        board: dict[int, tuple[int, float]] = {}
        for ev in self.events:
            if ev.kind == "pickup":
                board[ev.request_id] = (ev.vehicle_id, ev.time)
            elif ev.kind == "dropoff" and ev.request_id in board:
                vid, t0 = board[ev.request_id]
                spans[ev.request_id] = (vid, t0, ev.time)
        served = [rid for rid, s in self.done.items() if s == "served" and rid in spans]
        if not served:
            return 0.0
        by_vehicle: dict[int, list[tuple[float, float, int]]] = {}
        for rid in served:
            vid, t0, t1 = spans[rid]
            by_vehicle.setdefault(vid, []).append((t0, t1, rid))
        shared: set[int] = set()
        for vid, intervals in by_vehicle.items():
            for i, (a0, a1, ra) in enumerate(intervals):
                for b0, b1, rb in intervals[i + 1:]:
                    if max(a0, b0) < min(a1, b1):
                        shared.add(ra)
                        shared.add(rb)
        return len(shared) / len(served)


def run_simulation(config: SimConfig, net: Network, requests, vehicles) -> SimResult:
    return Simulation(config, net, requests, vehicles).run()


def compare_algorithms(config: SimConfig, net: Network, requests, vehicles,
                       algos: list[str]) -> list[dict]:
    """Run each algorithm on identical inputs; report service rate, distance
    (absolute and relative to the plain linear-assignment baseline), runtime."""
    from dataclasses import replace
    rows = []
    for algo in algos:
        cfg = replace(config, algo=algo)
        t0 = time.perf_counter()
        result = run_simulation(cfg, net, requests, vehicles)
        wall = time.perf_counter() - t0
        rows.append({
            "algo": algo,
            "service_rate": result.metrics.service_rate,
            "vmt_m": result.metrics.vmt_m,
            "shared_rate": result.metrics.shared_rate,
            "runtime_s": wall,
        })
    base = next((r for r in rows if r["algo"] == "la"), rows[0])
    for r in rows:
        r["vmt_pct_of_la"] = 100.0 * r["vmt_m"] / base["vmt_m"] if base["vmt_m"] else 100.0
    return rows
