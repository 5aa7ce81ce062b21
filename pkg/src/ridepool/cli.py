"""Command-line entry point: config resolution, data validation, subcommand
dispatch, and run artifacts (metrics/epochs/events CSVs plus a manifest that
pins the resolved config and input digests for exact reruns).

Exit codes: 0 success, 2 validation error, 1 runtime error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys

from . import __version__
from .analysis import analyze_lag
from .config import ConfigError, SimConfig, config_help, parse_config, resolved_dict
from .core import DataError, read_requests_csv, read_vehicles_csv, validate_against_network
from .demand import DemandSpec, generate
from .network import NetworkError, load_network_csv
from .sim import compare_algorithms, run_simulation


class ValidationFailure(Exception):
    pass


def _digest(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def _add_common_data_args(sp):
    sp.add_argument("--nodes", required=True, help="nodes.csv (node_id,x,y)")
    sp.add_argument("--edges", required=True, help="edges.csv (from,to,travel_time_s[,length_m])")
    sp.add_argument("--requests", required=True,
                    help="requests.csv (request_id,origin_node,dest_node,emergence_time_s[,max_wait_s,max_detour_s])")
    sp.add_argument("--vehicles", required=True,
                    help="vehicles.csv (vehicle_id,start_node[,capacity])")


def _add_config_args(sp):
    sp.add_argument("--config", default=os.environ.get("RIDEPOOL_CONFIG"),
                    help="config file of key = value lines (default: $RIDEPOOL_CONFIG)")
    sp.add_argument("--algo", help="assignment algorithm override")
    sp.add_argument("--horizon", type=float, help="horizon override, seconds")
    sp.add_argument("--set", dest="sets", action="append", default=[],
                    metavar="KEY=VALUE", help="override any config key (repeatable)")


def _resolve_config(args) -> SimConfig:
    overrides = {}
    for item in args.sets:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        key, val = item.split("=", 1)
        overrides[key.strip()] = val.strip()
    if getattr(args, "algo", None):
        overrides["algo"] = args.algo
    if getattr(args, "horizon", None) is not None:
        overrides["epoch.horizon"] = str(args.horizon)
    path = args.config
    if path is not None and not os.path.exists(path):
        raise ValidationFailure(f"config file not found: {path}")
    return parse_config(path, overrides)


def _load_data(args, cfg: SimConfig):
    for path in (args.nodes, args.edges, args.requests, args.vehicles):
        if not os.path.exists(path):
            raise ValidationFailure(f"input file not found: {path}")
    net = load_network_csv(args.nodes, args.edges)
    requests = read_requests_csv(args.requests, cfg.max_wait, cfg.max_detour)
    vehicles = read_vehicles_csv(args.vehicles, cfg.capacity)
    validate_against_network(net, requests, vehicles)
    return net, requests, vehicles


def _write_manifest(out_dir, cfg, inputs: dict):
    manifest = {
        "artifact_version": __version__,
        "config": resolved_dict(cfg),
        "inputs": {name: _digest(path) for name, path in inputs.items()},
    }
    with open(os.path.join(out_dir, "run_manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_events_csv(path, events):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("time,event,request_id,vehicle_id,node\n")
        for ev in events:
            fh.write(f"{ev.time:.6f},{ev.kind},{ev.request_id},{ev.vehicle_id},{ev.node}\n")


def _write_epochs_csv(path, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("epoch,t_end,batch,assigned,unserved,objective,runtime_s\n")
        for i, row in enumerate(rows):
            fh.write(f"{i},{row['t_end']:.1f},{row['batch']},{row['assigned']},"
                     f"{row['unserved']},{row['objective']:.6f},{row['runtime_s']:.6f}\n")


def _write_metrics_csv(path, cfg, m):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("algo,requests_total,served,expired,service_rate,shared_rate,"
                 "vmt_m,zero_denominator\n")
        fh.write(f"{cfg.algo},{m.requests_total},{m.served},{m.expired},"
                 f"{m.service_rate:.6f},{m.shared_rate:.6f},{m.vmt_m:.3f},"
                 f"{str(m.zero_denominator).lower()}\n")


def cmd_simulate(args) -> int:
    cfg = _resolve_config(args)
    net, requests, vehicles = _load_data(args, cfg)
    os.makedirs(args.out, exist_ok=True)
    result = run_simulation(cfg, net, requests, vehicles)
    _write_manifest(args.out, cfg, {"nodes": args.nodes, "edges": args.edges,
                                    "requests": args.requests, "vehicles": args.vehicles})
    _write_metrics_csv(os.path.join(args.out, "metrics.csv"), cfg, result.metrics)
    _write_epochs_csv(os.path.join(args.out, "epochs.csv"), result.epoch_rows)
    _write_events_csv(os.path.join(args.out, "events.csv"), result.events)
    m = result.metrics
    print(f"algo={cfg.algo} requests={m.requests_total} served={m.served} "
          f"service_rate={m.service_rate:.4f} shared_rate={m.shared_rate:.4f} "
          f"vmt_m={m.vmt_m:.1f}")
    return 0


def cmd_compare(args) -> int:
    cfg = _resolve_config(args)
    net, requests, vehicles = _load_data(args, cfg)
    algos = [a.strip() for a in args.algos.split(",") if a.strip()]
    rows = compare_algorithms(cfg, net, requests, vehicles, algos)
    os.makedirs(args.out, exist_ok=True)
    _write_manifest(args.out, cfg, {"nodes": args.nodes, "edges": args.edges,
                                    "requests": args.requests, "vehicles": args.vehicles})
    out_path = os.path.join(args.out, "compare.csv")
    with open(out_path, "w", encoding="utf-8", newline="") as fh:
        fh.write("algo,service_rate,vmt_m,vmt_pct_of_la,shared_rate,runtime_s\n")
        for r in rows:
            fh.write(f"{r['algo']},{r['service_rate']:.6f},{r['vmt_m']:.3f},"
                     f"{r['vmt_pct_of_la']:.3f},{r['shared_rate']:.6f},{r['runtime_s']:.3f}\n")
    header = f"{'algo':12s} {'SR':>8s} {'VMT_m':>12s} {'VMT%ofLA':>9s} {'runtime_s':>10s}"
    print(header)
    for r in rows:
        print(f"{r['algo']:12s} {r['service_rate']:8.4f} {r['vmt_m']:12.1f} "
              f"{r['vmt_pct_of_la']:9.2f} {r['runtime_s']:10.3f}")
    return 0


def cmd_gen_demand(args) -> int:
    cfg = _resolve_config(args)
    if not os.path.exists(args.nodes) or not os.path.exists(args.edges):
        raise ValidationFailure("gen-demand needs --nodes/--edges for the node universe")
    net = load_network_csv(args.nodes, args.edges)
    spec = DemandSpec(args.rate, args.horizon_s, args.seed, cfg.max_wait, cfg.max_detour)
    requests = generate(spec, net)
    with open(args.out, "w", encoding="utf-8", newline="") as fh:
        fh.write("request_id,origin_node,dest_node,emergence_time_s,max_wait_s,max_detour_s\n")
        for r in requests:
            fh.write(f"{r.id},{r.origin},{r.destination},{r.emergence_time:.6f},"
                     f"{r.max_wait:.1f},{r.max_detour:.1f}\n")
    print(f"wrote {len(requests)} requests to {args.out}")
    return 0


def cmd_analyze_lag(args) -> int:
    if not os.path.exists(args.epochs):
        raise ValidationFailure(f"input file not found: {args.epochs}")
    with open(args.epochs, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or "assigned" not in reader.fieldnames:
            raise ValidationFailure(f"{args.epochs}: missing 'assigned' column")
        series = [int(row["assigned"]) for row in reader]
    if len(series) <= args.max_lag:
        raise ValidationFailure("series shorter than the requested max lag")
    results = analyze_lag(series, args.max_lag, args.out_prefix)
    for res in results:
        print(f"lag={res.lag:3d} slope={res.slope:+.4f} r={res.r:+.4f}")
    return 0


def cmd_validate(args) -> int:
    cfg = _resolve_config(args)
    net, requests, vehicles = _load_data(args, cfg)
    print(f"ok: {len(net.nodes)} nodes, {len(requests)} requests, "
          f"{len(vehicles)} vehicles, algo={cfg.algo}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ridepool",
        description="Ride-pool assignment simulator and algorithm bench",
        epilog=config_help(),
        formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("simulate", help="run one algorithm over the horizon",
                        epilog=config_help(),
                        formatter_class=argparse.RawDescriptionHelpFormatter)
    _add_common_data_args(sp)
    _add_config_args(sp)
    sp.add_argument("--out", required=True, help="output directory")
    sp.set_defaults(fn=cmd_simulate)

    sp = sub.add_parser("compare", help="run several algorithms on identical input",
                        epilog=config_help(),
                        formatter_class=argparse.RawDescriptionHelpFormatter)
    _add_common_data_args(sp)
    _add_config_args(sp)
    sp.add_argument("--algos", required=True, help="comma-separated algorithm list")
    sp.add_argument("--out", required=True, help="output directory")
    sp.set_defaults(fn=cmd_compare)

    sp = sub.add_parser("gen-demand", help="generate uniform synthetic demand",
                        epilog=config_help(),
                        formatter_class=argparse.RawDescriptionHelpFormatter)
    sp.add_argument("--nodes", required=True)
    sp.add_argument("--edges", required=True)
    sp.add_argument("--rate", type=int, required=True, help="requests per minute")
    sp.add_argument("--horizon-s", type=float, required=True, dest="horizon_s")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", required=True, help="requests.csv to write")
    _add_config_args(sp)
    sp.set_defaults(fn=cmd_gen_demand)

    sp = sub.add_parser("analyze-lag", help="lag regression over per-epoch counts",
                        epilog=config_help(),
                        formatter_class=argparse.RawDescriptionHelpFormatter)
    sp.add_argument("--epochs", required=True, help="epochs.csv from simulate")
    sp.add_argument("--max-lag", type=int, required=True, dest="max_lag")
    sp.add_argument("--out-prefix", required=True, dest="out_prefix")
    sp.set_defaults(fn=cmd_analyze_lag)

    sp = sub.add_parser("validate", help="check inputs and config, write nothing",
                        epilog=config_help(),
                        formatter_class=argparse.RawDescriptionHelpFormatter)
    _add_common_data_args(sp)
    _add_config_args(sp)
    sp.set_defaults(fn=cmd_validate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ValidationFailure, ConfigError, DataError, NetworkError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except Exception as e:  # runtime failure
        print(f"runtime error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
