"""Command-line client for the simulator.

Runs everything in-process by default; with --server it becomes a thin
HTTP client of the service, sharing the same request/response schemas.

Exit codes: 0 success, 1 internal error, 2 usage/config error,
3 consistency check failed (violation or unchecked keys).
"""

import argparse
import json
import sys

from .checker import DEFAULT_OP_CAP, load_history
from .experiment import parse_crashes
from .metrics import serialize_report
from .service import (
    CheckRequest,
    ClusterParams,
    CrashParam,
    RunRequest,
    SweepRequest,
    WorkloadParams,
    execute_check,
    execute_run,
    execute_sweep,
)
from .simnet import SimError
from .workload import ConfigError

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_USAGE = 2
EXIT_VIOLATION = 3


def _add_workload_flags(p):
    p.add_argument("--replicas", type=int, default=5)
    p.add_argument("--keys", type=int, default=1_000_000, dest="key_count",
                   help="pre-populated key count")
    p.add_argument("--key-size", type=int, default=8)
    p.add_argument("--value-size", type=int, default=32)
    p.add_argument("--write-ratio", type=float, default=0.20)
    p.add_argument("--distribution", choices=["uniform", "zipf"], default="uniform")
    p.add_argument("--zipf-theta", type=float, default=0.99)
    p.add_argument("--ops", type=int, default=100_000, dest="op_count")
    p.add_argument("--sessions", type=int, default=2, dest="sessions_per_replica",
                   help="client sessions per replica")
    p.add_argument("--think-time-ns", type=int, default=0)
    p.add_argument("--seed", type=int, default=1)


def _add_cluster_flags(p):
    p.add_argument("--overlay", choices=["mesh", "chain", "star"], default="mesh")
    p.add_argument("--cache-capacity", type=int, default=65536)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--flush-timer-ns", type=int, default=2_000,
                   help="0 disables the flush timer")
    p.add_argument("--net-latency-ns", type=int, default=2_000)
    p.add_argument("--net-jitter-ns", type=int, default=0)
    p.add_argument("--pcie-rtt-ns", type=int, default=500)
    p.add_argument("--replay-timeout-ns", type=int, default=0,
                   help="0 = 4x network round trips")
    p.add_argument("--no-preload", action="store_true",
                   help="start with cold NIC caches")
    p.add_argument("--crash", action="append", default=[], metavar="REPLICA@TIME_NS",
                   help="crash a replica at a simulated time (repeatable)")


def _workload_params(args):
    return WorkloadParams(
        replicas=args.replicas, key_count=args.key_count, key_size=args.key_size,
        value_size=args.value_size, write_ratio=args.write_ratio,
        distribution=args.distribution, zipf_theta=args.zipf_theta,
        op_count=args.op_count, sessions_per_replica=args.sessions_per_replica,
        think_time_ns=args.think_time_ns, seed=args.seed,
    )


def _cluster_params(args):
    return ClusterParams(
        overlay=args.overlay, cache_capacity=args.cache_capacity,
        batch_size=args.batch_size, flush_timer_ns=args.flush_timer_ns,
        net_latency_ns=args.net_latency_ns, net_jitter_ns=args.net_jitter_ns,
        pcie_rtt_ns=args.pcie_rtt_ns, replay_timeout_ns=args.replay_timeout_ns,
        preload_cache=not args.no_preload,
    )


def _crash_params(args):
    return [CrashParam(replica=r, at_ns=t) for r, t in parse_crashes(args.crash)]


def parse_seeds(spec):
    seeds = []
    for part in spec.split(","):
        part = part.strip()
        if ".." in part:
            lo, hi = part.split("..", 1)
            seeds.extend(range(int(lo), int(hi) + 1))
        elif part:
            seeds.append(int(part))
    if not seeds:
        raise ConfigError(f"no seeds in {spec!r}")
    return seeds


def _post(server, path, payload):
    import httpx

    try:
        resp = httpx.post(server.rstrip("/") + path, json=payload, timeout=600.0)
    except httpx.HTTPError as e:
        raise OSError(f"cannot reach {server}: {e}") from e
    if resp.status_code == 422:
        raise ConfigError(resp.json().get("detail", "invalid request"))
    resp.raise_for_status()
    return resp.json()


def _write_history(events, meta, path):
    lines = [json.dumps({"meta": meta}, sort_keys=True)]
    lines += [json.dumps(e, sort_keys=True) for e in events]
    with open(path, "wb") as f:
        f.write(("\n".join(lines) + "\n").encode())


def cmd_run(args):
    req = RunRequest(
        workload=_workload_params(args),
        cluster=_cluster_params(args),
        crashes=_crash_params(args),
        check=args.check,
        include_history=args.history_out is not None,
    )
    if args.server:
        resp = _post(args.server, "/run", req.model_dump())
        report, check = resp["report"], resp["check"]
        history, meta = resp.get("history"), resp.get("history_meta")
    else:
        result = execute_run(req)
        report, check = result.report, result.check
        history = result.history
        meta = result.history_meta
    if args.out:
        with open(args.out, "wb") as f:
            f.write(serialize_report(report, args.format))
        print(f"report written to {args.out}")
    else:
        sys.stdout.write(serialize_report(report, args.format).decode())
    if args.history_out and history is not None:
        _write_history(history, meta, args.history_out)
        print(f"history written to {args.history_out}")
    if check is not None and not check["ok"]:
        if check["violations"]:
            print(f"check FAILED: {json.dumps(check['violations'], sort_keys=True)}")
        if check["unchecked_keys"]:
            print(f"unchecked keys (over search cap): {check['unchecked_keys']}")
        return EXIT_VIOLATION
    if check is not None:
        print(f"check ok: {check['keys_checked']} keys, {check['ops_checked']} ops")
    return EXIT_OK


def cmd_check(args):
    meta, events = load_history(args.history)
    req = CheckRequest(meta=meta, events=[e.to_dict() for e in events], cap=args.cap)
    if args.server:
        result = _post(args.server, "/check", req.model_dump())["result"]
    else:
        result = execute_check(req).result
    print(json.dumps(result, sort_keys=True, indent=2))
    if not result["ok"]:
        return EXIT_VIOLATION
    return EXIT_OK


def cmd_sweep(args):
    seeds = parse_seeds(args.seeds)
    req = SweepRequest(
        seeds=seeds,
        workload=_workload_params(args),
        cluster=_cluster_params(args),
        crashes=_crash_params(args),
    )
    if args.server:
        resp = _post(args.server, "/sweep", req.model_dump())
        all_ok, results = resp["all_ok"], resp["results"]
    elif args.jobs > 1:
        all_ok, results = _parallel_sweep(req, args.jobs)
    else:
        out = execute_sweep(req)
        all_ok, results = out.all_ok, out.results
    for r in results:
        print(f"seed {r['seed']}: {'ok' if r['ok'] else 'FAIL'}")
    print(f"sweep: {sum(1 for r in results if r['ok'])}/{len(results)} ok")
    return EXIT_OK if all_ok else EXIT_VIOLATION


def _parallel_sweep(req, jobs):
    from concurrent.futures import ProcessPoolExecutor

    payload = req.model_dump()
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        results = list(pool.map(_sweep_one, [(payload, s) for s in req.seeds]))
    return all(r["ok"] for r in results), results


def _sweep_one(arg):
    payload, seed = arg
    req = SweepRequest.model_validate(payload)
    req.seeds = [seed]
    return execute_sweep(req).results[0]


def cmd_serve(args):
    import uvicorn

    uvicorn.run("nicsim.service:app", host=args.host, port=args.port)
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="nicsim",
        description="Deterministic simulator for NIC-offloaded leaderless replication",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one experiment")
    _add_workload_flags(p_run)
    _add_cluster_flags(p_run)
    p_run.add_argument("--out", help="report file (stdout if omitted)")
    p_run.add_argument("--format", choices=["json", "csv"], default="json")
    p_run.add_argument("--history-out", help="write the client history as JSON lines")
    p_run.add_argument("--check", action="store_true",
                       help="run the consistency checker on the history")
    p_run.add_argument("--server", help="base URL of a nicsim service")
    p_run.set_defaults(func=cmd_run)

    p_check = sub.add_parser("check", help="check a history file")
    p_check.add_argument("history", help="JSON-lines history file")
    p_check.add_argument("--cap", type=int, default=DEFAULT_OP_CAP)
    p_check.add_argument("--server", help="base URL of a nicsim service")
    p_check.set_defaults(func=cmd_check)

    p_sweep = sub.add_parser("sweep", help="run many seeds and check each")
    p_sweep.add_argument("--seeds", required=True, help='e.g. "1..100" or "3,7,9"')
    _add_workload_flags(p_sweep)
    _add_cluster_flags(p_sweep)
    p_sweep.add_argument("--jobs", type=int, default=1)
    p_sweep.add_argument("--server", help="base URL of a nicsim service")
    p_sweep.set_defaults(func=cmd_sweep)

    p_serve = sub.add_parser("serve", help="start the HTTP service")
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--port", type=int, default=8000)
    p_serve.set_defaults(func=cmd_serve)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, SimError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
