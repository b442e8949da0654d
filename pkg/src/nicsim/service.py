"""HTTP service exposing the simulator: run, check, and sweep.

The request/response models double as the CLI's local-mode interface,
so a thin client and the in-process path share one schema.
"""

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field

from . import __version__
from .checker import DEFAULT_OP_CAP, HistoryEvent, check_history
from .experiment import ClusterConfig, run_experiment
from .simnet import SimError
from .workload import ConfigError, WorkloadConfig, initial_fn


class WorkloadParams(BaseModel):
    replicas: int = 5
    key_count: int = 1_000_000
    key_size: int = 8
    value_size: int = 32
    write_ratio: float = 0.20
    distribution: str = "uniform"
    zipf_theta: float = 0.99
    op_count: int = 100_000
    sessions_per_replica: int = 2
    think_time_ns: int = 0
    seed: int = 1

    def to_config(self):
        return WorkloadConfig(**self.model_dump())


class ClusterParams(BaseModel):
    overlay: str = "mesh"
    backend: str = "memory"
    cache_capacity: int = 65536
    batch_size: int = 16
    flush_timer_ns: int = 2_000
    net_latency_ns: int = 2_000
    net_jitter_ns: int = 0
    pcie_rtt_ns: int = 500
    net_header_bytes: int = 0
    proc_delay_ns: int = 0
    replay_timeout_ns: int = 0
    preload_cache: bool = True

    def to_config(self):
        return ClusterConfig(**self.model_dump())


class CrashParam(BaseModel):
    replica: int
    at_ns: int


class RunRequest(BaseModel):
    workload: WorkloadParams = Field(default_factory=WorkloadParams)
    cluster: ClusterParams = Field(default_factory=ClusterParams)
    crashes: list[CrashParam] = Field(default_factory=list)
    check: bool = False
    check_cap: int = DEFAULT_OP_CAP
    include_history: bool = False


class RunResponse(BaseModel):
    report: dict
    check: dict | None = None
    history: list[dict] | None = None
    history_meta: dict | None = None


class CheckRequest(BaseModel):
    meta: dict = Field(default_factory=dict)
    events: list[dict]
    cap: int = DEFAULT_OP_CAP


class CheckResponse(BaseModel):
    result: dict


class SweepRequest(BaseModel):
    seeds: list[int]
    workload: WorkloadParams = Field(default_factory=WorkloadParams)
    cluster: ClusterParams = Field(default_factory=ClusterParams)
    crashes: list[CrashParam] = Field(default_factory=list)
    check_cap: int = DEFAULT_OP_CAP


class SweepResponse(BaseModel):
    all_ok: bool
    results: list[dict]


def execute_run(req: RunRequest) -> RunResponse:
    wcfg = req.workload.to_config()
    ccfg = req.cluster.to_config()
    crashes = [(c.replica, c.at_ns) for c in req.crashes]
    report, history, meta = run_experiment(wcfg, ccfg, crashes=crashes)
    check = None
    if req.check:
        result = check_history(
            history,
            initial_fn(wcfg.key_count, wcfg.key_size, wcfg.value_size, wcfg.seed),
            cap=req.check_cap,
        )
        check = result.summary()
    resp = RunResponse(report=report.to_dict(), check=check)
    if req.include_history:
        resp.history = [e.to_dict() for e in history]
        resp.history_meta = meta
    return resp


def execute_check(req: CheckRequest) -> CheckResponse:
    events = [HistoryEvent.from_dict(d) for d in req.events]
    init = None
    wl_meta = req.meta.get("workload") if req.meta else None
    if wl_meta:
        init = initial_fn(wl_meta["key_count"], wl_meta["key_size"],
                          wl_meta["value_size"], wl_meta["seed"])
    result = check_history(events, init, cap=req.cap)
    return CheckResponse(result=result.summary())


def execute_sweep(req: SweepRequest) -> SweepResponse:
    results = []
    all_ok = True
    for seed in req.seeds:
        run_req = RunRequest(
            workload=req.workload.model_copy(update={"seed": seed}),
            cluster=req.cluster,
            crashes=req.crashes,
            check=True,
            check_cap=req.check_cap,
        )
        resp = execute_run(run_req)
        ok = bool(resp.check and resp.check["ok"])
        all_ok = all_ok and ok
        results.append({"seed": seed, "ok": ok, "check": resp.check})
    return SweepResponse(all_ok=all_ok, results=results)


app = FastAPI(title="nicsim", version=__version__)


@app.get("/healthz")
def healthz():
    return {"status": "ok", "version": __version__}


@app.post("/run", response_model=RunResponse)
def run_endpoint(req: RunRequest):
    try:
        return execute_run(req)
    except (ConfigError, SimError) as e:
        raise HTTPException(status_code=422, detail=str(e))


@app.post("/check", response_model=CheckResponse)
def check_endpoint(req: CheckRequest):
    return execute_check(req)


@app.post("/sweep", response_model=SweepResponse)
def sweep_endpoint(req: SweepRequest):
    try:
        return execute_sweep(req)
    except (ConfigError, SimError) as e:
        raise HTTPException(status_code=422, detail=str(e))
