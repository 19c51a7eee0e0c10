"""HLA server: analysis pipeline, cost amortization, and wire protocol.

The pipeline takes raw JSONL logs through preprocessing, clustering,
per-cluster optimization, and additive model training, producing a new
fixed-size model blob plus a per-cluster parameter table.

The HTTP service keeps device traffic minimal: agents POST logsupstream in
batches, GET the 1412-byte model blob (conditional on its version ETag),
and POST a perf-drop notice to request an early pipeline run. Pipeline runs
are serialized and debounced; the published blob swaps atomically.
"""

from __future__ import annotations

import json
import os
import threading
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Iterable, Sequence
from urllib.parse import parse_qs, urlsplit

from .broker import NetConditionKey, derive_key
from .cluster import cluster_logs
from .corelog import ParamSetting, TransferLog, log_from_json, log_to_json, preprocess_logs
from .errors import (
    EmptyInputError,
    InsufficientDataError,
    LogParseError,
    NoTrainableDataError,
)
from .learn import FeatureVector, LearnedModel, serialize, train
from .optimize import optimal_params
from .sim import DatasetClass, NetScenario, PowerModel, simulate

MAX_BODY_BYTES = 10 * 1024 * 1024


# ---------------------------------------------------------------------------
# Pipeline
# ---------------------------------------------------------------------------

@dataclass
class ClusterReport:
    key: NetConditionKey
    theta: ParamSetting
    predicted_th: float
    predicted_e: float
    n_logs: int


@dataclass
class PipelineResult:
    model: LearnedModel
    table: list[ClusterReport]
    wall_s: float
    warnings: list[str] = field(default_factory=list)


def _as_logs(logs: Iterable[str] | Iterable[TransferLog]) -> list[TransferLog]:
    out: list[TransferLog] = []
    for item in logs:
        if isinstance(item, TransferLog):
            out.append(item)
        else:
            line = item.strip()
            if line:
                out.append(log_from_json(line))
    return out


def _cluster_key(members: Sequence[TransferLog]) -> NetConditionKey:
    mean_fs = sum(l.fs for l in members) / len(members)
    mean_rtt = sum(l.t_rtt for l in members) / len(members)
    mean_bw = sum(l.bw for l in members) / len(members)
    return derive_key(mean_fs, mean_rtt, mean_bw, members[0].device.model, members[0].net_if)


def run_pipeline(
    logs: Iterable[str] | Iterable[TransferLog],
    prior: LearnedModel | None = None,
    *,
    seed: int = 0,
    cluster_threshold: float = 1.0,
    objective: str = "efficiency",
    base_power: float = 2.0,
    epochs: int | None = None,
    lr: float | None = None,
) -> PipelineResult:
    """Preprocess, cluster, optimize per cluster, and (re)train the model.

    Clusters that cannot support optimization are skipped with a warning
    record. Deterministic for fixed (logs, prior, seed).
    """
    t0 = time.perf_counter()
    parsed = _as_logs(logs)
    clean = preprocess_logs(parsed)
    if not clean:
        raise EmptyInputError("empty-input: no usable logs after preprocessing")

    clusters = cluster_logs(clean, cluster_threshold)
    table: list[ClusterReport] = []
    warnings: list[str] = []
    rows: list[tuple[FeatureVector, ParamSetting]] = []
    for ci, cl in enumerate(clusters):
        members = [clean[i] for i in cl.members]
        try:
            res = optimal_params(members, objective=objective, base_power=base_power)
        except InsufficientDataError as exc:
            warnings.append(f"cluster {ci} skipped ({len(members)} logs): {exc}")
            continue
        table.append(
            ClusterReport(
                key=_cluster_key(members),
                theta=res.theta,
                predicted_th=res.th_at,
                predicted_e=res.e_at,
                n_logs=len(members),
            )
        )
        rows.extend((FeatureVector.from_log(l), res.theta) for l in members)
    if not table:
        raise NoTrainableDataError(
            "no-trainable-data: every cluster was skipped; " + "; ".join(warnings)
        )

    kwargs = {}
    if epochs is not None:
        kwargs["epochs"] = epochs
    if lr is not None:
        kwargs["lr"] = lr
    model = train(rows, seed=seed, prior=prior, **kwargs)
    return PipelineResult(
        model=model, table=table, wall_s=time.perf_counter() - t0, warnings=warnings
    )


# ---------------------------------------------------------------------------
# Amortization
# ---------------------------------------------------------------------------

@dataclass
class CostEstimate:
    """Costs in both wall seconds and joules: the analysis itself, one
    transfer at the optimized setting, one at the default setting, and the
    number of transfers sharing a single analysis run."""

    c_hla_s: float
    c_hla_j: float
    c_opt_s: float
    c_opt_j: float
    c_noopt_s: float
    c_noopt_j: float
    n_transfers: int

    def __post_init__(self):
        costs = (self.c_hla_s, self.c_hla_j, self.c_opt_s,
                 self.c_opt_j, self.c_noopt_s, self.c_noopt_j)
        if any(c < 0 for c in costs):
            raise ValueError("costs must be non-negative")
        if self.n_transfers < 1:
            raise ValueError("amortization count must be >= 1")


def amortization_check(est: CostEstimate) -> tuple[bool, float]:
    """Does amortized analysis plus an optimized transfer beat the
    unoptimized transfer? Both the energy and the wall-time inequality must
    hold; the returned margin is in energy terms."""
    n = est.n_transfers
    energy_ok = est.c_hla_j / n + est.c_opt_j < est.c_noopt_j
    time_ok = est.c_hla_s / n + est.c_opt_s < est.c_noopt_s
    margin = est.c_noopt_j - (est.c_hla_j / n + est.c_opt_j)
    return energy_ok and time_ok, margin


def transfer_cost(
    scn: NetScenario, pm: PowerModel, cls: DatasetClass, theta: ParamSetting
) -> tuple[float, float]:
    """(wall seconds, total joules) of one simulated transfer."""
    _, trace, _ = simulate(scn, pm, theta, cls.sizes())
    wall = trace.window[1]
    power = trace.samples[0][1]
    return wall, power * wall


def pipeline_energy(pm: PowerModel, wall_s: float) -> float:
    """Energy estimate for an analysis run: server held at full utilization
    for its duration."""
    return wall_s * (pm.p_base + pm.util)


def estimate_costs(
    scn: NetScenario,
    pm: PowerModel,
    cls: DatasetClass,
    theta_opt: ParamSetting,
    theta_default: ParamSetting,
    pipeline_wall_s: float,
    n_transfers: int,
) -> CostEstimate:
    opt_s, opt_j = transfer_cost(scn, pm, cls, theta_opt)
    no_s, no_j = transfer_cost(scn, pm, cls, theta_default)
    return CostEstimate(
        c_hla_s=pipeline_wall_s,
        c_hla_j=pipeline_energy(pm, pipeline_wall_s),
        c_opt_s=opt_s,
        c_opt_j=opt_j,
        c_noopt_s=no_s,
        c_noopt_j=no_j,
        n_transfers=n_transfers,
    )


# ---------------------------------------------------------------------------
# HTTP service
# ---------------------------------------------------------------------------

@dataclass
class ServeConfig:
    host: str = "127.0.0.1"
    port: int = 8080
    state_dir: str = "hla-state"
    interval_s: float = 3600.0
    debounce_s: float = 60.0
    seed: int = 0
    cluster_threshold: float = 1.0
    objective: str = "efficiency"
    base_power: float = 2.0

    @staticmethod
    def from_kv(cfg: dict[str, str]) -> "ServeConfig":
        base = ServeConfig()
        return ServeConfig(
            host=cfg.get("host", base.host),
            port=int(cfg.get("port", base.port)),
            state_dir=cfg.get("state_dir", base.state_dir),
            interval_s=float(cfg.get("interval_s", base.interval_s)),
            debounce_s=float(cfg.get("debounce_s", base.debounce_s)),
            seed=int(cfg.get("seed", base.seed)),
            cluster_threshold=float(cfg.get("cluster_threshold", base.cluster_threshold)),
            objective=cfg.get("objective", base.objective),
            base_power=float(cfg.get("base_power", base.base_power)),
        )


class HlaState:
    """Shared server state: ingested logs, the published model, the
    per-cluster parameter table, and pipeline bookkeeping."""

    def __init__(self, config: ServeConfig, prior: LearnedModel | None = None):
        self.config = config
        self.lock = threading.Lock()
        self.logs: list[TransferLog] = []
        self.model: LearnedModel | None = prior
        self.model_blob: bytes | None = serialize(prior) if prior else None
        self.table: dict[str, ClusterReport] = {}
        self.warnings: list[str] = []
        self.pipeline_runs = 0
        self.request_counts: dict[str, int] = {}
        self.last_trigger = -1e18
        self._pipeline_busy = threading.Lock()
        os.makedirs(os.path.join(config.state_dir, "logs"), exist_ok=True)

    def ingest(self, body: bytes) -> tuple[int, int]:
        accepted: list[TransferLog] = []
        rejected = 0
        for raw in body.decode("utf-8", errors="replace").splitlines():
            line = raw.strip()
            if not line:
                continue
            try:
                accepted.append(log_from_json(line))
            except LogParseError:
                rejected += 1
        if accepted:
            day = datetime.now(timezone.utc).strftime("%Y-%m-%d")
            path = os.path.join(self.config.state_dir, "logs", f"{day}.jsonl")
            with self.lock:
                self.logs.extend(accepted)
                with open(path, "a", encoding="utf-8") as fh:
                    for log in accepted:
                        fh.write(log_to_json(log) + "\n")
        return len(accepted), rejected

    def run_pipeline_once(self) -> bool:
        """Run one analysis pass if none is active. Returns whether it ran."""
        if not self._pipeline_busy.acquire(blocking=False):
            return False
        try:
            with self.lock:
                snapshot = list(self.logs)
                prior = self.model
            if not snapshot:
                return False
            try:
                result = run_pipeline(
                    snapshot,
                    prior,
                    seed=self.config.seed,
                    cluster_threshold=self.config.cluster_threshold,
                    objective=self.config.objective,
                    base_power=self.config.base_power,
                )
            except (EmptyInputError, NoTrainableDataError, InsufficientDataError) as exc:
                with self.lock:
                    self.warnings.append(str(exc))
                return False
            blob = serialize(result.model)
            with self.lock:
                self.model = result.model
                self.model_blob = blob
                self.table = {r.key.canonical(): r for r in result.table}
                self.warnings = list(result.warnings)
                self.pipeline_runs += 1
            return True
        finally:
            self._pipeline_busy.release()

    def trigger(self) -> bool:
        """Debounced asynchronous pipeline trigger (perf-drop path)."""
        now = time.monotonic()
        with self.lock:
            if now - self.last_trigger < self.config.debounce_s:
                return False
            self.last_trigger = now
        threading.Thread(target=self.run_pipeline_once, daemon=True).start()
        return True


class _Handler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    state: HlaState  # set on the subclass built per server

    def log_message(self, fmt, *args):  # noqa: D401 - silence default stderr chatter
        pass

    def _tally(self):
        path = urlsplit(self.path).path
        with self.state.lock:
            self.state.request_counts[path] = self.state.request_counts.get(path, 0) + 1

    def _reply(self, code: int, body: bytes = b"", content_type: str = "application/json",
               extra: dict[str, str] | None = None):
        self.send_response(code)
        self.send_header("Content-Type", content_type)
        self.send_header("Content-Length", str(len(body)))
        for k, v in (extra or {}).items():
            self.send_header(k, v)
        self.end_headers()
        if body:
            self.wfile.write(body)

    def _reply_json(self, code: int, obj) -> None:
        self._reply(code, json.dumps(obj).encode())

    def do_GET(self):  # noqa: N802 - http.server API
        self._tally()
        url = urlsplit(self.path)
        if url.path == "/v1/model":
            with self.state.lock:
                blob = self.state.model_blob
                version = self.state.model.version if self.state.model else None
            if blob is None:
                self._reply_json(404, {"error": "no model published yet"})
                return
            etag = f'"{version}"'
            if self.headers.get("If-None-Match") == etag:
                self._reply(304, b"", extra={"ETag": etag})
                return
            self._reply(200, blob, content_type="application/octet-stream",
                        extra={"ETag": etag})
        elif url.path == "/v1/params":
            keys = parse_qs(url.query).get("key", [])
            if not keys:
                self._reply_json(400, {"error": "missing key parameter"})
                return
            with self.state.lock:
                report = self.state.table.get(keys[0])
            if report is None:
                self._reply_json(404, {"error": "unknown key"})
                return
            theta = report.theta
            self._reply_json(200, {
                "key": report.key.canonical(),
                "theta": {"cc": theta.cc, "p": theta.p, "bs": theta.bs},
                "predicted_th": report.predicted_th,
                "predicted_e": report.predicted_e,
            })
        elif url.path == "/v1/status":
            with self.state.lock:
                self._reply_json(200, {
                    "logs": len(self.state.logs),
                    "pipeline_runs": self.state.pipeline_runs,
                    "model_version": self.state.model.version if self.state.model else None,
                    "warnings": self.state.warnings,
                })
        else:
            self._reply_json(404, {"error": "not found"})

    def do_POST(self):  # noqa: N802
        self._tally()
        url = urlsplit(self.path)
        length = int(self.headers.get("Content-Length", 0))
        if length > MAX_BODY_BYTES:
            self._reply_json(413, {"error": "body too large"})
            return
        body = self.rfile.read(length) if length else b""
        if url.path == "/v1/logs":
            accepted, rejected = self.state.ingest(body)
            self._reply_json(200, {"accepted": accepted, "rejected": rejected})
        elif url.path == "/v1/perf-drop":
            scheduled = self.state.trigger()
            self._reply_json(202, {"scheduled": scheduled})
        else:
            self._reply_json(404, {"error": "not found"})


class HlaServer:
    """Threaded HTTP server plus a periodic pipeline timer."""

    def __init__(self, config: ServeConfig, prior: LearnedModel | None = None):
        self.config = config
        self.state = HlaState(config, prior)
        handler = type("BoundHandler", (_Handler,), {"state": self.state})
        self.httpd = ThreadingHTTPServer((config.host, config.port), handler)
        self.httpd.daemon_threads = True
        self._stop = threading.Event()
        self._threads: list[threading.Thread] = []

    @property
    def address(self) -> tuple[str, int]:
        return self.httpd.server_address[:2]

    def url(self) -> str:
        host, port = self.address
        return f"http://{host}:{port}"

    def _periodic(self):
        while not self._stop.wait(self.config.interval_s):
            self.state.run_pipeline_once()

    def start(self):
        t = threading.Thread(target=self.httpd.serve_forever, daemon=True)
        t.start()
        p = threading.Thread(target=self._periodic, daemon=True)
        p.start()
        self._threads = [t, p]

    def stop(self):
        self._stop.set()
        self.httpd.shutdown()
        self.httpd.server_close()

    def serve_forever(self):
        self.start()
        try:
            while True:
                time.sleep(3600)
        except KeyboardInterrupt:
            self.stop()
