"""Command-line entry points: `hla` (server side) and `agent` (device side).

Exit codes, one per error class:
  0 success        4 no trainable data     7 transport failure
  1 unexpected     5 insufficient data     8 bad config/scenario
  2 usage          6 parse/serialization   9 other domain error
  3 empty input
"""

from __future__ import annotations

import argparse
import sys
import time

import requests

from .broker import (
    DEFAULT_THETA,
    LogBuffer,
    ParamCache,
    TransferRequest,
    derive_key,
    detect_perf_drop,
    resolve_params,
    schedule_mixed,
)
from .config import load_scenario, parse_kv
from .corelog import DeviceInfo, ParamSetting, log_to_json
from .errors import (
    BlobParseError,
    ConfigError,
    DomainError,
    EmptyInputError,
    EmptyPlanError,
    FastHLAError,
    InsufficientDataError,
    LogParseError,
    NoTrainableDataError,
    ScenarioError,
    TransportError,
    UserLimitError,
)
from .learn import deserialize, serialize
from .netio import emit_log, execute
from .service import HlaServer, ServeConfig, run_pipeline
from .sim import CLASSES, full_lattice, simulate

_EXIT_BY_ERROR: list[tuple[type, int]] = [
    (EmptyInputError, 3),
    (NoTrainableDataError, 4),
    (InsufficientDataError, 5),
    (LogParseError, 6),
    (BlobParseError, 6),
    (TransportError, 7),
    (ConfigError, 8),
    (ScenarioError, 8),
    (EmptyPlanError, 9),
    (UserLimitError, 9),
    (DomainError, 9),
    (FastHLAError, 9),
]


def _exit_code(exc: Exception) -> int:
    for etype, code in _EXIT_BY_ERROR:
        if isinstance(exc, etype):
            return code
    return 1


def _run(fn) -> int:
    try:
        return fn()
    except Exception as exc:  # noqa: BLE001 - single CLI error funnel
        print(f"error: {exc}", file=sys.stderr)
        return _exit_code(exc)


# ---------------------------------------------------------------------------
# hla
# ---------------------------------------------------------------------------

def _cmd_serve(args) -> int:
    cfg = ServeConfig.from_kv(parse_kv(args.config)) if args.config else ServeConfig()
    prior = None
    if args.prior:
        with open(args.prior, "rb") as fh:
            prior = deserialize(fh.read())
    server = HlaServer(cfg, prior)
    print(f"serving on {server.url()} (state dir: {cfg.state_dir})")
    server.serve_forever()
    return 0


def _cmd_analyze(args) -> int:
    with open(args.logs, "r", encoding="utf-8") as fh:
        lines = fh.readlines()
    prior = None
    if args.prior:
        with open(args.prior, "rb") as fh:
            prior = deserialize(fh.read())
    result = run_pipeline(
        lines, prior, seed=args.seed, objective=args.objective,
        cluster_threshold=args.cluster_threshold, base_power=args.base_power,
    )
    with open(args.out, "wb") as fh:
        fh.write(serialize(result.model))
    print("key,cc,p,bs_kb,predicted_th_mbps,predicted_e_j_per_100mb,n_logs")
    for row in result.table:
        t = row.theta
        print(
            f"{row.key.canonical()},{t.cc},{t.p},{t.bs // 1024},"
            f"{row.predicted_th:.4f},{row.predicted_e:.4f},{row.n_logs}"
        )
    for warning in result.warnings:
        print(f"warning: {warning}", file=sys.stderr)
    print(
        f"model version {result.model.version} written to {args.out} "
        f"({result.wall_s:.2f}s)",
        file=sys.stderr,
    )
    return 0


def hla_main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="hla", description="historical-log analysis server")
    sub = parser.add_subparsers(dest="command", required=True)

    p_serve = sub.add_parser("serve", help="run the analysis service")
    p_serve.add_argument("--config", help="flat key-value config file")
    p_serve.add_argument("--prior", help="model blob to start from")
    p_serve.set_defaults(fn=_cmd_serve)

    p_an = sub.add_parser("analyze", help="one-shot analysis of a JSONL log file")
    p_an.add_argument("--logs", required=True)
    p_an.add_argument("--out", required=True, help="output model blob path")
    p_an.add_argument("--objective", default="efficiency",
                      choices=("efficiency", "min_energy", "max_throughput"))
    p_an.add_argument("--seed", type=int, default=0)
    p_an.add_argument("--prior", help="prior model blob (additive retraining)")
    p_an.add_argument("--cluster-threshold", type=float, default=1.0)
    p_an.add_argument("--base-power", type=float, default=2.0)
    p_an.set_defaults(fn=_cmd_analyze)

    args = parser.parse_args(argv)
    return _run(lambda: args.fn(args))


# ---------------------------------------------------------------------------
# agent
# ---------------------------------------------------------------------------

def _probe(urls: list[str], timeout: float) -> tuple[float, list[tuple[str, int]]]:
    """Measure RTT against the first URL and HEAD every file for its size."""
    session = requests.Session()
    dataset = []
    t0 = time.monotonic()
    try:
        first = session.head(urls[0], timeout=timeout)
        rtt_ms = (time.monotonic() - t0) * 1000.0
        first.raise_for_status()
    except requests.RequestException as exc:
        raise TransportError(f"cannot reach {urls[0]}: {exc}") from exc
    for url in urls:
        try:
            resp = session.head(url, timeout=timeout)
            resp.raise_for_status()
            size = int(resp.headers.get("Content-Length", 0))
        except requests.RequestException as exc:
            raise TransportError(f"HEAD {url} failed: {exc}") from exc
        dataset.append((url, size))
    return max(rtt_ms, 1e-3), dataset


def _fetch_model(server: str, timeout: float):
    try:
        resp = requests.get(f"{server}/v1/model", timeout=timeout)
    except requests.RequestException:
        return None
    if resp.status_code != 200:
        return None
    try:
        return deserialize(resp.content)
    except BlobParseError:
        return None


def _cmd_transfer(args) -> int:
    import os

    os.makedirs(args.state_dir, exist_ok=True)
    cache_path = os.path.join(args.state_dir, "cache.jsonl")
    buffer_path = os.path.join(args.state_dir, "pending_logs.jsonl")
    cache = ParamCache.load(cache_path)
    buffer = LogBuffer.load(buffer_path)

    rtt_ms, dataset = _probe(args.urls, args.timeout)
    req = TransferRequest.build(dataset, user_limit=args.limit)
    device = DeviceInfo(model=args.device_model, cpu_class=args.cpu_class)

    pending = buffer.pending()
    observed = [l.throughput for l in pending if l.status == "completed"]
    bw_est = sorted(observed)[len(observed) // 2] if observed else args.bw_estimate

    lm = _fetch_model(args.server, args.timeout) if args.server else None

    sources: list[str] = []

    def resolver(cluster) -> ParamSetting:
        theta, source = resolve_params(
            req, cache, lm,
            rtt_ms=rtt_ms, bw_mbps=bw_est, device=device, net_if=args.net_if,
            avg_file_size=cluster.mean_size,
        )
        sources.append(source)
        return theta

    plan = schedule_mixed(req, resolver)
    report = execute(plan, args.dest, timeout=args.timeout)

    log = emit_log(report, req, rtt_ms, bw_est, device, net_if=args.net_if)
    buffer.append(log)

    # cache write-back: only unscaled, completed transfers; ranked by
    # achieved throughput since the agent has no power meter
    if log.status == "completed":
        for entry in plan.entries:
            if not entry.scaled and entry.theta.is_lattice():
                key = derive_key(
                    entry.cluster.mean_size, rtt_ms, bw_est, device.model, args.net_if
                )
                cache.put(key, entry.theta, report.aggregate_throughput_mbps, time.time())

    if args.server:
        # drop detection against the server's predicted throughput, if any
        for entry in plan.entries:
            key = derive_key(
                entry.cluster.mean_size, rtt_ms, bw_est, device.model, args.net_if
            )
            try:
                resp = requests.get(
                    f"{args.server}/v1/params",
                    params={"key": key.canonical()},
                    timeout=args.timeout,
                )
            except requests.RequestException:
                break
            if resp.status_code != 200:
                continue
            predicted = float(resp.json()["predicted_th"])
            try:
                dropped = detect_perf_drop(predicted, report.samples)
            except FastHLAError:
                continue
            if dropped:
                try:
                    requests.post(f"{args.server}/v1/perf-drop", timeout=args.timeout)
                except requests.RequestException:
                    pass
                break

        def transport(batch) -> bool:
            body = "".join(log_to_json(l) + "\n" for l in batch)
            try:
                resp = requests.post(
                    f"{args.server}/v1/logs", data=body.encode(), timeout=args.timeout
                )
            except requests.RequestException:
                return False
            return resp.status_code == 200

        buffer.flush(transport)

    cache.save(cache_path)
    buffer.save(buffer_path)

    for f in report.files:
        state = f.error if f.error else f"sha256={f.checksum}"
        print(f"{f.url} -> {f.dest} [{f.size} bytes] {state}")
    print(
        f"{len(report.completed())}/{len(report.files)} files, "
        f"{report.aggregate_throughput_mbps:.2f} Mbps, wall {report.wall_s:.2f}s, "
        f"sources: {','.join(sources)}"
    )
    if report.errors:
        raise TransportError(f"{len(report.errors)} file(s) failed")
    return 0


def _cmd_bench(args) -> int:
    scn, pm = load_scenario(args.scenario)
    cls = CLASSES[args.dataset_class]
    if args.grid != "full":
        raise ConfigError(f"unknown grid {args.grid!r}")
    print("cc,p,bs_kb,throughput_mbps,energy_j_per_100mb,efficiency")
    for theta in full_lattice():
        th, _, e = simulate(scn, pm, theta, cls.sizes())
        print(
            f"{theta.cc},{theta.p},{theta.bs // 1024},"
            f"{th:.6f},{e:.6f},{th / e:.8f}"
        )
    return 0


def agent_main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="agent", description="device-side transfer agent")
    sub = parser.add_subparsers(dest="command", required=True)

    p_tr = sub.add_parser("transfer", help="download URLs with tuned parameters")
    p_tr.add_argument("--server", help="HLA server base URL (optional)")
    p_tr.add_argument("--dest", required=True, help="destination directory")
    p_tr.add_argument("--limit", type=int, default=32, help="max total concurrent files")
    p_tr.add_argument("--state-dir", default="agent-state")
    p_tr.add_argument("--device-model", default="agent-device")
    p_tr.add_argument("--cpu-class", type=int, default=2)
    p_tr.add_argument("--net-if", default="wifi", choices=("wifi", "cellular"))
    p_tr.add_argument("--bw-estimate", type=float, default=20.0,
                      help="fallback bandwidth estimate, Mbps")
    p_tr.add_argument("--timeout", type=float, default=30.0)
    p_tr.add_argument("urls", nargs="+")
    p_tr.set_defaults(fn=_cmd_transfer)

    p_bench = sub.add_parser("bench", help="simulator sweep over the parameter grid")
    p_bench.add_argument("--scenario", help="flat key-value scenario file")
    p_bench.add_argument("--grid", default="full")
    p_bench.add_argument("--dataset-class", default="html", choices=sorted(CLASSES))
    p_bench.set_defaults(fn=_cmd_bench)

    args = parser.parse_args(argv)
    return _run(lambda: args.fn(args))


if __name__ == "__main__":  # pragma: no cover
    sys.exit(hla_main())
