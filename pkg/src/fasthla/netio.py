"""HTTP transfer engine: concurrent files, byte-range streams, sized I/O.

Executes a SchedulePlan: every cluster runs its files through a pool of
cc workers, and each file is fetched as p byte-range streams written into a
preallocated output file at their own offsets, so ranges may finish out of
order without buffering whole files in memory. Network reads and disk
writes both use the plan's block size.

Range support is discovered with a one-byte range probe: a 206 reply also
carries the total size (Content-Range), while a 200 reply means the server
ignored Range, in which case that very response is consumed as the
single-stream fallback for the file.
"""

from __future__ import annotations

import hashlib
import os
import re
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from urllib.parse import urlsplit

import requests

from .broker import SchedulePlan, TransferRequest
from .corelog import DeviceInfo, ParamSetting, PowerTrace, TransferLog, dynamic_energy


def split_ranges(size: int, p: int) -> list[tuple[int, int]]:
    """p contiguous (offset, length) ranges tiling [0, size).

    The first size % p ranges are one byte longer; when size < p the empty
    tail ranges are omitted.
    """
    if size <= 0:
        return []
    p = max(1, int(p))
    base, rem = divmod(size, p)
    out = []
    offset = 0
    for i in range(p):
        length = base + (1 if i < rem else 0)
        if length == 0:
            break
        out.append((offset, length))
        offset += length
    return out


@dataclass
class FileResult:
    url: str
    dest: str
    size: int
    duration: float
    checksum: str | None
    fallback: bool = False
    error: str | None = None


@dataclass
class TransferReport:
    files: list[FileResult]
    cluster_thetas: list[ParamSetting]
    cluster_bytes: list[int]
    aggregate_throughput_mbps: float
    wall_s: float
    samples: list[tuple[float, float]]      # (second, Mbps)
    errors: list[str]
    peak_connections: int

    def completed(self) -> list[FileResult]:
        return [f for f in self.files if f.error is None]


class _Tracker:
    def __init__(self):
        self.lock = threading.Lock()
        self.active = 0
        self.peak = 0
        self.buckets: dict[int, int] = {}
        self.t0 = time.monotonic()

    def conn_opened(self):
        with self.lock:
            self.active += 1
            self.peak = max(self.peak, self.active)

    def conn_closed(self):
        with self.lock:
            self.active -= 1

    def add_bytes(self, n: int):
        sec = int(time.monotonic() - self.t0)
        with self.lock:
            self.buckets[sec] = self.buckets.get(sec, 0) + n


_tls = threading.local()


def _session() -> requests.Session:
    s = getattr(_tls, "session", None)
    if s is None:
        s = requests.Session()
        _tls.session = s
    return s


_CONTENT_RANGE = re.compile(r"bytes\s+\d+-\d+/(\d+)")


def _stream_to(fh, resp, offset: int, bs: int, tracker: _Tracker) -> int:
    fh.seek(offset)
    written = 0
    for chunk in resp.iter_content(chunk_size=bs):
        if not chunk:
            continue
        fh.write(chunk)
        written += len(chunk)
        tracker.add_bytes(len(chunk))
    return written


def _fetch_single(url: str, dest: str, bs: int, tracker: _Tracker, timeout: float) -> int:
    tracker.conn_opened()
    try:
        with _session().get(url, stream=True, timeout=timeout) as resp:
            resp.raise_for_status()
            with open(dest, "r+b") as fh:
                return _stream_to(fh, resp, 0, bs, tracker)
    finally:
        tracker.conn_closed()


def _fetch_range(
    url: str, dest: str, offset: int, length: int, bs: int,
    tracker: _Tracker, timeout: float, retries: int,
) -> None:
    headers = {"Range": f"bytes={offset}-{offset + length - 1}"}
    last_exc: Exception | None = None
    for _ in range(retries + 1):
        tracker.conn_opened()
        try:
            with _session().get(url, headers=headers, stream=True, timeout=timeout) as resp:
                if resp.status_code != 206:
                    raise IOError(f"expected 206 for range request, got {resp.status_code}")
                with open(dest, "r+b") as fh:
                    got = _stream_to(fh, resp, offset, bs, tracker)
                if got != length:
                    raise IOError(f"range returned {got} bytes, expected {length}")
            return
        except Exception as exc:  # noqa: BLE001 - every failure is retryable here
            last_exc = exc
        finally:
            tracker.conn_closed()
    raise IOError(f"range {offset}+{length} failed after {retries + 1} attempts: {last_exc}")


def _checksum(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


def _fetch_file(
    url: str, dest: str, theta: ParamSetting, tracker: _Tracker,
    timeout: float, retries: int,
) -> FileResult:
    start = time.monotonic()
    try:
        fallback = False
        if theta.p <= 1:
            with open(dest, "wb"):
                pass
            size = _fetch_single(url, dest, theta.bs, tracker, timeout)
        else:
            tracker.conn_opened()
            try:
                probe = _session().get(
                    url, headers={"Range": "bytes=0-0"}, stream=True, timeout=timeout
                )
                with probe:
                    if probe.status_code == 416:
                        # unsatisfiable range: the file is empty
                        with open(dest, "wb"):
                            pass
                        size = 0
                        return FileResult(
                            url=url, dest=dest, size=0,
                            duration=time.monotonic() - start,
                            checksum=_checksum(dest), fallback=False,
                        )
                    probe.raise_for_status()
                    if probe.status_code == 206:
                        m = _CONTENT_RANGE.match(probe.headers.get("Content-Range", ""))
                        if not m:
                            raise IOError("206 without a parsable Content-Range")
                        size = int(m.group(1))
                        for _ in probe.iter_content(chunk_size=theta.bs):
                            pass
                    else:
                        # server ignored Range: this response is the whole file
                        fallback = True
                        with open(dest, "wb") as fh:
                            fh.truncate(0)
                        with open(dest, "r+b") as fh:
                            size = _stream_to(fh, probe, 0, theta.bs, tracker)
            finally:
                tracker.conn_closed()
            if not fallback:
                with open(dest, "wb") as fh:
                    fh.truncate(size)
                ranges = split_ranges(size, theta.p)
                if len(ranges) > 1:
                    with ThreadPoolExecutor(max_workers=len(ranges)) as pool:
                        futs = [
                            pool.submit(
                                _fetch_range, url, dest, off, ln, theta.bs,
                                tracker, timeout, retries,
                            )
                            for off, ln in ranges
                        ]
                        for f in futs:
                            f.result()
                elif ranges:
                    off, ln = ranges[0]
                    _fetch_range(url, dest, off, ln, theta.bs, tracker, timeout, retries)
        return FileResult(
            url=url, dest=dest, size=size, duration=time.monotonic() - start,
            checksum=_checksum(dest), fallback=fallback,
        )
    except Exception as exc:  # noqa: BLE001 - reported per file, siblings continue
        return FileResult(
            url=url, dest=dest, size=0, duration=time.monotonic() - start,
            checksum=None, fallback=False, error=str(exc),
        )


def _dest_name(index: int, url: str) -> str:
    base = os.path.basename(urlsplit(url).path) or "file"
    return f"{index:05d}_{base}"


def execute(
    plan: SchedulePlan, dest_dir: str, timeout: float = 30.0, retries: int = 2
) -> TransferReport:
    """Run the plan; returns a report with per-file outcomes, per-second
    throughput samples, and the peak concurrent connection count."""
    os.makedirs(dest_dir, exist_ok=True)
    tracker = _Tracker()
    entries = plan.entries
    cluster_results: list[list[FileResult]] = [[] for _ in entries]

    index = 0
    jobs: list[tuple[int, str, str]] = []     # (cluster idx, url, dest)
    for ci, entry in enumerate(entries):
        for url, _size in entry.cluster.files:
            jobs.append((ci, url, os.path.join(dest_dir, _dest_name(index, url))))
            index += 1

    def run_cluster(ci: int) -> None:
        theta = entries[ci].theta
        my_jobs = [(u, d) for c, u, d in jobs if c == ci]
        if not my_jobs:
            return
        with ThreadPoolExecutor(max_workers=max(1, theta.cc)) as pool:
            futs = [
                pool.submit(_fetch_file, url, dest, theta, tracker, timeout, retries)
                for url, dest in my_jobs
            ]
            cluster_results[ci] = [f.result() for f in futs]

    threads = [
        threading.Thread(target=run_cluster, args=(ci,), name=f"cluster-{ci}")
        for ci in range(len(entries))
    ]
    for t in threads:
        t.start()
    for t in threads:
        t.join()

    wall = max(time.monotonic() - tracker.t0, 1e-9)
    files = [r for group in cluster_results for r in group]
    total = sum(f.size for f in files if f.error is None)
    samples = [
        (float(sec), cnt * 8.0 / 1e6) for sec, cnt in sorted(tracker.buckets.items())
    ]
    return TransferReport(
        files=files,
        cluster_thetas=[e.theta for e in entries],
        cluster_bytes=[
            sum(r.size for r in group if r.error is None) for group in cluster_results
        ],
        aggregate_throughput_mbps=(8.0 * total / wall / 1e6) if files else 0.0,
        wall_s=wall,
        samples=samples,
        errors=[f"{f.url}: {f.error}" for f in files if f.error],
        peak_connections=tracker.peak,
    )


def emit_log(
    report: TransferReport,
    req: TransferRequest,
    rtt_ms: float,
    bw_mbps: float,
    device: DeviceInfo,
    net_if: str = "wifi",
    power: PowerTrace | None = None,
    bs_tcp: int = 65536,
    timestamp: float | None = None,
) -> TransferLog:
    """Turn a transfer report into a historical log record.

    The power fields are only populated when a trace (simulated or replayed)
    is supplied. For plans with several clusters the logged parameters are
    those of the cluster that moved the most bytes. Utilization fields are
    coarse proxies derived from link usage.
    """
    done = report.completed()
    status = "completed" if done and not report.errors else "failed"
    if report.cluster_thetas:
        dominant = max(
            range(len(report.cluster_thetas)), key=lambda i: report.cluster_bytes[i]
        )
        theta = report.cluster_thetas[dominant]
    else:
        theta = ParamSetting(1, 1, 8192)
    mean_size = (
        sum(f.size for f in done) / len(done) if done else max(req.avg_file_size, 1.0)
    )
    pw = None
    if power is not None:
        span = power.window[1] - power.window[0]
        pw = dynamic_energy(power) / max(span, 1e-9)
    mu_nic = min(1.0, report.aggregate_throughput_mbps / bw_mbps) if bw_mbps > 0 else 0.0
    return TransferLog(
        fs=max(mean_size, 1.0),
        n_files=max(len(report.files), 1),
        t_rtt=max(rtt_ms, 1e-3),
        bs_tcp=bs_tcp,
        bw=max(bw_mbps, 1e-3),
        params=theta,
        mu_cpu=min(1.0, 0.05 + 0.3 * mu_nic),
        mu_mem=0.2,
        mu_nic=mu_nic,
        pw=pw,
        throughput=report.aggregate_throughput_mbps,
        duration=report.wall_s,
        device=device,
        net_if=net_if,
        status=status,
        timestamp=time.time() if timestamp is None else timestamp,
    )
