"""Transfer-log domain types, energy accounting, and log preprocessing.

A transfer's total energy splits into a base part (what the device draws
anyway) and a dynamic part (the integral of power above base over the
transfer window). Historical logs are JSONL records; preprocessing removes
failed transfers, physically impossible readings, and per-group statistical
outliers before any analysis runs.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict
from typing import Iterable, Iterator, Sequence

import numpy as np

from .errors import (
    DomainError,
    EmptyTraceError,
    LogParseError,
    MalformedTraceError,
)

# Feasible parameter levels: powers of two.
CC_LEVELS = (1, 2, 4, 8, 16, 32)
P_LEVELS = (1, 2, 4, 8, 16, 32)
BS_LEVELS = tuple(1024 * (2 ** k) for k in range(7))  # 1 KB .. 64 KB

NET_IFS = ("wifi", "cellular")
STATUSES = ("completed", "aborted", "failed")


@dataclass(frozen=True)
class ParamSetting:
    """Application-layer transfer tuning knobs.

    cc: simultaneous file transfers; p: byte-range streams per file;
    bs: I/O block size in bytes. The standard grid is powers of two
    (`is_lattice`), but scaled-down schedules may hold intermediate cc
    values, so construction itself does not reject them.
    """

    cc: int
    p: int
    bs: int

    def is_lattice(self) -> bool:
        return self.cc in CC_LEVELS and self.p in P_LEVELS and self.bs in BS_LEVELS

    def validate(self) -> "ParamSetting":
        if not self.is_lattice():
            raise DomainError(f"parameter setting outside feasible grid: {self}")
        return self

    def level_indices(self) -> tuple[int, int, int]:
        """(log2 cc, log2 p, log2 bs/1KB) for lattice settings."""
        self.validate()
        return (
            CC_LEVELS.index(self.cc),
            P_LEVELS.index(self.p),
            BS_LEVELS.index(self.bs),
        )

    @staticmethod
    def from_indices(ic: int, ip: int, ib: int) -> "ParamSetting":
        return ParamSetting(CC_LEVELS[ic], P_LEVELS[ip], BS_LEVELS[ib])


@dataclass(frozen=True)
class DeviceInfo:
    model: str
    os: str = ""
    cpu_class: int = 1
    mem_bytes: int = 0
    wifi_std: str = ""

    def __post_init__(self):
        if not self.model:
            raise DomainError("device model must be non-empty")


@dataclass(frozen=True)
class TransferLog:
    """One historical transfer record.

    pw is the mean dynamic power in watts; it is None when the transfer ran
    without any power measurement attached.
    """

    fs: float              # mean file size, bytes
    n_files: int
    t_rtt: float           # round-trip time, ms
    bs_tcp: int            # TCP buffer size, bytes
    bw: float              # link bandwidth, Mbps
    params: ParamSetting
    mu_cpu: float
    mu_mem: float
    mu_nic: float
    pw: float | None
    throughput: float      # Mbps
    duration: float        # seconds
    device: DeviceInfo
    net_if: str
    status: str
    timestamp: float       # epoch seconds, UTC


@dataclass(frozen=True)
class PowerTrace:
    """Sampled total power over a transfer window.

    samples: ordered (t seconds, watts); p_base: base power in watts;
    window: (t_start, t_end) covering all sample timestamps.
    """

    samples: tuple[tuple[float, float], ...]
    p_base: float
    window: tuple[float, float]

    def __post_init__(self):
        ts = [t for t, _ in self.samples]
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise MalformedTraceError("sample timestamps must be strictly increasing")
        if any(w < 0 for _, w in self.samples):
            raise DomainError("power samples must be non-negative")
        if self.p_base < 0:
            raise DomainError("base power must be non-negative")
        if ts and not (self.window[0] <= ts[0] and ts[-1] <= self.window[1]):
            raise DomainError("window must cover all samples")


@dataclass(frozen=True)
class EnergyBreakdown:
    e_total: float
    e_base: float
    e_dynamic: float

    def __post_init__(self):
        scale = max(abs(self.e_total), abs(self.e_base) + abs(self.e_dynamic), 1.0)
        if abs(self.e_total - (self.e_base + self.e_dynamic)) > 1e-9 * scale:
            raise DomainError("e_total must equal e_base + e_dynamic")
        if self.e_dynamic < 0 or self.e_base < 0:
            raise DomainError("energy components must be non-negative")


def dynamic_energy(trace: PowerTrace) -> float:
    """Trapezoidal integral of max(P(t) - p_base, 0) over the trace, joules.

    Power below base is clamped to zero first so measurement noise cannot
    produce negative energy.
    """
    if len(trace.samples) < 2:
        raise EmptyTraceError("dynamic energy needs at least two samples")
    ts = np.array([t for t, _ in trace.samples])
    ps = np.array([w for _, w in trace.samples])
    excess = np.maximum(ps - trace.p_base, 0.0)
    return float(np.sum((excess[1:] + excess[:-1]) * 0.5 * (ts[1:] - ts[:-1])))


def total_energy(e_base: float, e_dynamic: float) -> EnergyBreakdown:
    """Combine base and dynamic energy into a checked breakdown."""
    if e_base < 0 or e_dynamic < 0:
        raise DomainError("energy inputs must be non-negative")
    return EnergyBreakdown(e_total=e_base + e_dynamic, e_base=e_base, e_dynamic=e_dynamic)


def _finite(*values: float) -> bool:
    return all(math.isfinite(v) for v in values)


def _physically_sane(log: TransferLog) -> bool:
    required_positive = (log.fs, float(log.n_files), log.t_rtt, log.bw, log.duration)
    if not _finite(*required_positive, log.throughput, log.mu_cpu, log.mu_mem, log.mu_nic):
        return False
    if log.pw is not None and (not math.isfinite(log.pw) or log.pw < 0):
        return False
    if any(v <= 0 for v in required_positive):
        return False
    if log.throughput < 0:
        return False
    return True


def preprocess_logs(raw: Sequence[TransferLog]) -> list[TransferLog]:
    """Drop unusable logs; returns survivors in their original order.

    Removes non-completed transfers, throughput readings above the link
    bandwidth, non-finite or non-positive required fields, and per-group
    IQR outliers on throughput (k = 1.5, quartiles by linear interpolation
    between closest ranks). Groups share (device.model, net_if, params);
    groups with fewer than 5 logs skip the IQR step. The IQR step repeats
    until stable so the whole pass is idempotent.
    """
    kept: list[tuple[int, TransferLog]] = []
    for idx, log in enumerate(raw):
        if log.status != "completed":
            continue
        if not _physically_sane(log):
            continue
        if log.throughput > log.bw:
            continue
        kept.append((idx, log))

    groups: dict[tuple, list[int]] = {}
    for pos, (_, log) in enumerate(kept):
        key = (log.device.model, log.net_if, log.params)
        groups.setdefault(key, []).append(pos)

    alive = set(range(len(kept)))
    for positions in groups.values():
        live = list(positions)
        while len(live) >= 5:
            th = np.array([kept[p][1].throughput for p in live])
            q1, q3 = np.percentile(th, [25.0, 75.0])
            iqr = q3 - q1
            lo, hi = q1 - 1.5 * iqr, q3 + 1.5 * iqr
            survivors = [p for p, t in zip(live, th) if lo <= t <= hi]
            if len(survivors) == len(live):
                break
            for p in set(live) - set(survivors):
                alive.discard(p)
            live = survivors

    return [log for pos, (_, log) in enumerate(kept) if pos in alive]


# ---------------------------------------------------------------------------
# JSONL wire format
# ---------------------------------------------------------------------------

def log_to_dict(log: TransferLog) -> dict:
    d = asdict(log)
    return d


def log_to_json(log: TransferLog) -> str:
    return json.dumps(log_to_dict(log), separators=(",", ":"), sort_keys=True)


def log_from_dict(d: dict) -> TransferLog:
    try:
        params = d["params"]
        device = d["device"]
        pw = d.get("pw")
        return TransferLog(
            fs=float(d["fs"]),
            n_files=int(d["n_files"]),
            t_rtt=float(d["t_rtt"]),
            bs_tcp=int(d["bs_tcp"]),
            bw=float(d["bw"]),
            params=ParamSetting(cc=int(params["cc"]), p=int(params["p"]), bs=int(params["bs"])),
            mu_cpu=float(d["mu_cpu"]),
            mu_mem=float(d["mu_mem"]),
            mu_nic=float(d["mu_nic"]),
            pw=None if pw is None else float(pw),
            throughput=float(d["throughput"]),
            duration=float(d["duration"]),
            device=DeviceInfo(
                model=str(device["model"]),
                os=str(device.get("os", "")),
                cpu_class=int(device.get("cpu_class", 1)),
                mem_bytes=int(device.get("mem_bytes", 0)),
                wifi_std=str(device.get("wifi_std", "")),
            ),
            net_if=str(d["net_if"]),
            status=str(d["status"]),
            timestamp=float(d["timestamp"]),
        )
    except (KeyError, TypeError, ValueError, DomainError) as exc:
        raise LogParseError(f"bad transfer-log record: {exc}") from exc


def log_from_json(line: str) -> TransferLog:
    try:
        d = json.loads(line)
    except json.JSONDecodeError as exc:
        raise LogParseError(f"invalid JSON: {exc}") from exc
    if not isinstance(d, dict):
        raise LogParseError("log line must be a JSON object")
    return log_from_dict(d)


def read_jsonl(lines: Iterable[str]) -> Iterator[TransferLog]:
    """Parse JSONL lines, skipping blank lines; raises on malformed lines."""
    for line in lines:
        line = line.strip()
        if not line:
            continue
        yield log_from_json(line)


def write_jsonl(logs: Iterable[TransferLog]) -> str:
    return "".join(log_to_json(log) + "\n" for log in logs)
