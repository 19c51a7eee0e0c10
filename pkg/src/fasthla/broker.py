"""Device-side transfer broker: parameter cache, resolution, scheduling.

Parameter resolution walks cache -> learned model -> built-in default. Cache
entries are keyed by a bucketed network-condition key and only ever improve:
a write-back is accepted when its recorded efficiency is at least the stored
one. Mixed-size datasets are split into file clusters, each cluster gets its
own parameters, and concurrency is scaled down proportionally when the total
would exceed the user's connection limit.
"""

from __future__ import annotations

import json
import math
import os
from collections import OrderedDict, deque
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

from .cluster import FileCluster, cluster_files
from .corelog import DeviceInfo, ParamSetting, TransferLog, log_from_dict, log_to_dict
from .errors import (
    DomainError,
    EmptyPlanError,
    InsufficientWindowError,
    UserLimitError,
)
from .learn import FeatureVector, LearnedModel, predict

DEFAULT_THETA = ParamSetting(cc=2, p=1, bs=8192)
CACHE_CAPACITY = 256
LOG_BUFFER_CAPACITY = 10_000
FLUSH_BATCH = 500

_RTT_EDGES = (50.0, 150.0, 400.0)
_RTT_NAMES = ("lt50", "50_150", "150_400", "gt400")


def rtt_bucket(rtt_ms: float) -> str:
    for edge, name in zip(_RTT_EDGES, _RTT_NAMES):
        if rtt_ms < edge:
            return name
    return _RTT_NAMES[-1]


def bw_bucket(bw_mbps: float) -> int:
    if bw_mbps <= 0:
        return 1
    return int(2 ** round(math.log2(bw_mbps)))


@dataclass(frozen=True)
class NetConditionKey:
    net_if: str
    bw_bucket: int
    rtt_bucket: str
    model: str
    size_class: int        # decade of the mean file size

    def canonical(self) -> str:
        return f"{self.net_if}|{self.bw_bucket}|{self.rtt_bucket}|{self.model}|{self.size_class}"

    @staticmethod
    def from_canonical(s: str) -> "NetConditionKey":
        net_if, bw, rtt, model, size_class = s.split("|")
        return NetConditionKey(net_if, int(bw), rtt, model, int(size_class))


@dataclass
class TransferRequest:
    dataset: list[tuple[str, int]]
    avg_file_size: float
    num_files: int
    user_limit: int = 32

    def __post_init__(self):
        if self.num_files != len(self.dataset):
            raise DomainError("num_files must equal the dataset length")
        if self.dataset:
            actual = sum(s for _, s in self.dataset) / len(self.dataset)
            if abs(actual - self.avg_file_size) > 0.01 * max(actual, 1.0):
                raise DomainError("avg_file_size inconsistent with dataset")
        if self.user_limit < 1:
            raise DomainError("user_limit must be at least 1")

    @staticmethod
    def build(dataset: Sequence[tuple[str, int]], user_limit: int = 32) -> "TransferRequest":
        dataset = list(dataset)
        avg = sum(s for _, s in dataset) / len(dataset) if dataset else 0.0
        return TransferRequest(
            dataset=dataset, avg_file_size=avg, num_files=len(dataset), user_limit=user_limit
        )


def derive_key(
    avg_file_size: float,
    rtt_ms: float,
    bw_mbps: float,
    device_model: str,
    net_if: str,
) -> NetConditionKey:
    return NetConditionKey(
        net_if=net_if,
        bw_bucket=bw_bucket(bw_mbps),
        rtt_bucket=rtt_bucket(rtt_ms),
        model=device_model,
        size_class=int(math.floor(math.log10(max(avg_file_size, 1.0)))),
    )


class ParamCache:
    """LRU parameter cache with monotone write-back, persisted as JSONL."""

    def __init__(self, capacity: int = CACHE_CAPACITY):
        self.capacity = capacity
        self._entries: OrderedDict[NetConditionKey, dict] = OrderedDict()

    def __len__(self) -> int:
        return len(self._entries)

    def get(self, key: NetConditionKey) -> ParamSetting | None:
        entry = self._entries.get(key)
        if entry is None:
            return None
        self._entries.move_to_end(key)
        return entry["theta"]

    def efficiency(self, key: NetConditionKey) -> float | None:
        entry = self._entries.get(key)
        return None if entry is None else entry["efficiency"]

    def put(self, key: NetConditionKey, theta: ParamSetting, efficiency: float, ts: float) -> bool:
        """Accept the entry only if it does not regress the stored
        efficiency; returns whether it was stored."""
        theta.validate()
        existing = self._entries.get(key)
        if existing is not None and efficiency < existing["efficiency"]:
            return False
        self._entries[key] = {"theta": theta, "efficiency": float(efficiency), "ts": float(ts)}
        self._entries.move_to_end(key)
        while len(self._entries) > self.capacity:
            self._entries.popitem(last=False)
        return True

    def save(self, path: str) -> None:
        tmp = path + ".tmp"
        with open(tmp, "w", encoding="utf-8") as fh:
            for key, entry in self._entries.items():
                theta = entry["theta"]
                fh.write(json.dumps({
                    "net_if": key.net_if,
                    "bw_bucket": key.bw_bucket,
                    "rtt_bucket": key.rtt_bucket,
                    "model": key.model,
                    "size_class": key.size_class,
                    "theta": {"cc": theta.cc, "p": theta.p, "bs": theta.bs},
                    "efficiency": entry["efficiency"],
                    "ts": entry["ts"],
                }) + "\n")
        os.replace(tmp, path)

    @staticmethod
    def load(path: str, capacity: int = CACHE_CAPACITY) -> "ParamCache":
        cache = ParamCache(capacity)
        if not os.path.exists(path):
            return cache
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                d = json.loads(line)
                key = NetConditionKey(
                    net_if=d["net_if"], bw_bucket=int(d["bw_bucket"]),
                    rtt_bucket=d["rtt_bucket"], model=d["model"],
                    size_class=int(d["size_class"]),
                )
                theta = ParamSetting(**{k: int(v) for k, v in d["theta"].items()})
                cache.put(key, theta, float(d["efficiency"]), float(d["ts"]))
        return cache


def resolve_params(
    req: TransferRequest,
    cache: ParamCache,
    lm: LearnedModel | None,
    *,
    rtt_ms: float,
    bw_mbps: float,
    device: DeviceInfo,
    net_if: str,
    avg_file_size: float | None = None,
) -> tuple[ParamSetting, str]:
    """Resolve parameters for a request: cache hit, else model prediction,
    else the conservative default. Returns (theta, source)."""
    avg = req.avg_file_size if avg_file_size is None else avg_file_size
    key = derive_key(avg, rtt_ms, bw_mbps, device.model, net_if)
    hit = cache.get(key)
    if hit is not None:
        return hit, "cache"
    if lm is not None:
        fv = FeatureVector.from_request(
            avg, req.num_files, rtt_ms, bw_mbps, net_if, device.cpu_class
        )
        return predict(lm, fv), "lm"
    return DEFAULT_THETA, "default"


def detect_perf_drop(
    predicted_th: float, observed: Sequence[tuple[float, float]]
) -> bool:
    """True when observed throughput stays under half the prediction for at
    least five consecutive seconds. Samples are (t seconds, Mbps) at a
    roughly uniform cadence."""
    if len(observed) < 2:
        raise InsufficientWindowError("need at least two throughput samples")
    pts = sorted(observed)
    ts = [t for t, _ in pts]
    gaps = sorted(b - a for a, b in zip(ts, ts[1:]))
    period = gaps[len(gaps) // 2]
    if period <= 0:
        raise InsufficientWindowError("non-increasing sample timestamps")
    span = ts[-1] - ts[0] + period
    if span < 5.0 - 1e-9:
        raise InsufficientWindowError(f"window of {span:.1f}s is shorter than 5s")
    threshold = 0.5 * predicted_th
    run = best = 0
    for _, v in pts:
        run = run + 1 if v < threshold else 0
        best = max(best, run)
    return best * period >= 5.0 - 1e-9


@dataclass
class PlanEntry:
    cluster: FileCluster
    theta: ParamSetting
    scaled: bool


@dataclass
class SchedulePlan:
    entries: list[PlanEntry]

    def total_cc(self) -> int:
        return sum(e.theta.cc for e in self.entries)


def scale_concurrency(ccs: Sequence[int], user_limit: int) -> tuple[list[int], bool]:
    """Proportionally scale per-cluster concurrency into the user limit.

    floor(cc * limit / total) with a floor of 1, then trim the largest
    entries (all ties together, preserving relative order) while the sum
    still overshoots.
    """
    total = sum(ccs)
    if total <= user_limit:
        return list(ccs), False
    if user_limit < len(ccs):
        raise UserLimitError(
            f"user_limit {user_limit} cannot host {len(ccs)} clusters"
        )
    scaled = [max(1, (cc * user_limit) // total) for cc in ccs]
    while sum(scaled) > user_limit:
        top = max(scaled)
        if top <= 1:
            break
        for i, v in enumerate(scaled):
            if v == top:
                scaled[i] = v - 1
    return scaled, True


def schedule_mixed(
    req: TransferRequest,
    resolver: Callable[[FileCluster], ParamSetting],
    threshold_decades: float = 1.0,
) -> SchedulePlan:
    """Cluster the dataset by file size, resolve parameters per cluster, and
    scale concurrency down into req.user_limit if necessary."""
    if not req.dataset:
        raise EmptyPlanError("cannot schedule an empty dataset")
    clusters = cluster_files(req.dataset, threshold_decades)
    thetas = [resolver(c) for c in clusters]
    ccs, was_scaled = scale_concurrency([t.cc for t in thetas], req.user_limit)
    entries = []
    for cluster, theta, cc in zip(clusters, thetas, ccs):
        if was_scaled:
            theta = ParamSetting(cc=cc, p=theta.p, bs=theta.bs)
        entries.append(PlanEntry(cluster=cluster, theta=theta, scaled=was_scaled))
    return SchedulePlan(entries=entries)


class LogBuffer:
    """Fixed-capacity ring of pending transfer logs; oldest-first flushing."""

    def __init__(self, capacity: int = LOG_BUFFER_CAPACITY):
        self.capacity = capacity
        self._buf: deque[TransferLog] = deque(maxlen=capacity)

    def __len__(self) -> int:
        return len(self._buf)

    def append(self, log: TransferLog) -> None:
        self._buf.append(log)

    def extend(self, logs: Iterable[TransferLog]) -> None:
        for log in logs:
            self._buf.append(log)

    def pending(self) -> list[TransferLog]:
        return list(self._buf)

    def flush(self, transport: Callable[[list[TransferLog]], bool]) -> int:
        """Send oldest-first in batches of at most FLUSH_BATCH. A failing
        transport stops the flush; unsent logs stay buffered."""
        sent = 0
        while self._buf:
            batch = list(self._buf)[:FLUSH_BATCH]
            try:
                ok = transport(batch)
            except Exception:
                ok = False
            if not ok:
                break
            for _ in batch:
                self._buf.popleft()
            sent += len(batch)
        return sent

    def save(self, path: str) -> None:
        tmp = path + ".tmp"
        with open(tmp, "w", encoding="utf-8") as fh:
            for log in self._buf:
                fh.write(json.dumps(log_to_dict(log), sort_keys=True) + "\n")
        os.replace(tmp, path)

    @staticmethod
    def load(path: str, capacity: int = LOG_BUFFER_CAPACITY) -> "LogBuffer":
        buf = LogBuffer(capacity)
        if not os.path.exists(path):
            return buf
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if line:
                    buf.append(log_from_dict(json.loads(line)))
        return buf
