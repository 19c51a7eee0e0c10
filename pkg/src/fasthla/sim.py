"""Deterministic network/power simulator and synthetic log generator.

Stands in for a WAN testbed plus power meter. The network model is a closed
form chosen for exact oracles rather than packet-level fidelity:

    s   = cc * p                          (total streams)
    u   = min(1, 8*window*1e-6 / (bw_cap * rtt*1e-3))   per-stream share
    raw = bw_cap * (1 - (1 - u)^s)
    g   = bs / (bs + 1024)                (block-size factor)
    c   = 1 if s <= knee else max(0.5, 1 - slope*(s - knee))
    th  = raw * g * c                     (steady throughput, Mbps)

Wall time adds a per-file setup round of rtt per concurrency batch:
ceil(n_files / cc) * rtt. Total power is constant at
p_base + a*min(s, 2*knee) + b*(th / bw_cap) and is emitted at 1 Hz.
Energy is reported as total joules normalized per 100 MB transferred.

Noise exists only in generate_logs (multiplicative, seeded); simulate itself
is bit-reproducible, which keeps it usable as a ground-truth oracle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .corelog import (
    BS_LEVELS,
    CC_LEVELS,
    P_LEVELS,
    DeviceInfo,
    ParamSetting,
    PowerTrace,
    TransferLog,
)
from .errors import ScenarioError


@dataclass(frozen=True)
class NetScenario:
    bw_cap: float = 100.0        # Mbps
    rtt_ms: float = 100.0
    window_bytes: int = 64_000
    knee: float = 16.0           # stream count where congestion begins
    slope: float = 0.02          # per-stream congestion penalty
    seed: int = 0


@dataclass(frozen=True)
class PowerModel:
    p_base: float = 2.0          # W
    per_stream: float = 0.05     # W per active stream (capped at 2*knee)
    util: float = 1.5            # W at full link utilization


@dataclass(frozen=True)
class DatasetClass:
    name: str
    mean_size: int               # bytes
    n_files: int

    def sizes(self) -> list[int]:
        return [self.mean_size] * self.n_files


HTML = DatasetClass("html", 112_000, 50)
IMAGE = DatasetClass("image", 2_700_000, 20)
VIDEO_SMALL = DatasetClass("video_small", 152_000_000, 3)
CLASSES: dict[str, DatasetClass] = {c.name: c for c in (HTML, IMAGE, VIDEO_SMALL)}

SIM_DEVICE = DeviceInfo(
    model="sim-device", os="simos", cpu_class=2, mem_bytes=2 << 30, wifi_std="802.11n"
)


def steady_throughput(scn: NetScenario, theta: ParamSetting) -> float:
    if scn.bw_cap <= 0:
        raise ScenarioError("bw_cap must be positive")
    if scn.rtt_ms <= 0 or scn.knee < 1:
        raise ScenarioError("rtt must be positive and knee >= 1")
    s = theta.cc * theta.p
    u = min(1.0, 8.0 * scn.window_bytes * 1e-6 / (scn.bw_cap * scn.rtt_ms * 1e-3))
    raw = scn.bw_cap * (1.0 - (1.0 - u) ** s)
    g = theta.bs / (theta.bs + 1024.0)
    c = 1.0 if s <= scn.knee else max(0.5, 1.0 - scn.slope * (s - scn.knee))
    return raw * g * c


def total_power(scn: NetScenario, pm: PowerModel, theta: ParamSetting, th: float) -> float:
    s = theta.cc * theta.p
    return pm.p_base + pm.per_stream * min(s, 2.0 * scn.knee) + pm.util * (th / scn.bw_cap)


def simulate(
    scn: NetScenario,
    pm: PowerModel,
    theta: ParamSetting,
    dataset: Sequence[int],
) -> tuple[float, PowerTrace, float]:
    """(throughput Mbps, 1 Hz power trace, total J per 100 MB) for one
    transfer of `dataset` (file sizes in bytes) with parameters theta."""
    if not dataset:
        raise ScenarioError("dataset must be non-empty")
    th = steady_throughput(scn, theta)
    total_bytes = float(sum(dataset))
    n_files = len(dataset)
    wall = total_bytes * 8e-6 / th + math.ceil(n_files / theta.cc) * scn.rtt_ms * 1e-3
    power = total_power(scn, pm, theta, th)

    ts = [float(t) for t in range(int(math.floor(wall)) + 1)]
    if ts[-1] < wall:
        ts.append(wall)
    if len(ts) < 2:
        ts = [0.0, wall]
    trace = PowerTrace(
        samples=tuple((t, power) for t in ts), p_base=pm.p_base, window=(0.0, wall)
    )
    e_per_100mb = power * wall * 1e8 / total_bytes
    return th, trace, e_per_100mb


def full_lattice() -> list[ParamSetting]:
    """All 252 feasible grid nodes, ascending by (cc, p, bs)."""
    return [
        ParamSetting(cc, p, bs)
        for cc in CC_LEVELS
        for p in P_LEVELS
        for bs in BS_LEVELS
    ]


def generate_logs(
    scn: NetScenario,
    pm: PowerModel,
    coverage: Iterable[ParamSetting],
    repeats: int = 3,
    seed: int = 0,
    classes: Sequence[DatasetClass] = (HTML, IMAGE, VIDEO_SMALL),
    device: DeviceInfo = SIM_DEVICE,
    net_if: str = "wifi",
) -> list[TransferLog]:
    """Synthetic transfer logs over coverage x dataset classes x repeats.

    Throughput and mean dynamic power carry independent seeded +/-5%
    multiplicative noise; everything else is the deterministic closed form.
    """
    coverage = list(coverage)
    if not coverage:
        raise ScenarioError("coverage must be non-empty")
    rng = np.random.default_rng(seed)
    logs: list[TransferLog] = []
    stamp = 1_700_000_000.0
    for cls in classes:
        for theta in coverage:
            for _ in range(repeats):
                th, trace, _ = simulate(scn, pm, theta, cls.sizes())
                wall = trace.window[1]
                power = trace.samples[0][1]
                th_noisy = th * (1.0 + rng.uniform(-0.05, 0.05))
                pw_noisy = (power - pm.p_base) * (1.0 + rng.uniform(-0.05, 0.05))
                stamp += 1.0
                logs.append(
                    TransferLog(
                        fs=float(cls.mean_size),
                        n_files=cls.n_files,
                        t_rtt=scn.rtt_ms,
                        bs_tcp=scn.window_bytes,
                        bw=scn.bw_cap,
                        params=theta,
                        mu_cpu=min(1.0, 0.1 + 0.5 * th / scn.bw_cap),
                        mu_mem=0.3,
                        mu_nic=min(1.0, th / scn.bw_cap),
                        pw=pw_noisy,
                        throughput=th_noisy,
                        duration=wall,
                        device=device,
                        net_if=net_if,
                        status="completed",
                        timestamp=stamp,
                    )
                )
    return logs


def ground_truth_argmax(
    scn: NetScenario,
    pm: PowerModel,
    dataset_class: DatasetClass,
    objective: str = "efficiency",
) -> ParamSetting:
    """Exhaustive noiseless argmax over the full grid, with the optimizer's
    tie-break (smaller cc, then p, then bs)."""
    best = None
    sizes = dataset_class.sizes()
    for theta in full_lattice():
        th, _, e = simulate(scn, pm, theta, sizes)
        if objective == "efficiency":
            score = th / e
        elif objective == "min_energy":
            score = -e
        elif objective == "max_throughput":
            score = th
        else:
            raise ValueError(f"unknown objective {objective!r}")
        if best is None or score > best[0]:
            best = (score, theta)
    return best[1]
