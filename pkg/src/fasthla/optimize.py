"""Search for the parameter setting that maximizes throughput per joule.

The coarse stage scores every feasible power-of-two grid node inside the
fitted surface's hull; the refinement stage runs coordinate ascent with a
golden-section line search on the continuous log2 domain and snaps the
result back to the nearest feasible node, never returning anything worse
than its starting node.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from .corelog import (
    BS_LEVELS,
    CC_LEVELS,
    P_LEVELS,
    ParamSetting,
    TransferLog,
    preprocess_logs,
)
from .errors import InsufficientDataError
from .surface import ENERGY_FLOOR, PerfSurface, fit_surface

OBJECTIVES = ("efficiency", "min_energy", "max_throughput")

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0
_MAX_SWEEPS = 50
_REL_TOL = 1e-6


@dataclass(frozen=True)
class OptimizationResult:
    theta: ParamSetting
    objective: float          # throughput / max(energy, floor) at theta
    th_at: float
    e_at: float
    method: str               # "grid" or "refined"


def _score(th: float, e: float, objective: str) -> float:
    if objective == "efficiency":
        return th / max(e, ENERGY_FLOOR)
    if objective == "min_energy":
        return -max(e, ENERGY_FLOOR)
    if objective == "max_throughput":
        return th
    raise ValueError(f"unknown objective {objective!r}")


def _axis_levels(axis, levels, to_coord) -> list[int]:
    lo, hi = float(axis[0]), float(axis[-1])
    tol = 1e-9 * max(1.0, abs(lo), abs(hi))
    return [lv for lv in levels if lo - tol <= to_coord(lv) <= hi + tol]


def feasible_nodes(s: PerfSurface, cap: int | None = None) -> list[ParamSetting]:
    """Power-of-two grid nodes inside the surface hull, ascending by
    (cc, p, bs). `cap` optionally bounds cc*p."""
    ccs = _axis_levels(s.cc_axis, CC_LEVELS, math.log2)
    ps = _axis_levels(s.p_axis, P_LEVELS, math.log2)
    bss = _axis_levels(s.bs_axis, BS_LEVELS, lambda b: math.log2(b / 1024.0))
    out = []
    for cc in ccs:
        for p in ps:
            if cap is not None and cc * p > cap:
                continue
            for bs in bss:
                out.append(ParamSetting(cc, p, bs))
    return out


def _eval_node(s: PerfSurface, theta: ParamSetting) -> tuple[float, float]:
    return s.eval_coords(
        math.log2(theta.cc), math.log2(theta.p), math.log2(theta.bs / 1024.0)
    )


def grid_argmax(
    s: PerfSurface, objective: str = "efficiency", cap: int | None = None
) -> OptimizationResult:
    """Best feasible grid node; ties go to smaller cc, then p, then bs."""
    best = None
    for theta in feasible_nodes(s, cap):
        th, e = _eval_node(s, theta)
        score = _score(th, e, objective)
        if best is None or score > best[0]:
            best = (score, theta, th, e)
    if best is None:
        raise InsufficientDataError("no feasible grid nodes inside surface hull")
    _, theta, th, e = best
    return OptimizationResult(
        theta=theta, objective=th / max(e, ENERGY_FLOOR), th_at=th, e_at=e, method="grid"
    )


def _golden_max(f, lo: float, hi: float, tol: float = 1e-7) -> float:
    """Abscissa of the maximum of a unimodal f on [lo, hi]."""
    if hi - lo < tol:
        return 0.5 * (lo + hi)
    a, b = lo, hi
    x1 = b - _GOLDEN * (b - a)
    x2 = a + _GOLDEN * (b - a)
    f1, f2 = f(x1), f(x2)
    while b - a > tol:
        if f1 < f2:
            a, x1, f1 = x1, x2, f2
            x2 = a + _GOLDEN * (b - a)
            f2 = f(x2)
        else:
            b, x2, f2 = x2, x1, f1
            x1 = b - _GOLDEN * (b - a)
            f1 = f(x1)
    return 0.5 * (a + b)


def _snap(coord: float, axis, levels, to_coord) -> int:
    cands = _axis_levels(axis, levels, to_coord)
    return min(cands, key=lambda lv: (abs(to_coord(lv) - coord), lv))


def refine(
    s: PerfSurface,
    start: ParamSetting,
    objective: str = "efficiency",
    cap: int | None = None,
) -> OptimizationResult:
    """Coordinate ascent from a grid node, snapped back to the grid.

    Runs golden-section line searches per axis on the continuous log2
    domain for at most 50 sweeps or until the relative objective change
    drops below 1e-6, then snaps each coordinate to the nearest feasible
    level. Returns the start node whenever snapping does not improve on it.
    """
    start_th, start_e = _eval_node(s, start)
    start_score = _score(start_th, start_e, objective)

    coords = [
        math.log2(start.cc),
        math.log2(start.p),
        math.log2(start.bs / 1024.0),
    ]
    bounds = [
        (float(s.cc_axis[0]), float(s.cc_axis[-1])),
        (float(s.p_axis[0]), float(s.p_axis[-1])),
        (float(s.bs_axis[0]), float(s.bs_axis[-1])),
    ]

    def value_at(c0: float, c1: float, c2: float) -> float:
        th, e = s.eval_coords(c0, c1, c2)
        return _score(th, e, objective)

    prev = value_at(*coords)
    for _ in range(_MAX_SWEEPS):
        for axis in range(3):
            lo, hi = bounds[axis]
            if hi - lo <= 0:
                continue

            def line(x, axis=axis):
                probe = list(coords)
                probe[axis] = x
                return value_at(*probe)

            coords[axis] = _golden_max(line, lo, hi)
        cur = value_at(*coords)
        if abs(cur - prev) <= _REL_TOL * max(1.0, abs(prev)):
            break
        prev = cur

    snapped = ParamSetting(
        _snap(coords[0], s.cc_axis, CC_LEVELS, math.log2),
        _snap(coords[1], s.p_axis, P_LEVELS, math.log2),
        _snap(coords[2], s.bs_axis, BS_LEVELS, lambda b: math.log2(b / 1024.0)),
    )
    if cap is not None and snapped.cc * snapped.p > cap:
        snapped = start
    th, e = _eval_node(s, snapped)
    if _score(th, e, objective) < start_score:
        snapped, th, e = start, start_th, start_e
    return OptimizationResult(
        theta=snapped,
        objective=th / max(e, ENERGY_FLOOR),
        th_at=th,
        e_at=e,
        method="refined",
    )


def log_energy_per_100mb(log: TransferLog, base_power: float) -> float:
    """Total energy per 100 MB for one log: (dynamic + base) power times
    duration, normalized by transferred bytes."""
    total_bytes = log.fs * log.n_files
    return (log.pw + base_power) * log.duration * 1e8 / total_bytes


def optimal_params(
    logs: Sequence[TransferLog],
    objective: str = "efficiency",
    base_power: float = 2.0,
    cap: int | None = None,
) -> OptimizationResult:
    """Full per-cluster optimization: preprocess, fit, coarse grid, refine.

    Only logs carrying a power reading contribute (energy cannot be modeled
    without one). base_power restores total energy from the logged dynamic
    power.
    """
    clean = preprocess_logs(logs)
    usable = [l for l in clean if l.pw is not None]
    if len(usable) < 4:
        raise InsufficientDataError(
            f"need at least 4 usable logs with power readings, have {len(usable)}"
        )
    samples = [
        (l.params, l.throughput, log_energy_per_100mb(l, base_power)) for l in usable
    ]
    spans = {
        "cc": len({l.params.cc for l in usable}),
        "p": len({l.params.p for l in usable}),
        "bs": len({l.params.bs for l in usable}),
    }
    if all(n < 2 for n in spans.values()):
        degenerate = ", ".join(k for k, n in spans.items() if n < 2)
        raise InsufficientDataError(
            f"no parameter axis spans two levels (degenerate: {degenerate})"
        )
    s = fit_surface(samples)
    coarse = grid_argmax(s, objective, cap)
    return refine(s, coarse.theta, objective, cap)
