"""Natural cubic interpolation of throughput and energy over the parameter grid.

One-dimensional splines are piecewise cubics f_i(x) = c0 + c1*x + c2*x^2 +
c3*x^3 that pass through every sample, agree in value and second derivative
at interior knots, and have zero second derivative at both endpoints. The
coefficients come from a tridiagonal solve for the knot second derivatives.

Throughput and energy surfaces are tensor products of such splines in
log2-transformed coordinates (log2 cc, log2 p, log2 bs/1KB): the feasible
levels are geometric, and interpolating in log space keeps the pieces tame
between the 16 and 32 levels. Evaluation runs successive 1D interpolation
along cc, then p, then bs; on full grids the axis order does not matter.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import _kernels
from .corelog import ParamSetting
from .errors import DuplicateKnotError, ExtrapolationError, InsufficientDataError

#: lower clamp for interpolated energy, guards the efficiency division
ENERGY_FLOOR = 1e-6

_HULL_TOL = 1e-9


@dataclass(frozen=True)
class CubicSpline1D:
    """Natural cubic spline: strictly increasing knots and per-interval
    absolute-basis coefficients (c0, c1, c2, c3), one row per interval.

    Evaluation runs on an equivalent local-basis form (terms in x - x_i stay
    small) rather than on the absolute coefficients."""

    knots: np.ndarray
    coeffs: np.ndarray
    values: np.ndarray
    _local: np.ndarray = field(repr=False, default=None)

    def span(self) -> tuple[float, float]:
        return float(self.knots[0]), float(self.knots[-1])


def _solve_coeffs(x: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Local-basis coefficient tensor (m, n-1, 4) for m curves sharing x."""
    moments = _kernels.spline_moments(x, ys)
    return _kernels.local_coeffs_from_moments(x, ys, moments)


def fit_cubic(points: Sequence[tuple[float, float]]) -> CubicSpline1D:
    """Fit a natural cubic spline through (x, y) samples.

    Points are sorted by x; duplicate abscissae are rejected.
    """
    if len(points) < 2:
        raise InsufficientDataError("spline fit needs at least two points")
    pts = sorted(points, key=lambda q: q[0])
    x = np.array([float(p[0]) for p in pts])
    y = np.array([float(p[1]) for p in pts])
    if np.any(np.diff(x) <= 0):
        raise DuplicateKnotError("duplicate knot abscissae")
    if not np.all(np.isfinite(x)) or not np.all(np.isfinite(y)):
        raise InsufficientDataError("knots and values must be finite")
    moments = _kernels.spline_moments(x, y[:, None])
    coeffs = _kernels.coeffs_from_moments(x, y[:, None], moments)[0]
    local = _kernels.local_coeffs_from_moments(x, y[:, None], moments)
    return CubicSpline1D(knots=x, coeffs=coeffs, values=y, _local=local)


def eval_spline(s: CubicSpline1D, x: float) -> float:
    """Evaluate the piece containing x. No extrapolation."""
    lo, hi = s.span()
    tol = _HULL_TOL * max(1.0, abs(lo), abs(hi))
    if x < lo - tol or x > hi + tol:
        raise ExtrapolationError(f"x={x} outside knot range [{lo}, {hi}]")
    x = min(max(x, lo), hi)
    return float(_kernels.eval_stack(s.knots, s._local, x)[0])


@dataclass
class PerfSurface:
    """Interpolated throughput/energy over (log2 cc, log2 p, log2 bs/1KB).

    Axes hold the distinct sampled coordinates per dimension; grids are the
    (n1, n2, n3) node values. Stage-one coefficient stacks along the cc axis
    are cached because evaluation re-uses them for every query.
    """

    cc_axis: np.ndarray
    p_axis: np.ndarray
    bs_axis: np.ndarray
    th_grid: np.ndarray
    e_grid: np.ndarray
    _th_cc_coeffs: np.ndarray | None = field(default=None, repr=False)
    _e_cc_coeffs: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.cc_axis.size >= 2:
            n1, n2, n3 = self.th_grid.shape
            flat_th = self.th_grid.reshape(n1, n2 * n3)
            flat_e = self.e_grid.reshape(n1, n2 * n3)
            self._th_cc_coeffs = _solve_coeffs(self.cc_axis, flat_th)
            self._e_cc_coeffs = _solve_coeffs(self.cc_axis, flat_e)

    def axes(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return self.cc_axis, self.p_axis, self.bs_axis

    def _check_hull(self, coord: float, axis: np.ndarray, name: str) -> float:
        lo, hi = float(axis[0]), float(axis[-1])
        tol = _HULL_TOL * max(1.0, abs(lo), abs(hi))
        if coord < lo - tol or coord > hi + tol:
            raise ExtrapolationError(
                f"{name} coordinate {coord} outside sampled hull [{lo}, {hi}]"
            )
        return min(max(coord, lo), hi)

    def eval_coords(self, x_cc: float, x_p: float, x_bs: float) -> tuple[float, float]:
        """Evaluate (throughput, energy) at log2 coordinates."""
        x_cc = self._check_hull(x_cc, self.cc_axis, "cc")
        x_p = self._check_hull(x_p, self.p_axis, "p")
        x_bs = self._check_hull(x_bs, self.bs_axis, "bs")
        n1, n2, n3 = self.th_grid.shape

        if n1 >= 2:
            th_pb = _kernels.eval_stack(self.cc_axis, self._th_cc_coeffs, x_cc).reshape(n2, n3)
            e_pb = _kernels.eval_stack(self.cc_axis, self._e_cc_coeffs, x_cc).reshape(n2, n3)
        else:
            th_pb = self.th_grid[0]
            e_pb = self.e_grid[0]

        if n2 >= 2:
            th_b = _kernels.eval_stack(
                self.p_axis, _solve_coeffs(self.p_axis, th_pb), x_p
            )
            e_b = _kernels.eval_stack(
                self.p_axis, _solve_coeffs(self.p_axis, e_pb), x_p
            )
        else:
            th_b = th_pb[0]
            e_b = e_pb[0]

        if n3 >= 2:
            th = float(_kernels.eval_stack(self.bs_axis, _solve_coeffs(self.bs_axis, th_b[:, None]), x_bs)[0])
            e = float(_kernels.eval_stack(self.bs_axis, _solve_coeffs(self.bs_axis, e_b[:, None]), x_bs)[0])
        else:
            th = float(th_b[0])
            e = float(e_b[0])
        return th, max(e, ENERGY_FLOOR)


def param_coords(theta: ParamSetting) -> tuple[float, float, float]:
    return math.log2(theta.cc), math.log2(theta.p), math.log2(theta.bs / 1024.0)


def _fill_axis(grid: np.ndarray, axes: list[np.ndarray], axis: int) -> None:
    """Fill NaN nodes along one axis by 1D natural splines through the
    known values of each line (interpolation only, never extrapolation)."""
    coords = axes[axis]
    if coords.size < 2:
        return
    other_shape = tuple(grid.shape[a] for a in range(3) if a != axis)
    for idx in np.ndindex(*other_shape):
        slicer = list(idx)
        slicer.insert(axis, slice(None))
        line = grid[tuple(slicer)]  # basic slicing: a writable view
        known = np.isfinite(line)
        nk = int(known.sum())
        if nk == coords.size or nk < 2:
            continue
        kx = coords[known]
        ky = line[known]
        coeffs = _solve_coeffs(kx, ky[:, None])
        for i in np.where(~known)[0]:
            xq = coords[i]
            if kx[0] <= xq <= kx[-1]:
                line[i] = float(_kernels.eval_stack(kx, coeffs, float(xq))[0])


def fit_surface(
    samples: Sequence[tuple[ParamSetting, float, float]]
) -> PerfSurface:
    """Build throughput/energy surfaces from (setting, Mbps, J-per-100MB)
    samples. Duplicate settings are averaged; missing grid nodes are filled
    by separable 1D spline passes along cc, then p, then bs.
    """
    if not samples:
        raise InsufficientDataError("no surface samples")
    acc: dict[tuple[float, float, float], list[tuple[float, float]]] = {}
    for theta, th, e in samples:
        if theta.cc < 1 or theta.p < 1 or theta.bs < 1:
            raise InsufficientDataError(f"non-positive parameter in {theta}")
        if not (math.isfinite(th) and math.isfinite(e)):
            raise InsufficientDataError("non-finite surface sample")
        acc.setdefault(param_coords(theta), []).append((th, e))

    coords = sorted(acc)
    cc_axis = np.array(sorted({c[0] for c in coords}))
    p_axis = np.array(sorted({c[1] for c in coords}))
    bs_axis = np.array(sorted({c[2] for c in coords}))
    axes = [cc_axis, p_axis, bs_axis]

    shape = (cc_axis.size, p_axis.size, bs_axis.size)
    th_grid = np.full(shape, np.nan)
    e_grid = np.full(shape, np.nan)
    index = [
        {v: i for i, v in enumerate(ax.tolist())} for ax in axes
    ]
    for (xc, xp, xb), vals in acc.items():
        i, j, k = index[0][xc], index[1][xp], index[2][xb]
        th_grid[i, j, k] = float(np.mean([v[0] for v in vals]))
        e_grid[i, j, k] = float(np.mean([v[1] for v in vals]))

    for axis in (0, 1, 2):
        _fill_axis(th_grid, axes, axis)
        _fill_axis(e_grid, axes, axis)

    if np.isnan(th_grid).any() or np.isnan(e_grid).any():
        missing = int(np.isnan(th_grid).sum())
        raise InsufficientDataError(
            f"sample coverage too sparse: {missing} grid nodes not recoverable"
        )
    return PerfSurface(
        cc_axis=cc_axis, p_axis=p_axis, bs_axis=bs_axis,
        th_grid=th_grid, e_grid=e_grid,
    )


def eval_surface(s: PerfSurface, cc: float, p: float, bs: float) -> tuple[float, float]:
    """(throughput Mbps, energy J/100MB) at a raw-parameter point inside the
    sampled hull. Energy is clamped below at ENERGY_FLOOR."""
    if cc <= 0 or p <= 0 or bs <= 0:
        raise ExtrapolationError("parameters must be positive")
    return s.eval_coords(math.log2(cc), math.log2(p), math.log2(bs / 1024.0))
