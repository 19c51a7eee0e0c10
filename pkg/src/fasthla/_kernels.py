"""Hot numeric kernels: natural-spline solves and ANN training epochs.

Two lanes are compiled side by side:

* a numba ``@njit`` lane (default when numba is importable), and
* a pure-numpy fallback, selected by setting ``FASTHLA_PURE_NUMPY=1``.

Both lanes implement identical arithmetic; ``benchmarks/bench_kernels.py``
times them against each other and checks agreement. Everything here operates
on plain float64 ndarrays so the numba versions compile in nopython mode.
"""

from __future__ import annotations

import os

import numpy as np

_FLAG = os.environ.get("FASTHLA_PURE_NUMPY", "").strip().lower()
PURE_NUMPY = _FLAG in ("1", "true", "yes", "on")

try:  # pragma: no cover - exercised implicitly by lane selection
    from numba import njit

    HAS_NUMBA = True
except ImportError:  # pragma: no cover
    njit = None
    HAS_NUMBA = False


# ---------------------------------------------------------------------------
# Natural cubic spline: second-derivative solve (tridiagonal, shared knots)
# ---------------------------------------------------------------------------

def spline_moments_numpy(x, ys):
    """Second derivatives of natural cubic splines through shared knots.

    x: (n,) strictly increasing knots. ys: (n, m) one column per curve.
    Returns (n, m) with zero first and last rows (natural boundary).
    Thomas algorithm on the interior tridiagonal system, vectorized across
    the m columns.
    """
    n, m = ys.shape
    out = np.zeros((n, m))
    if n <= 2:
        return out
    h = x[1:] - x[:-1]
    # interior rows i = 1 .. n-2
    sub = h[:-1].copy()
    diag = 2.0 * (h[:-1] + h[1:])
    sup = h[1:].copy()
    rhs = 6.0 * ((ys[2:] - ys[1:-1]) / h[1:, None] - (ys[1:-1] - ys[:-2]) / h[:-1, None])
    k = n - 2
    for i in range(1, k):
        w = sub[i] / diag[i - 1]
        diag[i] -= w * sup[i - 1]
        rhs[i] -= w * rhs[i - 1]
    out[k] = rhs[k - 1] / diag[k - 1]
    for i in range(k - 2, -1, -1):
        out[i + 1] = (rhs[i] - sup[i] * out[i + 2]) / diag[i]
    return out


def _spline_moments_loop(x, ys):
    n, m = ys.shape
    out = np.zeros((n, m))
    if n <= 2:
        return out
    sub = np.zeros(n)
    diag = np.zeros(n)
    sup = np.zeros(n)
    rhs = np.zeros((n, m))
    for i in range(1, n - 1):
        h0 = x[i] - x[i - 1]
        h1 = x[i + 1] - x[i]
        sub[i] = h0
        diag[i] = 2.0 * (h0 + h1)
        sup[i] = h1
        for j in range(m):
            rhs[i, j] = 6.0 * ((ys[i + 1, j] - ys[i, j]) / h1 - (ys[i, j] - ys[i - 1, j]) / h0)
    for i in range(2, n - 1):
        w = sub[i] / diag[i - 1]
        diag[i] -= w * sup[i - 1]
        for j in range(m):
            rhs[i, j] -= w * rhs[i - 1, j]
    for j in range(m):
        out[n - 2, j] = rhs[n - 2, j] / diag[n - 2]
        for i in range(n - 3, 0, -1):
            out[i, j] = (rhs[i, j] - sup[i] * out[i + 1, j]) / diag[i]
    return out


# ---------------------------------------------------------------------------
# Stacked piece evaluation (local-basis coefficients around the left knot)
# ---------------------------------------------------------------------------

def eval_stack_numpy(knots, local, xq):
    """Evaluate m splines sharing one knot vector at scalar xq.

    local: (m, n-1, 4) rows (a, b, c, d) of a + b*t + c*t^2 + d*t^3 with
    t = xq - left knot of the piece. The local basis keeps t small, so
    evaluation loses almost nothing to cancellation. Caller guarantees
    knots[0] <= xq <= knots[-1].
    """
    k = int(np.searchsorted(knots, xq, side="right")) - 1
    if k < 0:
        k = 0
    last = local.shape[1] - 1
    if k > last:
        k = last
    t = xq - knots[k]
    c = local[:, k, :]
    return c[:, 0] + t * (c[:, 1] + t * (c[:, 2] + t * c[:, 3]))


def _eval_stack_loop(knots, local, xq):
    n = knots.shape[0]
    k = 0
    for i in range(n - 1):
        if xq >= knots[i]:
            k = i
        else:
            break
    t = xq - knots[k]
    m = local.shape[0]
    out = np.empty(m)
    for j in range(m):
        out[j] = local[j, k, 0] + t * (
            local[j, k, 1] + t * (local[j, k, 2] + t * local[j, k, 3])
        )
    return out


def _local_terms(x, ys, ms):
    h = (x[1:] - x[:-1])[None, :]  # (1, n-1)
    y0 = ys[:-1].T                 # (m, n-1)
    y1 = ys[1:].T
    m0 = ms[:-1].T
    m1 = ms[1:].T
    b = (y1 - y0) / h - h * (2.0 * m0 + m1) / 6.0
    c = m0 / 2.0
    d = (m1 - m0) / (6.0 * h)
    return y0, b, c, d


def local_coeffs_from_moments(x, ys, ms):
    """Per-interval (a, b, c, d) in the local basis t = x - x_i.

    Returns (m, n-1, 4). Plain numpy, shared by both lanes: this is cheap
    vector math that runs once per fit rather than per evaluation.
    """
    y0, b, c, d = _local_terms(x, ys, ms)
    n = x.shape[0]
    m = ys.shape[1]
    out = np.empty((m, n - 1, 4))
    out[:, :, 0] = y0
    out[:, :, 1] = b
    out[:, :, 2] = c
    out[:, :, 3] = d
    return out


def coeffs_from_moments(x, ys, ms):
    """Absolute-basis coefficients per interval: rows (c0, c1, c2, c3) of
    c0 + c1*x + c2*x^2 + c3*x^3, expanded from the local form.

    Returns (m, n-1, 4)."""
    y0, b, c, d = _local_terms(x, ys, ms)
    n = x.shape[0]
    m = ys.shape[1]
    a = x[:-1][None, :]
    out = np.empty((m, n - 1, 4))
    out[:, :, 3] = d
    out[:, :, 2] = c - 3.0 * d * a
    out[:, :, 1] = b - 2.0 * c * a + 3.0 * d * a * a
    out[:, :, 0] = y0 - b * a + c * a * a - d * a * a * a
    return out


# ---------------------------------------------------------------------------
# ANN full-batch gradient-descent epochs (fixed 6-16-3 topology)
# ---------------------------------------------------------------------------

def ann_epochs_numpy(w1, b1, w2, b2, x, xt, y, epochs, lr):
    """Run full-batch MSE gradient descent in place for `epochs` epochs.

    x: (n, 6) standardized features, xt: contiguous x.T, y: (n, 3) targets.
    Loss is mean over samples of the squared output error summed across the
    three outputs.
    """
    n = x.shape[0]
    for _ in range(epochs):
        hidden = np.tanh(np.dot(x, w1) + b1)
        out = np.dot(hidden, w2) + b2
        g = 2.0 * (out - y) / n
        dw2 = np.dot(np.ascontiguousarray(hidden.T), g)
        db2 = np.sum(g, axis=0)
        dh = np.dot(g, np.ascontiguousarray(w2.T)) * (1.0 - hidden * hidden)
        dw1 = np.dot(xt, dh)
        db1 = np.sum(dh, axis=0)
        w1 -= lr * dw1
        b1 -= lr * db1
        w2 -= lr * dw2
        b2 -= lr * db2


def ann_forward_numpy(w1, b1, w2, b2, x):
    """Forward pass; x: (n, 6) -> (n, 3)."""
    hidden = np.tanh(np.dot(x, w1) + b1)
    return np.dot(hidden, w2) + b2


if HAS_NUMBA:
    spline_moments_numba = njit(cache=True)(_spline_moments_loop)
    eval_stack_numba = njit(cache=True)(_eval_stack_loop)
    ann_epochs_numba = njit(cache=True)(ann_epochs_numpy)
    ann_forward_numba = njit(cache=True)(ann_forward_numpy)
else:  # pragma: no cover
    spline_moments_numba = None
    eval_stack_numba = None
    ann_epochs_numba = None
    ann_forward_numba = None

if HAS_NUMBA and not PURE_NUMPY:
    ACTIVE_LANE = "numba"
    spline_moments = spline_moments_numba
    eval_stack = eval_stack_numba
    ann_epochs = ann_epochs_numba
    ann_forward = ann_forward_numba
else:
    ACTIVE_LANE = "numpy"
    spline_moments = spline_moments_numpy
    eval_stack = eval_stack_numpy
    ann_epochs = ann_epochs_numpy
    ann_forward = ann_forward_numpy


def warmup():
    """Trigger JIT compilation of the active lane (no-op on the numpy lane)."""
    x = np.array([0.0, 1.0, 2.0, 3.0])
    ys = np.array([[0.0], [1.0], [0.5], [2.0]])
    ms = spline_moments(x, ys)
    cf = local_coeffs_from_moments(x, ys, ms)
    eval_stack(x, cf, 1.5)
    rng = np.random.default_rng(0)
    xx = rng.normal(size=(4, 6))
    yy = rng.normal(size=(4, 3))
    w1 = rng.uniform(-0.5, 0.5, (6, 16))
    w2 = rng.uniform(-0.5, 0.5, (16, 3))
    b1 = np.zeros(16)
    b2 = np.zeros(3)
    ann_epochs(w1, b1, w2, b2, xx, np.ascontiguousarray(xx.T), yy, 1, 0.01)
    ann_forward(w1, b1, w2, b2, xx)
