import math

import numpy as np
import pytest

from fasthla.corelog import ParamSetting
from fasthla.errors import DuplicateKnotError, ExtrapolationError, InsufficientDataError
from fasthla.surface import (
    ENERGY_FLOOR,
    eval_spline,
    eval_surface,
    fit_cubic,
    fit_surface,
)

from .oracles import dense_eval, dense_spline_coeffs, tensor_eval_pcc


def random_knots(rng, n):
    x = np.cumsum(rng.uniform(0.3, 1.2, n))
    y = rng.uniform(-10.0, 10.0, n)
    return x, y


class TestFitCubic:
    def test_linear_data_reproduced(self):
        s = fit_cubic([(1, 2), (2, 4), (3, 6)])
        assert eval_spline(s, 1.5) == pytest.approx(3.0, abs=1e-12)

    def test_interpolation_constraint(self):
        s = fit_cubic([(1, 5), (2, 7), (4, 6)])
        assert eval_spline(s, 2.0) == pytest.approx(7.0, abs=1e-9)

    def test_coefficients_match_dense_solver(self):
        rng = np.random.default_rng(123)
        x, y = random_knots(rng, 6)
        s = fit_cubic(list(zip(x, y)))
        expected = dense_spline_coeffs(x, y)
        np.testing.assert_allclose(s.coeffs, expected, atol=1e-9)

    def test_duplicate_knot_rejected(self):
        with pytest.raises(DuplicateKnotError):
            fit_cubic([(1, 1), (1, 2), (3, 3)])

    def test_too_few_points(self):
        with pytest.raises(InsufficientDataError):
            fit_cubic([(1, 1)])

    def test_two_points_is_a_line(self):
        s = fit_cubic([(0, 1), (2, 5)])
        assert eval_spline(s, 1.0) == pytest.approx(3.0, abs=1e-12)

    def test_smoothness_and_natural_boundary(self):
        rng = np.random.default_rng(77)
        for _ in range(40):
            n = int(rng.integers(3, 9))
            x, y = random_knots(rng, n)
            s = fit_cubic(list(zip(x, y)))

            def second(cf, q):
                return 2 * cf[2] + 6 * cf[3] * q

            for i in range(1, n - 1):
                left = second(s.coeffs[i - 1], x[i])
                right = second(s.coeffs[i], x[i])
                assert abs(left - right) < 1e-9
            assert abs(second(s.coeffs[0], x[0])) < 1e-9
            assert abs(second(s.coeffs[-1], x[-1])) < 1e-9


class TestEvalSpline:
    def test_knots_reproduce_values(self):
        rng = np.random.default_rng(5)
        x, y = random_knots(rng, 7)
        s = fit_cubic(list(zip(x, y)))
        for xi, yi in zip(x, y):
            assert eval_spline(s, xi) == pytest.approx(yi, abs=1e-9)

    def test_interior_matches_horner_oracle(self):
        # well-conditioned knots so the absolute-basis Horner oracle itself
        # stays accurate to ~1e-13
        rng = np.random.default_rng(31)
        x = np.cumsum(rng.uniform(0.2, 0.35, 8))
        x -= x[0]
        y = rng.uniform(-2.0, 2.0, 8)
        s = fit_cubic(list(zip(x, y)))
        for _ in range(50):
            q = rng.uniform(x[0], x[-1])
            k = min(max(np.searchsorted(x, q, side="right") - 1, 0), len(x) - 2)
            expected = float(np.polyval(s.coeffs[k][::-1], q))
            assert eval_spline(s, q) == pytest.approx(expected, abs=1e-12)

    def test_extrapolation_rejected(self):
        s = fit_cubic([(0, 0), (1, 1)])
        with pytest.raises(ExtrapolationError):
            eval_spline(s, -0.5)
        with pytest.raises(ExtrapolationError):
            eval_spline(s, 1.5)


def lattice_samples(fn, ccs=(1, 2, 4, 8, 16, 32), ps=(1, 2, 4, 8, 16, 32),
                    bss=(1024, 2048, 4096, 8192, 16384, 32768, 65536)):
    out = []
    for cc in ccs:
        for p in ps:
            for bs in bss:
                theta = ParamSetting(cc, p, bs)
                out.append((theta, *fn(theta)))
    return out


class TestFitSurface:
    def test_log_linear_surface(self):
        samples = lattice_samples(
            lambda t: (math.log2(t.cc) + math.log2(t.p), 1.0), bss=(8192,)
        )
        s = fit_surface(samples)
        th, e = eval_surface(s, 3.0, 1.0, 8192)
        assert th == pytest.approx(math.log2(3.0), abs=1e-9)

    def test_node_reproduction(self):
        rng = np.random.default_rng(8)
        vals = {}

        def fn(theta):
            vals[theta] = (float(rng.uniform(5, 90)), float(rng.uniform(10, 200)))
            return vals[theta]

        samples = lattice_samples(fn)
        s = fit_surface(samples)
        for theta, (th0, e0) in vals.items():
            th, e = eval_surface(s, theta.cc, theta.p, theta.bs)
            assert th == pytest.approx(th0, abs=1e-9)
            assert e == pytest.approx(e0, abs=1e-9)

    def test_duplicates_averaged(self):
        theta = ParamSetting(1, 1, 1024)
        other = ParamSetting(2, 1, 1024)
        s = fit_surface([(theta, 10.0, 4.0), (theta, 14.0, 6.0), (other, 20.0, 8.0)])
        th, e = eval_surface(s, 1, 1, 1024)
        assert th == pytest.approx(12.0, abs=1e-12)
        assert e == pytest.approx(5.0, abs=1e-12)

    def test_off_lattice_matches_tensor_oracle(self):
        rng = np.random.default_rng(13)
        samples = lattice_samples(
            lambda t: (float(rng.uniform(5, 90)), float(rng.uniform(10, 200)))
        )
        s = fit_surface(samples)
        for _ in range(20):
            xc = rng.uniform(0, 5)
            xp = rng.uniform(0, 5)
            xb = rng.uniform(0, 6)
            th, e = s.eval_coords(xc, xp, xb)
            th_o = tensor_eval_pcc(s.cc_axis, s.p_axis, s.bs_axis, s.th_grid, xc, xp, xb)
            e_o = tensor_eval_pcc(s.cc_axis, s.p_axis, s.bs_axis, s.e_grid, xc, xp, xb)
            assert th == pytest.approx(th_o, abs=1e-9)
            assert e == pytest.approx(max(e_o, ENERGY_FLOOR), abs=1e-9)

    def test_missing_nodes_filled_by_separable_passes(self):
        rng = np.random.default_rng(21)
        full = lattice_samples(
            lambda t: (float(rng.uniform(5, 90)), float(rng.uniform(10, 200))),
            ccs=(1, 2, 4, 8), ps=(1, 2, 4), bss=(1024, 4096),
        )
        # drop an interior node: recoverable through the cc pass
        missing = ParamSetting(2, 2, 4096)
        partial = [s for s in full if s[0] != missing]
        surf = fit_surface(partial)
        th, e = eval_surface(surf, 2, 2, 4096)
        assert math.isfinite(th) and math.isfinite(e)
        # all retained nodes still reproduce their samples
        for theta, th0, e0 in partial:
            th, e = eval_surface(surf, theta.cc, theta.p, theta.bs)
            assert th == pytest.approx(th0, abs=1e-9)

    def test_constant_axis_passes_through(self):
        samples = lattice_samples(
            lambda t: (float(t.cc), 1.0), ps=(4,), bss=(8192,)
        )
        s = fit_surface(samples)
        th, e = eval_surface(s, 8, 4, 8192)
        assert th == pytest.approx(8.0, abs=1e-9)
        with pytest.raises(ExtrapolationError):
            eval_surface(s, 8, 2, 8192)

    def test_energy_clamped_at_floor(self):
        # a deep dip forces the interpolant below zero between knots
        xs = (1, 2, 4, 8)
        samples = [
            (ParamSetting(cc, 1, 1024), 10.0, e)
            for cc, e in zip(xs, (50.0, 50.0, 0.0001, 50.0))
        ]
        s = fit_surface(samples)
        found = None
        for q in np.linspace(1.0, 3.0, 400):
            e_raw = tensor_eval_pcc(s.cc_axis, s.p_axis, s.bs_axis, s.e_grid, q, 0.0, 0.0)
            if e_raw < 0:
                found = q
                break
        assert found is not None, "oracle search should find an overshoot"
        _, e = s.eval_coords(found, 0.0, 0.0)
        assert e == ENERGY_FLOOR

    def test_unrecoverable_sparsity_rejected(self):
        samples = [
            (ParamSetting(1, 1, 1024), 1.0, 1.0),
            (ParamSetting(32, 32, 1024), 2.0, 2.0),
        ]
        with pytest.raises(InsufficientDataError):
            fit_surface(samples)

    def test_empty_rejected(self):
        with pytest.raises(InsufficientDataError):
            fit_surface([])
