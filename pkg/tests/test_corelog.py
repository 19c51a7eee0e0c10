import math

import numpy as np
import pytest

from fasthla.corelog import (
    DeviceInfo,
    EnergyBreakdown,
    ParamSetting,
    PowerTrace,
    dynamic_energy,
    log_from_json,
    log_to_json,
    preprocess_logs,
    read_jsonl,
    total_energy,
)
from fasthla.errors import (
    DomainError,
    EmptyTraceError,
    LogParseError,
    MalformedTraceError,
)

from .oracles import quartiles_by_rank, trapezoid_clamped
from .util import DEV_B, make_log


def trace(samples, p_base=2.0):
    ts = [t for t, _ in samples]
    return PowerTrace(samples=tuple(samples), p_base=p_base, window=(ts[0], ts[-1]))


class TestDynamicEnergy:
    def test_power_equals_base_gives_zero(self):
        t = trace([(0, 2.0), (1, 2.0), (2, 2.0)], p_base=2.0)
        assert dynamic_energy(t) == 0.0

    def test_constant_one_watt_over_two_seconds(self):
        t = trace([(0, 3.0), (1, 3.0), (2, 3.0)], p_base=2.0)
        assert dynamic_energy(t) == pytest.approx(2.0, abs=1e-12)

    def test_matches_trapezoid_oracle_on_simulated_trace(self):
        rng = np.random.default_rng(5)
        ts = np.cumsum(rng.uniform(0.2, 1.5, 100))
        ps = 2.0 + rng.uniform(-0.5, 3.0, 100)
        t = trace(list(zip(ts.tolist(), ps.tolist())), p_base=2.0)
        expect = trapezoid_clamped(ts, ps, 2.0)
        assert dynamic_energy(t) == pytest.approx(expect, rel=1e-9)

    def test_single_sample_rejected(self):
        t = trace([(0, 3.0)])
        with pytest.raises(EmptyTraceError):
            dynamic_energy(t)

    def test_non_increasing_timestamps_rejected(self):
        with pytest.raises(MalformedTraceError):
            PowerTrace(samples=((0, 1.0), (0, 2.0)), p_base=0.0, window=(0, 1))

    def test_monotone_in_pointwise_power(self):
        rng = np.random.default_rng(11)
        for _ in range(50):
            n = rng.integers(2, 20)
            ts = np.cumsum(rng.uniform(0.1, 1.0, n))
            ps = rng.uniform(0.0, 5.0, n)
            base = dynamic_energy(trace(list(zip(ts, ps)), p_base=1.5))
            i = rng.integers(0, n)
            ps2 = ps.copy()
            ps2[i] += rng.uniform(0.0, 2.0)
            raised = dynamic_energy(trace(list(zip(ts, ps2)), p_base=1.5))
            assert raised >= base


class TestTotalEnergy:
    def test_zero(self):
        eb = total_energy(0.0, 0.0)
        assert eb.e_total == 0.0

    def test_sum(self):
        eb = total_energy(10.0, 5.0)
        assert eb.e_total == 15.0

    def test_negative_rejected(self):
        with pytest.raises(DomainError):
            total_energy(-1.0, 0.0)

    def test_identity_enforced_on_breakdowns(self):
        with pytest.raises(DomainError):
            EnergyBreakdown(e_total=10.0, e_base=5.0, e_dynamic=4.0)

    def test_base_plus_dynamic_matches_full_trace_integral(self):
        # with power always above base, clamping is inactive and the split
        # must recompose to the raw trapezoid of P(t)
        rng = np.random.default_rng(7)
        ts = np.cumsum(rng.uniform(0.5, 1.5, 60))
        ps = 2.0 + rng.uniform(0.1, 2.0, 60)
        t = trace(list(zip(ts, ps)), p_base=2.0)
        e_dyn = dynamic_energy(t)
        e_base = 2.0 * (ts[-1] - ts[0])
        eb = total_energy(e_base, e_dyn)
        full = float(np.trapezoid(ps, ts))
        assert eb.e_total == pytest.approx(full, rel=1e-9)


class TestPreprocess:
    def test_throughput_above_bandwidth_removed(self):
        log = make_log(throughput=120.0, bw=100.0)
        assert preprocess_logs([log]) == []

    def test_aborted_removed(self):
        assert preprocess_logs([make_log(status="aborted")]) == []

    def test_nonfinite_removed(self):
        assert preprocess_logs([make_log(fs=float("nan"))]) == []
        assert preprocess_logs([make_log(duration=0.0)]) == []

    def test_iqr_group_outlier(self):
        ths = [10.0, 11.0, 12.0, 9.0, 300.0]
        logs = [make_log(throughput=t, bw=1000.0) for t in ths]
        kept = preprocess_logs(logs)
        assert [l.throughput for l in kept] == [10.0, 11.0, 12.0, 9.0]
        q1, q3 = quartiles_by_rank(ths)
        assert 300.0 > q3 + 1.5 * (q3 - q1)
        assert all(q1 - 1.5 * (q3 - q1) <= t <= q3 + 1.5 * (q3 - q1) for t in ths[:4])

    def test_small_groups_skip_iqr(self):
        logs = [make_log(throughput=t, bw=1000.0) for t in (10.0, 11.0, 12.0, 300.0)]
        assert len(preprocess_logs(logs)) == 4

    def test_groups_split_by_params_device_and_interface(self):
        outlier = [10.0, 11.0, 12.0, 9.0, 300.0]
        logs = [make_log(throughput=t, bw=1000.0) for t in outlier]
        # same throughputs but a different device: separate group, also trimmed
        logs += [make_log(throughput=t, bw=1000.0, device=DEV_B) for t in outlier]
        kept = preprocess_logs(logs)
        assert len(kept) == 8

    def test_order_preserved(self):
        logs = [make_log(throughput=t, bw=1000.0, timestamp=i) for i, t in
                enumerate((10.0, 300.0, 11.0, 12.0, 9.0))]
        kept = preprocess_logs(logs)
        assert [l.timestamp for l in kept] == [0, 2, 3, 4]

    def test_idempotent_on_random_inputs(self):
        rng = np.random.default_rng(3)
        for _ in range(30):
            n = int(rng.integers(1, 40))
            logs = [
                make_log(
                    throughput=float(rng.uniform(0, 120)),
                    bw=100.0,
                    status=str(rng.choice(["completed", "failed"])),
                    params=ParamSetting(int(rng.choice([1, 2])), 1, 8192),
                )
                for _ in range(n)
            ]
            once = preprocess_logs(logs)
            twice = preprocess_logs(once)
            assert twice == once

    def test_never_emits_throughput_above_bw(self):
        rng = np.random.default_rng(4)
        logs = [
            make_log(throughput=float(rng.uniform(0, 200)), bw=float(rng.uniform(50, 150)))
            for _ in range(200)
        ]
        for log in preprocess_logs(logs):
            assert log.throughput <= log.bw


class TestJsonl:
    def test_round_trip(self):
        log = make_log()
        assert log_from_json(log_to_json(log)) == log

    def test_pw_absent_round_trip(self):
        log = make_log(pw=None)
        back = log_from_json(log_to_json(log))
        assert back.pw is None

    def test_unknown_fields_ignored(self):
        line = log_to_json(make_log())
        patched = line[:-1] + ',"future_field":42}'
        assert log_from_json(patched) == make_log()

    def test_malformed_rejected(self):
        with pytest.raises(LogParseError):
            log_from_json("{not json")
        with pytest.raises(LogParseError):
            log_from_json('{"fs": 1}')
        with pytest.raises(LogParseError):
            log_from_json('[1,2]')

    def test_read_jsonl_skips_blank_lines(self):
        text = log_to_json(make_log()) + "\n\n" + log_to_json(make_log(n_files=3)) + "\n"
        logs = list(read_jsonl(text.splitlines()))
        assert len(logs) == 2


def test_device_model_required():
    with pytest.raises(DomainError):
        DeviceInfo(model="")


def test_param_lattice_checks():
    assert ParamSetting(4, 8, 16384).is_lattice()
    assert not ParamSetting(3, 8, 16384).is_lattice()
    with pytest.raises(DomainError):
        ParamSetting(5, 1, 1024).validate()
    assert ParamSetting.from_indices(0, 5, 3) == ParamSetting(1, 32, 8192)
