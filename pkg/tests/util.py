"""Shared builders for tests."""

from fasthla.corelog import DeviceInfo, ParamSetting, TransferLog

DEV_A = DeviceInfo(model="dev-a", os="android", cpu_class=2, mem_bytes=2 << 30, wifi_std="n")
DEV_B = DeviceInfo(model="dev-b", os="android", cpu_class=3, mem_bytes=4 << 30, wifi_std="ac")


def make_log(**overrides) -> TransferLog:
    base = dict(
        fs=1_000_000.0,
        n_files=10,
        t_rtt=100.0,
        bs_tcp=65536,
        bw=100.0,
        params=ParamSetting(2, 1, 8192),
        mu_cpu=0.2,
        mu_mem=0.3,
        mu_nic=0.4,
        pw=1.0,
        throughput=50.0,
        duration=10.0,
        device=DEV_A,
        net_if="wifi",
        status="completed",
        timestamp=1_700_000_000.0,
    )
    base.update(overrides)
    return TransferLog(**base)
