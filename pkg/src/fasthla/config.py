"""Flat key-value configuration files.

Format: one `key = value` per line, `#` starts a comment, blank lines
ignored. Used for simulator scenarios, power models, and server settings.
"""

from __future__ import annotations

import os

from .errors import ConfigError
from .sim import NetScenario, PowerModel


def parse_kv(path: str) -> dict[str, str]:
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    out: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key, value = line.split("=", 1)
            out[key.strip()] = value.strip()
    return out


def _get(cfg: dict[str, str], key: str, cast, default):
    if key not in cfg:
        return default
    try:
        return cast(cfg[key])
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {cfg[key]!r}") from exc


def scenario_from_kv(cfg: dict[str, str]) -> NetScenario:
    return NetScenario(
        bw_cap=_get(cfg, "bw_cap_mbps", float, 100.0),
        rtt_ms=_get(cfg, "rtt_ms", float, 100.0),
        window_bytes=_get(cfg, "window_bytes", int, 64_000),
        knee=_get(cfg, "knee", float, 16.0),
        slope=_get(cfg, "congestion_slope", float, 0.02),
        seed=_get(cfg, "seed", int, 0),
    )


def powermodel_from_kv(cfg: dict[str, str]) -> PowerModel:
    return PowerModel(
        p_base=_get(cfg, "p_base_w", float, 2.0),
        per_stream=_get(cfg, "per_stream_w", float, 0.05),
        util=_get(cfg, "util_w", float, 1.5),
    )


def load_scenario(path: str | None) -> tuple[NetScenario, PowerModel]:
    if path is None:
        return NetScenario(), PowerModel()
    cfg = parse_kv(path)
    return scenario_from_kv(cfg), powermodel_from_kv(cfg)
