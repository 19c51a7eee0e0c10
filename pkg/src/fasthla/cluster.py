"""Agglomerative clustering of transfer logs and of dataset files.

Logs are first split on categorical keys (device model, network interface),
then merged bottom-up with Ward linkage over standardized numeric features
until the cheapest merge reaches the cut threshold. Dataset files cluster by
complete linkage on the gap between log10 file sizes, so one cluster never
spans more than `threshold_decades` orders of magnitude.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .corelog import TransferLog


@dataclass
class LogCluster:
    members: list[int]          # indices into the input log list
    centroid: np.ndarray        # standardized feature-space centroid


@dataclass
class FileCluster:
    files: list[tuple[str, int]]
    mean_size: float


def log_features(log: TransferLog) -> np.ndarray:
    return np.array([math.log10(log.fs), math.log10(log.t_rtt), math.log10(log.bw)])


def _standardize(x: np.ndarray) -> np.ndarray:
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    out = np.zeros_like(x)
    nz = std > 0
    out[:, nz] = (x[:, nz] - mean[nz]) / std[nz]
    return out


def _dedupe(points: np.ndarray) -> tuple[np.ndarray, np.ndarray, list[list[int]]]:
    """Collapse bit-identical rows into weighted points (members preserved)."""
    seen: dict[bytes, int] = {}
    uniq: list[np.ndarray] = []
    members: list[list[int]] = []
    for i, row in enumerate(points):
        key = row.tobytes()
        j = seen.get(key)
        if j is None:
            seen[key] = len(uniq)
            uniq.append(row)
            members.append([i])
        else:
            members[j].append(i)
    weights = np.array([float(len(m)) for m in members])
    return np.array(uniq), weights, members


def _agglomerate(dist: np.ndarray, sizes: np.ndarray, threshold: float, linkage: str) -> list[list[int]]:
    """Merge clusters while the cheapest pair is below threshold.

    dist: full symmetric distance matrix between initial clusters. Ties are
    broken toward the lowest (i, j) pair. Returns member lists of initial
    cluster indices.
    """
    k = dist.shape[0]
    d = dist.copy()
    np.fill_diagonal(d, np.inf)
    active = np.ones(k, dtype=bool)
    members = [[i] for i in range(k)]
    w = sizes.astype(float).copy()
    for _ in range(k - 1):
        flat = np.argmin(d)
        i, j = divmod(int(flat), k)
        if not np.isfinite(d[i, j]) or d[i, j] >= threshold:
            break
        if i > j:
            i, j = j, i
        if linkage == "ward":
            others = active.copy()
            others[i] = others[j] = False
            idx = np.where(others)[0]
            if idx.size:
                num = (
                    (w[i] + w[idx]) * d[idx, i] ** 2
                    + (w[j] + w[idx]) * d[idx, j] ** 2
                    - w[idx] * d[i, j] ** 2
                )
                new = np.sqrt(num / (w[i] + w[j] + w[idx]))
                d[i, idx] = new
                d[idx, i] = new
        else:  # complete
            new = np.maximum(d[:, i], d[:, j])
            d[i, :] = new
            d[:, i] = new
            d[i, i] = np.inf
        members[i].extend(members[j])
        w[i] += w[j]
        active[j] = False
        d[j, :] = np.inf
        d[:, j] = np.inf
    return [members[i] for i in range(k) if active[i]]


def _ward_initial_dist(points: np.ndarray, weights: np.ndarray) -> np.ndarray:
    diff = points[:, None, :] - points[None, :, :]
    euc = np.sqrt((diff ** 2).sum(axis=2))
    wi = weights[:, None]
    wj = weights[None, :]
    return np.sqrt(2.0 * wi * wj / (wi + wj)) * euc


def cluster_logs(logs: Sequence[TransferLog], threshold: float = 1.0) -> list[LogCluster]:
    """Group preprocessed logs by similarity.

    Categorical split on (device.model, net_if) first, then Ward
    agglomeration on standardized [log10 fs, log10 rtt, log10 bw] within each
    partition, cut at `threshold`. Deterministic for a given input order.
    """
    if threshold <= 0:
        raise ValueError("threshold must be positive")
    partitions: dict[tuple[str, str], list[int]] = {}
    for i, log in enumerate(logs):
        partitions.setdefault((log.device.model, log.net_if), []).append(i)

    clusters: list[LogCluster] = []
    for key in sorted(partitions):
        idxs = partitions[key]
        feats = np.array([log_features(logs[i]) for i in idxs])
        std_feats = _standardize(feats)
        uniq, weights, dup_members = _dedupe(std_feats)
        if len(uniq) == 1:
            merged = [list(range(len(uniq)))]
        else:
            dist = _ward_initial_dist(uniq, weights)
            merged = _agglomerate(dist, weights, threshold, "ward")
        for group in merged:
            local = [m for g in group for m in dup_members[g]]
            local.sort()
            members = [idxs[m] for m in local]
            centroid = std_feats[local].mean(axis=0)
            clusters.append(LogCluster(members=members, centroid=centroid))
    clusters.sort(key=lambda c: c.members[0])
    return clusters


def cluster_files(
    dataset: Sequence[tuple[str, int]], threshold_decades: float = 1.0
) -> list[FileCluster]:
    """Group files whose sizes lie within `threshold_decades` in log10 space.

    Complete linkage bounds the within-cluster spread; output is ordered by
    descending mean size.
    """
    if not dataset:
        return []
    if any(size <= 0 for _, size in dataset):
        raise ValueError("file sizes must be positive")
    logs10 = np.array([[math.log10(size)] for _, size in dataset])
    uniq, _, dup_members = _dedupe(logs10)
    if len(uniq) == 1:
        merged = [[0]]
    else:
        dist = np.abs(uniq[:, 0][:, None] - uniq[:, 0][None, :])
        merged = _agglomerate(dist, np.ones(len(uniq)), threshold_decades, "complete")
    out = []
    for group in merged:
        idx = sorted(m for g in group for m in dup_members[g])
        files = [dataset[i] for i in idx]
        out.append(FileCluster(files=files, mean_size=float(np.mean([s for _, s in files]))))
    out.sort(key=lambda c: -c.mean_size)
    return out
