"""Fixed-topology parameter predictor and its fixed-size wire blob.

The predictor is a small regression network (6 inputs, 16 tanh hidden units,
3 linear outputs = 163 weights) mapping request/network features to the
level indices of (cc, p, bs). Outputs are rounded to the nearest feasible
level, so the output layer stays three wide and the serialized update is
always the same 1412 bytes no matter how much history trained it.
Retraining is additive: given a prior model it continues from those weights.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import _kernels
from .corelog import BS_LEVELS, CC_LEVELS, P_LEVELS, ParamSetting, TransferLog
from .errors import (
    BlobCountError,
    BlobLengthError,
    BlobMagicError,
    InsufficientDataError,
    UndefinedVarianceError,
)

N_FEATURES = 6
N_HIDDEN = 16
N_OUTPUTS = 3
N_WEIGHTS = N_FEATURES * N_HIDDEN + N_HIDDEN + N_HIDDEN * N_OUTPUTS + N_OUTPUTS  # 163
N_STANDARDIZATION = 2 * N_FEATURES  # 12

BLOB_MAGIC = b"FHLA"
BLOB_LEN = 12 + (N_WEIGHTS + N_STANDARDIZATION) * 8  # 1412

DEFAULT_EPOCHS = 2000
DEFAULT_LR = 0.01

_MAX_IDX = (len(CC_LEVELS) - 1, len(P_LEVELS) - 1, len(BS_LEVELS) - 1)


@dataclass(frozen=True)
class FeatureVector:
    """Request/network features: log10-scaled magnitudes plus categorical
    interface flag (wifi=0, cellular=1) and the device CPU class ordinal."""

    log_fs: float
    log_n_files: float
    log_rtt: float
    log_bw: float
    net_flag: float
    cpu_class: float

    def as_array(self) -> np.ndarray:
        return np.array(
            [self.log_fs, self.log_n_files, self.log_rtt, self.log_bw,
             self.net_flag, self.cpu_class]
        )

    @staticmethod
    def from_log(log: TransferLog) -> "FeatureVector":
        return FeatureVector(
            log_fs=math.log10(log.fs),
            log_n_files=math.log10(max(log.n_files, 1)),
            log_rtt=math.log10(log.t_rtt),
            log_bw=math.log10(log.bw),
            net_flag=0.0 if log.net_if == "wifi" else 1.0,
            cpu_class=float(log.device.cpu_class),
        )

    @staticmethod
    def from_request(
        avg_file_size: float,
        num_files: int,
        rtt_ms: float,
        bw_mbps: float,
        net_if: str,
        cpu_class: int,
    ) -> "FeatureVector":
        return FeatureVector(
            log_fs=math.log10(max(avg_file_size, 1.0)),
            log_n_files=math.log10(max(num_files, 1)),
            log_rtt=math.log10(max(rtt_ms, 1e-3)),
            log_bw=math.log10(max(bw_mbps, 1e-3)),
            net_flag=0.0 if net_if == "wifi" else 1.0,
            cpu_class=float(cpu_class),
        )


@dataclass
class LearnedModel:
    version: int
    weights: np.ndarray       # flat (163,)
    feat_mean: np.ndarray     # (6,)
    feat_std: np.ndarray      # (6,), zeros replaced by 1 before storing

    def __post_init__(self):
        if self.weights.shape != (N_WEIGHTS,):
            raise BlobCountError(
                f"model must hold exactly {N_WEIGHTS} weights, got {self.weights.shape}"
            )


def _unpack(weights: np.ndarray):
    o1 = N_FEATURES * N_HIDDEN
    o2 = o1 + N_HIDDEN
    o3 = o2 + N_HIDDEN * N_OUTPUTS
    w1 = weights[:o1].reshape(N_FEATURES, N_HIDDEN)
    b1 = weights[o1:o2]
    w2 = weights[o2:o3].reshape(N_HIDDEN, N_OUTPUTS)
    b2 = weights[o3:]
    return w1, b1, w2, b2


def encode_target(theta: ParamSetting) -> np.ndarray:
    ic, ip, ib = theta.level_indices()
    return np.array([float(ic), float(ip), float(ib)])


def _standardize(x: np.ndarray, mean: np.ndarray, std: np.ndarray) -> np.ndarray:
    return (x - mean) / std


def train(
    rows: Sequence[tuple[FeatureVector, ParamSetting]],
    seed: int = 0,
    prior: LearnedModel | None = None,
    epochs: int = DEFAULT_EPOCHS,
    lr: float = DEFAULT_LR,
) -> LearnedModel:
    """Full-batch gradient descent on MSE over level-index targets.

    Fresh training draws initial weights from a seeded uniform(-0.5, 0.5)
    and computes feature standardization from the rows; with a `prior`
    model, training continues from its weights and keeps its
    standardization so the old and new knowledge share one feature scale.
    """
    if len(rows) < 10:
        raise InsufficientDataError(f"training needs at least 10 rows, got {len(rows)}")
    x_raw = np.array([fv.as_array() for fv, _ in rows])
    y = np.array([encode_target(theta) for _, theta in rows])

    if prior is not None:
        weights = prior.weights.copy()
        mean = prior.feat_mean.copy()
        std = prior.feat_std.copy()
        version = prior.version + 1
    else:
        rng = np.random.default_rng(seed)
        weights = rng.uniform(-0.5, 0.5, N_WEIGHTS)
        mean = x_raw.mean(axis=0)
        std = x_raw.std(axis=0)
        std[std == 0.0] = 1.0
        version = 1

    x = np.ascontiguousarray(_standardize(x_raw, mean, std))
    w1, b1, w2, b2 = _unpack(weights)
    if epochs > 0:
        _kernels.ann_epochs(
            w1, b1, w2, b2, x, np.ascontiguousarray(x.T), y, epochs, lr
        )
    return LearnedModel(version=version, weights=weights, feat_mean=mean, feat_std=std)


def _forward(m: LearnedModel, x: np.ndarray) -> np.ndarray:
    w1, b1, w2, b2 = _unpack(m.weights)
    return _kernels.ann_forward(w1, b1, w2, b2, np.ascontiguousarray(x))


def predict(m: LearnedModel, f: FeatureVector) -> ParamSetting:
    """Forward pass, outputs rounded to the nearest feasible level index."""
    x = _standardize(f.as_array(), m.feat_mean, m.feat_std)[None, :]
    raw = _forward(m, x)[0]
    idx = [
        int(min(max(round(float(raw[a])), 0), _MAX_IDX[a])) for a in range(N_OUTPUTS)
    ]
    return ParamSetting.from_indices(*idx)


def knn_oracle(
    rows: Sequence[tuple[FeatureVector, ParamSetting]],
    f: FeatureVector,
    k: int = 3,
) -> ParamSetting:
    """Server-side baseline: inverse-distance-weighted vote per output axis
    over the k nearest rows (Euclidean on standardized features); ties go to
    the smaller level. Exact feature matches outvote everything else."""
    if len(rows) < k:
        raise InsufficientDataError(f"knn needs at least k={k} rows")
    x = np.array([fv.as_array() for fv, _ in rows])
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    std[std == 0.0] = 1.0
    xs = (x - mean) / std
    q = (f.as_array() - mean) / std
    dist = np.sqrt(((xs - q) ** 2).sum(axis=1))
    order = np.argsort(dist, kind="stable")[:k]
    nearest = [(float(dist[i]), rows[i][1]) for i in order]

    exact = [t for d, t in nearest if d < 1e-12]
    if exact:
        weighted = [(1.0, t) for t in exact]
    else:
        weighted = [(1.0 / d, t) for d, t in nearest]

    idx_out = []
    for axis in range(N_OUTPUTS):
        votes: dict[int, float] = {}
        for w, theta in weighted:
            lv = theta.level_indices()[axis]
            votes[lv] = votes.get(lv, 0.0) + w
        best = max(sorted(votes), key=lambda lv: (votes[lv], -lv))
        idx_out.append(best)
    return ParamSetting.from_indices(*idx_out)


def r_squared(actual: Sequence[float], predicted: Sequence[float]) -> float:
    """Coefficient of determination, 1 - SS_res / SS_tot."""
    if len(actual) == 0 or len(actual) != len(predicted):
        raise InsufficientDataError("r_squared needs equal non-empty sequences")
    y = np.asarray(actual, dtype=float)
    fhat = np.asarray(predicted, dtype=float)
    ss_tot = float(((y - y.mean()) ** 2).sum())
    if ss_tot == 0.0:
        raise UndefinedVarianceError("actuals are all identical")
    ss_res = float(((y - fhat) ** 2).sum())
    return 1.0 - ss_res / ss_tot


def accuracy(
    m: LearnedModel, test_rows: Sequence[tuple[FeatureVector, ParamSetting]]
) -> float:
    """Fraction of rows whose prediction matches the target on all axes."""
    if not test_rows:
        raise InsufficientDataError("accuracy is undefined on an empty test set")
    hits = sum(1 for fv, theta in test_rows if predict(m, fv) == theta)
    return hits / len(test_rows)


def serialize(m: LearnedModel) -> bytes:
    """Fixed 1412-byte blob: magic, version u32 LE, weight count u32 LE,
    then 163 weights + 6 means + 6 stds as little-endian float64."""
    payload = np.concatenate([m.weights, m.feat_mean, m.feat_std]).astype("<f8")
    blob = struct.pack("<4sII", BLOB_MAGIC, m.version, N_WEIGHTS) + payload.tobytes()
    assert len(blob) == BLOB_LEN
    return blob


def deserialize(blob: bytes) -> LearnedModel:
    if len(blob) < 12:
        raise BlobLengthError(f"blob too short: {len(blob)} bytes")
    magic, version, count = struct.unpack_from("<4sII", blob, 0)
    if magic != BLOB_MAGIC:
        raise BlobMagicError(f"bad magic {magic!r}")
    if count != N_WEIGHTS:
        raise BlobCountError(f"expected {N_WEIGHTS} weights, blob declares {count}")
    if len(blob) != BLOB_LEN:
        raise BlobLengthError(f"expected {BLOB_LEN} bytes, got {len(blob)}")
    payload = np.frombuffer(blob, dtype="<f8", offset=12).astype(float)
    return LearnedModel(
        version=int(version),
        weights=payload[:N_WEIGHTS].copy(),
        feat_mean=payload[N_WEIGHTS:N_WEIGHTS + N_FEATURES].copy(),
        feat_std=payload[N_WEIGHTS + N_FEATURES:].copy(),
    )
