import numpy as np
import pytest

from fasthla.corelog import ParamSetting
from fasthla.errors import (
    BlobCountError,
    BlobLengthError,
    BlobMagicError,
    InsufficientDataError,
    UndefinedVarianceError,
)
from fasthla.learn import (
    BLOB_LEN,
    N_WEIGHTS,
    FeatureVector,
    LearnedModel,
    accuracy,
    deserialize,
    knn_oracle,
    predict,
    r_squared,
    serialize,
    train,
)

from .oracles import knn_scan
from .synthcorpus import make_corpus, reference_throughput


def fv(seed=0, **overrides):
    rng = np.random.default_rng(seed)
    base = dict(
        log_fs=float(rng.uniform(4, 9)),
        log_n_files=float(rng.uniform(0, 3)),
        log_rtt=float(rng.uniform(1, 2.5)),
        log_bw=float(rng.uniform(0.7, 2.3)),
        net_flag=float(rng.integers(0, 2)),
        cpu_class=float(rng.integers(1, 5)),
    )
    base.update(overrides)
    return FeatureVector(**base)


def constant_rows(n=20, theta=ParamSetting(8, 2, 16384)):
    return [(fv(i), theta) for i in range(n)]


class TestTrain:
    def test_constant_target_learned_exactly(self):
        theta = ParamSetting(8, 2, 16384)
        rows = constant_rows(30, theta)
        m = train(rows, seed=1)
        assert all(predict(m, f) == theta for f, _ in rows)
        assert accuracy(m, rows) == 1.0

    def test_too_few_rows(self):
        with pytest.raises(InsufficientDataError):
            train(constant_rows(9), seed=0)

    def test_zero_epoch_retrain_keeps_weights(self):
        rows = constant_rows(15)
        m = train(rows, seed=3)
        m2 = train(rows, seed=99, prior=m, epochs=0)
        np.testing.assert_array_equal(m.weights, m2.weights)
        assert m2.version == m.version + 1

    def test_determinism(self):
        corpus = [(f, t) for f, t, _, _ in make_corpus(60, seed=5)]
        a = train(corpus, seed=11)
        b = train(corpus, seed=11)
        np.testing.assert_array_equal(a.weights, b.weights)

    def test_additive_training_keeps_standardization(self):
        rows = [(f, t) for f, t, _, _ in make_corpus(60, seed=6)]
        m1 = train(rows, seed=0)
        m2 = train(rows[:30], seed=0, prior=m1, epochs=50)
        np.testing.assert_array_equal(m1.feat_mean, m2.feat_mean)
        np.testing.assert_array_equal(m1.feat_std, m2.feat_std)
        assert m2.version == 2

    def test_heldout_accuracy_on_step_mapping(self):
        corpus = make_corpus(600, seed=42)
        train_rows = [(f, t) for f, t, _, _ in corpus[:500]]
        test_rows = [(f, t) for f, t, _, _ in corpus[500:]]
        m = train(train_rows, seed=42)
        assert accuracy(m, test_rows) >= 0.85


class TestPredict:
    def test_rounding_and_clamping(self):
        # zero hidden->output weights, biases force raw outputs (-0.4, 5.7, 3.2)
        w = np.zeros(N_WEIGHTS)
        w[-3:] = (-0.4, 5.7, 3.2)
        m = LearnedModel(version=1, weights=w,
                         feat_mean=np.zeros(6), feat_std=np.ones(6))
        theta = predict(m, fv(1))
        assert theta == ParamSetting(cc=1, p=32, bs=8192)

    def test_output_always_feasible(self):
        rng = np.random.default_rng(9)
        m = LearnedModel(version=1, weights=rng.normal(0, 5, N_WEIGHTS),
                         feat_mean=np.zeros(6), feat_std=np.ones(6))
        for i in range(50):
            predict(m, fv(i)).validate()

    def test_forward_matches_matrix_oracle(self):
        rows = [(f, t) for f, t, _, _ in make_corpus(40, seed=8)]
        m = train(rows, seed=2)
        w = m.weights
        w1 = w[:96].reshape(6, 16)
        b1 = w[96:112]
        w2 = w[112:160].reshape(16, 3)
        b2 = w[160:]
        for i in range(20):
            f = fv(i)
            x = (f.as_array() - m.feat_mean) / m.feat_std
            hidden = np.tanh(x @ w1 + b1)
            raw = hidden @ w2 + b2
            idx = [int(min(max(round(float(raw[a])), 0), (5, 5, 6)[a])) for a in range(3)]
            assert predict(m, f) == ParamSetting.from_indices(*idx)


class TestKnnOracle:
    def test_exact_match_returns_that_row(self):
        rows = [(f, t) for f, t, _, _ in make_corpus(30, seed=3)]
        f0, t0 = rows[4]
        assert knn_oracle(rows, f0, k=3) == t0

    def test_unanimous_neighbors(self):
        theta = ParamSetting(4, 4, 4096)
        rows = [(fv(i), theta) for i in range(5)]
        assert knn_oracle(rows, fv(100), k=5) == theta

    def test_matches_scan_oracle(self):
        rows = [(f, t) for f, t, _, _ in make_corpus(80, seed=10)]
        for i in range(25):
            query = fv(i + 1000)
            got = knn_oracle(rows, query, k=3)
            assert list(got.level_indices()) == knn_scan(rows, query, 3)

    def test_needs_k_rows(self):
        with pytest.raises(InsufficientDataError):
            knn_oracle([(fv(0), ParamSetting(1, 1, 1024))], fv(1), k=3)


class TestRSquared:
    def test_perfect_prediction(self):
        assert r_squared([1.0, 2.0, 5.0], [1.0, 2.0, 5.0]) == 1.0

    def test_mean_prediction_is_zero(self):
        y = [1.0, 2.0, 3.0]
        assert r_squared(y, [2.0, 2.0, 2.0]) == pytest.approx(0.0)

    def test_direct_formula(self):
        assert r_squared([1, 2, 3], [1, 2, 4]) == pytest.approx(0.5)

    def test_identical_actuals_rejected(self):
        with pytest.raises(UndefinedVarianceError):
            r_squared([2.0, 2.0], [1.0, 2.0])

    def test_never_exceeds_one(self):
        rng = np.random.default_rng(12)
        for _ in range(50):
            y = rng.normal(size=10)
            f = rng.normal(size=10)
            assert r_squared(y, f) <= 1.0


class TestSerialization:
    def test_round_trip_bit_exact(self):
        rows = [(f, t) for f, t, _, _ in make_corpus(40, seed=4)]
        m = train(rows, seed=7)
        back = deserialize(serialize(m))
        assert back.version == m.version
        np.testing.assert_array_equal(back.weights, m.weights)
        np.testing.assert_array_equal(back.feat_mean, m.feat_mean)
        np.testing.assert_array_equal(back.feat_std, m.feat_std)

    def test_fixed_size_for_any_training_set(self):
        for n in (10, 25, 40):
            rows = [(f, t) for f, t, _, _ in make_corpus(n, seed=n)]
            assert len(serialize(train(rows, seed=0, epochs=20))) == BLOB_LEN

    def test_blob_length_value(self):
        assert BLOB_LEN == 1412

    def test_corrupt_magic(self):
        blob = serialize(train(constant_rows(12), seed=0, epochs=5))
        with pytest.raises(BlobMagicError):
            deserialize(b"XXXX" + blob[4:])

    def test_wrong_count(self):
        blob = bytearray(serialize(train(constant_rows(12), seed=0, epochs=5)))
        blob[8] = 7  # weight-count field
        with pytest.raises(BlobCountError):
            deserialize(bytes(blob))

    def test_truncation(self):
        blob = serialize(train(constant_rows(12), seed=0, epochs=5))
        with pytest.raises(BlobLengthError):
            deserialize(blob[:100])
        with pytest.raises(BlobLengthError):
            deserialize(blob + b"\x00")


class TestAccuracy:
    def test_empty_rejected(self):
        m = train(constant_rows(12), seed=0, epochs=5)
        with pytest.raises(InsufficientDataError):
            accuracy(m, [])

    def test_constant_wrong_prediction_counts(self):
        wrong = np.zeros(N_WEIGHTS)
        wrong[-3:] = (0.0, 0.0, 0.0)  # always predicts (1, 1, 1KB)
        m = LearnedModel(version=1, weights=wrong,
                         feat_mean=np.zeros(6), feat_std=np.ones(6))
        rows = [(fv(1), ParamSetting(1, 1, 1024)),
                (fv(2), ParamSetting(2, 1, 1024)),
                (fv(3), ParamSetting(1, 1, 2048)),
                (fv(4), ParamSetting(1, 1, 1024))]
        assert accuracy(m, rows) == pytest.approx(0.5)


def test_reference_throughput_shape():
    theta = ParamSetting(4, 2, 8192)
    assert reference_throughput(theta, bw=30.0, fs=1e5) == pytest.approx(30.0)
