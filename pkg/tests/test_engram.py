import json

import numpy as np
import pytest

from src.data.events import Modality
from src.features.build_features import FeatureMatrix, balanced_indices, rate_features
from src.features.engram import (
    cross_modal_alignment,
    davies_bouldin,
    effective_dim,
    engram_report,
    participation_ratio,
    silhouette,
    zero_shot_transfer,
)
from src.utils.errors import ConfigError, MissingClassError, ShapeError

FOUR_POINTS = np.array([[0.0, 0.0], [0.0, 1.0], [10.0, 10.0], [10.0, 11.0]])
FOUR_LABELS = np.array([0, 0, 1, 1])


def _fm(rows, labels, modality="visual"):
    return FeatureMatrix(rows, labels, modality)


def _brute_silhouette(X, y):
    scores = []
    for i in range(len(X)):
        d = np.sqrt(((X - X[i]) ** 2).sum(axis=1))
        same = (y == y[i]) & (np.arange(len(X)) != i)
        if not same.any():
            scores.append(0.0)
            continue
        a = d[same].mean()
        b = min(d[y == c].mean() for c in np.unique(y) if c != y[i])
        scores.append(0.0 if max(a, b) == 0 else (b - a) / max(a, b))
    return float(np.mean(scores))


def _brute_davies_bouldin(X, y):
    classes = np.unique(y)
    cents = [X[y == c].mean(axis=0) for c in classes]
    S = [np.sqrt(((X[y == c] - m) ** 2).sum(axis=1)).mean() for c, m in zip(classes, cents)]
    worst = []
    for i in range(len(classes)):
        worst.append(
            max((S[i] + S[j]) / np.linalg.norm(cents[i] - cents[j]) for j in range(len(classes)) if j != i)
        )
    return float(np.mean(worst))


def _random_instance(rng):
    k = int(rng.integers(2, 5))
    n = int(rng.integers(2 * k + 2, 30))
    y = np.concatenate([np.arange(k), np.arange(k), rng.integers(0, k, size=n - 2 * k)])
    X = rng.normal(size=(n, 3)) + y[:, None] * 0.5
    return X, y


# === silhouette ===

def test_silhouette_four_points():
    assert silhouette(FOUR_POINTS, FOUR_LABELS) == pytest.approx(0.9293, abs=1e-3)


def test_silhouette_identical_points_is_zero():
    assert silhouette(np.zeros((4, 3)), FOUR_LABELS) == 0.0


def test_silhouette_matches_brute_force():
    rng = np.random.default_rng(0)
    for _ in range(50):
        X, y = _random_instance(rng)
        assert silhouette(X, y) == pytest.approx(_brute_silhouette(X, y), rel=1e-9, abs=1e-12)


def test_silhouette_flags_singletons():
    flags = []
    X = np.array([[0.0], [0.1], [5.0]])
    score = silhouette(X, np.array([0, 0, 1]), flags)
    assert score == pytest.approx(_brute_silhouette(X, np.array([0, 0, 1])), rel=1e-9)
    assert flags and "singleton" in flags[0]


def test_silhouette_needs_two_classes():
    with pytest.raises(MissingClassError):
        silhouette(np.ones((3, 2)), np.zeros(3))


# === Davies-Bouldin ===

def test_davies_bouldin_four_points():
    assert davies_bouldin(FOUR_POINTS, FOUR_LABELS) == pytest.approx(1.0 / np.sqrt(200.0), abs=1e-5)


def test_davies_bouldin_zero_scatter():
    X = np.array([[1.0, 1.0], [1.0, 1.0], [4.0, 5.0], [4.0, 5.0]])
    assert davies_bouldin(X, FOUR_LABELS) == 0.0


def test_davies_bouldin_coincident_centroids():
    flags = []
    X = np.array([[-1.0, 0.0], [1.0, 0.0], [0.0, -1.0], [0.0, 1.0]])
    assert davies_bouldin(X, FOUR_LABELS, flags) == float("inf")
    assert len(flags) == 1


def test_davies_bouldin_matches_brute_force():
    rng = np.random.default_rng(1)
    for _ in range(50):
        X, y = _random_instance(rng)
        assert davies_bouldin(X, y) == pytest.approx(_brute_davies_bouldin(X, y), rel=1e-9)


def test_cluster_metrics_ignore_sample_order():
    rng = np.random.default_rng(2)
    X, y = _random_instance(rng)
    perm = rng.permutation(len(y))
    assert silhouette(X[perm], y[perm]) == pytest.approx(silhouette(X, y), rel=1e-12)
    assert davies_bouldin(X[perm], y[perm]) == pytest.approx(davies_bouldin(X, y), rel=1e-12)


# === cross-modal alignment ===

def test_alignment_of_identical_features():
    rng = np.random.default_rng(3)
    F = _fm(rng.random((30, 8)), np.arange(30) % 3)
    matrix, mean_diag = cross_modal_alignment(F, _fm(F.rows, F.labels, "audio"))
    assert matrix.shape == (3, 3)
    np.testing.assert_allclose(np.diag(matrix), 1.0)
    assert mean_diag == pytest.approx(1.0)
    assert np.all((-1.0 <= matrix) & (matrix <= 1.0))


def test_alignment_of_orthogonal_centroids():
    labels = np.array([0, 0, 1, 1])
    vis = _fm(np.array([[1, 0, 0, 0], [1, 0, 0, 0], [0, 1, 0, 0], [0, 1, 0, 0]]), labels)
    aud = _fm(np.array([[0, 0, 1, 0], [0, 0, 1, 0], [0, 0, 0, 1], [0, 0, 0, 1]]), labels, "audio")
    _, mean_diag = cross_modal_alignment(vis, aud)
    assert mean_diag == 0.0


def test_alignment_of_independent_random_features():
    rng = np.random.default_rng(4)
    labels = np.arange(200) % 10
    vis = _fm(rng.normal(size=(200, 512)), labels)
    aud = _fm(rng.normal(size=(200, 512)), labels, "audio")
    assert abs(cross_modal_alignment(vis, aud)[1]) < 0.1


def test_alignment_errors():
    vis = _fm(np.ones((4, 3)), [0, 0, 1, 1])
    with pytest.raises(ShapeError):
        cross_modal_alignment(vis, _fm(np.ones((4, 2)), [0, 0, 1, 1], "audio"))
    with pytest.raises(MissingClassError):
        cross_modal_alignment(vis, _fm(np.ones((4, 3)), [0, 0, 2, 2], "audio"))


# === zero-shot transfer ===

def _separable(rng, per_class=20, classes=3, dim=5):
    labels = np.repeat(np.arange(classes), per_class)
    centres = np.eye(classes, dim) * 10.0
    return _fm(centres[labels] + rng.normal(0.0, 0.5, size=(len(labels), dim)), labels)


def test_transfer_on_separable_features():
    F = _separable(np.random.default_rng(5))
    assert zero_shot_transfer(F, F) > 0.95


def test_transfer_between_unrelated_features_is_chance():
    rng = np.random.default_rng(6)
    labels = np.repeat(np.arange(10), 50)
    src = _fm(rng.normal(size=(500, 16)), labels)
    dst = _fm(rng.normal(size=(500, 16)), rng.permutation(labels), "audio")
    assert zero_shot_transfer(src, dst) == pytest.approx(0.10, abs=0.05)


def test_transfer_is_deterministic():
    rng = np.random.default_rng(7)
    src, dst = _separable(rng), _separable(rng)
    assert zero_shot_transfer(src, dst, seed=3) == zero_shot_transfer(src, dst, seed=3)


# === effective dimensionality ===

def test_rank_one_features():
    rng = np.random.default_rng(8)
    F = _fm(np.outer(rng.normal(size=20), rng.normal(size=512)), np.arange(20) % 2)
    assert effective_dim(F) == pytest.approx(1 / 512)
    assert participation_ratio(F) == pytest.approx(1 / 512)


def test_isotropic_features_fill_the_space():
    rng = np.random.default_rng(9)
    F = _fm(rng.normal(size=(2000, 64)), np.arange(2000) % 4)
    assert effective_dim(F) > 0.5


def test_effective_dim_matches_eigendecomposition():
    rng = np.random.default_rng(10)
    for _ in range(5):
        X = rng.normal(size=(80, 12)) @ rng.normal(size=(12, 12))
        eig = np.sort(np.linalg.eigvalsh(np.cov(X, rowvar=False)))[::-1]
        k = int(np.searchsorted(np.cumsum(eig) / eig.sum(), 0.95)) + 1
        got = effective_dim(_fm(X, np.arange(80) % 2)) * 12
        assert abs(got - k) <= 1


def test_zero_variance_features():
    flags = []
    assert effective_dim(_fm(np.ones((5, 4)), np.arange(5) % 2), flags=flags) == 0.0
    assert flags
    with pytest.raises(ConfigError):
        effective_dim(_fm(np.ones((1, 4)), [0]))


# === sampling and rate features ===

def test_balanced_indices():
    labels = np.array([0, 0, 0, 1, 1, 2])
    idx, flags = balanced_indices(labels, 2, seed=0)
    assert np.bincount(labels[idx]).tolist() == [2, 2, 1]
    assert len(flags) == 1 and "class 2" in flags[0]
    with pytest.raises(MissingClassError):
        balanced_indices(labels, 2, classes=[0, 3])


def test_rate_features_are_spike_fractions(tiny_model, synth_data):
    model = tiny_model("audio", "hgrn", seed=2)
    ds = synth_data("audio", samples_per_class=6)
    F = rate_features(model, ds, per_class=5, seed=0)
    bins = model.spec.dims.audio_bins
    assert F.rows.shape == (20, 6)
    assert np.bincount(F.labels).tolist() == [5, 5, 5, 5]
    assert np.all((F.rows >= 0.0) & (F.rows <= 1.0))
    np.testing.assert_allclose(F.rows * bins, np.round(F.rows * bins), atol=1e-12)
    assert F.flags == []


def test_rate_features_missing_class(tiny_model, synth_data):
    ds = synth_data("audio", classes=3, samples_per_class=2)
    with pytest.raises(MissingClassError):
        rate_features(tiny_model("audio"), ds, per_class=2)


def test_feature_csv_round_trip(tmp_path):
    F = _fm(np.array([[0.25, 0.5], [1.0, 0.0]]), [3, 7], "audio")
    path = str(tmp_path / "features" / "M1-audio.csv")
    F.to_csv(path)
    with open(path) as fh:
        assert fh.readline().strip() == "0,1,label,modality"
    back = FeatureMatrix.from_csv(path)
    np.testing.assert_allclose(back.rows, F.rows)
    assert back.labels.tolist() == [3, 7]
    assert back.modality is Modality.AUDIO


# === report ===

def test_engram_report_with_both_modalities():
    rng = np.random.default_rng(11)
    vis, aud = _separable(rng), _separable(rng)
    aud = _fm(aud.rows, aud.labels, "audio")
    report = engram_report("M4", {Modality.VISUAL: vis, Modality.AUDIO: aud})
    assert [r.modality for r in report.rows] == [Modality.VISUAL, Modality.AUDIO]
    assert all(r.transfer_accuracy is not None for r in report.rows)
    assert len(report.alignment) == 3 and report.alignment_mean_diag > 0.9
    rows = report.table_rows()
    assert rows[0]["Model"] == "M4" and rows[1]["Modality"] == "audio"
    assert json.loads(report.model_dump_json())["model"] == "M4"


def test_single_modality_report_has_no_transfer():
    report = engram_report("M1", {Modality.AUDIO: _fm(_separable(np.random.default_rng(12)).rows, np.repeat(np.arange(3), 20), "audio")})
    assert report.alignment is None
    assert report.rows[0].transfer_accuracy is None
    assert -1.0 <= report.rows[0].silhouette <= 1.0
