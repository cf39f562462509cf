"""
ENGRAM QUALITY ANALYSIS
=======================

Clustering quality of rate features per modality (silhouette, Davies-Bouldin),
class-centroid alignment across modalities, a zero-shot linear readout trained
on one modality and scored on the other, and the effective dimensionality of
the feature space.
"""

from __future__ import annotations

import warnings

import numpy as np
from pydantic import BaseModel, ConfigDict
from scipy.spatial.distance import cdist
from sklearn.decomposition import PCA
from sklearn.exceptions import ConvergenceWarning
from sklearn.linear_model import LogisticRegression
from sklearn.metrics import davies_bouldin_score, silhouette_samples
from sklearn.metrics.pairwise import cosine_similarity

from src.data.events import Modality
from src.features.build_features import FeatureMatrix
from src.utils.errors import ConfigError, MissingClassError, ShapeError
from src.utils.logger import get_logger

logger = get_logger(__name__)

READOUT_L2 = 1e-3
READOUT_ITERS = 500
DEGENERATE_DB = 1e3


def _unpack(features: FeatureMatrix | np.ndarray, labels: np.ndarray | None) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(features, FeatureMatrix):
        return features.rows, features.labels
    if labels is None:
        raise ConfigError("Raw feature arrays need labels")
    return np.asarray(features, dtype=np.float64), np.asarray(labels)


def _flag(flags: list[str] | None, msg: str) -> None:
    logger.warning(f"⚠️ {msg}")
    if flags is not None:
        flags.append(msg)


def silhouette(
    features: FeatureMatrix | np.ndarray,
    labels: np.ndarray | None = None,
    flags: list[str] | None = None,
) -> float:
    """
    Mean Euclidean silhouette over all samples.

    Members of singleton classes score 0 (flagged). So do samples whose intra
    and nearest-class distances are both zero.
    """
    X, y = _unpack(features, labels)
    classes, counts = np.unique(y, return_counts=True)
    if len(classes) < 2:
        raise MissingClassError("silhouette needs at least 2 classes")
    if np.any(counts == 1):
        _flag(flags, f"silhouette: singleton classes {classes[counts == 1].tolist()} scored 0")
    if len(classes) == len(y):
        return 0.0
    dist = cdist(X, X, metric="euclidean")
    return float(np.mean(silhouette_samples(dist, y, metric="precomputed")))


def davies_bouldin(
    features: FeatureMatrix | np.ndarray,
    labels: np.ndarray | None = None,
    flags: list[str] | None = None,
) -> float:
    """
    Davies-Bouldin index (lower is better).

    Coincident class centroids make the ratio infinite: +inf is returned and
    flagged. Very large finite values are kept verbatim and flagged.
    """
    X, y = _unpack(features, labels)
    classes = np.unique(y)
    if len(classes) < 2:
        raise MissingClassError("davies_bouldin needs at least 2 classes")
    centroids = np.stack([X[y == c].mean(axis=0) for c in classes])
    gaps = cdist(centroids, centroids)
    np.fill_diagonal(gaps, np.inf)
    if np.any(gaps == 0):
        _flag(flags, "davies_bouldin: coincident class centroids, index is infinite")
        return float("inf")
    score = float(davies_bouldin_score(X, y))
    if score > DEGENERATE_DB:
        _flag(flags, f"davies_bouldin: near-coincident centroids (DB={score:.1f})")
    return score


def _centroids(F: FeatureMatrix, classes: np.ndarray) -> np.ndarray:
    present = set(F.classes.tolist())
    missing = [int(c) for c in classes if int(c) not in present]
    if missing:
        raise MissingClassError(f"{F.modality.value} features have no samples for classes {missing}")
    return np.stack([F.rows[F.labels == c].mean(axis=0) for c in classes])


def cross_modal_alignment(
    F_vis: FeatureMatrix,
    F_aud: FeatureMatrix,
    classes: list[int] | np.ndarray | None = None,
) -> tuple[np.ndarray, float]:
    """
    Cosine similarity between visual and audio class centroids.

    Returns:
        tuple: (matrix[c_vis, c_aud], mean of the matched-class diagonal)
    """
    if F_vis.dim != F_aud.dim:
        raise ShapeError(f"Feature dims differ: {F_vis.dim} vs {F_aud.dim}")
    if classes is None:
        classes = np.union1d(F_vis.classes, F_aud.classes)
    classes = np.asarray(classes)
    matrix = np.clip(cosine_similarity(_centroids(F_vis, classes), _centroids(F_aud, classes)), -1.0, 1.0)
    return matrix, float(np.mean(np.diag(matrix)))


def zero_shot_transfer(F_src: FeatureMatrix, F_dst: FeatureMatrix, seed: int = 0) -> float:
    """
    Accuracy on ``F_dst`` of a multinomial logistic classifier fit on ``F_src``.

    The classifier is L-BFGS with L2 strength 1e-3 on the mean loss (C = 1/(λn))
    and 500 iterations.
    """
    if F_src.dim != F_dst.dim:
        raise ShapeError(f"Feature dims differ: {F_src.dim} vs {F_dst.dim}")
    if len(F_src.classes) < 2:
        return float(np.mean(F_dst.labels == F_src.classes[0]))
    clf = LogisticRegression(C=1.0 / (READOUT_L2 * len(F_src)), max_iter=READOUT_ITERS, random_state=seed)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConvergenceWarning)
        clf.fit(F_src.rows, F_src.labels)
    return float(np.mean(clf.predict(F_dst.rows) == F_dst.labels))


def _spectrum(F: FeatureMatrix) -> np.ndarray | None:
    if len(F) < 2:
        raise ConfigError("Effective dimensionality needs at least 2 samples")
    if float(np.var(F.rows, axis=0).sum()) <= 0.0:
        return None
    return PCA().fit(F.rows).explained_variance_


def effective_dim(F: FeatureMatrix, var_threshold: float = 0.95, flags: list[str] | None = None) -> float:
    """Fraction of the feature dim spanned by the principal components holding ``var_threshold`` of the variance."""
    spectrum = _spectrum(F)
    if spectrum is None:
        _flag(flags, f"effective_dim: zero-variance {F.modality.value} features")
        return 0.0
    cumulative = np.cumsum(spectrum) / spectrum.sum()
    k = min(int(np.searchsorted(cumulative, var_threshold - 1e-12)) + 1, len(cumulative))
    return k / F.dim


def participation_ratio(F: FeatureMatrix) -> float:
    """(Σλ)² / Σλ² of the covariance spectrum, as a fraction of the feature dim."""
    spectrum = _spectrum(F)
    if spectrum is None:
        return 0.0
    return float(spectrum.sum() ** 2 / np.sum(spectrum**2)) / F.dim


# === REPORTS ===

class ModalityEngram(BaseModel):
    model_config = ConfigDict(ser_json_inf_nan="constants")

    model: str
    modality: Modality
    samples: int
    silhouette: float
    davies_bouldin: float
    transfer_accuracy: float | None = None
    effective_dim_fraction: float
    participation_ratio: float
    flags: list[str] = []


class EngramReport(BaseModel):
    model_config = ConfigDict(ser_json_inf_nan="constants")

    model: str
    rows: list[ModalityEngram]
    alignment: list[list[float]] | None = None
    alignment_mean_diag: float | None = None

    def table_rows(self) -> list[dict]:
        return [
            {
                "Model": self.model,
                "Modality": row.modality.value,
                "Silhouette": row.silhouette,
                "DB": row.davies_bouldin,
                "Transfer": row.transfer_accuracy,
                "AlignmentMeanDiag": self.alignment_mean_diag,
                "EffDimFraction": row.effective_dim_fraction,
            }
            for row in self.rows
        ]


def modality_engram(model: str, F: FeatureMatrix, var_threshold: float = 0.95) -> ModalityEngram:
    flags = list(F.flags)
    return ModalityEngram(
        model=model,
        modality=F.modality,
        samples=len(F),
        silhouette=silhouette(F, flags=flags),
        davies_bouldin=davies_bouldin(F, flags=flags),
        effective_dim_fraction=effective_dim(F, var_threshold, flags),
        participation_ratio=participation_ratio(F),
        flags=flags,
    )


def engram_report(
    model: str,
    features: dict[Modality, FeatureMatrix],
    var_threshold: float = 0.95,
    seed: int = 0,
) -> EngramReport:
    """
    Per-modality metrics for one model; with both modalities present, adds
    the alignment matrix and the transfer in each direction.
    """
    rows = {Modality(m): modality_engram(model, F, var_threshold) for m, F in features.items()}
    alignment, mean_diag = None, None
    vis, aud = features.get(Modality.VISUAL), features.get(Modality.AUDIO)
    if vis is not None and aud is not None:
        matrix, mean_diag = cross_modal_alignment(vis, aud)
        alignment = matrix.tolist()
        rows[Modality.VISUAL].transfer_accuracy = zero_shot_transfer(vis, aud, seed)
        rows[Modality.AUDIO].transfer_accuracy = zero_shot_transfer(aud, vis, seed)
    report = EngramReport(model=model, rows=list(rows.values()), alignment=alignment, alignment_mean_diag=mean_diag)
    for row in report.rows:
        logger.info(
            f"📊 Engram [{model}/{row.modality.value}] sil={row.silhouette:.3f} "
            f"DB={row.davies_bouldin:.3f} effdim={row.effective_dim_fraction:.4f}"
        )
    return report
