"""
Shallow learners over spectral profiles: logistic regression, linear SVM,
feature standardization and k-means.

Profiles span many orders of magnitude, so the detectors and the cloaking score
see ``log1p`` profiles z-scored with statistics fitted on the training set.
Both trainers are full-batch, start from zero weights and are deterministic.

.. moduleauthor:: Team Indigo
"""

import json
import logging
from dataclasses import dataclass, field
from typing import List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ValidationError
from sklearn.preprocessing import StandardScaler

from specfid.config import (
    CS_EPOCHS,
    CS_LR,
    KMEANS_MAX_ITER,
    PREPROCESS,
    STD_FLOOR,
    SVM_EPOCHS,
    SVM_LR,
    SVM_REG,
)
from specfid.errors import DataError

logger = logging.getLogger(__name__)

ModelKind = Literal["logreg", "linsvm"]


def _as_matrix(features) -> np.ndarray:
    try:
        matrix = np.asarray(features, dtype=np.float64)
    except ValueError as e:
        raise ValueError(f"Features must be rectangular: {e}") from e
    if matrix.ndim == 1:
        matrix = matrix[:, None]
    if matrix.ndim != 2 or matrix.shape[0] == 0 or matrix.shape[1] == 0:
        raise ValueError(f"Features must be a non-empty 2D matrix, got shape {matrix.shape}")
    return matrix


def _as_labels(labels, count: int) -> np.ndarray:
    y = np.asarray(labels, dtype=np.float64).ravel()
    if y.size != count:
        raise ValueError(f"Got {y.size} labels for {count} samples")
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("Labels must be 0 or 1")
    if y.min() == y.max():
        raise ValueError("Training needs at least one sample of each class")
    return y


def preprocess(profiles) -> np.ndarray:
    """log1p of raw profiles, the first half of the ``log1p+zscore`` pipeline."""
    return np.log1p(_as_matrix(profiles))


@dataclass(frozen=True)
class Standardizer:
    """Per-feature z-scoring backed by a fitted ``StandardScaler``.

    Deviations below ``STD_FLOOR`` are replaced by 1, so constant features map to 0.
    """

    scaler: StandardScaler

    @property
    def mean(self) -> np.ndarray:
        return self.scaler.mean_

    @property
    def std(self) -> np.ndarray:
        return self.scaler.scale_

    @classmethod
    def from_stats(cls, mean, std) -> "Standardizer":
        """Rebuild a standardizer from stored per-feature mean and deviation."""
        mean = np.asarray(mean, dtype=np.float64).ravel()
        std = np.asarray(std, dtype=np.float64).ravel()
        if mean.size != std.size or mean.size == 0:
            raise ValueError("Standardizer statistics must be non-empty and of equal size")
        scaler = StandardScaler()
        scaler.mean_ = mean
        scaler.scale_ = np.where(std < STD_FLOOR, 1.0, std)
        scaler.var_ = std**2
        scaler.n_features_in_ = mean.size
        scaler.n_samples_seen_ = 0
        return cls(scaler)

    def apply(self, features) -> np.ndarray:
        matrix = _as_matrix(features)
        if matrix.shape[1] != self.mean.size:
            raise ValueError(f"Expected {self.mean.size} features, got {matrix.shape[1]}")
        return self.scaler.transform(matrix)


def fit_standardizer(features) -> Standardizer:
    """Fit per-feature mean and population deviation.

    :param features: Non-empty rectangular (samples, features) data
    :type features: numpy.ndarray
    :return: The fitted standardizer
    :rtype: Standardizer
    :raises ValueError: On ragged or empty input
    """
    scaler = StandardScaler().fit(_as_matrix(features))
    scaler.scale_ = np.where(np.sqrt(scaler.var_) < STD_FLOOR, 1.0, scaler.scale_)
    return Standardizer(scaler)


@dataclass
class LinearModel:
    """Linear separator ``w . x + b``; class 1 when the decision is >= 0."""

    weights: np.ndarray
    bias: float
    kind: ModelKind
    loss_history: List[float] = field(default_factory=list, repr=False)

    def decision_function(self, features) -> np.ndarray:
        return _as_matrix(features) @ self.weights + self.bias

    def predict(self, features) -> np.ndarray:
        return (self.decision_function(features) >= 0.0).astype(np.int64)

    def accuracy(self, features, labels) -> float:
        return float(np.mean(self.predict(features) == np.asarray(labels).ravel()))


def _sigmoid(z: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def logreg_loss(weights: np.ndarray, bias: float, x: np.ndarray, y: np.ndarray) -> float:
    """Mean binary cross entropy, evaluated stably through logaddexp."""
    z = x @ weights + bias
    return float(np.mean(np.logaddexp(0.0, z) - y * z))


def logreg_gradient(
    weights: np.ndarray, bias: float, x: np.ndarray, y: np.ndarray
) -> Tuple[np.ndarray, float]:
    """Gradient of :func:`logreg_loss`: mean((sigmoid(z) - y) x)."""
    residual = _sigmoid(x @ weights + bias) - y
    return x.T @ residual / len(y), float(np.mean(residual))


def train_logreg(
    features, labels, epochs: int = CS_EPOCHS, lr: float = CS_LR, seed: int = 0
) -> Tuple[LinearModel, float]:
    """Full-batch gradient descent on the mean binary cross entropy.

    Training starts at zero weights and visits samples in a fixed order, so the
    result depends only on the data; ``seed`` is accepted for interface symmetry
    with the other trainers.

    :param features: (samples, features) matrix
    :type features: numpy.ndarray
    :param labels: 0/1 labels with both classes present
    :type labels: numpy.ndarray
    :param epochs: Number of full-batch steps
    :type epochs: int
    :param lr: Step size
    :type lr: float
    :param seed: Unused by the deterministic trainer
    :type seed: int
    :return: The model and its training accuracy at threshold 0.5
    :rtype: tuple[LinearModel, float]
    :raises ValueError: If only one class is present
    """
    x = _as_matrix(features)
    y = _as_labels(labels, x.shape[0])
    weights = np.zeros(x.shape[1])
    bias = 0.0
    history = [logreg_loss(weights, bias, x, y)]
    for _ in range(epochs):
        grad_w, grad_b = logreg_gradient(weights, bias, x, y)
        weights = weights - lr * grad_w
        bias -= lr * grad_b
        history.append(logreg_loss(weights, bias, x, y))
    model = LinearModel(weights, bias, "logreg", history)
    accuracy = model.accuracy(x, y)
    logger.debug("Logistic regression: %d epochs, train accuracy %.4f", epochs, accuracy)
    return model, accuracy


def hinge_objective(
    weights: np.ndarray, bias: float, x: np.ndarray, y: np.ndarray, reg: float
) -> float:
    """Mean hinge loss on +/-1 targets plus (reg / 2) ||w||^2."""
    signs = 2.0 * y - 1.0
    margins = signs * (x @ weights + bias)
    return float(np.mean(np.maximum(0.0, 1.0 - margins)) + 0.5 * reg * weights @ weights)


def hinge_subgradient(
    weights: np.ndarray, bias: float, x: np.ndarray, y: np.ndarray, reg: float
) -> Tuple[np.ndarray, float]:
    """Subgradient of :func:`hinge_objective`; exact away from margin = 1."""
    signs = 2.0 * y - 1.0
    active = (signs * (x @ weights + bias) < 1.0).astype(np.float64)
    coeff = -signs * active / len(y)
    return x.T @ coeff + reg * weights, float(np.sum(coeff))


def train_linsvm(
    features,
    labels,
    epochs: int = SVM_EPOCHS,
    lr: float = SVM_LR,
    reg: float = SVM_REG,
    seed: int = 0,
) -> Tuple[LinearModel, float]:
    """Full-batch subgradient descent on the L2-regularized hinge loss.

    :param features: (samples, features) matrix
    :type features: numpy.ndarray
    :param labels: 0/1 labels with both classes present
    :type labels: numpy.ndarray
    :param epochs: Number of full-batch steps
    :type epochs: int
    :param lr: Step size
    :type lr: float
    :param reg: L2 regularization strength
    :type reg: float
    :param seed: Unused by the deterministic trainer
    :type seed: int
    :return: The model and its training accuracy
    :rtype: tuple[LinearModel, float]
    :raises ValueError: If only one class is present
    """
    x = _as_matrix(features)
    y = _as_labels(labels, x.shape[0])
    weights = np.zeros(x.shape[1])
    bias = 0.0
    history = [hinge_objective(weights, bias, x, y, reg)]
    for _ in range(epochs):
        grad_w, grad_b = hinge_subgradient(weights, bias, x, y, reg)
        weights = weights - lr * grad_w
        bias -= lr * grad_b
        history.append(hinge_objective(weights, bias, x, y, reg))
    model = LinearModel(weights, bias, "linsvm", history)
    accuracy = model.accuracy(x, y)
    logger.debug("Linear SVM: %d epochs, train accuracy %.4f", epochs, accuracy)
    return model, accuracy


@dataclass
class KMeansResult:
    """Centroids, per-sample assignments and the final inertia.

    ``profile_means`` is only filled by :func:`cluster_by_top_frequency` and holds
    the mean full profile of every cluster.
    """

    centroids: np.ndarray
    assignments: np.ndarray
    inertia: float
    inertia_history: List[float] = field(default_factory=list, repr=False)
    feature_index: Optional[int] = None
    profile_means: Optional[np.ndarray] = None


def _squared_distances(x: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    return np.sum((x[:, None, :] - centroids[None, :, :]) ** 2, axis=2)


def _kmeans_plusplus(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n_samples = x.shape[0]
    centroids = np.empty((k, x.shape[1]))
    centroids[0] = x[rng.integers(0, n_samples)]
    for i in range(1, k):
        dist_sq = _squared_distances(x, centroids[:i]).min(axis=1)
        total = dist_sq.sum()
        if total > 0:
            centroids[i] = x[rng.choice(n_samples, p=dist_sq / total)]
        else:
            centroids[i] = x[rng.integers(0, n_samples)]
    return centroids


def kmeans(profiles, k: int, seed: int = 0, max_iter: int = KMEANS_MAX_ITER) -> KMeansResult:
    """k-means++ seeded Lloyd iteration.

    Iterates until the assignment no longer changes or ``max_iter`` is reached.
    An empty cluster keeps its previous centroid, so inertia never increases.

    :param profiles: (samples, features) data
    :type profiles: numpy.ndarray
    :param k: Number of clusters, at most the sample count
    :type k: int
    :param seed: Seed of the k-means++ draws
    :type seed: int
    :param max_iter: Iteration cap
    :type max_iter: int
    :return: The clustering
    :rtype: KMeansResult
    :raises ValueError: If k exceeds the sample count or is below 1
    """
    x = _as_matrix(profiles)
    if k < 1 or k > x.shape[0]:
        raise ValueError(f"k must be in 1..{x.shape[0]}, got {k}")
    rng = np.random.default_rng(seed)
    centroids = _kmeans_plusplus(x, k, rng)
    assignments = _squared_distances(x, centroids).argmin(axis=1)
    history: List[float] = []
    for iteration in range(max_iter):
        for j in range(k):
            members = assignments == j
            if np.any(members):
                centroids[j] = x[members].mean(axis=0)
            else:
                logger.warning("k-means cluster %d is empty at iteration %d", j, iteration)
        distances = _squared_distances(x, centroids)
        history.append(float(distances[np.arange(len(x)), assignments].sum()))
        updated = distances.argmin(axis=1)
        if np.array_equal(updated, assignments):
            break
        assignments = updated
    inertia = float(_squared_distances(x, centroids)[np.arange(len(x)), assignments].sum())
    return KMeansResult(centroids, assignments, inertia, history)


def top_populated_column(profiles: np.ndarray) -> int:
    """Highest profile index that is non-zero for at least one sample."""
    nonzero = np.flatnonzero(np.any(profiles > 0, axis=0))
    return int(nonzero[-1]) if nonzero.size else profiles.shape[1] - 1


def cluster_by_top_frequency(profiles, k: int = 2, seed: int = 0) -> KMeansResult:
    """Cluster profiles by the log1p magnitude of their highest populated frequency.

    Clusters are renumbered by increasing centroid so cluster 0 holds the
    weakest high-frequency content.

    :param profiles: (samples, L) raw profiles
    :type profiles: numpy.ndarray
    :param k: Number of clusters
    :type k: int
    :param seed: Seed of the k-means++ draws
    :type seed: int
    :return: Clustering of the 1D feature with per-cluster mean full profiles
    :rtype: KMeansResult
    """
    matrix = _as_matrix(profiles)
    column = top_populated_column(matrix)
    result = kmeans(np.log1p(matrix[:, [column]]), k, seed)
    order = np.argsort(result.centroids[:, 0], kind="stable")
    relabel = np.empty(k, dtype=np.int64)
    relabel[order] = np.arange(k)
    assignments = relabel[result.assignments]
    means = np.vstack(
        [
            matrix[assignments == j].mean(axis=0) if np.any(assignments == j)
            else np.zeros(matrix.shape[1])
            for j in range(k)
        ]
    )
    return KMeansResult(
        centroids=result.centroids[order],
        assignments=assignments,
        inertia=result.inertia,
        inertia_history=result.inertia_history,
        feature_index=column,
        profile_means=means,
    )


class StandardizerArtifact(BaseModel):
    mean: List[float]
    std: List[float]


class ModelArtifact(BaseModel):
    """JSON form of a trained detector and its preprocessing."""

    kind: ModelKind
    weights: List[float]
    bias: float
    standardizer: StandardizerArtifact
    preprocess: str = PREPROCESS


def save_model(path: str, model: LinearModel, standardizer: Standardizer) -> None:
    """Write a detector and its standardizer as a model artifact JSON file."""
    artifact = ModelArtifact(
        kind=model.kind,
        weights=model.weights.tolist(),
        bias=float(model.bias),
        standardizer=StandardizerArtifact(
            mean=standardizer.mean.tolist(), std=standardizer.std.tolist()
        ),
    )
    with open(path, "w", encoding="utf-8") as f:
        f.write(artifact.model_dump_json(indent=2))
        f.write("\n")


def load_model(path: str) -> Tuple[LinearModel, Standardizer]:
    """Read a model artifact written by :func:`save_model`.

    :raises DataError: If the file is missing or malformed
    """
    try:
        with open(path, "r", encoding="utf-8") as f:
            artifact = ModelArtifact.model_validate(json.load(f))
    except (OSError, json.JSONDecodeError, ValidationError) as e:
        raise DataError(f"Invalid model artifact {path}: {e}") from e
    model = LinearModel(np.asarray(artifact.weights), artifact.bias, artifact.kind)
    try:
        standardizer = Standardizer.from_stats(
            artifact.standardizer.mean, artifact.standardizer.std
        )
    except ValueError as e:
        raise DataError(f"Invalid model artifact {path}: {e}") from e
    if model.weights.size != standardizer.mean.size:
        raise DataError(f"Invalid model artifact {path}: weights and standardizer differ in size")
    return model, standardizer
