# PCA + K-means representative selection over flattened environment grids
import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy import linalg
from scipy.spatial.distance import cdist
from safetensors import safe_open
from safetensors.numpy import load_file, save_file

from app.models import EnvironmentEntry, EnvironmentSet, grid_from_bitvector
from app.utils.rng import SeededRng
from app.controllers.NavigationPlannerController import is_navigable
from app.controllers.ResponseCodesController import ConfigError, ContractError, DataError, ShapeError

logger = logging.getLogger(__name__)

KMEANS_MAX_ITERATIONS = 300
BINARIZE_THRESHOLD = 0.5
CHECKPOINT_FORMAT = "ses-pca"
CHECKPOINT_VERSION = "1"


@dataclass(frozen=True, eq=False)
class PcaModel:
    mean: np.ndarray
    components: np.ndarray
    explained_variance: np.ndarray

    def __post_init__(self) -> None:
        k, dim = self.components.shape
        if self.mean.shape != (dim,) or self.explained_variance.shape != (k,):
            raise ShapeError(f"inconsistent PCA shapes: mean {self.mean.shape}, variance {self.explained_variance.shape}")
        if not np.allclose(self.components @ self.components.T, np.eye(k), atol=1e-8):
            raise ContractError("principal components must be orthonormal")
        if np.any(np.diff(self.explained_variance) > 1e-12):
            raise ContractError("explained variance must be non-increasing")

    @property
    def k(self) -> int:
        return self.components.shape[0]


@dataclass(frozen=True, eq=False)
class KmeansResult:
    centroids: np.ndarray
    assignments: np.ndarray
    inertia: float
    iterations: int = 0
    inertia_history: Tuple[float, ...] = ()

    def __post_init__(self) -> None:
        counts = np.bincount(self.assignments, minlength=self.centroids.shape[0])
        if np.any(counts == 0):
            raise ContractError("every cluster must have at least one member")

    def members(self, cluster: int) -> np.ndarray:
        return np.flatnonzero(self.assignments == cluster)


def pca_fit(data, k: int) -> PcaModel:
    """
    Principal axes of mean-centred data via SVD.

    Each component is signed so that its largest-magnitude entry is positive.

    Args:
        data: (n, d) array-like, n >= 2.
        k (int): Number of components, 1 <= k <= min(n - 1, d).

    Returns:
        PcaModel: Fitted model.
    """
    x = np.asarray(data, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2:
        raise ContractError(f"PCA needs at least two row vectors, got shape {x.shape}")
    count, dim = x.shape
    if not 1 <= k <= min(count - 1, dim):
        raise ContractError(f"k={k} must lie in [1, {min(count - 1, dim)}] for {count} vectors")
    mean = x.mean(axis=0)
    _, singular, vt = linalg.svd(x - mean, full_matrices=False)
    components = vt[:k].copy()
    leading = components[np.arange(k), np.argmax(np.abs(components), axis=1)]
    components *= np.where(leading < 0, -1.0, 1.0)[:, None]
    variance = singular[:k] ** 2 / (count - 1)
    return PcaModel(mean=mean, components=components, explained_variance=variance)


def pca_transform(model: PcaModel, vectors) -> np.ndarray:
    """components . (v - mean) for one vector or a batch of rows."""
    v = np.asarray(vectors, dtype=np.float64)
    if v.shape[-1] != model.mean.size or v.ndim > 2:
        raise ShapeError(f"expected vectors of width {model.mean.size}, got {v.shape}")
    return (v - model.mean) @ model.components.T


def pca_reconstruct(model: PcaModel, coefficients) -> np.ndarray:
    """components^T . c + mean for one coefficient vector or a batch of rows."""
    c = np.asarray(coefficients, dtype=np.float64)
    if c.shape[-1] != model.k or c.ndim > 2:
        raise ShapeError(f"expected coefficient vectors of width {model.k}, got {c.shape}")
    return c @ model.components + model.mean


def _kmeans_plus_plus(points: np.ndarray, m: int, rng: SeededRng) -> np.ndarray:
    count = points.shape[0]
    chosen = [int(rng.integers(count))]
    for _ in range(1, m):
        d2 = cdist(points, points[chosen], "sqeuclidean").min(axis=1)
        total = d2.sum()
        if total <= 0.0:
            chosen.append(int(rng.integers(count)))
        else:
            chosen.append(int(rng.choice(count, p=d2 / total)))
    return points[chosen].copy()


def _repair_empty(points: np.ndarray, assignments: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    # Empty cluster takes the member of the largest cluster farthest from its centroid
    assignments = assignments.copy()
    m = centroids.shape[0]
    for cluster in range(m):
        counts = np.bincount(assignments, minlength=m)
        if counts[cluster]:
            continue
        largest = int(np.argmax(counts))
        members = np.flatnonzero(assignments == largest)
        distances = ((points[members] - centroids[largest]) ** 2).sum(axis=1)
        assignments[members[int(np.argmax(distances))]] = cluster
    return assignments


def _centroids(points: np.ndarray, assignments: np.ndarray, m: int) -> np.ndarray:
    return np.stack([points[assignments == cluster].mean(axis=0) for cluster in range(m)])


def kmeans(points, m: int, rng: SeededRng, max_iterations: int = KMEANS_MAX_ITERATIONS) -> KmeansResult:
    """
    K-means with k-means++ seeding and Lloyd iterations.

    Iterates until the assignment stops changing or `max_iterations`.
    Inertia is checked to be non-increasing after every centroid update.

    Args:
        points: (n, k) array-like with n >= m.
        m (int): Number of clusters.
        rng (SeededRng): Seeding source.

    Returns:
        KmeansResult: Centroids, assignments and inertia.
    """
    x = np.asarray(points, dtype=np.float64)
    if x.ndim != 2:
        raise ShapeError(f"expected a 2-D point array, got {x.shape}")
    if not 1 <= m <= x.shape[0]:
        raise ContractError(f"need 1 <= m <= {x.shape[0]} points, got m={m}")

    centroids = _kmeans_plus_plus(x, m, rng)
    assignments = None
    history = []
    iterations = 0
    for iterations in range(1, max_iterations + 1):
        updated = np.argmin(cdist(x, centroids, "sqeuclidean"), axis=1)
        updated = _repair_empty(x, updated, centroids)
        if assignments is not None and np.array_equal(updated, assignments):
            break
        assignments = updated
        centroids = _centroids(x, assignments, m)
        inertia = float(((x - centroids[assignments]) ** 2).sum())
        if history and inertia > history[-1] + 1e-9 * max(1.0, history[-1]):
            raise ContractError(f"k-means inertia increased at iteration {iterations}: {history[-1]} -> {inertia}")
        history.append(inertia)

    return KmeansResult(
        centroids=centroids,
        assignments=assignments,
        inertia=float(((x - centroids[assignments]) ** 2).sum()),
        iterations=iterations,
        inertia_history=tuple(history),
    )


def _binarized_reconstruction(pca: PcaModel, coefficients: np.ndarray):
    bits = (pca_reconstruct(pca, coefficients) >= BINARIZE_THRESHOLD).astype(np.uint8)
    return grid_from_bitvector(bits)


def select_representatives(
    envs: EnvironmentSet, pca: PcaModel, m: int, n: int, rng: SeededRng
) -> EnvironmentSet:
    """
    Pick n members from each of m clusters in PCA space and reconstruct them.

    Members are sampled uniformly (with replacement only when a cluster is
    smaller than n). Reconstructions are binarized at 0.5; one that is not
    navigable is replaced by the member's original grid, then by another
    member of the same cluster.

    Returns:
        EnvironmentSet: Synthesized set of exactly m * n grids.
    """
    reduced = pca_transform(pca, envs.bitvectors())
    clusters = kmeans(reduced, m, rng.fork("kmeans"))
    picker = rng.fork("members")
    entries = []
    for cluster in range(m):
        members = clusters.members(cluster)
        picks = picker.choice(members, size=n, replace=len(members) < n)
        for pick in picks:
            candidates = [int(pick)] + [int(other) for other in members if other != pick]
            chosen = None
            for index in candidates:
                reconstructed = _binarized_reconstruction(pca, reduced[index])
                if is_navigable(reconstructed):
                    chosen = (index, reconstructed, "pca")
                    break
                if is_navigable(envs[index].grid):
                    chosen = (index, envs[index].grid, "pca-original")
                    break
            if chosen is None:
                raise DataError(f"cluster {cluster} has no navigable member or reconstruction", "GRID_NOT_NAVIGABLE")
            index, grid, provenance = chosen
            entries.append(
                EnvironmentEntry(
                    env_id=f"syn-{len(entries):03d}",
                    grid=grid,
                    provenance=provenance,
                    source_id=envs[index].env_id,
                    source_index=index,
                )
            )
    return EnvironmentSet(entries=tuple(entries), kind="synthesized")


def save_pca(model: PcaModel, file_path: str) -> None:
    tensors = {
        "mean": np.ascontiguousarray(model.mean),
        "components": np.ascontiguousarray(model.components),
        "explained_variance": np.ascontiguousarray(model.explained_variance),
    }
    metadata = {"format": CHECKPOINT_FORMAT, "format_version": CHECKPOINT_VERSION, "components": str(model.k)}
    save_file(tensors, file_path, metadata=metadata)


def load_pca(file_path: str) -> PcaModel:
    try:
        with safe_open(file_path, framework="numpy") as f:
            metadata = f.metadata() or {}
        if metadata.get("format") != CHECKPOINT_FORMAT or metadata.get("format_version") != CHECKPOINT_VERSION:
            raise DataError(f"{file_path}: not a version {CHECKPOINT_VERSION} PCA checkpoint", "CHECKPOINT_INVALID")
        tensors = load_file(file_path)
        return PcaModel(
            mean=tensors["mean"], components=tensors["components"], explained_variance=tensors["explained_variance"]
        )
    except DataError:
        raise
    except Exception as e:
        logger.error(f"Error loading PCA checkpoint {file_path}: {str(e)}")
        raise DataError(f"{file_path}: {str(e)}", "CHECKPOINT_INVALID")


class ClusterSynthesisPipeline:
    def __init__(self, components: int = 100, clusters: int = 20, per_cluster: int = 5, log_level: int = 0) -> None:
        """
        Args:
            components (int): Requested PCA components k.
            clusters (int): Number of clusters m.
            per_cluster (int): Environments sampled per cluster n.
            log_level (int): Logging verbosity level
        """
        self.components = components
        self.clusters = clusters
        self.per_cluster = per_cluster
        self.log_level = log_level

    def synthesize(
        self, challenging: EnvironmentSet, count: int, rng: SeededRng, checkpoint_path: Optional[str] = None
    ) -> Tuple[EnvironmentSet, PcaModel]:
        """Fit PCA on the challenging set and select m * n representatives; k is capped at N - 1."""
        if self.clusters * self.per_cluster != count:
            raise ConfigError(
                f"clusters ({self.clusters}) x per-cluster ({self.per_cluster}) must equal the synthesis count {count}",
                "CONFIG_METHOD_MISMATCH",
            )
        if len(challenging) < max(2, self.clusters):
            raise DataError(
                f"PCA synthesis with {self.clusters} clusters needs at least {max(2, self.clusters)} "
                f"challenging environments, got {len(challenging)}",
                "CHALLENGING_SET_TOO_SMALL",
            )
        k = min(self.components, len(challenging) - 1)
        pca = pca_fit(challenging.bitvectors(), k)
        if checkpoint_path:
            save_pca(pca, checkpoint_path)
        if self.log_level >= 1:
            retained = pca.explained_variance.sum()
            logger.info(f"PCA kept {k} components (total variance {retained:.3f}); clustering into {self.clusters}")
        synthesized = select_representatives(challenging, pca, self.clusters, self.per_cluster, rng)
        if self.log_level >= 2:
            fallbacks = sum(entry.provenance != "pca" for entry in synthesized)
            logger.info(f"{fallbacks} representatives fell back to original grids")
        return synthesized, pca
