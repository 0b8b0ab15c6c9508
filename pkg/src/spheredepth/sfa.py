"""
Spatial feature alignment: assign every ERP feature pixel to the tangent patch
whose feature vector is most cosine-similar, and use that assignment to lift
per-patch tables into ERP-shaped maps.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, ZeroNormVector

__all__ = [
    "IndexMap",
    "cosine_similarity",
    "check_patch_vectors",
    "similarity_scores",
    "build_index_map",
    "aggregate_by_index",
]


@dataclass(frozen=True)
class IndexMap:
    """Hard per-pixel patch assignment; the one-hot form is derived on demand."""

    assignment: np.ndarray  # (h, w) integer labels in [0, n_patches)
    n_patches: int

    def __post_init__(self):
        a = np.asarray(self.assignment)
        if a.ndim != 2 or not np.issubdtype(a.dtype, np.integer):
            raise ValueError("assignment must be a 2-D integer array")
        if a.size and (a.min() < 0 or a.max() >= self.n_patches):
            raise ValueError(f"assignment labels must lie in [0, {self.n_patches})")

    @property
    def shape(self) -> tuple[int, int]:
        return self.assignment.shape

    def one_hot(self) -> np.ndarray:
        return np.eye(self.n_patches, dtype=np.float64)[self.assignment]

    def histogram(self) -> np.ndarray:
        """How many pixels each patch owns."""
        return np.bincount(self.assignment.ravel(), minlength=self.n_patches)


def cosine_similarity(f, v) -> float:
    f = np.asarray(f, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    nf, nv = np.linalg.norm(f), np.linalg.norm(v)
    if nf == 0 or nv == 0:
        raise ZeroNormVector("cosine similarity of a zero-norm vector is undefined")
    return float(np.clip(np.dot(f, v) / (nf * nv), -1.0, 1.0))


def check_patch_vectors(vectors) -> np.ndarray:
    """Validate an (N, C) table of patch feature vectors."""
    vectors = np.asarray(vectors, dtype=np.float64)
    if vectors.ndim != 2 or vectors.shape[0] < 1:
        raise DimensionMismatch(f"patch vectors must be (N, C), got {vectors.shape}")
    if np.any(np.linalg.norm(vectors, axis=1) == 0):
        raise ZeroNormVector("patch vector with zero norm")
    return vectors


def _unit(a: np.ndarray, what: str) -> np.ndarray:
    norms = np.linalg.norm(a, axis=-1, keepdims=True)
    if np.any(norms == 0):
        raise ZeroNormVector(f"{what} contains a zero-norm vector")
    return a / norms


def similarity_scores(features: np.ndarray, vectors) -> np.ndarray:
    """(h, w, N) cosine similarities between pixel features and patch vectors."""
    features = np.asarray(features, dtype=np.float64)
    vectors = check_patch_vectors(vectors)
    if features.ndim != 3 or features.shape[2] != vectors.shape[1]:
        raise DimensionMismatch(
            f"feature map {features.shape} incompatible with patch vectors {vectors.shape}"
        )
    scores = _unit(features, "feature map") @ _unit(vectors, "patch vectors").T
    return np.clip(scores, -1.0, 1.0)


def build_index_map(features: np.ndarray, vectors) -> IndexMap:
    """Per-pixel argmax of cosine similarity; ties go to the lowest patch index."""
    scores = similarity_scores(features, vectors)
    return IndexMap(np.argmax(scores, axis=-1).astype(np.int64), scores.shape[-1])


def aggregate_by_index(index_map: IndexMap, table) -> np.ndarray:
    """Lift an (N, D) per-patch table to an (h, w, D) map via the one-hot assignment."""
    table = np.asarray(table, dtype=np.float64)
    if table.ndim == 1:
        table = table[:, None]
    if table.shape[0] != index_map.n_patches:
        raise DimensionMismatch(
            f"table has {table.shape[0]} rows, index map has {index_map.n_patches} patches"
        )
    # one-hot contraction reduces to a row gather
    return table[index_map.assignment]
