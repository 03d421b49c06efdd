"""Fitting dataset-identity directions and measuring alignment with them.

The direction between two sample groups is the regularised two-class linear
discriminant: solve (S_w + lambda I) w = mu_a - mu_b with S_w the unweighted
average of the two per-group covariance matrices (1/N normalisation) and
lambda = shrinkage * trace(S_w) / D, then normalise to unit length with the
first nonzero component positive.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import (
    DegenerateMeansError,
    DimensionMismatchError,
    NonFiniteError,
    ZeroVectorError,
)

DEFAULT_SHRINKAGE = 1e-2

# Scope tags recorded on fitted directions.
SCOPE_GLOBAL = "global"
SCOPE_CLASSWISE = "classwise"


@dataclass(frozen=True)
class BiasDirection:
    """A unit direction separating two sample groups, with fit provenance."""

    vector: np.ndarray
    scope: str
    class_name: str | None
    genre: str | None
    n_a: int
    n_b: int
    shrinkage: float

    def __post_init__(self):
        vector = np.ascontiguousarray(self.vector, dtype=np.float64)
        vector.setflags(write=False)
        object.__setattr__(self, "vector", vector)

    def to_dict(self) -> dict:
        return {
            "vector": [float(v) for v in self.vector],
            "scope": self.scope,
            "class": self.class_name,
            "genre": self.genre,
            "n_a": self.n_a,
            "n_b": self.n_b,
            "shrinkage": self.shrinkage,
        }

    @staticmethod
    def from_dict(obj: dict) -> "BiasDirection":
        return BiasDirection(
            np.asarray(obj["vector"], dtype=np.float64),
            obj["scope"],
            obj.get("class"),
            obj.get("genre"),
            int(obj["n_a"]),
            int(obj["n_b"]),
            float(obj["shrinkage"]),
        )


def _validate_group(x: np.ndarray, name: str) -> np.ndarray:
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise DimensionMismatchError(f"{name} must be 2-d")
    if x.shape[0] < 2:
        raise DegenerateMeansError(f"{name} needs at least 2 rows, got {x.shape[0]}")
    if not np.isfinite(x).all():
        raise NonFiniteError(f"non-finite value in {name}")
    return x


def _sign_fix(vector: np.ndarray) -> np.ndarray:
    nonzero = np.flatnonzero(np.abs(vector) > 1e-14)
    if nonzero.size and vector[nonzero[0]] < 0:
        return -vector
    return vector


def fit_lda_direction(
    x_a: np.ndarray,
    x_b: np.ndarray,
    shrinkage: float = DEFAULT_SHRINKAGE,
    *,
    scope: str = SCOPE_GLOBAL,
    class_name: str | None = None,
    genre: str | None = None,
) -> BiasDirection:
    """Two-class discriminant direction from group a toward group b's complement.

    Raises DegenerateMeansError when the group means coincide (relative to
    their scale) and DimensionMismatchError when dimensions differ.
    """
    x_a = _validate_group(x_a, "x_a")
    x_b = _validate_group(x_b, "x_b")
    if x_a.shape[1] != x_b.shape[1]:
        raise DimensionMismatchError(
            f"dimension mismatch: {x_a.shape[1]} vs {x_b.shape[1]}"
        )
    if not (shrinkage >= 0 and np.isfinite(shrinkage)):
        raise ValueError(f"shrinkage must be a finite non-negative number, got {shrinkage}")
    mu_a = x_a.mean(axis=0)
    mu_b = x_b.mean(axis=0)
    delta = mu_a - mu_b
    norm_delta = float(np.linalg.norm(delta))
    if norm_delta < 1e-12 * (np.linalg.norm(mu_a) + np.linalg.norm(mu_b) + 1.0):
        raise DegenerateMeansError("group means coincide; no direction to fit")
    dim = x_a.shape[1]
    cov_a = np.cov(x_a, rowvar=False, bias=True).reshape(dim, dim)
    cov_b = np.cov(x_b, rowvar=False, bias=True).reshape(dim, dim)
    scatter = 0.5 * (cov_a + cov_b)
    trace = float(np.trace(scatter))
    if trace <= 0.0:
        # All points identical within each group: the shrinkage-dominated
        # limit, where the direction is the normalised mean difference.
        vector = delta / norm_delta
    else:
        lam = shrinkage * trace / dim
        raw = scipy.linalg.solve(
            scatter + lam * np.eye(dim), delta, assume_a="pos"
        )
        norm = float(np.linalg.norm(raw))
        if norm == 0.0:
            raise DegenerateMeansError("discriminant solve returned the zero vector")
        vector = raw / norm
    vector = _sign_fix(vector)
    return BiasDirection(
        vector, scope, class_name, genre, x_a.shape[0], x_b.shape[0], float(shrinkage)
    )


def bias_correlation(direction: np.ndarray, vector: np.ndarray) -> float:
    """Cosine between a bias direction and an arbitrary vector (signed)."""
    direction = np.asarray(direction, dtype=np.float64).ravel()
    vector = np.asarray(vector, dtype=np.float64).ravel()
    if direction.shape != vector.shape:
        raise DimensionMismatchError(
            f"dimension mismatch: {direction.shape[0]} vs {vector.shape[0]}"
        )
    norm_d = float(np.linalg.norm(direction))
    norm_v = float(np.linalg.norm(vector))
    if norm_d == 0.0 or norm_v == 0.0:
        raise ZeroVectorError("cannot take the cosine of a zero vector")
    return float(direction @ vector) / (norm_d * norm_v)


def subspace_correlation(basis: np.ndarray, vector: np.ndarray) -> float:
    """Magnitude of the cosine between ``vector`` and the span of ``basis`` columns."""
    basis = np.asarray(basis, dtype=np.float64)
    vector = np.asarray(vector, dtype=np.float64).ravel()
    if basis.shape[0] != vector.shape[0]:
        raise DimensionMismatchError(
            f"dimension mismatch: {basis.shape[0]} vs {vector.shape[0]}"
        )
    norm_v = float(np.linalg.norm(vector))
    if norm_v == 0.0:
        raise ZeroVectorError("cannot take the cosine of a zero vector")
    return float(np.linalg.norm(basis.T @ (vector / norm_v)))


def domain_probe_accuracy(x_a: np.ndarray, x_b: np.ndarray, direction: np.ndarray) -> float:
    """Balanced accuracy of a midpoint-threshold domain classifier along ``direction``.

    0.5 means the direction carries no domain information; literally identical
    clouds give exactly 0.5.
    """
    x_a = _validate_group(x_a, "x_a")
    x_b = _validate_group(x_b, "x_b")
    direction = np.asarray(direction, dtype=np.float64).ravel()
    if x_a.shape[1] != direction.shape[0] or x_b.shape[1] != direction.shape[0]:
        raise DimensionMismatchError("direction dimension does not match samples")
    if float(np.linalg.norm(direction)) == 0.0:
        raise ZeroVectorError("cannot probe along a zero direction")
    proj_a = x_a @ direction
    proj_b = x_b @ direction
    threshold = 0.5 * (proj_a.mean() + proj_b.mean())
    # Predict "side a" strictly above the midpoint; the same rule on both
    # sides makes identical clouds land at exactly 0.5 balanced accuracy.
    acc = 0.5 * (float((proj_a > threshold).mean()) + float((proj_b <= threshold).mean()))
    return max(acc, 1.0 - acc)
