"""Removing fitted directions from feature spaces by orthogonal projection.

A debias operator holds an orthonormal basis B (D x r) of the subspace to
remove and applies x -> x - B (B^T x) without ever materialising the D x D
projector. Multi-direction removal takes the column space of the stacked
direction matrix via a reduced SVD.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .bias import BiasDirection
from .errors import (
    DimensionMismatchError,
    RankDeficientError,
    UnknownClassError,
    ZeroVectorError,
)

DEFAULT_RANK_REL_TOL = 1e-6
_ORTHONORMALITY_TOL = 1e-8


@dataclass(frozen=True)
class DebiasOperator:
    """Orthogonal projection removing the span of ``basis`` columns."""

    basis: np.ndarray
    singular_values: np.ndarray
    provenance: tuple[dict, ...] = field(default_factory=tuple)

    def __post_init__(self):
        basis = np.ascontiguousarray(self.basis, dtype=np.float64)
        if basis.ndim != 2 or basis.shape[1] < 1:
            raise DimensionMismatchError("basis must be D x r with r >= 1")
        gram_err = float(np.linalg.norm(basis.T @ basis - np.eye(basis.shape[1])))
        if gram_err > _ORTHONORMALITY_TOL:
            raise RankDeficientError(
                f"basis is not orthonormal (||B^T B - I||_F = {gram_err:.3e})"
            )
        basis.setflags(write=False)
        sv = np.ascontiguousarray(self.singular_values, dtype=np.float64)
        sv.setflags(write=False)
        object.__setattr__(self, "basis", basis)
        object.__setattr__(self, "singular_values", sv)
        object.__setattr__(self, "provenance", tuple(self.provenance))

    @property
    def dim(self) -> int:
        return self.basis.shape[0]

    @property
    def rank(self) -> int:
        return self.basis.shape[1]

    def apply(self, x: np.ndarray) -> np.ndarray:
        """Project rows of ``x`` onto the orthogonal complement of the basis."""
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        rows = x[None, :] if single else x
        if rows.shape[1] != self.dim:
            raise DimensionMismatchError(
                f"operator dimension {self.dim} does not match features {rows.shape[1]}"
            )
        out = rows - (rows @ self.basis) @ self.basis.T
        return out[0] if single else out

    def to_dict(self) -> dict:
        return {
            "basis": [[float(v) for v in col] for col in self.basis.T],
            "singular_values": [float(s) for s in self.singular_values],
            "provenance": list(self.provenance),
        }

    @staticmethod
    def from_dict(obj: dict) -> "DebiasOperator":
        basis = np.asarray(obj["basis"], dtype=np.float64).T
        return DebiasOperator(
            basis,
            np.asarray(obj["singular_values"], dtype=np.float64),
            tuple(obj.get("provenance", ())),
        )


def _provenance(direction: BiasDirection) -> dict:
    return {
        "scope": direction.scope,
        "class": direction.class_name,
        "genre": direction.genre,
        "n_a": direction.n_a,
        "n_b": direction.n_b,
        "shrinkage": direction.shrinkage,
    }


def projector_from_direction(direction: BiasDirection) -> DebiasOperator:
    """Rank-1 removal of a single fitted direction."""
    vector = direction.vector
    norm = float(np.linalg.norm(vector))
    if norm == 0.0:
        raise ZeroVectorError("cannot build a projector from a zero direction")
    basis = (vector / norm)[:, None]
    return DebiasOperator(basis, np.ones(1), (_provenance(direction),))


def projector_from_subspace(
    directions: list[BiasDirection] | tuple[BiasDirection, ...],
    rank_rel_tol: float = DEFAULT_RANK_REL_TOL,
) -> DebiasOperator:
    """Removal of the column space of the stacked direction matrix.

    The stacked D x G matrix must be full column rank: the smallest singular
    value must be at least ``rank_rel_tol`` times the largest, otherwise a
    RankDeficientError reports all singular values and the offending
    near-parallel input pairs.
    """
    if len(directions) < 1:
        raise ZeroVectorError("need at least one direction")
    dims = {d.vector.shape[0] for d in directions}
    if len(dims) != 1:
        raise DimensionMismatchError(f"directions disagree on dimension: {sorted(dims)}")
    stacked = np.column_stack([d.vector for d in directions])
    if stacked.shape[0] < stacked.shape[1]:
        raise DimensionMismatchError(
            f"{stacked.shape[1]} directions cannot be independent in {stacked.shape[0]} dims"
        )
    left, sv, _ = np.linalg.svd(stacked, full_matrices=False)
    if sv[-1] < rank_rel_tol * sv[0]:
        pairs = []
        for i in range(len(directions)):
            for j in range(i + 1, len(directions)):
                cosine = abs(
                    float(directions[i].vector @ directions[j].vector)
                    / (np.linalg.norm(directions[i].vector) * np.linalg.norm(directions[j].vector))
                )
                if cosine > 1.0 - 1e-6:
                    pairs.append((i, j, cosine))
        raise RankDeficientError(
            f"stacked directions are rank deficient: singular values {sv.tolist()}; "
            f"near-parallel input pairs (i, j, |cos|): {pairs}",
            singular_values=sv,
            correlated_pairs=pairs,
        )
    return DebiasOperator(left, sv, tuple(_provenance(d) for d in directions))


@dataclass(frozen=True)
class ClasswiseDebias:
    """One operator per class, applied to that class's features only."""

    operators: dict[str, DebiasOperator]

    def apply(self, class_name: str, x: np.ndarray) -> np.ndarray:
        if class_name not in self.operators:
            raise UnknownClassError(f"no fitted operator for class {class_name!r}")
        return self.operators[class_name].apply(x)

    def operator(self, class_name: str) -> DebiasOperator:
        if class_name not in self.operators:
            raise UnknownClassError(f"no fitted operator for class {class_name!r}")
        return self.operators[class_name]
