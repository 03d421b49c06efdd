"""Standardisation and random Fourier features for the Gaussian kernel.

The feature map approximates k(x, y) = exp(-gamma ||x - y||^2): draw D'
frequencies from Normal(0, 2 gamma I) and phases from Uniform[0, 2 pi), then
map x to sqrt(2 / D') cos(x . w_j + b_j). Inputs are z-scored with
training-set statistics before the map; the map itself is frozen at fit
time and fully determined by (dim, dprime, gamma, seed).
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import pdist

from .data import EmbeddingTable, load_embeddings, save_embeddings
from .errors import (
    DimensionMismatchError,
    InsufficientSampleError,
    InvalidGammaError,
    NonFiniteError,
    ValidationError,
)
from .seeding import derive_seed

DEFAULT_DPRIME_FACTOR = 4
MEDIAN_SAMPLE_CAP = 1000
_SCALE_FLOOR = 1e-8


@dataclass(frozen=True)
class Standardizer:
    """Per-coordinate z-scoring with training statistics.

    Scales are population standard deviations floored at 1e-8 so constant
    coordinates pass through centred instead of dividing by zero.
    """

    mean: np.ndarray
    scale: np.ndarray

    def __post_init__(self):
        mean = np.ascontiguousarray(self.mean, dtype=np.float64)
        scale = np.ascontiguousarray(self.scale, dtype=np.float64)
        if mean.shape != scale.shape or mean.ndim != 1:
            raise DimensionMismatchError("mean and scale must be matching 1-d arrays")
        mean.setflags(write=False)
        scale.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "scale", scale)

    def apply(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.mean.shape[0]:
            raise DimensionMismatchError(
                f"standardizer dimension {self.mean.shape[0]} does not match {x.shape[-1]}"
            )
        return (x - self.mean) / self.scale

    def inverse(self, z: np.ndarray) -> np.ndarray:
        z = np.asarray(z, dtype=np.float64)
        return z * self.scale + self.mean


def fit_standardizer(x: np.ndarray) -> Standardizer:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 1:
        raise InsufficientSampleError("standardizer needs at least one row")
    if not np.isfinite(x).all():
        raise NonFiniteError("non-finite value in standardizer input")
    mean = x.mean(axis=0)
    scale = np.maximum(x.std(axis=0), _SCALE_FLOOR)
    return Standardizer(mean, scale)


@dataclass(frozen=True)
class KernelMap:
    """Frozen random Fourier feature map."""

    frequencies: np.ndarray  # D' x D
    phases: np.ndarray  # D'
    gamma: float
    seed: int

    def __post_init__(self):
        freq = np.ascontiguousarray(self.frequencies, dtype=np.float64)
        phases = np.ascontiguousarray(self.phases, dtype=np.float64)
        if freq.ndim != 2 or phases.shape != (freq.shape[0],):
            raise DimensionMismatchError("frequencies must be D' x D with D' phases")
        freq.setflags(write=False)
        phases.setflags(write=False)
        object.__setattr__(self, "frequencies", freq)
        object.__setattr__(self, "phases", phases)

    @property
    def input_dim(self) -> int:
        return self.frequencies.shape[1]

    @property
    def dprime(self) -> int:
        return self.frequencies.shape[0]


def median_heuristic_gamma(x_sample: np.ndarray, seed: int) -> float:
    """gamma = 1 / (2 m^2) with m the median pairwise distance of <= 1000 rows."""
    x_sample = np.asarray(x_sample, dtype=np.float64)
    if x_sample.ndim != 2 or x_sample.shape[0] < 2:
        raise InsufficientSampleError("median heuristic needs at least 2 rows")
    if x_sample.shape[0] > MEDIAN_SAMPLE_CAP:
        rng = np.random.default_rng(derive_seed(seed, "median-subsample"))
        take = np.sort(rng.choice(x_sample.shape[0], size=MEDIAN_SAMPLE_CAP, replace=False))
        x_sample = x_sample[take]
    median = float(np.median(pdist(x_sample)))
    if not (median > 0.0 and np.isfinite(median)):
        raise InvalidGammaError(
            f"median pairwise distance {median} admits no positive kernel width"
        )
    return 1.0 / (2.0 * median * median)


def fit_rff(
    dim: int,
    dprime: int,
    gamma: float | str,
    seed: int,
    x_sample: np.ndarray | None = None,
) -> KernelMap:
    """Draw a frozen feature map. ``gamma`` may be "median" (needs ``x_sample``)."""
    if dim < 1 or dprime < 1:
        raise ValidationError("dim and dprime must be >= 1")
    if gamma == "median":
        if x_sample is None:
            raise InsufficientSampleError("median heuristic requested without a sample")
        gamma_value = median_heuristic_gamma(x_sample, seed)
    else:
        gamma_value = float(gamma)
        if not (gamma_value > 0.0 and np.isfinite(gamma_value)):
            raise InvalidGammaError(f"gamma must be positive and finite, got {gamma}")
    rng = np.random.default_rng(seed)
    frequencies = rng.standard_normal((dprime, dim)) * np.sqrt(2.0 * gamma_value)
    phases = rng.uniform(0.0, 2.0 * np.pi, size=dprime)
    return KernelMap(frequencies, phases, gamma_value, seed)


def transform_rff(kernel_map: KernelMap, x: np.ndarray) -> np.ndarray:
    """Map rows of ``x`` into the D'-dimensional random feature space."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    rows = x[None, :] if single else x
    if rows.shape[1] != kernel_map.input_dim:
        raise DimensionMismatchError(
            f"map expects dimension {kernel_map.input_dim}, got {rows.shape[1]}"
        )
    out = np.sqrt(2.0 / kernel_map.dprime) * np.cos(
        rows @ kernel_map.frequencies.T + kernel_map.phases
    )
    return out[0] if single else out


def save_kernel_map(kernel_map: KernelMap, table_path: str, sidecar_path: str) -> None:
    """Persist the map: frequencies in the binary embedding container plus a
    JSON sidecar carrying (gamma, seed, dprime, dim). Loading regenerates the
    map from the sidecar parameters and verifies it against the stored table."""
    ids = tuple(f"w{j}" for j in range(kernel_map.dprime))
    table = EmbeddingTable(ids, np.arange(kernel_map.dprime), kernel_map.frequencies)
    save_embeddings(table, table_path, "binary")
    with open(sidecar_path, "w", encoding="utf-8") as handle:
        json.dump(
            {
                "gamma": kernel_map.gamma,
                "seed": kernel_map.seed,
                "dprime": kernel_map.dprime,
                "dim": kernel_map.input_dim,
            },
            handle,
            sort_keys=True,
        )
        handle.write("\n")


def load_kernel_map(table_path: str, sidecar_path: str) -> KernelMap:
    with open(sidecar_path, "r", encoding="utf-8") as handle:
        sidecar = json.load(handle)
    rebuilt = fit_rff(
        int(sidecar["dim"]), int(sidecar["dprime"]), float(sidecar["gamma"]), int(sidecar["seed"])
    )
    stored = load_embeddings(table_path, "binary")
    if stored.vectors.shape != rebuilt.frequencies.shape:
        raise ValidationError("stored frequency table does not match sidecar shape")
    # The container stores float32, so compare at float32 relative precision.
    if not np.allclose(stored.vectors, rebuilt.frequencies, rtol=1e-5, atol=1e-30):
        raise ValidationError("stored frequency table disagrees with regenerated map")
    return rebuilt
