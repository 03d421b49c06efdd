"""Synthetic two-domain corpora with planted, recoverable dataset bias.

Geometry: class signal directions and planted bias directions are drawn as
one orthonormal frame, so class signal is exactly orthogonal to every bias
direction. A record of class k in domain d and genre g is

    signal * u_k  +  sum of applicable bias offsets  +  Normal(0, sigma^2 I)

where a bias entry with magnitude m contributes +m/2 along its direction in
the first domain and -m/2 in the second, and genre-scoped entries touch only
that genre's records. Bias entries may share a planted direction (via
``direction_index``), which models a dataset offset whose strength varies by
genre while staying recoverable as a single direction.

The default spec mirrors the real-data story that motivates all of this: one
class lives entirely in its own genre, and that genre rides the shared bias
direction much harder than the rest, so cross-domain transfer collapses for
that class until the direction is projected out. Records of that class label
the other classes "unk" (predominant-style partial labelling), which keeps
the other classes' negative pools bias-balanced.

Sample counts are specified per (domain, class, genre) cell; a non-uniform
``genre_mix`` row redistributes the class total (cell count times number of
genres) across genres. ``genre_mix_b`` optionally gives the second domain a
different mix, which models a class whose genre composition shifts between
collections.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .data import (
    NEG,
    POS,
    TEST,
    TRAIN,
    UNK,
    EmbeddingTable,
    GenreMap,
    Manifest,
    ManifestRecord,
)
from .errors import InfeasibleSpecError, ValidationError

GLOBAL_SCOPE = "global"


@dataclass(frozen=True)
class BiasSpec:
    """One planted bias entry: where it applies and how strongly."""

    scope: str  # "global" or a genre name
    magnitude: float
    direction_index: int = 0


@dataclass(frozen=True)
class SynthSpec:
    dim: int = 64
    n_classes: int = 4
    n_genres: int = 2
    samples_per_cell: int = 250  # per (domain, class, genre), train + test together
    test_fraction: float = 0.25
    class_signal_strength: float = 2.0
    noise_sigma: float = 1.0
    seed: int = 20240901
    domain_names: tuple[str, str] = ("synthA", "synthB")
    bias: tuple[BiasSpec, ...] = (BiasSpec(GLOBAL_SCOPE, 3.0, 0),)
    # Per-class genre weights, rows summing to anything positive; None = uniform.
    # The class total (samples_per_cell * n_genres) is redistributed by the row.
    genre_mix: tuple[tuple[float, ...], ...] | None = None
    # Optional distinct mix for the second domain; None = same as genre_mix.
    genre_mix_b: tuple[tuple[float, ...], ...] | None = None
    predominant_only_classes: tuple[int, ...] = ()

    def class_names(self) -> tuple[str, ...]:
        return tuple(f"class{k}" for k in range(self.n_classes))

    def genre_names(self) -> tuple[str, ...]:
        return tuple(f"genre{g}" for g in range(self.n_genres))


def default_spec(seed: int = 20240901) -> SynthSpec:
    """The stock corpus: global bias magnitude 3.0 along one direction, plus a
    genre-1 boost along the same direction; the last class sits entirely in
    genre 1, so its cross-domain transfer collapses until debiasing."""
    return SynthSpec(
        seed=seed,
        bias=(
            BiasSpec(GLOBAL_SCOPE, 3.0, 0),
            BiasSpec("genre1", 5.4, 0),
        ),
        genre_mix=((1.0, 0.0), (1.0, 0.0), (1.0, 0.0), (0.0, 1.0)),
        predominant_only_classes=(3,),
    )


@dataclass(frozen=True)
class GroundTruth:
    """Planted geometry and per-record assignments, for oracle checks."""

    bias_directions: np.ndarray  # n_directions x D unit rows
    bias_entries: tuple[dict, ...]  # scope / magnitude / direction_index
    class_directions: np.ndarray  # K x D unit rows
    assignments: dict[str, tuple[dict, ...]]  # domain -> per-record metadata
    spec: SynthSpec = field(repr=False)

    def bias_span(self) -> np.ndarray:
        """D x B orthonormal basis of the directions that carry nonzero bias."""
        used = sorted(
            {e["direction_index"] for e in self.bias_entries if e["magnitude"] > 0}
        )
        return self.bias_directions[used].T

    def to_dict(self) -> dict:
        return {
            "bias_directions": self.bias_directions.tolist(),
            "bias_entries": list(self.bias_entries),
            "class_directions": self.class_directions.tolist(),
            "assignments": {d: list(a) for d, a in self.assignments.items()},
        }


def _normalize_mix(
    raw: tuple[tuple[float, ...], ...] | None, spec: SynthSpec, name: str
) -> tuple[tuple[float, ...], ...]:
    if raw is None:
        return tuple(
            tuple(1.0 for _ in range(spec.n_genres)) for _ in range(spec.n_classes)
        )
    mix = tuple(tuple(float(w) for w in row) for row in raw)
    if len(mix) != spec.n_classes or any(len(row) != spec.n_genres for row in mix):
        raise ValidationError(f"{name} must be n_classes rows of n_genres weights")
    if any(w < 0 for row in mix for w in row) or any(sum(row) <= 0 for row in mix):
        raise ValidationError(f"{name} rows need non-negative weights, positive sum")
    return mix


def _validate(
    spec: SynthSpec,
) -> tuple[tuple[tuple[float, ...], ...], tuple[tuple[float, ...], ...]]:
    if spec.dim < 1 or spec.n_classes < 1 or spec.n_genres < 1:
        raise ValidationError("dim, n_classes and n_genres must be >= 1")
    if spec.samples_per_cell < 1:
        raise ValidationError("samples_per_cell must be >= 1")
    if not (0.0 <= spec.test_fraction < 1.0):
        raise ValidationError("test_fraction must lie in [0, 1)")
    if spec.noise_sigma < 0 or spec.class_signal_strength < 0:
        raise ValidationError("noise_sigma and class_signal_strength must be >= 0")
    if len(spec.domain_names) != 2 or spec.domain_names[0] == spec.domain_names[1]:
        raise ValidationError("exactly two distinct domain names are required")
    genre_names = spec.genre_names()
    for entry in spec.bias:
        if entry.magnitude < 0:
            raise ValidationError(f"bias magnitude must be >= 0, got {entry.magnitude}")
        if entry.scope != GLOBAL_SCOPE and entry.scope not in genre_names:
            raise ValidationError(f"bias scope {entry.scope!r} is not global or a genre")
        if entry.direction_index < 0:
            raise ValidationError("direction_index must be >= 0")
    for k in spec.predominant_only_classes:
        if not 0 <= k < spec.n_classes:
            raise ValidationError(f"predominant-only class {k} out of range")
    mix_a = _normalize_mix(spec.genre_mix, spec, "genre_mix")
    mix_b = (
        mix_a
        if spec.genre_mix_b is None
        else _normalize_mix(spec.genre_mix_b, spec, "genre_mix_b")
    )
    n_directions = max((e.direction_index for e in spec.bias), default=-1) + 1
    if spec.dim <= n_directions + spec.n_classes:
        raise InfeasibleSpecError(
            f"dim {spec.dim} too small for {n_directions} bias + "
            f"{spec.n_classes} class directions with room to spare"
        )
    return mix_a, mix_b


def _allocate(total: int, weights: tuple[float, ...]) -> list[int]:
    """Largest-remainder split of ``total`` by ``weights`` (deterministic)."""
    scale = sum(weights)
    exact = [total * w / scale for w in weights]
    counts = [int(np.floor(e)) for e in exact]
    short = total - sum(counts)
    remainders = sorted(
        range(len(weights)), key=lambda g: (-(exact[g] - counts[g]), g)
    )
    for g in remainders[:short]:
        counts[g] += 1
    return counts


def generate_biased_corpus(
    spec: SynthSpec,
) -> tuple[dict[str, EmbeddingTable], dict[str, Manifest], GroundTruth]:
    """Build both domains' embeddings and manifests plus the planted truth."""
    mixes = _validate(spec)
    rng = np.random.default_rng(spec.seed)
    n_directions = max((e.direction_index for e in spec.bias), default=-1) + 1
    n_frame = n_directions + spec.n_classes
    frame, _ = np.linalg.qr(rng.standard_normal((spec.dim, max(n_frame, 1))))
    bias_dirs = frame[:, :n_directions].T.copy() if n_directions else np.zeros((0, spec.dim))
    class_dirs = frame[:, n_directions : n_directions + spec.n_classes].T.copy()

    class_names = spec.class_names()
    genre_names = spec.genre_names()
    # Per (domain sign, genre) mean offset, shared across classes.
    offsets: dict[tuple[float, int], np.ndarray] = {}
    for sign in (1.0, -1.0):
        for g in range(spec.n_genres):
            total = np.zeros(spec.dim)
            for entry in spec.bias:
                if entry.scope == GLOBAL_SCOPE or entry.scope == genre_names[g]:
                    total += sign * (entry.magnitude / 2.0) * bias_dirs[entry.direction_index]
            offsets[(sign, g)] = total

    tables: dict[str, EmbeddingTable] = {}
    manifests: dict[str, Manifest] = {}
    assignments: dict[str, tuple[dict, ...]] = {}
    for domain, sign, mix in zip(spec.domain_names, (1.0, -1.0), mixes):
        ids: list[str] = []
        vectors: list[np.ndarray] = []
        records: list[ManifestRecord] = []
        meta: list[dict] = []
        for k in range(spec.n_classes):
            counts = _allocate(spec.samples_per_cell * spec.n_genres, mix[k])
            for g, count in enumerate(counts):
                if count == 0:
                    continue
                mean = spec.class_signal_strength * class_dirs[k] + offsets[(sign, g)]
                noise = rng.standard_normal((count, spec.dim)) * spec.noise_sigma
                cell = mean + noise
                n_test = int(round(spec.test_fraction * count))
                is_test = np.zeros(count, dtype=bool)
                if n_test:
                    is_test[rng.choice(count, size=n_test, replace=False)] = True
                for i in range(count):
                    clip_id = f"{domain}-k{k}-g{g}-{i:05d}"
                    ids.append(clip_id)
                    vectors.append(cell[i])
                    hide_others = k in spec.predominant_only_classes
                    labels = {
                        name: POS if j == k else (UNK if hide_others else NEG)
                        for j, name in enumerate(class_names)
                    }
                    split = TEST if is_test[i] else TRAIN
                    records.append(
                        ManifestRecord(clip_id, domain, split, (genre_names[g],), labels)
                    )
                    meta.append(
                        {"clip_id": clip_id, "class": k, "genre": g, "split": split}
                    )
        tables[domain] = EmbeddingTable(
            tuple(ids), np.zeros(len(ids), dtype=np.int64), np.asarray(vectors)
        )
        manifests[domain] = Manifest(tuple(records), class_names)
        assignments[domain] = tuple(meta)

    truth = GroundTruth(
        bias_directions=bias_dirs,
        bias_entries=tuple(
            {
                "scope": e.scope,
                "magnitude": float(e.magnitude),
                "direction_index": int(e.direction_index),
            }
            for e in spec.bias
        ),
        class_directions=class_dirs,
        assignments=assignments,
        spec=spec,
    )
    return tables, manifests, truth


def synth_genre_map(spec: SynthSpec) -> GenreMap:
    """Identity genre map over the given SynthSpec's genre names."""
    return GenreMap(spec.genre_names(), {})


def save_ground_truth(truth: GroundTruth, path: str) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(truth.to_dict(), handle, sort_keys=True)
        handle.write("\n")


def spec_from_dict(obj: dict) -> SynthSpec:
    """Build a SynthSpec from a JSON object (the CLI's --spec file)."""
    known = {
        "dim",
        "n_classes",
        "n_genres",
        "samples_per_cell",
        "test_fraction",
        "class_signal_strength",
        "noise_sigma",
        "seed",
        "domain_names",
        "bias",
        "genre_mix",
        "genre_mix_b",
        "predominant_only_classes",
    }
    unknown = set(obj) - known
    if unknown:
        raise ValidationError(f"unknown synth spec fields: {sorted(unknown)}")
    structured = {"bias", "domain_names", "genre_mix", "genre_mix_b",
                  "predominant_only_classes"}
    kwargs: dict = {}
    for key in known - structured:
        if key in obj:
            kwargs[key] = obj[key]
    if "domain_names" in obj:
        kwargs["domain_names"] = tuple(obj["domain_names"])
    if "bias" in obj:
        entries = []
        for raw in obj["bias"]:
            entries.append(
                BiasSpec(
                    raw.get("scope", GLOBAL_SCOPE),
                    float(raw["magnitude"]),
                    int(raw.get("direction_index", 0)),
                )
            )
        kwargs["bias"] = tuple(entries)
    for key in ("genre_mix", "genre_mix_b"):
        if obj.get(key) is not None:
            kwargs[key] = tuple(tuple(row) for row in obj[key])
    if "predominant_only_classes" in obj:
        kwargs["predominant_only_classes"] = tuple(obj["predominant_only_classes"])
    return SynthSpec(**kwargs)
