"""Embedding tables, manifests, genre maps, pooling and balanced subsampling.

File contracts
--------------
Embedding CSV: header ``clip_id,frame,e0,...,e{D-1}``, one row per
(clip, frame), decimal floats.

Embedding binary: magic ``EMB1``; little-endian u32 version (=1), u32 row
count, u32 dimension; then per row: u32 id byte-length, UTF-8 id bytes,
u32 frame index, D little-endian float32 values. Values are widened to
float64 in memory; save/load round-trips the file byte-exactly.

Manifest: JSON Lines. Each record carries ``clip_id``, ``dataset``,
``split`` ("train" | "test"), ``genres`` (list of strings) and ``labels``
(object mapping class name to "pos" | "neg" | "unk"). After loading, every
class name seen anywhere in the file is present on every record, filled
with "unk" where the source omitted it.

Genre map: JSON object ``{"targets": [...], "rules": {"source": "target"}}``.
A genre equal to a canonical target maps to itself; rules cover renames.
"""

from __future__ import annotations

import csv
import io
import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    EmptyClassError,
    FormatError,
    IoError,
    NonFiniteError,
    ParseError,
    ValidationError,
)

MAGIC = b"EMB1"
BINARY_VERSION = 1

TRAIN = "train"
TEST = "test"
SPLITS = (TRAIN, TEST)

POS = "pos"
NEG = "neg"
UNK = "unk"
LABEL_STATES = (POS, NEG, UNK)

UNKNOWN_GENRE = "unknown"


def _freeze(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class EmbeddingTable:
    """Ordered (clip_id, frame_index, vector) rows over a fixed dimension.

    Vectors are float64 in memory regardless of on-disk width. Instances are
    immutable; the arrays are marked read-only. Zero rows are allowed for
    in-memory intermediates, but files must hold at least one row.
    """

    clip_ids: tuple[str, ...]
    frames: np.ndarray
    vectors: np.ndarray

    def __post_init__(self):
        vectors = np.ascontiguousarray(self.vectors, dtype=np.float64)
        frames = np.ascontiguousarray(self.frames, dtype=np.int64)
        if vectors.ndim != 2:
            raise ValidationError("vectors must be a 2-d array")
        if vectors.shape[1] < 1:
            raise ValidationError("embedding dimension must be >= 1")
        if len(self.clip_ids) != vectors.shape[0] or frames.shape != (vectors.shape[0],):
            raise ValidationError("clip_ids, frames and vectors disagree on row count")
        if vectors.size and not np.isfinite(vectors).all():
            bad = int(np.where(~np.isfinite(vectors).all(axis=1))[0][0])
            raise NonFiniteError("non-finite embedding value", row=bad)
        keys = list(zip(self.clip_ids, frames.tolist()))
        if len(set(keys)) != len(keys):
            raise ValidationError("(clip_id, frame_index) pairs must be unique")
        object.__setattr__(self, "clip_ids", tuple(self.clip_ids))
        object.__setattr__(self, "frames", _freeze(frames))
        object.__setattr__(self, "vectors", _freeze(vectors))

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    @property
    def n_rows(self) -> int:
        return self.vectors.shape[0]


def load_embeddings(path: str, fmt: str) -> EmbeddingTable:
    """Read an embedding table from ``path`` in format ``fmt`` ("csv" | "binary")."""
    if fmt == "csv":
        table = _load_csv(path)
    elif fmt == "binary":
        table = _load_binary(path)
    else:
        raise ValidationError(f"unknown embedding format {fmt!r}")
    if table.n_rows < 1:
        raise ValidationError("embedding file holds no rows", path=path)
    return table


def save_embeddings(table: EmbeddingTable, path: str, fmt: str) -> None:
    """Write ``table`` to ``path``. Binary output round-trips byte-exactly."""
    if table.n_rows < 1:
        raise ValidationError("refusing to write an empty embedding table")
    if fmt == "csv":
        _save_csv(table, path)
    elif fmt == "binary":
        _save_binary(table, path)
    else:
        raise ValidationError(f"unknown embedding format {fmt!r}")


def _load_csv(path: str) -> EmbeddingTable:
    try:
        handle = open(path, "r", newline="", encoding="utf-8")
    except OSError as exc:
        raise IoError(f"cannot open {path}: {exc}") from exc
    with handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise FormatError(f"{path}: empty CSV file") from None
        if len(header) < 3 or header[0] != "clip_id" or header[1] != "frame":
            raise FormatError(f"{path}: header must start with clip_id,frame,e0,...")
        dim = len(header) - 2
        expected = ["clip_id", "frame"] + [f"e{i}" for i in range(dim)]
        if header != expected:
            raise FormatError(f"{path}: malformed header {header[:4]}...")
        ids: list[str] = []
        frames: list[int] = []
        rows: list[list[float]] = []
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != dim + 2:
                raise FormatError(
                    f"{path}: row at line {line_no} has {len(row) - 2} values, expected {dim}"
                )
            try:
                frames.append(int(row[1]))
                rows.append([float(v) for v in row[2:]])
            except ValueError as exc:
                raise ParseError(str(exc), line=line_no, path=path) from exc
            ids.append(row[0])
    vectors = np.asarray(rows, dtype=np.float64).reshape(len(ids), dim)
    _check_finite(vectors)
    return EmbeddingTable(tuple(ids), np.asarray(frames), vectors)


def _save_csv(table: EmbeddingTable, path: str) -> None:
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["clip_id", "frame"] + [f"e{i}" for i in range(table.dim)])
        for clip_id, frame, vec in zip(table.clip_ids, table.frames, table.vectors):
            writer.writerow([clip_id, int(frame)] + [repr(float(v)) for v in vec])


_HEADER = struct.Struct("<4sIII")
_U32 = struct.Struct("<I")


def _load_binary(path: str) -> EmbeddingTable:
    try:
        with open(path, "rb") as handle:
            blob = handle.read()
    except OSError as exc:
        raise IoError(f"cannot open {path}: {exc}") from exc
    if len(blob) < _HEADER.size:
        raise FormatError(f"{path}: truncated header")
    magic, version, n_rows, dim = _HEADER.unpack_from(blob, 0)
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != BINARY_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    if dim < 1:
        raise FormatError(f"{path}: dimension must be >= 1")
    offset = _HEADER.size
    ids: list[str] = []
    frames: list[int] = []
    vectors = np.empty((n_rows, dim), dtype=np.float64)
    vec_bytes = 4 * dim
    for row in range(n_rows):
        if offset + 4 > len(blob):
            raise FormatError(f"{path}: truncated at row {row}")
        (id_len,) = _U32.unpack_from(blob, offset)
        offset += 4
        if offset + id_len + 4 + vec_bytes > len(blob):
            raise FormatError(f"{path}: truncated at row {row}")
        try:
            ids.append(blob[offset : offset + id_len].decode("utf-8"))
        except UnicodeDecodeError as exc:
            raise FormatError(f"{path}: row {row}: invalid UTF-8 clip id") from exc
        offset += id_len
        (frame,) = _U32.unpack_from(blob, offset)
        offset += 4
        frames.append(frame)
        vectors[row] = np.frombuffer(blob, dtype="<f4", count=dim, offset=offset)
        offset += vec_bytes
    if offset != len(blob):
        raise FormatError(f"{path}: {len(blob) - offset} trailing bytes")
    _check_finite(vectors)
    return EmbeddingTable(tuple(ids), np.asarray(frames), vectors)


def _save_binary(table: EmbeddingTable, path: str) -> None:
    out = io.BytesIO()
    out.write(_HEADER.pack(MAGIC, BINARY_VERSION, table.n_rows, table.dim))
    narrowed = table.vectors.astype("<f4")
    for clip_id, frame, vec in zip(table.clip_ids, table.frames, narrowed):
        encoded = clip_id.encode("utf-8")
        out.write(_U32.pack(len(encoded)))
        out.write(encoded)
        out.write(_U32.pack(int(frame)))
        out.write(vec.tobytes())
    with open(path, "wb") as handle:
        handle.write(out.getvalue())


def _check_finite(vectors: np.ndarray) -> None:
    finite = np.isfinite(vectors).all(axis=1)
    if not finite.all():
        raise NonFiniteError("non-finite embedding value", row=int(np.where(~finite)[0][0]))


def binary_size(table: EmbeddingTable) -> int:
    """Exact byte size of the binary serialization of ``table``."""
    per_row = sum(4 + len(c.encode("utf-8")) + 4 + 4 * table.dim for c in table.clip_ids)
    return _HEADER.size + per_row


# --- manifests ------------------------------------------------------------


@dataclass(frozen=True)
class ManifestRecord:
    clip_id: str
    dataset: str
    split: str
    genres: tuple[str, ...]
    labels: dict[str, str]


@dataclass(frozen=True)
class Manifest:
    """Per-clip metadata; label keys are uniform across records after load."""

    records: tuple[ManifestRecord, ...]
    classes: tuple[str, ...]

    def for_dataset(self, dataset: str) -> "Manifest":
        subset = tuple(r for r in self.records if r.dataset == dataset)
        return Manifest(subset, self.classes)

    @property
    def datasets(self) -> tuple[str, ...]:
        seen: dict[str, None] = {}
        for record in self.records:
            seen.setdefault(record.dataset, None)
        return tuple(seen)


def load_manifest(path: str) -> Manifest:
    try:
        with open(path, "r", encoding="utf-8") as handle:
            lines = handle.read().splitlines()
    except OSError as exc:
        raise IoError(f"cannot open {path}: {exc}") from exc
    raw: list[tuple[int, dict]] = []
    for line_no, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(f"malformed JSON ({exc.msg})", line=line_no, path=path) from exc
        if not isinstance(obj, dict):
            raise ParseError("record is not a JSON object", line=line_no, path=path)
        raw.append((line_no, obj))
    records: list[ManifestRecord] = []
    classes: dict[str, None] = {}
    seen_ids: set[tuple[str, str]] = set()
    for line_no, obj in raw:
        for key in ("clip_id", "dataset", "split", "genres", "labels"):
            if key not in obj:
                raise ValidationError(f"missing field {key!r}", line=line_no, path=path)
        clip_id, dataset, split = obj["clip_id"], obj["dataset"], obj["split"]
        if not isinstance(clip_id, str) or not isinstance(dataset, str):
            raise ValidationError("clip_id and dataset must be strings", line=line_no, path=path)
        if split not in SPLITS:
            raise ValidationError(
                f"unknown split token {split!r} (expected one of {SPLITS})",
                line=line_no,
                path=path,
            )
        genres = obj["genres"]
        if not isinstance(genres, list) or not all(isinstance(g, str) for g in genres):
            raise ValidationError("genres must be a list of strings", line=line_no, path=path)
        labels = obj["labels"]
        if not isinstance(labels, dict):
            raise ValidationError("labels must be an object", line=line_no, path=path)
        for cls, state in labels.items():
            if state not in LABEL_STATES:
                raise ValidationError(
                    f"label state {state!r} for class {cls!r} not in {LABEL_STATES}",
                    line=line_no,
                    path=path,
                )
            classes.setdefault(cls, None)
        key = (dataset, clip_id)
        if key in seen_ids:
            raise ValidationError(
                f"duplicate clip_id {clip_id!r} within dataset {dataset!r}",
                line=line_no,
                path=path,
            )
        seen_ids.add(key)
        records.append(ManifestRecord(clip_id, dataset, split, tuple(genres), dict(labels)))
    universe = tuple(classes)
    filled = tuple(
        ManifestRecord(
            r.clip_id,
            r.dataset,
            r.split,
            r.genres,
            {cls: r.labels.get(cls, UNK) for cls in universe},
        )
        for r in records
    )
    return Manifest(filled, universe)


def save_manifest(manifest: Manifest, path: str) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for record in manifest.records:
            handle.write(
                json.dumps(
                    {
                        "clip_id": record.clip_id,
                        "dataset": record.dataset,
                        "split": record.split,
                        "genres": list(record.genres),
                        "labels": {c: record.labels[c] for c in manifest.classes},
                    },
                    sort_keys=False,
                )
                + "\n"
            )


# --- genre maps -----------------------------------------------------------


@dataclass(frozen=True)
class GenreMap:
    """Canonical genre targets plus rename rules into them."""

    targets: tuple[str, ...]
    rules: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if len(set(self.targets)) != len(self.targets):
            raise ValidationError("genre map targets must be unique")
        for src, dst in self.rules.items():
            if dst not in self.targets:
                raise ValidationError(f"rule target {dst!r} (for {src!r}) not in targets")


def load_genre_map(path: str) -> GenreMap:
    def reject_duplicates(pairs):
        keys = [k for k, _ in pairs]
        if len(set(keys)) != len(keys):
            dupes = sorted({k for k in keys if keys.count(k) > 1})
            raise ValidationError(f"duplicate rule keys {dupes} in {path}")
        return dict(pairs)

    try:
        with open(path, "r", encoding="utf-8") as handle:
            obj = json.load(handle, object_pairs_hook=reject_duplicates)
    except OSError as exc:
        raise IoError(f"cannot open {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"malformed JSON ({exc.msg})", path=path) from exc
    if not isinstance(obj, dict) or "targets" not in obj:
        raise ValidationError(f"{path}: genre map must be an object with a targets list")
    targets = obj["targets"]
    rules = obj.get("rules", {})
    if not isinstance(targets, list) or not all(isinstance(t, str) for t in targets):
        raise ValidationError(f"{path}: targets must be a list of strings")
    if not isinstance(rules, dict) or not all(
        isinstance(k, str) and isinstance(v, str) for k, v in rules.items()
    ):
        raise ValidationError(f"{path}: rules must map strings to strings")
    return GenreMap(tuple(targets), dict(rules))


def save_genre_map(genre_map: GenreMap, path: str) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(
            {"targets": list(genre_map.targets), "rules": dict(genre_map.rules)},
            handle,
            indent=2,
            sort_keys=True,
        )
        handle.write("\n")


def reduce_genres(genres: tuple[str, ...] | list[str], genre_map: GenreMap) -> str:
    """Collapse a genre list to one label.

    The first genre that maps into the canonical targets wins; failing that,
    the first original label verbatim; an empty list gives "unknown".
    """
    for genre in genres:
        if genre in genre_map.rules:
            return genre_map.rules[genre]
        if genre in genre_map.targets:
            return genre
    if genres:
        return genres[0]
    return UNKNOWN_GENRE


# --- pooling --------------------------------------------------------------


def pool_frames(table: EmbeddingTable) -> EmbeddingTable:
    """Mean-pool frames per clip; output order is first appearance, frame 0."""
    order: dict[str, int] = {}
    for clip_id in table.clip_ids:
        if clip_id not in order:
            order[clip_id] = len(order)
    index = np.fromiter((order[c] for c in table.clip_ids), dtype=np.int64, count=table.n_rows)
    sums = np.zeros((len(order), table.dim), dtype=np.float64)
    np.add.at(sums, index, table.vectors)
    counts = np.bincount(index, minlength=len(order)).astype(np.float64)
    means = sums / counts[:, None]
    return EmbeddingTable(tuple(order), np.zeros(len(order), dtype=np.int64), means)


# --- balanced subsampling -------------------------------------------------


def eligible_indices(manifest: Manifest, class_name: str, state: str) -> np.ndarray:
    """Indices of train-split records whose label for ``class_name`` equals ``state``."""
    if class_name not in manifest.classes:
        raise EmptyClassError(f"class {class_name!r} absent from manifest")
    hits = [
        i
        for i, r in enumerate(manifest.records)
        if r.split == TRAIN and r.labels.get(class_name, UNK) == state
    ]
    return np.asarray(hits, dtype=np.int64)


def balanced_subsample(
    manifest_a: Manifest,
    manifest_b: Manifest,
    class_name: str,
    state: str,
    seed: int,
) -> tuple[np.ndarray, np.ndarray]:
    """Size-matched uniform subsamples of train records in the given label state.

    Returns sorted record-index arrays into each manifest, both of size
    min(count_a, count_b). Deterministic for a given seed.
    """
    pool_a = eligible_indices(manifest_a, class_name, state)
    pool_b = eligible_indices(manifest_b, class_name, state)
    if len(pool_a) == 0 or len(pool_b) == 0:
        raise EmptyClassError(
            f"no train records with label {state!r} for class {class_name!r} "
            f"on side {'a' if len(pool_a) == 0 else 'b'}"
        )
    n = min(len(pool_a), len(pool_b))
    rng = np.random.default_rng(seed)
    take_a = np.sort(rng.choice(pool_a, size=n, replace=False))
    take_b = np.sort(rng.choice(pool_b, size=n, replace=False))
    return take_a, take_b
