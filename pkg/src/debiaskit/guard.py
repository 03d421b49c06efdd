"""Train/test isolation instrumentation.

Every read of embedding rows inside the pipeline goes through a guard that
knows which clip indices belong to the held-out split and which phase the
pipeline is in. Touching held-out rows during any fitting phase (pooling
statistics, bias estimation, kernel fitting, model selection, training)
raises immediately; only the scoring phase may read them. The audit trail
records each access so a run can prove after the fact that isolation held.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import LeakageError

PHASE_POOL = "pool"
PHASE_STANDARDIZE = "standardize"
PHASE_KERNEL = "kernel"
PHASE_BIAS = "bias"
PHASE_TRAIN = "train"
PHASE_EVALUATE = "evaluate"

FIT_PHASES = (PHASE_POOL, PHASE_STANDARDIZE, PHASE_KERNEL, PHASE_BIAS, PHASE_TRAIN)
ALL_PHASES = FIT_PHASES + (PHASE_EVALUATE,)


@dataclass
class AccessRecord:
    phase: str
    dataset: str
    n_rows: int
    n_test_rows: int


@dataclass
class SplitGuard:
    """Tracks the active phase and audits row access per dataset."""

    test_indices: dict[str, np.ndarray]
    phase: str = PHASE_POOL
    records: list[AccessRecord] = field(default_factory=list)

    def __post_init__(self) -> None:
        self.test_indices = {
            name: np.asarray(idx, dtype=np.intp) for name, idx in self.test_indices.items()
        }
        self._test_sets = {name: frozenset(idx.tolist()) for name, idx in self.test_indices.items()}

    def enter(self, phase: str) -> None:
        if phase not in ALL_PHASES:
            raise ValueError(f"unknown pipeline phase {phase!r}")
        self.phase = phase

    def check(self, dataset: str, indices: np.ndarray) -> None:
        """Record an access; reject held-out rows outside the scoring phase."""
        test_set = self._test_sets.get(dataset, frozenset())
        touched = [i for i in np.asarray(indices).ravel().tolist() if i in test_set]
        self.records.append(
            AccessRecord(self.phase, dataset, int(np.asarray(indices).size), len(touched))
        )
        if touched and self.phase != PHASE_EVALUATE:
            raise LeakageError(
                f"held-out rows of {dataset!r} read during phase {self.phase!r}: "
                f"indices {sorted(touched)[:5]}{'...' if len(touched) > 5 else ''}"
            )

    def audit(self) -> dict:
        """Summary suitable for writing next to run outputs."""
        per_phase: dict[str, dict[str, int]] = {}
        for record in self.records:
            bucket = per_phase.setdefault(
                record.phase, {"reads": 0, "rows": 0, "test_rows": 0}
            )
            bucket["reads"] += 1
            bucket["rows"] += record.n_rows
            bucket["test_rows"] += record.n_test_rows
        fit_test_rows = sum(
            per_phase.get(p, {}).get("test_rows", 0) for p in FIT_PHASES
        )
        return {
            "phases": per_phase,
            "test_rows_read_during_fit": fit_test_rows,
            "clean": fit_test_rows == 0,
        }
