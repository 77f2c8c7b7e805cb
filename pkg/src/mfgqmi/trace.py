"""Per-outer-iteration learning records."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import StructuralError


@dataclass(frozen=True)
class TraceRow:
    k: int
    samples: int
    mse: float
    exploitability: float
    wall_ms: float = 0.0


@dataclass(frozen=True)
class LearningTrace:
    """Ordered rows of one seeded run plus free-form metadata.

    ``meta`` usually holds ``env``, ``algorithm``, ``seed`` and ``config_hash``.
    """

    rows: tuple[TraceRow, ...] = ()
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.rows)

    def append(self, row: TraceRow) -> LearningTrace:
        if self.rows:
            last = self.rows[-1]
            if row.k <= last.k:
                raise StructuralError(f"trace rows must be ordered by k ({row.k} after {last.k})")
            if row.samples < last.samples:
                raise StructuralError("cumulative sample counts must be nondecreasing")
        return replace(self, rows=self.rows + (row,))

    def with_meta(self, **meta) -> LearningTrace:
        return replace(self, meta={**self.meta, **meta})

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.rows])
