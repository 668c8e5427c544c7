"""Result container shared by both Boruta drivers."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

IMPORTANT = "important"
UNIMPORTANT = "unimportant"
TENTATIVE = "tentative"


@dataclass(eq=False)
class SelectionResult:
    """Per-feature hit and importance histories plus the final decisions.

    ``hit_history[f]`` has one entry per iteration feature ``f`` competed in;
    it stops growing once ``f`` is decided.
    """

    method: str
    feature_names: list[str]
    hit_history: list[list[bool]]
    importance_history: list[list[float]]
    decision: list[str]
    iterations_run: int = 0
    decided_at: list[int | None] = field(default_factory=list)
    max_shadow_history: list[float] = field(default_factory=list)
    flags: list[dict] = field(default_factory=list)
    finalized: bool = False

    @classmethod
    def empty(cls, method: str, feature_names) -> "SelectionResult":
        p = len(feature_names)
        return cls(method, list(feature_names), [[] for _ in range(p)], [[] for _ in range(p)],
                   [TENTATIVE] * p, decided_at=[None] * p)

    @property
    def hits(self) -> np.ndarray:
        return np.array([sum(h) for h in self.hit_history], dtype=np.int64)

    def to_dict(self) -> dict:
        sel = selected_features(self) if self.finalized else []
        return {
            "method": self.method,
            "iterations_run": self.iterations_run,
            "selected": [int(i) for i in sel],
            "selected_names": [self.feature_names[i] for i in sel],
            "empty_selection": self.finalized and not sel,
            "features": [
                {"name": name, "decision": self.decision[f], "hits": int(sum(self.hit_history[f])),
                 "decided_at": self.decided_at[f],
                 "hit_history": [bool(h) for h in self.hit_history[f]],
                 "importance_history": [float(v) for v in self.importance_history[f]]}
                for f, name in enumerate(self.feature_names)
            ],
            "max_shadow_history": [float(v) for v in self.max_shadow_history],
            "flags": self.flags,
        }


def selected_features(result: SelectionResult) -> list[int]:
    """Indices decided important, ascending."""
    if not result.finalized:
        raise ValueError("selection result is not finalized")
    return [f for f, d in enumerate(result.decision) if d == IMPORTANT]
