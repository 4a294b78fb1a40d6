from __future__ import annotations

import enum
from dataclasses import dataclass

from .episodes import ActionKind


class LandmarkKind(enum.Enum):
    OBJECT = "Object"
    REGION = "Region"


@dataclass(frozen=True)
class SubTask:
    """One (action, landmark) unit of a parsed instruction."""

    action: ActionKind
    landmark: str
    landmark_kind: LandmarkKind | None = None

    def __post_init__(self):
        landmark = self.landmark.strip()
        if not landmark:
            raise ValueError("landmark must be non-empty")
        object.__setattr__(self, "landmark", landmark)
        expected = LandmarkKind.REGION if self.action.targets_region else LandmarkKind.OBJECT
        if self.landmark_kind is None:
            object.__setattr__(self, "landmark_kind", expected)
        elif self.landmark_kind is not expected:
            raise ValueError(f"{self.action.value} requires a {expected.value} landmark")

    def to_json(self) -> dict:
        return {"action": self.action.value, "landmark": self.landmark, "landmark_kind": self.landmark_kind.value}

    @classmethod
    def from_json(cls, d: dict) -> SubTask:
        return cls(ActionKind.parse(d["action"]), d["landmark"])

    def __str__(self) -> str:
        return f"({self.action.value}, {self.landmark})"
