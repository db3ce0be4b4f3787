"""Per-sample manual annotations: reference-object class and distance class.

Storage is an append-only JSON Lines log with an in-memory current view;
the newest ``updated_at`` wins per sample and prior versions stay in the log.
All mutations go through one writer lock.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Tuple

REFERENCE_CLASSES = (
    "hand",
    "coin_or_bottle_cap",
    "ruler",
    "small_household_object",
    "fruit",
    "unspecified_or_other",
)
DISTANCE_CLASSES = ("close_up", "distant")


class AnnotationError(ValueError):
    pass


def _utc(moment: datetime) -> datetime:
    if moment.tzinfo is None:
        return moment.replace(tzinfo=timezone.utc)
    return moment.astimezone(timezone.utc)


@dataclass(frozen=True)
class Annotation:
    sample_id: str
    reference: str
    distance: str
    annotator: str
    updated_at: datetime
    raw_object: Optional[str] = None

    def __post_init__(self) -> None:
        if self.reference not in REFERENCE_CLASSES:
            raise AnnotationError(f"invalid reference class: {self.reference!r}")
        if self.distance not in DISTANCE_CLASSES:
            raise AnnotationError(f"invalid distance class: {self.distance!r}")
        object.__setattr__(self, "updated_at", _utc(self.updated_at))

    def to_dict(self) -> dict:
        record = {
            "sample_id": self.sample_id,
            "reference": self.reference,
            "distance": self.distance,
            "annotator": self.annotator,
            "updated_at": self.updated_at.isoformat(),
        }
        if self.raw_object is not None:
            record["raw_object"] = self.raw_object
        return record

    @classmethod
    def from_dict(cls, data: dict) -> "Annotation":
        return cls(
            sample_id=data["sample_id"],
            reference=data["reference"],
            distance=data["distance"],
            annotator=data.get("annotator", ""),
            updated_at=datetime.fromisoformat(data["updated_at"]),
            raw_object=data.get("raw_object"),
        )


class AnnotationStore:
    """Append-only annotation log plus a last-write-wins current view."""

    def __init__(
        self,
        path: Optional[Path | str] = None,
        known_sample_ids: Optional[Iterable[str]] = None,
    ) -> None:
        self._path = Path(path) if path is not None else None
        self._known = set(known_sample_ids) if known_sample_ids is not None else None
        self._lock = threading.Lock()
        self._history: List[Annotation] = []
        self._current: Dict[str, Annotation] = {}
        if self._path is not None and self._path.is_file():
            for line in self._path.read_text(encoding="utf-8").splitlines():
                if line.strip():
                    self._apply(Annotation.from_dict(json.loads(line)))

    def _apply(self, annotation: Annotation) -> None:
        self._history.append(annotation)
        current = self._current.get(annotation.sample_id)
        # Equal timestamps resolve in favor of the later log line.
        if current is None or annotation.updated_at >= current.updated_at:
            self._current[annotation.sample_id] = annotation

    def upsert(self, annotation: Annotation) -> Annotation:
        if self._known is not None and annotation.sample_id not in self._known:
            raise AnnotationError(f"unknown sample: {annotation.sample_id!r}")
        with self._lock:
            self._apply(annotation)
            if self._path is not None:
                self._path.parent.mkdir(parents=True, exist_ok=True)
                with self._path.open("a", encoding="utf-8", newline="\n") as fh:
                    fh.write(json.dumps(annotation.to_dict()) + "\n")
        return annotation

    def current(self, sample_id: str) -> Optional[Annotation]:
        return self._current.get(sample_id)

    def current_view(self) -> Dict[str, Annotation]:
        return dict(self._current)

    @property
    def history_length(self) -> int:
        return len(self._history)

    def counts(
        self, sample_ids: Iterable[str]
    ) -> Tuple[Dict[str, int], int]:
        """Current reference-class counts over a dataset, plus the unannotated count."""
        counts = {cls: 0 for cls in REFERENCE_CLASSES}
        unannotated = 0
        for sample_id in sample_ids:
            annotation = self._current.get(sample_id)
            if annotation is None:
                unannotated += 1
            else:
                counts[annotation.reference] += 1
        return counts, unannotated

    def reference_lookup(self) -> Dict[str, str]:
        return {sid: a.reference for sid, a in self._current.items()}

    def distance_lookup(self) -> Dict[str, str]:
        return {sid: a.distance for sid, a in self._current.items()}

    def export(self, path: Path | str) -> None:
        """Write the current view (sorted by sample_id) as a fresh log."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", encoding="utf-8", newline="\n") as fh:
            for sample_id in sorted(self._current):
                fh.write(json.dumps(self._current[sample_id].to_dict()) + "\n")
