"""ESWD-style event table ingestion and per-image sample construction.

Events with multiple photos fan out into one sample per image; events lacking
a maximum diameter or any resolvable image are dropped. Ground-truth diameters
carry 0.5 cm granularity and every sample must respect it.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
from dataclasses import dataclass, field
from datetime import datetime, timezone
from decimal import Decimal, InvalidOperation
from pathlib import Path
from typing import Callable, Dict, List, Mapping, Optional, Tuple

import numpy as np

log = logging.getLogger(__name__)

CSV_COLUMNS = [
    "event_id",
    "time_utc",
    "country",
    "state",
    "location",
    "lat",
    "lon",
    "max_diameter_cm",
    "image_refs",
]

SAMPLE_KEYS = ["sample_id", "event_id", "image_path", "truth_diameter_cm"]


class DatasetError(ValueError):
    pass


@dataclass
class HailEvent:
    event_id: str
    time_utc: datetime
    country: str
    state: str
    location: str
    latitude: float
    longitude: float
    max_diameter_cm: Optional[float]
    image_refs: List[str] = field(default_factory=list)


@dataclass(frozen=True)
class Sample:
    sample_id: str
    event_id: str
    image_path: str
    truth_diameter_cm: float

    def to_dict(self) -> dict:
        return {
            "sample_id": self.sample_id,
            "event_id": self.event_id,
            "image_path": self.image_path,
            "truth_diameter_cm": self.truth_diameter_cm,
        }


@dataclass(frozen=True)
class RejectedRow:
    row_number: int  # 1-based CSV line number, header is line 1
    event_id: str
    reason: str


@dataclass
class DatasetStats:
    n: int
    min_cm: float
    max_cm: float
    mean_cm: float
    std_cm: float
    q1_cm: float
    q3_cm: float
    histogram: Dict[str, Dict[float, int]]
    close_up_fraction: float


def parse_half_cm(text: str) -> float:
    """Parse a diameter that must be a positive exact multiple of 0.5 cm."""
    try:
        value = Decimal(text.strip())
    except InvalidOperation:
        raise DatasetError(f"diameter is not a number: {text!r}") from None
    if value <= 0:
        raise DatasetError(f"diameter must be positive: {text!r}")
    if value % Decimal("0.5") != 0:
        raise DatasetError(f"diameter is not a multiple of 0.5 cm: {text!r}")
    return float(value)


def _parse_time(text: str) -> datetime:
    try:
        stamp = datetime.fromisoformat(text.strip().replace("Z", "+00:00"))
    except ValueError:
        raise DatasetError(f"malformed timestamp: {text!r}") from None
    if stamp.tzinfo is None:
        stamp = stamp.replace(tzinfo=timezone.utc)
    return stamp.astimezone(timezone.utc)


def load_events(csv_path: Path | str) -> Tuple[List[HailEvent], List[RejectedRow]]:
    """Load the event table; malformed rows land in the rejects list.

    Raises on structural problems (missing file, wrong header, duplicate
    event ids); per-row coordinate, timestamp, or diameter defects only
    reject that row.
    """
    csv_path = Path(csv_path)
    if not csv_path.is_file():
        raise FileNotFoundError(f"event table not found: {csv_path}")
    with csv_path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DatasetError("event table is empty") from None
        if header != CSV_COLUMNS:
            missing = [c for c in CSV_COLUMNS if c not in header]
            raise DatasetError(
                f"unexpected header {header!r}; missing columns: {missing or 'none, order differs'}"
            )
        events: List[HailEvent] = []
        rejects: List[RejectedRow] = []
        seen: Dict[str, int] = {}
        for line_no, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != len(CSV_COLUMNS):
                rejects.append(RejectedRow(line_no, row[0] if row else "", "wrong column count"))
                continue
            record = dict(zip(CSV_COLUMNS, row))
            event_id = record["event_id"].strip()
            if not event_id:
                rejects.append(RejectedRow(line_no, "", "empty event_id"))
                continue
            if event_id in seen:
                raise DatasetError(
                    f"duplicate event_id {event_id!r} at lines {seen[event_id]} and {line_no}"
                )
            try:
                lat = float(record["lat"])
                lon = float(record["lon"])
            except ValueError:
                rejects.append(RejectedRow(line_no, event_id, "unparseable coordinates"))
                continue
            if not (-90.0 <= lat <= 90.0 and -180.0 <= lon <= 180.0):
                rejects.append(RejectedRow(line_no, event_id, "coordinates out of range"))
                continue
            try:
                time_utc = _parse_time(record["time_utc"])
            except DatasetError as exc:
                rejects.append(RejectedRow(line_no, event_id, str(exc)))
                continue
            diameter_text = record["max_diameter_cm"].strip()
            diameter: Optional[float] = None
            if diameter_text:
                try:
                    diameter = parse_half_cm(diameter_text)
                except DatasetError as exc:
                    rejects.append(RejectedRow(line_no, event_id, str(exc)))
                    continue
            refs = [r.strip() for r in record["image_refs"].split(";") if r.strip()]
            seen[event_id] = line_no
            events.append(
                HailEvent(
                    event_id=event_id,
                    time_utc=time_utc,
                    country=record["country"].strip(),
                    state=record["state"].strip(),
                    location=record["location"].strip(),
                    latitude=lat,
                    longitude=lon,
                    max_diameter_cm=diameter,
                    image_refs=refs,
                )
            )
    return events, rejects


def is_remote_ref(ref: str) -> bool:
    return ref.startswith("http://") or ref.startswith("https://")


def local_name_for_url(url: str) -> str:
    """Deterministic local filename a fetched remote image is stored under."""
    return hashlib.sha256(url.encode("utf-8")).hexdigest()[:16] + ".jpg"


def resolve_image_ref(ref: str, image_root: Optional[Path]) -> Path:
    """Map an image ref to a local path; remote refs map to their fetch target."""
    if is_remote_ref(ref):
        base = image_root if image_root is not None else Path(".")
        return base / local_name_for_url(ref)
    path = Path(ref)
    if path.is_absolute() or image_root is None:
        return path
    return image_root / ref


def build_samples(
    events: List[HailEvent],
    *,
    image_root: Optional[Path | str] = None,
    check_readable: bool = True,
) -> List[Sample]:
    """Fan events out into one sample per image.

    Events without a diameter or without image refs are dropped. An
    unresolvable image path excludes just that sample, with a log line.
    """
    image_root = Path(image_root) if image_root is not None else None
    samples: List[Sample] = []
    for event in events:
        if event.max_diameter_cm is None or not event.image_refs:
            continue
        for index, ref in enumerate(event.image_refs, start=1):
            path = resolve_image_ref(ref, image_root)
            if check_readable and not path.is_file():
                log.warning(
                    "skipping %s image %d: unresolvable ref %r", event.event_id, index, ref
                )
                continue
            samples.append(
                Sample(
                    sample_id=f"{event.event_id}-{index:02d}",
                    event_id=event.event_id,
                    image_path=str(path),
                    truth_diameter_cm=event.max_diameter_cm,
                )
            )
    return samples


def write_samples(samples: List[Sample], path: Path | str) -> None:
    """Write the canonical JSON Lines dataset (fixed key order, one per line)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        for sample in samples:
            fh.write(json.dumps(sample.to_dict()) + "\n")


def load_samples(path: Path | str) -> List[Sample]:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"dataset not found: {path}")
    samples: List[Sample] = []
    ids = set()
    for line_no, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        data = json.loads(line)
        missing = [k for k in SAMPLE_KEYS if k not in data]
        if missing:
            raise DatasetError(f"line {line_no}: missing keys {missing}")
        truth = data["truth_diameter_cm"]
        parse_half_cm(str(truth))
        sample = Sample(
            sample_id=data["sample_id"],
            event_id=data["event_id"],
            image_path=data["image_path"],
            truth_diameter_cm=float(truth),
        )
        if sample.sample_id in ids:
            raise DatasetError(f"duplicate sample_id {sample.sample_id!r}")
        ids.add(sample.sample_id)
        samples.append(sample)
    return samples


def truth_lookup(samples: List[Sample]) -> Dict[str, float]:
    return {s.sample_id: s.truth_diameter_cm for s in samples}


def compute_stats(
    samples: List[Sample],
    distances: Mapping[str, str] | None = None,
) -> DatasetStats:
    """Descriptive statistics over ground-truth diameters.

    Mean is arithmetic, std is population (divide by n), quartiles use linear
    interpolation between closest ranks. Histogram bins are [k, k + 0.5) keyed
    by k, with one series per distance class plus ``unannotated``.
    """
    if not samples:
        raise DatasetError("cannot compute statistics over an empty dataset")
    distances = distances or {}
    truths = np.array([s.truth_diameter_cm for s in samples], dtype=float)
    histogram: Dict[str, Dict[float, int]] = {}
    close_up = 0
    for sample in samples:
        series = distances.get(sample.sample_id, "unannotated")
        if series == "close_up":
            close_up += 1
        bin_start = float(np.floor(sample.truth_diameter_cm / 0.5) * 0.5)
        bins = histogram.setdefault(series, {})
        bins[bin_start] = bins.get(bin_start, 0) + 1
    return DatasetStats(
        n=len(samples),
        min_cm=float(truths.min()),
        max_cm=float(truths.max()),
        mean_cm=float(truths.mean()),
        std_cm=float(truths.std()),
        q1_cm=float(np.quantile(truths, 0.25)),
        q3_cm=float(np.quantile(truths, 0.75)),
        histogram=histogram,
        close_up_fraction=close_up / len(samples),
    )


def fetch_remote_images(
    events: List[HailEvent],
    image_root: Path | str,
    *,
    download: Optional[Callable[[str], bytes]] = None,
) -> Tuple[int, int]:
    """Explicitly fetch remote image refs into the local image directory.

    Runs never do this implicitly. Returns (fetched, failed). Downloaded bytes
    are normalized to baseline JPEG before they land on disk.
    """
    from .gateway import normalize_image

    if download is None:
        import requests

        def download(url: str) -> bytes:
            response = requests.get(url, timeout=60)
            response.raise_for_status()
            return response.content

    image_root = Path(image_root)
    image_root.mkdir(parents=True, exist_ok=True)
    fetched = failed = 0
    for event in events:
        for ref in event.image_refs:
            if not is_remote_ref(ref):
                continue
            target = image_root / local_name_for_url(ref)
            if target.is_file():
                continue
            try:
                target.write_bytes(normalize_image(download(ref)))
                fetched += 1
            except Exception as exc:  # keep fetching, a bad URL must not abort the batch
                log.warning("fetch failed for %s: %s", ref, exc)
                failed += 1
    return fetched, failed
