"""Image manifests, detector crops, the append-only event log, and dataset export.

All on-disk formats are newline-delimited JSON. The event log is the single
source of truth for a campaign: every state change is appended (and flushed to
disk when file-backed) before it is acknowledged, and replaying the log
reconstructs the exact campaign state that produced it.
"""
from __future__ import annotations

import json
import os
import time
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Optional, Sequence

from .engine import LabelOutcome, OutcomeKind
from .errors import IntegrityError, ManifestError, StateError
from .hierarchy import Hierarchy

# ---------------------------------------------------------------------------
# Image records and manifests


@dataclass(frozen=True)
class CropBox:
    x: int
    y: int
    width: int
    height: int

    def __post_init__(self):
        if self.x < 0 or self.y < 0:
            raise IntegrityError(f"crop origin must be non-negative: ({self.x}, {self.y})")
        if self.width < 1 or self.height < 1:
            raise IntegrityError(f"crop extent must be >= 1: {self.width}x{self.height}")

    def payload(self) -> dict:
        return {"x": self.x, "y": self.y, "w": self.width, "h": self.height}

    @classmethod
    def from_payload(cls, data: dict) -> "CropBox":
        if not isinstance(data, dict) or set(data) != {"x", "y", "w", "h"}:
            raise IntegrityError(f"crop must be an object with keys x,y,w,h: {data!r}")
        if not all(isinstance(data[k], int) and not isinstance(data[k], bool) for k in ("x", "y", "w", "h")):
            raise IntegrityError(f"crop coordinates must be integers: {data!r}")
        return cls(data["x"], data["y"], data["w"], data["h"])


@dataclass(frozen=True)
class DetectorCrop:
    """Where a cropped record came from: parent image, detector, confidence."""

    parent_image_id: str
    detector: str
    confidence: float

    def __post_init__(self):
        if not 0.0 <= self.confidence <= 1.0:
            raise IntegrityError(f"confidence must be in [0, 1], got {self.confidence}")


@dataclass(frozen=True)
class ImageRecord:
    """One annotatable image. ``crop`` and ``source`` come together or not at all:
    a record either is an original or is a detector crop of one."""

    image_id: str
    uri: str
    domain_hint: str = ""
    crop: Optional[CropBox] = None
    source: Optional[DetectorCrop] = None
    exclude: bool = False

    def __post_init__(self):
        if not self.image_id:
            raise IntegrityError("image_id must be non-empty")
        if not self.uri:
            raise IntegrityError(f"image {self.image_id!r} has no uri")
        if (self.crop is None) != (self.source is None):
            raise IntegrityError(f"image {self.image_id!r}: crop and source must come together")

    def payload(self) -> dict:
        data: dict = {"image_id": self.image_id, "uri": self.uri}
        if self.domain_hint:
            data["domain"] = self.domain_hint
        if self.crop is not None and self.source is not None:
            data["crop"] = self.crop.payload()
            data["source"] = {
                "parent_image_id": self.source.parent_image_id,
                "detector": self.source.detector,
                "confidence": self.source.confidence,
            }
        if self.exclude:
            data["exclude"] = True
        return data

    @classmethod
    def from_payload(cls, data: dict) -> "ImageRecord":
        source = None
        if "source" in data:
            source = DetectorCrop(
                parent_image_id=data["source"]["parent_image_id"],
                detector=data["source"]["detector"],
                confidence=data["source"]["confidence"],
            )
        return cls(
            image_id=data["image_id"],
            uri=data["uri"],
            domain_hint=data.get("domain", ""),
            crop=CropBox.from_payload(data["crop"]) if "crop" in data else None,
            source=source,
            exclude=bool(data.get("exclude", False)),
        )


_MANIFEST_FIELDS = {"image_id", "uri", "domain", "crop", "exclude"}
MANIFEST_DETECTOR = "manifest"  # source name recorded for rows that arrive pre-cropped


def parse_manifest(document: str) -> list[ImageRecord]:
    """Parse a newline-delimited manifest; errors carry the 1-based line number."""
    records: list[ImageRecord] = []
    positions: dict[str, int] = {}
    duplicates: dict[str, list[int]] = {}
    for lineno, line in enumerate(document.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            row = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ManifestError(f"invalid record: {exc.msg}", line=lineno) from None
        if not isinstance(row, dict):
            raise ManifestError("record must be an object", line=lineno)
        unknown = set(row) - _MANIFEST_FIELDS
        if unknown:
            raise ManifestError(f"unknown field(s): {sorted(unknown)}", line=lineno)
        for name in ("image_id", "uri"):
            if not isinstance(row.get(name), str) or not row[name]:
                raise ManifestError(f'field "{name}" must be a non-empty string', line=lineno)
        if "domain" in row and not isinstance(row["domain"], str):
            raise ManifestError('field "domain" must be a string', line=lineno)
        if "exclude" in row and not isinstance(row["exclude"], bool):
            raise ManifestError('field "exclude" must be a boolean', line=lineno)
        crop = None
        source = None
        if "crop" in row:
            try:
                crop = CropBox.from_payload(row["crop"])
            except IntegrityError as exc:
                raise ManifestError(str(exc), line=lineno) from None
            # a pre-cropped row is its own localization parent; the upstream tool is unnamed
            source = DetectorCrop(parent_image_id=row["image_id"], detector=MANIFEST_DETECTOR, confidence=1.0)
        record = ImageRecord(
            image_id=row["image_id"],
            uri=row["uri"],
            domain_hint=row.get("domain", ""),
            crop=crop,
            source=source,
            exclude=row.get("exclude", False),
        )
        if record.image_id in positions:
            duplicates.setdefault(record.image_id, [positions[record.image_id]]).append(lineno)
        else:
            positions[record.image_id] = lineno
            records.append(record)
    if duplicates:
        detail = "; ".join(f"{iid!r} at lines {lines}" for iid, lines in sorted(duplicates.items()))
        raise IntegrityError(f"duplicate image ids: {detail}")
    return records


@dataclass(frozen=True)
class IngestResult:
    added: tuple[ImageRecord, ...]
    duplicates: tuple[str, ...]  # ids already present with identical content


def ingest_manifest(document: str, existing: Sequence[ImageRecord] = ()) -> IngestResult:
    """Parse a manifest and merge against existing records.

    Re-ingesting the same manifest is a no-op that reports every row as a
    duplicate; same id with different content is an integrity error.
    """
    known = {record.image_id: record for record in existing}
    added: list[ImageRecord] = []
    duplicates: list[str] = []
    for record in parse_manifest(document):
        prior = known.get(record.image_id)
        if prior is None:
            known[record.image_id] = record
            added.append(record)
        elif prior == record:
            duplicates.append(record.image_id)
        else:
            raise IntegrityError(f"image id {record.image_id!r} already ingested with different content")
    return IngestResult(added=tuple(added), duplicates=tuple(duplicates))


# ---------------------------------------------------------------------------
# Detector output and localization


@dataclass(frozen=True)
class DetectionBox:
    box: CropBox
    confidence: float
    label: str = ""

    def __post_init__(self):
        if not 0.0 <= self.confidence <= 1.0:
            raise IntegrityError(f"confidence must be in [0, 1], got {self.confidence}")


@dataclass(frozen=True)
class DetectionRow:
    image_id: str
    detector: str
    boxes: tuple[DetectionBox, ...]


def parse_detections(document: str) -> list[DetectionRow]:
    """Parse newline-delimited detector output rows."""
    rows: list[DetectionRow] = []
    for lineno, line in enumerate(document.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            row = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ManifestError(f"invalid record: {exc.msg}", line=lineno) from None
        if not isinstance(row, dict) or set(row) - {"image_id", "detector", "boxes"}:
            raise ManifestError("record must have fields image_id, detector, boxes", line=lineno)
        if not isinstance(row.get("image_id"), str) or not isinstance(row.get("detector"), str):
            raise ManifestError("image_id and detector must be strings", line=lineno)
        if not isinstance(row.get("boxes"), list):
            raise ManifestError('"boxes" must be an array', line=lineno)
        boxes = []
        for raw in row["boxes"]:
            if not isinstance(raw, dict) or "confidence" not in raw:
                raise ManifestError("each box needs x,y,w,h and confidence", line=lineno)
            try:
                box = CropBox.from_payload({k: raw[k] for k in ("x", "y", "w", "h") if k in raw})
            except IntegrityError as exc:
                raise ManifestError(str(exc), line=lineno) from None
            confidence = raw["confidence"]
            if not isinstance(confidence, (int, float)) or isinstance(confidence, bool):
                raise ManifestError("confidence must be a number", line=lineno)
            try:
                detection = DetectionBox(box=box, confidence=float(confidence), label=raw.get("label", ""))
            except IntegrityError as exc:
                raise ManifestError(str(exc), line=lineno) from None
            boxes.append(detection)
        rows.append(DetectionRow(image_id=row["image_id"], detector=row["detector"], boxes=tuple(boxes)))
    return rows


def apply_localization(
    original: ImageRecord,
    boxes: Sequence[DetectionBox],
    detector: str,
    min_confidence: float = 0.5,
    bounds: tuple[int, int] | None = None,
) -> list[ImageRecord]:
    """Turn detector boxes into cropped child records.

    Child ids derive from the parent id plus the input box index, so they are
    stable under confidence-threshold changes. Only crop metadata is emitted;
    pixel cropping belongs to the caller.
    """
    if original.source is not None:
        raise IntegrityError(f"image {original.image_id!r} is already a crop")
    children: list[ImageRecord] = []
    for index, detection in enumerate(boxes, start=1):
        if bounds is not None:
            width, height = bounds
            box = detection.box
            if box.x + box.width > width or box.y + box.height > height:
                raise IntegrityError(
                    f"box {index} of {original.image_id!r} exceeds image bounds {width}x{height}"
                )
        if detection.confidence < min_confidence:
            continue
        children.append(
            ImageRecord(
                image_id=f"{original.image_id}#crop{index}",
                uri=original.uri,
                domain_hint=original.domain_hint,
                crop=detection.box,
                source=DetectorCrop(
                    parent_image_id=original.image_id,
                    detector=detector,
                    confidence=detection.confidence,
                ),
            )
        )
    return children


# ---------------------------------------------------------------------------
# Event log

EVENT_KINDS = (
    "CampaignCreated",
    "AnnotatorRegistered",
    "TaskClaimed",
    "SessionStarted",
    "QuestionAsked",
    "AnswerGiven",
    "SessionFinished",
    "TaskCompleted",
    "ConsensusReached",
    "EscalationOpened",
    "TaskExpired",
)

_SESSION_KINDS = {"SessionStarted", "QuestionAsked", "AnswerGiven", "SessionFinished"}


@dataclass(frozen=True)
class EventRecord:
    seq: int
    ts: float
    kind: str
    data: dict = field(compare=True)

    def line(self) -> str:
        return json.dumps(
            {"seq": self.seq, "ts": self.ts, "kind": self.kind, "data": self.data},
            sort_keys=True,
            separators=(",", ":"),
        )


class EventLog:
    """Append-only campaign journal with optional file backing.

    Sequence numbers are contiguous from 1. Appends are flushed and fsynced
    before returning when file-backed, so an acknowledged event survives a
    crash. Per-session ordering (Started, then asks/answers in sequence, then
    Finished) is enforced at append time.
    """

    def __init__(self, path: str | os.PathLike | None = None, clock: Callable[[], float] | None = None):
        self._records: list[EventRecord] = []
        self._clock = clock if clock is not None else time.time
        self._session_answers: dict[str, int] = {}
        self._session_state: dict[str, str] = {}  # "started" | "finished"
        self._path = os.fspath(path) if path is not None else None
        self._fh = None
        if self._path is not None:
            if os.path.exists(self._path):
                with open(self._path, "r", encoding="utf-8") as fh:
                    for lineno, line in enumerate(fh, start=1):
                        if not line.strip():
                            continue
                        try:
                            raw = json.loads(line)
                        except json.JSONDecodeError as exc:
                            raise IntegrityError(f"corrupt event log at line {lineno}: {exc.msg}") from None
                        record = EventRecord(seq=raw["seq"], ts=raw["ts"], kind=raw["kind"], data=raw["data"])
                        self._validate(record)
                        self._records.append(record)
                        self._track(record)
            self._fh = open(self._path, "a", encoding="utf-8")

    @classmethod
    def open(cls, path: str | os.PathLike, clock: Callable[[], float] | None = None) -> "EventLog":
        """Open an existing (or new) file-backed log, loading prior records."""
        return cls(path=path, clock=clock)

    @property
    def path(self) -> str | None:
        return self._path

    def next_seq(self) -> int:
        return len(self._records) + 1

    def now(self) -> float:
        """Current time from the log's clock (the same source event ts uses)."""
        return float(self._clock())

    def append(self, kind: str, data: dict) -> EventRecord:
        record = EventRecord(seq=self.next_seq(), ts=float(self._clock()), kind=kind, data=data)
        self._validate(record)
        if self._fh is not None:
            self._fh.write(record.line() + "\n")
            self._fh.flush()
            os.fsync(self._fh.fileno())
        self._records.append(record)
        self._track(record)
        return record

    def _validate(self, record: EventRecord) -> None:
        if record.kind not in EVENT_KINDS:
            raise IntegrityError(f"unknown event kind {record.kind!r}")
        if record.seq != len(self._records) + 1:
            raise IntegrityError(f"event seq {record.seq} breaks the contiguous order")
        if record.kind in _SESSION_KINDS:
            session_id = record.data.get("session_id")
            if not session_id:
                raise IntegrityError(f"{record.kind} event lacks a session_id")
            state = self._session_state.get(session_id)
            if record.kind == "SessionStarted":
                if state is not None:
                    raise IntegrityError(f"session {session_id!r} started twice")
            elif state is None:
                raise IntegrityError(f"{record.kind} for unknown session {session_id!r}")
            elif state == "finished":
                raise IntegrityError(f"{record.kind} after session {session_id!r} finished")
            if record.kind == "AnswerGiven":
                expected = self._session_answers.get(session_id, 0) + 1
                if record.data.get("sequence_no") != expected:
                    raise IntegrityError(
                        f"session {session_id!r}: answer sequence_no "
                        f"{record.data.get('sequence_no')} out of order (expected {expected})"
                    )

    def _track(self, record: EventRecord) -> None:
        if record.kind == "SessionStarted":
            self._session_state[record.data["session_id"]] = "started"
        elif record.kind == "SessionFinished":
            self._session_state[record.data["session_id"]] = "finished"
        elif record.kind == "AnswerGiven":
            self._session_answers[record.data["session_id"]] = record.data["sequence_no"]

    def records(self) -> tuple[EventRecord, ...]:
        return tuple(self._records)

    def __iter__(self):
        return iter(self._records)

    def __len__(self) -> int:
        return len(self._records)

    def dump(self) -> str:
        return "".join(record.line() + "\n" for record in self._records)

    def close(self) -> None:
        if self._fh is not None:
            self._fh.close()
            self._fh = None


def append_event(log: EventLog, kind: str, data: dict) -> int:
    """Append one event; returns its sequence number."""
    return log.append(kind, data).seq


# ---------------------------------------------------------------------------
# Dataset export


def compose_description(h: Hierarchy, label) -> str:
    """Fixed composition rule for the natural-language description.

    "<name>: a <parent name> with <differentia>" for the labeled node, then
    "; <ancestor name>: <ancestor differentia>" for each ancestor up to the
    root. A root label is just "<name>: <differentia>".
    """
    nodes = h.path_nodes(label)
    node = nodes[-1]
    if len(nodes) == 1:
        return f"{node.name}: {node.differentia}"
    parent = nodes[-2]
    parts = [f"{node.name}: a {parent.name} with {node.differentia}"]
    for ancestor in reversed(nodes[:-1]):
        parts.append(f"{ancestor.name}: {ancestor.differentia}")
    return "; ".join(parts)


def export_rows(
    h: Hierarchy,
    images: Sequence[ImageRecord],
    finals: Mapping[str, LabelOutcome],
    annotator_counts: Mapping[str, int],
    escalation_rounds: Mapping[str, int],
) -> list[dict]:
    """Build export rows for every Final image, in the given image order."""
    rows: list[dict] = []
    for record in images:
        outcome = finals.get(record.image_id)
        if outcome is None:
            continue
        if outcome.label is not None and outcome.label not in h:
            raise IntegrityError(
                f"final label {outcome.label.render()!r} for {record.image_id!r} is not in the hierarchy"
            )
        if outcome.label is not None:
            nodes = h.path_nodes(outcome.label)
            levels = [
                {"id": n.id.render(), "name": n.name, "genus": n.genus, "differentia": n.differentia}
                for n in nodes
            ]
            label = outcome.label.render()
            description = compose_description(h, outcome.label)
            if outcome.kind is OutcomeKind.UNRECOGNISED_AT:
                description += "; unrecognised finer kind"
        else:
            levels = []
            label = None
            description = "Not recognised as any listed category"
        rows.append(
            {
                "image_id": record.image_id,
                "uri": record.uri,
                "outcome": outcome.kind.value,
                "label": label,
                "levels": levels,
                "description": description,
                "annotator_count": annotator_counts.get(record.image_id, 0),
                "escalation_rounds": escalation_rounds.get(record.image_id, 0),
            }
        )
    if not rows:
        raise StateError("nothing to export: the campaign has no Final images")
    return rows


_EXPORT_FIELDS = [
    "image_id",
    "uri",
    "outcome",
    "label",
    "levels",
    "description",
    "annotator_count",
    "escalation_rounds",
]


def render_export(rows: Iterable[dict]) -> str:
    """Canonical newline-delimited serialization (fixed key order, compact)."""
    lines = []
    for row in rows:
        ordered = {name: row[name] for name in _EXPORT_FIELDS}
        lines.append(json.dumps(ordered, sort_keys=True, separators=(",", ":")))
    return "\n".join(lines) + "\n"


def parse_export(document: str) -> list[dict]:
    """Parse an export document; validates row shape and path consistency."""
    rows: list[dict] = []
    for lineno, line in enumerate(document.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            row = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ManifestError(f"invalid export row: {exc.msg}", line=lineno) from None
        if not isinstance(row, dict) or set(row) != set(_EXPORT_FIELDS):
            raise ManifestError(f"export row must have fields {_EXPORT_FIELDS}", line=lineno)
        levels = row["levels"]
        if row["label"] is not None:
            ids = [level["id"] for level in levels]
            if not ids or ids[-1] != row["label"]:
                raise ManifestError("levels must end at the label", line=lineno)
            for k, rendered in enumerate(ids):
                parts = rendered.split("-")
                if len(parts) != k + 1 or (k > 0 and ids[k - 1] != "-".join(parts[:-1])):
                    raise ManifestError("levels are not an ancestor chain", line=lineno)
        rows.append(row)
    return rows
