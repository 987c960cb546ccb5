"""Task building, claim assignment, and vote aggregation.

Images are grouped into fixed-size tasks. Each task must be annotated by
``target_replication`` distinct annotators (a pass each); per-image votes are
aggregated by exact-match majority. Three-way disagreement escalates the image
to one extra annotator at a time until a configurable replication cap, after
which the image is Unresolved and excluded from export.
"""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Optional

from .engine import LabelOutcome
from .errors import ConfigurationError, IntegrityError


@dataclass(frozen=True)
class Task:
    task_id: str
    image_ids: tuple[str, ...]
    protocol: Optional[str] = None  # recorded for reporting; campaigns are single-protocol
    size: int = 50

    def __post_init__(self):
        if self.size < 1:
            raise ConfigurationError("task size must be >= 1")
        if len(set(self.image_ids)) != len(self.image_ids):
            raise IntegrityError(f"task {self.task_id} repeats an image id")


def build_tasks(image_ids: list[str], size: int, protocol=None) -> tuple[Task, ...]:
    """Partition ``image_ids`` in order into tasks of ``size`` (last may be short)."""
    if size < 1:
        raise ConfigurationError(f"task size must be >= 1, got {size}")
    if len(set(image_ids)) != len(image_ids):
        raise IntegrityError("image ids must be distinct")
    chunks = [image_ids[i : i + size] for i in range(0, len(image_ids), size)]
    width = max(3, len(str(len(chunks))))
    protocol_value = getattr(protocol, "value", protocol)
    return tuple(
        Task(
            task_id=f"task-{i + 1:0{width}d}",
            image_ids=tuple(chunk),
            protocol=protocol_value,
            size=size,
        )
        for i, chunk in enumerate(chunks)
    )


class AssignmentStatus(str, Enum):
    CLAIMED = "claimed"
    COMPLETED = "completed"
    EXPIRED = "expired"


@dataclass
class Assignment:
    """One annotator's claim on one task: the pass they are working through."""

    annotator_id: str
    task_id: str
    status: AssignmentStatus
    image_ids: tuple[str, ...]  # images this pass covers (a subset during escalation)
    pending_image_ids: tuple[str, ...]  # not yet finished within this pass
    claimed_ts: float = 0.0
    completion_code: str = ""

    @property
    def key(self) -> str:
        return f"{self.annotator_id}:{self.task_id}"


def vote_key(outcome: LabelOutcome) -> str:
    """Label equality for consensus: exact match on (outcome kind, node id)."""
    if outcome.label is None:
        return outcome.kind.value
    return f"{outcome.kind.value}:{outcome.label.render()}"


@dataclass
class VoteSet:
    image_id: str
    votes: list[tuple[str, LabelOutcome]] = field(default_factory=list)
    target_replication: int = 3

    def add(self, annotator_id: str, outcome: LabelOutcome) -> None:
        if any(a == annotator_id for a, _ in self.votes):
            raise IntegrityError(f"annotator {annotator_id!r} already voted on {self.image_id!r}")
        self.votes.append((annotator_id, outcome))

    def remove(self, annotator_id: str) -> bool:
        before = len(self.votes)
        self.votes = [(a, o) for a, o in self.votes if a != annotator_id]
        return len(self.votes) != before

    def annotators(self) -> set[str]:
        return {a for a, _ in self.votes}

    def __len__(self) -> int:
        return len(self.votes)


class ConsensusKind(str, Enum):
    FINAL = "final"
    NEEDS_ESCALATION = "needs_escalation"
    UNRESOLVED = "unresolved"


@dataclass(frozen=True)
class ConsensusResult:
    kind: ConsensusKind
    label: Optional[LabelOutcome]  # Final only
    vote_tally: tuple[tuple[str, int], ...]  # (label key, count), sorted by key

    def tally_dict(self) -> dict[str, int]:
        return dict(self.vote_tally)


def aggregate(votes: VoteSet, escalation_cap: int = 5) -> ConsensusResult:
    """Majority consensus over exact label matches.

    A unique label with at least two votes wins (Final). Short vote sets and
    resolvable disagreements (all distinct, or a tie at the top) ask for one
    more annotator (NeedsEscalation) until ``escalation_cap`` votes have been
    collected, at which point the image is Unresolved.
    """
    if not votes.votes:
        raise IntegrityError(f"no votes for image {votes.image_id!r}")
    seen: set[str] = set()
    for annotator_id, _ in votes.votes:
        if annotator_id in seen:
            raise IntegrityError(f"annotator {annotator_id!r} voted twice on {votes.image_id!r}")
        seen.add(annotator_id)

    tally = Counter(vote_key(outcome) for _, outcome in votes.votes)
    tally_rows = tuple(sorted(tally.items()))
    n = len(votes.votes)

    if n >= votes.target_replication:
        (top_key, top_count), *_ = tally.most_common(1)
        contenders = [k for k, c in tally.items() if c == top_count]
        if top_count >= 2 and len(contenders) == 1:
            winners = [o for _, o in votes.votes if vote_key(o) == top_key]
            # canonical winner: order-independent choice among equal-label votes
            label = replace(winners[0], question_count=min(w.question_count for w in winners))
            return ConsensusResult(ConsensusKind.FINAL, label, tally_rows)
        if n >= escalation_cap:
            return ConsensusResult(ConsensusKind.UNRESOLVED, None, tally_rows)
    return ConsensusResult(ConsensusKind.NEEDS_ESCALATION, None, tally_rows)
