"""Event-sourced annotation campaigns.

A Campaign owns all mutable state: registered annotators, task claims, live
sessions, per-image votes, consensus results, and escalation rounds. Every
change flows through exactly one path: a command validates its inputs, builds
event payloads, and each event is appended to the log and applied to the
state by the same handler that replay uses. ``replay_state(log)`` therefore
reconstructs the exact state that produced any log.

Command-attributed events (CampaignCreated, AnnotatorRegistered, TaskClaimed,
SessionStarted, AnswerGiven, TaskExpired) record accepted requests;
system-derived events (QuestionAsked, SessionFinished, TaskCompleted,
ConsensusReached, EscalationOpened) follow in the same batch and double as
integrity checks during replay.
"""
from __future__ import annotations

import hashlib
import secrets
from dataclasses import dataclass, field
from typing import Optional, Union

from . import engine
from .assignment import (
    Assignment,
    AssignmentStatus,
    ConsensusKind,
    ConsensusResult,
    Task,
    VoteSet,
    aggregate,
    build_tasks,
)
from .engine import (
    AnnotationSession,
    Answer,
    LabelOutcome,
    Protocol,
    Question,
)
from .errors import (
    ConfigurationError,
    IntegrityError,
    NotFoundError,
    StateError,
)
from .hierarchy import Hierarchy, hierarchy_from_document, to_document
from .reliability import (
    CategoryCountTable,
    ReliabilityData,
    category_count_table,
    krippendorff_alpha_nominal,
    reliability_key,
)
from .errors import DegenerateDataError, InsufficientDataError
from .storage import EventLog, ImageRecord


@dataclass(frozen=True)
class CampaignConfig:
    protocol: Protocol
    task_size: int = 50
    replication: int = 3
    escalation_cap: int = 5
    deterministic: bool = False
    claim_timeout_s: Optional[float] = None

    def __post_init__(self):
        if self.task_size < 1:
            raise ConfigurationError(f"task_size must be >= 1, got {self.task_size}")
        if self.replication < 2:
            raise ConfigurationError("replication must be >= 2 (consensus is impossible below two votes)")
        if self.escalation_cap < self.replication:
            raise ConfigurationError("escalation_cap must be >= replication")
        if self.claim_timeout_s is not None and self.claim_timeout_s <= 0:
            raise ConfigurationError("claim_timeout_s must be positive when set")

    def payload(self) -> dict:
        return {
            "protocol": self.protocol.value,
            "task_size": self.task_size,
            "replication": self.replication,
            "escalation_cap": self.escalation_cap,
            "deterministic": self.deterministic,
            "claim_timeout_s": self.claim_timeout_s,
        }

    @classmethod
    def from_payload(cls, data: dict) -> "CampaignConfig":
        return cls(
            protocol=Protocol(data["protocol"]),
            task_size=data["task_size"],
            replication=data["replication"],
            escalation_cap=data["escalation_cap"],
            deterministic=data.get("deterministic", False),
            claim_timeout_s=data.get("claim_timeout_s"),
        )


@dataclass
class AnnotatorInfo:
    annotator_id: str
    name: str
    token: str


@dataclass
class SessionMeta:
    annotator_id: str
    task_id: str


@dataclass
class CampaignState:
    campaign_id: str
    config: CampaignConfig
    hierarchy: Hierarchy
    images: dict[str, ImageRecord]  # insertion order = manifest order
    tasks: tuple[Task, ...]
    annotators: dict[str, AnnotatorInfo] = field(default_factory=dict)
    assignments: dict[str, Assignment] = field(default_factory=dict)  # key annotator:task
    sessions: dict[str, AnnotationSession] = field(default_factory=dict)
    session_meta: dict[str, SessionMeta] = field(default_factory=dict)
    seen: set[tuple[str, str]] = field(default_factory=set)  # (annotator, image), never shrinks
    session_index: dict[tuple[str, str], str] = field(default_factory=dict)
    votes: dict[str, VoteSet] = field(default_factory=dict)
    consensus: dict[str, ConsensusResult] = field(default_factory=dict)  # terminal only
    escalation_rounds: dict[str, int] = field(default_factory=dict)
    annotators_registered: int = 0
    sessions_opened: int = 0

    def needed_votes(self, image_id: str) -> int:
        base = self.config.replication + self.escalation_rounds.get(image_id, 0)
        return min(base, self.config.escalation_cap)

    def task(self, task_id: str) -> Task:
        for task in self.tasks:
            if task.task_id == task_id:
                return task
        raise NotFoundError(f"no task {task_id!r}")


@dataclass(frozen=True)
class ProgressReport:
    images_total: int
    final: int
    unresolved: int
    escalated: int
    pending: int
    tasks_total: int
    per_annotator: tuple[tuple[str, int, int, Optional[str]], ...]  # id, votes, tasks done, active task

    def payload(self) -> dict:
        return {
            "images_total": self.images_total,
            "final": self.final,
            "unresolved": self.unresolved,
            "escalated": self.escalated,
            "pending": self.pending,
            "tasks_total": self.tasks_total,
            "per_annotator": [
                {"annotator_id": a, "votes": v, "tasks_completed": t, "active_task": active}
                for a, v, t, active in self.per_annotator
            ],
        }


@dataclass
class MetricsReport:
    alpha: Optional[float]
    alpha_note: str
    counts: CategoryCountTable
    progress: ProgressReport


def assign_next(state: CampaignState, annotator_id: str) -> Optional[tuple[Task, tuple[str, ...]]]:
    """Pick the next task for an annotator, or None when no eligible work exists.

    Eligible tasks contain no image the annotator has already seen and at
    least one image still short of its needed votes once live claims are
    counted. Tasks with the least remaining work are preferred (finish nearly
    complete passes first), ties broken by document order.
    """
    if annotator_id not in state.annotators:
        raise NotFoundError(f"unknown annotator {annotator_id!r}")

    inflight: dict[str, int] = {}
    for assignment in state.assignments.values():
        if assignment.status is AssignmentStatus.CLAIMED:
            for image_id in assignment.pending_image_ids:
                inflight[image_id] = inflight.get(image_id, 0) + 1

    def remaining(image_id: str) -> int:
        if image_id in state.consensus:
            return 0
        short = state.needed_votes(image_id) - len(state.votes.get(image_id, ())) - inflight.get(image_id, 0)
        return max(0, short)

    best: Optional[tuple[int, int, Task, tuple[str, ...]]] = None
    for index, task in enumerate(state.tasks):
        if any((annotator_id, image_id) in state.seen for image_id in task.image_ids):
            continue
        candidate = tuple(i for i in task.image_ids if remaining(i) > 0)
        if not candidate:
            continue
        work = sum(remaining(i) for i in task.image_ids)
        if best is None or (work, index) < (best[0], best[1]):
            best = (work, index, task, candidate)
    if best is None:
        return None
    return best[2], best[3]


def campaign_progress(state: CampaignState) -> ProgressReport:
    final = sum(1 for r in state.consensus.values() if r.kind is ConsensusKind.FINAL)
    unresolved = sum(1 for r in state.consensus.values() if r.kind is ConsensusKind.UNRESOLVED)
    escalated = sum(
        1
        for image_id, rounds in state.escalation_rounds.items()
        if rounds > 0 and image_id not in state.consensus
    )
    total = sum(len(task.image_ids) for task in state.tasks)
    per_annotator = []
    for annotator_id in state.annotators:
        votes = sum(1 for vs in state.votes.values() if annotator_id in vs.annotators())
        done = sum(
            1
            for a in state.assignments.values()
            if a.annotator_id == annotator_id and a.status is AssignmentStatus.COMPLETED
        )
        active = next(
            (
                a.task_id
                for a in state.assignments.values()
                if a.annotator_id == annotator_id and a.status is AssignmentStatus.CLAIMED
            ),
            None,
        )
        per_annotator.append((annotator_id, votes, done, active))
    return ProgressReport(
        images_total=total,
        final=final,
        unresolved=unresolved,
        escalated=escalated,
        pending=total - final - unresolved - escalated,
        tasks_total=len(state.tasks),
        per_annotator=tuple(per_annotator),
    )


class Campaign:
    """Single-writer campaign facade over an event log."""

    def __init__(self, state: CampaignState, log: EventLog):
        self.state = state
        self.log = log

    # -- construction -------------------------------------------------------

    @classmethod
    def create(
        cls,
        campaign_id: str,
        hierarchy: Hierarchy,
        images: list[ImageRecord],
        config: CampaignConfig,
        log: EventLog | None = None,
    ) -> "Campaign":
        if not hierarchy.roots:
            raise ConfigurationError("campaign hierarchy has no roots")
        if not images:
            raise ConfigurationError("campaign has no images")
        ids = [record.image_id for record in images]
        if len(set(ids)) != len(ids):
            raise IntegrityError("campaign images repeat an id")
        annotatable = [record for record in images if not record.exclude]
        if not annotatable:
            raise ConfigurationError("every campaign image is excluded")
        campaign = cls.__new__(cls)
        campaign.state = None  # type: ignore[assignment]
        campaign.log = log if log is not None else EventLog()
        campaign._emit(
            "CampaignCreated",
            {
                "campaign_id": campaign_id,
                "config": config.payload(),
                "hierarchy": to_document(hierarchy),
                "images": [record.payload() for record in images],
            },
        )
        return campaign

    @classmethod
    def from_log(cls, log: EventLog) -> "Campaign":
        """Rebuild a live campaign by replaying its log; appends continue on it."""
        campaign = cls.__new__(cls)
        campaign.state = None  # type: ignore[assignment]
        campaign.log = log
        for record in log.records():
            campaign._apply(record.kind, record.data, record.ts)
        if campaign.state is None:
            raise StateError("event log is empty; no campaign to rebuild")
        return campaign

    # -- event plumbing -----------------------------------------------------

    def _emit(self, kind: str, data: dict) -> None:
        record = self.log.append(kind, data)
        self._apply(kind, data, record.ts)

    def _apply(self, kind: str, data: dict, ts: float) -> None:
        handler = getattr(self, f"_apply_{_snake(kind)}")
        handler(data, ts)

    # -- apply handlers (the only state mutators) ----------------------------

    def _apply_campaign_created(self, data: dict, ts: float) -> None:
        config = CampaignConfig.from_payload(data["config"])
        hierarchy = hierarchy_from_document(data["hierarchy"])
        images: dict[str, ImageRecord] = {}
        for payload in data["images"]:
            record = ImageRecord.from_payload(payload)
            if record.image_id in images:
                raise IntegrityError(f"campaign images repeat id {record.image_id!r}")
            images[record.image_id] = record
        annotatable = [r.image_id for r in images.values() if not r.exclude]
        tasks = build_tasks(annotatable, config.task_size, config.protocol)
        self.state = CampaignState(
            campaign_id=data["campaign_id"],
            config=config,
            hierarchy=hierarchy,
            images=images,
            tasks=tasks,
        )

    def _apply_annotator_registered(self, data: dict, ts: float) -> None:
        info = AnnotatorInfo(data["annotator_id"], data["name"], data["token"])
        if info.annotator_id in self.state.annotators:
            raise IntegrityError(f"annotator {info.annotator_id!r} registered twice")
        self.state.annotators[info.annotator_id] = info
        self.state.annotators_registered += 1

    def _apply_task_claimed(self, data: dict, ts: float) -> None:
        image_ids = tuple(data["image_ids"])
        assignment = Assignment(
            annotator_id=data["annotator_id"],
            task_id=data["task_id"],
            status=AssignmentStatus.CLAIMED,
            image_ids=image_ids,
            pending_image_ids=image_ids,
            claimed_ts=ts,
        )
        self.state.assignments[assignment.key] = assignment

    def _apply_session_started(self, data: dict, ts: float) -> None:
        session, _ = engine.start_session(
            self.state.hierarchy,
            data["image_id"],
            self.state.config.protocol,
            session_id=data["session_id"],
        )
        self.state.sessions[session.session_id] = session
        self.state.session_meta[session.session_id] = SessionMeta(
            annotator_id=data["annotator_id"], task_id=data["task_id"]
        )
        self.state.seen.add((data["annotator_id"], data["image_id"]))
        self.state.session_index[(data["annotator_id"], data["image_id"])] = session.session_id
        self.state.sessions_opened += 1

    def _apply_question_asked(self, data: dict, ts: float) -> None:
        session = self.state.sessions[data["session_id"]]
        if session.pending is None or engine.question_payload(session.pending) != data["question"]:
            raise IntegrityError(
                f"logged question for session {data['session_id']!r} does not match the engine's"
            )

    def _apply_answer_given(self, data: dict, ts: float) -> None:
        session = self.state.sessions[data["session_id"]]
        engine.submit_answer(session, engine.answer_from_payload(data["answer"]))

    def _apply_session_finished(self, data: dict, ts: float) -> None:
        session = self.state.sessions[data["session_id"]]
        if session.outcome is None or engine.outcome_payload(session.outcome) != data["outcome"]:
            raise IntegrityError(
                f"logged outcome for session {data['session_id']!r} does not match the engine's"
            )
        meta = self.state.session_meta[data["session_id"]]
        voteset = self.state.votes.setdefault(
            session.image_id,
            VoteSet(image_id=session.image_id, target_replication=self.state.config.replication),
        )
        voteset.add(meta.annotator_id, session.outcome)
        assignment = self.state.assignments[f"{meta.annotator_id}:{meta.task_id}"]
        assignment.pending_image_ids = tuple(
            i for i in assignment.pending_image_ids if i != session.image_id
        )

    def _apply_task_completed(self, data: dict, ts: float) -> None:
        assignment = self.state.assignments[f"{data['annotator_id']}:{data['task_id']}"]
        assignment.status = AssignmentStatus.COMPLETED
        assignment.completion_code = data["completion_code"]

    def _apply_consensus_reached(self, data: dict, ts: float) -> None:
        result = data["result"]
        label = engine.outcome_from_payload(result["label"]) if result["label"] is not None else None
        self.state.consensus[data["image_id"]] = ConsensusResult(
            kind=ConsensusKind(result["kind"]),
            label=label,
            vote_tally=tuple((key, count) for key, count in result["vote_tally"]),
        )

    def _apply_escalation_opened(self, data: dict, ts: float) -> None:
        self.state.escalation_rounds[data["image_id"]] = data["round"]

    def _apply_task_expired(self, data: dict, ts: float) -> None:
        assignment = self.state.assignments[f"{data['annotator_id']}:{data['task_id']}"]
        assignment.status = AssignmentStatus.EXPIRED
        for image_id in data["released_image_ids"]:
            voteset = self.state.votes.get(image_id)
            if voteset is not None:
                voteset.remove(data["annotator_id"])
        for session_id in data["dropped_session_ids"]:
            session = self.state.sessions.pop(session_id, None)
            if session is not None:
                self.state.session_meta.pop(session_id, None)
                self.state.session_index.pop((data["annotator_id"], session.image_id), None)

    # -- commands ------------------------------------------------------------

    def register_annotator(self, name: str | None = None) -> AnnotatorInfo:
        """Register (or look up) an annotator; same name returns the same identity."""
        if name:
            for info in self.state.annotators.values():
                if info.name == name:
                    return info
        number = self.state.annotators_registered + 1
        annotator_id = f"ann-{number}"
        display = name if name else f"annotator-{number}"
        if self.state.config.deterministic:
            token = hashlib.sha256(
                f"{self.state.campaign_id}:{annotator_id}".encode()
            ).hexdigest()[:24]
        else:
            token = secrets.token_hex(16)
        self._emit(
            "AnnotatorRegistered",
            {"annotator_id": annotator_id, "name": display, "token": token},
        )
        return self.state.annotators[annotator_id]

    def authenticate(self, token: str) -> AnnotatorInfo:
        for info in self.state.annotators.values():
            if secrets.compare_digest(info.token, token):
                return info
        raise NotFoundError("no annotator with that token")

    def active_assignment(self, annotator_id: str) -> Optional[Assignment]:
        for assignment in self.state.assignments.values():
            if assignment.annotator_id == annotator_id and assignment.status is AssignmentStatus.CLAIMED:
                return assignment
        return None

    def claim_task(self, annotator_id: str) -> Optional[Assignment]:
        """Resume the annotator's open claim or assign the next eligible task."""
        if annotator_id not in self.state.annotators:
            raise NotFoundError(f"unknown annotator {annotator_id!r}")
        self._expire_stale_claims()
        existing = self.active_assignment(annotator_id)
        if existing is not None:
            return existing
        picked = assign_next(self.state, annotator_id)
        if picked is None:
            return None
        task, image_ids = picked
        self._emit(
            "TaskClaimed",
            {"annotator_id": annotator_id, "task_id": task.task_id, "image_ids": list(image_ids)},
        )
        return self.state.assignments[f"{annotator_id}:{task.task_id}"]

    def _expire_stale_claims(self) -> None:
        timeout = self.state.config.claim_timeout_s
        if timeout is None:
            return
        now = self.log.now()
        stale = [
            a
            for a in self.state.assignments.values()
            if a.status is AssignmentStatus.CLAIMED and now - a.claimed_ts > timeout
        ]
        for assignment in stale:
            self._expire(assignment, reason="timeout")

    def abandon_task(self, annotator_id: str, task_id: str) -> Assignment:
        assignment = self.state.assignments.get(f"{annotator_id}:{task_id}")
        if assignment is None:
            raise NotFoundError(f"annotator {annotator_id!r} holds no claim on {task_id!r}")
        if assignment.status is not AssignmentStatus.CLAIMED:
            raise StateError(f"claim on {task_id!r} is {assignment.status.value}, not claimed")
        self._expire(assignment, reason="abandoned")
        return self.state.assignments[f"{annotator_id}:{task_id}"]

    def _expire(self, assignment: Assignment, reason: str) -> None:
        # release recorded votes for this pass, except where consensus is already terminal
        released = [
            image_id
            for image_id in assignment.image_ids
            if image_id not in self.state.consensus
            and assignment.annotator_id in self.state.votes.get(image_id, VoteSet(image_id)).annotators()
        ]
        dropped = [
            session_id
            for (annotator_id, image_id), session_id in self.state.session_index.items()
            if annotator_id == assignment.annotator_id
            and image_id in assignment.pending_image_ids
            and not self.state.sessions[session_id].finished
        ]
        self._emit(
            "TaskExpired",
            {
                "annotator_id": assignment.annotator_id,
                "task_id": assignment.task_id,
                "reason": reason,
                "released_image_ids": released,
                "dropped_session_ids": dropped,
            },
        )

    def start_session(self, annotator_id: str, image_id: str) -> AnnotationSession:
        """Open (or resume) the annotator's session for one image of their claim."""
        if annotator_id not in self.state.annotators:
            raise NotFoundError(f"unknown annotator {annotator_id!r}")
        if image_id not in self.state.images:
            raise NotFoundError(f"unknown image {image_id!r}")
        live_id = self.state.session_index.get((annotator_id, image_id))
        if live_id is not None and live_id in self.state.sessions:
            session = self.state.sessions[live_id]
            if not session.finished:
                return session
            raise StateError(f"annotator {annotator_id!r} already annotated {image_id!r}")
        if (annotator_id, image_id) in self.state.seen:
            raise StateError(f"annotator {annotator_id!r} already annotated {image_id!r}")
        assignment = self.active_assignment(annotator_id)
        if assignment is None or image_id not in assignment.pending_image_ids:
            raise StateError(f"image {image_id!r} is not part of the annotator's active claim")
        session_id = self._new_session_id()
        self._emit(
            "SessionStarted",
            {
                "session_id": session_id,
                "annotator_id": annotator_id,
                "task_id": assignment.task_id,
                "image_id": image_id,
            },
        )
        session = self.state.sessions[session_id]
        assert session.pending is not None
        self._emit(
            "QuestionAsked",
            {"session_id": session_id, "question": engine.question_payload(session.pending)},
        )
        return session

    def _new_session_id(self) -> str:
        if self.state.config.deterministic:
            return f"s-{self.state.sessions_opened + 1}"
        import uuid

        return uuid.uuid4().hex

    def get_session(self, session_id: str) -> AnnotationSession:
        session = self.state.sessions.get(session_id)
        if session is None:
            raise NotFoundError(f"no session {session_id!r}")
        return session

    def submit_answer(
        self,
        session_id: str,
        answer: Answer,
        sequence_no: int | None = None,
    ) -> Union[Question, LabelOutcome]:
        """Record one answer; idempotent by (session, sequence_no).

        Retrying an already-accepted (sequence_no, answer) pair returns the
        original response without appending anything; a retry with a
        different answer is rejected.
        """
        session = self.get_session(session_id)
        expected = session.pending.sequence_no if session.pending is not None else None

        if sequence_no is not None and sequence_no != expected:
            answered = len(session.transcript)
            if 1 <= sequence_no <= answered:
                prior_question, prior_answer = session.transcript[sequence_no - 1]
                if prior_answer != answer:
                    raise IntegrityError(
                        f"question {sequence_no} was already answered differently"
                    )
                if sequence_no < answered:
                    return session.transcript[sequence_no][0]
                return session.pending if session.pending is not None else session.outcome
            if session.finished:
                raise StateError(f"session {session_id!r} already finished")
            raise StateError(
                f"sequence_no {sequence_no} is not the pending question ({expected})"
            )

        if session.finished:
            raise StateError(f"session {session_id!r} already finished")
        assert session.pending is not None
        engine.validate_answer(session.pending, answer)

        self._emit(
            "AnswerGiven",
            {
                "session_id": session_id,
                "sequence_no": session.pending.sequence_no,
                "answer": engine.answer_payload(answer),
            },
        )
        if session.pending is not None:
            self._emit(
                "QuestionAsked",
                {"session_id": session_id, "question": engine.question_payload(session.pending)},
            )
            return session.pending

        outcome = session.outcome
        assert outcome is not None
        self._emit(
            "SessionFinished",
            {"session_id": session_id, "outcome": engine.outcome_payload(outcome)},
        )
        self._after_session_finished(session_id)
        return outcome

    def _after_session_finished(self, session_id: str) -> None:
        session = self.state.sessions[session_id]
        meta = self.state.session_meta[session_id]
        assignment = self.state.assignments[f"{meta.annotator_id}:{meta.task_id}"]
        if not assignment.pending_image_ids and assignment.status is AssignmentStatus.CLAIMED:
            code = hashlib.sha256(
                f"{self.state.campaign_id}:{meta.task_id}:{meta.annotator_id}".encode()
            ).hexdigest()[:8]
            self._emit(
                "TaskCompleted",
                {
                    "annotator_id": meta.annotator_id,
                    "task_id": meta.task_id,
                    "completion_code": code,
                },
            )
        image_id = session.image_id
        if image_id in self.state.consensus:
            return
        voteset = self.state.votes[image_id]
        if len(voteset) < self.state.needed_votes(image_id):
            return
        result = aggregate(voteset, escalation_cap=self.state.config.escalation_cap)
        if result.kind is ConsensusKind.NEEDS_ESCALATION:
            self._emit(
                "EscalationOpened",
                {"image_id": image_id, "round": self.state.escalation_rounds.get(image_id, 0) + 1},
            )
        else:
            label_payload = engine.outcome_payload(result.label) if result.label is not None else None
            self._emit(
                "ConsensusReached",
                {
                    "image_id": image_id,
                    "result": {
                        "kind": result.kind.value,
                        "label": label_payload,
                        "vote_tally": [[key, count] for key, count in result.vote_tally],
                    },
                },
            )

    # -- read models ---------------------------------------------------------

    def progress(self) -> ProgressReport:
        return campaign_progress(self.state)

    def reliability_data(self, collapse_unrecognised: bool = False) -> ReliabilityData:
        rows = []
        for image_id in self.state.images:
            voteset = self.state.votes.get(image_id)
            if voteset is None:
                continue
            for annotator_id, outcome in voteset.votes:
                rows.append((image_id, annotator_id, reliability_key(outcome, collapse_unrecognised)))
        return ReliabilityData.from_rows(rows)

    def metrics(self, collapse_unrecognised: bool = False) -> MetricsReport:
        alpha: Optional[float] = None
        try:
            alpha = krippendorff_alpha_nominal(self.reliability_data(collapse_unrecognised))
            note = ""
        except InsufficientDataError:
            note = "alpha unavailable: no image carries two or more votes"
        except DegenerateDataError:
            note = "alpha unavailable: perfect homogeneity (every vote identical)"
        finals = [
            (image_id, result.label)
            for image_id, result in self.state.consensus.items()
            if result.kind is ConsensusKind.FINAL and result.label is not None
        ]
        counts = category_count_table(finals, self.state.hierarchy)
        return MetricsReport(
            alpha=alpha, alpha_note=note, counts=counts, progress=self.progress()
        )

    def final_labels(self) -> dict[str, LabelOutcome]:
        return {
            image_id: result.label
            for image_id, result in self.state.consensus.items()
            if result.kind is ConsensusKind.FINAL and result.label is not None
        }

    def export(self) -> str:
        from .storage import export_rows, render_export

        ordered = [
            self.state.images[image_id]
            for task in self.state.tasks
            for image_id in task.image_ids
        ]
        rows = export_rows(
            self.state.hierarchy,
            ordered,
            self.final_labels(),
            {image_id: len(vs) for image_id, vs in self.state.votes.items()},
            self.state.escalation_rounds,
        )
        return render_export(rows)


def replay_state(log: EventLog) -> CampaignState:
    """Reconstruct the exact campaign state that produced ``log``."""
    return Campaign.from_log(log).state


def _snake(kind: str) -> str:
    out = []
    for ch in kind:
        if ch.isupper() and out:
            out.append("_")
        out.append(ch.lower())
    return "".join(out)
