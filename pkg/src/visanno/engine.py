"""Interactive classification sessions.

A session walks an image down the hierarchy one yes/no question at a time
(Methods B and C) or asks a single flat multiple-choice question over the
leaves (Method A). The walk follows the printed traversal: try each root in
document order; a Yes descends into the children; a No moves to the next
sibling. Exhausting every root yields Discharged; exhausting a confirmed
node's children yields UnrecognisedAt that node, which assigns the image to
the upper-level category instead of looping forever.

Methods B and C differ only in prompt text (B shows the category name, C adds
the genus and differentia), so identical answers produce identical outcomes.
"""
from __future__ import annotations

import uuid
from dataclasses import dataclass, field
from enum import Enum
from typing import NamedTuple, Optional, Union

from .errors import AnswerKindError, ConfigurationError, ReplayError, StateError
from .hierarchy import ConceptId, Hierarchy

NONE_OF_THESE = "none_of_these"


class Protocol(str, Enum):
    METHOD_A = "A"  # flat choice over leaf names
    METHOD_B = "B"  # hierarchy walk, name-only prompts
    METHOD_C = "C"  # hierarchy walk, genus and differentia in the prompt


class QuestionKind(str, Enum):
    DIFFERENTIA_YES_NO = "differentia_yes_no"
    FLAT_CHOICE = "flat_choice"


@dataclass(frozen=True)
class Question:
    sequence_no: int
    kind: QuestionKind
    subject_node: Optional[ConceptId] = None  # absent for the flat Method A question
    prompt_name: str = ""
    prompt_genus: str = ""  # Method C only
    prompt_differentia: str = ""  # Method C only
    choices: tuple[tuple[str, str], ...] = ()  # (key, display name); includes the sentinel

    def text(self) -> str:
        """Human wording of the question; the data fields remain the contract."""
        if self.kind is QuestionKind.FLAT_CHOICE:
            return "Which of these is the object?"
        if self.prompt_differentia:
            if self.prompt_genus:
                return f"Does the object show {self.prompt_differentia}, a kind of {self.prompt_genus}?"
            return f"Does the object show {self.prompt_differentia}?"
        return f"Is the object a {self.prompt_name}?"


class AnswerKind(str, Enum):
    YES = "yes"
    NO = "no"
    CHOICE = "choice"
    NONE_OF_THESE = "none_of_these"


@dataclass(frozen=True)
class Answer:
    kind: AnswerKind
    choice: Optional[ConceptId] = None

    def __post_init__(self):
        if (self.choice is not None) != (self.kind is AnswerKind.CHOICE):
            raise ValueError("choice must be present exactly when kind is 'choice'")

    @classmethod
    def yes(cls) -> "Answer":
        return cls(AnswerKind.YES)

    @classmethod
    def no(cls) -> "Answer":
        return cls(AnswerKind.NO)

    @classmethod
    def choose(cls, cid: ConceptId) -> "Answer":
        return cls(AnswerKind.CHOICE, cid)

    @classmethod
    def none_of_these(cls) -> "Answer":
        return cls(AnswerKind.NONE_OF_THESE)


class LevelText(NamedTuple):
    name: str
    genus: str
    differentia: str


class OutcomeKind(str, Enum):
    CLASSIFIED = "classified"
    UNRECOGNISED_AT = "unrecognised_at"
    DISCHARGED = "discharged"


@dataclass(frozen=True)
class LabelOutcome:
    """Terminal result of a session.

    ``label`` is the leaf for Classified, the upper-level node for
    UnrecognisedAt, and absent for Discharged. ``label_path_texts`` snapshots
    (name, genus, differentia) for each level from the root down to the label.
    """

    kind: OutcomeKind
    label: Optional[ConceptId]
    label_path_texts: tuple[LevelText, ...] = ()
    question_count: int = 0


@dataclass
class AnnotationSession:
    """Mutable state of one image's question/answer walk."""

    session_id: str
    image_id: str
    hierarchy: Hierarchy = field(repr=False)
    protocol: Protocol
    cursor: Optional[ConceptId] = None  # last confirmed node; None while roots are on trial
    sibling_queue: tuple[ConceptId, ...] = ()  # candidates not yet asked, after the pending one
    transcript: list[tuple[Question, Answer]] = field(default_factory=list)
    outcome: Optional[LabelOutcome] = None
    pending: Optional[Question] = None

    @property
    def finished(self) -> bool:
        return self.outcome is not None

    @property
    def question_count(self) -> int:
        return len(self.transcript)


def start_session(
    h: Hierarchy,
    image_id: str,
    protocol: Protocol,
    session_id: str | None = None,
) -> tuple[AnnotationSession, Question]:
    """Open a session and produce its first question."""
    if not h.roots:
        raise ConfigurationError("cannot start a session on an empty hierarchy")
    session = AnnotationSession(
        session_id=session_id if session_id is not None else uuid.uuid4().hex,
        image_id=image_id,
        hierarchy=h,
        protocol=protocol,
    )
    if protocol is Protocol.METHOD_A:
        choices = tuple((leaf.id.render(), leaf.name) for leaf in h.leaves())
        question = Question(
            sequence_no=1,
            kind=QuestionKind.FLAT_CHOICE,
            choices=choices + ((NONE_OF_THESE, "None of these"),),
        )
    else:
        roots = tuple(r.id for r in h.roots)
        session.sibling_queue = roots[1:]
        question = _walk_question(session, roots[0], sequence_no=1)
    session.pending = question
    return session, question


def _walk_question(session: AnnotationSession, subject: ConceptId, sequence_no: int) -> Question:
    node = session.hierarchy.node(subject)
    show_properties = session.protocol is Protocol.METHOD_C
    return Question(
        sequence_no=sequence_no,
        kind=QuestionKind.DIFFERENTIA_YES_NO,
        subject_node=subject,
        prompt_name=node.name,
        prompt_genus=node.genus if show_properties else "",
        prompt_differentia=node.differentia if show_properties else "",
    )


def validate_answer(question: Question, answer: Answer) -> None:
    """Raise AnswerKindError unless ``answer`` can answer ``question``."""
    if question.kind is QuestionKind.DIFFERENTIA_YES_NO:
        if answer.kind not in (AnswerKind.YES, AnswerKind.NO):
            raise AnswerKindError(
                f"question {question.sequence_no} expects yes/no, got {answer.kind.value!r}"
            )
    else:
        if answer.kind not in (AnswerKind.CHOICE, AnswerKind.NONE_OF_THESE):
            raise AnswerKindError(
                f"question {question.sequence_no} expects a choice, got {answer.kind.value!r}"
            )
        if answer.kind is AnswerKind.CHOICE:
            offered = {key for key, _ in question.choices}
            if answer.choice is None or answer.choice.render() not in offered:
                raise AnswerKindError(f"choice {answer.choice} was not offered")


def submit_answer(session: AnnotationSession, answer: Answer) -> Union[Question, LabelOutcome]:
    """Record one answer and return the next question or the final outcome."""
    if session.finished:
        raise StateError(f"session {session.session_id} already finished")
    question = session.pending
    if question is None:
        raise StateError(f"session {session.session_id} has no pending question")
    validate_answer(question, answer)

    session.transcript.append((question, answer))
    session.pending = None

    if question.kind is QuestionKind.FLAT_CHOICE:
        if answer.kind is AnswerKind.NONE_OF_THESE:
            return _finish(session, OutcomeKind.DISCHARGED, None)
        return _finish(session, OutcomeKind.CLASSIFIED, answer.choice)

    subject = question.subject_node
    assert subject is not None
    if answer.kind is AnswerKind.YES:
        node = session.hierarchy.node(subject)
        session.cursor = subject
        if node.is_leaf:
            return _finish(session, OutcomeKind.CLASSIFIED, subject)
        children = tuple(c.id for c in node.children)
        session.sibling_queue = children[1:]
        return _ask(session, children[0])

    # No: advance along the current candidate list
    if session.sibling_queue:
        nxt, session.sibling_queue = session.sibling_queue[0], session.sibling_queue[1:]
        return _ask(session, nxt)
    if session.cursor is None:
        return _finish(session, OutcomeKind.DISCHARGED, None)
    return _finish(session, OutcomeKind.UNRECOGNISED_AT, session.cursor)


def _ask(session: AnnotationSession, subject: ConceptId) -> Question:
    question = _walk_question(session, subject, sequence_no=len(session.transcript) + 1)
    session.pending = question
    return question


def _finish(session: AnnotationSession, kind: OutcomeKind, label: Optional[ConceptId]) -> LabelOutcome:
    texts: tuple[LevelText, ...] = ()
    if label is not None:
        texts = tuple(
            LevelText(n.name, n.genus, n.differentia) for n in session.hierarchy.path_nodes(label)
        )
    outcome = LabelOutcome(
        kind=kind,
        label=label,
        label_path_texts=texts,
        question_count=len(session.transcript),
    )
    session.outcome = outcome
    return outcome


def question_upper_bound(h: Hierarchy) -> int:
    """Tight bound on questions any single session can ask.

    Reaching a node costs the sum of sibling positions along its path (each
    position k is preceded by k-1 denied siblings, plus its own question), so
    the longest possible session is the worst such sum over leaves. Discharged
    costs one question per root, which the last root's leaves already cover.
    """
    sums = [sum(leaf.id.path) for leaf in h.leaves()]
    return max(sums, default=0)


def replay(
    h: Hierarchy,
    protocol: Protocol,
    answers: list[Answer],
    image_id: str = "replay",
) -> LabelOutcome:
    """Re-derive the outcome of a complete answer transcript.

    Pure function of its inputs; raises ReplayError with the 1-based position
    of the first bad answer, the first extra answer, or (for a short
    transcript) one past the final supplied answer.
    """
    session, _ = start_session(h, image_id, protocol, session_id="replay")
    for position, answer in enumerate(answers, start=1):
        if session.finished:
            raise ReplayError(f"answer at position {position} after the session finished", position)
        try:
            submit_answer(session, answer)
        except AnswerKindError as exc:
            raise ReplayError(f"position {position}: {exc}", position) from None
    if not session.finished:
        position = len(answers) + 1
        raise ReplayError(f"transcript ended before an outcome (position {position})", position)
    return session.outcome


# Payload helpers: plain-dict forms used by the event log and the HTTP service.


def question_payload(q: Question) -> dict:
    return {
        "sequence_no": q.sequence_no,
        "kind": q.kind.value,
        "subject_node": q.subject_node.render() if q.subject_node else None,
        "prompt_name": q.prompt_name,
        "prompt_genus": q.prompt_genus,
        "prompt_differentia": q.prompt_differentia,
        "choices": [[key, name] for key, name in q.choices],
        "text": q.text(),
    }


def question_from_payload(data: dict) -> Question:
    return Question(
        sequence_no=data["sequence_no"],
        kind=QuestionKind(data["kind"]),
        subject_node=ConceptId.parse(data["subject_node"]) if data.get("subject_node") else None,
        prompt_name=data.get("prompt_name", ""),
        prompt_genus=data.get("prompt_genus", ""),
        prompt_differentia=data.get("prompt_differentia", ""),
        choices=tuple((key, name) for key, name in data.get("choices", [])),
    )


def answer_payload(a: Answer) -> dict:
    return {"kind": a.kind.value, "choice": a.choice.render() if a.choice else None}


def answer_from_payload(data: dict) -> Answer:
    try:
        kind = AnswerKind(data["kind"])
    except (KeyError, ValueError):
        raise AnswerKindError(f"unknown answer kind {data.get('kind')!r}") from None
    choice = data.get("choice")
    if kind is AnswerKind.CHOICE:
        if not isinstance(choice, str):
            raise AnswerKindError("answer kind 'choice' requires a 'choice' id")
        try:
            return Answer.choose(ConceptId.parse(choice))
        except ValueError as exc:
            raise AnswerKindError(str(exc)) from None
    if choice is not None:
        raise AnswerKindError(f"answer kind {kind.value!r} does not take a choice")
    return Answer(kind)


def outcome_payload(o: LabelOutcome) -> dict:
    return {
        "kind": o.kind.value,
        "label": o.label.render() if o.label else None,
        "label_path_texts": [[t.name, t.genus, t.differentia] for t in o.label_path_texts],
        "question_count": o.question_count,
    }


def outcome_from_payload(data: dict) -> LabelOutcome:
    return LabelOutcome(
        kind=OutcomeKind(data["kind"]),
        label=ConceptId.parse(data["label"]) if data.get("label") else None,
        label_path_texts=tuple(LevelText(*t) for t in data.get("label_path_texts", [])),
        question_count=data.get("question_count", 0),
    )
