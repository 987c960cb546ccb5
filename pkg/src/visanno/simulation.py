"""Synthetic annotation campaigns with parameterized annotator models.

The harness builds a labeled corpus from a hierarchy, drives a full campaign
(claiming, sessions, aggregation, escalation) with simulated annotators, and
reports agreement, accuracy, per-category counts, and simulated time/cost per
protocol. Everything is deterministic under the supplied seed: identical
configuration produces bit-identical event logs and reports.
"""
from __future__ import annotations

import io
import math
import random
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence, Union

from .campaign import Campaign, CampaignConfig
from .engine import (
    NONE_OF_THESE,
    Answer,
    Protocol,
    Question,
    QuestionKind,
)
from .errors import ConfigurationError
from .hierarchy import ConceptId, Hierarchy
from .reliability import (
    DEFAULT_RATES,
    DISCHARGED_KEY,
    CategoryCountTable,
    RateModel,
    SessionStats,
    cost_report,
    reliability_key,
)
from .storage import EventLog, ImageRecord


class _OutOfScope:
    """Sentinel ground truth for images matching no root category."""

    _instance: Optional["_OutOfScope"] = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "OutOfScope"


OUT_OF_SCOPE = _OutOfScope()

GroundTruth = Mapping[str, Union[ConceptId, _OutOfScope]]


@dataclass(frozen=True)
class AnnotatorModel:
    """Stochastic answer behavior for one simulated annotator.

    ``answer_accuracy`` is the probability a yes/no answer is truthful (the
    answer flips otherwise). ``knowledge_depth``, when set, makes the
    annotator answer No to any node deeper than that level regardless of
    truth (they simply do not know the finer kinds). ``flat_accuracy`` is the
    probability of picking the true entry from a flat choice list; mistakes
    fall uniformly on the remaining choices.
    """

    answer_accuracy: float = 1.0
    knowledge_depth: Optional[int] = None
    flat_accuracy: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.answer_accuracy <= 1.0:
            raise ConfigurationError(f"answer_accuracy must be in [0, 1], got {self.answer_accuracy}")
        if not 0.0 <= self.flat_accuracy <= 1.0:
            raise ConfigurationError(f"flat_accuracy must be in [0, 1], got {self.flat_accuracy}")
        if self.knowledge_depth is not None and self.knowledge_depth < 1:
            raise ConfigurationError(f"knowledge_depth must be >= 1 when set, got {self.knowledge_depth}")

    def payload(self) -> dict:
        return {
            "answer_accuracy": self.answer_accuracy,
            "knowledge_depth": self.knowledge_depth,
            "flat_accuracy": self.flat_accuracy,
            "seed": self.seed,
        }

    @classmethod
    def from_payload(cls, data: dict) -> "AnnotatorModel":
        known = {"answer_accuracy", "knowledge_depth", "flat_accuracy", "seed"}
        unknown = set(data) - known
        if unknown:
            raise ConfigurationError(f"unknown annotator model fields: {sorted(unknown)}")
        return cls(**data)


def oracle_models(count: int = 3) -> tuple[AnnotatorModel, ...]:
    """Perfectly truthful annotators (p = q = 1, no depth limit)."""
    return tuple(AnnotatorModel(seed=i + 1) for i in range(count))


def generate_synthetic_corpus(
    h: Hierarchy,
    n_per_leaf: int,
    out_of_scope_fraction: float = 0.0,
    seed: int = 0,
) -> tuple[list[ImageRecord], dict[str, Union[ConceptId, _OutOfScope]]]:
    """Build a shuffled corpus where every leaf receives exactly n_per_leaf images.

    Out-of-scope images are appended so that they make up at most
    ``out_of_scope_fraction`` of the final corpus: with f the fraction and n
    the in-scope count, floor(n * f / (1 - f)) extras are added (fraction 0.1
    on 100 in-scope images adds 11).
    """
    leaves = h.leaves()
    if not leaves:
        raise ConfigurationError("hierarchy has no leaves to draw images from")
    if n_per_leaf < 1:
        raise ConfigurationError(f"n_per_leaf must be >= 1, got {n_per_leaf}")
    if not 0.0 <= out_of_scope_fraction < 1.0:
        raise ConfigurationError(
            f"out_of_scope_fraction must be in [0, 1), got {out_of_scope_fraction}"
        )
    records: list[ImageRecord] = []
    truth: dict[str, Union[ConceptId, _OutOfScope]] = {}
    for leaf in leaves:
        for k in range(1, n_per_leaf + 1):
            image_id = f"img-{leaf.id.render()}-{k:04d}"
            records.append(ImageRecord(image_id=image_id, uri=f"synthetic://{image_id}"))
            truth[image_id] = leaf.id
    n_in = len(records)
    n_out = math.floor(n_in * out_of_scope_fraction / (1.0 - out_of_scope_fraction))
    for k in range(1, n_out + 1):
        image_id = f"img-out-{k:04d}"
        records.append(ImageRecord(image_id=image_id, uri=f"synthetic://{image_id}"))
        truth[image_id] = OUT_OF_SCOPE
    random.Random(seed).shuffle(records)
    return records, truth


def simulated_answer(
    model: AnnotatorModel,
    truth: GroundTruth,
    image_id: str,
    question: Question,
    rng: random.Random,
) -> Answer:
    """One annotator's answer to one question, deterministic under the rng state."""
    target = truth[image_id]

    if question.kind is QuestionKind.FLAT_CHOICE:
        truthful_key = target.render() if isinstance(target, ConceptId) else NONE_OF_THESE
        if rng.random() < model.flat_accuracy:
            chosen = truthful_key
        else:
            others = [key for key, _ in question.choices if key != truthful_key]
            chosen = rng.choice(others)
        if chosen == NONE_OF_THESE:
            return Answer.none_of_these()
        return Answer.choose(ConceptId.parse(chosen))

    subject = question.subject_node
    assert subject is not None
    if model.knowledge_depth is not None and subject.depth > model.knowledge_depth:
        return Answer.no()
    truthful_yes = isinstance(target, ConceptId) and (
        subject == target or subject.is_ancestor_of(target)
    )
    flip = rng.random() >= model.answer_accuracy
    return Answer.yes() if truthful_yes != flip else Answer.no()


def truth_key(target: Union[ConceptId, _OutOfScope]) -> str:
    """The reliability key a perfectly truthful annotation would produce."""
    return target.render() if isinstance(target, ConceptId) else DISCHARGED_KEY


@dataclass(frozen=True)
class SimulationRow:
    """One protocol x size line of a simulation report."""

    protocol: Protocol
    task_size: int
    images: int
    tasks: int
    alpha: Optional[float]
    alpha_note: str
    accuracy: float
    single_accuracy: float
    mean_questions: float
    time_min: float
    payment: float
    escalated: int
    unresolved: int
    stalled: int
    counts: CategoryCountTable

    @property
    def uses_hierarchy(self) -> bool:
        return self.protocol is not Protocol.METHOD_A

    @property
    def uses_visual_properties(self) -> bool:
        return self.protocol is Protocol.METHOD_C


@dataclass(frozen=True)
class SimulationResult:
    """A finished simulated campaign: the report row plus the full campaign."""

    row: SimulationRow
    campaign: Campaign

    @property
    def log(self) -> EventLog:
        return self.campaign.log


def run_campaign(
    h: Hierarchy,
    corpus: Sequence[ImageRecord],
    truth: GroundTruth,
    models: Sequence[AnnotatorModel],
    protocol: Protocol,
    task_size: int = 50,
    seed: int = 0,
    replication: int = 3,
    escalation_cap: int = 5,
    rates: RateModel = DEFAULT_RATES,
    log_path: Optional[str] = None,
) -> SimulationResult:
    """Drive one campaign to completion with simulated annotators.

    Annotators work round-robin, one image per turn, claiming new tasks as
    their passes finish, until nobody can claim further work. Fully
    deterministic under ``seed`` (the event log uses a counter clock, so two
    runs with the same inputs produce byte-identical logs).
    """
    if len(models) < replication:
        raise ConfigurationError(
            f"need at least {replication} annotator models (replication), got {len(models)}"
        )
    counter = iter(range(1, 1 << 62))
    log = EventLog(path=log_path, clock=lambda: float(next(counter)))
    config = CampaignConfig(
        protocol=protocol,
        task_size=task_size,
        replication=replication,
        escalation_cap=escalation_cap,
        deterministic=True,
    )
    campaign = Campaign.create(
        campaign_id=f"sim-{protocol.value}-{task_size}-{seed}",
        hierarchy=h,
        images=list(corpus),
        config=config,
        log=log,
    )
    workers = []
    for model in models:
        info = campaign.register_annotator(f"sim-{model.seed}")
        rng = random.Random(f"{seed}|{model.seed}")
        workers.append((model, info, rng))

    progressed = True
    while progressed:
        progressed = False
        for model, info, rng in workers:
            assignment = campaign.claim_task(info.annotator_id)
            if assignment is None or not assignment.pending_image_ids:
                continue
            image_id = assignment.pending_image_ids[0]
            session = campaign.start_session(info.annotator_id, image_id)
            while not session.finished:
                assert session.pending is not None
                answer = simulated_answer(model, truth, image_id, session.pending, rng)
                campaign.submit_answer(session.session_id, answer)
            progressed = True

    return SimulationResult(row=_report_row(campaign, truth, rates), campaign=campaign)


def _report_row(campaign: Campaign, truth: GroundTruth, rates: RateModel) -> SimulationRow:
    state = campaign.state
    metrics = campaign.metrics()
    finals = campaign.final_labels()

    task_images = [image_id for task in state.tasks for image_id in task.image_ids]
    correct = sum(
        1
        for image_id in task_images
        if image_id in finals and reliability_key(finals[image_id]) == truth_key(truth[image_id])
    )
    votes_total = 0
    votes_correct = 0
    for image_id, voteset in state.votes.items():
        for _, outcome in voteset.votes:
            votes_total += 1
            if reliability_key(outcome) == truth_key(truth[image_id]):
                votes_correct += 1

    stats = []
    for session_id, session in state.sessions.items():
        if not session.finished:
            continue
        meta = state.session_meta[session_id]
        stats.append(
            SessionStats(
                protocol=state.config.protocol,
                task_id=f"{meta.annotator_id}:{meta.task_id}",
                question_count=session.question_count,
            )
        )
    costs = cost_report(stats, rates, state.config.task_size)
    time_min = costs.rows[0].time_min if costs.rows else 0.0
    payment = rates.payment_for(state.config.protocol, state.config.task_size)
    mean_questions = (
        sum(s.question_count for s in stats) / len(stats) if stats else 0.0
    )
    progress = metrics.progress
    return SimulationRow(
        protocol=state.config.protocol,
        task_size=state.config.task_size,
        images=progress.images_total,
        tasks=len(state.tasks),
        alpha=metrics.alpha,
        alpha_note=metrics.alpha_note,
        accuracy=correct / len(task_images) if task_images else 0.0,
        single_accuracy=votes_correct / votes_total if votes_total else 0.0,
        mean_questions=mean_questions,
        time_min=time_min,
        payment=payment,
        escalated=len(state.escalation_rounds),
        unresolved=progress.unresolved,
        stalled=progress.images_total - progress.final - progress.unresolved,
        counts=metrics.counts,
    )


@dataclass(frozen=True)
class DeltaRow:
    """Exact difference between two method rows at the same task size."""

    label: str  # e.g. "B-A"
    task_size: int
    alpha_delta: Optional[float]
    time_delta: float
    payment_delta: float
    questions_delta: float
    accuracy_delta: float


@dataclass(frozen=True)
class SimReport:
    """Method-comparison report: one row per (protocol, size) plus delta rows."""

    rows: tuple[SimulationRow, ...]
    deltas: tuple[DeltaRow, ...]

    def to_csv(self) -> str:
        out = io.StringIO()
        out.write("method,hierarchy,visual_properties,size,alpha,time_min,payment\n")
        for row in self.rows:
            alpha = "" if row.alpha is None else repr(row.alpha)
            out.write(
                f"{row.protocol.value},{_yesno(row.uses_hierarchy)},"
                f"{_yesno(row.uses_visual_properties)},{row.task_size},"
                f"{alpha},{row.time_min!r},{row.payment!r}\n"
            )
        for delta in self.deltas:
            alpha = "" if delta.alpha_delta is None else repr(delta.alpha_delta)
            out.write(
                f"delta({delta.label}),,,{delta.task_size},"
                f"{alpha},{delta.time_delta!r},{delta.payment_delta!r}\n"
            )
        return out.getvalue()

    def to_text(self) -> str:
        lines = [
            "method  hierarchy  visual_properties  size  alpha   time_min  payment  accuracy  (simulated)"
        ]
        for row in self.rows:
            alpha = "n/a" if row.alpha is None else f"{row.alpha:.3f}"
            lines.append(
                f"{row.protocol.value:<6}  {_yesno(row.uses_hierarchy):<9}  "
                f"{_yesno(row.uses_visual_properties):<17}  {row.task_size:<4}  "
                f"{alpha:<6}  {row.time_min:<8.2f}  {row.payment:<7.2f}  {row.accuracy:.3f}"
            )
        for delta in self.deltas:
            alpha = "n/a" if delta.alpha_delta is None else f"{delta.alpha_delta:+.3f}"
            lines.append(
                f"delta({delta.label}) size={delta.task_size}: alpha {alpha}, "
                f"time {delta.time_delta:+.2f} min, payment {delta.payment_delta:+.2f}"
            )
        return "\n".join(lines)


_DELTA_PAIRS = (
    (Protocol.METHOD_B, Protocol.METHOD_A),
    (Protocol.METHOD_C, Protocol.METHOD_B),
    (Protocol.METHOD_C, Protocol.METHOD_A),
)


def run_method_comparison(
    h: Hierarchy,
    corpus: Sequence[ImageRecord],
    truth: GroundTruth,
    models_by_protocol: Mapping[Protocol, Sequence[AnnotatorModel]],
    protocols: Sequence[Protocol] = (Protocol.METHOD_A, Protocol.METHOD_B, Protocol.METHOD_C),
    sizes: Sequence[int] = (50, 100),
    seed: int = 0,
    replication: int = 3,
    escalation_cap: int = 5,
    rates: RateModel = DEFAULT_RATES,
) -> SimReport:
    """Run the same corpus through each protocol and size and diff the rows.

    The corpus, ground truth, and per-annotator seeds are shared across
    protocols, so row differences are attributable to the protocol (and its
    accuracy parameters) alone. Model populations may differ in accuracy
    parameters per protocol but must pair up by seed.
    """
    if not protocols:
        raise ConfigurationError("no protocols to compare")
    missing = [p.value for p in protocols if p not in models_by_protocol]
    if missing:
        raise ConfigurationError(f"no annotator models supplied for protocols: {missing}")
    seed_lists = {
        p: [m.seed for m in models_by_protocol[p]] for p in protocols
    }
    reference = seed_lists[protocols[0]]
    for p, seeds in seed_lists.items():
        if seeds != reference:
            raise ConfigurationError(
                "model populations must pair up by seed across protocols "
                f"({protocols[0].value} has {reference}, {p.value} has {seeds})"
            )

    rows: list[SimulationRow] = []
    by_key: dict[tuple[Protocol, int], SimulationRow] = {}
    for size in sizes:
        for protocol in protocols:
            result = run_campaign(
                h,
                corpus,
                truth,
                models_by_protocol[protocol],
                protocol,
                task_size=size,
                seed=seed,
                replication=replication,
                escalation_cap=escalation_cap,
                rates=rates,
            )
            rows.append(result.row)
            by_key[(protocol, size)] = result.row

    deltas: list[DeltaRow] = []
    for size in sizes:
        for left, right in _DELTA_PAIRS:
            a = by_key.get((left, size))
            b = by_key.get((right, size))
            if a is None or b is None:
                continue
            alpha_delta = (
                a.alpha - b.alpha if a.alpha is not None and b.alpha is not None else None
            )
            deltas.append(
                DeltaRow(
                    label=f"{left.value}-{right.value}",
                    task_size=size,
                    alpha_delta=alpha_delta,
                    time_delta=a.time_min - b.time_min,
                    payment_delta=a.payment - b.payment,
                    questions_delta=a.mean_questions - b.mean_questions,
                    accuracy_delta=a.accuracy - b.accuracy,
                )
            )
    return SimReport(rows=tuple(rows), deltas=tuple(deltas))


@dataclass(frozen=True)
class SimulationConfig:
    """File-backed description of a simulation run (see docs/formats.md)."""

    hierarchy_path: str
    n_per_leaf: int
    out_of_scope_fraction: float
    seed: int
    protocols: tuple[Protocol, ...]
    sizes: tuple[int, ...]
    replication: int
    escalation_cap: int
    models_by_protocol: dict[Protocol, tuple[AnnotatorModel, ...]]
    rates: RateModel

    def __post_init__(self):
        if not self.protocols:
            raise ConfigurationError("simulation config lists no protocols")
        if not self.sizes:
            raise ConfigurationError("simulation config lists no task sizes")


def load_simulation_config(document: dict, base_dir: str = ".") -> SimulationConfig:
    """Parse a simulation config document (JSON, same notation as hierarchies)."""
    import os

    known = {
        "hierarchy", "corpus", "seed", "protocols", "sizes",
        "replication", "escalation_cap", "models", "rates",
    }
    unknown = set(document) - known
    if unknown:
        raise ConfigurationError(f"unknown simulation config fields: {sorted(unknown)}")
    for required in ("hierarchy", "protocols", "models"):
        if required not in document:
            raise ConfigurationError(f"simulation config lacks the {required!r} field")

    corpus = document.get("corpus", {})
    if not isinstance(corpus, dict):
        raise ConfigurationError("corpus must be an object with n_per_leaf and out_of_scope_fraction")
    protocols = tuple(Protocol(p) for p in document["protocols"])

    raw_models = document["models"]
    models_by_protocol: dict[Protocol, tuple[AnnotatorModel, ...]] = {}
    if isinstance(raw_models, list):
        shared = tuple(AnnotatorModel.from_payload(m) for m in raw_models)
        models_by_protocol = {p: shared for p in protocols}
    elif isinstance(raw_models, dict):
        for key, entries in raw_models.items():
            models_by_protocol[Protocol(key)] = tuple(
                AnnotatorModel.from_payload(m) for m in entries
            )
    else:
        raise ConfigurationError("models must be a list or a per-protocol object")

    rates = DEFAULT_RATES
    if "rates" in document:
        raw_rates = document["rates"]
        try:
            rates = RateModel(
                seconds_per_question={
                    Protocol(k): float(v) for k, v in raw_rates["seconds_per_question"].items()
                },
                payment_per_image={
                    Protocol(k): float(v) for k, v in raw_rates["payment_per_image"].items()
                },
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigurationError(f"bad rates block: {exc}") from None

    return SimulationConfig(
        hierarchy_path=os.path.join(base_dir, document["hierarchy"]),
        n_per_leaf=int(corpus.get("n_per_leaf", 100)),
        out_of_scope_fraction=float(corpus.get("out_of_scope_fraction", 0.0)),
        seed=int(document.get("seed", 0)),
        protocols=protocols,
        sizes=tuple(int(s) for s in document.get("sizes", (50,))),
        replication=int(document.get("replication", 3)),
        escalation_cap=int(document.get("escalation_cap", 5)),
        models_by_protocol=models_by_protocol,
        rates=rates,
    )


def run_from_config(config: SimulationConfig, hierarchy: Hierarchy) -> SimReport:
    """Execute the comparison a config file describes."""
    missing = [p.value for p in config.protocols if p not in config.models_by_protocol]
    if missing:
        raise ConfigurationError(f"config lists protocols without models: {missing}")
    corpus, truth = generate_synthetic_corpus(
        hierarchy, config.n_per_leaf, config.out_of_scope_fraction, config.seed
    )
    return run_method_comparison(
        hierarchy,
        corpus,
        truth,
        config.models_by_protocol,
        protocols=config.protocols,
        sizes=config.sizes,
        seed=config.seed,
        replication=config.replication,
        escalation_cap=config.escalation_cap,
        rates=config.rates,
    )


def _yesno(flag: bool) -> str:
    return "yes" if flag else "no"
