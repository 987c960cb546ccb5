"""Inter-annotator reliability and reporting.

Krippendorff's alpha for nominal data with missing values, per-category count
tables, and parameterized time/cost reports. Alpha is computed twice in this
package on purpose: ``krippendorff_alpha_nominal`` goes through the standard
coincidence matrix, while ``brute_force_alpha_oracle`` evaluates the pairwise
disagreement definition directly and exists so the tests can cross-check the
production path against an independent implementation.
"""
from __future__ import annotations

import io
from dataclasses import dataclass
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .errors import (
    ConfigurationError,
    DegenerateDataError,
    InsufficientDataError,
    IntegrityError,
)
from .engine import LabelOutcome, OutcomeKind, Protocol
from .hierarchy import ConceptId, Hierarchy

DISCHARGED_KEY = "Discharged"
UNRECOGNISED_KEY = "Unrecognised"


def reliability_key(outcome: LabelOutcome, collapse_unrecognised: bool = False) -> str:
    """Nominal label key for agreement data.

    Classified outcomes key by the leaf id; UnrecognisedAt keys by the id of
    the upper-level node it stopped at, so distinct upper-level assignments
    stay distinguishable (leaves and non-leaves cannot collide). Setting
    ``collapse_unrecognised`` folds every UnrecognisedAt into one bucket, the
    coarser scheme used by per-category summary tables.
    """
    if outcome.kind is OutcomeKind.DISCHARGED:
        return DISCHARGED_KEY
    assert outcome.label is not None
    if outcome.kind is OutcomeKind.UNRECOGNISED_AT and collapse_unrecognised:
        return UNRECOGNISED_KEY
    return outcome.label.render()


@dataclass
class ReliabilityData:
    """A units x observers matrix of nominal label keys with missing cells."""

    units: tuple[str, ...]
    observers: tuple[str, ...]
    values: dict[tuple[str, str], str]

    @classmethod
    def from_rows(cls, rows: Iterable[tuple[str, str, str]]) -> "ReliabilityData":
        """Build from (unit, observer, value) triples, preserving first-seen order."""
        units: list[str] = []
        observers: list[str] = []
        values: dict[tuple[str, str], str] = {}
        for unit, observer, value in rows:
            if unit not in units:
                units.append(unit)
            if observer not in observers:
                observers.append(observer)
            key = (unit, observer)
            if key in values and values[key] != value:
                raise IntegrityError(f"conflicting values for unit {unit!r} observer {observer!r}")
            values[key] = value
        return cls(tuple(units), tuple(observers), values)

    def unit_values(self, unit: str) -> list[str]:
        return [self.values[(unit, o)] for o in self.observers if (unit, o) in self.values]


@dataclass
class CoincidenceMatrix:
    labels: tuple[str, ...]
    matrix: np.ndarray  # square, symmetric, o[c,k]

    @property
    def marginals(self) -> np.ndarray:
        return self.matrix.sum(axis=1)

    @property
    def n(self) -> float:
        return float(self.matrix.sum())


def coincidence_matrix(data: ReliabilityData) -> CoincidenceMatrix:
    """Standard coincidence counts: within pairable units, every ordered value
    pair from distinct observers contributes 1/(m_u - 1)."""
    pairable = [vals for u in data.units if len(vals := data.unit_values(u)) >= 2]
    if not pairable:
        raise InsufficientDataError("no unit has two or more values; agreement is undefined")
    labels = tuple(sorted({v for vals in pairable for v in vals}))
    pos = {label: i for i, label in enumerate(labels)}
    matrix = np.zeros((len(labels), len(labels)))
    for vals in pairable:
        weight = 1.0 / (len(vals) - 1)
        for i, a in enumerate(vals):
            for j, b in enumerate(vals):
                if i != j:
                    matrix[pos[a], pos[b]] += weight
    return CoincidenceMatrix(labels=labels, matrix=matrix)


def krippendorff_alpha_nominal(data: ReliabilityData) -> float:
    """alpha = 1 - D_o/D_e with nominal distance (labels differ or they do not).

    Raises InsufficientDataError when no unit is pairable and
    DegenerateDataError when every pairable value is identical (D_e = 0,
    "perfect homogeneity": agreement is trivially total but alpha is not a
    number).
    """
    cm = coincidence_matrix(data)
    n = cm.n
    marginals = cm.marginals
    d_observed = n - float(np.trace(cm.matrix))
    d_expected = (n * n - float(marginals @ marginals)) / (n - 1.0)
    if d_expected == 0.0:
        raise DegenerateDataError("all pairable values identical (perfect homogeneity)")
    return 1.0 - d_observed / d_expected


def brute_force_alpha_oracle(data: ReliabilityData) -> float:
    """Direct evaluation of the alpha definition, deliberately unoptimized.

    Observed disagreement: the average over all pairable values of the
    fraction of disagreeing ordered within-unit pairs, weighted by
    1/(m_u - 1). Expected disagreement: the disagreement rate over all
    ordered pairs of pairable values regardless of unit. Used by the test
    suite as an independent oracle for the coincidence-matrix path.
    """
    unit_vals = [vals for u in data.units if len(vals := data.unit_values(u)) >= 2]
    if not unit_vals:
        raise InsufficientDataError("no unit has two or more values; agreement is undefined")
    pooled = [v for vals in unit_vals for v in vals]
    n = len(pooled)

    d_observed = 0.0
    for vals in unit_vals:
        m = len(vals)
        disagreements = sum(
            1 for i in range(m) for j in range(m) if i != j and vals[i] != vals[j]
        )
        d_observed += disagreements / (m - 1)
    d_observed /= n

    d_expected = sum(
        1 for i in range(n) for j in range(n) if i != j and pooled[i] != pooled[j]
    ) / (n * (n - 1))
    if d_expected == 0.0:
        raise DegenerateDataError("all pairable values identical (perfect homogeneity)")
    return 1.0 - d_observed / d_expected


@dataclass
class CategoryCountTable:
    """Table-shaped per-category counts: one row per leaf, then the
    Unrecognised and Discharged buckets."""

    rows: tuple[tuple[str, int], ...]

    @property
    def total(self) -> int:
        return sum(count for _, count in self.rows)

    def to_csv(self) -> str:
        out = io.StringIO()
        out.write("category,count\n")
        for label, count in self.rows:
            out.write(f"{_csv_cell(label)},{count}\n")
        return out.getvalue()

    def to_text(self) -> str:
        width = max((len(label) for label, _ in self.rows), default=8)
        lines = [f"{label:<{width}}  {count:>6}" for label, count in self.rows]
        lines.append(f"{'total':<{width}}  {self.total:>6}")
        return "\n".join(lines)


def category_count_table(
    results: Iterable[tuple[str, LabelOutcome]],
    h: Hierarchy,
    leaf_set: Sequence[ConceptId] | None = None,
) -> CategoryCountTable:
    """Count final outcomes per leaf, plus Unrecognised and Discharged buckets."""
    if leaf_set is None:
        leaf_ids = [leaf.id for leaf in h.leaves()]
    else:
        leaf_ids = list(leaf_set)
        hierarchy_leaves = {leaf.id for leaf in h.leaves()}
        for cid in leaf_ids:
            if cid not in hierarchy_leaves:
                raise IntegrityError(f"{cid.render()!r} is not a leaf of the hierarchy")
    counts = {cid: 0 for cid in leaf_ids}
    unrecognised = 0
    discharged = 0
    for image_id, outcome in results:
        if outcome.kind is OutcomeKind.DISCHARGED:
            discharged += 1
            continue
        assert outcome.label is not None
        if outcome.label not in h:
            raise IntegrityError(
                f"outcome for {image_id!r} references unknown node {outcome.label.render()!r}"
            )
        if outcome.kind is OutcomeKind.UNRECOGNISED_AT:
            unrecognised += 1
        else:
            if outcome.label not in counts:
                raise IntegrityError(
                    f"outcome for {image_id!r} hit leaf {outcome.label.render()!r} outside the leaf set"
                )
            counts[outcome.label] += 1
    rows = [(h.node(cid).name, counts[cid]) for cid in leaf_ids]
    rows.append((UNRECOGNISED_KEY, unrecognised))
    rows.append((DISCHARGED_KEY, discharged))
    return CategoryCountTable(rows=tuple(rows))


@dataclass(frozen=True)
class RateModel:
    """Simulated effort/pay assumptions; inputs to reports, never results.

    ``seconds_per_question`` models how long one question of each protocol
    takes; ``payment_per_image`` scales with task size to give the per-task
    payment. All rates must be strictly positive.
    """

    seconds_per_question: Mapping[Protocol, float]
    payment_per_image: Mapping[Protocol, float]

    def __post_init__(self):
        for mapping in (self.seconds_per_question, self.payment_per_image):
            for protocol, value in mapping.items():
                if value <= 0:
                    raise ConfigurationError(f"rate for {protocol.value} must be positive, got {value}")

    def seconds_for(self, protocol: Protocol) -> float:
        try:
            return self.seconds_per_question[protocol]
        except KeyError:
            raise ConfigurationError(f"no seconds-per-question rate for protocol {protocol.value}") from None

    def payment_for(self, protocol: Protocol, task_size: int) -> float:
        try:
            return self.payment_per_image[protocol] * task_size
        except KeyError:
            raise ConfigurationError(f"no payment rate for protocol {protocol.value}") from None


DEFAULT_RATES = RateModel(
    seconds_per_question={Protocol.METHOD_A: 5.0, Protocol.METHOD_B: 2.0, Protocol.METHOD_C: 2.2},
    payment_per_image={Protocol.METHOD_A: 0.02, Protocol.METHOD_B: 0.03, Protocol.METHOD_C: 0.03},
)


@dataclass(frozen=True)
class SessionStats:
    """One finished session as the cost report sees it."""

    protocol: Protocol
    task_id: str
    question_count: int


@dataclass(frozen=True)
class CostRow:
    method: str
    alpha: Optional[float]
    time_min: float
    payment: float
    mean_questions_per_task: float
    sessions: int


@dataclass
class CostReport:
    """Per-protocol simulated time and payment figures (labeled simulated)."""

    rows: tuple[CostRow, ...]

    def to_csv(self) -> str:
        out = io.StringIO()
        out.write("method,alpha,time_min,payment\n")
        for row in self.rows:
            alpha = "" if row.alpha is None else repr(row.alpha)
            out.write(f"{row.method},{alpha},{row.time_min!r},{row.payment!r}\n")
        return out.getvalue()

    def to_text(self) -> str:
        lines = ["method  alpha      time_min   payment   (simulated rates)"]
        for row in self.rows:
            alpha = "n/a" if row.alpha is None else f"{row.alpha:.3f}"
            lines.append(f"{row.method:<6}  {alpha:<9}  {row.time_min:<9.2f}  {row.payment:.2f}")
        return "\n".join(lines)


def cost_report(
    transcripts: Sequence[SessionStats],
    rates: RateModel,
    task_size: int,
    alpha_by_protocol: Mapping[Protocol, Optional[float]] | None = None,
) -> CostReport:
    """Mean task time per protocol = mean questions per task x seconds per question.

    A "task" here is one annotator's completed pass; with 50 one-question
    images at 5 s/question that is 50 * 5 / 60 = 4.17 minutes.
    """
    alpha_by_protocol = alpha_by_protocol or {}
    by_protocol: dict[Protocol, list[SessionStats]] = {}
    for stat in transcripts:
        by_protocol.setdefault(stat.protocol, []).append(stat)
    rows = []
    for protocol in sorted(by_protocol, key=lambda p: p.value):
        stats = by_protocol[protocol]
        tasks = {(s.task_id) for s in stats}
        total_questions = sum(s.question_count for s in stats)
        mean_per_task = total_questions / len(tasks)
        rows.append(
            CostRow(
                method=protocol.value,
                alpha=alpha_by_protocol.get(protocol),
                time_min=mean_per_task * rates.seconds_for(protocol) / 60.0,
                payment=rates.payment_for(protocol, task_size),
                mean_questions_per_task=mean_per_task,
                sessions=len(stats),
            )
        )
    return CostReport(rows=tuple(rows))


def _csv_cell(value: str) -> str:
    if any(ch in value for ch in ',"\n'):
        return '"' + value.replace('"', '""') + '"'
    return value
