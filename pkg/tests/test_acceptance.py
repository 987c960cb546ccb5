"""End-to-end acceptance gate.

One test per package-level guarantee, each with explicit tolerances and a
wall-clock budget. Run with ``pytest tests/test_acceptance.py -v -s`` to see
the PASS lines.
"""
from __future__ import annotations

import itertools
import json
import random
import time
from collections import Counter

import pytest
from fastapi.testclient import TestClient

from visanno import (
    Answer,
    AnnotatorModel,
    ConceptId,
    ConsensusKind,
    DegenerateDataError,
    InsufficientDataError,
    LabelOutcome,
    OutcomeKind,
    Protocol,
    ReliabilityData,
    VoteSet,
    aggregate,
    brute_force_alpha_oracle,
    generate_synthetic_corpus,
    krippendorff_alpha_nominal,
    oracle_models,
    replay_state,
    run_campaign,
    run_method_comparison,
)
from visanno import engine
from visanno.hierarchy import hierarchy_from_document
from visanno.service import create_service
from visanno.storage import parse_export, render_export

from conftest import load_hierarchy, random_hierarchy_document

GOLDFINCH_DIFFERENTIA = "Crimson face and yellow-and-black wings"


class Budget:
    """Asserts the block it wraps finished inside its wall-clock budget."""

    def __init__(self, seconds: float, label: str):
        self.seconds = seconds
        self.label = label

    def __enter__(self):
        self.start = time.monotonic()
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc_type is None:
            elapsed = time.monotonic() - self.start
            assert elapsed < self.seconds, (
                f"{self.label} took {elapsed:.2f}s, budget {self.seconds}s"
            )
            print(f"PASS: {self.label} ({elapsed:.2f}s < {self.seconds}s)")
        return False


# --- 1. agreement coefficient vs definitional oracle --------------------------------

def random_reliability_fixture(rng: random.Random) -> ReliabilityData:
    units = [f"u{i}" for i in range(1, rng.randint(1, 10) + 1)]
    observers = [f"o{i}" for i in range(1, rng.randint(2, 5) + 1)]
    labels = [f"L{i}" for i in range(1, rng.randint(2, 6) + 1)]
    rows = []
    for unit in units:
        for observer in observers:
            if rng.random() < 0.2:
                continue  # missing cell
            rows.append((unit, observer, rng.choice(labels)))
    return ReliabilityData.from_rows(rows)


def test_alpha_matches_brute_force_oracle_on_random_fixtures():
    rng = random.Random(20240811)
    compared = 0
    with Budget(5.0, "alpha vs pairwise oracle on random fixtures"):
        for _ in range(400):
            data = random_reliability_fixture(rng)
            try:
                expected = brute_force_alpha_oracle(data)
            except (InsufficientDataError, DegenerateDataError) as err:
                with pytest.raises(type(err)):
                    krippendorff_alpha_nominal(data)
                continue
            got = krippendorff_alpha_nominal(data)
            assert abs(got - expected) <= 1e-9, (got, expected)
            compared += 1
        assert compared >= 200, f"only {compared} numeric comparisons"


# --- 2. agreement coefficient anchor values -----------------------------------------

def test_alpha_anchor_values():
    with Budget(10.0, "alpha anchors (perfect, single-unit, uniform noise)"):
        perfect = ReliabilityData.from_rows(
            [(f"u{i}", o, label) for i, label in enumerate(["A", "B", "A", "C"]) for o in ("o1", "o2", "o3")]
        )
        assert abs(krippendorff_alpha_nominal(perfect) - 1.0) <= 1e-12

        disagreement = ReliabilityData.from_rows([("u1", "o1", "A"), ("u1", "o2", "B")])
        assert abs(krippendorff_alpha_nominal(disagreement) - 0.0) <= 1e-12

        labels = [f"L{i}" for i in range(12)]
        near_zero = 0
        for seed in range(50):
            rng = random.Random(seed)
            rows = [
                (f"u{u}", f"o{o}", rng.choice(labels))
                for u in range(1200)
                for o in range(3)
            ]
            alpha = krippendorff_alpha_nominal(ReliabilityData.from_rows(rows))
            if -0.05 <= alpha <= 0.05:
                near_zero += 1
        assert near_zero >= 48, f"uniform-random alpha near zero in only {near_zero}/50 runs"


# --- 3. question engine: termination, soundness, canonical flows ----------------------

def assert_sound(h, session) -> None:
    outcome = session.outcome
    confirmed = {
        question.subject_node
        for question, answer in session.transcript
        if question.subject_node is not None and answer == Answer.yes()
    }
    denied = {
        question.subject_node
        for question, answer in session.transcript
        if question.subject_node is not None and answer == Answer.no()
    }
    if outcome.kind is OutcomeKind.CLASSIFIED:
        assert not h.node(outcome.label).children
        for prefix in outcome.label.prefixes():
            assert prefix in confirmed
    elif outcome.kind is OutcomeKind.UNRECOGNISED_AT:
        assert h.node(outcome.label).children
        for prefix in outcome.label.prefixes():
            assert prefix in confirmed
        for child in h.node(outcome.label).children:
            assert child.id in denied
    else:
        assert outcome.kind is OutcomeKind.DISCHARGED
        for root in h.roots:
            assert root.id in denied


def test_engine_terminates_soundly_within_bound():
    rng = random.Random(77)
    with Budget(5.0, "engine termination and soundness on 1000 random walks"):
        for _ in range(1000):
            h = hierarchy_from_document(random_hierarchy_document(rng))
            bound = engine.question_upper_bound(h)
            protocol = rng.choice((Protocol.METHOD_B, Protocol.METHOD_C))
            session, question = engine.start_session(h, "img", protocol)
            while not session.finished:
                assert question.sequence_no <= bound
                question = engine.submit_answer(
                    session, Answer.yes() if rng.random() < 0.5 else Answer.no()
                )
            assert session.question_count <= bound
            assert_sound(h, session)

        goldfinch = load_hierarchy("goldfinch.json")
        session, _ = engine.start_session(goldfinch, "img", Protocol.METHOD_C)
        for _ in range(3):
            engine.submit_answer(session, Answer.yes())
        assert session.outcome.kind is OutcomeKind.CLASSIFIED
        assert session.outcome.label.render() == "1-1-1"
        assert session.question_count == 3

        session, _ = engine.start_session(goldfinch, "img", Protocol.METHOD_C)
        for _ in range(3):
            engine.submit_answer(session, Answer.no())
        assert session.outcome.kind is OutcomeKind.DISCHARGED

        session, _ = engine.start_session(goldfinch, "img", Protocol.METHOD_C)
        engine.submit_answer(session, Answer.yes())
        engine.submit_answer(session, Answer.no())
        assert session.outcome.kind is OutcomeKind.UNRECOGNISED_AT
        assert session.outcome.label.render() == "1"


# --- 4. consensus rule vs exhaustive oracle -------------------------------------------

def consensus_oracle(keys: list[str], target: int, cap: int) -> str:
    counts = Counter(keys)
    if len(keys) >= target:
        top = max(counts.values())
        winners = [k for k, c in counts.items() if c == top]
        if top >= 2 and len(winners) == 1:
            return f"final:{winners[0]}"
        if len(keys) >= cap:
            return "unresolved"
    return "needs_escalation"


def test_consensus_rule_matches_exhaustive_oracle():
    def outcome_for(label: str) -> LabelOutcome:
        return LabelOutcome(
            kind=OutcomeKind.CLASSIFIED,
            label=ConceptId.parse(label),
            label_path_texts=(),
            question_count=1,
        )

    with Budget(1.0, "consensus rule vs exhaustive 3-label oracle"):
        labels = ["1", "2", "3"]
        for n in (3, 4):
            for pattern in itertools.product(labels, repeat=n):
                vs = VoteSet("img", target_replication=3)
                for i, label in enumerate(pattern):
                    vs.add(f"a{i}", outcome_for(label))
                result = aggregate(vs, escalation_cap=5)
                if result.kind is ConsensusKind.FINAL:
                    got = f"final:classified:{result.label.label.render()}"
                else:
                    got = result.kind.value
                want = consensus_oracle([f"classified:{k}" for k in pattern], 3, 5)
                assert got == want, pattern
                if n == 3:
                    expect_escalation = len(set(pattern)) == 3
                    assert (result.kind is ConsensusKind.NEEDS_ESCALATION) == expect_escalation


# --- 5. oracle campaign at scale -------------------------------------------------------

def test_oracle_campaign_recovers_all_1200_labels():
    twelve = load_hierarchy("twelve.json")
    with Budget(30.0, "oracle campaign: 1200 images, 24 tasks, full recovery"):
        corpus, truth = generate_synthetic_corpus(twelve, n_per_leaf=100, seed=5)
        assert len(corpus) == 1200
        result = run_campaign(
            twelve, corpus, truth, oracle_models(), Protocol.METHOD_C, task_size=50, seed=5
        )
        row = result.row
        assert row.tasks == 24
        assert row.accuracy == 1.0
        assert row.alpha == 1.0
        assert row.escalated == 0
        assert row.unresolved == 0
        counts = dict(row.counts.rows)
        leaf_names = {leaf.name for leaf in twelve.leaves()}
        assert len(leaf_names) == 12
        assert all(counts[name] == 100 for name in leaf_names)
        assert counts["Unrecognised"] == 0
        assert sum(counts.values()) == 1200


# --- 6. noisy annotators: aggregation helps, runs repeat bit-for-bit --------------------

def test_noisy_campaigns_benefit_from_aggregation():
    twelve = load_hierarchy("twelve.json")
    with Budget(120.0, "noisy campaigns: aggregation beats single votes over 30 seeds"):
        corpus, truth = generate_synthetic_corpus(twelve, n_per_leaf=84, seed=1)
        assert len(corpus) >= 1000
        aggregated = []
        single = []
        for seed in range(1, 31):
            models = tuple(AnnotatorModel(flat_accuracy=0.9, seed=i) for i in (1, 2, 3))
            row = run_campaign(
                twelve, corpus, truth, models, Protocol.METHOD_A, task_size=50, seed=seed
            ).row
            aggregated.append(row.accuracy)
            single.append(row.single_accuracy)
        mean_aggregated = sum(aggregated) / len(aggregated)
        mean_single = sum(single) / len(single)
        assert mean_aggregated >= mean_single, (mean_aggregated, mean_single)

        repeat = [
            run_campaign(
                twelve, corpus, truth,
                tuple(AnnotatorModel(flat_accuracy=0.9, seed=i) for i in (1, 2, 3)),
                Protocol.METHOD_A, task_size=50, seed=1,
            )
            for _ in range(2)
        ]
        assert repeat[0].log.dump() == repeat[1].log.dump()
        assert repeat[0].row == repeat[1].row


# --- 7. method comparison table ---------------------------------------------------------

def test_method_comparison_table_with_oracle_annotators():
    twelve = load_hierarchy("twelve.json")
    with Budget(60.0, "A/B/C comparison at sizes 50 and 100 with zero oracle deltas"):
        corpus, truth = generate_synthetic_corpus(twelve, n_per_leaf=25, seed=2)
        models = {p: oracle_models() for p in Protocol}
        report = run_method_comparison(twelve, corpus, truth, models, sizes=(50, 100), seed=2)

        assert [(r.protocol.value, r.task_size) for r in report.rows] == [
            ("A", 50), ("B", 50), ("C", 50), ("A", 100), ("B", 100), ("C", 100),
        ]
        by_key = {(r.protocol.value, r.task_size): r for r in report.rows}
        assert by_key[("A", 50)].payment == pytest.approx(1.0)
        assert by_key[("B", 50)].payment == pytest.approx(1.5)
        assert by_key[("C", 50)].payment == pytest.approx(1.5)
        assert by_key[("A", 100)].payment == pytest.approx(2.0)
        assert by_key[("C", 100)].payment == pytest.approx(3.0)
        for delta in report.deltas:
            assert delta.alpha_delta == 0.0
            assert delta.accuracy_delta == 0.0
        labels = {(d.label, d.task_size) for d in report.deltas}
        assert labels == {
            ("B-A", 50), ("C-B", 50), ("C-A", 50), ("B-A", 100), ("C-B", 100), ("C-A", 100),
        }
        header = report.to_csv().splitlines()[0]
        assert header == "method,hierarchy,visual_properties,size,alpha,time_min,payment"


# --- 8. event-sourced state replays exactly ----------------------------------------------

def random_ops_campaign(op_count: int, seed: int):
    from visanno import Campaign, CampaignConfig, EventLog
    from visanno.storage import ImageRecord

    goldfinch = load_hierarchy("goldfinch.json")
    rng = random.Random(seed)
    counter = iter(range(1, 1 << 32))
    log = EventLog(clock=lambda: float(next(counter)))
    config = CampaignConfig(
        protocol=Protocol.METHOD_C, task_size=2, replication=3, deterministic=True
    )
    records = [ImageRecord(image_id=f"img-{k:03d}", uri=f"synthetic://{k}") for k in range(1, 13)]
    campaign = Campaign.create("c-fuzz", goldfinch, records, config, log=log)
    annotators: list[str] = []
    ops = 0
    while ops < op_count:
        ops += 1
        roll = rng.random()
        if roll < 0.15 or not annotators:
            annotators.append(campaign.register_annotator(f"w{len(annotators) + 1}").annotator_id)
            continue
        ann = rng.choice(annotators)
        assignment = campaign.active_assignment(ann)
        if assignment is None:
            campaign.claim_task(ann)
            continue
        if roll > 0.93:
            campaign.abandon_task(ann, assignment.task_id)
            continue
        image_id = rng.choice(assignment.pending_image_ids)
        session = campaign.start_session(ann, image_id)
        answer = Answer.yes() if rng.random() < 0.6 else Answer.no()
        campaign.submit_answer(session.session_id, answer)
    return campaign


def test_replayed_state_equals_live_state():
    with Budget(30.0, "200 random ops replay to identical state; restarted service answers alike"):
        for seed in (3, 11, 29):
            campaign = random_ops_campaign(200, seed)
            assert replay_state(campaign.log) == campaign.state

        def scripted_responses(data_dir: str) -> list:
            goldfinch_doc = json.loads(open(__file__.replace("test_acceptance.py", "data/goldfinch.json")).read())
            captured = []
            with TestClient(create_service(data_dir)) as client:
                create = client.post(
                    "/api/v1/campaigns",
                    json={
                        "protocol": "C",
                        "hierarchy": goldfinch_doc,
                        "images": [
                            {"image_id": "img-1", "uri": "u1"},
                            {"image_id": "img-2", "uri": "u2"},
                        ],
                        "task_size": 2,
                        "deterministic": True,
                    },
                )
                captured.append((create.status_code, create.json()))
                cid = create.json()["campaign_id"]
                token = client.post(
                    f"/api/v1/campaigns/{cid}/annotators", json={"name": "alice"}
                ).json()["token"]
                headers = {"Authorization": f"Bearer {token}"}
                for call in (
                    ("POST", f"/api/v1/campaigns/{cid}/claims", None),
                    ("POST", f"/api/v1/campaigns/{cid}/sessions", {"image_id": "img-1"}),
                    ("POST", f"/api/v1/campaigns/{cid}/sessions/s-1/answers",
                     {"answer": {"kind": "yes"}, "sequence_no": 1}),
                    ("POST", f"/api/v1/campaigns/{cid}/sessions/s-1/answers",
                     {"answer": {"kind": "no"}, "sequence_no": 2}),
                    ("GET", f"/api/v1/campaigns/{cid}/progress", None),
                    ("GET", f"/api/v1/campaigns/{cid}/events", None),
                ):
                    method, url, body = call
                    if method == "POST":
                        response = client.post(url, json=body, headers=headers)
                    else:
                        response = client.get(url, headers=headers)
                    payload = response.text if url.endswith("events") else response.json()
                    captured.append((response.status_code, payload))
            return captured

        import tempfile

        with tempfile.TemporaryDirectory() as d1, tempfile.TemporaryDirectory() as d2:
            assert scripted_responses(d1) == scripted_responses(d2)


# --- 9. export round-trips and carries the distinguishing texts ---------------------------

def test_export_round_trip_and_descriptions():
    twelve = load_hierarchy("twelve.json")
    with Budget(5.0, "export round-trips byte-identically with full descriptions"):
        corpus, truth = generate_synthetic_corpus(twelve, n_per_leaf=1, seed=4)
        result = run_campaign(
            twelve, corpus, truth, oracle_models(), Protocol.METHOD_C, task_size=12, seed=4
        )
        text = result.campaign.export()
        rows = parse_export(text)
        assert render_export(rows) == text
        assert len(rows) == 12
        for row in rows:
            leaf = twelve.node(ConceptId.parse(row["label"]))
            assert leaf.differentia in row["description"]
        goldfinch_rows = [row for row in rows if row["label"] == "1-1-1"]
        assert goldfinch_rows
        assert GOLDFINCH_DIFFERENTIA in goldfinch_rows[0]["description"]
