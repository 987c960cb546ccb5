from __future__ import annotations

import json

import pytest

from visanno import (
    ConceptId,
    EventLog,
    IntegrityError,
    LabelOutcome,
    ManifestError,
    OutcomeKind,
    StateError,
    apply_localization,
    ingest_manifest,
    parse_detections,
    parse_manifest,
)
from visanno.storage import (
    CropBox,
    DetectionBox,
    ImageRecord,
    compose_description,
    export_rows,
    parse_export,
    render_export,
)


def manifest_lines(*rows: dict) -> str:
    return "\n".join(json.dumps(row) for row in rows) + "\n"


# --- manifest parsing -----------------------------------------------------------

def test_parse_manifest_fields():
    text = manifest_lines(
        {"image_id": "a", "uri": "file:///a.jpg", "domain": "birds"},
        {"image_id": "b", "uri": "file:///b.jpg", "exclude": True},
        {"image_id": "c", "uri": "file:///c.jpg", "crop": {"x": 1, "y": 2, "w": 30, "h": 40}},
    )
    records = parse_manifest(text)
    assert [r.image_id for r in records] == ["a", "b", "c"]
    assert records[0].domain_hint == "birds"
    assert records[1].exclude is True
    assert records[2].crop == CropBox(1, 2, 30, 40)
    # a pre-cropped manifest row carries its own provenance
    assert records[2].source is not None
    assert records[2].source.parent_image_id == "c"
    assert records[2].source.detector == "manifest"


def test_parse_manifest_skips_blank_lines():
    text = '\n{"image_id": "a", "uri": "u"}\n\n{"image_id": "b", "uri": "u"}\n'
    assert len(parse_manifest(text)) == 2


@pytest.mark.parametrize(
    "line, fragment",
    [
        ("{not json", "invalid record"),
        ('["image_id"]', "must be an object"),
        ('{"image_id": "a", "uri": "u", "extra": 1}', "unknown field"),
        ('{"uri": "u"}', '"image_id" must be a non-empty string'),
        ('{"image_id": "a", "uri": ""}', '"uri" must be a non-empty string'),
        ('{"image_id": "a", "uri": "u", "domain": 3}', '"domain" must be a string'),
        ('{"image_id": "a", "uri": "u", "exclude": "yes"}', '"exclude" must be a boolean'),
        ('{"image_id": "a", "uri": "u", "crop": {"x": 1}}', "keys x,y,w,h"),
        ('{"image_id": "a", "uri": "u", "crop": {"x": 1, "y": 1, "w": 0, "h": 5}}', "extent"),
        ('{"image_id": "a", "uri": "u", "crop": {"x": -1, "y": 1, "w": 5, "h": 5}}', "origin"),
        ('{"image_id": "a", "uri": "u", "crop": {"x": 1.5, "y": 1, "w": 5, "h": 5}}', "integers"),
    ],
)
def test_parse_manifest_rejects_bad_rows(line, fragment):
    document = '{"image_id": "ok", "uri": "u"}\n' + line + "\n"
    with pytest.raises(ManifestError) as err:
        parse_manifest(document)
    assert fragment in str(err.value)
    assert "line 2" in str(err.value)


def test_parse_manifest_duplicate_ids_reported_with_lines():
    text = manifest_lines(
        {"image_id": "a", "uri": "u"},
        {"image_id": "b", "uri": "u"},
        {"image_id": "a", "uri": "v"},
    )
    with pytest.raises(IntegrityError) as err:
        parse_manifest(text)
    assert "'a'" in str(err.value)
    assert "[1, 3]" in str(err.value)


def test_ingest_merges_and_reingest_is_noop():
    first = manifest_lines({"image_id": "a", "uri": "u"}, {"image_id": "b", "uri": "u"})
    result = ingest_manifest(first)
    assert [r.image_id for r in result.added] == ["a", "b"]
    assert result.duplicates == ()

    again = ingest_manifest(first, existing=result.added)
    assert again.added == ()
    assert again.duplicates == ("a", "b")

    third = manifest_lines({"image_id": "a", "uri": "u"}, {"image_id": "c", "uri": "u"})
    merged = ingest_manifest(third, existing=result.added)
    assert [r.image_id for r in merged.added] == ["c"]
    assert merged.duplicates == ("a",)


def test_ingest_conflicting_content_rejected():
    base = parse_manifest(manifest_lines({"image_id": "a", "uri": "u"}))
    with pytest.raises(IntegrityError, match="different content"):
        ingest_manifest(manifest_lines({"image_id": "a", "uri": "other"}), existing=base)


def test_image_record_payload_round_trip():
    records = parse_manifest(
        manifest_lines(
            {"image_id": "a", "uri": "u", "domain": "d"},
            {"image_id": "c", "uri": "u", "crop": {"x": 0, "y": 0, "w": 9, "h": 9}, "exclude": True},
        )
    )
    for record in records:
        assert ImageRecord.from_payload(record.payload()) == record


def test_image_record_crop_requires_source():
    with pytest.raises(IntegrityError, match="come together"):
        ImageRecord(image_id="x", uri="u", crop=CropBox(0, 0, 5, 5))


# --- detections and localization -------------------------------------------------

DETECTIONS = manifest_lines(
    {
        "image_id": "img-1",
        "detector": "det-v1",
        "boxes": [
            {"x": 0, "y": 0, "w": 50, "h": 50, "confidence": 0.9, "label": "bird"},
            {"x": 60, "y": 0, "w": 30, "h": 30, "confidence": 0.3},
        ],
    }
)


def test_parse_detections():
    rows = parse_detections(DETECTIONS)
    assert len(rows) == 1
    row = rows[0]
    assert row.image_id == "img-1"
    assert row.detector == "det-v1"
    assert [b.confidence for b in row.boxes] == [0.9, 0.3]
    assert row.boxes[0].label == "bird"
    assert row.boxes[1].label == ""


@pytest.mark.parametrize(
    "line, fragment",
    [
        ('{"image_id": "a"}', "image_id and detector must be strings"),
        ('{"image_id": "a", "detector": "d", "boxes": [], "extra": 1}', "fields image_id, detector, boxes"),
        ('{"image_id": "a", "detector": "d", "boxes": 3}', '"boxes" must be an array'),
        ('{"image_id": "a", "detector": "d", "boxes": [{"x": 1}]}', "needs x,y,w,h and confidence"),
        (
            '{"image_id": "a", "detector": "d", "boxes": [{"x": 1, "y": 1, "w": 2, "h": 2, "confidence": "hi"}]}',
            "confidence must be a number",
        ),
        (
            '{"image_id": "a", "detector": "d", "boxes": [{"x": 1, "y": 1, "w": 2, "h": 2, "confidence": 1.5}]}',
            "confidence must be in [0, 1]",
        ),
    ],
)
def test_parse_detections_rejects_bad_rows(line, fragment):
    with pytest.raises(ManifestError) as err:
        parse_detections(line + "\n")
    assert fragment in str(err.value)
    assert "line 1" in str(err.value)


def test_apply_localization_threshold_and_stable_ids():
    original = ImageRecord(image_id="img-1", uri="file:///img1.jpg", domain_hint="birds")
    boxes = parse_detections(DETECTIONS)[0].boxes
    children = apply_localization(original, boxes, detector="det-v1", min_confidence=0.5)
    assert [c.image_id for c in children] == ["img-1#crop1"]
    assert children[0].uri == original.uri
    assert children[0].domain_hint == "birds"
    assert children[0].source.detector == "det-v1"
    assert children[0].source.confidence == 0.9

    # ids come from the input box position, so lowering the threshold keeps
    # crop1 as crop1 and adds crop2 rather than renumbering
    both = apply_localization(original, boxes, detector="det-v1", min_confidence=0.2)
    assert [c.image_id for c in both] == ["img-1#crop1", "img-1#crop2"]
    assert both[0] == children[0]


def test_apply_localization_bounds_check():
    original = ImageRecord(image_id="img-1", uri="u")
    box = DetectionBox(box=CropBox(90, 90, 20, 20), confidence=0.99)
    with pytest.raises(IntegrityError, match="exceeds image bounds"):
        apply_localization(original, [box], detector="d", bounds=(100, 100))
    assert apply_localization(original, [box], detector="d", bounds=(110, 110))


def test_apply_localization_rejects_crop_of_crop():
    records = parse_manifest(
        manifest_lines({"image_id": "c", "uri": "u", "crop": {"x": 0, "y": 0, "w": 5, "h": 5}})
    )
    with pytest.raises(IntegrityError, match="already a crop"):
        apply_localization(records[0], [], detector="d")


# --- event log --------------------------------------------------------------------

def counter_clock():
    state = {"t": 0.0}

    def clock() -> float:
        state["t"] += 1.0
        return state["t"]

    return clock


def test_event_log_appends_contiguously():
    log = EventLog(clock=counter_clock())
    first = log.append("CampaignCreated", {"campaign_id": "c"})
    second = log.append("AnnotatorRegistered", {"annotator_id": "a"})
    assert (first.seq, second.seq) == (1, 2)
    assert (first.ts, second.ts) == (1.0, 2.0)
    assert log.next_seq() == 3
    assert len(log) == 2


def test_event_log_rejects_unknown_kind():
    log = EventLog()
    with pytest.raises(IntegrityError, match="unknown event kind"):
        log.append("SomethingElse", {})


def test_event_log_enforces_session_order():
    log = EventLog()
    with pytest.raises(IntegrityError, match="unknown session"):
        log.append("AnswerGiven", {"session_id": "s", "sequence_no": 1})
    log.append("SessionStarted", {"session_id": "s"})
    with pytest.raises(IntegrityError, match="started twice"):
        log.append("SessionStarted", {"session_id": "s"})
    with pytest.raises(IntegrityError, match="out of order"):
        log.append("AnswerGiven", {"session_id": "s", "sequence_no": 2})
    log.append("AnswerGiven", {"session_id": "s", "sequence_no": 1})
    log.append("SessionFinished", {"session_id": "s"})
    with pytest.raises(IntegrityError, match="after session 's' finished"):
        log.append("AnswerGiven", {"session_id": "s", "sequence_no": 2})


def test_event_log_line_is_canonical():
    log = EventLog(clock=counter_clock())
    record = log.append("CampaignCreated", {"b": 1, "a": 2})
    assert record.line() == '{"data":{"a":2,"b":1},"kind":"CampaignCreated","seq":1,"ts":1.0}'
    assert log.dump() == record.line() + "\n"


def test_event_log_file_round_trip(tmp_path):
    path = tmp_path / "campaign.ndjson"
    log = EventLog(path, clock=counter_clock())
    log.append("CampaignCreated", {"campaign_id": "c"})
    log.append("SessionStarted", {"session_id": "s"})
    log.close()

    reopened = EventLog.open(path, clock=counter_clock())
    assert [r.kind for r in reopened.records()] == ["CampaignCreated", "SessionStarted"]
    # ordering state survives the reload: the session is still open
    reopened.append("AnswerGiven", {"session_id": "s", "sequence_no": 1})
    reopened.close()
    assert len(EventLog.open(path)) == 3


def test_event_log_rejects_corrupt_file(tmp_path):
    path = tmp_path / "campaign.ndjson"
    path.write_text('{"seq":1,"ts":1.0,"kind":"CampaignCreated","data":{}}\nnot json\n')
    with pytest.raises(IntegrityError, match="corrupt event log at line 2"):
        EventLog.open(path)


def test_event_log_rejects_gap_in_file(tmp_path):
    path = tmp_path / "campaign.ndjson"
    path.write_text(
        '{"seq":1,"ts":1.0,"kind":"CampaignCreated","data":{}}\n'
        '{"seq":3,"ts":2.0,"kind":"AnnotatorRegistered","data":{}}\n'
    )
    with pytest.raises(IntegrityError, match="contiguous"):
        EventLog.open(path)


# --- descriptions and export ----------------------------------------------------

def classified(label: str, questions: int = 3) -> LabelOutcome:
    return LabelOutcome(
        kind=OutcomeKind.CLASSIFIED,
        label=ConceptId.parse(label),
        label_path_texts=(),
        question_count=questions,
    )


def test_compose_description_leaf(goldfinch):
    assert compose_description(goldfinch, ConceptId.parse("1-1-1")) == (
        "Goldfinch: a Finch with Crimson face and yellow-and-black wings; "
        "Finch: Small seed-eating passerine with a stout conical bill; "
        "Bird: Feathered, winged, beaked vertebrate"
    )


def test_compose_description_root(goldfinch):
    assert compose_description(goldfinch, ConceptId.parse("2")) == (
        "Vehicle: Engineered conveyance for moving people or goods"
    )


def export_fixtures(goldfinch):
    images = parse_manifest(
        manifest_lines(
            {"image_id": "img-1", "uri": "u1"},
            {"image_id": "img-2", "uri": "u2"},
            {"image_id": "img-3", "uri": "u3"},
            {"image_id": "img-4", "uri": "u4"},
        )
    )
    finals = {
        "img-1": classified("1-1-1"),
        "img-2": LabelOutcome(
            kind=OutcomeKind.UNRECOGNISED_AT,
            label=ConceptId.parse("1"),
            label_path_texts=(),
            question_count=2,
        ),
        "img-3": LabelOutcome(
            kind=OutcomeKind.DISCHARGED, label=None, label_path_texts=(), question_count=3
        ),
    }
    counts = {"img-1": 3, "img-2": 3, "img-3": 4}
    rounds = {"img-3": 1}
    return export_rows(goldfinch, images, finals, counts, rounds)


def test_export_rows_shape(goldfinch):
    rows = export_fixtures(goldfinch)
    assert [r["image_id"] for r in rows] == ["img-1", "img-2", "img-3"]  # img-4 has no Final
    first = rows[0]
    assert first["label"] == "1-1-1"
    assert [level["id"] for level in first["levels"]] == ["1", "1-1", "1-1-1"]
    assert first["levels"][2]["differentia"] == "Crimson face and yellow-and-black wings"
    assert first["description"].startswith("Goldfinch: a Finch with")
    assert first["annotator_count"] == 3
    assert first["escalation_rounds"] == 0
    assert rows[1]["outcome"] == "unrecognised_at"
    assert rows[1]["description"].endswith("; unrecognised finer kind")
    assert rows[2]["label"] is None
    assert rows[2]["levels"] == []
    assert rows[2]["description"] == "Not recognised as any listed category"
    assert rows[2]["escalation_rounds"] == 1


def test_export_round_trip_is_byte_identical(goldfinch):
    rows = export_fixtures(goldfinch)
    text = render_export(rows)
    assert render_export(parse_export(text)) == text
    assert text.endswith("\n")
    assert all(json.loads(line) for line in text.strip().splitlines())


def test_export_requires_final_rows(goldfinch):
    with pytest.raises(StateError, match="no Final images"):
        export_rows(goldfinch, parse_manifest(manifest_lines({"image_id": "a", "uri": "u"})), {}, {}, {})


def test_export_rejects_foreign_label(goldfinch):
    images = parse_manifest(manifest_lines({"image_id": "a", "uri": "u"}))
    with pytest.raises(IntegrityError, match="not in the hierarchy"):
        export_rows(goldfinch, images, {"a": classified("9-9")}, {}, {})


@pytest.mark.parametrize(
    "mutate, fragment",
    [
        (lambda row: row.pop("uri"), "must have fields"),
        (lambda row: row.update(extra=1), "must have fields"),
        (lambda row: row.update(levels=row["levels"][:-1]), "levels must end at the label"),
        (
            lambda row: row.update(levels=[row["levels"][0], row["levels"][2]]),
            "not an ancestor chain",
        ),
        (
            lambda row: row.update(
                levels=[dict(row["levels"][0], id="2"), row["levels"][1], row["levels"][2]]
            ),
            "not an ancestor chain",
        ),
    ],
)
def test_parse_export_validates_rows(goldfinch, mutate, fragment):
    rows = export_fixtures(goldfinch)
    row = json.loads(render_export(rows).splitlines()[0])
    mutate(row)
    with pytest.raises(ManifestError) as err:
        parse_export(json.dumps(row) + "\n")
    assert fragment in str(err.value)


def test_parse_export_rejects_bad_json():
    with pytest.raises(ManifestError, match="line 1"):
        parse_export("nope\n")
