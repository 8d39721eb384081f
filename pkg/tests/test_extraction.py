import json
import threading
import time
from http.server import BaseHTTPRequestHandler, HTTPServer

import pytest
from hypothesis import given, strategies as st

from opskg.corpus import ChunkingMode, load_document, segment
from opskg.errors import BackendError, MalformedOutput, MissingExemplars
from opskg.extraction import (
    ATTRIBUTE_PREDICATES,
    BackendConfig,
    BackendKind,
    FewShotExample,
    RawExtraction,
    SchemaClass,
    SchemaSpec,
    build_prompt,
    extract_corpus,
    load_fewshot_examples,
    mock_backend,
    parse_structured_output,
)

SCHEMA = SchemaSpec.default()


def _shot():
    return FewShotExample(
        source_snippet="Boarding is performed by Gate Agent.",
        expected_extractions=[
            RawExtraction(SchemaClass.PROCEDURE, "Boarding",
                          {"stakeholder": "Gate Agent"}, 0),
            RawExtraction(SchemaClass.STAKEHOLDER, "Gate Agent", {}, 0),
        ])


class TestBuildPrompt:
    def test_payload_enumerates_schema(self):
        payload = build_prompt(SCHEMA, [_shot()], "text")
        assert payload.classes == ["Procedure", "Sequenced_Item", "Stakeholder"]
        assert payload.predicates == ["hasNext", "hasStakeholder"]
        for name in payload.classes + payload.predicates:
            assert name in payload.instruction
        assert "outside this list" in payload.instruction
        assert payload.text == "text"

    def test_no_shots_rejected(self):
        with pytest.raises(MissingExemplars):
            build_prompt(SCHEMA, [], "text")

    def test_exemplars_keep_given_order(self):
        second = FewShotExample(
            source_snippet="After Boarding, Pushback begins.",
            expected_extractions=[
                RawExtraction(SchemaClass.SEQUENCED_ITEM, "Boarding",
                              {"next": "Pushback"}, 0)])
        payload = build_prompt(SCHEMA, [_shot(), second], "text")
        assert [ex["input"] for ex in payload.examples] == [
            _shot().source_snippet, second.source_snippet]

    def test_empty_chunk_rejected(self):
        with pytest.raises(ValueError):
            build_prompt(SCHEMA, [_shot()], "")


class TestParseStructuredOutput:
    def test_well_formed_record(self):
        raw = json.dumps([{"class": "Procedure", "text": "boarding",
                           "attributes": {"stakeholder": "Ground Handler"}}])
        accepted, rejected = parse_structured_output(raw, SCHEMA, 3)
        assert rejected == []
        [ext] = accepted
        assert ext.extraction_class is SchemaClass.PROCEDURE
        assert ext.extraction_text == "boarding"
        assert ext.attributes == {"stakeholder": "Ground Handler"}
        assert ext.chunk_ordinal == 3

    def test_unknown_class_quarantined(self):
        raw = json.dumps([
            {"class": "Vehicle", "text": "tug", "attributes": {}},
            {"class": "Procedure", "text": "boarding", "attributes": {}},
        ])
        accepted, rejected = parse_structured_output(raw, SCHEMA, 0)
        assert len(accepted) == 1 and len(rejected) == 1
        assert "Vehicle" in rejected[0].reason

    def test_empty_record_list(self):
        assert parse_structured_output("[]", SCHEMA, 0) == ([], [])

    def test_unparseable_body(self):
        with pytest.raises(MalformedOutput) as err:
            parse_structured_output("{broken", SCHEMA, 0)
        assert err.value.body == "{broken"

    def test_non_array_body(self):
        with pytest.raises(MalformedOutput):
            parse_structured_output('{"class": "Procedure"}', SCHEMA, 0)

    @pytest.mark.parametrize("record,reason_part", [
        ({"class": "Procedure", "text": "", "attributes": {}}, "text"),
        ({"class": "Procedure", "text": "x", "attributes": {"color": "red"}},
         "color"),
        ({"class": "Procedure", "text": "x", "attributes": {"next": 5}},
         "strings"),
        ({"class": "Procedure", "text": "x", "attributes": []}, "attributes"),
        ("not-an-object", "object"),
    ])
    def test_bad_records_quarantined(self, record, reason_part):
        accepted, rejected = parse_structured_output(
            json.dumps([record]), SCHEMA, 0)
        assert accepted == []
        assert len(rejected) == 1
        assert reason_part in rejected[0].reason

    def test_restricted_schema_filters_classes(self):
        schema = SchemaSpec(frozenset({SchemaClass.PROCEDURE}),
                            frozenset({ATTRIBUTE_PREDICATES["stakeholder"]}))
        raw = json.dumps([
            {"class": "Stakeholder", "text": "crew", "attributes": {}},
            {"class": "Procedure", "text": "x",
             "attributes": {"next": "y"}},
        ])
        accepted, rejected = parse_structured_output(raw, schema, 0)
        assert accepted == []
        assert len(rejected) == 2


_json_scalars = st.one_of(st.none(), st.booleans(), st.integers(),
                          st.text(max_size=8))
_fuzzed_records = st.lists(st.one_of(
    _json_scalars,
    st.dictionaries(st.text(max_size=12), _json_scalars, max_size=4),
), max_size=6)


@given(records=_fuzzed_records)
def test_schema_closure_over_fuzzed_bodies(records):
    """Whatever the backend sends, nothing outside the schema gets out."""
    accepted, _rejected = parse_structured_output(
        json.dumps(records), SCHEMA, 0)
    for ext in accepted:
        assert ext.extraction_class in SCHEMA.classes
        assert set(ext.attributes) <= SCHEMA.allowed_attribute_keys()
        assert ext.extraction_text


class TestMockBackend:
    def test_performed_by_pattern(self):
        accepted, _ = parse_structured_output(
            mock_backend("Boarding is performed by Ground Handler.", SCHEMA),
            SCHEMA, 0)
        assert [(e.extraction_class, e.extraction_text, e.attributes)
                for e in accepted] == [
            (SchemaClass.PROCEDURE, "Boarding", {"stakeholder": "Ground Handler"}),
            (SchemaClass.STAKEHOLDER, "Ground Handler", {}),
        ]

    def test_after_begins_pattern(self):
        accepted, _ = parse_structured_output(
            mock_backend("After Boarding, Pushback begins.", SCHEMA), SCHEMA, 0)
        assert [(e.extraction_class, e.extraction_text, e.attributes)
                for e in accepted] == [
            (SchemaClass.SEQUENCED_ITEM, "Boarding", {"next": "Pushback"}),
        ]

    def test_no_pattern_match(self):
        assert mock_backend("The weather is fine.", SCHEMA) == "[]"

    def test_records_in_source_order(self):
        text = ("After Deicing, Pushback begins. "
                "Boarding is performed by Gate Agent.")
        accepted, _ = parse_structured_output(
            mock_backend(text, SCHEMA), SCHEMA, 0)
        assert [e.extraction_text for e in accepted] == \
            ["Deicing", "Boarding", "Gate Agent"]

    def test_byte_deterministic(self):
        text = "Boarding is performed by Gate Agent. After Boarding, Pushback begins."
        assert mock_backend(text, SCHEMA) == mock_backend(text, SCHEMA)


class _StubHandler(BaseHTTPRequestHandler):
    """Returns mock-backend output for the posted chunk text, optionally
    after a per-chunk delay, or fails a fixed number of times first."""

    delays: dict[str, float] = {}
    failures_left = 0
    lock = threading.Lock()

    def do_POST(self):
        length = int(self.headers["Content-Length"])
        body = json.loads(self.rfile.read(length))
        with _StubHandler.lock:
            should_fail = _StubHandler.failures_left > 0
            if should_fail:
                _StubHandler.failures_left -= 1
        if should_fail:
            self.send_response(500)
            self.end_headers()
            return
        text = body["prompt"]["text"]
        time.sleep(_StubHandler.delays.get(text.strip(), 0.0))
        payload = mock_backend(text, SCHEMA).encode("utf-8")
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(payload)))
        self.end_headers()
        self.wfile.write(payload)

    def log_message(self, *args):
        pass


@pytest.fixture()
def stub_server():
    server = HTTPServer(("127.0.0.1", 0), _StubHandler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    _StubHandler.delays = {}
    _StubHandler.failures_left = 0
    yield f"http://127.0.0.1:{server.server_port}/extract"
    server.shutdown()


def _three_page_doc():
    raw = ("Taxi out is performed by Flight Crew.\f"
           "Refueling is performed by Fuel Operator.\f"
           "Boarding is performed by Gate Agent.")
    doc = load_document(raw, "\f", doc_id="mini")
    return doc, segment(doc, ChunkingMode.PAGE_LEVEL)


class TestExtractCorpus:
    def test_mock_results_grouped_by_ordinal(self):
        doc, chunks = _three_page_doc()
        cfg = BackendConfig(BackendKind.MOCK)
        extractions, rejections = extract_corpus(chunks, doc, cfg, SCHEMA, [_shot()])
        assert rejections == []
        assert [e.chunk_ordinal for e in extractions] == [0, 0, 1, 1, 2, 2]

    def test_mock_is_deterministic(self):
        doc, chunks = _three_page_doc()
        cfg = BackendConfig(BackendKind.MOCK)
        first = extract_corpus(chunks, doc, cfg, SCHEMA, [_shot()])
        second = extract_corpus(chunks, doc, cfg, SCHEMA, [_shot()])
        assert first == second

    def test_no_shots_rejected(self):
        doc, chunks = _three_page_doc()
        with pytest.raises(MissingExemplars):
            extract_corpus(chunks, doc, BackendConfig(BackendKind.MOCK),
                           SCHEMA, [])

    def test_http_backend_roundtrip(self, stub_server):
        doc, chunks = _three_page_doc()
        cfg = BackendConfig(BackendKind.HTTP, endpoint=stub_server,
                            model_name="stub", max_workers=1)
        extractions, _ = extract_corpus(chunks, doc, cfg, SCHEMA, [_shot()])
        mock_cfg = BackendConfig(BackendKind.MOCK)
        expected, _ = extract_corpus(chunks, doc, mock_cfg, SCHEMA, [_shot()])
        assert extractions == expected

    def test_merge_order_independent_of_completion_order(self, stub_server):
        doc, chunks = _three_page_doc()
        # later chunks answer sooner; merged order must stay by ordinal
        _StubHandler.delays = {
            "Taxi out is performed by Flight Crew.": 0.2,
            "Refueling is performed by Fuel Operator.": 0.1,
            "Boarding is performed by Gate Agent.": 0.0,
        }
        cfg = BackendConfig(BackendKind.HTTP, endpoint=stub_server,
                            model_name="stub", max_workers=3)
        extractions, _ = extract_corpus(chunks, doc, cfg, SCHEMA, [_shot()])
        assert [e.chunk_ordinal for e in extractions] == [0, 0, 1, 1, 2, 2]

    def test_transient_failures_are_retried(self, stub_server):
        doc, chunks = _three_page_doc()
        _StubHandler.failures_left = 2
        sleeps = []
        cfg = BackendConfig(BackendKind.HTTP, endpoint=stub_server,
                            model_name="stub", max_workers=1)
        extractions, _ = extract_corpus(chunks, doc, cfg, SCHEMA, [_shot()],
                                        sleep=sleeps.append)
        assert len(extractions) == 6
        assert sleeps == [0.5, 1.0]  # exponential backoff before recovery

    def test_unreachable_backend_fails_after_retries(self):
        doc, chunks = _three_page_doc()
        sleeps = []
        cfg = BackendConfig(BackendKind.HTTP, endpoint="http://127.0.0.1:9/none",
                            model_name="stub", max_workers=1)
        with pytest.raises(BackendError) as err:
            extract_corpus(chunks, doc, cfg, SCHEMA, [_shot()],
                           sleep=sleeps.append)
        assert err.value.attempts == 3
        assert sleeps == [0.5, 1.0]


class TestPageVsDocumentModality:
    def test_same_extraction_multiset_when_no_relation_spans_pages(self):
        from conftest import TURNAROUND
        doc = load_document(TURNAROUND.read_text("utf-8"), "\f", "turnaround")
        cfg = BackendConfig(BackendKind.MOCK)
        shot = [_shot()]
        by_page, _ = extract_corpus(
            segment(doc, ChunkingMode.PAGE_LEVEL), doc, cfg, SCHEMA, shot)
        by_doc, _ = extract_corpus(
            segment(doc, ChunkingMode.DOCUMENT_LEVEL), doc, cfg, SCHEMA, shot)

        def multiset(extractions):
            return sorted(
                (e.extraction_class.value, e.extraction_text,
                 tuple(sorted(e.attributes.items())))
                for e in extractions)

        assert multiset(by_page) == multiset(by_doc)


class TestConfigAndFixture:
    def test_http_requires_endpoint_and_model(self):
        with pytest.raises(ValueError):
            BackendConfig(BackendKind.HTTP, endpoint=None, model_name="m")
        with pytest.raises(ValueError):
            BackendConfig(BackendKind.MOCK, max_workers=0)

    def test_bundled_fixture_loads_and_validates(self):
        shots = load_fewshot_examples(None, SCHEMA)
        assert shots
        for shot in shots:
            for ext in shot.expected_extractions:
                assert ext.extraction_text in shot.source_snippet

    def test_invalid_fixture_rejected(self, tmp_path):
        bad = tmp_path / "shots.json"
        bad.write_text(json.dumps({"version": 1, "examples": [{
            "source_snippet": "nothing here",
            "expected_extractions": [
                {"class": "Procedure", "text": "absent", "attributes": {}}],
        }]}))
        with pytest.raises(ValueError):
            load_fewshot_examples(bad, SCHEMA)
