"""Schema-constrained triple extraction over document chunks.

The backend is pluggable: a deterministic pattern-based mock for tests
and offline runs, or a generic HTTP endpoint for structured generation.
Both speak the same wire format: a JSON array of
``{"class": str, "text": str, "attributes": {str: str}}`` records.
"""

from __future__ import annotations

import json
import re
import time
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from importlib import resources
from pathlib import Path

import requests

from .corpus import Chunk, Document, chunk_text
from .errors import BackendError, MalformedOutput, MissingExemplars


class SchemaClass(Enum):
    PROCEDURE = "Procedure"
    SEQUENCED_ITEM = "Sequenced_Item"
    STAKEHOLDER = "Stakeholder"


class Predicate(Enum):
    HAS_NEXT = "hasNext"
    HAS_STAKEHOLDER = "hasStakeholder"


ATTR_STAKEHOLDER = "stakeholder"
ATTR_NEXT = "next"

# attribute key -> predicate it asserts
ATTRIBUTE_PREDICATES = {
    ATTR_STAKEHOLDER: Predicate.HAS_STAKEHOLDER,
    ATTR_NEXT: Predicate.HAS_NEXT,
}

RETRY_ATTEMPTS = 3
RETRY_BASE_DELAY = 0.5
HTTP_TIMEOUT = 30.0


@dataclass(frozen=True)
class SchemaSpec:
    """The closed vocabulary extraction is allowed to use."""

    classes: frozenset[SchemaClass]
    predicates: frozenset[Predicate]

    def __post_init__(self):
        if not self.classes or not self.predicates:
            raise ValueError("schema needs at least one class and one predicate")

    @classmethod
    def default(cls) -> "SchemaSpec":
        return cls(frozenset(SchemaClass), frozenset(Predicate))

    def allowed_attribute_keys(self) -> set[str]:
        return {k for k, p in ATTRIBUTE_PREDICATES.items() if p in self.predicates}


@dataclass
class RawExtraction:
    """One backend-proposed entity or relation, before grounding."""

    extraction_class: SchemaClass
    extraction_text: str
    attributes: dict[str, str]
    chunk_ordinal: int

    def __post_init__(self):
        if not self.extraction_text:
            raise ValueError("extraction_text must be non-empty")
        bad = set(self.attributes) - set(ATTRIBUTE_PREDICATES)
        if bad:
            raise ValueError(f"unknown attribute keys: {sorted(bad)}")

    def to_record(self) -> dict:
        return {
            "class": self.extraction_class.value,
            "text": self.extraction_text,
            "attributes": dict(self.attributes),
            "chunk_ordinal": self.chunk_ordinal,
        }

    @classmethod
    def from_record(cls, record: dict, default_ordinal: int = 0) -> "RawExtraction":
        return cls(
            extraction_class=SchemaClass(record["class"]),
            extraction_text=record["text"],
            attributes=dict(record.get("attributes", {})),
            chunk_ordinal=int(record.get("chunk_ordinal", default_ordinal)),
        )


@dataclass
class FewShotExample:
    """A curated snippet paired with the extractions it should yield."""

    source_snippet: str
    expected_extractions: list[RawExtraction]

    def validate(self, schema: SchemaSpec) -> None:
        allowed_keys = schema.allowed_attribute_keys()
        for ext in self.expected_extractions:
            if ext.extraction_class not in schema.classes:
                raise ValueError(
                    f"exemplar class {ext.extraction_class.value!r} not in schema")
            if ext.extraction_text not in self.source_snippet:
                raise ValueError(
                    f"exemplar text {ext.extraction_text!r} not found verbatim "
                    "in its source snippet")
            bad = set(ext.attributes) - allowed_keys
            if bad:
                raise ValueError(f"exemplar attribute keys {sorted(bad)} not in schema")


class BackendKind(Enum):
    MOCK = "mock"
    HTTP = "http"


@dataclass(frozen=True)
class BackendConfig:
    kind: BackendKind
    endpoint: str | None = None
    model_name: str | None = None
    max_workers: int = 1

    def __post_init__(self):
        if self.max_workers < 1:
            raise ValueError("max_workers must be >= 1")
        if self.kind is BackendKind.HTTP and not (self.endpoint and self.model_name):
            raise ValueError("HTTP backend requires endpoint and model_name")


@dataclass
class PromptPayload:
    """Request body for a structured-generation backend."""

    instruction: str
    classes: list[str]
    predicates: list[str]
    examples: list[dict]
    text: str

    def to_dict(self) -> dict:
        return {
            "instruction": self.instruction,
            "classes": list(self.classes),
            "predicates": list(self.predicates),
            "examples": list(self.examples),
            "text": self.text,
        }


@dataclass
class RejectedRecord:
    """A backend record that failed schema validation, kept for audit."""

    reason: str
    record: object
    chunk_ordinal: int

    def to_json(self) -> dict:
        return {
            "reason": self.reason,
            "record": self.record,
            "chunk_ordinal": self.chunk_ordinal,
        }


def build_prompt(schema: SchemaSpec, shots: list[FewShotExample],
                 chunk_text: str) -> PromptPayload:
    """Assemble the schema-constrained prompt for one chunk.

    Raises MissingExemplars when no few-shot examples are supplied: the
    exemplar seed is what keeps backend output inside the schema.
    """
    if not shots:
        raise MissingExemplars("at least one few-shot example is required")
    if not chunk_text:
        raise ValueError("chunk_text must be non-empty")

    classes = sorted(c.value for c in schema.classes)
    predicates = sorted(p.value for p in schema.predicates)
    instruction = (
        "Extract knowledge triples from the operational text. "
        f"Allowed entity classes: {', '.join(classes)}. "
        f"Allowed relations: {', '.join(predicates)}. "
        "Do not use any class or relation outside this list. "
        "Quote every extracted text span verbatim from the source. "
        "Respond with a JSON array of records "
        '{"class": ..., "text": ..., "attributes": {...}}; the attribute key '
        '"stakeholder" names the responsible party and "next" names the '
        "item that follows."
    )
    examples = [
        {
            "input": shot.source_snippet,
            "output": [
                {
                    "class": ext.extraction_class.value,
                    "text": ext.extraction_text,
                    "attributes": dict(ext.attributes),
                }
                for ext in shot.expected_extractions
            ],
        }
        for shot in shots
    ]
    return PromptPayload(instruction, classes, predicates, examples, chunk_text)


_PERFORMED_BY = re.compile(
    r"([A-Z][\w-]*(?: [\w-]+)*?) is performed by ([A-Z][\w-]*(?: [\w-]+)*?)\.")
_AFTER_BEGINS = re.compile(
    r"After ([A-Z][\w-]*(?: [\w-]+)*?), ([A-Z][\w-]*(?: [\w-]+)*?) begins\.")


def mock_backend(chunk_text: str, schema: SchemaSpec) -> str:
    """Deterministic extraction double driven by two sentence patterns.

    "X is performed by Y." yields a Procedure X with stakeholder=Y plus a
    Stakeholder Y; "After X, Y begins." yields a Sequenced_Item X with
    next=Y. Records appear in source order; output is byte-deterministic.
    """
    allowed_keys = schema.allowed_attribute_keys()
    hits: list[tuple[int, int, list[dict]]] = []
    for match in _PERFORMED_BY.finditer(chunk_text):
        subject, actor = match.group(1), match.group(2)
        records = []
        if SchemaClass.PROCEDURE in schema.classes:
            attrs = {ATTR_STAKEHOLDER: actor} if ATTR_STAKEHOLDER in allowed_keys else {}
            records.append({"class": SchemaClass.PROCEDURE.value,
                            "text": subject, "attributes": attrs})
        if SchemaClass.STAKEHOLDER in schema.classes:
            records.append({"class": SchemaClass.STAKEHOLDER.value,
                            "text": actor, "attributes": {}})
        hits.append((match.start(), 0, records))
    for match in _AFTER_BEGINS.finditer(chunk_text):
        item, successor = match.group(1), match.group(2)
        if SchemaClass.SEQUENCED_ITEM in schema.classes and ATTR_NEXT in allowed_keys:
            hits.append((match.start(), 1, [{
                "class": SchemaClass.SEQUENCED_ITEM.value,
                "text": item,
                "attributes": {ATTR_NEXT: successor},
            }]))
    hits.sort(key=lambda h: (h[0], h[1]))
    flat = [record for _, _, records in hits for record in records]
    return json.dumps(flat, sort_keys=True, separators=(",", ":"))


def parse_structured_output(
    raw: str, schema: SchemaSpec, chunk_ordinal: int,
) -> tuple[list[RawExtraction], list[RejectedRecord]]:
    """Turn a backend response body into extractions plus a rejection list.

    Individual records with unknown classes or attribute keys are
    quarantined, not dropped; a body that is not a JSON array at all
    raises MalformedOutput with the body attached.
    """
    try:
        data = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise MalformedOutput(f"response body is not valid JSON: {exc}", raw) from exc
    if not isinstance(data, list):
        raise MalformedOutput("response body is not a JSON array", raw)

    allowed_keys = schema.allowed_attribute_keys()
    accepted: list[RawExtraction] = []
    rejected: list[RejectedRecord] = []

    def reject(reason: str, record: object) -> None:
        rejected.append(RejectedRecord(reason, record, chunk_ordinal))

    for record in data:
        if not isinstance(record, dict):
            reject("record is not an object", record)
            continue
        try:
            cls = SchemaClass(record.get("class"))
        except ValueError:
            reject(f"unknown class {record.get('class')!r}", record)
            continue
        if cls not in schema.classes:
            reject(f"class {cls.value!r} not in schema", record)
            continue
        text = record.get("text")
        if not isinstance(text, str) or not text:
            reject("missing or empty text", record)
            continue
        attributes = record.get("attributes", {})
        if not isinstance(attributes, dict):
            reject("attributes is not an object", record)
            continue
        bad_keys = set(attributes) - allowed_keys
        if bad_keys:
            reject(f"attribute keys {sorted(map(str, bad_keys))} not in schema", record)
            continue
        if any(not isinstance(v, str) for v in attributes.values()):
            reject("attribute values must be strings", record)
            continue
        accepted.append(RawExtraction(cls, text, dict(attributes), chunk_ordinal))
    return accepted, rejected


def _http_call(cfg: BackendConfig, payload: PromptPayload, chunk_ordinal: int,
               sleep) -> str:
    body = {"model": cfg.model_name, "prompt": payload.to_dict()}
    last_error: Exception | None = None
    for attempt in range(1, RETRY_ATTEMPTS + 1):
        try:
            response = requests.post(cfg.endpoint, json=body, timeout=HTTP_TIMEOUT)
            response.raise_for_status()
            return response.text
        except requests.RequestException as exc:
            last_error = exc
            if attempt < RETRY_ATTEMPTS:
                sleep(RETRY_BASE_DELAY * 2 ** (attempt - 1))
    raise BackendError(
        f"chunk {chunk_ordinal}: backend request failed after "
        f"{RETRY_ATTEMPTS} attempts: {last_error}",
        chunk_ordinal=chunk_ordinal, attempts=RETRY_ATTEMPTS)


def extract_corpus(
    chunks: list[Chunk],
    doc: Document,
    backend: BackendConfig,
    schema: SchemaSpec,
    shots: list[FewShotExample],
    *,
    sleep=time.sleep,
) -> tuple[list[RawExtraction], list[RejectedRecord]]:
    """Run extraction over all chunks and merge results deterministically.

    Up to ``backend.max_workers`` chunk requests run concurrently; the
    merged list is ordered by (chunk ordinal, within-chunk order) no
    matter which requests finish first. A chunk that fails after retries
    aborts the whole run: partial graphs are never emitted.
    """
    if not shots:
        raise MissingExemplars("at least one few-shot example is required")

    def run_chunk(chunk: Chunk):
        text = chunk_text(doc, chunk)
        payload = build_prompt(schema, shots, text)
        if backend.kind is BackendKind.MOCK:
            raw = mock_backend(text, schema)
        else:
            raw = _http_call(backend, payload, chunk.ordinal, sleep)
        return parse_structured_output(raw, schema, chunk.ordinal)

    # keep at most max_workers requests in flight and collect results in
    # submission order; a failure stops further submissions and aborts
    results = []
    chunk_iter = iter(chunks)
    pending: deque = deque()
    with ThreadPoolExecutor(max_workers=backend.max_workers) as pool:
        try:
            while True:
                while len(pending) < backend.max_workers:
                    chunk = next(chunk_iter, None)
                    if chunk is None:
                        break
                    pending.append(pool.submit(run_chunk, chunk))
                if not pending:
                    break
                results.append(pending.popleft().result())
        except BaseException:
            for future in pending:
                future.cancel()
            raise

    extractions: list[RawExtraction] = []
    rejections: list[RejectedRecord] = []
    for accepted, rejected in results:
        extractions.extend(accepted)
        rejections.extend(rejected)
    return extractions, rejections


def load_fewshot_examples(path: str | Path | None,
                          schema: SchemaSpec) -> list[FewShotExample]:
    """Load and validate a few-shot fixture file (bundled one by default)."""
    if path is None:
        text = (resources.files("opskg") / "data" / "fewshot.json").read_text("utf-8")
    else:
        text = Path(path).read_text("utf-8")
    doc = json.loads(text)
    shots = []
    for entry in doc["examples"]:
        shots.append(FewShotExample(
            source_snippet=entry["source_snippet"],
            expected_extractions=[
                RawExtraction.from_record(rec) for rec in entry["expected_extractions"]
            ],
        ))
    for shot in shots:
        shot.validate(schema)
    return shots
