"""Score an extracted graph against a curated ground-truth graph.

Matching is exact set algebra over normalized (subject, predicate,
object) keys; anything semantically debatable surfaces as FP/FN with
provenance so a human can adjudicate from the source text.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from typing import NamedTuple

from .errors import EmptyEvaluation
from .extraction import RawExtraction
from .grounding import AlignmentClass, GroundedExtraction
from .kgraph import KnowledgeGraph, Provenance, attribute_assertions, normalize_id


class TripleKey(NamedTuple):
    subject: str
    predicate: str
    object: str


@dataclass(frozen=True)
class EvalCounts:
    tp: int
    fp: int
    fn: int

    def __post_init__(self):
        if min(self.tp, self.fp, self.fn) < 0:
            raise ValueError("counts must be non-negative")


@dataclass(frozen=True)
class EvalMetrics:
    precision: float
    recall: float
    f1: float


@dataclass
class TripleRecord:
    key: TripleKey
    provenance: list[Provenance] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "subject": self.key.subject,
            "predicate": self.key.predicate,
            "object": self.key.object,
            "provenance": [p.to_json() for p in self.provenance],
        }


@dataclass
class EvalReport:
    counts: EvalCounts
    metrics: EvalMetrics
    per_alignment: dict[AlignmentClass, tuple[int, int]]  # class -> (TP, FP)
    fp_list: list[TripleRecord]
    fn_list: list[TripleRecord]


class ReportFormat(Enum):
    TEXT = "text"
    JSON = "json"


def extraction_triple_keys(raw: RawExtraction) -> list[TripleKey]:
    """The triples a single extraction asserts, as normalized keys."""
    subject_id = normalize_id(raw.extraction_text)
    if not subject_id:
        return []
    assertions, _problems = attribute_assertions(raw)
    return [TripleKey(subject_id, predicate.value, normalize_id(value))
            for predicate, value in assertions]


def match_triples(extracted: KnowledgeGraph, truth: KnowledgeGraph
                  ) -> tuple[set[TripleKey], set[TripleKey], set[TripleKey]]:
    """TP = E intersect T, FP = E minus T, FN = T minus E."""
    extracted_keys = {TripleKey(*k) for k in extracted.triple_keys()}
    truth_keys = {TripleKey(*k) for k in truth.triple_keys()}
    return (extracted_keys & truth_keys,
            extracted_keys - truth_keys,
            truth_keys - extracted_keys)


def metrics(counts: EvalCounts) -> EvalMetrics:
    """Precision, recall and F1 at full float precision.

    A single zero denominator pins the corresponding metric (and F1) to
    0 by convention; both denominators zero means there is nothing to
    evaluate and raises EmptyEvaluation.
    """
    extracted_total = counts.tp + counts.fp
    truth_total = counts.tp + counts.fn
    if extracted_total == 0 and truth_total == 0:
        raise EmptyEvaluation("no extracted triples and no ground-truth triples")
    precision = counts.tp / extracted_total if extracted_total else 0.0
    recall = counts.tp / truth_total if truth_total else 0.0
    f1 = 2.0 * precision * recall / (precision + recall) if precision + recall else 0.0
    return EvalMetrics(precision, recall, f1)


_WEAKNESS = {
    AlignmentClass.MATCH_EXACT: 0,
    AlignmentClass.MATCH_FUZZY: 1,
    AlignmentClass.MATCH_LESSER: 2,
}
BREAKDOWN_CLASSES = (AlignmentClass.MATCH_EXACT, AlignmentClass.MATCH_FUZZY,
                     AlignmentClass.MATCH_LESSER)


def alignment_breakdown(
    grounded: list[GroundedExtraction],
    tp_set: set[TripleKey],
    fp_set: set[TripleKey],
) -> dict[AlignmentClass, tuple[int, int]]:
    """Attribute each TP/FP triple to the alignment class that produced it.

    A triple contributed by several extractions counts under the weakest
    contributing class (LESSER being weakest).
    """
    triple_class: dict[TripleKey, AlignmentClass] = {}
    for item in grounded:
        if item.alignment is AlignmentClass.NO_MATCH:
            continue
        for key in extraction_triple_keys(item.raw):
            current = triple_class.get(key)
            if current is None or _WEAKNESS[item.alignment] > _WEAKNESS[current]:
                triple_class[key] = item.alignment

    table = {cls: [0, 0] for cls in BREAKDOWN_CLASSES}
    for bucket, keys in enumerate((tp_set, fp_set)):
        for key in keys:
            cls = triple_class.get(key)
            if cls is None:
                raise ValueError(
                    f"triple {key} has no contributing grounded extraction")
            table[cls][bucket] += 1
    return {cls: (tp, fp) for cls, (tp, fp) in table.items()}


def _triple_records(keys: set[TripleKey], source: KnowledgeGraph
                    ) -> list[TripleRecord]:
    records = []
    for key in sorted(keys):
        edge = source.edges.get(tuple(key))
        provenance = sorted(edge.provenance) if edge else []
        records.append(TripleRecord(key, provenance))
    return records


def evaluate(extracted: KnowledgeGraph, truth: KnowledgeGraph,
             grounded: list[GroundedExtraction] | None = None) -> EvalReport:
    """Full report: counts, metrics, alignment breakdown, FP/FN listings.

    The breakdown needs the grounding records that produced the
    extracted graph; without them the per-alignment table stays empty.
    """
    tp_set, fp_set, fn_set = match_triples(extracted, truth)
    counts = EvalCounts(tp=len(tp_set), fp=len(fp_set), fn=len(fn_set))
    per_alignment = (alignment_breakdown(grounded, tp_set, fp_set)
                     if grounded is not None else {})
    return EvalReport(
        counts=counts,
        metrics=metrics(counts),
        per_alignment=per_alignment,
        fp_list=_triple_records(fp_set, extracted),
        fn_list=_triple_records(fn_set, truth),
    )


def render_report(report: EvalReport, fmt: ReportFormat) -> bytes:
    if fmt is ReportFormat.JSON:
        doc = {
            "counts": {"tp": report.counts.tp, "fp": report.counts.fp,
                       "fn": report.counts.fn},
            "metrics": {"precision": report.metrics.precision,
                        "recall": report.metrics.recall,
                        "f1": report.metrics.f1},
            "per_alignment": {
                cls.value: {"tp": tp, "fp": fp}
                for cls, (tp, fp) in sorted(report.per_alignment.items(),
                                            key=lambda kv: kv[0].value)
            },
            "fp": [r.to_json() for r in report.fp_list],
            "fn": [r.to_json() for r in report.fn_list],
        }
        return (json.dumps(doc, ensure_ascii=False, indent=2, sort_keys=True)
                + "\n").encode("utf-8")

    lines = [
        f"TP         {report.counts.tp:>7}",
        f"FP         {report.counts.fp:>7}",
        f"FN         {report.counts.fn:>7}",
        f"Precision  {report.metrics.precision:>7.3f}",
        f"Recall     {report.metrics.recall:>7.3f}",
        f"F1         {report.metrics.f1:>7.3f}",
        "",
        f"{'Alignment':<14}{'FP':>6}{'TP':>6}",
    ]
    for cls in BREAKDOWN_CLASSES:
        tp, fp = report.per_alignment.get(cls, (0, 0))
        lines.append(f"{cls.value:<14}{fp:>6}{tp:>6}")
    return ("\n".join(lines) + "\n").encode("utf-8")
