#!/usr/bin/env python3
"""Author the bundled synthetic corpora and their ground-truth graphs.

The sentence tables below are the curated source of truth: each entry
names the triple(s) a sentence asserts. Character offsets are computed
here with independent position bookkeeping (plain string assembly, no
pipeline code), then formatted with the library's canonical serializer.
Running this script rewrites the committed fixtures in place.
"""

from __future__ import annotations

import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(ROOT / "src"))

from opskg.extraction import Predicate, SchemaClass  # noqa: E402
from opskg.kgraph import (  # noqa: E402
    Edge,
    Entity,
    KnowledgeGraph,
    Provenance,
    normalize_id,
    serialize,
)

DATA_DIR = ROOT / "src" / "opskg" / "data"

PERFORMED_BY = " is performed by "


def proc(x, y):
    return ("proc", x, y)


def seq(x, y):
    return ("seq", x, y)


def filler(text):
    return ("filler", text)


# One block per page; no surface form is reused across pages and no
# relation crosses a page boundary, so page-level and document-level
# extraction must agree on this corpus.
TURNAROUND_PAGES = [
    [
        filler("Arrival handling at the stand follows a fixed sequence agreed "
               "across all parties."),
        proc("Stand preparation", "Ramp Agent"),
        proc("Docking guidance", "Apron Controller"),
        proc("Chock placement", "Ramp Agent"),
        proc("Bridge positioning", "Bridge Operator"),
        proc("Door opening", "Cabin Crew"),
        proc("Disembarkation", "Cabin Crew"),
        proc("Baggage unloading", "Baggage Crew"),
        seq("Stand preparation", "Docking guidance"),
        seq("Docking guidance", "Chock placement"),
        seq("Chock placement", "Bridge positioning"),
        seq("Chock placement", "Baggage unloading"),
        seq("Bridge positioning", "Door opening"),
        seq("Door opening", "Disembarkation"),
        filler("Ground power and preconditioned air are connected as soon as "
               "the chocks are on."),
    ],
    [
        filler("Servicing streams run in parallel once the cabin is clear."),
        proc("Transit check", "Line Engineer"),
        proc("Refueling", "Fuel Operator"),
        proc("Catering exchange", "Catering Team"),
        proc("Cabin cleaning", "Cleaning Team"),
        proc("Water replenishment", "Water Service Unit"),
        proc("Waste servicing", "Water Service Unit"),
        proc("Security search", "Cleaning Team"),
        seq("Transit check", "Refueling"),
        seq("Transit check", "Catering exchange"),
        seq("Catering exchange", "Cabin cleaning"),
        seq("Cabin cleaning", "Security search"),
        seq("Refueling", "Security search"),
        seq("Waste servicing", "Water replenishment"),
        filler("Completion of each stream is reported to the turnaround "
               "coordinator."),
    ],
    [
        filler("Departure preparation starts when the inbound load has "
               "cleared."),
        proc("Passenger boarding", "Gate Agent"),
        proc("Load sheet finalization", "Load Controller"),
        proc("Door closure", "Flight Crew"),
        proc("Pushback", "Tug Crew"),
        proc("Engine start", "Flight Crew"),
        proc("Departure clearance", "Tower Controller"),
        proc("Taxi out", "Flight Crew"),
        seq("Passenger boarding", "Load sheet finalization"),
        seq("Load sheet finalization", "Door closure"),
        seq("Door closure", "Pushback"),
        seq("Pushback", "Engine start"),
        seq("Engine start", "Taxi out"),
        seq("Departure clearance", "Taxi out"),
        filler("The departure message is transmitted once the aircraft is "
               "airborne."),
    ],
]

# Linear corpus for the context-window comparison: exactly one relation
# is split by the page marker, so page-level extraction misses it.
OVERNIGHT_SENTENCES = [
    filler("The overnight stop compresses ground handling into a short "
           "window."),
    proc("Gate check", "Gate Team"),
    proc("Catering service", "Catering Unit"),
    seq("Gate check", "Catering service"),
    seq("Catering service", "Final boarding"),  # marker goes inside this one
    proc("Final boarding", "Boarding Team"),
    seq("Final boarding", "Door close-out"),
    proc("Door close-out", "Dispatch Officer"),
    filler("Dispatch confirms the service record before the aircraft "
           "departs."),
]
OVERNIGHT_SPLIT_AFTER = "After Catering service,"


def sentence_text(item) -> str:
    kind = item[0]
    if kind == "filler":
        return item[1]
    if kind == "proc":
        return f"{item[1]}{PERFORMED_BY}{item[2]}."
    return f"After {item[1]}, {item[2]} begins."


def assemble_pages(pages):
    """Join sentences into page texts and track sentence start offsets
    in the normalized (marker-free) document."""
    page_texts = []
    placed = []  # (item, sentence_start)
    cursor = 0
    for page in pages:
        sentences = [sentence_text(item) for item in page]
        for item, sentence in zip(page, sentences):
            placed.append((item, cursor))
            cursor += len(sentence) + 1  # the joining space / trailing newline
        page_texts.append(" ".join(sentences) + "\n")
    return page_texts, placed


def truth_graph(doc_id: str, placed) -> KnowledgeGraph:
    roles: dict[str, set[str]] = {}
    for item, _start in placed:
        kind = item[0]
        if kind == "proc":
            roles.setdefault(normalize_id(item[1]), set()).add("procedure")
            roles.setdefault(normalize_id(item[2]), set()).add("stakeholder")
        elif kind == "seq":
            roles.setdefault(normalize_id(item[1]), set()).add("sequenced")
            roles.setdefault(normalize_id(item[2]), set()).add("sequenced")

    def entity_class(entity_id: str) -> SchemaClass:
        r = roles[entity_id]
        if "stakeholder" in r:
            assert r == {"stakeholder"}, f"conflicting roles for {entity_id}: {r}"
            return SchemaClass.STAKEHOLDER
        if "procedure" in r:
            return SchemaClass.PROCEDURE
        return SchemaClass.SEQUENCED_ITEM

    graph = KnowledgeGraph()

    def add_entity(surface: str, span: tuple[int, int]):
        entity_id = normalize_id(surface)
        entity = graph.entities.get(entity_id)
        if entity is None:
            graph.entities[entity_id] = Entity(
                entity_id, surface, entity_class(entity_id),
                [Provenance(doc_id, *span)])
        else:
            entity.provenance.append(Provenance(doc_id, *span))
        return entity_id

    def add_edge(subject: str, predicate: Predicate, obj: str,
                 span: tuple[int, int]):
        key = (subject, predicate.value, obj)
        assert key not in graph.edges, f"duplicate truth triple {key}"
        graph.edges[key] = Edge(subject, predicate, obj,
                                [Provenance(doc_id, *span)])

    for item, start in placed:
        kind = item[0]
        if kind == "filler":
            continue
        x, y = item[1], item[2]
        sentence = sentence_text(item)
        sentence_span = (start, start + len(sentence))
        if kind == "proc":
            x_span = (start, start + len(x))
            y_start = start + len(x) + len(PERFORMED_BY)
            y_span = (y_start, y_start + len(y))
            subject = add_entity(x, x_span)
            obj = add_entity(y, y_span)
            add_edge(subject, Predicate.HAS_STAKEHOLDER, obj, sentence_span)
        else:
            x_start = start + len("After ")
            x_span = (x_start, x_start + len(x))
            y_start = x_start + len(x) + 2
            y_span = (y_start, y_start + len(y))
            subject = add_entity(x, x_span)
            obj = add_entity(y, y_span)
            add_edge(subject, Predicate.HAS_NEXT, obj, sentence_span)
    return graph


def check_spans(text: str, graph: KnowledgeGraph) -> None:
    for entity in graph.entities.values():
        for p in entity.provenance:
            sliced = text[p.start:p.end]
            assert normalize_id(sliced) == entity.id, \
                f"span {p} slices {sliced!r}, wanted {entity.label!r}"


def main() -> None:
    DATA_DIR.mkdir(parents=True, exist_ok=True)

    page_texts, placed = assemble_pages(TURNAROUND_PAGES)
    normalized = "".join(page_texts)
    truth = truth_graph("turnaround", placed)
    check_spans(normalized, truth)
    (DATA_DIR / "turnaround.txt").write_text("\f".join(page_texts), "utf-8")
    (DATA_DIR / "turnaround_truth.json").write_bytes(serialize(truth))
    print(f"turnaround: {len(truth.entities)} entities, "
          f"{len(truth.edges)} truth triples, {len(page_texts)} pages")

    page_texts, placed = assemble_pages([OVERNIGHT_SENTENCES])
    normalized = "".join(page_texts)
    truth = truth_graph("overnight", placed)
    check_spans(normalized, truth)
    split_at = normalized.index(OVERNIGHT_SPLIT_AFTER) + len(OVERNIGHT_SPLIT_AFTER)
    raw = normalized[:split_at] + "\f" + normalized[split_at:]
    (DATA_DIR / "overnight.txt").write_text(raw, "utf-8")
    (DATA_DIR / "overnight_truth.json").write_bytes(serialize(truth))
    print(f"overnight: {len(truth.entities)} entities, "
          f"{len(truth.edges)} truth triples, split at offset {split_at}")


if __name__ == "__main__":
    main()
