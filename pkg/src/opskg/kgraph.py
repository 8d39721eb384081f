"""Knowledge-graph assembly, validation and canonical serialization.

Entity identity is the normalized surface form (case-folded, whitespace
collapsed); every entity and edge carries the source intervals that
support it.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from urllib.parse import quote

from .errors import SchemaViolation
from .extraction import (
    ATTRIBUTE_PREDICATES,
    Predicate,
    RawExtraction,
    SchemaClass,
)
from .grounding import AlignmentClass, GroundedExtraction

logger = logging.getLogger(__name__)

# Effective class when an id accumulates conflicting proposals: a
# stakeholder assertion outranks an explicit procedure, which outranks
# the generic sequenced item used for placeholder creation. The rule is
# a max over proposals, so it is independent of input order.
_CLASS_RANK = {
    SchemaClass.SEQUENCED_ITEM: 0,
    SchemaClass.PROCEDURE: 1,
    SchemaClass.STAKEHOLDER: 2,
}

SEQUENCABLE_CLASSES = (SchemaClass.PROCEDURE, SchemaClass.SEQUENCED_ITEM)


def normalize_id(label: str) -> str:
    """Case-fold, collapse internal whitespace and trim."""
    return " ".join(label.split()).casefold()


@dataclass(frozen=True, order=True)
class Provenance:
    document_id: str
    start: int
    end: int

    def to_json(self) -> dict:
        return {"document_id": self.document_id, "start": self.start, "end": self.end}


@dataclass
class Entity:
    id: str
    label: str
    entity_class: SchemaClass
    provenance: list[Provenance]


@dataclass
class Edge:
    subject: str
    predicate: Predicate
    object: str
    provenance: list[Provenance]

    @property
    def key(self) -> tuple[str, str, str]:
        return (self.subject, self.predicate.value, self.object)


@dataclass
class KnowledgeGraph:
    entities: dict[str, Entity] = field(default_factory=dict)
    edges: dict[tuple[str, str, str], Edge] = field(default_factory=dict)

    def triple_keys(self) -> set[tuple[str, str, str]]:
        return set(self.edges)

    def stakeholder_ids(self) -> list[str]:
        """Stakeholder entities in graph-construction input order."""
        return [e.id for e in self.entities.values()
                if e.entity_class is SchemaClass.STAKEHOLDER]

    def sequencable_ids(self) -> list[str]:
        return [e.id for e in self.entities.values()
                if e.entity_class in SEQUENCABLE_CLASSES]

    def has_next_edges(self) -> list[Edge]:
        return [e for e in self.edges.values() if e.predicate is Predicate.HAS_NEXT]

    def stakeholder_edges(self) -> list[Edge]:
        return [e for e in self.edges.values()
                if e.predicate is Predicate.HAS_STAKEHOLDER]


def attribute_assertions(raw: RawExtraction) -> tuple[list[tuple[Predicate, str]], list[str]]:
    """Valid (predicate, object surface form) pairs asserted by attributes.

    Empty references and hasNext self-loops are returned as problem
    strings instead of assertions; callers decide how to report them.
    """
    subject_id = normalize_id(raw.extraction_text)
    assertions: list[tuple[Predicate, str]] = []
    problems: list[str] = []
    for key in sorted(raw.attributes):
        value = raw.attributes[key]
        predicate = ATTRIBUTE_PREDICATES[key]
        object_id = normalize_id(value)
        if not object_id:
            problems.append(f"attribute {key!r} references an empty string")
            continue
        if predicate is Predicate.HAS_NEXT and object_id == subject_id:
            problems.append(f"attribute {key!r} would create a hasNext self-loop")
            continue
        assertions.append((predicate, value))
    return assertions, problems


def build_graph(grounded: list[GroundedExtraction]) -> KnowledgeGraph:
    """Merge grounded extractions into a deduplicated, provenance-rich graph.

    Callers must filter NO_MATCH extractions out first; unanchored text
    has no place in the graph.
    """
    graph = KnowledgeGraph()

    def add_entity(surface: str, proposed: SchemaClass, prov: Provenance) -> str:
        entity_id = normalize_id(surface)
        entity = graph.entities.get(entity_id)
        if entity is None:
            graph.entities[entity_id] = Entity(entity_id, surface, proposed, [prov])
        else:
            entity.provenance.append(prov)
            if _CLASS_RANK[proposed] > _CLASS_RANK[entity.entity_class]:
                entity.entity_class = proposed
        return entity_id

    def add_edge(subject: str, predicate: Predicate, obj: str, prov: Provenance):
        key = (subject, predicate.value, obj)
        edge = graph.edges.get(key)
        if edge is None:
            graph.edges[key] = Edge(subject, predicate, obj, [prov])
        else:
            edge.provenance.append(prov)

    for item in grounded:
        if item.alignment is AlignmentClass.NO_MATCH:
            raise ValueError(
                f"NO_MATCH extraction {item.raw.extraction_text!r} passed to "
                "build_graph; filter unanchored extractions first")
        prov = Provenance(item.document_id, item.interval[0], item.interval[1])
        if not normalize_id(item.raw.extraction_text):
            logger.warning("rejected record with blank surface text at %s", prov)
            continue
        subject_id = add_entity(item.raw.extraction_text,
                                item.raw.extraction_class, prov)
        assertions, problems = attribute_assertions(item.raw)
        for problem in problems:
            logger.warning("rejected record %r: %s",
                           item.raw.extraction_text, problem)
        for predicate, value in assertions:
            if predicate is Predicate.HAS_STAKEHOLDER:
                object_id = add_entity(value, SchemaClass.STAKEHOLDER, prov)
            else:
                object_id = add_entity(value, SchemaClass.SEQUENCED_ITEM, prov)
            add_edge(subject_id, predicate, object_id, prov)
    return graph


@dataclass
class ValidationReport:
    cycles: list[list[str]]
    missing_stakeholder: list[str]
    broken_edges: list[tuple[str, str, str]] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.cycles

    def render_text(self) -> str:
        lines = []
        if self.cycles:
            lines.append("hasNext cycles:")
            lines.extend(f"  - {' -> '.join(cycle + [cycle[0]])}"
                         for cycle in self.cycles)
        else:
            lines.append("hasNext cycles: none")
        if self.missing_stakeholder:
            lines.append("entities without stakeholder:")
            lines.extend(f"  - {entity_id}" for entity_id in self.missing_stakeholder)
        else:
            lines.append("entities without stakeholder: none")
        if self.broken_edges:
            lines.append("edges removed to break cycles:")
            lines.extend(f"  - {s} -{p}-> {o}" for s, p, o in self.broken_edges)
        else:
            lines.append("edges removed to break cycles: none")
        return "\n".join(lines) + "\n"


def _has_next_adjacency(graph: KnowledgeGraph) -> dict[str, list[str]]:
    adjacency: dict[str, list[str]] = {}
    for edge in graph.has_next_edges():
        adjacency.setdefault(edge.subject, []).append(edge.object)
        adjacency.setdefault(edge.object, [])
    for successors in adjacency.values():
        successors.sort()
    return adjacency


def _find_cycle(adjacency: dict[str, list[str]]) -> list[str] | None:
    # Deterministic DFS: smallest start vertex, smallest successor first.
    finished: set[str] = set()
    for root in sorted(adjacency):
        if root in finished:
            continue
        stack = [(root, iter(adjacency[root]))]
        on_path = {root}
        path = [root]
        while stack:
            node, successors = stack[-1]
            advanced = False
            for succ in successors:
                if succ in on_path:
                    return path[path.index(succ):]
                if succ not in finished:
                    stack.append((succ, iter(adjacency[succ])))
                    on_path.add(succ)
                    path.append(succ)
                    advanced = True
                    break
            if not advanced:
                stack.pop()
                finished.add(node)
                on_path.discard(node)
                path.pop()
    return None


def _cycles_and_break_edges(graph: KnowledgeGraph
                            ) -> list[tuple[list[str], tuple[str, str]]]:
    """Each reported cycle pairs with the edge removal that resolves it."""
    adjacency = _has_next_adjacency(graph)
    found: list[tuple[list[str], tuple[str, str]]] = []
    while (cycle := _find_cycle(adjacency)) is not None:
        edges = [(cycle[i], cycle[(i + 1) % len(cycle)]) for i in range(len(cycle))]
        victim = max(edges)
        adjacency[victim[0]].remove(victim[1])
        found.append((cycle, victim))
    return found


def validate_graph(graph: KnowledgeGraph) -> ValidationReport:
    """Report hasNext cycles and sequencable entities with no stakeholder.

    Dangling references cannot happen for graphs built or deserialized by
    this module; this is asserted rather than reported.
    """
    for edge in graph.edges.values():
        assert edge.subject in graph.entities and edge.object in graph.entities, \
            f"dangling edge {edge.key}"
    cycles = [cycle for cycle, _ in _cycles_and_break_edges(graph)]
    with_stakeholder = {e.subject for e in graph.stakeholder_edges()}
    missing = [entity_id for entity_id in graph.sequencable_ids()
               if entity_id not in with_stakeholder]
    return ValidationReport(cycles=cycles, missing_stakeholder=missing)


def break_cycles(graph: KnowledgeGraph
                 ) -> tuple[KnowledgeGraph, list[tuple[str, str, str]]]:
    """Drop the lexicographically last edge of every hasNext cycle."""
    removals = {
        (subject, Predicate.HAS_NEXT.value, obj)
        for _, (subject, obj) in _cycles_and_break_edges(graph)
    }
    pruned = KnowledgeGraph(
        entities={k: Entity(e.id, e.label, e.entity_class, list(e.provenance))
                  for k, e in graph.entities.items()},
        edges={k: Edge(e.subject, e.predicate, e.object, list(e.provenance))
               for k, e in graph.edges.items() if k not in removals},
    )
    return pruned, sorted(removals)


def canonical_dict(graph: KnowledgeGraph) -> dict:
    return {
        "entities": [
            {
                "id": entity.id,
                "label": entity.label,
                "class": entity.entity_class.value,
                "provenance": [p.to_json() for p in sorted(entity.provenance)],
            }
            for entity in sorted(graph.entities.values(), key=lambda e: e.id)
        ],
        "edges": [
            {
                "subject": edge.subject,
                "predicate": edge.predicate.value,
                "object": edge.object,
                "provenance": [p.to_json() for p in sorted(edge.provenance)],
            }
            for edge in sorted(graph.edges.values(), key=lambda e: e.key)
        ],
    }


def serialize(graph: KnowledgeGraph) -> bytes:
    """Canonical, byte-deterministic JSON encoding of a graph."""
    text = json.dumps(canonical_dict(graph), ensure_ascii=False,
                      indent=2, sort_keys=True)
    return (text + "\n").encode("utf-8")


def _check(condition: bool, message: str, location: str) -> None:
    if not condition:
        raise SchemaViolation(message, location)


def _parse_provenance(entries: object, location: str) -> list[Provenance]:
    _check(isinstance(entries, list) and len(entries) > 0,
           "provenance must be a non-empty array", location)
    parsed = []
    for i, entry in enumerate(entries):
        loc = f"{location}[{i}]"
        _check(isinstance(entry, dict), "provenance entry must be an object", loc)
        _check(isinstance(entry.get("document_id"), str) and entry["document_id"],
               "document_id must be a non-empty string", loc)
        start, end = entry.get("start"), entry.get("end")
        _check(isinstance(start, int) and isinstance(end, int)
               and not isinstance(start, bool) and not isinstance(end, bool),
               "start and end must be integers", loc)
        _check(0 <= start < end, "interval must satisfy 0 <= start < end", loc)
        parsed.append(Provenance(entry["document_id"], start, end))
    return parsed


def deserialize(data: bytes) -> KnowledgeGraph:
    """Parse and validate a canonical graph document.

    Any structural problem raises SchemaViolation naming the offending
    location. Cyclic hasNext subgraphs are accepted here; cycle handling
    is validate_graph's concern.
    """
    try:
        doc = json.loads(data.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise SchemaViolation(f"not a JSON document: {exc}", "$") from exc
    _check(isinstance(doc, dict), "top level must be an object", "$")
    _check(isinstance(doc.get("entities"), list), "entities must be an array",
           "$.entities")
    _check(isinstance(doc.get("edges"), list), "edges must be an array", "$.edges")

    graph = KnowledgeGraph()
    for i, entry in enumerate(doc["entities"]):
        loc = f"entities[{i}]"
        _check(isinstance(entry, dict), "entity must be an object", loc)
        entity_id, label = entry.get("id"), entry.get("label")
        _check(isinstance(entity_id, str) and entity_id,
               "id must be a non-empty string", f"{loc}.id")
        _check(isinstance(label, str) and bool(label),
               "label must be a non-empty string", f"{loc}.label")
        _check(normalize_id(label) == entity_id,
               f"id must equal the normalized label ({normalize_id(label)!r})",
               f"{loc}.id")
        _check(entity_id not in graph.entities, "duplicate entity id", f"{loc}.id")
        try:
            entity_class = SchemaClass(entry.get("class"))
        except ValueError:
            raise SchemaViolation(f"unknown class {entry.get('class')!r}",
                                  f"{loc}.class") from None
        provenance = _parse_provenance(entry.get("provenance"), f"{loc}.provenance")
        graph.entities[entity_id] = Entity(entity_id, label, entity_class, provenance)

    for i, entry in enumerate(doc["edges"]):
        loc = f"edges[{i}]"
        _check(isinstance(entry, dict), "edge must be an object", loc)
        try:
            predicate = Predicate(entry.get("predicate"))
        except ValueError:
            raise SchemaViolation(f"unknown predicate {entry.get('predicate')!r}",
                                  f"{loc}.predicate") from None
        subject, obj = entry.get("subject"), entry.get("object")
        _check(subject in graph.entities, f"unknown subject {subject!r}",
               f"{loc}.subject")
        _check(obj in graph.entities, f"unknown object {obj!r}", f"{loc}.object")
        if predicate is Predicate.HAS_STAKEHOLDER:
            _check(graph.entities[obj].entity_class is SchemaClass.STAKEHOLDER,
                   "hasStakeholder object must be a Stakeholder entity",
                   f"{loc}.object")
        else:
            _check(subject != obj, "hasNext self-loops are not allowed",
                   f"{loc}.object")
            for end_name, end_id in (("subject", subject), ("object", obj)):
                _check(graph.entities[end_id].entity_class in SEQUENCABLE_CLASSES,
                       "hasNext endpoints must be Procedure or Sequenced_Item",
                       f"{loc}.{end_name}")
        key = (subject, predicate.value, obj)
        _check(key not in graph.edges, "duplicate edge", loc)
        provenance = _parse_provenance(entry.get("provenance"), f"{loc}.provenance")
        graph.edges[key] = Edge(subject, predicate, obj, provenance)
    return graph


def export_triples(graph: KnowledgeGraph) -> bytes:
    """One `<subject> <predicate> <object> .` line per edge, sorted."""
    def iri(kind: str, value: str) -> str:
        return f"<urn:opskg:{kind}:{quote(value, safe='')}>"

    lines = [
        f"{iri('entity', s)} {iri('predicate', p)} {iri('entity', o)} ."
        for s, p, o in sorted(graph.edges)
    ]
    return ("\n".join(lines) + "\n").encode("utf-8") if lines else b""
