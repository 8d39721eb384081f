"""Swimlane layout and rendering for the hasNext process graph.

Vertices are layered by longest path from any source (Kahn-style BFS
relaxation) and partitioned into one lane per stakeholder. Lanes render
as vertical columns with the process flowing downward, so arrows leave
the bottom of a box and enter the top of the next one; the stated
geometry (row pitch smaller than box width) only works this way around.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from xml.sax.saxutils import escape, quoteattr

from .errors import CyclicGraph
from .kgraph import KnowledgeGraph, Provenance

UNASSIGNED_LANE = "Unassigned"
_MAX_LABEL_CHARS = 20


@dataclass
class LayoutGraph:
    """The drawable projection of a knowledge graph."""

    vertices: list[str]
    edges: list[tuple[str, str]]
    stakeholder_of: dict[str, str | None]
    extra_stakeholders: dict[str, list[str]]


@dataclass
class SwimlaneLayout:
    lanes: list[tuple[str, int]]
    lane_labels: dict[str, str]
    node_positions: dict[str, tuple[int, int]]  # vertex -> (lane index, depth row)
    node_slots: dict[str, int]                  # sub-column inside a (lane, row) cell
    node_labels: dict[str, str]
    arrows: list[tuple[str, str]]
    provenance_links: dict[str, list[Provenance]]


@dataclass(frozen=True)
class RenderStyle:
    box_width: int = 160
    box_height: int = 48
    row_pitch: int = 90
    lane_padding: int = 24
    lane_header: int = 36
    margin: int = 16
    arrow_offset: int = 12
    font_size: int = 12
    title_font_size: int = 14


def compute_depths(vertices: list[str],
                   edges: list[tuple[str, str]]) -> dict[str, int]:
    """Longest-path depth per vertex: sources sit at 1.

    Kahn-style traversal: zero in-degree vertices enqueue at depth 1;
    each dequeue relaxes its neighbors with depth[u] = max(depth[u],
    depth[v] + 1) and enqueues them once their in-degree drains. Each
    vertex and edge is handled exactly once.
    """
    known = set(vertices)
    for u, v in edges:
        if u not in known or v not in known:
            raise ValueError(f"edge ({u!r}, {v!r}) has an endpoint outside V")

    successors: dict[str, list[str]] = {v: [] for v in vertices}
    in_degree = {v: 0 for v in vertices}
    for u, v in edges:
        successors[u].append(v)
        in_degree[v] += 1

    depth: dict[str, int] = {}
    queue = deque()
    for v in vertices:
        if in_degree[v] == 0:
            depth[v] = 1
            queue.append(v)

    processed = 0
    while queue:
        v = queue.popleft()
        processed += 1
        for u in successors[v]:
            depth[u] = max(depth.get(u, 0), depth[v] + 1)
            in_degree[u] -= 1
            if in_degree[u] == 0:
                queue.append(u)

    if processed != len(vertices):
        unprocessed = sorted(v for v in vertices if in_degree[v] > 0)
        raise CyclicGraph(unprocessed)
    return depth


def assign_lanes(stakeholders: list[str],
                 include_unassigned: bool = False) -> dict[str, int]:
    """Lane indices in first-appearance order; the Unassigned lane is last."""
    lanes: dict[str, int] = {}
    for stakeholder in stakeholders:
        if stakeholder not in lanes:
            lanes[stakeholder] = len(lanes)
    if include_unassigned and UNASSIGNED_LANE not in lanes:
        lanes[UNASSIGNED_LANE] = len(lanes)
    return lanes


def build_layout_graph(graph: KnowledgeGraph) -> LayoutGraph:
    vertices = graph.sequencable_ids()
    vertex_set = set(vertices)
    edges = sorted((e.subject, e.object) for e in graph.has_next_edges())
    for u, v in edges:
        assert u in vertex_set and v in vertex_set, \
            f"hasNext edge ({u}, {v}) touches a non-sequencable entity"

    assigned: dict[str, list[str]] = {}
    for edge in graph.stakeholder_edges():
        if edge.subject in vertex_set:
            assigned.setdefault(edge.subject, []).append(edge.object)
    stakeholder_of: dict[str, str | None] = {}
    extra: dict[str, list[str]] = {}
    for v in vertices:
        owners = sorted(set(assigned.get(v, [])))
        stakeholder_of[v] = owners[0] if owners else None
        extra[v] = owners[1:]
    return LayoutGraph(vertices, edges, stakeholder_of, extra)


def layout(graph: KnowledgeGraph) -> SwimlaneLayout:
    """Combine depth layering and lane partitioning into node positions.

    Propagates CyclicGraph when the hasNext subgraph is cyclic; break the
    cycles explicitly first if that is intended.
    """
    lg = build_layout_graph(graph)
    depths = compute_depths(lg.vertices, lg.edges) if lg.vertices else {}

    lane_index = assign_lanes(
        graph.stakeholder_ids(),
        include_unassigned=any(s is None for s in lg.stakeholder_of.values()),
    )
    lane_labels = {
        lane: (graph.entities[lane].label if lane in graph.entities else lane)
        for lane in lane_index
    }

    node_positions: dict[str, tuple[int, int]] = {}
    for v in lg.vertices:
        lane = lg.stakeholder_of[v] or UNASSIGNED_LANE
        node_positions[v] = (lane_index[lane], depths[v])

    cells: dict[tuple[int, int], list[str]] = {}
    for v in lg.vertices:
        cells.setdefault(node_positions[v], []).append(v)
    node_slots = {
        v: slot
        for members in cells.values()
        for slot, v in enumerate(sorted(members))
    }

    node_labels = {}
    for v in lg.vertices:
        label = graph.entities[v].label
        if lg.extra_stakeholders[v]:
            extras = ", ".join(lane_labels.get(s, s) for s in lg.extra_stakeholders[v])
            label = f"{label} (+ {extras})"
        node_labels[v] = label

    return SwimlaneLayout(
        lanes=sorted(lane_index.items(), key=lambda kv: kv[1]),
        lane_labels=lane_labels,
        node_positions=node_positions,
        node_slots=node_slots,
        node_labels=node_labels,
        arrows=lg.edges,
        provenance_links={v: sorted(graph.entities[v].provenance)
                          for v in lg.vertices},
    )


def _display_label(label: str) -> str:
    if len(label) <= _MAX_LABEL_CHARS:
        return label
    return label[:_MAX_LABEL_CHARS - 1] + "…"


def render_svg(swimlanes: SwimlaneLayout, style: RenderStyle | None = None) -> bytes:
    """Render the layout as a deterministic standalone SVG document.

    Every node group carries data-provenance="<doc-id>:<start>-<end>"
    (comma-joined when an entity has several source intervals) plus a
    <title> tooltip, so each box links back to its source text.
    """
    st = style or RenderStyle()

    # sub-column capacity decides each lane's width
    lane_slots: dict[int, int] = {idx: 1 for _, idx in swimlanes.lanes}
    cell_counts: dict[tuple[int, int], int] = {}
    for v, cell in swimlanes.node_positions.items():
        cell_counts[cell] = cell_counts.get(cell, 0) + 1
    for (lane_idx, _row), count in cell_counts.items():
        lane_slots[lane_idx] = max(lane_slots[lane_idx], count)

    lane_width = {
        idx: slots * (st.box_width + st.lane_padding) + st.lane_padding
        for idx, slots in lane_slots.items()
    }
    lane_x: dict[int, int] = {}
    x = st.margin
    for _, idx in swimlanes.lanes:
        lane_x[idx] = x
        x += lane_width[idx]

    max_row = max((row for _, row in swimlanes.node_positions.values()), default=0)
    body_height = st.lane_header + (
        (max_row - 1) * st.row_pitch + st.box_height if max_row else 0
    ) + st.lane_padding
    width = x + st.margin
    height = st.margin * 2 + body_height if swimlanes.lanes else st.margin * 2

    def node_xy(v: str) -> tuple[int, int]:
        lane_idx, row = swimlanes.node_positions[v]
        slot = swimlanes.node_slots[v]
        nx = lane_x[lane_idx] + st.lane_padding + slot * (st.box_width + st.lane_padding)
        ny = st.margin + st.lane_header + (row - 1) * st.row_pitch
        return nx, ny

    parts = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
        f'height="{height}" viewBox="0 0 {width} {height}">',
        '<defs><marker id="arrowhead" viewBox="0 0 10 10" refX="9" refY="5" '
        'markerWidth="7" markerHeight="7" orient="auto-start-reverse">'
        '<path d="M 0 0 L 10 5 L 0 10 z" fill="#51606e"/></marker></defs>',
        "<style>",
        ".lane-band { fill: #f4f6f8; stroke: #8a94a0; }",
        f".lane-title {{ font: bold {st.title_font_size}px sans-serif; "
        "fill: #2d3640; text-anchor: middle; }",
        ".node rect { fill: #ffffff; stroke: #3c6e9f; stroke-width: 1.5; }",
        f".node text {{ font: {st.font_size}px sans-serif; fill: #1d2730; "
        "text-anchor: middle; }",
        ".flow { fill: none; stroke: #51606e; stroke-width: 1.5; }",
        "</style>",
    ]

    for lane_id, idx in swimlanes.lanes:
        lx, lw = lane_x[idx], lane_width[idx]
        title = escape(swimlanes.lane_labels.get(lane_id, lane_id))
        parts.append(
            f'<g class="lane"><rect class="lane-band" x="{lx}" y="{st.margin}" '
            f'width="{lw}" height="{body_height}"/>'
            f'<text class="lane-title" x="{lx + lw // 2}" '
            f'y="{st.margin + st.lane_header // 2 + st.title_font_size // 2}">'
            f"{title}</text></g>")

    for src, dst in swimlanes.arrows:
        x1, y1 = node_xy(src)
        x2, y2 = node_xy(dst)
        cx1, cx2 = x1 + st.box_width // 2, x2 + st.box_width // 2
        top, bottom = y2, y1 + st.box_height
        points = (f"{cx1},{bottom} {cx1},{bottom + st.arrow_offset} "
                  f"{cx2},{top - st.arrow_offset} {cx2},{top}")
        parts.append(f'<polyline class="flow" points="{points}" '
                     'marker-end="url(#arrowhead)"/>')

    for v in sorted(swimlanes.node_positions):
        nx, ny = node_xy(v)
        label = swimlanes.node_labels.get(v, v)
        provenance = ",".join(
            f"{p.document_id}:{p.start}-{p.end}"
            for p in swimlanes.provenance_links.get(v, [])
        )
        tooltip = escape(f"{label} [{provenance}]" if provenance else label)
        parts.append(
            f'<g class="node" data-provenance={quoteattr(provenance)}>'
            f'<title>{tooltip}</title>'
            f'<rect x="{nx}" y="{ny}" width="{st.box_width}" '
            f'height="{st.box_height}" rx="6"/>'
            f'<text x="{nx + st.box_width // 2}" '
            f'y="{ny + st.box_height // 2 + st.font_size // 2 - 1}">'
            f"{escape(_display_label(label))}</text></g>")

    parts.append("</svg>")
    return ("\n".join(parts) + "\n").encode("utf-8")
