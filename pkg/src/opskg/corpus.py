"""Document loading, text normalization and chunking.

Offsets are counted in Unicode scalar values over the normalized text;
every interval reported downstream indexes into ``Document.text``.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

from .errors import EmptyDocument

DEFAULT_PAGE_MARKER = "\f"


class ChunkingMode(Enum):
    PAGE_LEVEL = "page"
    DOCUMENT_LEVEL = "document"


@dataclass(frozen=True)
class Document:
    """Normalized source text with page-start offsets (first entry is 0)."""

    id: str
    text: str
    page_offsets: tuple[int, ...]

    def __post_init__(self):
        if not self.text:
            raise EmptyDocument(f"document {self.id!r} has no text")
        if not self.page_offsets or self.page_offsets[0] != 0:
            raise ValueError("page_offsets must start at 0")
        for prev, cur in zip(self.page_offsets, self.page_offsets[1:]):
            if cur <= prev:
                raise ValueError("page_offsets must be strictly increasing")
        if self.page_offsets[-1] >= len(self.text):
            raise ValueError("page offsets must lie inside the text")


@dataclass(frozen=True)
class Chunk:
    """Half-open character interval of one document, numbered in order."""

    document_id: str
    start: int
    end: int
    ordinal: int

    def __post_init__(self):
        if not (0 <= self.start < self.end):
            raise ValueError(f"invalid chunk interval [{self.start}, {self.end})")


def load_document(raw_text: str, page_marker: str = DEFAULT_PAGE_MARKER,
                  doc_id: str = "doc") -> Document:
    """Normalize line endings, strip page markers, record page starts.

    Page starts falling on empty pages (leading, trailing or doubled
    markers) are dropped so the offsets stay strictly increasing.
    """
    if not raw_text:
        raise EmptyDocument("empty input text")
    if not page_marker:
        raise ValueError("page_marker must be non-empty")

    normalized = raw_text.replace("\r\n", "\n").replace("\r", "\n")
    parts = normalized.split(page_marker)
    text = "".join(parts)
    if not text:
        raise EmptyDocument("document is empty after page-marker removal")

    offsets = [0]
    pos = 0
    for part in parts[:-1]:
        pos += len(part)
        if 0 < pos < len(text) and pos != offsets[-1]:
            offsets.append(pos)
    return Document(id=doc_id, text=text, page_offsets=tuple(offsets))


def segment(doc: Document, mode: ChunkingMode) -> list[Chunk]:
    """Split a document into page chunks or one whole-document chunk.

    Chunks are non-overlapping, cover the text exactly, and carry
    ordinals ascending from 0 in document order.
    """
    if mode is ChunkingMode.DOCUMENT_LEVEL:
        return [Chunk(doc.id, 0, len(doc.text), 0)]
    bounds = list(doc.page_offsets) + [len(doc.text)]
    return [
        Chunk(doc.id, start, end, ordinal)
        for ordinal, (start, end) in enumerate(zip(bounds, bounds[1:]))
    ]


def chunk_text(doc: Document, chunk: Chunk) -> str:
    if chunk.document_id != doc.id:
        raise ValueError(f"chunk belongs to {chunk.document_id!r}, not {doc.id!r}")
    return doc.text[chunk.start:chunk.end]
