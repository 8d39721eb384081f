"""Anchor extractions to verbatim character intervals in the source.

Exact substring search runs first; failures fall back to a sliding-window
fuzzy search scored with the Ratcliff/Obershelp measure, and the result
is classified as MATCH_EXACT / MATCH_FUZZY / MATCH_LESSER / NO_MATCH.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from enum import Enum

from .corpus import Chunk, Document
from .errors import NoCandidateSpan
from .extraction import RawExtraction


class AlignmentClass(Enum):
    MATCH_EXACT = "MATCH_EXACT"
    MATCH_FUZZY = "MATCH_FUZZY"
    MATCH_LESSER = "MATCH_LESSER"
    NO_MATCH = "NO_MATCH"


@dataclass(frozen=True)
class GroundingConfig:
    fuzzy_threshold: float = 0.75
    lesser_threshold: float = 0.35
    window_stride: int = 1

    def __post_init__(self):
        if not (0.0 < self.lesser_threshold < self.fuzzy_threshold <= 1.0):
            raise ValueError("need 0 < lesser_threshold < fuzzy_threshold <= 1")
        if self.window_stride < 1:
            raise ValueError("window_stride must be >= 1")


@dataclass
class GroundedExtraction:
    """An extraction bound to a source interval with its alignment class."""

    raw: RawExtraction
    interval: tuple[int, int]
    alignment: AlignmentClass
    similarity: float
    document_id: str

    def to_json(self) -> dict:
        return {
            "class": self.raw.extraction_class.value,
            "text": self.raw.extraction_text,
            "attributes": dict(self.raw.attributes),
            "chunk_ordinal": self.raw.chunk_ordinal,
            "document_id": self.document_id,
            "interval": list(self.interval),
            "alignment": self.alignment.value,
            "ratio": self.similarity,
        }

    @classmethod
    def from_json(cls, record: dict) -> "GroundedExtraction":
        return cls(
            raw=RawExtraction.from_record(record),
            interval=(record["interval"][0], record["interval"][1]),
            alignment=AlignmentClass(record["alignment"]),
            similarity=float(record["ratio"]),
            document_id=record["document_id"],
        )


def exact_align(needle: str, haystack: str, search_from: int = 0
                ) -> tuple[int, int] | None:
    """Leftmost occurrence of needle at or after search_from, or None."""
    if not needle:
        raise ValueError("needle must be non-empty")
    pos = haystack.find(needle, search_from)
    if pos < 0:
        return None
    return pos, pos + len(needle)


def _longest_common_block(a: str, b: str) -> tuple[int, int, int]:
    """Longest common contiguous block as (start_a, start_b, length).

    Ties resolve to the earliest start in ``a``, then the earliest in
    ``b``; the row-major scan below visits candidates in exactly that
    order, so only strictly longer blocks displace the current best.
    """
    best_i = best_j = best_len = 0
    prev_row = [0] * (len(b) + 1)
    for i, ca in enumerate(a):
        row = [0] * (len(b) + 1)
        for j, cb in enumerate(b):
            if ca == cb:
                length = prev_row[j] + 1
                row[j + 1] = length
                if length > best_len:
                    best_len = length
                    best_i = i - length + 1
                    best_j = j - length + 1
        prev_row = row
    return best_i, best_j, best_len


def _matching_total(a: str, b: str) -> int:
    if not a or not b:
        return 0
    i, j, length = _longest_common_block(a, b)
    if length == 0:
        return 0
    return (length
            + _matching_total(a[:i], b[:j])
            + _matching_total(a[i + length:], b[j + length:]))


def similarity_ratio(a: str, b: str) -> float:
    """Ratcliff/Obershelp similarity in [0, 1].

    Finds the longest common contiguous block, recurses on both flanks,
    and returns 2*M / (len(a) + len(b)) where M is the total matched
    character count. Two empty strings count as identical.
    """
    if not a and not b:
        return 1.0
    return 2.0 * _matching_total(a, b) / (len(a) + len(b))


def _snap_to_word_boundaries(text: str, start: int, end: int,
                             floor: int, ceil: int) -> tuple[int, int]:
    # Extend outward while an edge cuts a word, then trim whitespace inward.
    while start > floor and not text[start - 1].isspace() \
            and start < end and not text[start].isspace():
        start -= 1
    while end < ceil and not text[end].isspace() \
            and end > start and not text[end - 1].isspace():
        end += 1
    trimmed_start, trimmed_end = start, end
    while trimmed_start < trimmed_end and text[trimmed_start].isspace():
        trimmed_start += 1
    while trimmed_end > trimmed_start and text[trimmed_end - 1].isspace():
        trimmed_end -= 1
    if trimmed_start == trimmed_end:
        return start, end
    return trimmed_start, trimmed_end


def _best_window(needle: str, haystack: str, window: tuple[int, int],
                 stride: int) -> tuple[tuple[int, int], float]:
    """Highest-similarity window of |needle| characters in the hint span.

    Ties break to the leftmost start. A multiset-overlap upper bound
    skips windows that cannot beat the current best; it never changes
    the argmax because equal scores keep the earlier window anyway.
    """
    win_start, win_end = window
    n = len(needle)
    if win_end - win_start <= n:
        positions = [win_start]
    else:
        positions = range(win_start, win_end - n + 1, stride)

    needle_counts = Counter(needle)
    best_ratio = -1.0
    best_span = (win_start, min(win_end, win_start + n))
    window_counts: Counter | None = None
    prev_pos = None
    for pos in positions:
        span_end = min(pos + n, win_end)
        if window_counts is None:
            window_counts = Counter(haystack[pos:span_end])
        else:
            # slide: drop the chars that left, add the chars that entered
            for ch in haystack[prev_pos:pos]:
                window_counts[ch] -= 1
            for ch in haystack[prev_pos + (span_end - pos):span_end]:
                window_counts[ch] += 1
        prev_pos = pos
        window_len = span_end - pos
        overlap = sum(min(c, window_counts[ch]) for ch, c in needle_counts.items())
        upper_bound = 2.0 * overlap / (n + window_len)
        if upper_bound <= best_ratio:
            continue
        ratio = similarity_ratio(needle, haystack[pos:span_end])
        if ratio > best_ratio:
            best_ratio = ratio
            best_span = (pos, span_end)
    return best_span, best_ratio


def fuzzy_align(needle: str, haystack: str, window: tuple[int, int],
                cfg: GroundingConfig) -> tuple[tuple[int, int], float]:
    """Best-scoring window of |needle| characters inside the hint span.

    The winning window is snapped to whitespace boundaries (never
    leaving the hint span) and the returned ratio is recomputed against
    the snapped interval so the pair stays self-consistent.
    """
    win_start, win_end = window
    if win_start >= win_end:
        raise NoCandidateSpan(f"empty window span [{win_start}, {win_end})")
    if not needle:
        raise ValueError("needle must be non-empty")

    best_span, _ratio = _best_window(needle, haystack, window, cfg.window_stride)
    start, end = _snap_to_word_boundaries(
        haystack, best_span[0], best_span[1], win_start, win_end)
    return (start, end), similarity_ratio(needle, haystack[start:end])


def classify_ratio(ratio: float, cfg: GroundingConfig) -> AlignmentClass:
    if ratio >= cfg.fuzzy_threshold:
        return AlignmentClass.MATCH_FUZZY
    if ratio >= cfg.lesser_threshold:
        return AlignmentClass.MATCH_LESSER
    return AlignmentClass.NO_MATCH


def ground(extractions: list[RawExtraction], doc: Document,
           chunks: list[Chunk], cfg: GroundingConfig | None = None
           ) -> list[GroundedExtraction]:
    """Anchor every extraction inside the chunk that produced it.

    Exact search runs against the chunk text with an occurrence cursor
    per (chunk, surface text): repeated identical texts take successive
    occurrences and only share an interval once occurrences run out.
    Exact failures fall back to the fuzzy window search; NO_MATCH is a
    classification, not an error, and is reported to the caller.
    """
    cfg = cfg or GroundingConfig()
    by_ordinal = {c.ordinal: c for c in chunks}
    cursors: dict[tuple[int, str], int] = {}
    grounded: list[GroundedExtraction] = []

    for raw in extractions:
        try:
            chunk = by_ordinal[raw.chunk_ordinal]
        except KeyError:
            raise ValueError(
                f"extraction references unknown chunk ordinal {raw.chunk_ordinal}"
            ) from None
        local_text = doc.text[chunk.start:chunk.end]
        key = (raw.chunk_ordinal, raw.extraction_text)
        cursor = cursors.get(key, 0)
        span = exact_align(raw.extraction_text, local_text, cursor)
        if span is None and cursor > 0:
            # occurrences exhausted: wrap around and reuse from the start
            span = exact_align(raw.extraction_text, local_text, 0)
        if span is not None:
            cursors[key] = span[1]
            interval = (chunk.start + span[0], chunk.start + span[1])
            grounded.append(GroundedExtraction(
                raw, interval, AlignmentClass.MATCH_EXACT, 1.0, doc.id))
            continue
        interval, ratio = fuzzy_align(
            raw.extraction_text, doc.text, (chunk.start, chunk.end), cfg)
        grounded.append(GroundedExtraction(
            raw, interval, classify_ratio(ratio, cfg), ratio, doc.id))
    return grounded
