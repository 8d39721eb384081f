"""Knowledge-triple extraction with verbatim source grounding.

The pipeline turns operational documents into a provenance-rich
knowledge graph, renders stakeholder swimlane diagrams from it, and
scores the extraction against a curated ground truth.
"""

from .corpus import Chunk, ChunkingMode, Document, load_document, segment
from .errors import (
    BackendError,
    CyclicGraph,
    EmptyDocument,
    EmptyEvaluation,
    MalformedOutput,
    MissingExemplars,
    NoCandidateSpan,
    OpskgError,
    SchemaViolation,
)
from .evaluation import (
    EvalCounts,
    EvalMetrics,
    EvalReport,
    ReportFormat,
    TripleKey,
    alignment_breakdown,
    evaluate,
    match_triples,
    metrics,
    render_report,
)
from .extraction import (
    BackendConfig,
    BackendKind,
    FewShotExample,
    Predicate,
    PromptPayload,
    RawExtraction,
    SchemaClass,
    SchemaSpec,
    build_prompt,
    extract_corpus,
    load_fewshot_examples,
    mock_backend,
    parse_structured_output,
)
from .grounding import (
    AlignmentClass,
    GroundedExtraction,
    GroundingConfig,
    exact_align,
    fuzzy_align,
    ground,
    similarity_ratio,
)
from .kgraph import (
    Edge,
    Entity,
    KnowledgeGraph,
    Provenance,
    ValidationReport,
    break_cycles,
    build_graph,
    deserialize,
    export_triples,
    normalize_id,
    serialize,
    validate_graph,
)
from .swimlane import (
    RenderStyle,
    SwimlaneLayout,
    assign_lanes,
    compute_depths,
    layout,
    render_svg,
)

__version__ = "0.1.0"
