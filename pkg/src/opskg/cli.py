"""Command-line entry point orchestrating the pipeline and its stages."""

from __future__ import annotations

import json
import logging
import os
import tempfile
from contextlib import contextmanager
from pathlib import Path

import click

from . import corpus, evaluation, extraction, figures, grounding, kgraph, swimlane
from .errors import OpskgError

ARTIFACT_EXTRACTIONS = "extractions.jsonl"
ARTIFACT_REJECTIONS = "rejections.jsonl"
ARTIFACT_GROUNDING = "grounding.jsonl"
ARTIFACT_KG = "kg.json"
ARTIFACT_VALIDATION = "validation.txt"
ARTIFACT_SWIMLANE = "swimlane.svg"


def _write_atomic(path: Path, data: bytes) -> None:
    # temp file + rename keeps partially written artifacts off disk
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(data)
        os.replace(tmp_name, path)
    except BaseException:
        os.unlink(tmp_name)
        raise


def _jsonl(records) -> bytes:
    return "".join(
        json.dumps(record, ensure_ascii=False, sort_keys=True) + "\n"
        for record in records
    ).encode("utf-8")


@contextmanager
def _stage(name: str):
    try:
        yield
    except click.ClickException:
        raise
    except (OpskgError, ValueError) as exc:
        raise click.ClickException(f"{name}: {exc}") from exc
    except (KeyError, TypeError) as exc:
        # malformed user-supplied records surface as these
        raise click.ClickException(f"{name}: malformed input: {exc!r}") from exc


def _load_doc(input_path: str, page_marker: str, doc_id: str | None) -> corpus.Document:
    path = Path(input_path)
    if not path.is_file():
        raise click.ClickException(f"input not found: {input_path}")
    raw = path.read_text("utf-8")
    with _stage("load"):
        return corpus.load_document(raw, page_marker, doc_id or path.stem)


def _backend_config(backend: str, endpoint: str | None, model: str | None,
                    max_workers: int) -> extraction.BackendConfig:
    with _stage("extract"):
        return extraction.BackendConfig(
            kind=extraction.BackendKind(backend),
            endpoint=endpoint,
            model_name=model,
            max_workers=max_workers,
        )


def _grounding_config(fuzzy_threshold: float,
                      lesser_threshold: float) -> grounding.GroundingConfig:
    with _stage("ground"):
        return grounding.GroundingConfig(fuzzy_threshold=fuzzy_threshold,
                                         lesser_threshold=lesser_threshold)


def _load_graph(path: str) -> kgraph.KnowledgeGraph:
    with _stage("kg"):
        return kgraph.deserialize(Path(path).read_bytes())


def _corpus_options(f):
    f = click.option("--chunking", type=click.Choice(["page", "document"]),
                     default="page", show_default=True,
                     help="Context-window modality.")(f)
    f = click.option("--page-marker", default=corpus.DEFAULT_PAGE_MARKER,
                     help="Page separator string (form feed by default).")(f)
    f = click.option("--doc-id", default=None,
                     help="Document id (defaults to the input file stem).")(f)
    return f


def _backend_options(f):
    f = click.option("--max-workers", type=int, default=1, show_default=True,
                     help="Concurrent in-flight chunk requests.")(f)
    f = click.option("--model", default=None, help="Model name (HTTP backend).")(f)
    f = click.option("--endpoint", default=None, help="URL (HTTP backend).")(f)
    f = click.option("--backend", type=click.Choice(["mock", "http"]),
                     default="mock", show_default=True)(f)
    f = click.option("--shots", type=click.Path(exists=True, dir_okay=False),
                     default=None,
                     help="Few-shot fixture JSON (bundled file by default).")(f)
    return f


def _grounding_options(f):
    f = click.option("--lesser-threshold", type=float, default=0.35,
                     show_default=True)(f)
    f = click.option("--fuzzy-threshold", type=float, default=0.75,
                     show_default=True)(f)
    return f


@click.group(context_settings={"help_option_names": ["-h", "--help"]})
@click.option("--config", "config_path",
              type=click.Path(exists=True, dir_okay=False), default=None,
              help="JSON file of per-subcommand flag defaults.")
@click.option("--verbose", is_flag=True, help="Enable debug logging.")
@click.pass_context
def main(ctx, config_path, verbose):
    """Extract schema-constrained knowledge triples from operational
    documents, anchor them to verbatim source spans, build a knowledge
    graph, render stakeholder swimlanes and score against a ground truth."""
    logging.basicConfig(level=logging.DEBUG if verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if config_path:
        ctx.default_map = json.loads(Path(config_path).read_text("utf-8"))


def _run_extraction(doc, chunks, backend_cfg, schema, shots_path):
    with _stage("extract"):
        shots = extraction.load_fewshot_examples(shots_path, schema)
        return extraction.extract_corpus(chunks, doc, backend_cfg, schema, shots)


@main.command()
@click.argument("input_path", metavar="INPUT", type=click.Path(dir_okay=False))
@click.option("--out-dir", type=click.Path(file_okay=False), default="out",
              show_default=True, help="Directory for pipeline artifacts.")
@_corpus_options
@_backend_options
@_grounding_options
@click.option("--break-cycles", is_flag=True,
              help="Remove the lexicographically last edge of each hasNext "
                   "cycle instead of refusing to render.")
def pipeline(input_path, out_dir, chunking, page_marker, doc_id, backend,
             endpoint, model, max_workers, shots, fuzzy_threshold,
             lesser_threshold, break_cycles):
    """Run load -> segment -> extract -> ground -> build -> validate -> render."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    schema = extraction.SchemaSpec.default()

    doc = _load_doc(input_path, page_marker, doc_id)
    chunks = corpus.segment(doc, corpus.ChunkingMode(chunking))

    backend_cfg = _backend_config(backend, endpoint, model, max_workers)
    extractions, rejections = _run_extraction(doc, chunks, backend_cfg,
                                              schema, shots)
    _write_atomic(out / ARTIFACT_EXTRACTIONS,
                  _jsonl(e.to_record() for e in extractions))
    if rejections:
        _write_atomic(out / ARTIFACT_REJECTIONS,
                      _jsonl(r.to_json() for r in rejections))

    grounding_cfg = _grounding_config(fuzzy_threshold, lesser_threshold)
    with _stage("ground"):
        grounded = grounding.ground(extractions, doc, chunks, grounding_cfg)
    _write_atomic(out / ARTIFACT_GROUNDING, _jsonl(g.to_json() for g in grounded))

    anchored = [g for g in grounded
                if g.alignment is not grounding.AlignmentClass.NO_MATCH]
    with _stage("build"):
        graph = kgraph.build_graph(anchored)

    with _stage("validate"):
        report = kgraph.validate_graph(graph)
        if report.cycles:
            if not break_cycles:
                _write_atomic(out / ARTIFACT_VALIDATION,
                              report.render_text().encode("utf-8"))
                cycles = "; ".join(" -> ".join(c + [c[0]]) for c in report.cycles)
                raise click.ClickException(
                    f"validate: hasNext cycle(s) refused without "
                    f"--break-cycles: {cycles}")
            graph, removed = kgraph.break_cycles(graph)
            report.broken_edges = removed
    _write_atomic(out / ARTIFACT_VALIDATION, report.render_text().encode("utf-8"))

    _write_atomic(out / ARTIFACT_KG, kgraph.serialize(graph))

    with _stage("render"):
        svg = swimlane.render_svg(swimlane.layout(graph))
    _write_atomic(out / ARTIFACT_SWIMLANE, svg)

    for name in (ARTIFACT_EXTRACTIONS, ARTIFACT_GROUNDING, ARTIFACT_KG,
                 ARTIFACT_VALIDATION, ARTIFACT_SWIMLANE):
        click.echo(f"wrote {out / name}")


@main.command()
@click.argument("input_path", metavar="INPUT", type=click.Path(dir_okay=False))
@_corpus_options
@_backend_options
@click.option("--out", "out_path", type=click.Path(dir_okay=False),
              default=ARTIFACT_EXTRACTIONS, show_default=True)
@click.option("--rejections", "rejections_path", type=click.Path(dir_okay=False),
              default=None, help="Where to write quarantined records, if any.")
def extract(input_path, chunking, page_marker, doc_id, backend, endpoint,
            model, max_workers, shots, out_path, rejections_path):
    """Extract raw triples from one document into a JSON Lines file."""
    schema = extraction.SchemaSpec.default()
    doc = _load_doc(input_path, page_marker, doc_id)
    chunks = corpus.segment(doc, corpus.ChunkingMode(chunking))
    backend_cfg = _backend_config(backend, endpoint, model, max_workers)
    extractions, rejections = _run_extraction(doc, chunks, backend_cfg,
                                              schema, shots)
    _write_atomic(Path(out_path), _jsonl(e.to_record() for e in extractions))
    click.echo(f"wrote {out_path} ({len(extractions)} extractions)")
    if rejections:
        if rejections_path:
            _write_atomic(Path(rejections_path),
                          _jsonl(r.to_json() for r in rejections))
            click.echo(f"wrote {rejections_path} ({len(rejections)} rejected)")
        else:
            click.echo(f"warning: {len(rejections)} records rejected "
                       "(use --rejections to keep them)", err=True)


@main.command("ground")
@click.argument("input_path", metavar="INPUT", type=click.Path(dir_okay=False))
@click.option("--extractions", "extractions_path", required=True,
              type=click.Path(exists=True, dir_okay=False),
              help="extractions.jsonl produced by the extract stage.")
@_corpus_options
@_grounding_options
@click.option("--out", "out_path", type=click.Path(dir_okay=False),
              default=ARTIFACT_GROUNDING, show_default=True)
def ground_cmd(input_path, extractions_path, chunking, page_marker, doc_id,
               fuzzy_threshold, lesser_threshold, out_path):
    """Anchor previously extracted triples to source intervals."""
    doc = _load_doc(input_path, page_marker, doc_id)
    chunks = corpus.segment(doc, corpus.ChunkingMode(chunking))
    with _stage("ground"):
        records = [json.loads(line) for line in
                   Path(extractions_path).read_text("utf-8").splitlines() if line]
        extractions = [extraction.RawExtraction.from_record(r) for r in records]
        cfg = _grounding_config(fuzzy_threshold, lesser_threshold)
        grounded = grounding.ground(extractions, doc, chunks, cfg)
    _write_atomic(Path(out_path), _jsonl(g.to_json() for g in grounded))
    click.echo(f"wrote {out_path} ({len(grounded)} grounded)")


@main.group()
def kg():
    """Build, validate and export knowledge graphs."""


@kg.command("build")
@click.option("--grounding", "grounding_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_path", type=click.Path(dir_okay=False),
              default=ARTIFACT_KG, show_default=True)
def kg_build(grounding_path, out_path):
    """Build a knowledge graph from a grounding report."""
    with _stage("build"):
        grounded = [
            grounding.GroundedExtraction.from_json(json.loads(line))
            for line in Path(grounding_path).read_text("utf-8").splitlines()
            if line
        ]
        anchored = [g for g in grounded
                    if g.alignment is not grounding.AlignmentClass.NO_MATCH]
        graph = kgraph.build_graph(anchored)
    _write_atomic(Path(out_path), kgraph.serialize(graph))
    click.echo(f"wrote {out_path} ({len(graph.entities)} entities, "
               f"{len(graph.edges)} edges)")


@kg.command("validate")
@click.option("--kg", "kg_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
def kg_validate(kg_path):
    """Print the validation report for a knowledge-graph file."""
    graph = _load_graph(kg_path)
    with _stage("validate"):
        report = kgraph.validate_graph(graph)
    click.echo(report.render_text(), nl=False)


@kg.command("export")
@click.option("--kg", "kg_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--format", "fmt", type=click.Choice(["json", "triples"]),
              default="json", show_default=True)
@click.option("--out", "out_path", type=click.Path(dir_okay=False), default=None,
              help="Output file (stdout when omitted).")
def kg_export(kg_path, fmt, out_path):
    """Export a knowledge graph as canonical JSON or one-triple-per-line."""
    graph = _load_graph(kg_path)
    data = kgraph.serialize(graph) if fmt == "json" else kgraph.export_triples(graph)
    if out_path:
        _write_atomic(Path(out_path), data)
        click.echo(f"wrote {out_path}")
    else:
        click.echo(data.decode("utf-8"), nl=False)


@main.group("swimlane")
def swimlane_group():
    """Swimlane diagram commands."""


@swimlane_group.command("render")
@click.option("--kg", "kg_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_path", required=True,
              type=click.Path(dir_okay=False))
@click.option("--break-cycles", is_flag=True)
def swimlane_render(kg_path, out_path, break_cycles):
    """Render a stakeholder swimlane SVG from a knowledge-graph file."""
    graph = _load_graph(kg_path)
    with _stage("render"):
        report = kgraph.validate_graph(graph)
        if report.cycles:
            if not break_cycles:
                cycles = "; ".join(" -> ".join(c + [c[0]]) for c in report.cycles)
                raise click.ClickException(
                    f"render: hasNext cycle(s) refused without "
                    f"--break-cycles: {cycles}")
            graph, removed = kgraph.break_cycles(graph)
            for subject, predicate, obj in removed:
                click.echo(f"broke cycle edge {subject} -{predicate}-> {obj}")
        svg = swimlane.render_svg(swimlane.layout(graph))
    _write_atomic(Path(out_path), svg)
    click.echo(f"wrote {out_path}")


@main.command("eval")
@click.option("--extracted", "extracted_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--truth", "truth_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--grounding", "grounding_path", default=None,
              type=click.Path(exists=True, dir_okay=False),
              help="grounding.jsonl for the per-alignment breakdown.")
@click.option("--format", "fmt", type=click.Choice(["text", "json"]),
              default="text", show_default=True)
@click.option("--figures", "figures_dir", type=click.Path(file_okay=False),
              default=None, help="Also render matplotlib charts into this "
                                 "directory.")
def eval_cmd(extracted_path, truth_path, grounding_path, fmt, figures_dir):
    """Score an extracted graph against a curated ground-truth graph."""
    extracted = _load_graph(extracted_path)
    truth = _load_graph(truth_path)
    grounded = None
    if grounding_path:
        with _stage("eval"):
            grounded = [
                grounding.GroundedExtraction.from_json(json.loads(line))
                for line in Path(grounding_path).read_text("utf-8").splitlines()
                if line
            ]
    with _stage("eval"):
        report = evaluation.evaluate(extracted, truth, grounded)
        rendered = evaluation.render_report(report,
                                            evaluation.ReportFormat(fmt))
    click.echo(rendered.decode("utf-8"), nl=False)
    if figures_dir:
        for path in figures.save_report_figures(report, figures_dir):
            click.echo(f"wrote {path}")


if __name__ == "__main__":
    main()
