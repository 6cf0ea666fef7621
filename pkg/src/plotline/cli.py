"""Staged pipeline orchestration.

Usage: plotline <stage> --config <path> [--threads N] [--seed S]
       [--set section.key=value ...]
       plotline config validate --config <path>

Stages write plain artifacts with stable names into the configured output
directory; each stage checks the artifacts it consumes and names the stage
that produces them when one is missing. Exit codes: 0 success, 1 validation
failure, 2 runtime error.
"""

from __future__ import annotations

import argparse
import copy
import hashlib
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import boundary as boundary_mod
from . import corpus as corpus_mod
from . import evaluation as eval_mod
from . import gat as gat_mod
from . import graph as graph_mod
from . import summarize as summarize_mod
from .errors import (
    ConfigError,
    InvalidPattern,
    IoFailure,
    MissingArtifact,
    OrderError,
    ParseError,
    PlotlineError,
    SchemaError,
)

STAGES = ("split", "graph", "train", "embed", "segment", "outline", "eval")

CHAPTERS_FILE = "chapters.jsonl"
GRAPHS_FILE = "graphs.jsonl"
MODEL_FILE = "model.bin"
LOSS_TRACE_FILE = "loss_trace.csv"
LOSS_FIGURE = "loss_trace.png"
EMBEDDINGS_FILE = "embeddings.csv"
EMBEDDINGS_2D_FILE = "embeddings_2d.csv"
SEGMENTS_FILE = "segments.json"
OUTLINE_MD = "outline.md"
OUTLINE_JSON = "outline.json"
REPORT_FILE = "report.csv"
REPORT_FIGURE = "report.png"

# Which stage writes each consumable artifact (for MissingArtifact messages).
PRODUCERS = {
    CHAPTERS_FILE: "split",
    GRAPHS_FILE: "graph",
    MODEL_FILE: "train",
    EMBEDDINGS_FILE: "embed",
    EMBEDDINGS_2D_FILE: "embed",
    SEGMENTS_FILE: "segment",
}

# Stage seeds derive from the master seed by fixed offsets.
SEED_OFFSETS = {"model_init": 1, "train_shuffle": 2}

DEFAULT_CONFIG = {
    "paths": {
        "texts": [],
        "annotations": "",
        "embedding_table": None,
        "references": None,
        "output_dir": "out",
    },
    "split": {
        "patterns": None,  # null = built-in heading patterns
    },
    "graph": {
        "max_path_len": 2,
        "top_k": 10,
        "embedding_dim": 32,
    },
    "model": {
        "layers": 2,
        "d_head": 16,
        "d_z": 16,
        "hidden_heads": 4,
        "output_heads": 1,
        "leaky_slope": 0.2,
    },
    "train": {
        "epochs": 200,
        "learning_rate": 0.005,
        "pos_weight": "auto",
    },
    "boundary": {
        "alpha": 5,
        "beta": 1.5,
        "safety_distance": 3,
        "embedding_space": "full",
        "calibrate": False,
    },
    "llm": {
        "enabled": False,
        "endpoint": "http://localhost:8000/v1/chat/completions",
        "model": "default",
        "api_key_env": "PLOTLINE_API_KEY",
        "max_tokens": 512,
        "temperature": 0.2,
        "timeout": 30.0,
        "max_retries": 3,
        "max_concurrent_requests": 4,
        "budget_tokens": 1500,
        "chars_per_token": 2,
        "global_pass": False,
    },
    "eval": {
        "window": 1,
    },
    "seed": 0,
    "threads": 1,
}


class PipelineConfig:
    """Resolved configuration: defaults, then file values, then flag overrides."""

    def __init__(self, values: dict):
        self.values = values

    def __getitem__(self, section: str):
        return self.values[section]

    @property
    def output_dir(self) -> Path:
        return Path(self.values["paths"]["output_dir"])

    @property
    def seed(self) -> int:
        return int(self.values["seed"])

    @property
    def threads(self) -> int:
        return int(self.values["threads"])

    def digest(self) -> str:
        canonical = json.dumps(self.values, sort_keys=True, ensure_ascii=False)
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:12]

    def artifact(self, name: str) -> Path:
        return self.output_dir / name

    def require_artifact(self, name: str) -> Path:
        path = self.artifact(name)
        if not path.exists():
            raise MissingArtifact(path, PRODUCERS[name])
        return path


def _merge(base: dict, override: dict, prefix: str = "") -> dict:
    merged = copy.deepcopy(base)
    for key, value in override.items():
        dotted = f"{prefix}{key}"
        if key not in base:
            raise ConfigError(f"unknown config key: {dotted}")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"{dotted} must be an object")
            merged[key] = _merge(base[key], value, f"{dotted}.")
        else:
            merged[key] = value
    return merged


def _parse_set(expr: str) -> tuple[list[str], object]:
    if "=" not in expr:
        raise ConfigError(f"--set needs key=value, got {expr!r}")
    key, raw = expr.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw  # bare strings pass through unquoted
    return key.split("."), value


def load_config(path: str | Path, overrides=(), seed=None, threads=None) -> PipelineConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            file_values = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(file_values, dict):
        raise ConfigError("config root must be a JSON object")
    values = _merge(DEFAULT_CONFIG, file_values)

    for expr in overrides:
        keys, value = _parse_set(expr)
        target = values
        for key in keys[:-1]:
            if key not in target or not isinstance(target[key], dict):
                raise ConfigError(f"unknown config key: {'.'.join(keys)}")
            target = target[key]
        if keys[-1] not in target:
            raise ConfigError(f"unknown config key: {'.'.join(keys)}")
        target[keys[-1]] = value
    if seed is not None:
        values["seed"] = seed
    if threads is not None:
        values["threads"] = threads

    # paths are resolved relative to the config file's directory
    base = Path(path).resolve().parent
    paths = values["paths"]
    paths["texts"] = [str(_resolve(base, p)) for p in paths["texts"]]
    for key in ("annotations", "embedding_table", "references", "output_dir"):
        if paths.get(key):
            if key == "references" and isinstance(paths[key], list):
                paths[key] = [str(_resolve(base, p)) for p in paths[key]]
            else:
                paths[key] = str(_resolve(base, paths[key]))
    return PipelineConfig(values)


def _resolve(base: Path, p: str) -> Path:
    q = Path(p)
    return q if q.is_absolute() else base / q


def validate_config(config: PipelineConfig, check_inputs: bool = True) -> list[str]:
    """Range and existence checks; returns problem strings (empty = valid)."""
    v = config.values
    problems = []

    def check(cond: bool, msg: str) -> None:
        if not cond:
            problems.append(msg)

    check(isinstance(v["paths"]["texts"], list) and v["paths"]["texts"],
          "paths.texts must be a nonempty list of files")
    check(bool(v["paths"]["annotations"]), "paths.annotations must be set")
    check(v["graph"]["max_path_len"] >= 1, "graph.max_path_len must be >= 1")
    check(v["graph"]["top_k"] >= 1, "graph.top_k must be >= 1")
    check(v["graph"]["embedding_dim"] >= 1, "graph.embedding_dim must be >= 1")
    check(v["model"]["layers"] >= 1, "model.layers must be >= 1")
    check(v["model"]["d_head"] >= 1 and v["model"]["d_z"] >= 1,
          "model dims must be >= 1")
    check(v["model"]["hidden_heads"] >= 1 and v["model"]["output_heads"] >= 1,
          "model head counts must be >= 1")
    check(v["train"]["epochs"] >= 1, "train.epochs must be >= 1")
    check(v["train"]["learning_rate"] >= 0, "train.learning_rate must be >= 0")
    pw = v["train"]["pos_weight"]
    check(pw == "auto" or (isinstance(pw, (int, float)) and pw > 0),
          "train.pos_weight must be 'auto' or a positive number")
    check(v["boundary"]["alpha"] >= 1, "boundary.alpha must be >= 1")
    check(v["boundary"]["beta"] > 0, "boundary.beta must be > 0")
    check(v["boundary"]["safety_distance"] >= 0,
          "boundary.safety_distance must be >= 0")
    check(v["boundary"]["embedding_space"] in ("full", "projected-2d"),
          "boundary.embedding_space must be 'full' or 'projected-2d'")
    check(v["llm"]["max_retries"] >= 0, "llm.max_retries must be >= 0")
    check(v["llm"]["timeout"] > 0, "llm.timeout must be > 0")
    check(v["llm"]["budget_tokens"] >= 1, "llm.budget_tokens must be >= 1")
    check(v["eval"]["window"] >= 0, "eval.window must be >= 0")
    check(v["threads"] >= 1, "threads must be >= 1")

    if check_inputs:
        for p in v["paths"]["texts"]:
            check(Path(p).is_file(), f"text file not found: {p}")
        ann = v["paths"]["annotations"]
        if ann:
            check(Path(ann).is_file(), f"annotations file not found: {ann}")
        table = v["paths"]["embedding_table"]
        if table:
            check(Path(table).is_file(), f"embedding table not found: {table}")
        for p in _reference_files(config, missing_ok=True):
            check(Path(p).is_file(), f"reference file not found: {p}")
    return problems


def _reference_files(config: PipelineConfig, missing_ok: bool = False) -> list[str]:
    refs = config["paths"]["references"]
    if not refs:
        return []
    if isinstance(refs, list):
        return list(refs)
    path = Path(refs)
    if path.is_dir():
        return [str(p) for p in sorted(path.glob("*.json"))]
    if missing_ok:
        return [str(path)]
    raise ConfigError(f"paths.references is neither a directory nor a list: {refs}")


# --- stage implementations --------------------------------------------------

def _json_line(record: dict) -> str:
    return json.dumps(record, ensure_ascii=False, sort_keys=True) + "\n"


def stage_split(config: PipelineConfig) -> None:
    out = config.artifact(CHAPTERS_FILE)
    patterns = config["split"]["patterns"]
    rows = []
    for text_path in config["paths"]["texts"]:
        book_id = Path(text_path).stem
        try:
            raw = Path(text_path).read_text(encoding="utf-8")
        except OSError as exc:
            raise IoFailure(f"cannot read {text_path}: {exc}") from exc
        result = corpus_mod.split_chapters(raw, patterns, book_id)
        if result.reconstruct() != raw:
            raise PlotlineError(f"round-trip mismatch splitting {book_id}")
        for ch in result.chapters:
            rows.append({
                "book_id": ch.book_id,
                "chapter_index": ch.chapter_index,
                "title": ch.title,
                "body": ch.body,
            })
        print(f"split: {book_id}: {len(result.chapters)} chapters")
    config.output_dir.mkdir(parents=True, exist_ok=True)
    with open(out, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(_json_line(row))
    print(f"split: wrote {out}")


def _load_chapter_counts(config: PipelineConfig) -> dict[str, int]:
    path = config.require_artifact(CHAPTERS_FILE)
    counts: dict[str, int] = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                row = json.loads(line)
                counts[row["book_id"]] = counts.get(row["book_id"], 0) + 1
    return counts


def _provider(config: PipelineConfig):
    table = config["paths"]["embedding_table"]
    if table:
        return graph_mod.TableEmbeddingProvider.from_file(table, fallback=True)
    return graph_mod.HashEmbeddingProvider(config["graph"]["embedding_dim"])


def stage_graph(config: PipelineConfig) -> None:
    split_counts = _load_chapter_counts(config)
    annotated = corpus_mod.load_annotations(config["paths"]["annotations"])
    report = corpus_mod.validate_corpus(annotated)
    for warning in report.warnings:
        print(f"graph: warning: {warning}", file=sys.stderr)
    if report.violations:
        raise ConfigError("annotation problems: " + "; ".join(report.violations))

    ann_counts: dict[str, int] = {}
    for ch in annotated:
        ann_counts[ch.book_id] = ann_counts.get(ch.book_id, 0) + 1
    for book_id, count in sorted(ann_counts.items()):
        expected = split_counts.get(book_id)
        if expected is None:
            raise ConfigError(f"annotations cover unknown book {book_id!r}")
        if expected != count:
            raise ConfigError(
                f"{book_id}: {count} annotated chapters but split found {expected}"
            )

    annotated.sort(key=lambda ch: (ch.book_id, ch.chapter_index))
    stats = graph_mod.CorpusStats.from_corpus(annotated)
    provider = _provider(config)
    gcfg = graph_mod.GraphConfig(
        max_path_len=config["graph"]["max_path_len"],
        top_k=config["graph"]["top_k"],
        embedding_dim=config["graph"]["embedding_dim"],
    )

    def build(ch):
        return graph_mod.build_chapter_graph(ch, stats, provider, gcfg)

    if config.threads > 1:
        with ThreadPoolExecutor(max_workers=config.threads) as pool:
            graphs = list(pool.map(build, annotated))
    else:
        graphs = [build(ch) for ch in annotated]

    config.output_dir.mkdir(parents=True, exist_ok=True)
    out = config.artifact(GRAPHS_FILE)
    with open(out, "w", encoding="utf-8") as fh:
        for g in graphs:
            fh.write(_json_line(g.to_record()))
    print(f"graph: wrote {len(graphs)} chapter graphs to {out}")


def _load_graphs(config: PipelineConfig) -> list:
    path = config.require_artifact(GRAPHS_FILE)
    graphs = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                graphs.append(graph_mod.ChapterGraph.from_record(json.loads(line)))
    if not graphs:
        raise ConfigError(f"{path} holds no graphs")
    return graphs


def stage_train(config: PipelineConfig) -> None:
    graphs = _load_graphs(config)
    m = config["model"]
    model = gat_mod.init_model(
        input_dim=graphs[0].features.shape[1],
        n_layers=m["layers"],
        d_head=m["d_head"],
        d_z=m["d_z"],
        hidden_heads=m["hidden_heads"],
        output_heads=m["output_heads"],
        leaky_slope=m["leaky_slope"],
        seed=config.seed + SEED_OFFSETS["model_init"],
    )
    tcfg = gat_mod.TrainConfig(
        epochs=config["train"]["epochs"],
        learning_rate=config["train"]["learning_rate"],
        seed=config.seed + SEED_OFFSETS["train_shuffle"],
        pos_weight=config["train"]["pos_weight"],
    )
    result = gat_mod.train(model, graphs, tcfg)
    gat_mod.save_model(model, config.artifact(MODEL_FILE), seed=config.seed)
    gat_mod.save_loss_trace(result.loss_trace, config.artifact(LOSS_TRACE_FILE))
    from . import figures
    figures.save_loss_curve(result.loss_trace, config.artifact(LOSS_FIGURE))
    print(
        f"train: {len(graphs)} graphs, {tcfg.epochs} epochs, "
        f"final loss {result.loss_trace[-1]:.6f}"
    )


def _write_embedding_csv(path: Path, rows: list[tuple[str, int, np.ndarray]]) -> None:
    d = rows[0][2].shape[0]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("book_id,chapter_index," + ",".join(f"z{i + 1}" for i in range(d)) + "\n")
        for book_id, chapter_index, vec in rows:
            values = ",".join(repr(float(x)) for x in vec)
            fh.write(f"{book_id},{chapter_index},{values}\n")


def _read_embedding_csv(path: Path) -> dict[str, list[tuple[int, np.ndarray]]]:
    books: dict[str, list[tuple[int, np.ndarray]]] = {}
    with open(path, encoding="utf-8") as fh:
        fh.readline()
        for line in fh:
            parts = line.rstrip("\n").split(",")
            if len(parts) < 3:
                continue
            vec = np.array([float(x) for x in parts[2:]], dtype=np.float64)
            books.setdefault(parts[0], []).append((int(parts[1]), vec))
    for chapters in books.values():
        chapters.sort(key=lambda t: t[0])
    return books


def stage_embed(config: PipelineConfig) -> None:
    graphs = _load_graphs(config)
    model, _ = gat_mod.load_model(config.require_artifact(MODEL_FILE))
    rows = [
        (g.book_id, g.chapter_index, gat_mod.chapter_embedding(model, g))
        for g in graphs
    ]
    rows.sort(key=lambda r: (r[0], r[1]))
    _write_embedding_csv(config.artifact(EMBEDDINGS_FILE), rows)

    from . import figures
    rows_2d = []
    by_book: dict[str, list[tuple[int, np.ndarray]]] = {}
    for book_id, chapter_index, vec in rows:
        by_book.setdefault(book_id, []).append((chapter_index, vec))
    for book_id in sorted(by_book):
        chapters = by_book[book_id]
        matrix = np.vstack([vec for _, vec in chapters])
        if matrix.shape[0] < 2:
            points = np.zeros((matrix.shape[0], 2))
        else:
            points = gat_mod.project_2d(matrix)
        for (chapter_index, _), point in zip(chapters, points):
            rows_2d.append((book_id, chapter_index, point))
        figures.save_embedding_scatter(
            points, book_id, config.artifact(f"embeddings_2d_{book_id}.png")
        )
    _write_embedding_csv(config.artifact(EMBEDDINGS_2D_FILE), rows_2d)
    print(f"embed: wrote {len(rows)} chapter embeddings for {len(by_book)} books")


def stage_segment(config: PipelineConfig) -> None:
    b = config["boundary"]
    space = b["embedding_space"]
    source = EMBEDDINGS_2D_FILE if space == "projected-2d" else EMBEDDINGS_FILE
    books = _read_embedding_csv(config.require_artifact(source))
    base = boundary_mod.BoundaryConfig(
        alpha=b["alpha"],
        beta=b["beta"],
        safety_distance=b["safety_distance"],
        embedding_space=space,
    )

    sequences = {
        book_id: boundary_mod.EmbeddingSequence(
            book_id, np.vstack([vec for _, vec in chapters])
        )
        for book_id, chapters in sorted(books.items())
    }

    cfg = base
    if b["calibrate"]:
        refs = {
            r.book_id: r.boundaries
            for r in map(eval_mod.BoundaryReference.from_file, _reference_files(config))
        }
        labeled = [
            (seq, refs[book_id]) for book_id, seq in sequences.items() if book_id in refs
        ]
        if not labeled:
            raise ConfigError("boundary.calibrate is on but no references match")
        beta = boundary_mod.calibrate_beta(
            labeled, base, window=config["eval"]["window"]
        )
        cfg = boundary_mod.BoundaryConfig(base.alpha, beta, base.safety_distance, space)
        print(f"segment: calibrated beta = {beta}")

    from . import figures
    records = []
    for book_id, seq in sequences.items():
        labels = boundary_mod.detect_boundaries(seq, cfg)
        segments = boundary_mod.segments_from_labels(labels)
        records.append(boundary_mod.segments_record(book_id, labels, segments, cfg))
        n = len(seq)
        steps = [boundary_mod.embedding_unit(seq, m) for m in range(2, n + 1)]
        thresholds = [
            boundary_mod.threshold(seq, m, cfg) if cfg.alpha + 1 <= m <= n - 1 else None
            for m in range(2, n + 1)
        ]
        detected = boundary_mod.boundary_chapters(labels)
        figures.save_boundary_plot(
            steps, thresholds, detected, book_id,
            config.artifact(f"boundaries_{book_id}.png"),
        )
        print(f"segment: {book_id}: {len(segments)} segments, boundaries {detected}")

    out = config.artifact(SEGMENTS_FILE)
    with open(out, "w", encoding="utf-8") as fh:
        json.dump({"books": records}, fh, ensure_ascii=False, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"segment: wrote {out}")


def _load_segments(config: PipelineConfig) -> list[dict]:
    path = config.require_artifact(SEGMENTS_FILE)
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)["books"]


def stage_outline(config: PipelineConfig) -> None:
    records = _load_segments(config)
    annotated = corpus_mod.load_annotations(config["paths"]["annotations"])
    tfidf = graph_mod.compute_tfidf(annotated)
    by_book: dict[str, list] = {}
    for ch in annotated:
        by_book.setdefault(ch.book_id, []).append(ch)

    llm_cfg = config["llm"]
    llm = None
    if llm_cfg["enabled"] and os.environ.get(summarize_mod.NO_NETWORK_ENV) != "1":
        llm = summarize_mod.LlmClient(summarize_mod.LlmConfig(
            endpoint=llm_cfg["endpoint"],
            model=llm_cfg["model"],
            api_key_env=llm_cfg["api_key_env"],
            max_tokens=llm_cfg["max_tokens"],
            temperature=llm_cfg["temperature"],
            timeout=llm_cfg["timeout"],
            max_retries=llm_cfg["max_retries"],
            max_concurrent_requests=llm_cfg["max_concurrent_requests"],
        ))

    outlines = []
    for record in sorted(records, key=lambda r: r["book_id"]):
        book_id = record["book_id"]
        chapters = by_book.get(book_id)
        if not chapters:
            raise ConfigError(f"segments reference unannotated book {book_id!r}")
        segments = [
            boundary_mod.PlotSegment(i, s["start"], s["end"])
            for i, s in enumerate(record["segments"], start=1)
        ]
        summaries = summarize_mod.summarize_all(
            segments, chapters, tfidf, book_id,
            llm=llm,
            budget_tokens=llm_cfg["budget_tokens"],
            chars_per_token=llm_cfg["chars_per_token"],
        )
        outline = summarize_mod.assemble_outline(
            book_id, summaries,
            model=llm_cfg["model"] if llm is not None else "fallback",
            config_hash=config.digest(),
            global_pass=llm if llm_cfg["global_pass"] else None,
        )
        outlines.append(outline)
        print(f"outline: {book_id}: {len(summaries)} segments")

    md = "\n---\n\n".join(summarize_mod.outline_markdown(o) for o in outlines)
    config.artifact(OUTLINE_MD).write_text(md, encoding="utf-8")
    mirror = [json.loads(summarize_mod.outline_json(o)) for o in outlines]
    with open(config.artifact(OUTLINE_JSON), "w", encoding="utf-8") as fh:
        json.dump(mirror, fh, ensure_ascii=False, indent=2)
        fh.write("\n")
    print(f"outline: wrote {config.artifact(OUTLINE_MD)}")


def stage_eval(config: PipelineConfig) -> None:
    records = {r["book_id"]: r for r in _load_segments(config)}
    ref_files = _reference_files(config)
    if not ref_files:
        raise ConfigError("eval needs paths.references")
    window = config["eval"]["window"]
    report = eval_mod.MetricReport(window=window)
    for ref_path in ref_files:
        ref = eval_mod.BoundaryReference.from_file(ref_path)
        record = records.get(ref.book_id)
        if record is None:
            raise ConfigError(f"no segments for referenced book {ref.book_id!r}")
        labels = record["labels"]
        pred = boundary_mod.boundary_chapters(labels)
        precision, recall, f1, accuracy = eval_mod.boundary_prf(
            pred, ref.boundaries, window
        )
        tau = eval_mod.segment_order_tau(
            [(s["start"], s["end"]) for s in record["segments"]],
            ref.boundaries,
            len(labels),
        )
        report.books.append(eval_mod.BookMetrics(
            ref.book_id, precision, recall, f1, accuracy, tau
        ))
    config.output_dir.mkdir(parents=True, exist_ok=True)
    table = eval_mod.emit_report(report, config.artifact(REPORT_FILE))
    from . import figures
    figures.save_metric_bars(
        [b.book_id for b in report.books],
        [b.f1 for b in report.books],
        config.artifact(REPORT_FIGURE),
    )
    print(table)
    print(f"eval: wrote {config.artifact(REPORT_FILE)}")


STAGE_FUNCS = {
    "split": stage_split,
    "graph": stage_graph,
    "train": stage_train,
    "embed": stage_embed,
    "segment": stage_segment,
    "outline": stage_outline,
    "eval": stage_eval,
}

# Errors that mean bad inputs rather than a failure while computing.
VALIDATION_ERRORS = (
    ConfigError,
    MissingArtifact,
    ParseError,
    SchemaError,
    OrderError,
    InvalidPattern,
)


def run_stage(stage: str, config: PipelineConfig) -> int:
    """Run one stage (or 'all'); returns a process exit code."""
    try:
        if stage == "all":
            for name in STAGES:
                if name == "eval" and not config["paths"]["references"]:
                    print("eval: skipped (no references configured)")
                    continue
                STAGE_FUNCS[name](config)
        else:
            STAGE_FUNCS[stage](config)
    except VALIDATION_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except PlotlineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - exit-code contract over traceback
        print(f"error: {exc!r}", file=sys.stderr)
        return 2
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="plotline",
        description="Chapter-graph plot segmentation and outline pipeline.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="pipeline config JSON")
    common.add_argument("--threads", type=int, help="worker threads for graph building")
    common.add_argument("--seed", type=int, help="master seed (overrides config)")
    common.add_argument(
        "--set", action="append", default=[], metavar="KEY=VALUE",
        help="override a config value, e.g. --set boundary.beta=1.2",
    )

    for stage in STAGES + ("all",):
        sub.add_parser(stage, parents=[common], help=f"run the {stage} stage")

    config_cmd = sub.add_parser("config", help="config utilities")
    config_sub = config_cmd.add_subparsers(dest="config_command", required=True)
    config_sub.add_parser("validate", parents=[common], help="check a config file")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args.config, args.set, args.seed, args.threads)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    if args.command == "config":
        problems = validate_config(config)
        for p in problems:
            print(f"error: {p}", file=sys.stderr)
        if problems:
            return 1
        print("config OK")
        return 0

    problems = validate_config(config, check_inputs=args.command in ("split", "all"))
    if problems:
        for p in problems:
            print(f"error: {p}", file=sys.stderr)
        return 1
    return run_stage(args.command, config)


if __name__ == "__main__":
    sys.exit(main())
