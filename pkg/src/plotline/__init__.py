"""Plot segmentation and outline generation for ultra-long books.

The pipeline splits a book into chapters, builds a per-chapter entity graph
from external linguistic annotations, trains a graph-attention autoencoder to
embed chapters, detects plot boundaries over the embedding sequence with an
adaptive threshold, and summarizes each segment into an outline.
"""

from .boundary import (
    BoundaryConfig,
    EmbeddingSequence,
    PlotSegment,
    calibrate_beta,
    detect_boundaries,
    embedding_unit,
    segments_from_labels,
    threshold,
)
from .corpus import (
    AnnotatedChapter,
    RawChapter,
    SplitResult,
    load_annotations,
    split_chapters,
    validate_corpus,
)
from .errors import PlotlineError
from .evaluation import (
    BoundaryReference,
    MetricReport,
    boundary_prf,
    checkeval_readability,
    emit_report,
    kendall_tau,
)
from .gat import (
    GatModel,
    TrainConfig,
    chapter_embedding,
    decode,
    encode,
    init_model,
    load_model,
    project_2d,
    reconstruction_loss,
    save_model,
    train,
)
from .graph import (
    ChapterGraph,
    CorpusStats,
    GraphConfig,
    HashEmbeddingProvider,
    TableEmbeddingProvider,
    build_chapter_graph,
    compute_tfidf,
    top_k_tfidf,
)
from .summarize import (
    LlmClient,
    LlmConfig,
    Outline,
    SegmentSummary,
    assemble_outline,
    compress_segment,
    fallback_summarize,
    summarize_segment,
)

__version__ = "0.1.0"

__all__ = [
    "AnnotatedChapter",
    "BoundaryConfig",
    "BoundaryReference",
    "ChapterGraph",
    "CorpusStats",
    "EmbeddingSequence",
    "GatModel",
    "GraphConfig",
    "HashEmbeddingProvider",
    "LlmClient",
    "LlmConfig",
    "MetricReport",
    "Outline",
    "PlotSegment",
    "PlotlineError",
    "RawChapter",
    "SegmentSummary",
    "SplitResult",
    "TableEmbeddingProvider",
    "TrainConfig",
    "assemble_outline",
    "boundary_prf",
    "build_chapter_graph",
    "calibrate_beta",
    "chapter_embedding",
    "checkeval_readability",
    "compress_segment",
    "compute_tfidf",
    "decode",
    "detect_boundaries",
    "embedding_unit",
    "emit_report",
    "encode",
    "fallback_summarize",
    "init_model",
    "kendall_tau",
    "load_annotations",
    "load_model",
    "project_2d",
    "reconstruction_loss",
    "save_model",
    "segments_from_labels",
    "split_chapters",
    "summarize_segment",
    "threshold",
    "top_k_tfidf",
    "train",
    "validate_corpus",
    "__version__",
]
