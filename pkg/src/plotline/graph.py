"""Per-chapter entity graphs: nodes, adjacency, and feature vectors.

Node features concatenate an entity-name embedding, a 10-slot tf-idf rank
vector, and the normalized chapter position. Adjacency links entities whose
mentions co-occur in a sentence within a short dependency-tree path.
"""

from __future__ import annotations

import hashlib
import math
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .corpus import AnnotatedChapter, Entity, Sentence
from .errors import MalformedTree, MissingEntry, ProviderFailure

# Noun-family POS tags: common noun, proper noun, place, person, organization
# (LTP-style lowercase tags plus Penn/UD equivalents so ingestion stays
# analyzer-agnostic).
DEFAULT_NOUN_TAGS = frozenset(
    {"n", "nh", "ns", "ni", "nz", "nl", "nd", "nt",
     "NN", "NNS", "NNP", "NNPS", "NOUN", "PROPN"}
)

DEFAULT_TOP_K = 10
DEFAULT_MAX_PATH_LEN = 2
DEFAULT_EMBEDDING_DIM = 32

PLACEHOLDER_SURFACE = "<no-entities>"


@dataclass
class EntityNode:
    surface: str
    mention_count: int
    token_locations: list[tuple[int, int, int]]  # (sentence_idx, start, end)


@dataclass
class ChapterGraph:
    book_id: str
    chapter_index: int
    nodes: list[EntityNode]
    features: np.ndarray   # (n, d) float64
    adjacency: np.ndarray  # (n, n) float64 in {0, 1}, symmetric, zero diagonal

    @property
    def n(self) -> int:
        return len(self.nodes)

    def to_record(self) -> dict:
        """Debug-export form: nodes, row-major features, upper-triangle edges."""
        edges = [
            [i, j]
            for i in range(self.n)
            for j in range(i + 1, self.n)
            if self.adjacency[i, j]
        ]
        return {
            "book_id": self.book_id,
            "chapter_index": self.chapter_index,
            "nodes": [
                {"surface": nd.surface, "mention_count": nd.mention_count}
                for nd in self.nodes
            ],
            "features": self.features.ravel().tolist(),
            "feature_dim": int(self.features.shape[1]),
            "adjacency": edges,
        }

    @classmethod
    def from_record(cls, record: dict) -> "ChapterGraph":
        n = len(record["nodes"])
        d = record["feature_dim"]
        features = np.asarray(record["features"], dtype=np.float64).reshape(n, d)
        adjacency = np.zeros((n, n), dtype=np.float64)
        for i, j in record["adjacency"]:
            adjacency[i, j] = adjacency[j, i] = 1.0
        nodes = [
            EntityNode(nd["surface"], nd["mention_count"], [])
            for nd in record["nodes"]
        ]
        return cls(record["book_id"], record["chapter_index"], nodes, features, adjacency)


def span_head_index(sentence: Sentence, entity: Entity) -> int:
    """Index of the span token whose syntactic head lies outside the span.

    Falls back to the first span token when the span is not a single
    dependency subtree.
    """
    for i in range(entity.start, entity.end):
        head = sentence.tokens[i].head  # 1-based; 0 = root
        if head == 0 or not (entity.start + 1 <= head <= entity.end):
            return i
    return entity.start


def select_entity_nodes(
    ch: AnnotatedChapter,
    noun_tags: frozenset[str] = DEFAULT_NOUN_TAGS,
) -> list[EntityNode]:
    """One node per distinct noun-headed entity surface, in first-appearance order."""
    nodes: dict[str, EntityNode] = {}
    for si, sent in enumerate(ch.sentences):
        for e in sent.entities:
            head_tok = span_head_index(sent, e)
            if sent.tokens[head_tok].pos not in noun_tags:
                continue
            surface = "".join(t.text for t in sent.tokens[e.start: e.end])
            if not surface:
                continue
            node = nodes.get(surface)
            if node is None:
                nodes[surface] = EntityNode(surface, 1, [(si, e.start, e.end)])
            else:
                node.mention_count += 1
                node.token_locations.append((si, e.start, e.end))
    return list(nodes.values())


def _check_tree(sentence: Sentence, sentence_index: int) -> None:
    # Every token must reach root 0 by following heads; a cycle never does.
    n = len(sentence.tokens)
    state = [0] * (n + 1)  # 0 unvisited, 1 on current path, 2 proven rooted
    state[0] = 2
    for start in range(1, n + 1):
        path = []
        node = start
        while state[node] == 0:
            state[node] = 1
            path.append(node)
            node = sentence.tokens[node - 1].head
        if state[node] == 1:
            raise MalformedTree(sentence_index)
        for p in path:
            state[p] = 2


def _token_distances(sentence: Sentence, sources: set[int]) -> dict[int, dict[int, int]]:
    """BFS hop counts over the undirected dependency tree from each source token."""
    n = len(sentence.tokens)
    neighbors: list[list[int]] = [[] for _ in range(n)]
    for i, tok in enumerate(sentence.tokens):
        if tok.head != 0:
            h = tok.head - 1
            neighbors[i].append(h)
            neighbors[h].append(i)
    out: dict[int, dict[int, int]] = {}
    for src in sources:
        dist = {src: 0}
        queue = deque([src])
        while queue:
            u = queue.popleft()
            for v in neighbors[u]:
                if v not in dist:
                    dist[v] = dist[u] + 1
                    queue.append(v)
        out[src] = dist
    return out


def build_adjacency(
    ch: AnnotatedChapter,
    nodes: list[EntityNode],
    max_path_len: int = DEFAULT_MAX_PATH_LEN,
) -> np.ndarray:
    """Symmetric 0/1 adjacency from same-sentence dependency paths.

    entry(i, j) = 1 iff some mention of node i and some mention of node j sit
    in one sentence with an undirected head-token path of length <= max_path_len.
    """
    n = len(nodes)
    adjacency = np.zeros((n, n), dtype=np.float64)
    # mentions per sentence: (node_idx, head_token_idx)
    by_sentence: dict[int, list[tuple[int, int]]] = {}
    for ni, node in enumerate(nodes):
        for si, start, end in node.token_locations:
            sent = ch.sentences[si]
            head_tok = span_head_index(sent, Entity(start, end, ""))
            by_sentence.setdefault(si, []).append((ni, head_tok))
    for si, mentions in by_sentence.items():
        if len(mentions) < 2:
            continue
        sent = ch.sentences[si]
        _check_tree(sent, si)
        dists = _token_distances(sent, {tok for _, tok in mentions})
        for a in range(len(mentions)):
            ni, ti = mentions[a]
            for b in range(a + 1, len(mentions)):
                nj, tj = mentions[b]
                if ni == nj:
                    continue
                d = dists[ti].get(tj)
                if d is not None and d <= max_path_len:
                    adjacency[ni, nj] = adjacency[nj, ni] = 1.0
    return adjacency


@dataclass
class TfidfTable:
    """tf-idf scores per (book_id, chapter_index, term).

    tf = raw mention count / chapter token count;
    idf = ln((1 + N) / (1 + df)) + 1 (smoothed, never zero).
    """
    scores: dict[tuple[str, int], dict[str, float]]
    doc_count: int
    doc_freq: dict[str, int]

    def score(self, book_id: str, chapter_index: int, term: str) -> float:
        return self.scores.get((book_id, chapter_index), {}).get(term, 0.0)

    def chapter_terms(self, book_id: str, chapter_index: int) -> dict[str, float]:
        return self.scores.get((book_id, chapter_index), {})


def entity_mentions(ch: AnnotatedChapter) -> dict[str, int]:
    """Mention counts per entity surface form (all entity spans, no POS filter)."""
    counts: dict[str, int] = {}
    for sent in ch.sentences:
        for e in sent.entities:
            surface = "".join(t.text for t in sent.tokens[e.start: e.end])
            if surface:
                counts[surface] = counts.get(surface, 0) + 1
    return counts


def compute_tfidf(corpus: list[AnnotatedChapter]) -> TfidfTable:
    """One corpus pass; chapters are the documents, entity surfaces the terms."""
    if not corpus:
        raise ValueError("corpus must be nonempty")
    n_docs = len(corpus)
    doc_freq: dict[str, int] = {}
    per_chapter: dict[tuple[str, int], dict[str, int]] = {}
    for ch in corpus:
        counts = entity_mentions(ch)
        per_chapter[(ch.book_id, ch.chapter_index)] = counts
        for term in counts:
            doc_freq[term] = doc_freq.get(term, 0) + 1
    scores: dict[tuple[str, int], dict[str, float]] = {}
    for ch in corpus:
        key = (ch.book_id, ch.chapter_index)
        total = ch.token_count
        chapter_scores = {}
        for term, count in per_chapter[key].items():
            tf = count / total if total else 0.0
            idf = math.log((1 + n_docs) / (1 + doc_freq[term])) + 1.0
            chapter_scores[term] = tf * idf
        scores[key] = chapter_scores
    return TfidfTable(scores=scores, doc_count=n_docs, doc_freq=doc_freq)


def top_k_tfidf(
    table: TfidfTable,
    book_id: str,
    chapter_index: int,
    k: int = DEFAULT_TOP_K,
) -> list[tuple[str, float]]:
    """Top-k chapter terms, score descending, ties lexicographically ascending."""
    if k < 1:
        raise ValueError("k must be >= 1")
    terms = table.chapter_terms(book_id, chapter_index)
    ranked = sorted(terms.items(), key=lambda item: (-item[1], item[0]))
    return ranked[:k]


class HashEmbeddingProvider:
    """Deterministic fallback: unit-norm vectors seeded by a stable surface hash.

    Identical across runs and platforms; no model download involved.
    """

    def __init__(self, dim: int = DEFAULT_EMBEDDING_DIM):
        if dim < 1:
            raise ValueError("dim must be >= 1")
        self.dim = dim

    def __call__(self, surface: str) -> np.ndarray:
        digest = hashlib.sha256(surface.encode("utf-8")).digest()
        seed = int.from_bytes(digest[:8], "little")
        rng = np.random.default_rng(seed)
        vec = rng.standard_normal(self.dim)
        norm = np.linalg.norm(vec)
        if norm == 0.0:  # pragma: no cover - astronomically unlikely
            vec[0] = 1.0
            norm = 1.0
        return vec / norm


class TableEmbeddingProvider:
    """Precomputed entity-name vectors keyed by surface form.

    File format: one `surface<TAB>v1 v2 ... v_de` line per entry. An optional
    hash fallback fills in missing surfaces at the table's dimension.
    """

    def __init__(self, vectors: dict[str, np.ndarray], fallback: bool = False):
        if not vectors:
            raise ValueError("embedding table is empty")
        dims = {v.shape[0] for v in vectors.values()}
        if len(dims) != 1:
            raise ValueError(f"inconsistent vector dimensions in table: {sorted(dims)}")
        self.vectors = vectors
        self.dim = dims.pop()
        self._fallback = HashEmbeddingProvider(self.dim) if fallback else None

    @classmethod
    def from_file(cls, path: str | Path, fallback: bool = False) -> "TableEmbeddingProvider":
        vectors: dict[str, np.ndarray] = {}
        with open(path, encoding="utf-8") as fh:
            for line_no, line in enumerate(fh, start=1):
                line = line.rstrip("\n")
                if not line:
                    continue
                surface, _, rest = line.partition("\t")
                if not rest:
                    raise ValueError(f"{path}:{line_no}: expected 'surface<TAB>values'")
                vectors[surface] = np.array([float(x) for x in rest.split()], dtype=np.float64)
        return cls(vectors, fallback=fallback)

    def __call__(self, surface: str) -> np.ndarray:
        vec = self.vectors.get(surface)
        if vec is not None:
            return vec
        if self._fallback is not None:
            return self._fallback(surface)
        raise MissingEntry(f"no embedding for surface {surface!r}")


def embed_entity(provider, surface: str) -> np.ndarray:
    """Resolve one entity-name vector through the provider seam."""
    return provider(surface)


def assemble_features(
    nodes: list[EntityNode],
    provider,
    topk: list[tuple[str, float]],
    chapter_index: int,
    total_chapters: int,
    k: int = DEFAULT_TOP_K,
) -> np.ndarray:
    """Rows: [entity embedding | k rank slots | normalized chapter position].

    A node ranked r-th in the chapter's top-k carries its score in slot r;
    all other slots stay zero.
    """
    rank = {term: i for i, (term, _) in enumerate(topk)}
    score = dict(topk)
    chapter_pos = chapter_index / total_chapters
    rows = []
    for node in nodes:
        try:
            emb = np.asarray(provider(node.surface), dtype=np.float64)
        except MissingEntry as exc:
            raise ProviderFailure(str(exc)) from exc
        slots = np.zeros(k, dtype=np.float64)
        if node.surface in rank:
            slots[rank[node.surface]] = score[node.surface]
        rows.append(np.concatenate([emb, slots, [chapter_pos]]))
    return np.vstack(rows)


@dataclass
class CorpusStats:
    tfidf: TfidfTable
    chapters_per_book: dict[str, int]

    def book_length(self, book_id: str) -> int:
        try:
            return self.chapters_per_book[book_id]
        except KeyError:
            raise ValueError(f"unknown book {book_id!r}") from None

    @classmethod
    def from_corpus(cls, corpus: list[AnnotatedChapter]) -> "CorpusStats":
        counts: dict[str, int] = {}
        for ch in corpus:
            counts[ch.book_id] = counts.get(ch.book_id, 0) + 1
        return cls(tfidf=compute_tfidf(corpus), chapters_per_book=counts)


@dataclass
class GraphConfig:
    max_path_len: int = DEFAULT_MAX_PATH_LEN
    top_k: int = DEFAULT_TOP_K
    embedding_dim: int = DEFAULT_EMBEDDING_DIM
    noun_tags: frozenset[str] = field(default_factory=lambda: DEFAULT_NOUN_TAGS)


def build_chapter_graph(
    ch: AnnotatedChapter,
    corpus_stats: CorpusStats,
    provider,
    config: GraphConfig | None = None,
) -> ChapterGraph:
    """Compose node selection, adjacency, top-k scores, and feature assembly.

    Chapters without noun entities yield a single placeholder node (zero
    embedding, zero slots, correct chapter position) so the book's chapter
    sequence stays index-aligned.
    """
    cfg = config or GraphConfig()
    nodes = select_entity_nodes(ch, cfg.noun_tags)
    total = corpus_stats.book_length(ch.book_id)
    chapter_pos = ch.chapter_index / total
    if not nodes:
        try:
            dim = provider.dim
        except AttributeError:
            dim = np.asarray(provider("")).shape[0]
        features = np.zeros((1, dim + cfg.top_k + 1), dtype=np.float64)
        features[0, -1] = chapter_pos
        return ChapterGraph(
            book_id=ch.book_id,
            chapter_index=ch.chapter_index,
            nodes=[EntityNode(PLACEHOLDER_SURFACE, 0, [])],
            features=features,
            adjacency=np.zeros((1, 1), dtype=np.float64),
        )
    adjacency = build_adjacency(ch, nodes, cfg.max_path_len)
    topk = top_k_tfidf(corpus_stats.tfidf, ch.book_id, ch.chapter_index, cfg.top_k)
    features = assemble_features(
        nodes, provider, topk, ch.chapter_index, total, cfg.top_k
    )
    return ChapterGraph(ch.book_id, ch.chapter_index, nodes, features, adjacency)
