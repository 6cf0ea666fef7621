"""Chapter splitting and ingestion of external linguistic annotations.

Raw book text is split on line-anchored heading patterns. Token/POS/entity/
dependency annotations are produced by an external analyzer and ingested
from a JSONL file (one chapter record per line); this module never runs a
segmenter or parser itself.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .errors import InvalidPattern, OrderError, ParseError, SchemaError

# Line-anchored so mid-sentence mentions ("see Chapter 3") never split.
DEFAULT_HEADING_PATTERNS = (
    r"^第[0-9０-９零〇一二两三四五六七八九十百千万]+[章回卷节].*$",
    r"^(?:Chapter|CHAPTER)\s+[0-9]+.*$",
)

SYNTHETIC_TITLE = "(whole text)"


@dataclass
class RawChapter:
    book_id: str
    chapter_index: int  # 1-based, order of appearance
    title: str          # exact matched heading text; "" for the whole-text fallback
    body: str           # raw span from the end of the heading to the next heading

    @property
    def display_title(self) -> str:
        return self.title if self.title else SYNTHETIC_TITLE


@dataclass
class SplitResult:
    book_id: str
    preamble: str
    chapters: list[RawChapter]

    def reconstruct(self) -> str:
        """Byte-exact inverse of split_chapters."""
        return self.preamble + "".join(c.title + c.body for c in self.chapters)


@dataclass
class Token:
    text: str
    pos: str
    head: int    # 0 = root, otherwise 1-based index into the same sentence
    deprel: str


@dataclass
class Entity:
    start: int   # token index, inclusive
    end: int     # token index, exclusive
    label: str


@dataclass
class Sentence:
    tokens: list[Token]
    entities: list[Entity]


@dataclass
class AnnotatedChapter:
    book_id: str
    chapter_index: int
    sentences: list[Sentence]
    raw_text: str

    @property
    def token_count(self) -> int:
        return sum(len(s.tokens) for s in self.sentences)


def compile_patterns(patterns: Sequence[str] | None = None) -> re.Pattern:
    """Combine heading patterns into one multiline alternation."""
    pats = list(patterns) if patterns is not None else list(DEFAULT_HEADING_PATTERNS)
    if not pats:
        raise InvalidPattern("empty pattern list")
    try:
        return re.compile("|".join(f"(?:{p})" for p in pats), re.MULTILINE)
    except re.error as exc:
        raise InvalidPattern(str(exc)) from exc


def split_chapters(
    raw_text: str,
    patterns: Sequence[str] | None = None,
    book_id: str = "",
) -> SplitResult:
    """Split a book into chapters on heading lines.

    The preamble (text before the first heading) is returned separately.
    When no heading matches, the whole text becomes a single chapter with
    an empty stored title (its display title is synthetic), which keeps
    ``SplitResult.reconstruct`` byte-exact for every input.
    """
    rx = compile_patterns(patterns)
    matches = list(rx.finditer(raw_text))
    if not matches:
        return SplitResult(
            book_id=book_id,
            preamble="",
            chapters=[RawChapter(book_id, 1, "", raw_text)],
        )
    preamble = raw_text[: matches[0].start()]
    chapters = []
    for i, m in enumerate(matches):
        body_end = matches[i + 1].start() if i + 1 < len(matches) else len(raw_text)
        chapters.append(
            RawChapter(
                book_id=book_id,
                chapter_index=i + 1,
                title=m.group(0),
                body=raw_text[m.end(): body_end],
            )
        )
    return SplitResult(book_id=book_id, preamble=preamble, chapters=chapters)


def _require(record: dict, key: str, kind, line_no: int):
    if key not in record:
        raise SchemaError(line_no, f"missing field '{key}'")
    value = record[key]
    if kind is int and isinstance(value, bool):
        raise SchemaError(line_no, f"field '{key}' must be an integer")
    if not isinstance(value, kind):
        raise SchemaError(line_no, f"field '{key}' has invalid type {type(value).__name__}")
    return value


def _parse_sentence(raw: dict, sent_idx: int, line_no: int) -> Sentence:
    if not isinstance(raw, dict):
        raise SchemaError(line_no, f"sentence {sent_idx} is not an object")
    raw_tokens = _require(raw, "tokens", list, line_no)
    tokens = []
    for t in raw_tokens:
        if not isinstance(t, dict):
            raise SchemaError(line_no, f"token in sentence {sent_idx} is not an object")
        tokens.append(
            Token(
                text=_require(t, "text", str, line_no),
                pos=_require(t, "pos", str, line_no),
                head=_require(t, "head", int, line_no),
                deprel=_require(t, "deprel", str, line_no),
            )
        )
    n = len(tokens)
    for t in tokens:
        if not 0 <= t.head <= n:
            raise SchemaError(line_no, f"head {t.head} out of range in sentence {sent_idx}")
    entities = []
    for e in _require(raw, "entities", list, line_no):
        if not isinstance(e, dict):
            raise SchemaError(line_no, f"entity in sentence {sent_idx} is not an object")
        ent = Entity(
            start=_require(e, "start", int, line_no),
            end=_require(e, "end", int, line_no),
            label=_require(e, "label", str, line_no),
        )
        if not (0 <= ent.start < ent.end <= n):
            raise SchemaError(line_no, f"entity span out of range in sentence {sent_idx}")
        entities.append(ent)
    return Sentence(tokens=tokens, entities=entities)


def load_annotations(path: str | Path) -> list[AnnotatedChapter]:
    """Read an annotation JSONL file, validating schema and record order."""
    chapters: list[AnnotatedChapter] = []
    prev_key: tuple[str, int] | None = None
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(line_no, exc.msg) from exc
            if not isinstance(record, dict):
                raise SchemaError(line_no, "record is not an object")
            book_id = _require(record, "book_id", str, line_no)
            chapter_index = _require(record, "chapter_index", int, line_no)
            raw_text = _require(record, "raw_text", str, line_no)
            raw_sentences = _require(record, "sentences", list, line_no)
            sentences = [
                _parse_sentence(s, i, line_no) for i, s in enumerate(raw_sentences)
            ]
            key = (book_id, chapter_index)
            if prev_key is not None and key <= prev_key:
                raise OrderError(
                    f"record {key} appears after {prev_key}; "
                    "records must be sorted by (book_id, chapter_index)"
                )
            if prev_key is not None and prev_key[0] == book_id:
                if chapter_index != prev_key[1] + 1:
                    raise OrderError(
                        f"book {book_id!r}: chapter_index jumps from "
                        f"{prev_key[1]} to {chapter_index}"
                    )
            elif chapter_index != 1:
                raise OrderError(f"book {book_id!r} starts at chapter_index {chapter_index}")
            prev_key = key
            chapters.append(AnnotatedChapter(book_id, chapter_index, sentences, raw_text))
    return chapters


@dataclass
class ChapterStats:
    book_id: str
    chapter_index: int
    tokens: int
    entities: int
    noun_entities: int


@dataclass
class ValidationReport:
    per_book: dict[str, list[ChapterStats]] = field(default_factory=dict)
    violations: list[str] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


def validate_corpus(
    chapters: Iterable[AnnotatedChapter],
    noun_tags: frozenset[str] | None = None,
) -> ValidationReport:
    """Collect per-chapter counts and invariant violations.

    Violations are data, not errors: a report with findings is still returned.
    """
    from .graph import DEFAULT_NOUN_TAGS, span_head_index

    tags = noun_tags if noun_tags is not None else DEFAULT_NOUN_TAGS
    report = ValidationReport()
    last_index: dict[str, int] = {}
    for ch in chapters:
        loc = f"{ch.book_id}#{ch.chapter_index}"
        n_tokens = ch.token_count
        n_entities = 0
        n_noun = 0
        for si, sent in enumerate(ch.sentences):
            n = len(sent.tokens)
            for t in sent.tokens:
                if not 0 <= t.head <= n:
                    report.violations.append(
                        f"{loc}: head {t.head} out of range in sentence {si}"
                    )
            for e in sent.entities:
                if not (0 <= e.start < e.end <= n):
                    report.violations.append(
                        f"{loc}: entity span [{e.start},{e.end}) out of range in sentence {si}"
                    )
                    continue
                n_entities += 1
                head_tok = span_head_index(sent, e)
                if sent.tokens[head_tok].pos in tags:
                    n_noun += 1
        if n_noun == 0:
            report.warnings.append(
                f"{loc}: no entity nodes; chapter graph will be a placeholder"
            )
        if ch.book_id in last_index and ch.chapter_index != last_index[ch.book_id] + 1:
            report.violations.append(
                f"{loc}: chapter_index not consecutive "
                f"(previous was {last_index[ch.book_id]})"
            )
        last_index[ch.book_id] = ch.chapter_index
        report.per_book.setdefault(ch.book_id, []).append(
            ChapterStats(ch.book_id, ch.chapter_index, n_tokens, n_entities, n_noun)
        )
    return report
