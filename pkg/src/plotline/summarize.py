"""Segment summaries via a pluggable LLM client, plus an offline fallback.

The wire protocol is the common chat-completion shape: POST a JSON body
{"model", "messages", "max_tokens", "temperature"} and read
choices[0].message.content. Everything network-touching is injectable so the
whole module runs deterministically offline.
"""

from __future__ import annotations

import json
import os
import random
import threading
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from importlib import resources
from pathlib import Path

from .corpus import AnnotatedChapter, Sentence
from .errors import (
    AuthFailure,
    LlmError,
    MalformedResponse,
    MissingSegment,
    RateLimited,
    Timeout,
)
from .graph import TfidfTable
from .boundary import PlotSegment

DEFAULT_CHARS_PER_TOKEN = 2  # coarse proxy tuned for CJK text
DEFAULT_BUDGET_TOKENS = 1500
BACKOFF_BASE_SECONDS = 1.0
BACKOFF_FACTOR = 2.0
BACKOFF_JITTER_SECONDS = 0.5
NO_NETWORK_ENV = "PLOTLINE_NO_NETWORK"


@dataclass
class LlmConfig:
    endpoint: str = "http://localhost:8000/v1/chat/completions"
    model: str = "default"
    api_key_env: str = "PLOTLINE_API_KEY"
    max_tokens: int = 512
    temperature: float = 0.2
    timeout: float = 30.0
    max_retries: int = 3
    max_concurrent_requests: int = 4

    def __post_init__(self) -> None:
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")
        if self.timeout <= 0:
            raise ValueError("timeout must be > 0")
        if self.max_concurrent_requests < 1:
            raise ValueError("max_concurrent_requests must be >= 1")


@dataclass
class SegmentSummary:
    segment_index: int
    title: str
    summary: str
    source: str                    # "llm" | "fallback"
    chapter_range: tuple[int, int]
    parse_fallback: bool = False   # set when the LLM reply had no TITLE: line

    def __post_init__(self) -> None:
        if not self.title:
            raise ValueError("title must be nonempty")
        if self.source not in ("llm", "fallback"):
            raise ValueError(f"unknown source {self.source!r}")


@dataclass
class Outline:
    book_id: str
    segments: list[SegmentSummary]
    model: str = ""
    config_hash: str = ""
    timestamp: str = ""
    preface: SegmentSummary | None = None


def _requests_transport(url: str, headers: dict, payload: dict, timeout: float) -> dict:
    """Default HTTP transport. Connection failures count as timeouts so the
    retry loop treats them as transient."""
    import requests

    try:
        resp = requests.post(url, json=payload, headers=headers, timeout=timeout)
    except requests.Timeout as exc:
        raise Timeout(str(exc)) from exc
    except requests.RequestException as exc:
        raise Timeout(f"connection failed: {exc}") from exc
    if resp.status_code in (401, 403):
        raise AuthFailure(f"HTTP {resp.status_code}")
    if resp.status_code == 429 or resp.status_code >= 500:
        raise RateLimited(f"HTTP {resp.status_code}")
    if resp.status_code != 200:
        raise MalformedResponse(f"HTTP {resp.status_code}: {resp.text[:200]}")
    try:
        return resp.json()
    except ValueError as exc:
        raise MalformedResponse(f"response is not JSON: {exc}") from exc


class LlmClient:
    """Chat-completion client with bounded retries and bounded concurrency.

    transport(url, headers, payload, timeout) -> parsed JSON body; it raises
    the typed errors above. sleep and rng are injectable for tests.
    """

    def __init__(self, config: LlmConfig, transport=None, sleep=time.sleep, rng=None):
        self.config = config
        self._transport = transport if transport is not None else _requests_transport
        self._sleep = sleep
        self._rng = rng if rng is not None else random.Random()
        self._semaphore = threading.BoundedSemaphore(config.max_concurrent_requests)

    def complete(self, prompt: str) -> str:
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(self.config.api_key_env, "")
        if key:
            headers["Authorization"] = f"Bearer {key}"
        payload = {
            "model": self.config.model,
            "messages": [{"role": "user", "content": prompt}],
            "max_tokens": self.config.max_tokens,
            "temperature": self.config.temperature,
        }
        attempts = self.config.max_retries + 1
        with self._semaphore:
            for attempt in range(attempts):
                try:
                    body = self._transport(
                        self.config.endpoint, headers, payload, self.config.timeout
                    )
                except (Timeout, RateLimited):
                    if attempt + 1 == attempts:
                        raise
                    delay = BACKOFF_BASE_SECONDS * BACKOFF_FACTOR ** attempt
                    delay += self._rng.uniform(0.0, BACKOFF_JITTER_SECONDS)
                    self._sleep(delay)
                    continue
                return _extract_content(body)
        raise AssertionError("unreachable")


def _extract_content(body: dict) -> str:
    try:
        content = body["choices"][0]["message"]["content"]
    except (KeyError, IndexError, TypeError) as exc:
        raise MalformedResponse(f"missing choices[0].message.content: {body!r:.200}") from exc
    if not isinstance(content, str):
        raise MalformedResponse("message content is not a string")
    return content


def load_template(name: str) -> str:
    path = resources.files("plotline").joinpath("templates", f"{name}.txt")
    return path.read_text(encoding="utf-8")


def _is_cjk(char: str) -> bool:
    code = ord(char)
    return (
        0x3000 <= code <= 0x9FFF
        or 0xF900 <= code <= 0xFAFF
        or 0xFF00 <= code <= 0xFFEF
    )


_NO_SPACE_BEFORE = set(",.;:!?)]}»”’")


def sentence_text(sentence: Sentence) -> str:
    """Tokens joined for display: no space around CJK or before closing marks."""
    parts: list[str] = []
    for tok in sentence.tokens:
        if parts and tok.text and not _is_cjk(tok.text[0]) and tok.text[0] not in _NO_SPACE_BEFORE:
            prev = parts[-1]
            if prev and not _is_cjk(prev[-1]):
                parts.append(" ")
        parts.append(tok.text)
    return "".join(parts)


def _entity_surfaces(sentence: Sentence) -> list[str]:
    surfaces = []
    for e in sentence.entities:
        surface = "".join(t.text for t in sentence.tokens[e.start: e.end])
        if surface:
            surfaces.append(surface)
    return surfaces


def _sentence_score(sentence: Sentence, chapter_scores: dict[str, float]) -> float:
    return sum(chapter_scores.get(s, 0.0) for s in _entity_surfaces(sentence))


def _chapter_marker(ch: AnnotatedChapter) -> str:
    return f"[Chapter {ch.chapter_index}]"


def _chapter_text(ch: AnnotatedChapter) -> str:
    return "\n".join(sentence_text(s) for s in ch.sentences)


def range_text(start: int, end: int) -> str:
    return f"chapter {start}" if start == end else f"chapters {start}-{end}"


def compress_segment(
    chapters: list[AnnotatedChapter],
    tfidf: TfidfTable,
    budget_tokens: int,
    chars_per_token: int = DEFAULT_CHARS_PER_TOKEN,
) -> str:
    """Extractive compression to fit a prompt budget.

    Under budget the full text passes through. Over budget each chapter gets a
    share proportional to its length; within a chapter, sentences are ranked
    by summed tf-idf of the entities they contain and taken greedily until the
    share is spent, then emitted in document order under the chapter marker.
    """
    if budget_tokens <= 0:
        raise ValueError("budget_tokens must be > 0")
    budget_chars = budget_tokens * chars_per_token
    texts = [_chapter_text(ch) for ch in chapters]
    full = "\n\n".join(
        f"{_chapter_marker(ch)}\n{text}" if text else _chapter_marker(ch)
        for ch, text in zip(chapters, texts)
    )
    if len(full) <= budget_chars:
        return full

    total_chars = sum(len(t) for t in texts) or 1
    blocks = []
    for ch, text in zip(chapters, texts):
        share = int(budget_chars * len(text) / total_chars)
        marker = _chapter_marker(ch)
        # marker line plus the "\n\n" joining this block to the next
        running = len(marker) + 2
        scores = tfidf.chapter_terms(ch.book_id, ch.chapter_index)
        ranked = sorted(
            range(len(ch.sentences)),
            key=lambda i: (-_sentence_score(ch.sentences[i], scores), i),
        )
        keep = set()
        for i in ranked:
            cost = len(sentence_text(ch.sentences[i])) + 1
            if running + cost > share:
                continue
            keep.add(i)
            running += cost
        lines = [sentence_text(ch.sentences[i]) for i in sorted(keep)]
        blocks.append("\n".join([marker] + lines))
    out = "\n\n".join(blocks)
    # markers alone can exceed a tiny budget; hard-clip as a last resort
    return out[:budget_chars]


REQUIRED_PLACEHOLDERS = ("{book}", "{range}", "{text}")
PARSE_FALLBACK_TITLE_CHARS = 20


def render_prompt(template: str, book_id: str, segment: PlotSegment, text: str) -> str:
    for ph in REQUIRED_PLACEHOLDERS:
        if ph not in template:
            raise ValueError(f"template missing placeholder {ph}")
    return template.format(
        book=book_id,
        range=range_text(segment.start_chapter, segment.end_chapter),
        text=text,
    )


def parse_summary_response(response: str) -> tuple[str, str, bool]:
    """(title, summary, parse_fallback) from a TITLE:-formatted reply."""
    lines = response.splitlines()
    for i, line in enumerate(lines):
        stripped = line.strip()
        if stripped.upper().startswith("TITLE:"):
            title = stripped[len("TITLE:"):].strip()
            summary = "\n".join(lines[i + 1:]).strip()
            if title:
                return title, summary, False
            break
    text = response.strip()
    title = text[:PARSE_FALLBACK_TITLE_CHARS] or "(untitled)"
    return title, text, True


def summarize_segment(
    llm: LlmClient,
    segment: PlotSegment,
    compressed_text: str,
    template: str,
    book_id: str = "",
) -> SegmentSummary:
    prompt = render_prompt(template, book_id, segment, compressed_text)
    response = llm.complete(prompt)
    title, summary, flagged = parse_summary_response(response)
    return SegmentSummary(
        segment_index=segment.segment_index,
        title=title,
        summary=summary,
        source="llm",
        chapter_range=(segment.start_chapter, segment.end_chapter),
        parse_fallback=flagged,
    )


def fallback_summarize(
    segment: PlotSegment,
    chapters: list[AnnotatedChapter],
    tfidf: TfidfTable,
) -> SegmentSummary:
    """Deterministic offline summary.

    Title = top-2 segment entities by summed tf-idf; summary = top-3 sentences
    by entity tf-idf, in document order. Entity-free segments degrade to the
    chapter range and the first sentence.
    """
    entity_totals: dict[str, float] = {}
    scored_sentences = []  # (score, chapter_pos, sentence_pos, text)
    for pos, ch in enumerate(chapters):
        scores = tfidf.chapter_terms(ch.book_id, ch.chapter_index)
        for sent_pos, sent in enumerate(ch.sentences):
            for surface in _entity_surfaces(sent):
                weight = scores.get(surface, 0.0)
                entity_totals[surface] = entity_totals.get(surface, 0.0) + weight
            scored_sentences.append(
                (_sentence_score(sent, scores), pos, sent_pos, sentence_text(sent))
            )

    crange = (segment.start_chapter, segment.end_chapter)
    if entity_totals:
        top = sorted(entity_totals.items(), key=lambda kv: (-kv[1], kv[0]))[:2]
        title = " / ".join(surface for surface, _ in top)
        best = sorted(scored_sentences, key=lambda row: (-row[0], row[1], row[2]))[:3]
        summary = "\n".join(row[3] for row in sorted(best, key=lambda row: row[1:3]))
    else:
        start, end = crange
        title = f"Chapters {start}-{end}" if start != end else f"Chapter {start}"
        summary = scored_sentences[0][3] if scored_sentences else ""
    return SegmentSummary(
        segment_index=segment.segment_index,
        title=title,
        summary=summary,
        source="fallback",
        chapter_range=crange,
    )


def summarize_all(
    segments: list[PlotSegment],
    chapters: list[AnnotatedChapter],
    tfidf: TfidfTable,
    book_id: str,
    llm: LlmClient | None = None,
    template: str | None = None,
    budget_tokens: int = DEFAULT_BUDGET_TOKENS,
    chars_per_token: int = DEFAULT_CHARS_PER_TOKEN,
) -> list[SegmentSummary]:
    """One summary per segment; LLM path falls back per segment on any client
    error, and llm=None (or PLOTLINE_NO_NETWORK=1) skips the network entirely."""
    if os.environ.get(NO_NETWORK_ENV) == "1":
        llm = None
    if llm is not None and template is None:
        template = load_template("summarize")
    by_index = {ch.chapter_index: ch for ch in chapters}
    summaries = []
    for segment in segments:
        members = [
            by_index[i]
            for i in range(segment.start_chapter, segment.end_chapter + 1)
            if i in by_index
        ]
        if llm is None:
            summaries.append(fallback_summarize(segment, members, tfidf))
            continue
        text = compress_segment(members, tfidf, budget_tokens, chars_per_token)
        try:
            summaries.append(summarize_segment(llm, segment, text, template, book_id))
        except LlmError:
            summaries.append(fallback_summarize(segment, members, tfidf))
    return summaries


def _timestamp() -> str:
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    moment = int(epoch) if epoch else int(time.time())
    return datetime.fromtimestamp(moment, tz=timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def assemble_outline(
    book_id: str,
    summaries: list[SegmentSummary],
    model: str = "",
    config_hash: str = "",
    global_pass: LlmClient | None = None,
) -> Outline:
    """Order the summaries into an Outline; segment indices must be 1..k.

    With global_pass set, one extra LLM call rewrites the concatenated
    summaries into a synopsis stored as the outline preface.
    """
    ordered = sorted(summaries, key=lambda s: s.segment_index)
    for want, summary in enumerate(ordered, start=1):
        if summary.segment_index != want:
            raise MissingSegment(f"expected segment {want}, got {summary.segment_index}")
    preface = None
    if global_pass is not None and ordered:
        joined = "\n\n".join(f"{s.title}: {s.summary}" for s in ordered)
        template = load_template("synopsis")
        response = global_pass.complete(template.format(book=book_id, text=joined))
        title, text, flagged = parse_summary_response(response)
        preface = SegmentSummary(
            segment_index=0,
            title=title,
            summary=text,
            source="llm",
            chapter_range=(ordered[0].chapter_range[0], ordered[-1].chapter_range[1]),
            parse_fallback=flagged,
        )
    return Outline(
        book_id=book_id,
        segments=ordered,
        model=model,
        config_hash=config_hash,
        timestamp=_timestamp(),
        preface=preface,
    )


def outline_markdown(outline: Outline) -> str:
    lines = [f"# {outline.book_id}", ""]
    meta = f"Generated {outline.timestamp}"
    if outline.model:
        meta += f" by {outline.model}"
    if outline.config_hash:
        meta += f" (config {outline.config_hash})"
    lines += [meta, ""]
    if outline.preface is not None:
        lines += [f"## {outline.preface.title}", "", outline.preface.summary, ""]
    for s in outline.segments:
        start, end = s.chapter_range
        lines += [
            f"## {s.segment_index}. {s.title} ({range_text(start, end)})",
            "",
            s.summary,
            "",
        ]
    return "\n".join(lines)


def _summary_record(s: SegmentSummary) -> dict:
    return {
        "segment_index": s.segment_index,
        "title": s.title,
        "summary": s.summary,
        "source": s.source,
        "start_chapter": s.chapter_range[0],
        "end_chapter": s.chapter_range[1],
        "parse_fallback": s.parse_fallback,
    }


def outline_json(outline: Outline) -> str:
    record = {
        "book_id": outline.book_id,
        "metadata": {
            "model": outline.model,
            "config_hash": outline.config_hash,
            "timestamp": outline.timestamp,
        },
        "preface": None if outline.preface is None else _summary_record(outline.preface),
        "segments": [_summary_record(s) for s in outline.segments],
    }
    return json.dumps(record, ensure_ascii=False, indent=2) + "\n"


def write_outline(outline: Outline, md_path: str | Path, json_path: str | Path) -> None:
    Path(md_path).write_text(outline_markdown(outline), encoding="utf-8")
    Path(json_path).write_text(outline_json(outline), encoding="utf-8")
