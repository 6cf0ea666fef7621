import random

import pytest

from plotline.boundary import PlotSegment
from plotline.errors import (
    AuthFailure,
    MalformedResponse,
    MissingSegment,
    RateLimited,
    Timeout,
)
from plotline.graph import compute_tfidf
from plotline.summarize import (
    BACKOFF_BASE_SECONDS,
    BACKOFF_FACTOR,
    BACKOFF_JITTER_SECONDS,
    LlmClient,
    LlmConfig,
    SegmentSummary,
    _requests_transport,
    assemble_outline,
    compress_segment,
    fallback_summarize,
    load_template,
    outline_json,
    outline_markdown,
    parse_summary_response,
    range_text,
    render_prompt,
    sentence_text,
    summarize_all,
    summarize_segment,
    write_outline,
)

from conftest import make_chapter, make_sentence


def body_with(content):
    return {"choices": [{"message": {"content": content}}]}


class ScriptedTransport:
    """Yields queued outcomes; exceptions raise, dicts return."""

    def __init__(self, outcomes):
        self.outcomes = list(outcomes)
        self.calls = []

    def __call__(self, url, headers, payload, timeout):
        self.calls.append((url, dict(headers), payload, timeout))
        outcome = self.outcomes.pop(0)
        if isinstance(outcome, Exception):
            raise outcome
        return outcome


def make_client(outcomes, **config_kwargs):
    transport = ScriptedTransport(outcomes)
    sleeps = []
    client = LlmClient(
        LlmConfig(**config_kwargs),
        transport=transport,
        sleep=sleeps.append,
        rng=random.Random(42),
    )
    return client, transport, sleeps


# --- client wire format ---------------------------------------------------------

def test_complete_sends_chat_payload(monkeypatch):
    monkeypatch.delenv("PLOTLINE_API_KEY", raising=False)
    client, transport, _ = make_client(
        [body_with("ok")],
        endpoint="http://host/v1/chat", model="m-1",
        max_tokens=99, temperature=0.7, timeout=11.0,
    )
    assert client.complete("hello") == "ok"
    url, headers, payload, timeout = transport.calls[0]
    assert url == "http://host/v1/chat"
    assert timeout == 11.0
    assert headers == {"Content-Type": "application/json"}
    assert payload == {
        "model": "m-1",
        "messages": [{"role": "user", "content": "hello"}],
        "max_tokens": 99,
        "temperature": 0.7,
    }


def test_complete_bearer_header_from_env(monkeypatch):
    monkeypatch.setenv("PLOTLINE_API_KEY", "sekret")
    client, transport, _ = make_client([body_with("ok")])
    client.complete("hi")
    assert transport.calls[0][1]["Authorization"] == "Bearer sekret"


def test_complete_custom_key_env(monkeypatch):
    monkeypatch.setenv("OTHER_KEY", "k2")
    client, transport, _ = make_client([body_with("ok")], api_key_env="OTHER_KEY")
    client.complete("hi")
    assert transport.calls[0][1]["Authorization"] == "Bearer k2"


# --- retry behavior ----------------------------------------------------------------

def test_transient_errors_retry_with_backoff():
    client, transport, sleeps = make_client(
        [Timeout("t"), RateLimited("r"), body_with("done")], max_retries=3,
    )
    assert client.complete("p") == "done"
    assert len(transport.calls) == 3
    ref = random.Random(42)
    expected = [
        BACKOFF_BASE_SECONDS * BACKOFF_FACTOR ** attempt
        + ref.uniform(0.0, BACKOFF_JITTER_SECONDS)
        for attempt in range(2)
    ]
    assert sleeps == pytest.approx(expected)


def test_retries_exhausted_reraises():
    client, transport, sleeps = make_client([Timeout("t")] * 3, max_retries=2)
    with pytest.raises(Timeout):
        client.complete("p")
    assert len(transport.calls) == 3
    assert len(sleeps) == 2


def test_zero_retries_means_single_attempt():
    client, transport, sleeps = make_client([RateLimited("r")], max_retries=0)
    with pytest.raises(RateLimited):
        client.complete("p")
    assert len(transport.calls) == 1
    assert sleeps == []


@pytest.mark.parametrize("error", [AuthFailure("401"), MalformedResponse("bad")])
def test_fatal_errors_never_retry(error):
    client, transport, sleeps = make_client([error, body_with("never")], max_retries=5)
    with pytest.raises(type(error)):
        client.complete("p")
    assert len(transport.calls) == 1
    assert sleeps == []


@pytest.mark.parametrize("body", [
    {},
    {"choices": []},
    {"choices": [{"message": {}}]},
    {"choices": [{"message": {"content": 42}}]},
    {"choices": "nope"},
])
def test_malformed_bodies_rejected(body):
    client, _, _ = make_client([body])
    with pytest.raises(MalformedResponse):
        client.complete("p")


def test_config_validation():
    with pytest.raises(ValueError):
        LlmConfig(max_retries=-1)
    with pytest.raises(ValueError):
        LlmConfig(timeout=0)
    with pytest.raises(ValueError):
        LlmConfig(max_concurrent_requests=0)


# --- default transport --------------------------------------------------------------

class FakeResponse:
    def __init__(self, status_code, body=None, text=""):
        self.status_code = status_code
        self._body = body
        self.text = text

    def json(self):
        if self._body is None:
            raise ValueError("not json")
        return self._body


def test_requests_transport_status_mapping(monkeypatch):
    import requests

    cases = [
        (FakeResponse(200, body_with("x")), None),
        (FakeResponse(401), AuthFailure),
        (FakeResponse(403), AuthFailure),
        (FakeResponse(429), RateLimited),
        (FakeResponse(503), RateLimited),
        (FakeResponse(404, text="gone"), MalformedResponse),
        (FakeResponse(200, body=None), MalformedResponse),
    ]
    for response, expected in cases:
        monkeypatch.setattr(requests, "post", lambda *a, r=response, **k: r)
        if expected is None:
            assert _requests_transport("u", {}, {}, 1.0) == body_with("x")
        else:
            with pytest.raises(expected):
                _requests_transport("u", {}, {}, 1.0)


def test_requests_transport_network_failures(monkeypatch):
    import requests

    def raise_timeout(*a, **k):
        raise requests.Timeout("slow")

    def raise_connection(*a, **k):
        raise requests.ConnectionError("refused")

    monkeypatch.setattr(requests, "post", raise_timeout)
    with pytest.raises(Timeout):
        _requests_transport("u", {}, {}, 1.0)
    monkeypatch.setattr(requests, "post", raise_connection)
    with pytest.raises(Timeout):
        _requests_transport("u", {}, {}, 1.0)


# --- text assembly --------------------------------------------------------------------

def test_sentence_text_cjk_no_spaces():
    sent = make_sentence(["他", "见", "了", "山"], poses=["r", "v", "u", "n"])
    assert sentence_text(sent) == "他见了山"


def test_sentence_text_latin_spacing():
    sent = make_sentence(["He", "saw", "it", ",", "then", "left", "."],
                         poses=["PRP"] * 7)
    assert sentence_text(sent) == "He saw it, then left."


def test_sentence_text_mixed_scripts():
    sent = make_sentence(["他", "说", "hello", "world"], poses=["r", "v", "x", "x"])
    assert sentence_text(sent) == "他说hello world"


def test_range_text():
    assert range_text(4, 4) == "chapter 4"
    assert range_text(4, 9) == "chapters 4-9"


# --- compression ------------------------------------------------------------------------

def _segment_corpus():
    """Two chapters; 甲 dominates chapter 1's tf-idf, 丙 chapter 2's."""
    c1 = make_chapter("b", 1, [
        make_sentence(["甲", "见", "乙"], poses=["nh", "v", "nh"],
                      entities=[(0, 1, "PER"), (2, 3, "PER")]),
        make_sentence(["路", "很", "长"], poses=["n", "d", "a"]),
        make_sentence(["甲", "走", "了"], poses=["nh", "v", "u"],
                      entities=[(0, 1, "PER")]),
    ])
    c2 = make_chapter("b", 2, [
        make_sentence(["丙", "来", "了"], poses=["nh", "v", "u"],
                      entities=[(0, 1, "PER")]),
        make_sentence(["雨", "停", "了"], poses=["n", "v", "u"]),
    ])
    return [c1, c2]


def test_compress_under_budget_passes_through():
    chapters = _segment_corpus()
    tfidf = compute_tfidf(chapters)
    out = compress_segment(chapters, tfidf, budget_tokens=1000)
    assert out == (
        "[Chapter 1]\n甲见乙\n路很长\n甲走了\n\n[Chapter 2]\n丙来了\n雨停了"
    )


def test_compress_over_budget_keeps_top_sentences_in_doc_order():
    chapters = _segment_corpus()
    tfidf = compute_tfidf(chapters)
    out = compress_segment(chapters, tfidf, budget_tokens=9, chars_per_token=2)
    assert len(out) <= 18
    assert "[Chapter 1]" in out
    # entity-free filler is the first sentence dropped
    assert "路很长" not in out


def test_compress_respects_budget(rng):
    chapters = _segment_corpus()
    tfidf = compute_tfidf(chapters)
    for budget in (1, 2, 5, 10, 20, 50):
        out = compress_segment(chapters, tfidf, budget, chars_per_token=2)
        assert len(out) <= budget * 2


def test_compress_rejects_bad_budget():
    with pytest.raises(ValueError):
        compress_segment([], compute_tfidf(_segment_corpus()), 0)


# --- prompting and parsing ------------------------------------------------------------------

def test_render_prompt_fills_placeholders():
    template = "B={book} R={range} T={text}"
    out = render_prompt(template, "bk", PlotSegment(1, 2, 5), "body")
    assert out == "B=bk R=chapters 2-5 T=body"


def test_render_prompt_missing_placeholder():
    with pytest.raises(ValueError):
        render_prompt("only {book} and {text}", "bk", PlotSegment(1, 1, 1), "x")


def test_templates_load_with_required_placeholders():
    summarize = load_template("summarize")
    for ph in ("{book}", "{range}", "{text}"):
        assert ph in summarize
    checkeval = load_template("checkeval")
    assert "{outline}" in checkeval and "{criterion}" in checkeval
    synopsis = load_template("synopsis")
    assert "{book}" in synopsis and "{text}" in synopsis


@pytest.mark.parametrize("response,want", [
    ("TITLE: 风起\n正文内容。", ("风起", "正文内容。", False)),
    ("title: lower\nbody", ("lower", "body", False)),
    ("\n  TITLE: spaced \nrest", ("spaced", "rest", False)),
    ("no marker at all, just prose that runs on",
     ("no marker at all, ju", "no marker at all, just prose that runs on", True)),
    ("TITLE:\nempty title falls back",
     ("TITLE:\nempty title f", "TITLE:\nempty title falls back", True)),
    ("", ("(untitled)", "", True)),
])
def test_parse_summary_response(response, want):
    assert parse_summary_response(response) == want


def test_summarize_segment_builds_summary():
    client, transport, _ = make_client([body_with("TITLE: 相遇\n两人相见。")])
    segment = PlotSegment(2, 3, 6)
    out = summarize_segment(client, segment, "text", load_template("summarize"), "bk")
    assert out == SegmentSummary(2, "相遇", "两人相见。", "llm", (3, 6), False)
    prompt = transport.calls[0][2]["messages"][0]["content"]
    assert "bk" in prompt and "chapters 3-6" in prompt and "text" in prompt


# --- fallback ------------------------------------------------------------------------------

def test_fallback_summary_deterministic_and_ranked():
    chapters = _segment_corpus()
    tfidf = compute_tfidf(chapters)
    segment = PlotSegment(1, 1, 2)
    s1 = fallback_summarize(segment, chapters, tfidf)
    s2 = fallback_summarize(segment, chapters, tfidf)
    assert s1 == s2
    assert s1.source == "fallback"
    assert s1.chapter_range == (1, 2)
    # title joins the two highest-scoring entities
    assert " / " in s1.title
    parts = s1.title.split(" / ")
    assert set(parts) <= {"甲", "乙", "丙"}
    # summary keeps document order and drops the entity-free filler
    lines = s1.summary.splitlines()
    assert len(lines) == 3
    assert lines == ["甲见乙", "甲走了", "丙来了"]


def test_fallback_degenerate_no_entities():
    ch = make_chapter("b", 1, [make_sentence(["雨", "停"], poses=["n", "v"])])
    tfidf = compute_tfidf([ch])
    out = fallback_summarize(PlotSegment(1, 1, 1), [ch], tfidf)
    assert out.title == "Chapter 1"
    assert out.summary == "雨停"
    multi = fallback_summarize(PlotSegment(1, 1, 3), [ch], tfidf)
    assert multi.title == "Chapters 1-3"


# --- summarize_all -----------------------------------------------------------------------------

def _two_segments():
    return [PlotSegment(1, 1, 1), PlotSegment(2, 2, 2)]


def test_summarize_all_offline():
    chapters = _segment_corpus()
    tfidf = compute_tfidf(chapters)
    out = summarize_all(_two_segments(), chapters, tfidf, "b")
    assert [s.source for s in out] == ["fallback", "fallback"]
    assert [s.segment_index for s in out] == [1, 2]


def test_summarize_all_env_kill_switch(monkeypatch):
    monkeypatch.setenv("PLOTLINE_NO_NETWORK", "1")
    chapters = _segment_corpus()
    tfidf = compute_tfidf(chapters)
    client, transport, _ = make_client([body_with("TITLE: x\ny")] * 2)
    out = summarize_all(_two_segments(), chapters, tfidf, "b", llm=client)
    assert [s.source for s in out] == ["fallback", "fallback"]
    assert transport.calls == []


def test_summarize_all_llm_with_per_segment_fallback(monkeypatch):
    monkeypatch.delenv("PLOTLINE_NO_NETWORK", raising=False)
    chapters = _segment_corpus()
    tfidf = compute_tfidf(chapters)
    client, _, _ = make_client(
        [body_with("TITLE: 首段\n内容一。"), AuthFailure("401")], max_retries=0,
    )
    out = summarize_all(_two_segments(), chapters, tfidf, "b", llm=client)
    assert [s.source for s in out] == ["llm", "fallback"]
    assert out[0].title == "首段"


# --- outline ------------------------------------------------------------------------------------

def _summaries():
    return [
        SegmentSummary(2, "乙段", "乙情节。", "fallback", (4, 6)),
        SegmentSummary(1, "甲段", "甲情节。", "fallback", (1, 3)),
    ]


def test_assemble_outline_orders_and_stamps(monkeypatch):
    monkeypatch.setenv("SOURCE_DATE_EPOCH", "0")
    outline = assemble_outline("bk", _summaries(), model="m", config_hash="abc123")
    assert [s.segment_index for s in outline.segments] == [1, 2]
    assert outline.timestamp == "1970-01-01T00:00:00Z"
    assert outline.model == "m"
    assert outline.preface is None


@pytest.mark.parametrize("indices", [(2, 3), (1, 3), (1, 1)])
def test_assemble_outline_rejects_gapped_segments(indices):
    summaries = [
        SegmentSummary(i, f"t{i}", "s", "fallback", (1, 2)) for i in indices
    ]
    with pytest.raises(MissingSegment):
        assemble_outline("bk", summaries)


def test_assemble_outline_global_pass():
    client, transport, _ = make_client([body_with("TITLE: 全书\n总括。")])
    outline = assemble_outline("bk", _summaries(), global_pass=client)
    assert outline.preface.title == "全书"
    assert outline.preface.summary == "总括。"
    assert outline.preface.chapter_range == (1, 6)
    prompt = transport.calls[0][2]["messages"][0]["content"]
    assert "甲段: 甲情节。" in prompt and "乙段: 乙情节。" in prompt


def test_outline_markdown_layout(monkeypatch):
    monkeypatch.setenv("SOURCE_DATE_EPOCH", "86400")
    outline = assemble_outline("书名", _summaries(), model="m", config_hash="h1")
    md = outline_markdown(outline)
    lines = md.splitlines()
    assert lines[0] == "# 书名"
    assert lines[2] == "Generated 1970-01-02T00:00:00Z by m (config h1)"
    assert "## 1. 甲段 (chapters 1-3)" in lines
    assert "## 2. 乙段 (chapters 4-6)" in lines
    assert md.index("甲段") < md.index("乙段")


def test_outline_json_round_trip(monkeypatch):
    import json

    monkeypatch.setenv("SOURCE_DATE_EPOCH", "0")
    outline = assemble_outline("书", _summaries(), model="m", config_hash="h")
    raw = outline_json(outline)
    assert raw.endswith("\n")
    assert "书" in raw  # CJK not escaped
    record = json.loads(raw)
    assert record["book_id"] == "书"
    assert record["metadata"] == {
        "model": "m", "config_hash": "h", "timestamp": "1970-01-01T00:00:00Z",
    }
    assert record["preface"] is None
    assert [s["segment_index"] for s in record["segments"]] == [1, 2]
    assert record["segments"][0] == {
        "segment_index": 1, "title": "甲段", "summary": "甲情节。",
        "source": "fallback", "start_chapter": 1, "end_chapter": 3,
        "parse_fallback": False,
    }


def test_write_outline(tmp_path, monkeypatch):
    monkeypatch.setenv("SOURCE_DATE_EPOCH", "0")
    outline = assemble_outline("bk", _summaries())
    md, js = tmp_path / "o.md", tmp_path / "o.json"
    write_outline(outline, md, js)
    assert md.read_text(encoding="utf-8").startswith("# bk")
    assert js.read_text(encoding="utf-8").startswith("{")
