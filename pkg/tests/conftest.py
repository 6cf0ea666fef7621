"""Shared builders for corpus records and small random graphs."""

import json
from types import SimpleNamespace

import numpy as np
import pytest

from plotline.corpus import AnnotatedChapter, Entity, Sentence, Token


def make_token(text, pos="n", head=0, deprel="HED"):
    return Token(text=text, pos=pos, head=head, deprel=deprel)


def make_sentence(words, entities=(), poses=None, heads=None):
    """Chain-parse sentence: token i hangs off token i+1, last token is root."""
    n = len(words)
    poses = poses if poses is not None else ["n"] * n
    heads = heads if heads is not None else [i + 2 for i in range(n - 1)] + [0]
    tokens = [
        Token(text=w, pos=p, head=h, deprel="ATT" if h else "HED")
        for w, p, h in zip(words, poses, heads)
    ]
    ents = [Entity(start=s, end=e, label=lab) for s, e, lab in entities]
    return Sentence(tokens=tokens, entities=ents)


def make_chapter(book_id, chapter_index, sentences, raw_text=""):
    return AnnotatedChapter(
        book_id=book_id,
        chapter_index=chapter_index,
        sentences=list(sentences),
        raw_text=raw_text,
    )


def token_dict(text, pos="n", head=0, deprel="HED"):
    return {"text": text, "pos": pos, "head": head, "deprel": deprel}


def sentence_dict(tokens, entities=()):
    return {"tokens": list(tokens), "entities": list(entities)}


def chapter_record(book_id, chapter_index, sentences, raw_text=""):
    return {
        "book_id": book_id,
        "chapter_index": chapter_index,
        "sentences": list(sentences),
        "raw_text": raw_text,
    }


def write_jsonl(path, records):
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")
    return path


def random_graph(rng, n, d, p=0.4):
    """Feature matrix plus a symmetric 0/1 adjacency with zero diagonal."""
    features = rng.standard_normal((n, d))
    upper = rng.random((n, n)) < p
    adjacency = np.triu(upper, 1).astype(np.float64)
    adjacency = adjacency + adjacency.T
    return SimpleNamespace(features=features, adjacency=adjacency)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
