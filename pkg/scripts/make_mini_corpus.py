#!/usr/bin/env python3
"""Regenerate the bundled synthetic mini-corpus under data/mini_corpus/.

Three short books with chapter headings, LTP-style annotations, reference
boundaries, and a pipeline config. Each book runs through three episodes
that differ in both character cast and interaction topology (star, clique,
sparse chain), so chapter graphs cluster by episode and the reference
boundaries are recoverable from the embedding sequence. Output is
deterministic.
"""

from __future__ import annotations

import json
import random
from pathlib import Path

OUT_DIR = Path(__file__).resolve().parent.parent / "data" / "mini_corpus"

CN_DIGITS = "零一二三四五六七八九"


def cn_number(n: int) -> str:
    if n < 10:
        return CN_DIGITS[n]
    if n == 10:
        return "十"
    if n < 20:
        return "十" + CN_DIGITS[n - 10]
    tens, ones = divmod(n, 10)
    return CN_DIGITS[tens] + "十" + (CN_DIGITS[ones] if ones else "")


VERBS = ["遇见", "追赶", "救下", "询问", "告别", "守护", "寻找", "发现", "藏起", "点燃"]
TITLE_WORDS = ["风起", "夜行", "断桥", "寒潭", "孤灯", "旧约", "迷雾", "惊雷",
               "残卷", "归途", "暗流", "山鸣", "雪落", "潮起", "星坠", "古道",
               "空城", "薄暮", "初晴", "长歌", "倦鸟", "霜降"]

# Episode phases: "star" = one protagonist meets everyone; "clique" = an
# ensemble where every pair interacts; "chain" = two survivors and objects
# in a sparse line. Casts are disjoint between episodes and books.
BOOKS = {
    "shanhe": {
        "title": "山河引",
        "location": "大荒山",
        "episodes": [
            ("star", ["三郎", "云姑", "老猿", "石敢"], ["铁剑", "石碑"]),
            ("clique", ["沈钧", "白鹭", "阿蛮", "杜康"], ["玉符", "灯笼"]),
            ("chain", ["青桐", "绛雪"], ["铜铃", "药鼎", "残图"]),
        ],
        "special": ("青铜", "古鼎"),
        "lengths": [7, 7, 6],   # boundaries after chapters 7 and 14
    },
    "yunhai": {
        "title": "云海录",
        "location": "沧浪海",
        "episodes": [
            ("star", ["陆离", "晚晴", "渔翁", "崔九"], ["罗盘", "海图"]),
            ("clique", ["顾桥", "雁翎", "苏合", "白帆"], ["珠贝", "银梭"]),
            ("chain", ["封岳", "湘灵"], ["潮笛", "锚链", "旧帆"]),
        ],
        "special": ("沉船", "残骸"),
        "lengths": [6, 6, 6],   # boundaries after chapters 6 and 12
    },
    "xingchen": {
        "title": "星尘谱",
        "location": "观星台",
        "episodes": [
            ("star", ["曲沐", "白芷", "匠叟", "萤儿"], ["星盘", "浑仪"]),
            ("clique", ["霍青", "绿蜡", "南枝", "庾亮"], ["天镜", "铜壶"]),
            ("chain", ["柳砚", "虞歌"], ["晷针", "玉琮", "残历"]),
        ],
        "special": ("碎裂", "天图"),
        "lengths": [8, 8, 6],   # boundaries after chapters 8 and 16
    },
}


def tok(text: str, pos: str, head: int, deprel: str) -> dict:
    return {"text": text, "pos": pos, "head": head, "deprel": deprel}


def sent_svo(a: str, verb: str, b: str, b_pos: str, b_label: str) -> dict:
    return {
        "tokens": [
            tok(a, "nh", 2, "SBV"),
            tok(verb, "v", 0, "HED"),
            tok(b, b_pos, 2, "VOB"),
            tok("。", "wp", 2, "WP"),
        ],
        "entities": [
            {"start": 0, "end": 1, "label": "PER"},
            {"start": 2, "end": 3, "label": b_label},
        ],
    }


def sent_locative(a: str, loc: str, verb: str, b: str, b_pos: str, b_label: str) -> dict:
    return {
        "tokens": [
            tok(a, "nh", 4, "SBV"),
            tok("在", "p", 4, "ADV"),
            tok(loc, "ns", 2, "POB"),
            tok(verb, "v", 0, "HED"),
            tok(b, b_pos, 4, "VOB"),
            tok("。", "wp", 4, "WP"),
        ],
        "entities": [
            {"start": 0, "end": 1, "label": "PER"},
            {"start": 2, "end": 3, "label": "LOC"},
            {"start": 4, "end": 5, "label": b_label},
        ],
    }


def sent_possessive(a: str, obj: str, verb: str) -> dict:
    return {
        "tokens": [
            tok(a, "nh", 3, "ATT"),
            tok("的", "u", 1, "RAD"),
            tok(obj, "n", 4, "SBV"),
            tok(verb, "v", 0, "HED"),
            tok("。", "wp", 4, "WP"),
        ],
        "entities": [
            {"start": 0, "end": 1, "label": "PER"},
            {"start": 2, "end": 3, "label": "OBJ"},
        ],
    }


def sent_special(a: str, verb: str, special: tuple[str, str]) -> dict:
    first, second = special
    return {
        "tokens": [
            tok(a, "nh", 2, "SBV"),
            tok(verb, "v", 0, "HED"),
            tok(first, "n", 4, "ATT"),
            tok(second, "n", 2, "VOB"),
            tok("。", "wp", 2, "WP"),
        ],
        "entities": [
            {"start": 0, "end": 1, "label": "PER"},
            {"start": 2, "end": 4, "label": "OBJ"},
        ],
    }


def make_chapter(rng, phase, persons, objects, location, special) -> list[dict]:
    verb = lambda: rng.choice(VERBS)
    sentences = []
    if phase == "star":
        hero, others = persons[0], persons[1:]
        for c in others:
            sentences.append(sent_svo(hero, verb(), c, "nh", "PER"))
        sentences.append(sent_svo(hero, verb(), objects[0], "n", "OBJ"))
        sentences.append(sent_possessive(hero, objects[1], verb()))
        sentences.append(sent_locative(hero, location, verb(), rng.choice(others), "nh", "PER"))
        for _ in range(2):
            sentences.append(sent_svo(hero, verb(), rng.choice(others), "nh", "PER"))
    elif phase == "clique":
        for i in range(len(persons)):
            for j in range(i + 1, len(persons)):
                sentences.append(sent_svo(persons[i], verb(), persons[j], "nh", "PER"))
        sentences.append(sent_possessive(persons[0], objects[0], verb()))
        sentences.append(
            sent_locative(persons[1], location, verb(), objects[1], "n", "OBJ")
        )
    else:  # chain: q1 - q2 - obj1, plus objects hanging off q1
        q1, q2 = persons
        sentences.append(sent_svo(q1, verb(), q2, "nh", "PER"))
        sentences.append(sent_svo(q2, verb(), objects[0], "n", "OBJ"))
        sentences.append(sent_possessive(q1, objects[1], verb()))
        sentences.append(sent_svo(q1, verb(), objects[2], "n", "OBJ"))
        sentences.append(sent_special(q1, verb(), special))
        sentences.append(sent_locative(q2, location, verb(), objects[0], "n", "OBJ"))
    rng.shuffle(sentences)
    return sentences


def sentence_surface(sentence: dict) -> str:
    return "".join(t["text"] for t in sentence["tokens"])


def main() -> None:
    OUT_DIR.mkdir(parents=True, exist_ok=True)
    refs_dir = OUT_DIR / "refs"
    refs_dir.mkdir(exist_ok=True)

    annotation_lines = []
    for book_id in sorted(BOOKS):
        spec = BOOKS[book_id]
        rng = random.Random(book_id)
        title_pool = list(TITLE_WORDS)
        rng.shuffle(title_pool)

        chapter_blocks = []
        chapter_index = 0
        boundaries = []
        for (phase, persons, objects), length in zip(spec["episodes"], spec["lengths"]):
            for _ in range(length):
                chapter_index += 1
                sentences = make_chapter(
                    rng, phase, persons, objects, spec["location"], spec["special"]
                )
                body = "\n".join(sentence_surface(s) for s in sentences)
                heading = f"第{cn_number(chapter_index)}章 {title_pool[chapter_index - 1]}"
                chapter_blocks.append(f"{heading}\n{body}\n")
                annotation_lines.append(json.dumps(
                    {
                        "book_id": book_id,
                        "chapter_index": chapter_index,
                        "sentences": sentences,
                        "raw_text": body,
                    },
                    ensure_ascii=False, sort_keys=True,
                ))
            boundaries.append(chapter_index)
        boundaries = boundaries[:-1]  # the final chapter closes the book

        text = f"《{spec['title']}》\n\n" + "\n".join(chapter_blocks)
        (OUT_DIR / f"{book_id}.txt").write_text(text, encoding="utf-8")
        (refs_dir / f"{book_id}.json").write_text(
            json.dumps({"book_id": book_id, "boundaries": boundaries}) + "\n",
            encoding="utf-8",
        )
        print(f"{book_id}: {chapter_index} chapters, boundaries {boundaries}")

    (OUT_DIR / "annotations.jsonl").write_text(
        "\n".join(annotation_lines) + "\n", encoding="utf-8"
    )

    config = {
        "paths": {
            "texts": ["shanhe.txt", "xingchen.txt", "yunhai.txt"],
            "annotations": "annotations.jsonl",
            "references": "refs",
            "output_dir": "out",
        },
        "boundary": {"calibrate": True},
        "seed": 0,
    }
    (OUT_DIR / "config.json").write_text(
        json.dumps(config, indent=2) + "\n", encoding="utf-8"
    )
    print(f"wrote corpus to {OUT_DIR}")


if __name__ == "__main__":
    main()
