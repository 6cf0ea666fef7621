"""Independent reference implementations used to cross-check the package.

Everything here is written the slow, obvious way (brute force, stdlib
combinatorics, networkx shortest paths) so disagreements point at the
package, not the oracle.
"""

import itertools
import math
from collections import Counter

import networkx as nx
import numpy as np

from plotline.corpus import Entity
from plotline.graph import span_head_index


def adjacency_oracle(ch, nodes, max_path_len):
    """Entity adjacency via networkx shortest paths on each dependency tree."""
    n = len(nodes)
    adjacency = np.zeros((n, n))
    for si, sent in enumerate(ch.sentences):
        tree = nx.Graph()
        tree.add_nodes_from(range(len(sent.tokens)))
        for ti, tok in enumerate(sent.tokens):
            if tok.head != 0:
                tree.add_edge(ti, tok.head - 1)
        mentions = []
        for ni, node in enumerate(nodes):
            for msi, start, end in node.token_locations:
                if msi == si:
                    head_tok = span_head_index(sent, Entity(start, end, ""))
                    mentions.append((ni, head_tok))
        for (ni, ti), (nj, tj) in itertools.combinations(mentions, 2):
            if ni == nj:
                continue
            try:
                d = nx.shortest_path_length(tree, ti, tj)
            except nx.NetworkXNoPath:
                continue
            if d <= max_path_len:
                adjacency[ni, nj] = adjacency[nj, ni] = 1.0
    return adjacency


def tfidf_oracle(corpus):
    """(book, chapter, term) -> tf-idf recomputed with Counter arithmetic."""
    mentions = {}
    for ch in corpus:
        counter = Counter()
        for sent in ch.sentences:
            for e in sent.entities:
                surface = "".join(t.text for t in sent.tokens[e.start: e.end])
                if surface:
                    counter[surface] += 1
        mentions[(ch.book_id, ch.chapter_index)] = counter
    n_docs = len(corpus)
    df = Counter()
    for counter in mentions.values():
        df.update(counter.keys())
    scores = {}
    for ch in corpus:
        key = (ch.book_id, ch.chapter_index)
        total = sum(len(s.tokens) for s in ch.sentences)
        for term, count in mentions[key].items():
            tf = count / total if total else 0.0
            idf = math.log((1 + n_docs) / (1 + df[term])) + 1.0
            scores[(ch.book_id, ch.chapter_index, term)] = tf * idf
    return scores


def topk_oracle(chapter_scores, k):
    """Full stable sort on (-score, term), then truncate."""
    items = sorted(chapter_scores.items(), key=lambda kv: (-kv[1], kv[0]))
    return items[:k]


def tau_oracle(a, b):
    """Kendall tau-a by explicit pair enumeration."""
    pos_a = {item: i for i, item in enumerate(a)}
    pos_b = {item: i for i, item in enumerate(b)}
    concordant = discordant = 0
    for x, y in itertools.combinations(a, 2):
        direction_a = pos_a[x] - pos_a[y]
        direction_b = pos_b[x] - pos_b[y]
        if direction_a * direction_b > 0:
            concordant += 1
        else:
            discordant += 1
    n = len(a)
    return (concordant - discordant) / (n * (n - 1) / 2)


def max_matching_oracle(pred, gold, window):
    """Maximum one-to-one |p-g| <= window matching by exhaustive recursion."""
    pred = sorted(pred)
    gold = sorted(gold)

    def best(i, used):
        if i == len(pred):
            return 0
        top = best(i + 1, used)
        for gi, g in enumerate(gold):
            if gi not in used and abs(pred[i] - g) <= window:
                top = max(top, 1 + best(i + 1, used | {gi}))
        return top

    return best(0, frozenset())


def prf_oracle(pred, gold, window):
    if not pred and not gold:
        return (1.0, 1.0, 1.0, 1.0)
    matches = max_matching_oracle(pred, gold, window)
    precision = matches / len(pred) if pred else 0.0
    recall = matches / len(gold) if gold else 0.0
    f1 = 0.0 if precision + recall == 0 else 2 * precision * recall / (precision + recall)
    return (precision, recall, f1, matches / max(len(pred), len(gold)))


def gat_loss(model, graph, pos_weight="auto"):
    """Loss through the public forward pieces only (no gradient machinery)."""
    from plotline.gat import (
        auto_pos_weight,
        decode,
        encode,
        loss_target,
        reconstruction_loss,
    )

    target = loss_target(graph.adjacency)
    pw = auto_pos_weight(target) if pos_weight == "auto" else float(pos_weight)
    return reconstruction_loss(target, decode(encode(model, graph)), pw)


def finite_difference_grads(model, graph, pos_weight="auto", eps=1e-6):
    """Central differences over every parameter entry, in parameter order."""
    grads = []
    for array in model.parameter_arrays():
        numeric = np.zeros_like(array)
        flat, out = array.ravel(), numeric.ravel()
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            hi = gat_loss(model, graph, pos_weight)
            flat[i] = orig - eps
            lo = gat_loss(model, graph, pos_weight)
            flat[i] = orig
            out[i] = (hi - lo) / (2 * eps)
        grads.append(numeric)
    return grads


def grad_relative_error(analytic, numeric):
    a = np.concatenate([x.ravel() for x in analytic])
    b = np.concatenate([x.ravel() for x in numeric])
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(a) + np.linalg.norm(b), 1e-12))


def naive_layer_forward(layer, H, adjacency, slope, activate):
    """Per-node, per-neighbor re-computation of one attention layer."""
    from plotline.gat import attention_coefficients, attention_logits

    n = H.shape[0]
    mask = adjacency > 0
    np.fill_diagonal(mask, True)
    head_out = []
    for k, (W, _) in enumerate(zip(layer.weights, layer.attn)):
        out = np.zeros((n, W.shape[1]))
        for i in range(n):
            neighbors = [j for j in range(n) if mask[i, j]]
            logits = np.array([
                attention_logits(layer, H[i], H[j], slope)[k] for j in neighbors
            ])
            alpha = attention_coefficients(logits)
            for coeff, j in zip(alpha, neighbors):
                out[i] += coeff * (H[j] @ W)
        head_out.append(out)
    if layer.aggregation == "concat":
        combined = np.concatenate(head_out, axis=1)
    else:
        combined = np.mean(head_out, axis=0)
    if activate:
        combined = np.where(combined > 0, combined, np.expm1(np.minimum(combined, 0.0)))
    return combined


def scan_oracle(embeddings, alpha, beta, safety_distance):
    """Literal re-statement of the detection scan over a 2-D array."""
    n = embeddings.shape[0]
    if n < 2:
        return [1] * n
    steps = {
        m: float(np.linalg.norm(embeddings[m - 1] - embeddings[m - 2]))
        for m in range(2, n + 1)
    }
    labels = [0] * n
    m = alpha + 1
    while m <= n - 1:
        lo = max(2, m - alpha + 1)
        mean = sum(steps[k] for k in range(lo, m + 1)) / (m - lo + 1)
        if steps[m + 1] > beta * mean:
            labels[m - 1] = 1
            m += max(safety_distance, 1)
        else:
            m += 1
    labels[n - 1] = 1
    return labels
