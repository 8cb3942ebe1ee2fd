#!/usr/bin/env python3
"""Independent reference computation for the bundled golden mini-corpus.

Re-implements, with plain Python sets and loops, everything the Rust
evaluation pipeline does for the golden fixture:

  * whitespace tokenization with character offsets
  * fixed-size chunking (zero overlap) with corpus-global chunk ids
  * the `hashed-bow-v1` mock embedding scheme
  * exact cosine top-k with ascending chunk-id tie-break
  * recall / precision / IoU / precision-omega over explicit token sets
  * mean and sample standard deviation

Usage:
    python3 golden_oracle.py [DATA_DIR] > oracle_expected.json

The output is frozen into crates/core/tests/golden/oracle_expected.json.
"""

import hashlib
import json
import math
import re
import struct
import sys
from pathlib import Path

MOCK_DOMAIN = b"chunkbench-mock-v1\x00"
MOCK_DIM = 64
CHUNK_SIZES = [5, 10, 15, 20]
KS = [1, 2, 4]


def load(data_dir):
    manifest = json.loads((data_dir / "manifest.json").read_text(encoding="utf-8"))
    docs = []
    for entry in manifest["documents"]:
        raw = (data_dir / entry["path"]).read_bytes().decode("utf-8")
        text = raw.replace("\r\n", "\n").replace("\r", "\n")
        docs.append((entry["doc_id"], text))
    queries = []
    for line in (data_dir / "dataset.jsonl").read_text(encoding="utf-8").splitlines():
        if line.strip():
            queries.append(json.loads(line))
    return docs, queries


def tokens_of(text):
    return [(m.start(), m.end()) for m in re.finditer(r"\S+", text)]


def chunk_all(docs, size):
    chunks = []
    for doc_id, text in docs:
        toks = tokens_of(text)
        for s in range(0, len(toks), size):
            e = min(s + size, len(toks))
            cs, ce = toks[s][0], toks[e - 1][1]
            chunks.append(
                {"id": len(chunks), "doc": doc_id, "ts": s, "te": e, "text": text[cs:ce]}
            )
    return chunks


def features(text):
    feats = []
    cur = ""
    for ch in text:
        if ch.isalnum():
            cur += ch
        elif cur:
            feats.append(cur.lower())
            cur = ""
    if cur:
        feats.append(cur.lower())
    return feats if feats else [text]


def feature_vector(feat, dim):
    out = []
    block = 0
    while len(out) < dim:
        digest = hashlib.sha256(MOCK_DOMAIN + feat.encode("utf-8") + struct.pack("<I", block)).digest()
        for w in range(4):
            word = struct.unpack("<Q", digest[8 * w : 8 * w + 8])[0]
            out.append((word >> 11) * 2.0 ** -53 * 2.0 - 1.0)
        block += 1
    return out[:dim]


def mock_embed(text, dim=MOCK_DIM):
    acc = [0.0] * dim
    for f in features(text):
        g = feature_vector(f, dim)
        for i in range(dim):
            acc[i] = acc[i] + g[i]
    sq = 0.0
    for x in acc:
        sq = sq + x * x
    norm = math.sqrt(sq)
    if norm == 0.0:
        return acc
    return [x / norm for x in acc]


def cosine(a, b):
    dot = 0.0
    na = 0.0
    nb = 0.0
    for x, y in zip(a, b):
        dot = dot + x * y
    for x in a:
        na = na + x * x
    for y in b:
        nb = nb + y * y
    na = math.sqrt(na)
    nb = math.sqrt(nb)
    if na == 0.0 or nb == 0.0:
        return 0.0
    c = dot / (na * nb)
    return max(-1.0, min(1.0, c))


def highlight_set(docs, query):
    toks = {d: tokens_of(t) for d, t in docs}
    out = set()
    for sp in query["spans"]:
        for i, (s, e) in enumerate(toks[sp["doc"]]):
            if s < sp["end"] and sp["start"] < e:
                out.add((sp["doc"], i))
    return out


def chunk_set(chunks):
    out = set()
    for c in chunks:
        for i in range(c["ts"], c["te"]):
            out.add((c["doc"], i))
    return out


def ratio(num, den, empty_value):
    return empty_value if den == 0 else num / den


def stats(values):
    n = len(values)
    total = 0.0
    for v in values:
        total = total + v
    mean = total / n
    if n == 1:
        return {"mean": mean, "std": 0.0, "n": n}
    sq = 0.0
    for v in values:
        sq = sq + (v - mean) * (v - mean)
    return {"mean": mean, "std": math.sqrt(sq / (n - 1)), "n": n}


def main():
    data_dir = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(__file__).resolve().parent.parent / "data" / "golden"
    docs, queries = load(data_dir)
    qvecs = {q["query_id"]: mock_embed(q["question"]) for q in queries}

    cells = []
    for k in KS:
        for size in CHUNK_SIZES:
            chunks = chunk_all(docs, size)
            cvecs = [mock_embed(c["text"]) for c in chunks]
            records = []
            for q in queries:
                scored = [(cosine(cvecs[c["id"]], qvecs[q["query_id"]]), c["id"]) for c in chunks]
                scored.sort(key=lambda p: (-p[0], p[1]))
                top = scored[:k]
                te = highlight_set(docs, q)
                tr = chunk_set([chunks[i] for _, i in top])
                inter = len(te & tr)
                recall = 1.0 if not te else inter / len(te)
                if not tr:
                    precision = 1.0 if not te else 0.0
                else:
                    precision = inter / len(tr)
                union = len(te | tr)
                iou = ratio(inter, union, 1.0)
                touching = [c for c in chunks if chunk_set([c]) & te]
                ideal = chunk_set(touching)
                pomega = 1.0 if not te else len(te & ideal) / len(ideal)
                records.append(
                    {
                        "query_id": q["query_id"],
                        "retrieved": [i for _, i in top],
                        "scores": [s for s, _ in top],
                        "recall": recall,
                        "precision": precision,
                        "iou": iou,
                        "precision_omega": pomega,
                    }
                )
            cells.append(
                {
                    "k": k,
                    "chunk_size": size,
                    "num_chunks": len(chunks),
                    "records": records,
                    "iou": stats([r["iou"] for r in records]),
                    "recall": stats([r["recall"] for r in records]),
                    "precision": stats([r["precision"] for r in records]),
                    "precision_omega": stats([r["precision_omega"] for r in records]),
                }
            )

    first3 = [qvecs[q["query_id"]] for q in queries[:3]]
    pairwise = [[cosine(a, b) for b in first3] for a in first3]
    out = {
        "documents": [
            {"doc_id": d, "char_len": len(t), "token_count": len(t.split())} for d, t in docs
        ],
        "query_cosines_first3": pairwise,
        "cells": cells,
    }
    json.dump(out, sys.stdout, indent=1)
    sys.stdout.write("\n")


if __name__ == "__main__":
    main()
