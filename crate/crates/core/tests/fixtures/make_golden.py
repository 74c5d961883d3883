"""Writes the golden embedding files next to this script.

Row k of token t in sentence s is s + t/8 + k/64, exact in float32, so the
Rust side can check every value. Static rows are i - k/4.
"""

import struct
from pathlib import Path

HERE = Path(__file__).parent
DIM = 4


def sentences(path):
    sents, cur = [], []
    for line in path.read_text(encoding="utf-8").splitlines():
        if not line.strip():
            if cur:
                sents.append(cur)
            cur = []
        elif not line.startswith("#"):
            cols = line.split("\t")
            if cols[0].isdigit():
                cur.append(cols[1])
    if cur:
        sents.append(cur)
    return sents


def contextual(sents):
    out = bytearray(b"PPCTX1\0")
    out += struct.pack("<II", DIM, len(sents))
    for s, toks in enumerate(sents):
        out += struct.pack("<II", s, len(toks))
        for t in range(len(toks)):
            out += struct.pack(f"<{DIM}f", *(s + t / 8 + k / 64 for k in range(DIM)))
    return bytes(out)


def static(words):
    out = bytearray(b"PPEMB1\0")
    out += struct.pack("<II", len(words), DIM)
    for i, w in enumerate(words):
        raw = w.encode("utf-8")
        out += struct.pack("<H", len(raw)) + raw
        out += struct.pack(f"<{DIM}f", *(i - k / 4 for k in range(DIM)))
    return bytes(out)


if __name__ == "__main__":
    sents = sentences(HERE / "three_sentences.conllu")
    vocab = list(dict.fromkeys(w for s in sents for w in s))
    (HERE / "three_sentences.ctx.bin").write_bytes(contextual(sents))
    (HERE / "three_sentences.emb.bin").write_bytes(static(vocab))
