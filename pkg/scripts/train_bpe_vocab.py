#!/usr/bin/env python3
"""Train the bundled byte-pair merge table on the bundled corpus.

Classic BPE training: split text into whitespace/non-whitespace pieces,
count adjacent byte-token pairs, repeatedly merge the most frequent pair
(ties broken lexicographically so the run is deterministic), and record
the merge order.  The encoder replays merges by rank.

Output (committed): src/ragwatt/config/minibpe_vocab.json
"""

import argparse
import base64
import csv
import json
import re
from collections import Counter
from pathlib import Path

ROOT = Path(__file__).resolve().parents[1]
DATA_DIR = ROOT / "src" / "ragwatt" / "data"
OUT_PATH = ROOT / "src" / "ragwatt" / "config" / "minibpe_vocab.json"

PIECE_RE = re.compile(r"\s+|\S+")


def training_text():
    texts = []
    with (DATA_DIR / "corpus.jsonl").open(encoding="utf-8") as fh:
        for line in fh:
            texts.append(json.loads(line)["text"])
    with (DATA_DIR / "questions.csv").open(encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            texts.append(row["text"])
    return "\n".join(texts)


def train(text, n_merges):
    pieces = Counter(PIECE_RE.findall(text))
    sequences = {piece: [piece.encode("utf-8")[i : i + 1] for i in range(len(piece.encode("utf-8")))] for piece in pieces}
    merges = []
    for _ in range(n_merges):
        pair_counts = Counter()
        for piece, count in pieces.items():
            seq = sequences[piece]
            for left, right in zip(seq, seq[1:]):
                pair_counts[(left, right)] += count
        if not pair_counts:
            break
        best_count = max(pair_counts.values())
        if best_count < 2:
            break
        best = min(pair for pair, count in pair_counts.items() if count == best_count)
        merges.append(best)
        merged = best[0] + best[1]
        for piece, seq in sequences.items():
            i = 0
            out = []
            while i < len(seq):
                if i + 1 < len(seq) and seq[i] == best[0] and seq[i + 1] == best[1]:
                    out.append(merged)
                    i += 2
                else:
                    out.append(seq[i])
                    i += 1
            sequences[piece] = out
    return merges


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--merges", type=int, default=512)
    args = parser.parse_args()

    merges = train(training_text(), args.merges)
    OUT_PATH.parent.mkdir(parents=True, exist_ok=True)
    payload = {
        "format": "ragwatt-bpe",
        "version": 1,
        "name": "minibpe-v1",
        "merges": [
            [base64.b64encode(left).decode("ascii"), base64.b64encode(right).decode("ascii")]
            for left, right in merges
        ],
    }
    OUT_PATH.write_text(json.dumps(payload, indent=1) + "\n", encoding="utf-8")
    print(f"wrote {len(merges)} merges to {OUT_PATH}")


if __name__ == "__main__":
    main()
