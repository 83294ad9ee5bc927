#!/usr/bin/env python3
"""Build the bakeoff-format test fixtures from the People's Daily 1998-01 corpus.

The source file (199801.txt, "word/tag" tokens separated by double spaces) ships
inside the MIT-licensed snownlp source distribution (snownlp/tag/199801.txt).
It is the same newswire text the PKU bakeoff training set was cut from.

usage: make_fixture.py 199801.txt OUT_DIR
"""
import sys
from pathlib import Path

MIN_CHARS, MAX_CHARS = 8, 40
N_TRAIN, N_HELDOUT = 200, 50


def sentences(path):
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        words = [tok.rsplit("/", 1)[0] for tok in line.split()]
        words = [w for w in words if w]
        if words:
            yield words


def main():
    src, out = sys.argv[1], Path(sys.argv[2])
    seen, train, heldout = set(), [], []
    vocab = set()
    for words in sentences(src):
        n = sum(len(w) for w in words)
        key = "".join(words)
        if not (MIN_CHARS <= n <= MAX_CHARS) or key in seen:
            continue
        seen.add(key)
        if len(train) < N_TRAIN:
            train.append(words)
            vocab.update(words)
        elif len(heldout) < N_HELDOUT:
            if any(w not in vocab for w in words):
                heldout.append(words)
        else:
            break
    out.mkdir(parents=True, exist_ok=True)
    (out / "pku_fixture_training.utf8").write_text(
        "".join(" ".join(s) + "\n" for s in train), encoding="utf-8")
    (out / "pku_fixture_heldout_gold.utf8").write_text(
        "".join(" ".join(s) + "\n" for s in heldout), encoding="utf-8")


if __name__ == "__main__":
    main()
