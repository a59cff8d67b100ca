#!/usr/bin/env python3
"""Regenerates the bundled demo corpus under data/demo/.

Twelve questions written from three vocabularies with disjoint letter sets,
a bigram training text in which questions of the same vocabulary appear
back to back, a simulated student-step log whose true KCs are the
vocabularies, and two baseline KC models (expert-style and one label per
question).
"""

import csv
import json
import math
import os
import random

HERE = os.path.dirname(os.path.abspath(__file__))
OUT = os.path.join(HERE, "demo")

VOCABS = {
    "kitchen": ["bead", "cafe", "face", "badge", "hedge", "dab", "fade", "cage", "ache", "beef", "chef", "deaf"],
    "pond": ["lion", "pink", "limp", "moon", "pool", "kiln", "milk", "look", "noon", "pill", "loop", "mink"],
    "desert": ["rust", "strut", "tryst", "trust", "yurt", "wurst", "truss", "sty", "rut", "stur", "tusy", "wry"],
}


def question(qid, words, rng):
    rng.shuffle(words)
    stem = " ".join(words[:4])
    options = [" ".join(words[4 + 2 * i: 6 + 2 * i]) for i in range(3)]
    return {"id": qid, "stem": stem, "options": options}


def canonical(q):
    lines = [q["stem"]] + ["%s. %s" % (chr(ord("A") + i), o) for i, o in enumerate(q["options"])]
    return "\n".join(lines)


def main():
    rng = random.Random(2025)
    os.makedirs(OUT, exist_ok=True)
    questions, groups = [], {}
    n = 0
    for name, words in VOCABS.items():
        for _ in range(4):
            n += 1
            q = question("q%02d" % n, list(words), rng)
            questions.append(q)
            groups.setdefault(name, []).append(q)
    # Interleave vocabularies so file order does not reveal the grouping.
    order = [questions[i] for i in (0, 4, 8, 1, 5, 9, 2, 6, 10, 3, 7, 11)]
    with open(os.path.join(OUT, "bank.json"), "w") as fh:
        json.dump({"questions": order}, fh, indent=2)
        fh.write("\n")
    with open(os.path.join(OUT, "bank6.json"), "w") as fh:
        json.dump({"questions": order[:6]}, fh, indent=2)
        fh.write("\n")

    blocks = []
    for name, qs in groups.items():
        texts = [canonical(q) for q in qs]
        blocks.append("".join(a + b for a in texts for b in texts if a is not b))
    with open(os.path.join(OUT, "corpus.txt"), "w") as fh:
        fh.write("\n\n".join(blocks) + "\n")

    kc_of = {q["id"]: name for name, qs in groups.items() for q in qs}
    with open(os.path.join(OUT, "expert.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["question_id", "kc_label"])
        for q in order:
            w.writerow([q["id"], kc_of[q["id"]].capitalize()])
    with open(os.path.join(OUT, "per_question.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["question_id", "kc_label"])
        for q in order:
            w.writerow([q["id"], "Analyze " + q["stem"]])

    # AFM responses: 120 students answer every question once.
    beta = {"kitchen": 0.6, "pond": -0.4, "desert": 0.1}
    gamma = {"kitchen": 0.25, "pond": 0.35, "desert": 0.15}
    with open(os.path.join(OUT, "steps.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["student_id", "question_id", "position", "correct"])
        for s in range(1, 121):
            theta = rng.gauss(0.0, 1.0)
            seq = list(order)
            rng.shuffle(seq)
            seen = {k: 0 for k in VOCABS}
            for pos, q in enumerate(seq):
                k = kc_of[q["id"]]
                z = theta + beta[k] + gamma[k] * seen[k]
                seen[k] += 1
                y = 1 if rng.random() < 1.0 / (1.0 + math.exp(-z)) else 0
                w.writerow(["s%03d" % s, q["id"], pos, y])


if __name__ == "__main__":
    main()
