#!/usr/bin/env python3
"""One-shot generator for the end-to-end fixture corpus.

Outputs are checked in; rerun only when the corpus itself needs to change.
Token scores are produced with the same offset rules as the reference
tokenizer (alphanumeric runs, whitespace runs, single punctuation).
"""

import json
import os
import re

HERE = os.path.dirname(os.path.abspath(__file__))
E2E = os.path.join(HERE, "e2e")
TRANSCRIPTS = os.path.join(E2E, "transcripts")
CORRECTIONS = os.path.join(E2E, "corrections")

TOKEN_RE = re.compile(r"[A-Za-z0-9]+|\s+|.", re.S)


def ref_tokens(text):
    out = []
    pos = 0
    for m in TOKEN_RE.finditer(text):
        assert m.start() == pos
        out.append((m.start(), m.end()))
        pos = m.end()
    assert pos == len(text)
    return out


def gt_scores(text, spans):
    """spans: list of (substring, score); every occurrence must be unique."""
    intervals = []
    for needle, score in spans:
        at = text.find(needle)
        assert at >= 0, f"span {needle!r} not in text"
        assert text.find(needle, at + 1) < 0, f"span {needle!r} ambiguous"
        intervals.append((at, at + len(needle), score))
    scores = []
    for (ts, te) in ref_tokens(text):
        s = 0.0
        for (a, b, v) in intervals:
            if max(ts, a) < min(te, b):
                s = max(s, v)
        scores.append(s)
    return scores


SAMPLES = [
    {
        "id": "m1",
        "domain": "math_stem",
        "prompt": "Compute 3 + 4, then double it.",
        "response": "First we compute 3 + 4 = 8.\n\nThen doubling gives 16, so the answer is 16.",
        "final_answer_correct": False,
        "policy_model": "mock-policy",
    },
    {
        "id": "m2",
        "domain": "math_stem",
        "prompt": "Area of a 3 by 5 rectangle?",
        "response": "The area of a 3 by 5 rectangle is 15.",
        "final_answer_correct": True,
        "policy_model": "mock-policy",
    },
    {
        "id": "m3",
        "domain": "math_stem",
        "prompt": "Solve x + 1 = 4.",
        "response": "Thus x = 2 solves the equation.",
        "final_answer_correct": False,
        "policy_model": "mock-policy",
    },
    {
        "id": "m4",
        "domain": "math_stem",
        "prompt": "Add 5 to n = 10.",
        "response": "Let n = 10. The total is n + 5 = 12.",
        "final_answer_correct": False,
        "policy_model": "mock-policy",
    },
    {
        "id": "m5",
        "domain": "math_stem",
        "prompt": "What is 7 * 8?",
        "response": "We see 7 * 8 = 54 in the table.\n\nHence the result follows.",
        "final_answer_correct": False,
        "policy_model": "mock-policy",
    },
    {
        "id": "m6",
        "domain": "code",
        "prompt": "Write square(n) and print square(3).",
        "response": "def square(n):\n    return n + n\n\nprint(sqare(3))",
        "final_answer_correct": False,
        "policy_model": "mock-policy",
    },
]

# labeler ground truth (m4 was never annotated: its trace is corrupted)
GT_SPANS = {
    "m1": [("3 + 4 = 8", 1.0), ("the answer is 16", 0.75)],
    "m2": [],
    "m3": [],
    "m5": [("7 * 8 = 54", 1.0)],
    "m6": [("return n + n", 1.0), ("sqare(3)", 1.0)],
}

TRANSCRIPT_FILES = {
    # m1: alpha flags both spans in both runs; beta restores one span once
    "m1__alpha__run1.txt": "<error 1>3 + 4 = 8</error 1>\n<error 2>the answer is 16</error 2>",
    "m1__alpha__run2.txt": "<error 1>3 + 4 = 8</error 1>\n<error 2>the answer is 16</error 2>",
    "m1__beta__run1.txt": "The addition slips.\n<error 1>3+4=8</error 1>",
    "m1__beta__run2.txt": "No errors!",
    # m2: clean everywhere
    "m2__alpha__run1.txt": "No errors!",
    "m2__alpha__run2.txt": "No errors!",
    "m2__beta__run1.txt": "No errors!",
    "m2__beta__run2.txt": "No errors!",
    # m3: wrong answer, nothing flagged
    "m3__alpha__run1.txt": "No errors!",
    "m3__alpha__run2.txt": "No errors!",
    "m3__beta__run1.txt": "No errors!",
    "m3__beta__run2.txt": "No errors!",
    # m4: every critique is corrupted or missing (run2 files are absent)
    "m4__alpha__run1.txt": "<error 1>n + 5 = 12",
    "m4__beta__run1.txt": "<error 1>n + 5 = 12",
    # m5: only alpha catches it, and only once
    "m5__alpha__run1.txt": "<error 1>7 * 8 = 54</error 1>",
    "m5__alpha__run2.txt": "No errors!",
    "m5__beta__run1.txt": "No errors!",
    "m5__beta__run2.txt": "No errors!",
    # m6: alpha misses the call-site typo that beta catches
    "m6__alpha__run1.txt": "<error 1>return n + n</error 1>",
    "m6__alpha__run2.txt": "<error 1>return n + n</error 1>",
    "m6__beta__run1.txt": "<error 1>return n+n</error 1>\n<error 2>sqare(3)</error 2>",
    "m6__beta__run2.txt": "<error 1>return n + n</error 1>\n<error 2>sqare(3)</error 2>",
}

CORRECTION_SAMPLES = [
    {
        "id": "c1",
        "problem": "What is 6 * 7?",
        "response": "Multiplying step by step, the answer is 41",
        "reference_answer": "42",
        "scores_span": "41",
    },
    {
        "id": "c2",
        "problem": "What is 10 - 3?",
        "response": "Subtracting gives the answer 8",
        "reference_answer": "7",
        "scores_span": "8",
    },
]

# token condition: hints point at the mistake, the mock fixes c1 immediately
# and c2 on the second try; baseline never recovers
CORRECTION_TRANSCRIPTS = {
    "c1__token__iter1.txt": "With the flag on 41, recompute: \\boxed{42}",
    "c2__token__iter1.txt": "Still unsure: \\boxed{9}",
    "c2__token__iter2.txt": "Second look at the flagged digit: \\boxed{7}",
    "c1__baseline__iter1.txt": "I will retry: \\boxed{41}",
    "c1__baseline__iter2.txt": "Another try: \\boxed{44}",
    "c1__baseline__iter3.txt": "Final try: \\boxed{40}",
    "c2__baseline__iter1.txt": "Retry: \\boxed{8}",
    "c2__baseline__iter2.txt": "Retry: \\boxed{9}",
    "c2__baseline__iter3.txt": "Retry: \\boxed{6}",
}


def main():
    os.makedirs(TRANSCRIPTS, exist_ok=True)
    os.makedirs(CORRECTIONS, exist_ok=True)

    with open(os.path.join(E2E, "samples.jsonl"), "w") as f:
        for s in SAMPLES:
            f.write(json.dumps(s, sort_keys=True) + "\n")

    with open(os.path.join(E2E, "gt_scores.jsonl"), "w") as f:
        for s in SAMPLES:
            if s["id"] not in GT_SPANS:
                continue
            scores = gt_scores(s["response"], GT_SPANS[s["id"]])
            rec = {"sample_id": s["id"], "source": "labeler", "scores": scores}
            f.write(json.dumps(rec, sort_keys=True) + "\n")

    for name, content in TRANSCRIPT_FILES.items():
        with open(os.path.join(TRANSCRIPTS, name), "w") as f:
            f.write(content)

    with open(os.path.join(E2E, "correction_samples.jsonl"), "w") as f:
        for c in CORRECTION_SAMPLES:
            tokens = ref_tokens(c["response"])
            at = c["response"].find(c["scores_span"])
            end = at + len(c["scores_span"])
            scores = [0.9 if max(ts, at) < min(te, end) else 0.0 for ts, te in tokens]
            rec = {
                "id": c["id"],
                "problem": c["problem"],
                "response": c["response"],
                "reference_answer": c["reference_answer"],
                "scores": scores,
            }
            f.write(json.dumps(rec, sort_keys=True) + "\n")

    for name, content in CORRECTION_TRANSCRIPTS.items():
        with open(os.path.join(CORRECTIONS, name), "w") as f:
            f.write(content)

    print("fixtures written under", E2E)


if __name__ == "__main__":
    main()
