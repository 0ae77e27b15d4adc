"""Word and character accuracy rates with corpus aggregation.

Normalization maps everything outside [a-z0-9] to a space, so
apostrophes split words ("haven't" -> "haven t"). Accuracy is
100 * (1 - edits / reference length), with Levenshtein edits at unit
cost; character accuracy runs on the normalized space-joined string.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from .core_types import TranscriptPair
from .errors import EmptyCorpus, EmptyReference

_NON_ALNUM = re.compile(r"[^a-z0-9]+")


def normalize_text(s: str) -> tuple[list[str], str]:
    """Lowercase, strip punctuation to spaces, collapse whitespace.

    Returns (tokens, canonical string); the canonical string is the
    tokens joined by single spaces.
    """
    tokens = [t for t in _NON_ALNUM.split(s.lower()) if t]
    return tokens, " ".join(tokens)


def edit_distance(a, b) -> int:
    """Minimal insertions + deletions + substitutions turning b into a."""
    n, m = len(a), len(b)
    if n == 0:
        return m
    if m == 0:
        return n
    prev = list(range(m + 1))
    for i in range(1, n + 1):
        cur = [i] + [0] * m
        ai = a[i - 1]
        for j in range(1, m + 1):
            cost = 0 if ai == b[j - 1] else 1
            cur[j] = min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + cost)
        prev = cur
    return prev[m]


@dataclass(frozen=True)
class EvalResult:
    """Per-utterance accuracy figures. Values are unclamped: a flood
    of insertions can push an accuracy below zero."""

    w_acc: float
    c_acc: float
    word_edits: int
    char_edits: int
    ref_words: int
    ref_chars: int


def _normalized_pair(ref: str, hyp: str):
    ref_tokens, ref_canon = normalize_text(ref)
    hyp_tokens, hyp_canon = normalize_text(hyp)
    if not ref_tokens:
        raise EmptyReference(f"reference {ref!r} normalizes to nothing")
    return ref_tokens, ref_canon, hyp_tokens, hyp_canon


def evaluate_pair(ref: str, hyp: str) -> EvalResult:
    ref_tokens, ref_canon, hyp_tokens, hyp_canon = _normalized_pair(ref, hyp)
    word_edits = edit_distance(ref_tokens, hyp_tokens)
    char_edits = edit_distance(ref_canon, hyp_canon)
    return EvalResult(
        w_acc=100.0 * (1.0 - word_edits / len(ref_tokens)),
        c_acc=100.0 * (1.0 - char_edits / len(ref_canon)),
        word_edits=word_edits,
        char_edits=char_edits,
        ref_words=len(ref_tokens),
        ref_chars=len(ref_canon),
    )


def word_accuracy(ref: str, hyp: str) -> float:
    return evaluate_pair(ref, hyp).w_acc


def char_accuracy(ref: str, hyp: str) -> float:
    return evaluate_pair(ref, hyp).c_acc


def _aggregate(results):
    """Micro (pooled edits over pooled lengths, floored at 0) and macro
    (mean of per-utterance accuracies) for both metrics."""
    word_edits = sum(r.word_edits for r in results)
    char_edits = sum(r.char_edits for r in results)
    ref_words = sum(r.ref_words for r in results)
    ref_chars = sum(r.ref_chars for r in results)
    return {
        "n": len(results),
        "micro_word_acc": max(0.0, 100.0 * (1.0 - word_edits / ref_words)),
        "micro_char_acc": max(0.0, 100.0 * (1.0 - char_edits / ref_chars)),
        "macro_word_acc": float(np.mean([r.w_acc for r in results])),
        "macro_char_acc": float(np.mean([r.c_acc for r in results])),
    }


def evaluate_corpus(pairs: list[TranscriptPair]) -> dict:
    """Score a corpus; buckets appear when pairs carry tags.

    Distance buckets use the pair's distance_cm verbatim (the capture
    protocol steps by 25 cm); duration buckets use duration_bin labels.
    """
    if not pairs:
        raise EmptyCorpus("no transcript pairs to evaluate")
    results = [evaluate_pair(p.reference, p.hypothesis) for p in pairs]
    report = {
        "overall": _aggregate(results),
        "per_utterance": [
            {"id": p.id, "w_acc": r.w_acc, "c_acc": r.c_acc,
             "word_edits": r.word_edits, "char_edits": r.char_edits,
             "ref_words": r.ref_words, "ref_chars": r.ref_chars}
            for p, r in zip(pairs, results)
        ],
    }
    by_distance = {}
    by_duration = {}
    for p, r in zip(pairs, results):
        if p.distance_cm is not None:
            by_distance.setdefault(p.distance_cm, []).append(r)
        if p.duration_bin is not None:
            by_duration.setdefault(p.duration_bin, []).append(r)
    if by_distance:
        report["by_distance_cm"] = {
            str(k): _aggregate(v) for k, v in sorted(by_distance.items())
        }
    if by_duration:
        report["by_duration_bin"] = {
            str(k): _aggregate(v) for k, v in sorted(by_duration.items())
        }
    return report
