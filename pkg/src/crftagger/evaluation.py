"""Exact-match span evaluation and error categorisation."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .data import TagSet

Span = tuple[int, int, int, str]  # (sentence id, start, end inclusive, class)


def decode_spans(tags: Sequence[int], tagset: TagSet) -> list[tuple[int, int, str]]:
    """Spans of a possibly BIO-invalid sequence.

    An ``I-x`` that does not continue an open ``x`` span starts a new span;
    an ``I-y`` inside an ``x`` span closes it and opens a ``y`` span.
    """
    spans = []
    start = None
    cur = None
    for i, t in enumerate(tags):
        p, c = tagset.split(t)
        if p == "I" and start is not None and c == cur:
            continue
        if start is not None:
            spans.append((start, i - 1, cur))
            start = cur = None
        if p != "O":
            start, cur = i, c
    if start is not None:
        spans.append((start, len(tags) - 1, cur))
    return spans


def corpus_spans(tag_seqs: Iterable[Sequence[int]], tagset: TagSet) -> set[Span]:
    return {(sid, a, b, c) for sid, seq in enumerate(tag_seqs) for a, b, c in decode_spans(seq, tagset)}


def flatten_spans(spans: Iterable[Span], label: str = "DISEASE") -> set[Span]:
    return {(s, a, b, label) for s, a, b, _ in spans}


@dataclass
class Counts:
    tp: int = 0
    fp: int = 0
    fn: int = 0

    @property
    def precision(self) -> float:
        return self.tp / (self.tp + self.fp) if self.tp + self.fp else 0.0

    @property
    def recall(self) -> float:
        return self.tp / (self.tp + self.fn) if self.tp + self.fn else 0.0

    @property
    def f1(self) -> float:
        p, r = self.precision, self.recall
        return 2 * p * r / (p + r) if p + r else 0.0

    def as_dict(self) -> dict:
        return {"tp": self.tp, "fp": self.fp, "fn": self.fn,
                "precision": self.precision, "recall": self.recall, "f1": self.f1}


@dataclass
class EvalResult(Counts):
    per_class: dict[str, Counts] = field(default_factory=dict)

    @property
    def macro_f1(self) -> float:
        if not self.per_class:
            return 0.0
        return sum(c.f1 for c in self.per_class.values()) / len(self.per_class)

    @property
    def macro_precision(self) -> float:
        return sum(c.precision for c in self.per_class.values()) / max(len(self.per_class), 1)

    @property
    def macro_recall(self) -> float:
        return sum(c.recall for c in self.per_class.values()) / max(len(self.per_class), 1)

    def as_dict(self) -> dict:
        d = super().as_dict()
        d["macro"] = {"precision": self.macro_precision, "recall": self.macro_recall, "f1": self.macro_f1}
        d["per_class"] = {k: v.as_dict() for k, v in self.per_class.items()}
        return d


def evaluate(gold: set[Span], pred: set[Span], classes: Sequence[str] | None = None) -> EvalResult:
    """Micro-averaged exact-match counts; partial overlaps are one fp and one fn."""
    gold, pred = set(gold), set(pred)
    tp = gold & pred
    res = EvalResult(tp=len(tp), fp=len(pred - gold), fn=len(gold - pred))
    names = list(classes) if classes is not None else sorted({s[3] for s in gold | pred})
    for c in names:
        g = {s for s in gold if s[3] == c}
        p = {s for s in pred if s[3] == c}
        res.per_class[c] = Counts(len(g & p), len(p - g), len(g - p))
    return res


def is_acronym_like(token: str) -> bool:
    return len(token) <= 6 and token.isupper()


@dataclass
class ErrorEntry:
    sentence: int
    start: int
    end: int
    cls: str
    kind: str  # "fp" or "fn"
    category: str  # boundary-error, class-error, miss, spurious
    acronym: bool
    text: str


def error_report(gold: set[Span], pred: set[Span], sentences: Sequence[Sequence[str]] | None = None) -> list[ErrorEntry]:
    """Label every false positive and false negative with an error category."""
    entries = []

    def overlaps(a, b):
        return a[0] == b[0] and a[1] <= b[2] and b[1] <= a[2]

    def text_of(s):
        if sentences is None:
            return ""
        return " ".join(sentences[s[0]][s[1]:s[2] + 1])

    def acronym(s):
        return sentences is not None and any(is_acronym_like(t) for t in sentences[s[0]][s[1]:s[2] + 1])

    for kind, errors, other in (("fp", pred - gold, gold), ("fn", gold - pred, pred)):
        for s in sorted(errors):
            if any(o[:3] == s[:3] for o in other):
                cat = "class-error"
            elif any(overlaps(s, o) for o in other):
                cat = "boundary-error"
            else:
                cat = "spurious" if kind == "fp" else "miss"
            entries.append(ErrorEntry(s[0], s[1], s[2], s[3], kind, cat, acronym(s), text_of(s)))
    return entries


def format_error_report(entries: Sequence[ErrorEntry]) -> str:
    lines = ["kind\tcategory\tacronym\tsentence\tstart\tend\tclass\ttext"]
    for e in entries:
        lines.append(f"{e.kind}\t{e.category}\t{int(e.acronym)}\t{e.sentence}\t{e.start}\t{e.end}\t{e.cls}\t{e.text}")
    summary: dict[str, int] = {}
    for e in entries:
        summary[e.category] = summary.get(e.category, 0) + 1
    n_acr = sum(e.acronym for e in entries)
    lines.append("")
    lines.append("# " + " ".join(f"{k}={v}" for k, v in sorted(summary.items())) + f" acronym_like={n_acr}")
    return "\n".join(lines) + "\n"


def prf_row(c: Counts) -> str:
    """``P & R & F1`` in percent with two decimals, as used in result tables."""
    return f"{100 * c.precision:.2f} & {100 * c.recall:.2f} & {100 * c.f1:.2f}"


def format_table(result: EvalResult, macro: bool = False) -> str:
    lines = [f"{'Class':<20} {'TP':>6} {'FP':>6} {'FN':>6} {'Precision':>9} {'Recall':>7} {'F1 Score':>8}"]

    def row(name, c):
        return (f"{name:<20} {c.tp:>6} {c.fp:>6} {c.fn:>6} "
                f"{100 * c.precision:>9.2f} {100 * c.recall:>7.2f} {100 * c.f1:>8.2f}")

    lines.append(row("ALL (micro)", result))
    for name, c in result.per_class.items():
        lines.append(row(name, c))
    if macro:
        lines.append(f"{'ALL (macro)':<20} {'':>6} {'':>6} {'':>6} {100 * result.macro_precision:>9.2f} "
                     f"{100 * result.macro_recall:>7.2f} {100 * result.macro_f1:>8.2f}")
    lines.append("")
    lines.append(f"P & R & F1: {prf_row(result)}")
    return "\n".join(lines) + "\n"


def format_json(result: EvalResult) -> str:
    return json.dumps(result.as_dict(), indent=2, sort_keys=True) + "\n"
