"""Convert the NCBI disease corpus (PubTator layout) into CoNLL BIO TSV.

Input documents look like::

    10021369|t|Identification of APC2, a homologue of the adenomatous polyposis coli tumour suppressor .
    10021369|a|The adenomatous polyposis coli ( APC ) tumour-suppressor protein ...
    10021369	43	69	adenomatous polyposis coli	Modifier	D011125

Offsets index the string ``title + " " + abstract``.  Tokens are maximal
runs of word characters or single punctuation marks, additionally cut at
every annotation boundary so that spans always re-project exactly.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field

from .data import TagSet, TaggedSentence, extract_mentions

_TOKEN = re.compile(r"\w+|[^\w\s]")
_SENT_END = {".", "?", "!"}
_TITLE = re.compile(r"^([^|\t]+)\|t\|(.*)$")


@dataclass
class Annotation:
    start: int
    end: int  # exclusive
    text: str
    category: str
    concept: str = ""


@dataclass
class Document:
    pmid: str
    title: str
    abstract: str
    annotations: list[Annotation] = field(default_factory=list)

    @property
    def text(self) -> str:
        return f"{self.title} {self.abstract}" if self.abstract else self.title


@dataclass
class ConvertedSentence:
    pmid: str
    tokens: list[str]
    offsets: list[tuple[int, int]]
    tags: list[str]


class NcbiFormatError(ValueError):
    pass


def parse_pubtator(text: str) -> list[Document]:
    docs: list[Document] = []
    cur: Document | None = None
    for lineno, raw in enumerate(text.split("\n"), 1):
        line = raw.rstrip("\r")
        if not line.strip():
            cur = None
            continue
        m = _TITLE.match(line)
        if m:
            cur = Document(pmid=m.group(1), title=m.group(2), abstract="")
            docs.append(cur)
            continue
        if cur is None:
            raise NcbiFormatError(f"line {lineno}: annotation or abstract before a title line")
        if line.startswith(f"{cur.pmid}|a|"):
            cur.abstract = line.split("|", 2)[2]
            continue
        parts = line.split("\t")
        if len(parts) < 5 or parts[0] != cur.pmid:
            raise NcbiFormatError(f"line {lineno}: cannot parse annotation {line!r}")
        try:
            start, end = int(parts[1]), int(parts[2])
        except ValueError:
            raise NcbiFormatError(f"line {lineno}: non-integer offsets") from None
        concept = parts[5] if len(parts) > 5 else ""
        cur.annotations.append(Annotation(start, end, parts[3], parts[4], concept))
    for d in docs:
        full = d.text
        for a in d.annotations:
            if full[a.start:a.end] != a.text:
                raise NcbiFormatError(
                    f"document {d.pmid}: offsets {a.start}-{a.end} give {full[a.start:a.end]!r}, expected {a.text!r}"
                )
    return docs


def _tokenize(text: str, base: int, cuts: set[int]) -> list[tuple[str, int, int]]:
    out = []
    for m in _TOKEN.finditer(text):
        s, e = m.start() + base, m.end() + base
        inner = sorted(c for c in cuts if s < c < e)
        bounds = [s, *inner, e]
        for a, b in zip(bounds, bounds[1:]):
            out.append((text[a - base:b - base], a, b))
    return out


def _non_overlapping(annotations: list[Annotation]) -> list[Annotation]:
    kept: list[Annotation] = []
    # longest first so a nested mention never replaces its container
    for a in sorted(annotations, key=lambda a: (a.start, -(a.end - a.start))):
        if kept and a.start < kept[-1].end:
            continue
        kept.append(a)
    return kept


def convert_document(doc: Document) -> list[ConvertedSentence]:
    anns = _non_overlapping(doc.annotations)
    cuts = {a.start for a in anns} | {a.end for a in anns}
    pieces = [(doc.title, 0)]
    if doc.abstract:
        pieces.append((doc.abstract, len(doc.title) + 1))

    sentences: list[ConvertedSentence] = []
    for piece, base in pieces:
        toks = _tokenize(piece, base, cuts)
        tags = ["O"] * len(toks)
        inside = [False] * len(toks)
        for a in anns:
            first = True
            for i, (_, s, e) in enumerate(toks):
                if s >= a.start and e <= a.end:
                    tags[i] = f"{'B' if first else 'I'}-{a.category}"
                    inside[i] = not first
                    first = False
        cur: list[int] = []
        for i, (tok, _, _) in enumerate(toks):
            cur.append(i)
            nxt = toks[i + 1][0] if i + 1 < len(toks) else None
            boundary = (
                tok in _SENT_END
                and nxt is not None
                and (nxt[0].isupper() or nxt[0].isdigit())
                and not inside[i + 1]
            )
            if boundary or nxt is None:
                sentences.append(
                    ConvertedSentence(
                        pmid=doc.pmid,
                        tokens=[toks[j][0] for j in cur],
                        offsets=[(toks[j][1], toks[j][2]) for j in cur],
                        tags=[tags[j] for j in cur],
                    )
                )
                cur = []
    return sentences


def convert(text: str) -> list[ConvertedSentence]:
    out = []
    for doc in parse_pubtator(text):
        out.extend(convert_document(doc))
    return out


def to_conll(sentences: list[ConvertedSentence]) -> str:
    lines = []
    for s in sentences:
        lines.extend(f"{t}\t{g}\n" for t, g in zip(s.tokens, s.tags))
        lines.append("\n")
    return "".join(lines)


def to_offsets(sentences: list[ConvertedSentence]) -> str:
    """Sidecar file: ``pmid<TAB>start<TAB>end`` per token, blank line per sentence."""
    lines = []
    for s in sentences:
        lines.extend(f"{s.pmid}\t{a}\t{b}\n" for a, b in s.offsets)
        lines.append("\n")
    return "".join(lines)


def reproject(sentences: list[ConvertedSentence], tagset: TagSet | None = None) -> list[tuple[str, int, int, str]]:
    """Character-level (pmid, start, end, category) spans recovered from BIO tags."""
    spans = []
    for s in sentences:
        ts = tagset or TagSet.from_tags(s.tags)
        for a, b, c in extract_mentions([ts.index[t] for t in s.tags], ts):
            spans.append((s.pmid, s.offsets[a][0], s.offsets[b][1], c))
    return spans


def to_tagged(sentences: list[ConvertedSentence], tagset: TagSet) -> list[TaggedSentence]:
    return [TaggedSentence(tokens=list(s.tokens), gold_tags=[tagset.index[t] for t in s.tags]) for s in sentences]
