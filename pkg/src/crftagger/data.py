"""BIO-tagged corpora: tag sets, vocabularies, CoNLL I/O and statistics."""
from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

RARE = "<RARE>"
PAD_LEFT = "<PAD_L>"
PAD_RIGHT = "<PAD_R>"
SPECIALS = (RARE, PAD_LEFT, PAD_RIGHT)
RARE_ID, PAD_LEFT_ID, PAD_RIGHT_ID = 0, 1, 2

DISEASE = "DISEASE"
# NCBI disease corpus category names, in the order used for reporting
NCBI_CLASSES = ("SpecificDisease", "DiseaseClass", "Modifier", "CompositeMention")


class CorpusError(ValueError):
    """Malformed or BIO-invalid corpus input."""


class Vocabulary:
    """Bidirectional string/index map with the three specials at 0, 1, 2."""

    def __init__(self, items: Iterable[str] = ()):
        self.items: list[str] = list(SPECIALS)
        self.index: dict[str, int] = {s: i for i, s in enumerate(SPECIALS)}
        for it in items:
            self.add(it)

    def add(self, item: str) -> int:
        if item in self.index:
            return self.index[item]
        self.index[item] = len(self.items)
        self.items.append(item)
        return self.index[item]

    def __len__(self):
        return len(self.items)

    def __contains__(self, item):
        return item in self.index

    def __eq__(self, other):
        return isinstance(other, Vocabulary) and self.items == other.items

    def get(self, item: str) -> int:
        """Index of ``item``, or RARE_ID when it is unknown."""
        return self.index.get(item, RARE_ID)

    def to_text(self) -> str:
        return "".join(f"{it}\n" for it in self.items)

    @classmethod
    def from_text(cls, text: str) -> "Vocabulary":
        lines = text.split("\n")
        if lines and lines[-1] == "":
            lines.pop()
        if tuple(lines[:3]) != SPECIALS:
            raise CorpusError("vocabulary file must start with the 3 special tokens")
        vocab = cls()
        for ln in lines[3:]:
            if ln in vocab.index:
                raise CorpusError(f"duplicate vocabulary entry {ln!r}")
            vocab.add(ln)
        return vocab


class TagSet:
    """BIO tags: ``O`` first, then ``B-x``, ``I-x`` for each class in order."""

    def __init__(self, classes: Sequence[str]):
        classes = list(classes)
        if not classes or len(set(classes)) != len(classes):
            raise ValueError(f"entity classes must be unique and nonempty: {classes}")
        for c in classes:
            if not c or c == "O":
                raise ValueError(f"bad entity class name {c!r}")
        self.classes = classes
        self.tags = ["O"]
        for c in classes:
            self.tags += [f"B-{c}", f"I-{c}"]
        self.index = {t: i for i, t in enumerate(self.tags)}

    @classmethod
    def task_a(cls) -> "TagSet":
        return cls([DISEASE])

    @classmethod
    def ncbi_task_b(cls) -> "TagSet":
        return cls(NCBI_CLASSES)

    @classmethod
    def from_tags(cls, tags: Iterable[str]) -> "TagSet":
        """Smallest tag set covering ``tags``; NCBI classes keep their canonical order."""
        found = set()
        for t in tags:
            if t != "O":
                prefix, _, cls_name = t.partition("-")
                if prefix not in ("B", "I") or not cls_name:
                    raise CorpusError(f"not a BIO tag: {t!r}")
                found.add(cls_name)
        if not found:
            found = {DISEASE}
        if found <= set(NCBI_CLASSES):
            return cls([c for c in NCBI_CLASSES if c in found])
        return cls(sorted(found))

    def __len__(self):
        return len(self.tags)

    def __eq__(self, other):
        return isinstance(other, TagSet) and self.tags == other.tags

    def __repr__(self):
        return f"TagSet({self.classes!r})"

    @property
    def o_id(self) -> int:
        return 0

    def begin_id(self, cls_name: str) -> int:
        return self.index[f"B-{cls_name}"]

    def inside_id(self, cls_name: str) -> int:
        return self.index[f"I-{cls_name}"]

    def split(self, tag_id: int) -> tuple[str, str | None]:
        """Return (prefix, class) for a tag index, e.g. ``("B", "Modifier")``."""
        tag = self.tags[tag_id]
        if tag == "O":
            return "O", None
        prefix, _, c = tag.partition("-")
        return prefix, c

    def is_allowed(self, prev: int | None, cur: int) -> bool:
        """Whether ``prev -> cur`` is a legal BIO transition (``prev=None`` is the start)."""
        p, c = self.split(cur)
        if p != "I":
            return True
        if prev is None:
            return False
        pp, pc = self.split(prev)
        return pp in ("B", "I") and pc == c


@dataclass
class TaggedSentence:
    tokens: list[str]
    word_ids: list[int] = field(default_factory=list)
    char_ids: list[list[int]] = field(default_factory=list)
    gold_tags: list[int] = field(default_factory=list)

    def __len__(self):
        return len(self.tokens)


@dataclass
class CorpusStats:
    sentences: int
    mentions: int
    per_class: dict[str, int]

    def rows(self) -> list[tuple[str, int]]:
        return [("sentences", self.sentences), ("mentions", self.mentions)] + list(self.per_class.items())


_DIGITS = re.compile(r"\d")


def normalize_word(token: str, mode: str = "lower-digits") -> str:
    """Normalization used for word-embedding lookup."""
    if mode == "none":
        return token
    if mode == "lower":
        return token.lower()
    if mode == "lower-digits":
        return _DIGITS.sub("0", token.lower())
    raise ValueError(f"unknown word normalization {mode!r}")


def normalize_chars(token: str) -> str:
    return token.lower()


def validate_bio(tags: Sequence[int], tagset: TagSet) -> int | None:
    """Position of the first illegal transition, or None when ``tags`` is BIO-valid."""
    prev = None
    for i, t in enumerate(tags):
        if not tagset.is_allowed(prev, t):
            return i
        prev = t
    return None


def repair_bio(tags: Sequence[int], tagset: TagSet) -> list[int]:
    """Turn every orphan ``I-x`` into ``B-x``."""
    out: list[int] = []
    prev = None
    for t in tags:
        if not tagset.is_allowed(prev, t):
            t = tagset.begin_id(tagset.split(t)[1])
        out.append(t)
        prev = t
    return out


def read_conll_blocks(text: str) -> list[list[tuple[str, str, int]]]:
    """Split CoNLL text into sentences of (token, tag, line number)."""
    blocks: list[list[tuple[str, str, int]]] = []
    cur: list[tuple[str, str, int]] = []
    for lineno, line in enumerate(text.split("\n"), 1):
        line = line.rstrip("\r")
        if not line.strip():
            if cur:
                blocks.append(cur)
                cur = []
            continue
        parts = line.split("\t")
        if len(parts) != 2 or not parts[0] or not parts[1].strip():
            raise CorpusError(f"line {lineno}: expected 'token<TAB>tag', got {line!r}")
        cur.append((parts[0], parts[1].strip(), lineno))
    if cur:
        blocks.append(cur)
    return blocks


def parse_conll(text: str, tagset: TagSet | None = None, *, repair: bool = False) -> list[TaggedSentence]:
    """Parse ``token<TAB>tag`` lines into sentences with gold tag indices.

    Word and character ids are left empty; :func:`index_corpus` fills them
    once vocabularies exist.  With ``tagset=None`` the tag set is inferred.
    """
    blocks = read_conll_blocks(text)
    if tagset is None:
        tagset = TagSet.from_tags(tag for b in blocks for _, tag, _ in b)
    sentences = []
    for sno, block in enumerate(blocks, 1):
        tags = []
        for tok, tag, lineno in block:
            if tag not in tagset.index:
                raise CorpusError(f"line {lineno}: tag {tag!r} not in tag set {tagset.tags}")
            tags.append(tagset.index[tag])
        bad = validate_bio(tags, tagset)
        if bad is not None:
            if not repair:
                tok, tag, lineno = block[bad]
                raise CorpusError(
                    f"sentence {sno} (line {lineno}), token {bad}: illegal BIO transition to {tag!r}"
                )
            tags = repair_bio(tags, tagset)
        sentences.append(TaggedSentence(tokens=[t for t, _, _ in block], gold_tags=tags))
    return sentences


def infer_tagset(text: str) -> TagSet:
    return TagSet.from_tags(tag for b in read_conll_blocks(text) for _, tag, _ in b)


def serialize_conll(corpus: Iterable[TaggedSentence], tagset: TagSet, tags: Iterable[Sequence[int]] | None = None) -> str:
    """Inverse of :func:`parse_conll`; ``tags`` overrides the gold tags."""
    out = []
    seqs = tags if tags is not None else (s.gold_tags for s in corpus)
    for sent, seq in zip(corpus, seqs):
        for tok, t in zip(sent.tokens, seq):
            out.append(f"{tok}\t{tagset.tags[t]}\n")
        out.append("\n")
    return "".join(out)


def _ranked(counter: Counter, min_freq: int) -> list[str]:
    items = [w for w, c in counter.items() if c >= min_freq and w not in SPECIALS]
    return sorted(items, key=lambda w: (-counter[w], w))


def build_vocabularies(
    corpus: Sequence[TaggedSentence], min_freq: int = 1, word_norm: str = "lower-digits"
) -> tuple[Vocabulary, Vocabulary]:
    """Word and character vocabularies, ordered by frequency then lexicographically."""
    if not corpus:
        raise CorpusError("cannot build vocabularies from an empty corpus")
    words: Counter = Counter()
    chars: Counter = Counter()
    for s in corpus:
        for tok in s.tokens:
            words[normalize_word(tok, word_norm)] += 1
            chars.update(normalize_chars(tok))
    return Vocabulary(_ranked(words, min_freq)), Vocabulary(_ranked(chars, 1))


def index_corpus(
    corpus: Iterable[TaggedSentence], words: Vocabulary, chars: Vocabulary, word_norm: str = "lower-digits"
) -> None:
    """Fill ``word_ids``/``char_ids`` in place; unknown items map to RARE."""
    for s in corpus:
        s.word_ids = [words.get(normalize_word(t, word_norm)) for t in s.tokens]
        s.char_ids = [[chars.get(c) for c in normalize_chars(t)] for t in s.tokens]


def extract_mentions(tags: Sequence[int], tagset: TagSet) -> list[tuple[int, int, str]]:
    """Maximal ``B-x (I-x)*`` runs of a BIO-valid sequence as (start, end, class), end inclusive."""
    spans = []
    start = None
    cls_name = None
    for i, t in enumerate(tags):
        p, c = tagset.split(t)
        if p == "I" and start is not None and c == cls_name:
            continue
        if start is not None:
            spans.append((start, i - 1, cls_name))
            start = None
        if p == "B":
            start, cls_name = i, c
        elif p == "I":
            raise CorpusError(f"orphan {tagset.tags[t]} at position {i}")
    if start is not None:
        spans.append((start, len(tags) - 1, cls_name))
    return spans


def corpus_stats(corpus: Sequence[TaggedSentence], tagset: TagSet) -> CorpusStats:
    per_class = {c: 0 for c in tagset.classes}
    total = 0
    for s in corpus:
        for _, _, c in extract_mentions(s.gold_tags, tagset):
            per_class[c] += 1
            total += 1
    return CorpusStats(sentences=len(corpus), mentions=total, per_class=per_class)


def flatten_to_task_a(corpus: Sequence[TaggedSentence], tagset_b: TagSet) -> tuple[list[TaggedSentence], TagSet]:
    """Collapse every entity class into DISEASE; spans are unchanged."""
    tagset_a = TagSet.task_a()
    mapping = []
    for t in range(len(tagset_b)):
        p, _ = tagset_b.split(t)
        mapping.append(tagset_a.index["O" if p == "O" else f"{p}-{DISEASE}"])
    out = [
        TaggedSentence(
            tokens=list(s.tokens),
            word_ids=list(s.word_ids),
            char_ids=[list(c) for c in s.char_ids],
            gold_tags=[mapping[t] for t in s.gold_tags],
        )
        for s in corpus
    ]
    return out, tagset_a


def load_corpus(path: str, tagset: TagSet | None = None, *, repair: bool = False) -> tuple[list[TaggedSentence], TagSet]:
    with open(path, encoding="utf-8") as f:
        text = f.read()
    if tagset is None:
        tagset = infer_tagset(text)
    return parse_conll(text, tagset, repair=repair), tagset

