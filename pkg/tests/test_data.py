import re

import pytest
from hypothesis import given
from hypothesis import strategies as st

from crftagger.data import (
    DISEASE,
    PAD_LEFT,
    PAD_RIGHT,
    RARE,
    RARE_ID,
    CorpusError,
    TagSet,
    TaggedSentence,
    Vocabulary,
    build_vocabularies,
    corpus_stats,
    extract_mentions,
    flatten_to_task_a,
    index_corpus,
    infer_tagset,
    load_corpus,
    normalize_word,
    parse_conll,
    repair_bio,
    serialize_conll,
    validate_bio,
)

TB = TagSet.ncbi_task_b()
token_text = st.text(st.characters(blacklist_categories=("Cs", "Cc", "Zs", "Zl", "Zp")), min_size=1, max_size=8)


@st.composite
def bio_sequences(draw, tagset=TB, min_size=1, max_size=12):
    """BIO-valid tag-id sequences, built left to right."""
    n = draw(st.integers(min_size, max_size))
    out, prev = [], None
    for _ in range(n):
        options = [t for t in range(len(tagset)) if tagset.is_allowed(prev, t)]
        t = draw(st.sampled_from(options))
        out.append(t)
        prev = t
    return out


@st.composite
def corpora(draw, tagset=TB, max_sentences=6):
    sents = []
    for _ in range(draw(st.integers(1, max_sentences))):
        tags = draw(bio_sequences(tagset))
        toks = draw(st.lists(token_text, min_size=len(tags), max_size=len(tags)))
        sents.append(TaggedSentence(tokens=toks, gold_tags=tags))
    return sents


def test_tagset_layouts():
    assert TagSet.task_a().tags == ["O", "B-DISEASE", "I-DISEASE"]
    assert len(TB) == 9 and TB.tags.count("O") == 1
    for t in TB.tags[1:]:
        p, c = TB.split(TB.index[t])
        assert p in "BI" and c in TB.classes


def test_vocabulary_specials_and_inverse():
    v = Vocabulary(["x", "y"])
    assert v.items[:3] == [RARE, PAD_LEFT, PAD_RIGHT]
    assert all(v.index[it] == i for i, it in enumerate(v.items))
    assert v.get("missing") == RARE_ID
    assert Vocabulary.from_text(v.to_text()) == v
    with pytest.raises(CorpusError):
        Vocabulary.from_text("a\nb\n")


def test_parse_minimal_sentence():
    (s,) = parse_conll("Ataxia\tB-Modifier\n.\tO\n\n", TB)
    assert s.tokens == ["Ataxia", "."]
    assert s.gold_tags == [TB.index["B-Modifier"], 0]


def test_parse_rejects_orphan_inside():
    with pytest.raises(CorpusError, match="sentence 1.*token 0"):
        parse_conll("x\tI-SpecificDisease\n\n", TB)


def test_parse_repair_turns_orphan_into_begin():
    (s,) = parse_conll("x\tI-SpecificDisease\ny\tI-SpecificDisease\n\n", TB, repair=True)
    assert [TB.tags[t] for t in s.gold_tags] == ["B-SpecificDisease", "I-SpecificDisease"]


def test_parse_malformed_line_reports_line_number():
    with pytest.raises(CorpusError, match="line 2"):
        parse_conll("a\tO\nbroken line\n", TB)


def test_parse_unknown_tag():
    with pytest.raises(CorpusError, match="not in tag set"):
        parse_conll("a\tB-Nope\n", TB)


def test_crlf_input():
    (s,) = parse_conll("a\tO\r\nb\tB-Modifier\r\n\r\n", TB)
    assert s.tokens == ["a", "b"]


def test_infer_tagset_orders_ncbi_classes():
    ts = infer_tagset("a\tB-Modifier\nb\tB-SpecificDisease\n")
    assert ts.classes == ["SpecificDisease", "Modifier"]
    assert infer_tagset("a\tO\n").classes == [DISEASE]


def test_vocab_frequency_order():
    words, _ = build_vocabularies([TaggedSentence(tokens=["a", "b", "a"])])
    assert words.items[3:] == ["a", "b"]


def test_vocab_deterministic(tiny_corpus):
    corpus, words, chars = tiny_corpus
    w2, c2 = build_vocabularies(corpus)
    assert w2.to_text() == words.to_text() and c2.to_text() == chars.to_text()


def test_vocab_empty_corpus():
    with pytest.raises(CorpusError):
        build_vocabularies([])


def test_char_vocab_is_exactly_the_character_set(tiny_corpus):
    corpus, _, chars = tiny_corpus
    raw = {c for s in corpus for t in s.tokens for c in t.lower()}
    assert set(chars.items[3:]) == raw
    assert len(chars.items[3:]) == len(raw)


def test_min_freq_and_unknown_words():
    corpus = [TaggedSentence(tokens=["a", "a", "b"])]
    words, chars = build_vocabularies(corpus, min_freq=2)
    assert "b" not in words
    index_corpus(corpus, words, chars)
    assert corpus[0].word_ids[2] == RARE_ID


def test_word_normalization_default_maps_digits():
    assert normalize_word("BRCA1") == "brca0"
    assert normalize_word("BRCA1", "lower") == "brca1"
    assert normalize_word("BRCA1", "none") == "BRCA1"


def test_stats_two_mentions():
    ts = TagSet.task_a()
    s = TaggedSentence(tokens=list("abcd"), gold_tags=[1, 2, 0, 1])
    st_ = corpus_stats([s], ts)
    assert (st_.sentences, st_.mentions) == (1, 2)


def _tag_string(tags, tagset):
    return " ".join(tagset.tags[t] for t in tags) + " "


@given(corpora())
def test_stats_match_regex_oracle(corpus):
    stats = corpus_stats(corpus, TB)
    for c in TB.classes:
        pat = re.compile(rf"B-{c} (?:I-{c} )*")
        assert stats.per_class[c] == sum(len(pat.findall(_tag_string(s.gold_tags, TB))) for s in corpus)
    assert sum(stats.per_class.values()) == stats.mentions
    assert stats.sentences == len(corpus)


def test_flatten_mapping():
    ts = TagSet(["Modifier"])
    s = TaggedSentence(tokens=list("abc"), gold_tags=[1, 2, 0])
    (f,), ta = flatten_to_task_a([s], ts)
    assert [ta.tags[t] for t in f.gold_tags] == ["B-DISEASE", "I-DISEASE", "O"]


@given(corpora())
def test_flatten_preserves_boundaries(corpus):
    flat, ta = flatten_to_task_a(corpus, TB)
    for s, f in zip(corpus, flat):
        assert validate_bio(f.gold_tags, ta) is None
        b = [(a, e) for a, e, _ in extract_mentions(s.gold_tags, TB)]
        # adjacent mentions of different classes merge only if the second starts with I, which BIO forbids
        assert [(a, e) for a, e, _ in extract_mentions(f.gold_tags, ta)] == b


@given(corpora())
def test_parse_serialize_roundtrip(corpus):
    text = serialize_conll(corpus, TB)
    again = parse_conll(text, TB)
    assert [s.tokens for s in again] == [s.tokens for s in corpus]
    assert [s.gold_tags for s in again] == [s.gold_tags for s in corpus]
    assert serialize_conll(again, TB) == text


@given(st.lists(st.integers(0, len(TB) - 1), min_size=1, max_size=12))
def test_repair_always_yields_valid_bio(tags):
    fixed = repair_bio(tags, TB)
    assert validate_bio(fixed, TB) is None
    if validate_bio(tags, TB) is None:
        assert fixed == tags


def test_load_corpus(tmp_path):
    p = tmp_path / "c.tsv"
    p.write_text("a\tB-Modifier\nb\tO\n\nc\tO\n", encoding="utf-8")
    corpus, ts = load_corpus(str(p))
    assert len(corpus) == 2 and ts.classes == ["Modifier"]


def test_vocab_stable_across_processes(tmp_path):
    import os
    import subprocess
    import sys

    from crftagger.synthetic import make_corpus
    from crftagger.tensor_core import Rng

    ts = TagSet.ncbi_task_b()
    path = tmp_path / "c.tsv"
    path.write_text(serialize_conll(make_corpus(Rng(3), 15, ts), ts), encoding="utf-8")
    prog = ("import sys\nfrom crftagger.data import TagSet, parse_conll, build_vocabularies\n"
            "c = parse_conll(open(sys.argv[1], encoding='utf-8').read(), TagSet.ncbi_task_b())\n"
            "w, ch = build_vocabularies(c)\nsys.stdout.write(w.to_text() + ch.to_text())\n")
    outs = set()
    for hashseed in ("0", "1", "12345"):
        env = {**os.environ, "PYTHONHASHSEED": hashseed}
        outs.add(subprocess.run([sys.executable, "-c", prog, str(path)], env=env, check=True,
                                capture_output=True, text=True).stdout)
    assert len(outs) == 1
