import pytest

from crftagger import ncbi
from crftagger.data import TagSet, extract_mentions, parse_conll

SAMPLE = (
    "10021369|t|Identification of APC2, a homologue of the adenomatous polyposis coli tumour suppressor.\n"
    "10021369|a|The adenomatous polyposis coli (APC) tumour-suppressor protein controls the Wnt pathway. "
    "Loss of APC causes familial adenomatous polyposis. 2 genes were studied.\n"
    "10021369\t43\t69\tadenomatous polyposis coli\tModifier\tD011125\n"
    "10021369\t70\t76\ttumour\tModifier\tD009369\n"
    "10021369\t93\t119\tadenomatous polyposis coli\tModifier\tD011125\n"
    "10021369\t121\t124\tAPC\tModifier\tD011125\n"
    "10021369\t126\t132\ttumour\tModifier\tD009369\n"
    "\n"
    "9988888|t|Hereditary breast and ovarian cancer in BRCA1 carriers.\n"
    "9988888|a|Inherited breast cancer is common.\n"
    "9988888\t0\t36\tHereditary breast and ovarian cancer\tCompositeMention\tD001\n"
    "9988888\t56\t79\tInherited breast cancer\tSpecificDisease\tD002\n"
    "9988888\t66\t79\tbreast cancer\tSpecificDisease\tD003\n"
)


def test_offsets_reproject_to_original_annotations():
    sents = ncbi.convert(SAMPLE)
    docs = ncbi.parse_pubtator(SAMPLE)
    expected = set()
    for d in docs:
        for a in ncbi._non_overlapping(d.annotations):
            expected.add((d.pmid, a.start, a.end, a.category))
    assert set(ncbi.reproject(sents)) == expected


def test_token_offsets_index_the_document_text():
    docs = {d.pmid: d.text for d in ncbi.parse_pubtator(SAMPLE)}
    for s in ncbi.convert(SAMPLE):
        for tok, (a, b) in zip(s.tokens, s.offsets):
            assert docs[s.pmid][a:b] == tok


def test_conll_output_parses_and_keeps_mentions():
    sents = ncbi.convert(SAMPLE)
    corpus = parse_conll(ncbi.to_conll(sents), TagSet.ncbi_task_b())
    n = sum(len(extract_mentions(s.gold_tags, TagSet.ncbi_task_b())) for s in corpus)
    assert n == len(ncbi.reproject(sents))


def test_sentence_split():
    sents = ncbi.convert(SAMPLE)
    first_doc = [s for s in sents if s.pmid == "10021369"]
    # title, two abstract sentences ending in '.', and one starting with a digit
    assert len(first_doc) == 4
    assert first_doc[-1].tokens[0] == "2"


def test_nested_mention_keeps_the_container():
    sents = [s for s in ncbi.convert(SAMPLE) if s.pmid == "9988888"]
    tags = sents[1].tags
    assert tags[:3] == ["B-SpecificDisease", "I-SpecificDisease", "I-SpecificDisease"]


def test_bad_offsets_rejected():
    bad = "1|t|Some disease here.\n1\t0\t4\tdise\tModifier\tX\n"
    with pytest.raises(ncbi.NcbiFormatError, match="offsets"):
        ncbi.convert(bad)


def test_annotation_before_title_rejected():
    with pytest.raises(ncbi.NcbiFormatError, match="line 1"):
        ncbi.convert("1\t0\t4\tdise\tModifier\tX\n")


def test_offsets_sidecar_lines_match_tokens():
    sents = ncbi.convert(SAMPLE)
    side = [ln for ln in ncbi.to_offsets(sents).split("\n") if ln]
    assert len(side) == sum(len(s.tokens) for s in sents)
