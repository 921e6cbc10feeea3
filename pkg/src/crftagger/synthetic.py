"""Small generated BIO corpora for memorisation, ablation and smoke tests.

Sentences mix context words with entity phrases.  An entity's class is a
function of its first word and entity phrases never touch, so the gold
tagging is a deterministic function of the token sequence and a model of
sufficient capacity can fit it exactly.
"""
from __future__ import annotations

from .data import TagSet, TaggedSentence
from .tensor_core import Rng

CONTEXT = tuple((
    "the patients with a of in and was were to for by from showed had no "
    "history family cases risk study gene mutation analysis"
).split())
# O-words that a pretrained vector file is assumed not to cover
RARE_CONTEXT = ("brca", "ctg", "exon", "pmid", "locus", "allele")
ENTITY_HEADS = ("ataxia", "cancer", "dystrophy", "hemophilia", "tumour", "anemia", "myopathy", "ALD", "HNPCC", "DM")
ENTITY_TAILS = ("type", "syndrome", "disease", "deficiency", "1")


def make_corpus(rng: Rng, n_sentences: int = 20, tagset: TagSet | None = None,
                min_len: int = 5, max_len: int = 10) -> list[TaggedSentence]:
    tagset = tagset or TagSet.ncbi_task_b()
    head_class = {h: tagset.classes[i % len(tagset.classes)] for i, h in enumerate(ENTITY_HEADS)}
    context = (*CONTEXT, *RARE_CONTEXT)
    out = []
    for _ in range(n_sentences):
        length = int(rng.integers(min_len, max_len + 1))
        tokens: list[str] = []
        tags: list[int] = []
        while len(tokens) < length:
            can_start_entity = not tags or tagset.split(tags[-1])[0] == "O"
            if can_start_entity and rng.uniform(0, 1, 1)[0] < 0.3:
                head = ENTITY_HEADS[int(rng.integers(0, len(ENTITY_HEADS)))]
                c = head_class[head]
                phrase = [head] + [ENTITY_TAILS[int(rng.integers(0, len(ENTITY_TAILS)))]
                                   for _ in range(int(rng.integers(0, 3)))]
                tokens += phrase
                tags += [tagset.begin_id(c)] + [tagset.inside_id(c)] * (len(phrase) - 1)
            else:
                tokens.append(context[int(rng.integers(0, len(context)))])
                tags.append(tagset.o_id)
        out.append(TaggedSentence(tokens=tokens, gold_tags=tags))
    return out


def write_partial_vectors(path: str, rng: Rng, dim: int, rare_token: str = "<RARE>") -> None:
    """Vector file covering only the common context words plus a rare-word vector."""
    with open(path, "w", encoding="utf-8") as f:
        f.write(f"{len(CONTEXT) + 1} {dim}\n")
        for w in (rare_token, *CONTEXT):
            f.write(w + " " + " ".join(repr(float(x)) for x in rng.uniform(-0.5, 0.5, dim)) + "\n")
