"""Neural CRF tagger for disease mention recognition.

Word and character-CNN embeddings feed a bidirectional recurrent (or
window) encoder whose per-token scores are decoded by a linear-chain CRF.
"""
from .data import TagSet, TaggedSentence, Vocabulary, load_corpus, parse_conll
from .kernels import BACKEND
from .model import ModelConfig, Tagger
from .training import TrainConfig, train

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "ModelConfig",
    "TagSet",
    "TaggedSentence",
    "Tagger",
    "TrainConfig",
    "Vocabulary",
    "load_corpus",
    "parse_conll",
    "train",
]
