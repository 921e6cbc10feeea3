import struct

import numpy as np
import pytest

from crftagger import checkpoint
from crftagger.checkpoint import Checkpoint, CheckpointError, from_bytes, to_bytes
from crftagger.data import TagSet, build_vocabularies
from crftagger.model import ModelConfig, Tagger
from crftagger.synthetic import make_corpus
from crftagger.tensor_core import Rng


def small_model(ts, arch="bigru", regime="we+ce", seed=0):
    corpus = make_corpus(Rng(seed), 6, ts)
    words, chars = build_vocabularies(corpus)
    cfg = ModelConfig(regime=regime, architecture=arch, n_hidden=4, d_we=5, d_chr=3, d_ce=2)
    return Tagger.initialize(cfg, ts, words, chars, Rng(seed)), corpus


@pytest.mark.parametrize("arch", ["birnn", "bilstm", "bigru", "window"])
@pytest.mark.parametrize("regime", ["we", "ce", "we+ce"])
def test_roundtrip_is_byte_identical(arch, regime, task_b, tmp_path):
    model, corpus = small_model(task_b, arch, regime)
    data = to_bytes(Checkpoint(model, {"epochs": 3}))
    back = from_bytes(data)
    assert to_bytes(back) == data
    assert back.train_config == {"epochs": 3}
    for k, v in model.params.items():
        assert back.model.params[k].tobytes() == v.tobytes()
    model.index(corpus)
    back.model.index(corpus)
    assert [model.predict(s) for s in corpus] == [back.model.predict(s) for s in corpus]
    checkpoint.save(str(tmp_path / "m.ckpt"), back)
    assert (tmp_path / "m.ckpt").read_bytes() == data


def test_task_label():
    model, _ = small_model(TagSet.task_a())
    assert Checkpoint(model).task == "A"
    model, _ = small_model(TagSet.ncbi_task_b())
    assert Checkpoint(model).task == "B"


def test_bad_magic_version_and_truncation(task_b):
    data = to_bytes(Checkpoint(small_model(task_b)[0]))
    with pytest.raises(CheckpointError, match="magic"):
        from_bytes(b"X" + data[1:])
    bumped = data[:8] + struct.pack("<I", checkpoint.VERSION + 1) + data[12:]
    with pytest.raises(CheckpointError, match="version"):
        from_bytes(bumped)
    with pytest.raises(CheckpointError, match="truncated"):
        from_bytes(data[:-3])
    with pytest.raises(CheckpointError, match="trailing"):
        from_bytes(data + b"\0")


def test_shape_corruption_is_rejected(task_b):
    model, _ = small_model(task_b)
    model.params["crf.trans"] = np.zeros((3, 3))
    with pytest.raises(CheckpointError):
        from_bytes(to_bytes(Checkpoint(model)))
