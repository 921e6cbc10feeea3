"""Versioned binary checkpoint container.

Layout (all integers little-endian)::

    magic   8 bytes  b"CRFTAGGR"
    version u32
    count   u32      number of sections
    section*         u16 name length, name (utf-8), u64 payload length, payload

Sections, always in this order: ``meta`` (sorted-key JSON), ``tagset``
(one class per line), ``words`` and ``chars`` (vocabulary text) and
``tensors``.  The tensor payload is a u32 count followed by, per tensor in
name order, u16 name length, name, u32 ndim, ndim u64 dims and the data as
little-endian float64 in C order.

Every field is a pure function of the model, so loading and re-saving
reproduces the input byte for byte.
"""
from __future__ import annotations

import io
import json
import struct
from dataclasses import asdict, dataclass

import numpy as np

from .data import DISEASE, TagSet, Vocabulary
from .model import ModelConfig, Tagger

MAGIC = b"CRFTAGGR"
VERSION = 1
_SECTIONS = ("meta", "tagset", "words", "chars", "tensors")


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    model: Tagger
    train_config: dict | None = None  # snapshot of the TrainConfig used, if any

    @property
    def task(self) -> str:
        return "A" if self.model.tagset.classes == [DISEASE] else "B"


def _put_name(buf: io.BytesIO, name: str, width: str) -> None:
    raw = name.encode("utf-8")
    buf.write(struct.pack("<" + width, len(raw)))
    buf.write(raw)


def _tensor_payload(params: dict[str, np.ndarray]) -> bytes:
    buf = io.BytesIO()
    buf.write(struct.pack("<I", len(params)))
    for name in sorted(params):
        arr = np.ascontiguousarray(params[name], dtype="<f8")
        _put_name(buf, name, "H")
        buf.write(struct.pack("<I", arr.ndim))
        buf.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        buf.write(arr.tobytes(order="C"))
    return buf.getvalue()


def to_bytes(ckpt: Checkpoint) -> bytes:
    m = ckpt.model
    meta = {
        "format_version": VERSION,
        "task": ckpt.task,
        "model": asdict(m.config),
        "train_config": ckpt.train_config,
    }
    payloads = {
        "meta": json.dumps(meta, sort_keys=True, separators=(",", ":")).encode("utf-8"),
        "tagset": "".join(c + "\n" for c in m.tagset.classes).encode("utf-8"),
        "words": m.words.to_text().encode("utf-8"),
        "chars": m.chars.to_text().encode("utf-8"),
        "tensors": _tensor_payload(m.params),
    }
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<II", VERSION, len(_SECTIONS)))
    for name in _SECTIONS:
        _put_name(buf, name, "H")
        buf.write(struct.pack("<Q", len(payloads[name])))
        buf.write(payloads[name])
    return buf.getvalue()


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CheckpointError(f"truncated checkpoint (wanted {n} bytes at offset {self.pos})")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack("<" + fmt, self.take(struct.calcsize("<" + fmt)))

    def name(self, width: str = "H") -> str:
        (n,) = self.unpack(width)
        return self.take(n).decode("utf-8")


def _read_tensors(payload: bytes) -> dict[str, np.ndarray]:
    r = _Reader(payload)
    (count,) = r.unpack("I")
    out = {}
    for _ in range(count):
        name = r.name()
        (ndim,) = r.unpack("I")
        shape = r.unpack(f"{ndim}Q") if ndim else ()
        size = int(np.prod(shape)) if ndim else 1
        arr = np.frombuffer(r.take(8 * size), dtype="<f8").astype(np.float64).reshape(shape)
        out[name] = arr
    if r.pos != len(payload):
        raise CheckpointError("trailing bytes in tensor section")
    return out


def from_bytes(data: bytes) -> Checkpoint:
    r = _Reader(data)
    if r.take(len(MAGIC)) != MAGIC:
        raise CheckpointError("not a crftagger checkpoint (bad magic)")
    version, count = r.unpack("II")
    if version != VERSION:
        raise CheckpointError(f"checkpoint format version {version} is not supported (expected {VERSION})")
    sections = {}
    for _ in range(count):
        name = r.name()
        (length,) = r.unpack("Q")
        sections[name] = r.take(length)
    if r.pos != len(data):
        raise CheckpointError("trailing bytes after the last section")
    missing = [s for s in _SECTIONS if s not in sections]
    if missing:
        raise CheckpointError(f"checkpoint lacks sections {missing}")
    meta = json.loads(sections["meta"].decode("utf-8"))
    try:
        config = ModelConfig(**meta["model"])
    except (TypeError, ValueError) as e:
        raise CheckpointError(f"bad model configuration in checkpoint: {e}") from None
    classes = sections["tagset"].decode("utf-8").split("\n")[:-1]
    model = Tagger(
        config,
        TagSet(classes),
        Vocabulary.from_text(sections["words"].decode("utf-8")),
        Vocabulary.from_text(sections["chars"].decode("utf-8")),
        _read_tensors(sections["tensors"]),
    )
    try:
        model.validate()
    except ValueError as e:
        raise CheckpointError(str(e)) from None
    return Checkpoint(model, meta.get("train_config"))


def save(path: str, ckpt: Checkpoint) -> None:
    with open(path, "wb") as f:
        f.write(to_bytes(ckpt))


def load(path: str) -> Checkpoint:
    with open(path, "rb") as f:
        return from_bytes(f.read())
