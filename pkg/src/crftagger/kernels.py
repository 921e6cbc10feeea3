"""Backend selection for the hot loops.

The compiled ``_ckernels`` extension is used when it imports; otherwise
(or when ``CRFTAGGER_PURE_PYTHON=1``) the numpy reference in
``_pykernels`` is used.  Both expose the same functions.
"""
import os

from . import _pykernels

BACKEND = "python"
_impl = _pykernels
if os.environ.get("CRFTAGGER_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:
        pass

NAMES = (
    "crf_forward",
    "crf_backward",
    "crf_log_partition",
    "crf_expectations",
    "crf_viterbi",
    "charcnn_forward",
    "charcnn_backward",
    "charcnn_sentence_forward",
    "charcnn_sentence_backward",
    "rnn_scan_forward",
    "rnn_scan_backward",
    "lstm_scan_forward",
    "lstm_scan_backward",
    "gru_scan_forward",
    "gru_scan_backward",
)

crf_forward = _impl.crf_forward
crf_backward = _impl.crf_backward
crf_log_partition = _impl.crf_log_partition
crf_expectations = _impl.crf_expectations
crf_viterbi = _impl.crf_viterbi
charcnn_forward = _impl.charcnn_forward
charcnn_backward = _impl.charcnn_backward
charcnn_sentence_forward = _impl.charcnn_sentence_forward
charcnn_sentence_backward = _impl.charcnn_sentence_backward
rnn_scan_forward = _impl.rnn_scan_forward
rnn_scan_backward = _impl.rnn_scan_backward
lstm_scan_forward = _impl.lstm_scan_forward
lstm_scan_backward = _impl.lstm_scan_backward
gru_scan_forward = _impl.gru_scan_forward
gru_scan_backward = _impl.gru_scan_backward


def backend_module(name: str):
    """Return the kernel module for ``"python"`` or ``"cython"`` (tests and benchmarks)."""
    if name == "python":
        return _pykernels
    if name == "cython":
        from . import _ckernels

        return _ckernels
    raise ValueError(f"unknown backend {name!r}")
