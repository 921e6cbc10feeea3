"""Compare the compiled and numpy kernel backends.

    python benchmarks/bench_kernels.py [--repeat N] [--hidden H]

Prints per-kernel timings for both backends and the speed-up, then times
one training epoch end to end under each backend (in a subprocess, since
the backend is fixed at import).
"""
import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from crftagger.kernels import NAMES, backend_module

EPOCH_SNIPPET = """
import time
from crftagger.data import TagSet
from crftagger.synthetic import make_corpus
from crftagger.tensor_core import Rng
from crftagger.training import TrainConfig, train
ts = TagSet.ncbi_task_b()
corpus = make_corpus(Rng(3), 50, ts, 10, 25)
cfg = TrainConfig(epochs=1, seed=1, n_hidden={hidden}, patience=0)
t = time.perf_counter()
train(corpus, corpus[:10], cfg, Rng(1), ts)
print(time.perf_counter() - t)
"""


def workloads(hidden: int, rng: np.random.Generator) -> dict:
    n, T, H, d_chr, d_ce, k = 25, 9, hidden, 100, 25, 3
    emis = rng.normal(size=(n, T))
    trans = rng.normal(size=(T + 1, T))
    table = rng.normal(size=(d_chr, 60))
    weight = rng.normal(size=(d_ce, d_chr * k))
    bias = rng.normal(size=d_ce)
    padded_tok = rng.integers(0, 60, 12).astype(np.intp)
    lengths = rng.integers(3, 14, n)
    padded = rng.integers(0, 60, int(lengths.sum())).astype(np.intp)
    starts = np.concatenate([[0], np.cumsum(lengths)]).astype(np.intp)
    py = backend_module("python")
    _, windows, _, argmax = py.charcnn_forward(table, weight, bias, padded_tok, k)
    _, swin, sarg = py.charcnn_sentence_forward(table, weight, bias, padded, starts, k)
    W1, W4, W3 = (rng.normal(scale=0.1, size=(g * H, H)) for g in (1, 4, 3))
    pre1, pre4, pre3 = (rng.normal(size=(n, g * H)) for g in (1, 4, 3))
    h0, c0 = rng.normal(size=H), rng.normal(size=H)
    dH = rng.normal(size=(n, H))
    h1 = py.rnn_scan_forward(pre1, W1, h0)
    h4, c4, g4 = py.lstm_scan_forward(pre4, W4, h0, c0)
    h3, zr, cand, uh = py.gru_scan_forward(pre3, W3, h0)
    return {
        "crf_forward": (emis, trans),
        "crf_backward": (emis, trans),
        "crf_log_partition": (emis, trans),
        "crf_expectations": (emis, trans),
        "crf_viterbi": (emis, trans),
        "charcnn_forward": (table, weight, bias, padded_tok, k),
        "charcnn_backward": (weight, windows, argmax, rng.normal(size=d_ce)),
        "charcnn_sentence_forward": (table, weight, bias, padded, starts, k),
        "charcnn_sentence_backward": (weight, swin, sarg, rng.normal(size=(n, d_ce))),
        "rnn_scan_forward": (pre1, W1, h0),
        "rnn_scan_backward": (W1, h1, dH),
        "lstm_scan_forward": (pre4, W4, h0, c0),
        "lstm_scan_backward": (W4, h4, c4, g4, dH),
        "gru_scan_forward": (pre3, W3, h0),
        "gru_scan_backward": (W3, h3, zr, cand, uh, dH),
    }


def bench(fn, args, repeat: int) -> float:
    timer = timeit.Timer(lambda: fn(*args))
    number, _ = timer.autorange()
    return min(timer.repeat(repeat, number)) / number


def epoch_time(backend: str, hidden: int) -> float:
    env = dict(os.environ, CRFTAGGER_PURE_PYTHON="1" if backend == "python" else "0")
    out = subprocess.run([sys.executable, "-c", EPOCH_SNIPPET.format(hidden=hidden)], env=env,
                         capture_output=True, text=True, check=True)
    return float(out.stdout.strip())


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--hidden", type=int, default=100)
    ap.add_argument("--no-epoch", action="store_true", help="skip the end-to-end epoch timing")
    a = ap.parse_args(argv)
    try:
        cy = backend_module("cython")
    except ImportError:
        sys.exit("compiled backend not built; run `pip install -e . --no-build-isolation` first")
    py = backend_module("python")
    loads = workloads(a.hidden, np.random.default_rng(0))
    print(f"{'kernel':<28} {'python (us)':>12} {'cython (us)':>12} {'speed-up':>9}")
    for name in NAMES:
        tp = bench(getattr(py, name), loads[name], a.repeat) * 1e6
        tc = bench(getattr(cy, name), loads[name], a.repeat) * 1e6
        print(f"{name:<28} {tp:>12.1f} {tc:>12.1f} {tp / tc:>8.1f}x")
    if not a.no_epoch:
        tp, tc = epoch_time("python", a.hidden), epoch_time("cython", a.hidden)
        print(f"\none training epoch (50 sentences, n_H={a.hidden}): python {tp:.2f} s, cython {tc:.2f} s, "
              f"speed-up {tp / tc:.1f}x")


if __name__ == "__main__":
    main()
