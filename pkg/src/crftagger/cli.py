"""Command-line interface: ``crftagger <verb> [flags]``.

Verbs: convert, stats, train, eval, tag, gradcheck, matrix.  Every verb
accepts ``--config path.json``; keys in that file (flag names with dashes
or underscores) act as defaults that explicit flags override.

Exit codes: 0 success, 1 runtime or data error, 2 usage error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

from . import checkpoint, ncbi
from .data import (
    DISEASE,
    NCBI_CLASSES,
    CorpusError,
    TagSet,
    TaggedSentence,
    corpus_stats,
    flatten_to_task_a,
    infer_tagset,
    parse_conll,
    read_conll_blocks,
    serialize_conll,
)
from .embeddings import ConfigError
from .encoders import Architecture
from .evaluation import corpus_spans, error_report, evaluate, format_error_report, format_json, format_table
from .model import ModelConfig
from .tensor_core import Rng
from .training import TrainConfig, TrainingError, evaluate_model, grad_check, grad_check_crf, train


class UsageError(Exception):
    pass


# -- flag handling -----------------------------------------------------------

def _layer(args: argparse.Namespace, defaults: dict, required: tuple[str, ...] = ()) -> dict:
    """defaults < --config file < explicit flags."""
    opts = dict(defaults)
    given = {k: v for k, v in vars(args).items() if k not in ("func", "config")}
    cfg_path = getattr(args, "config", None)
    if cfg_path:
        try:
            with open(cfg_path, encoding="utf-8") as f:
                cfg = json.load(f)
        except (OSError, json.JSONDecodeError) as e:
            raise UsageError(f"cannot read --config {cfg_path}: {e}") from None
        if not isinstance(cfg, dict):
            raise UsageError(f"--config {cfg_path} must hold a JSON object")
        for k, v in cfg.items():
            key = k.replace("-", "_")
            if key not in defaults:
                raise UsageError(f"unknown key {k!r} in --config {cfg_path}")
            opts[key] = v
    opts.update(given)
    missing = [k for k in required if opts.get(k) in (None, "")]
    if missing:
        raise UsageError("missing required option(s): " + ", ".join("--" + m.replace("_", "-") for m in missing))
    return opts


def _read(path: str) -> str:
    if path == "-":
        return sys.stdin.read()
    with open(path, encoding="utf-8") as f:
        return f.read()


def _write(path: str | None, text: str) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
        return
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(text)


def _task_tagset(task: str, texts: list[str]) -> TagSet:
    if task == "a":
        return TagSet.task_a()
    found = set()
    for t in texts:
        found.update(infer_tagset(t).classes)
    if found <= set(NCBI_CLASSES) | {DISEASE} and DISEASE not in found:
        return TagSet.ncbi_task_b()
    return TagSet(sorted(found))


def _load_for_task(text: str, task: str, tagset: TagSet, repair: bool) -> list[TaggedSentence]:
    """Parse ``text``; for Task A a multi-class file is flattened to DISEASE."""
    if task == "a":
        src = infer_tagset(text)
        corpus = parse_conll(text, src, repair=repair)
        if src.classes != [DISEASE]:
            corpus, _ = flatten_to_task_a(corpus, src)
        return corpus
    return parse_conll(text, tagset, repair=repair)


# -- train -------------------------------------------------------------------

TRAIN_DEFAULTS = {
    "train": None,
    "dev": None,
    "task": "b",
    "arch": "bilstm",
    "features": "we+ce",
    "seed": 0,
    "epochs": 50,
    "lr": 0.02,
    "hidden": 100,
    "dim_we": 50,
    "dim_chr": 100,
    "dim_ce": 25,
    "vectors": None,
    "word_init": "auto",
    "freeze_words": False,
    "patience": 5,
    "clip": 5.0,
    "no_shuffle": False,
    "min_freq": 1,
    "constrain_bio": False,
    "repair_bio": False,
    "out": "model.ckpt",
    "report": None,
}


def _train_config(o: dict) -> TrainConfig:
    return TrainConfig(
        epochs=int(o["epochs"]),
        seed=int(o["seed"]),
        learning_rate=float(o["lr"]),
        shuffle=not o["no_shuffle"],
        regime=o["features"],
        architecture=o["arch"],
        n_hidden=int(o["hidden"]),
        d_we=int(o["dim_we"]),
        d_chr=int(o["dim_chr"]),
        d_ce=int(o["dim_ce"]),
        constrain_bio=bool(o["constrain_bio"]),
        update_word_vectors=not o["freeze_words"],
        init_word_vectors=o["word_init"],
        vectors=o["vectors"],
        min_freq=int(o["min_freq"]),
        clip_norm=float(o["clip"]) if o["clip"] not in (None, 0) else None,
        patience=int(o["patience"]),
    )


def _check_choices(o: dict) -> None:
    if o["task"] not in ("a", "b"):
        raise UsageError(f"--task must be a or b, got {o['task']!r}")
    if o["arch"] not in [a.value for a in Architecture]:
        raise UsageError(f"unknown --arch {o['arch']!r}")
    if o["features"] not in ("ce", "we", "we+ce"):
        raise UsageError(f"unknown --features {o['features']!r}")


def cmd_train(args) -> int:
    o = _layer(args, TRAIN_DEFAULTS, required=("train", "dev"))
    _check_choices(o)
    try:
        cfg = _train_config(o)
    except ConfigError as e:
        raise UsageError(str(e)) from None
    train_text, dev_text = _read(o["train"]), _read(o["dev"])
    tagset = _task_tagset(o["task"], [train_text, dev_text])
    corpus = _load_for_task(train_text, o["task"], tagset, o["repair_bio"])
    dev = _load_for_task(dev_text, o["task"], tagset, o["repair_bio"])
    model, report = train(corpus, dev, cfg, Rng(cfg.seed), tagset)
    checkpoint.save(o["out"], checkpoint.Checkpoint(model, asdict(cfg)))
    _write(o["report"] or o["out"] + ".report.txt", report.to_text())
    print(f"best epoch {report.best_epoch}: dev F1 {100 * report.best_f1:.2f}; checkpoint written to {o['out']}")
    return 0


# -- tag / eval ----------------------------------------------------------------

def _token_blocks(text: str) -> list[list[str]]:
    """Sentences of tokens from one-token-per-line input; extra tab columns are ignored."""
    blocks, cur = [], []
    for line in text.split("\n"):
        line = line.rstrip("\r")
        if not line.strip():
            if cur:
                blocks.append(cur)
                cur = []
            continue
        cur.append(line.split("\t", 1)[0])
    if cur:
        blocks.append(cur)
    return blocks


def _predict(model, corpus: list[TaggedSentence]) -> list[list[int]]:
    model.index(corpus)
    return [model.predict(s) for s in corpus]


def cmd_tag(args) -> int:
    o = _layer(args, {"model": None, "input": "-", "output": None}, required=("model",))
    ck = checkpoint.load(o["model"])
    corpus = [TaggedSentence(tokens=toks) for toks in _token_blocks(_read(o["input"]))]
    tags = _predict(ck.model, corpus) if corpus else []
    _write(o["output"], serialize_conll(corpus, ck.model.tagset, tags))
    return 0


def cmd_eval(args) -> int:
    o = _layer(args, {"model": None, "gold": None, "json": False, "macro": False, "errors": None,
                      "output": None, "flatten": False, "repair_bio": False},
               required=("model", "gold"))
    ck = checkpoint.load(o["model"])
    model = ck.model
    text = _read(o["gold"])
    blocks = read_conll_blocks(text)
    found = {tag.split("-", 1)[1] for b in blocks for _, tag, _ in b if "-" in tag}
    if o["flatten"] and model.tagset.classes == [DISEASE]:
        gold = _load_for_task(text, "a", model.tagset, o["repair_bio"])
    else:
        extra = found - set(model.tagset.classes)
        if extra:
            raise CorpusError(f"gold file uses classes {sorted(extra)} unknown to the checkpoint's tag set "
                              f"{model.tagset.classes}")
        gold = parse_conll(text, model.tagset, repair=o["repair_bio"])
    pred = _predict(model, gold)
    g = corpus_spans((s.gold_tags for s in gold), model.tagset)
    p = corpus_spans(pred, model.tagset)
    res = evaluate(g, p, model.tagset.classes)
    _write(o["output"], format_json(res) if o["json"] else format_table(res, macro=o["macro"]))
    if o["errors"]:
        _write(o["errors"], format_error_report(error_report(g, p, [s.tokens for s in gold])))
    return 0


# -- stats / convert / gradcheck -------------------------------------------------

def cmd_stats(args) -> int:
    o = _layer(args, {"corpus": None, "json": False, "repair_bio": False}, required=("corpus",))
    out = {}
    for path in o["corpus"]:
        text = _read(path)
        tagset = _task_tagset("b", [text])
        out[path] = corpus_stats(parse_conll(text, tagset, repair=o["repair_bio"]), tagset)
    if o["json"]:
        print(json.dumps({p: dict(s.rows()) for p, s in out.items()}, indent=2, sort_keys=True))
        return 0
    for path, s in out.items():
        print(path)
        for name, n in s.rows():
            print(f"  {name:<20} {n:>7}")
    return 0


def cmd_convert(args) -> int:
    o = _layer(args, {"input": None, "output": None, "offsets": None}, required=("input",))
    sentences = ncbi.convert(_read(o["input"]))
    _write(o["output"], ncbi.to_conll(sentences))
    if o["offsets"]:
        _write(o["offsets"], ncbi.to_offsets(sentences))
    return 0


def cmd_gradcheck(args) -> int:
    o = _layer(args, {"arch": None, "features": None, "seed": 0, "tolerance": 1e-4, "hidden": 4})
    archs = [o["arch"]] if o["arch"] else [a.value for a in Architecture]
    regimes = [o["features"]] if o["features"] else ["ce", "we", "we+ce"]
    if int(o["hidden"]) > 5:
        raise UsageError("--hidden must be at most 5 for a gradient check")
    rng = Rng(int(o["seed"]))
    ok = True
    crf_rep = grad_check_crf(rng)
    reports = [crf_rep]
    for a in archs:
        for r in regimes:
            mc = ModelConfig(regime=r, architecture=a, n_hidden=int(o["hidden"]), d_we=5, d_chr=4, d_ce=3)
            reports.append(grad_check(mc, rng, float(o["tolerance"])))
    for rep in reports:
        for line in rep.lines():
            print(line)
        for note in rep.notes:
            print(f"# {rep.label}: {note}")
        ok &= rep.passed
    return 0 if ok else 1


# -- matrix --------------------------------------------------------------------

@dataclass(frozen=True)
class Cell:
    arch: str
    features: str
    init: str = "auto"  # auto | pretrained | zeros | random
    frozen: bool = False

    def name(self) -> str:
        n = ModelConfig(regime=self.features, architecture=self.arch).name()
        if "we" in self.features.split("+") and self.init in ("zeros", "random"):
            # non-pretrained word vectors: WE becomes RV (zero start) or RV-rand
            n = n.replace("+WE", "+RV" if self.init == "zeros" else "+RV-rand")
        if self.frozen:
            n += " (frozen)"
        return n


@dataclass
class ExperimentSpec:
    train: str
    dev: str
    test: str | None = None
    task: str = "b"
    seeds: list[int] = field(default_factory=lambda: [0])
    vectors: str | None = None
    options: dict = field(default_factory=dict)  # TrainConfig overrides shared by all cells
    cells: list[Cell] = field(default_factory=list)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentSpec":
        d = dict(d)
        try:
            cells = [Cell(**c) for c in d.pop("cells", [])]
            spec = cls(**d, cells=cells)
        except TypeError as e:
            raise UsageError(f"bad experiment spec: {e}") from None
        if not spec.cells:
            raise UsageError("experiment spec has no cells")
        if len(set(spec.cells)) != len(spec.cells):
            raise UsageError("experiment spec lists a cell twice")
        if spec.task not in ("a", "b"):
            raise UsageError(f"task must be a or b, got {spec.task!r}")
        return spec


def _run_cell(job):
    """Train one (cell, seed) pair; returns (Val result dict, Test result dict | None)."""
    spec, cell, seed, texts = job
    tagset = _task_tagset(spec.task, [t for t in texts if t is not None])
    corpora = [_load_for_task(t, spec.task, tagset, False) if t is not None else None for t in texts]
    opts = dict(spec.options)
    opts.update(seed=seed, architecture=cell.arch, regime=cell.features, init_word_vectors=cell.init,
                update_word_vectors=not cell.frozen, vectors=spec.vectors)
    cfg = TrainConfig.from_dict(opts)
    model, _ = train(corpora[0], corpora[1], cfg, Rng(seed), tagset)
    val = evaluate_model(model, corpora[1])
    test = None
    if corpora[2] is not None:
        model.index(corpora[2])
        test = evaluate_model(model, corpora[2])
    return val.as_dict(), test.as_dict() if test else None


def _mean(rows: list[dict], key: str) -> float:
    return sum(r[key] for r in rows) / len(rows)


def format_matrix(task: str, results: list[tuple[str, list | str]]) -> str:
    lines = ["Task\tModel\tVal P\tVal R\tVal F1\tTest P\tTest R\tTest F1"]
    for name, res in results:
        if isinstance(res, str):
            lines.append(f"{task.upper()}\t{name}\tFAILED: {res}")
            continue
        cols = []
        for part in (0, 1):
            rows = [r[part] for r in res if r[part] is not None]
            if rows:
                cols += [f"{100 * _mean(rows, k):.2f}" for k in ("precision", "recall", "f1")]
            else:
                cols += ["-", "-", "-"]
        lines.append("\t".join([task.upper(), name, *cols]))
    return "\n".join(lines) + "\n"


def cmd_matrix(args) -> int:
    o = _layer(args, {"spec": None, "jobs": 1, "output": None}, required=("spec",))
    try:
        spec = ExperimentSpec.from_dict(json.loads(_read(o["spec"])))
    except json.JSONDecodeError as e:
        raise UsageError(f"experiment spec is not valid JSON: {e}") from None
    texts = (_read(spec.train), _read(spec.dev), _read(spec.test) if spec.test else None)
    jobs = [(spec, cell, s + i, texts) for i, cell in enumerate(spec.cells) for s in spec.seeds]
    n_jobs = max(1, int(o["jobs"]))
    outcomes: list = []
    if n_jobs == 1:
        for job in jobs:
            try:
                outcomes.append(_run_cell(job))
            except (ConfigError, CorpusError, TrainingError, ValueError) as e:
                outcomes.append(str(e))
    else:
        with ProcessPoolExecutor(n_jobs) as pool:
            futures = [pool.submit(_run_cell, job) for job in jobs]
            for fut in futures:
                try:
                    outcomes.append(fut.result())
                except Exception as e:  # a failed cell must not stop the others
                    outcomes.append(str(e))
    results = []
    k = len(spec.seeds)
    for i, cell in enumerate(spec.cells):
        mine = outcomes[i * k:(i + 1) * k]
        failed = [m for m in mine if isinstance(m, str)]
        results.append((cell.name(), failed[0] if failed else mine))
    _write(o["output"], format_matrix(spec.task, results))
    return 1 if any(isinstance(r, str) for _, r in results) else 0


# -- parser --------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    S = argparse.SUPPRESS
    p = argparse.ArgumentParser(prog="crftagger", description="Neural CRF tagger for disease mentions.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="verb", required=True)

    def verb(name, func, help_):
        sp = sub.add_parser(name, help=help_, argument_default=S)
        sp.add_argument("--config", default=None, help="JSON file with defaults for any flag")
        sp.set_defaults(func=func)
        return sp

    sp = verb("convert", cmd_convert, "PubTator annotations to BIO TSV")
    sp.add_argument("--input", help="PubTator file ('-' for stdin)")
    sp.add_argument("--output", help="TSV output (default stdout)")
    sp.add_argument("--offsets", help="also write per-token character offsets here")

    sp = verb("stats", cmd_stats, "sentence and mention counts")
    sp.add_argument("corpus", nargs="*", help="BIO TSV files")
    sp.add_argument("--json", action="store_true")
    sp.add_argument("--repair-bio", action="store_true")

    sp = verb("train", cmd_train, "train a model")
    sp.add_argument("--train")
    sp.add_argument("--dev")
    sp.add_argument("--task", choices=["a", "b"])
    sp.add_argument("--arch", choices=[a.value for a in Architecture])
    sp.add_argument("--features", choices=["ce", "we", "we+ce"])
    sp.add_argument("--seed", type=int)
    sp.add_argument("--epochs", type=int)
    sp.add_argument("--lr", type=float)
    sp.add_argument("--hidden", type=int)
    sp.add_argument("--dim-we", type=int)
    sp.add_argument("--dim-chr", type=int)
    sp.add_argument("--dim-ce", type=int)
    sp.add_argument("--vectors", help="word2vec text file")
    sp.add_argument("--word-init", choices=["auto", "pretrained", "zeros", "random"])
    sp.add_argument("--freeze-words", action="store_true", help="keep word vectors fixed")
    sp.add_argument("--patience", type=int, help="early-stop patience on dev F1 (0 disables)")
    sp.add_argument("--clip", type=float, help="global gradient norm clip (0 disables)")
    sp.add_argument("--no-shuffle", action="store_true")
    sp.add_argument("--min-freq", type=int)
    sp.add_argument("--constrain-bio", action="store_true", help="forbid illegal BIO transitions when decoding")
    sp.add_argument("--repair-bio", action="store_true")
    sp.add_argument("--out", help="checkpoint path (default model.ckpt)")
    sp.add_argument("--report", help="per-epoch report path (default <out>.report.txt)")

    sp = verb("eval", cmd_eval, "score a checkpoint against gold TSV")
    sp.add_argument("--model")
    sp.add_argument("--gold")
    sp.add_argument("--json", action="store_true")
    sp.add_argument("--macro", action="store_true", help="add a macro-averaged row")
    sp.add_argument("--errors", help="write the error-category report here")
    sp.add_argument("--output")
    sp.add_argument("--flatten", action="store_true", help="collapse gold classes for a Task A model")
    sp.add_argument("--repair-bio", action="store_true")

    sp = verb("tag", cmd_tag, "tag tokenized text")
    sp.add_argument("--model")
    sp.add_argument("--input", help="one token per line, blank line between sentences (default stdin)")
    sp.add_argument("--output")

    sp = verb("gradcheck", cmd_gradcheck, "finite-difference gradient check")
    sp.add_argument("--arch", choices=[a.value for a in Architecture])
    sp.add_argument("--features", choices=["ce", "we", "we+ce"])
    sp.add_argument("--seed", type=int)
    sp.add_argument("--tolerance", type=float)
    sp.add_argument("--hidden", type=int)

    sp = verb("matrix", cmd_matrix, "run an experiment grid")
    sp.add_argument("--spec", help="ExperimentSpec JSON")
    sp.add_argument("--jobs", type=int, help="parallel worker processes (default 1)")
    sp.add_argument("--output")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    verbose = args.__dict__.pop("verbose", False)
    args.__dict__.pop("verb", None)
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except UsageError as e:
        parser.print_usage(sys.stderr)
        print(f"crftagger: error: {e}", file=sys.stderr)
        return 2
    except (OSError, CorpusError, ConfigError, TrainingError, checkpoint.CheckpointError, ncbi.NcbiFormatError,
            ValueError) as e:
        print(f"crftagger: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
