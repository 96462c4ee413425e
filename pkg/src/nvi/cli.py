"""Command line: ``nvi train|eval|inspect|variance-study``.

Settings resolve as built-in defaults < ``--config`` file < explicit flags.
Machine-readable results are TSV files under ``--out-dir``; progress goes to
stderr.  Exit status is 0 on success, 1 for runtime or numeric failures and
2 for usage or configuration errors.
"""
from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Sequence

import numpy as np

from . import corpus_io as cio
from .errors import ConfigError, ContractError, NviError, VocabularyError
from .nasm import (NASM, CountCombiner, NasmConfig, answer_idf, dump_log_sigma_by_group,
                   evaluate_ranking, group_by_leading_word, sample_variance_study)
from .nvdm import NVDM, document_bounds, encode, nearest_words, topic_words
from .optimizer import TrainSchedule, history_rows, run_training
from .rng import make_rng

log = logging.getLogger("nvi")

CHECKPOINT_NAME = "model.ckpt"


@dataclass
class CliConfig:
    model: str = "nvdm"
    train: str | None = None
    dev: str | None = None
    test: str | None = None
    embeddings: str | None = None
    checkpoint: str | None = None
    out_dir: str = "nvi-out"
    seed: int = 0
    # shared sizes; None means "the model's default"
    dim: int | None = None
    vocab: int | None = None
    hidden: int | None = None
    # NASM only
    embed_dim: int = 50
    layers: int = 3
    prior_hidden: int = 50
    joint_hidden: int = 150
    dropout: float = 0.4
    max_len: int = 100
    separate_lstms: bool = False
    count_feature: str = "count"
    # training and evaluation
    samples: int = 20
    batch_size: int | None = None
    lr: float = 1e-3
    epochs: int = 50
    patience: int = 5
    schedule: str | None = None
    clip_norm: float | None = None

    def resolved(self) -> "CliConfig":
        """Fill model-dependent defaults.

        NVDM: K=50, |V|=2000, 500 hidden units, alternating phases, batches of 64.
        NASM: 50-unit LSTMs, K=50, joint updates, batches of 32, clipping at norm 5.
        """
        c = dataclasses.replace(self)
        if c.model == "nvdm":
            c.dim = 50 if c.dim is None else c.dim
            c.vocab = 2000 if c.vocab is None else c.vocab
            c.hidden = 500 if c.hidden is None else c.hidden
            c.schedule = c.schedule or "alternating"
            c.batch_size = 64 if c.batch_size is None else c.batch_size
        else:
            c.dim = 50 if c.dim is None else c.dim
            c.vocab = 50000 if c.vocab is None else c.vocab
            c.hidden = 50 if c.hidden is None else c.hidden
            c.schedule = c.schedule or "joint"
            c.batch_size = 32 if c.batch_size is None else c.batch_size
            c.clip_norm = 5.0 if c.clip_norm is None else c.clip_norm
        return c

    def validate(self) -> None:
        if self.model not in ("nvdm", "nasm"):
            raise ConfigError(f"model: expected nvdm or nasm, got {self.model!r}")
        if self.schedule not in (None, "alternating", "joint"):
            raise ConfigError(f"schedule: expected alternating or joint, got {self.schedule!r}")
        if self.count_feature not in ("count", "idf"):
            raise ConfigError(f"count_feature: expected count or idf, got {self.count_feature!r}")
        for name in ("samples", "epochs", "patience", "embed_dim",
                     "layers", "prior_hidden", "joint_hidden", "max_len"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name}: must be positive")
        for name in ("dim", "vocab", "hidden", "batch_size"):
            v = getattr(self, name)
            if v is not None and v < 1:
                raise ConfigError(f"{name}: must be positive")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError("dropout: must lie in [0, 1)")
        if self.lr <= 0:
            raise ConfigError("lr: must be positive")


def _field_types() -> dict[str, type]:
    out = {}
    for f in fields(CliConfig):
        default = f.default
        if f.name in ("dim", "vocab", "hidden", "batch_size"):
            out[f.name] = int
        elif f.name == "clip_norm":
            out[f.name] = float
        elif isinstance(default, bool):
            out[f.name] = bool
        elif isinstance(default, (int, float)):
            out[f.name] = type(default)
        else:
            out[f.name] = str
    return out


FIELD_TYPES = _field_types()


def _convert(key: str, raw: str):
    kind = FIELD_TYPES[key]
    try:
        if kind is bool:
            low = raw.strip().lower()
            if low not in ("1", "0", "true", "false", "yes", "no"):
                raise ValueError
            return low in ("1", "true", "yes")
        return kind(raw.strip())
    except ValueError:
        raise ConfigError(f"{key}: cannot read {raw!r} as {kind.__name__}") from None


def read_config_file(path) -> dict:
    """``key = value`` lines; ``#`` starts a comment; dashes and underscores are interchangeable."""
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"--config: no such file {path}")
    out = {}
    for lineno, line in enumerate(p.read_text(encoding="utf-8").splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in FIELD_TYPES:
            raise ConfigError(f"{path}:{lineno}: unknown setting {key!r}")
        out[key] = _convert(key, value)
    return out


def build_config(args: argparse.Namespace) -> CliConfig:
    values = {}
    if getattr(args, "config", None):
        values.update(read_config_file(args.config))
    for f in fields(CliConfig):
        v = getattr(args, f.name, None)
        if v is not None:
            values[f.name] = v
    cfg = CliConfig(**values)
    cfg.validate()
    return cfg


# ---------------------------------------------------------------------------
# argument parsing


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise _UsageError(message)


class _UsageError(Exception):
    pass


def _shared(p: argparse.ArgumentParser) -> None:
    p.add_argument("--model", choices=("nvdm", "nasm"))
    p.add_argument("--config", help="key=value settings file")
    p.add_argument("--seed", type=int)
    p.add_argument("--out-dir", dest="out_dir")
    p.add_argument("--samples", type=int, help="samples per evaluation bound or score")
    p.add_argument("--dim", type=int, help="latent dimension K")
    p.add_argument("--vocab", type=int, help="vocabulary size")
    p.add_argument("--hidden", type=int)
    p.add_argument("--embed-dim", dest="embed_dim", type=int)
    p.add_argument("--layers", type=int)
    p.add_argument("--prior-hidden", dest="prior_hidden", type=int)
    p.add_argument("--joint-hidden", dest="joint_hidden", type=int)
    p.add_argument("--max-len", dest="max_len", type=int)
    p.add_argument("-v", "--verbose", action="store_true")


def make_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="nvi", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    tr = sub.add_parser("train", help="fit a model and write a checkpoint plus history")
    _shared(tr)
    tr.add_argument("--train")
    tr.add_argument("--dev")
    tr.add_argument("--embeddings")
    tr.add_argument("--dropout", type=float)
    tr.add_argument("--separate-lstms", dest="separate_lstms", action="store_const", const=True)
    tr.add_argument("--count-feature", dest="count_feature", choices=("count", "idf"))
    tr.add_argument("--batch-size", dest="batch_size", type=int)
    tr.add_argument("--lr", type=float)
    tr.add_argument("--epochs", type=int)
    tr.add_argument("--patience", type=int)
    tr.add_argument("--schedule", choices=("alternating", "joint"))
    tr.add_argument("--clip-norm", dest="clip_norm", type=float)

    ev = sub.add_parser("eval", help="score a test split with a checkpoint")
    _shared(ev)
    ev.add_argument("--checkpoint")
    ev.add_argument("--test")

    ins = sub.add_parser("inspect", help="dump topics, neighbours, log-sigmas or document means")
    ins.add_argument("what", choices=("topics", "nearest", "logsigma", "embed-tsv"))
    _shared(ins)
    ins.add_argument("--checkpoint")
    ins.add_argument("--test", help="documents or QA pairs for logsigma / embed-tsv")
    ins.add_argument("--k", type=int, default=10)
    ins.add_argument("--word")
    ins.add_argument("--groups", help="comma-separated leading words for logsigma")

    vs = sub.add_parser("variance-study", help="MAP spread across sample counts")
    _shared(vs)
    vs.add_argument("--checkpoint", nargs="+", dest="checkpoints")
    vs.add_argument("--test")
    vs.add_argument("--sample-counts", dest="sample_counts", default="1,5,10,20,50")
    vs.add_argument("--runs", type=int, default=10)
    return parser


# ---------------------------------------------------------------------------
# helpers


def _need(value, flag: str):
    if value is None:
        raise ConfigError(f"{flag} is required")
    if isinstance(value, str) and not Path(value).exists():
        raise ConfigError(f"{flag}: no such file {value}")
    return value


def _out_dir(cfg: CliConfig) -> Path:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _schedule(cfg: CliConfig) -> TrainSchedule:
    phases = ("inference", "generative") if cfg.schedule == "alternating" else ("joint",)
    return TrainSchedule(phases=phases, max_epochs=cfg.epochs, patience=cfg.patience,
                         batch_size=cfg.batch_size, seed=cfg.seed, lr=cfg.lr, clip_norm=cfg.clip_norm)


def _nasm_config(cfg: CliConfig, vocab_size: int) -> NasmConfig:
    return NasmConfig(vocab_size=vocab_size, embed_dim=cfg.embed_dim, hidden=cfg.hidden,
                      layers=cfg.layers, latent_dim=cfg.dim, prior_hidden=cfg.prior_hidden,
                      joint_hidden=cfg.joint_hidden, dropout=cfg.dropout, max_len=cfg.max_len,
                      shared_lstm=not cfg.separate_lstms)


def _stopword_ids(vocab: cio.Vocabulary) -> list[int]:
    return sorted(vocab.index[w] for w in cio.load_stopwords() if w in vocab.index)


def _expected_config(args: argparse.Namespace, cfg: CliConfig, kind: str) -> dict:
    """Config fields the user pinned explicitly (file or flag); checked against a checkpoint."""
    pinned = {}
    from_file = read_config_file(args.config) if getattr(args, "config", None) else {}

    def given(name):
        return getattr(args, name, None) is not None or name in from_file

    if kind == "nvdm":
        pairs = {"dim": "latent_dim", "vocab": "vocab_size", "hidden": "hidden"}
    else:
        pairs = {"dim": "latent_dim", "hidden": "hidden", "embed_dim": "embed_dim", "layers": "layers",
                 "prior_hidden": "prior_hidden", "joint_hidden": "joint_hidden", "max_len": "max_len"}
    for flag, key in pairs.items():
        if given(flag):
            pinned[key] = getattr(cfg, flag)
    return pinned


def _load(args, cfg: CliConfig, path: str):
    from_file = read_config_file(args.config) if getattr(args, "config", None) else {}
    kind = cfg.model if (getattr(args, "model", None) or "model" in from_file) else None
    header, _ = cio.read_checkpoint_header(path)
    model = cio.load_checkpoint(path, _expected_config(args, cfg, kind or header["kind"]), kind)
    model.eval_samples = cfg.samples
    return model


# ---------------------------------------------------------------------------
# commands


def cmd_train(args, cfg: CliConfig) -> int:
    cfg = cfg.resolved()
    train_path = _need(cfg.train, "--train")
    dev_path = _need(cfg.dev, "--dev")
    out = _out_dir(cfg)
    if cfg.model == "nvdm":
        vocab = cio.build_vocab(train_path, cfg.vocab, "drop")
        train = cio.load_bow_corpus(train_path, vocab).documents
        dev = cio.load_bow_corpus(dev_path, vocab).documents
        model = NVDM.create(vocab.size, cfg.dim, cfg.hidden, seed=cfg.seed, vocab=vocab,
                            eval_samples=cfg.samples)
    else:
        train_set, vocab = cio.load_qa_dataset(train_path, max_size=cfg.vocab)
        dev_set, _ = cio.load_qa_dataset(dev_path, vocab)
        train, dev = train_set.triples, dev_set.triples
        emb = None
        if cfg.embeddings:
            loaded = cio.load_embeddings(_need(cfg.embeddings, "--embeddings"), vocab, cfg.embed_dim, cfg.seed)
            log.info("embedding coverage %.4f", loaded.coverage)
            emb = loaded.matrix
        model = NASM.create(_nasm_config(cfg, vocab.size), seed=cfg.seed, vocab=vocab,
                            embeddings=emb, eval_samples=cfg.samples)
    log.info("%s: %d training and %d dev items, |V|=%d", cfg.model, len(train), len(dev), vocab.size)
    result = run_training(model, train, dev, _schedule(cfg))
    cio.write_tsv(out / "history.tsv", ("epoch", "phase", "train_objective", "dev_metric"),
                  history_rows(result.history))
    metric_name = "dev_perplexity" if cfg.model == "nvdm" else "dev_map"
    summary = [(metric_name, result.best_metric), ("best_epoch", result.best_epoch)]
    if cfg.model == "nasm":
        neural = model.score(dev, cfg.samples, make_rng(cfg.seed, stream=13))
        idf = answer_idf(train) if cfg.count_feature == "idf" else None
        model.combiner = CountCombiner(ignore=_stopword_ids(vocab), idf=idf).fit_triples(dev, neural)
        combined = model.combiner.score_triples(dev, neural)
        summary.append(("dev_map_with_count", evaluate_ranking(dev, combined).map))
    cio.save_checkpoint(model, out / CHECKPOINT_NAME,
                        meta={"best_epoch": result.best_epoch, "best_metric": result.best_metric,
                              "seed": cfg.seed})
    cio.write_tsv(out / "train_summary.tsv", ("metric", "value"), summary)
    cio.write_tsv(None, ("metric", "value"), summary[:1])
    return 0


def cmd_eval(args, cfg: CliConfig) -> int:
    model = _load(args, cfg, _need(cfg.checkpoint, "--checkpoint"))
    test_path = _need(cfg.test, "--test")
    out = _out_dir(cfg)
    rng = make_rng(cfg.seed, stream=17)
    if model.kind == "nvdm":
        load = cio.load_bow_corpus(test_path, model.vocab)
        if not load.documents:
            raise ContractError(f"{test_path}: no documents with in-vocabulary words")
        bounds = document_bounds(load.documents, model.params, cfg.samples, rng)
        lengths = np.array([d.n_words for d in load.documents], dtype=np.float64)
        ppx = float(np.exp(-np.mean(bounds / lengths)))
        cio.write_tsv(out / "doc_bounds.tsv", ("doc_id", "n_words", "bound"),
                      [(d.doc_id, d.n_words, float(b)) for d, b in zip(load.documents, bounds)])
        rows = [("perplexity", ppx), ("documents", len(load.documents)), ("excluded", load.excluded),
                ("samples", cfg.samples)]
    else:
        data, _ = cio.load_qa_dataset(test_path, model.vocab)
        neural = model.score(data.triples, cfg.samples, rng)
        rep = evaluate_ranking(data.triples, neural)
        rows = [("map", rep.map), ("mrr", rep.mrr)]
        per_q = {qid: [ap, rr] for qid, ap, rr in rep.rows()}
        header = ["question_id", "ap", "rr"]
        if model.combiner is not None:
            crep = evaluate_ranking(data.triples, model.combiner.score_triples(data.triples, neural))
            rows += [("map_with_count", crep.map), ("mrr_with_count", crep.mrr)]
            for qid, ap, rr in crep.rows():
                per_q[qid] += [ap, rr]
            header += ["ap_with_count", "rr_with_count"]
        rows += [("questions", len(rep.ap)), ("excluded_no_positive", rep.excluded), ("samples", cfg.samples)]
        if rep.excluded:
            log.info("excluded %d questions without a correct answer", rep.excluded)
        cio.write_tsv(out / "per_question.tsv", header, [(qid, *v) for qid, v in per_q.items()])
    cio.write_tsv(out / "metrics.tsv", ("metric", "value"), rows)
    cio.write_tsv(None, ("metric", "value"), rows[:1])
    return 0


def cmd_inspect(args, cfg: CliConfig) -> int:
    model = _load(args, cfg, _need(cfg.checkpoint, "--checkpoint"))
    what = args.what
    out = _out_dir(cfg)
    nvdm_only = {"topics", "nearest", "embed-tsv"}
    if what in nvdm_only and model.kind != "nvdm":
        raise ConfigError(f"inspect {what}: needs an nvdm checkpoint, got {model.kind}")
    if what == "logsigma" and model.kind != "nasm":
        raise ConfigError(f"inspect logsigma: needs a nasm checkpoint, got {model.kind}")
    if args.k < 1:
        raise ConfigError("--k: must be positive")
    if what == "topics":
        k = min(args.k, model.params.vocab_size)
        header = ["dimension", "rank", "token", "score"]
        rows = [(d, r, w, s) for d in range(model.params.latent_dim)
                for r, (w, s) in enumerate(topic_words(d, k, model.params, model.vocab), start=1)]
    elif what == "nearest":
        if args.word is None:
            raise ConfigError("--word is required for inspect nearest")
        if model.vocab is not None and args.word not in model.vocab:
            raise VocabularyError(f"--word: {args.word!r} is not in the vocabulary")
        header = ["rank", "token", "score"]
        hits = nearest_words(args.word, args.k, model.params, model.vocab)
        rows = [(i, w, s) for i, (w, s) in enumerate(hits, start=1)]
    elif what == "embed-tsv":
        load = cio.load_bow_corpus(_need(cfg.test, "--test"), model.vocab)
        K = model.params.latent_dim
        header = ["doc_id"] + [f"mu_{i}" for i in range(1, K + 1)]
        rows = []
        for start in range(0, len(load.documents), 256):
            chunk = load.documents[start:start + 256]
            mu = np.atleast_2d(encode(chunk, model.params).mu.values)
            rows += [(d.doc_id, *[float(x) for x in m]) for d, m in zip(chunk, mu)]
    else:
        data, _ = cio.load_qa_dataset(_need(cfg.test, "--test"), model.vocab)
        wanted = None if args.groups is None else [g.strip() for g in args.groups.split(",") if g.strip()]
        grouped = group_by_leading_word(data.triples, model.vocab, wanted)
        K = model.cfg.latent_dim
        header = ["group", "question_id"] + [f"log_sigma_{i}" for i in range(1, K + 1)]
        rows = dump_log_sigma_by_group(grouped, model.gen, model.cfg.max_len)
    cio.write_tsv(out / f"{what}.tsv", header, rows)
    log.info("wrote %d rows to %s", len(rows), out / f"{what}.tsv")
    return 0


def _parse_counts(text: str) -> list[int]:
    try:
        counts = [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise ConfigError(f"--sample-counts: expected comma-separated integers, got {text!r}") from None
    if not counts or min(counts) < 1:
        raise ConfigError("--sample-counts: needs positive integers")
    return counts


def cmd_variance_study(args, cfg: CliConfig) -> int:
    if args.runs < 2:
        raise ConfigError("--runs: a standard deviation needs at least 2 runs")
    paths = args.checkpoints or ([cfg.checkpoint] if cfg.checkpoint else None)
    if not paths:
        raise ConfigError("--checkpoint is required")
    models = [_load(args, cfg, _need(p, "--checkpoint")) for p in paths]
    if any(m.kind != "nasm" for m in models):
        raise ConfigError("variance-study: needs nasm checkpoints")
    first = models[0]
    data, _ = cio.load_qa_dataset(_need(cfg.test, "--test"), first.vocab)
    counts = _parse_counts(args.sample_counts)
    seeds = [cfg.seed + r for r in range(args.runs)]
    table = sample_variance_study(models, data.triples, counts, seeds, first.cfg.max_len)
    out = _out_dir(cfg)
    cio.write_tsv(out / "variance.tsv", ("samples", "mean_map", "std_map", "runs"),
                  [(r["samples"], r["mean_map"], r["std_map"], r["runs"]) for r in table])
    return 0


COMMANDS = {"train": cmd_train, "eval": cmd_eval, "inspect": cmd_inspect,
            "variance-study": cmd_variance_study}


def main(argv: Sequence[str] | None = None) -> int:
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"nvi: error: {exc}", file=sys.stderr)
        return 2
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = build_config(args)
        return COMMANDS[args.command](args, cfg)
    except (ConfigError, VocabularyError) as exc:
        print(f"nvi: error: {exc}", file=sys.stderr)
        return 2
    except (NviError, ArithmeticError, ValueError, OSError) as exc:
        print(f"nvi: failed: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
