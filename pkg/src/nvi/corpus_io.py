"""Reading corpora, QA sets and embeddings; vocabularies; checkpoints; TSV output."""
from __future__ import annotations

import io
import json
import logging
import struct
import sys
from collections import Counter, OrderedDict
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .errors import CheckpointError, ConfigError, ContractError, ParseError, VocabularyError
from .nasm.model import NASM, NasmConfig, QATriple
from .nvdm import NVDM, BowDocument
from .rng import make_rng

log = logging.getLogger(__name__)

UNK = "<unk>"
MAGIC = b"NVICKPT"
VERSION = 1


def tokenize(text: str) -> list[str]:
    return text.lower().split()


def load_stopwords() -> list[str]:
    """The fixed 127-word English list used by the overlap feature."""
    text = resources.files("nvi").joinpath("data/stopwords_en.txt").read_text(encoding="utf-8")
    return [w for w in text.split() if w]


# ---------------------------------------------------------------------------
# vocabulary


@dataclass
class Vocabulary:
    """Dense token ids.  ``oov="drop"`` discards unknown tokens; ``"unk"`` maps them to id 0."""

    tokens: list[str]
    oov: str = "drop"
    index: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self):
        if self.oov not in ("drop", "unk"):
            raise ConfigError(f"unknown OOV policy {self.oov!r}")
        if self.oov == "unk" and (not self.tokens or self.tokens[0] != UNK):
            raise ConfigError(f"an 'unk' vocabulary must start with {UNK!r}")
        self.index = {t: i for i, t in enumerate(self.tokens)}
        if len(self.index) != len(self.tokens):
            raise ContractError("duplicate tokens in vocabulary")

    def __len__(self):
        return len(self.tokens)

    @property
    def size(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self.index

    def id_of(self, token: str) -> int:
        try:
            return self.index[token]
        except KeyError:
            raise VocabularyError(f"unknown token {token!r}") from None

    def token_of(self, i: int) -> str:
        return self.tokens[i]

    def encode(self, tokens: Iterable[str]) -> list[int]:
        """Token ids under the OOV policy."""
        if self.oov == "unk":
            return [self.index.get(t, 0) for t in tokens]
        return [self.index[t] for t in tokens if t in self.index]


def vocab_from_counts(counts: Counter, max_size: int, oov: str = "drop") -> Vocabulary:
    if max_size < 1:
        raise ConfigError("max_size must be at least 1")
    if not counts:
        raise ContractError("cannot build a vocabulary from an empty corpus")
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    kept = [t for t, _ in ranked if t != UNK][:max_size]
    return Vocabulary([UNK] + kept if oov == "unk" else kept, oov)


def build_vocab_from_tokens(lines: Iterable[Sequence[str]], max_size: int, oov: str = "drop") -> Vocabulary:
    """The ``max_size`` most frequent tokens, ties broken lexicographically.

    With ``oov="unk"`` the reserved unknown token comes first, so the
    vocabulary holds ``max_size + 1`` entries.
    """
    counts = Counter()
    for toks in lines:
        counts.update(toks)
    return vocab_from_counts(counts, max_size, oov)


def _read_lines(path) -> list[str]:
    try:
        with open(path, encoding="utf-8") as fh:
            return fh.read().splitlines()
    except OSError as exc:
        raise OSError(f"cannot read {path}: {exc.strerror}") from exc


def build_vocab(path, max_size: int, oov: str = "drop") -> Vocabulary:
    return build_vocab_from_tokens((tokenize(line) for line in _read_lines(path)), max_size, oov)


# ---------------------------------------------------------------------------
# bag-of-words corpora


class CorpusLoad(NamedTuple):
    documents: list[BowDocument]
    excluded: int


def load_bow_corpus(path, vocab: Vocabulary) -> CorpusLoad:
    """One document per line; unknown tokens dropped; documents left empty are excluded."""
    docs, excluded = [], 0
    for lineno, line in enumerate(_read_lines(path), start=1):
        toks = tokenize(line)
        ids = [vocab.index[t] for t in toks if t in vocab.index]
        if not ids:
            excluded += 1
            continue
        docs.append(BowDocument.from_ids(ids, doc_id=str(lineno)))
    if excluded:
        log.warning("%s: excluded %d documents with no in-vocabulary words", path, excluded)
    return CorpusLoad(docs, excluded)


# ---------------------------------------------------------------------------
# QA data


@dataclass
class QARow:
    question_id: str
    question: list[str]
    answer: list[str]
    label: int


def read_qa_rows(path) -> list[QARow]:
    """Parse ``question_id<TAB>question<TAB>answer<TAB>label`` rows; a header row is skipped."""
    rows = []
    for lineno, line in enumerate(_read_lines(path), start=1):
        if not line.strip():
            continue
        cols = line.split("\t")
        if len(cols) != 4:
            raise ParseError(f"{path}:{lineno}: expected 4 tab-separated columns, got {len(cols)}")
        qid, q, a, lab = cols
        if lineno == 1 and lab.strip().lower() == "label":
            continue
        if lab.strip() not in ("0", "1"):
            raise ParseError(f"{path}:{lineno}: label must be 0 or 1, got {lab.strip()!r}")
        q_toks, a_toks = tokenize(q), tokenize(a)
        if not q_toks or not a_toks:
            raise ParseError(f"{path}:{lineno}: empty question or answer")
        rows.append(QARow(qid, q_toks, a_toks, int(lab)))
    return rows


@dataclass
class QADataset:
    triples: list[QATriple]
    rows: list[QARow]

    @property
    def groups(self) -> "OrderedDict[str, list[QATriple]]":
        out: OrderedDict = OrderedDict()
        for t in self.triples:
            out.setdefault(t.question_id, []).append(t)
        return out

    @property
    def num_questions(self) -> int:
        return len({t.question_id for t in self.triples})

    def __len__(self):
        return len(self.triples)


def qa_vocab(rows: Sequence[QARow], max_size: int) -> Vocabulary:
    return build_vocab_from_tokens((toks for r in rows for toks in (r.question, r.answer)), max_size, "unk")


def load_qa_dataset(path, vocab: Vocabulary | None = None, max_size: int = 50000) -> tuple[QADataset, Vocabulary]:
    """Triples grouped by question id (groups in order of first appearance, rows in file order).

    Without ``vocab`` one is built from this file.
    """
    rows = read_qa_rows(path)
    if not rows:
        raise ContractError(f"{path}: no QA pairs")
    if vocab is None:
        vocab = qa_vocab(rows, max_size)
    order: OrderedDict = OrderedDict()
    for r in rows:
        order.setdefault(r.question_id, []).append(r)
    ordered = [r for group in order.values() for r in group]
    triples = [QATriple(vocab.encode(r.question), vocab.encode(r.answer), r.label, r.question_id)
               for r in ordered]
    return QADataset(triples, ordered), vocab


# ---------------------------------------------------------------------------
# embeddings


def read_embedding_file(path) -> tuple[list[str], np.ndarray]:
    lines = _read_lines(path)
    if not lines:
        raise ParseError(f"{path}: empty embedding file")
    head = lines[0].split()
    try:
        count, dim = int(head[0]), int(head[1])
        if len(head) != 2:
            raise ValueError
    except (ValueError, IndexError):
        raise ParseError(f"{path}:1: header must be 'count dim'") from None
    tokens, rows = [], []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.rstrip().split(" ")
        if len(parts) != dim + 1:
            raise ParseError(f"{path}:{lineno}: expected a token and {dim} values")
        try:
            rows.append([float(x) for x in parts[1:]])
        except ValueError:
            raise ParseError(f"{path}:{lineno}: non-numeric value") from None
        tokens.append(parts[0])
    if len(tokens) != count:
        raise ParseError(f"{path}: header declares {count} vectors, found {len(tokens)}")
    return tokens, np.array(rows, dtype=np.float64).reshape(len(tokens), dim)


class EmbeddingLoad(NamedTuple):
    matrix: np.ndarray
    coverage: float


def load_embeddings(path, vocab: Vocabulary, dim: int | None = None, seed: int = 0) -> EmbeddingLoad:
    """Vocabulary-aligned embedding matrix; rows missing from the file are U(-0.1, 0.1)."""
    tokens, vectors = read_embedding_file(path)
    file_dim = vectors.shape[1]
    if dim is not None and file_dim != dim:
        raise ConfigError(f"embed_dim: file has {file_dim}-dimensional vectors, configured {dim}")
    rng = make_rng(seed, stream=9)
    matrix = rng.uniform(-0.1, 0.1, (vocab.size, file_dim))
    found = 0
    lookup = {t: i for i, t in enumerate(tokens)}
    for i, tok in enumerate(vocab.tokens):
        j = lookup.get(tok)
        if j is not None:
            matrix[i] = vectors[j]
            found += 1
    return EmbeddingLoad(matrix, found / vocab.size)


# ---------------------------------------------------------------------------
# checkpoints


def save_checkpoint(model, path, meta: dict | None = None) -> None:
    """Write magic, version byte, header length, JSON header, then little-endian float32 payload."""
    params = model.parameters()
    header = {
        "kind": model.kind,
        "config": model.config,
        "vocab": None if model.vocab is None else {"tokens": model.vocab.tokens, "oov": model.vocab.oov},
        "meta": meta or {},
        "entries": [{"name": k, "shape": list(v.shape)} for k, v in params.items()],
    }
    combiner = getattr(model, "combiner", None)
    if combiner is not None and combiner.fitted:
        header["combiner"] = {
            "weights": [float(w) for w in combiner.weights],
            "ignore": sorted(int(i) for i in combiner.ignore),
            "idf": None if combiner.idf is None else sorted([int(k), float(v)] for k, v in combiner.idf.items()),
        }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(bytes([VERSION]))
    buf.write(struct.pack("<I", len(blob)))
    buf.write(blob)
    for v in params.values():
        buf.write(np.ascontiguousarray(v.values, dtype="<f4").tobytes())
    Path(path).write_bytes(buf.getvalue())


def read_checkpoint_header(path) -> tuple[dict, bytes]:
    data = Path(path).read_bytes()
    if len(data) < len(MAGIC) + 5 or not data.startswith(MAGIC):
        raise CheckpointError(f"{path}: not a checkpoint file")
    version = data[len(MAGIC)]
    if version != VERSION:
        raise CheckpointError(f"{path}: checkpoint version {version}, expected {VERSION}")
    start = len(MAGIC) + 1
    (hlen,) = struct.unpack("<I", data[start:start + 4])
    body = data[start + 4:]
    if len(body) < hlen:
        raise CheckpointError(f"{path}: truncated header")
    try:
        header = json.loads(body[:hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: corrupt header") from exc
    return header, body[hlen:]


def check_config(actual: dict, expected: dict) -> None:
    for key, want in expected.items():
        if want is None:
            continue
        if key not in actual:
            raise ConfigError(f"{key}: not recorded in checkpoint")
        if actual[key] != want:
            raise ConfigError(f"{key}: checkpoint has {actual[key]!r}, configuration expects {want!r}")


def _build_model(kind: str, config: dict, vocab):
    if kind == "nvdm":
        return NVDM.create(config["vocab_size"], config["latent_dim"], config["hidden"], vocab=vocab)
    if kind == "nasm":
        return NASM.create(NasmConfig(**config), vocab=vocab)
    raise CheckpointError(f"unknown model kind {kind!r}")


def load_checkpoint(path, expected_config: dict | None = None, kind: str | None = None):
    """Rebuild the model stored at ``path``; validates kind, config and every shape."""
    header, payload = read_checkpoint_header(path)
    if kind is not None and header["kind"] != kind:
        raise ConfigError(f"model: checkpoint holds a {header['kind']} model, expected {kind}")
    if expected_config:
        check_config(header["config"], expected_config)
    entries = header["entries"]
    need = sum(int(np.prod(e["shape"], dtype=np.int64)) for e in entries) * 4
    if len(payload) != need:
        raise CheckpointError(f"{path}: payload has {len(payload)} bytes, header declares {need} (truncated?)")
    v = header.get("vocab")
    vocab = None if v is None else Vocabulary(v["tokens"], v["oov"])
    model = _build_model(header["kind"], header["config"], vocab)
    params = model.parameters()
    if [e["name"] for e in entries] != list(params):
        raise CheckpointError(f"{path}: parameter names do not match a {header['kind']} model")
    offset = 0
    for e in entries:
        t = params[e["name"]]
        if tuple(e["shape"]) != t.shape:
            raise CheckpointError(f"{path}: {e['name']} has shape {tuple(e['shape'])}, model expects {t.shape}")
        n = int(np.prod(e["shape"], dtype=np.int64))
        t.values[...] = np.frombuffer(payload, dtype="<f4", count=n, offset=offset).reshape(t.shape)
        offset += 4 * n
    comb = header.get("combiner")
    if comb is not None:
        from .nasm.ranking import CountCombiner
        idf = None if comb["idf"] is None else {int(k): v for k, v in comb["idf"]}
        model.combiner = CountCombiner(comb["weights"], comb["ignore"], idf)
    model.meta = header.get("meta", {})
    return model


# ---------------------------------------------------------------------------
# TSV


def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_tsv(dest, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    """Write one header row then the data rows; ``dest`` is a path, a stream or None for stdout."""
    lines = ["\t".join(header)] + ["\t".join(_fmt(x) for x in row) for row in rows]
    text = "\n".join(lines) + "\n"
    if dest is None:
        sys.stdout.write(text)
    elif hasattr(dest, "write"):
        dest.write(text)
    else:
        Path(dest).write_text(text, encoding="utf-8")


def read_tsv(path) -> tuple[list[str], list[list[str]]]:
    lines = _read_lines(path)
    return lines[0].split("\t"), [line.split("\t") for line in lines[1:] if line]
