"""Small generated datasets with planted structure, for smoke training and demos."""
from __future__ import annotations

import numpy as np

from .corpus_io import UNK, Vocabulary
from .nasm.model import QATriple
from .nvdm import BowDocument
from .rng import make_rng


def two_topic_corpus(n_docs: int = 500, vocab_size: int = 20, doc_len: tuple[int, int] = (30, 60),
                     purity: float = 0.9, seed: int = 0) -> tuple[list[BowDocument], list[list[int]]]:
    """Documents drawn from one of two disjoint word groups (first and second half of the ids).

    Each token comes from the document's group with probability ``purity``.
    Returns the documents and the two groups.
    """
    rng = make_rng(seed, stream=21)
    half = vocab_size // 2
    groups = [list(range(half)), list(range(half, vocab_size))]
    docs = []
    for d in range(n_docs):
        topic = int(rng.integers(2))
        n = int(rng.integers(doc_len[0], doc_len[1] + 1))
        own = rng.random(n) < purity
        ids = np.where(own, rng.choice(groups[topic], n), rng.choice(groups[1 - topic], n))
        docs.append(BowDocument.from_ids(ids, doc_id=str(d)))
    return docs, groups


def planted_keyword_qa(n_questions: int = 500, candidates: int = 5, n_keywords: int = 10,
                       n_fillers: int = 10, q_len: tuple[int, int] = (3, 6),
                       a_len: tuple[int, int] = (4, 8), seed: int = 0) -> tuple[list[QATriple], Vocabulary]:
    """Questions with one keyword; exactly one candidate answer repeats it.

    Every wrong candidate carries a different keyword, so a model has to
    match keywords rather than detect them.
    """
    rng = make_rng(seed, stream=22)
    fillers = [f"w{i}" for i in range(n_fillers)]
    keys = [f"key{i}" for i in range(n_keywords)]
    vocab = Vocabulary([UNK] + keys + fillers, "unk")
    key_ids = [vocab.id_of(k) for k in keys]
    filler_ids = [vocab.id_of(f) for f in fillers]

    def sentence(key: int, lo_hi) -> list[int]:
        n = int(rng.integers(lo_hi[0], lo_hi[1] + 1))
        words = [int(w) for w in rng.choice(filler_ids, n)]
        words.insert(int(rng.integers(n + 1)), key)
        return words

    triples = []
    for q in range(n_questions):
        key = int(rng.choice(key_ids))
        others = [k for k in key_ids if k != key]
        wrong = [int(k) for k in rng.choice(others, candidates - 1, replace=False)]
        correct_at = int(rng.integers(candidates))
        question = sentence(key, q_len)
        for c in range(candidates):
            if c == correct_at:
                triples.append(QATriple(question, sentence(key, a_len), 1, f"q{q}"))
            else:
                triples.append(QATriple(question, sentence(wrong.pop(), a_len), 0, f"q{q}"))
    return triples, vocab


def split_by_question(triples: list[QATriple], fractions=(0.8, 0.1, 0.1)) -> list[list[QATriple]]:
    """Contiguous split on question boundaries, in order of appearance."""
    qids = list(dict.fromkeys(t.question_id for t in triples))
    cuts = np.cumsum([int(round(f * len(qids))) for f in fractions[:-1]])
    parts = np.split(np.array(qids, dtype=object), cuts)
    out = []
    for part in parts:
        keep = set(part)
        out.append([t for t in triples if t.question_id in keep])
    return out


def write_bow_text(docs: list[BowDocument], path, prefix: str = "t") -> None:
    """One line per document, token ``<prefix><id>`` repeated by its count."""
    lines = []
    for d in docs:
        lines.append(" ".join(f"{prefix}{i}" for i, c in sorted(d.counts.items()) for _ in range(c)))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def write_qa_tsv(triples: list[QATriple], vocab: Vocabulary, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("question_id\tquestion\tanswer\tlabel\n")
        for t in triples:
            q = " ".join(vocab.token_of(i) for i in t.question)
            a = " ".join(vocab.token_of(i) for i in t.answer)
            fh.write(f"{t.question_id}\t{q}\t{a}\t{t.label}\n")
