"""Neural Variational Document Model.

A bag-of-words variational autoencoder: a two-layer ReLU MLP maps raw word
counts to a diagonal Gaussian over a K-dimensional document vector, and a
softmax over ``h @ R + b_x`` generates every word of the document
independently.  The KL term against the standard normal prior is analytic.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .distributions import DiagGaussian, kl_standard, reparameterized_sample
from .errors import ContractError, DimensionError, EmptyDocumentError, VocabularyError
from .params import ParamSet, fan_in_uniform, zeros
from .rng import make_rng, standard_normal


@dataclass
class BowDocument:
    counts: dict[int, int]
    n_words: int = -1
    doc_id: str = ""

    def __post_init__(self):
        if any(c <= 0 for c in self.counts.values()):
            raise ContractError(f"document {self.doc_id!r}: counts must be positive")
        total = int(sum(self.counts.values()))
        if self.n_words < 0:
            self.n_words = total
        elif self.n_words != total:
            raise ContractError(f"document {self.doc_id!r}: n_words {self.n_words} != sum of counts {total}")

    @classmethod
    def from_ids(cls, ids: Sequence[int], doc_id: str = "") -> "BowDocument":
        ids, counts = np.unique(np.asarray(ids, dtype=np.int64), return_counts=True)
        return cls({int(i): int(c) for i, c in zip(ids, counts)}, doc_id=doc_id)


@dataclass
class NvdmParams(ParamSet):
    W1: Tensor
    b1: Tensor
    W2: Tensor
    b2: Tensor
    W3: Tensor
    b3: Tensor
    W4: Tensor
    b4: Tensor
    R: Tensor
    b_x: Tensor

    ENCODER = ("W1", "b1", "W2", "b2", "W3", "b3", "W4", "b4")
    DECODER = ("R", "b_x")

    @property
    def vocab_size(self) -> int:
        return self.R.shape[1]

    @property
    def latent_dim(self) -> int:
        return self.R.shape[0]

    @property
    def hidden(self) -> int:
        return self.W1.shape[1]

    @property
    def dtype(self):
        return self.R.dtype


def init_params(vocab_size: int, latent_dim: int = 50, hidden: int = 500, seed: int = 0,
                dtype=np.float32) -> NvdmParams:
    """Fan-in uniform weights, zero biases; the log-sigma head starts at exactly zero."""
    rng = make_rng(seed, stream=1)
    return NvdmParams(
        W1=fan_in_uniform(rng, vocab_size, hidden, dtype, "W1"), b1=zeros(hidden, dtype, "b1"),
        W2=fan_in_uniform(rng, hidden, hidden, dtype, "W2"), b2=zeros(hidden, dtype, "b2"),
        W3=fan_in_uniform(rng, hidden, latent_dim, dtype, "W3"), b3=zeros(latent_dim, dtype, "b3"),
        W4=zeros((hidden, latent_dim), dtype, "W4"), b4=zeros(latent_dim, dtype, "b4"),
        R=fan_in_uniform(rng, latent_dim, vocab_size, dtype, "R"), b_x=zeros(vocab_size, dtype, "b_x"),
    )


def bow_matrix(docs: Sequence[BowDocument], vocab_size: int, dtype=np.float32) -> np.ndarray:
    X = np.zeros((len(docs), vocab_size), dtype=dtype)
    for row, doc in enumerate(docs):
        if doc.n_words == 0:
            raise EmptyDocumentError(f"document {doc.doc_id!r} is empty")
        for i, c in doc.counts.items():
            if not 0 <= i < vocab_size:
                raise DimensionError(f"document {doc.doc_id!r}: token id {i} outside vocabulary of size {vocab_size}")
            X[row, i] = c
    return X


def _as_batch(docs, params: NvdmParams) -> tuple[np.ndarray, bool]:
    if isinstance(docs, BowDocument):
        return bow_matrix([docs], params.vocab_size, params.dtype), True
    if isinstance(docs, np.ndarray):
        if docs.ndim != 2 or docs.shape[1] != params.vocab_size:
            raise DimensionError(f"count matrix {docs.shape} does not match vocabulary size {params.vocab_size}")
        return docs.astype(params.dtype, copy=False), False
    return bow_matrix(docs, params.vocab_size, params.dtype), False


def _encode_matrix(X: np.ndarray, params: NvdmParams) -> DiagGaussian:
    x = Tensor._wrap(X)
    lam = ad.relu(x @ params.W1 + params.b1)
    pi = ad.relu(lam @ params.W2 + params.b2)
    return DiagGaussian(pi @ params.W3 + params.b3, pi @ params.W4 + params.b4)


def _squeeze(dist: DiagGaussian) -> DiagGaussian:
    k = dist.dim
    return DiagGaussian(ad.reshape(dist.mu, (k,)), ad.reshape(dist.log_sigma, (k,)))


def encode(docs, params: NvdmParams) -> DiagGaussian:
    """Posterior q(h|X) for one document (vectors) or a batch ((B, K) matrices)."""
    X, single = _as_batch(docs, params)
    dist = _encode_matrix(X, params)
    return _squeeze(dist) if single else dist


def decode_log_probs(h, params: NvdmParams) -> Tensor:
    """log p(word | h) over the vocabulary, for a vector h or rows of a matrix."""
    h = h if isinstance(h, Tensor) else Tensor(h, dtype=params.dtype)
    if h.shape[-1] != params.latent_dim:
        raise DimensionError(f"latent of shape {h.shape} does not match K={params.latent_dim}")
    return ad.log_softmax(h @ params.R + params.b_x, axis=-1)


@dataclass
class ElboTerms:
    """Per-document pieces of the bound: expected reconstruction and KL."""

    reconstruction: Tensor
    kl: Tensor
    posterior: DiagGaussian
    epsilon: np.ndarray = field(repr=False)

    @property
    def elbo(self) -> Tensor:
        return self.reconstruction - self.kl


def elbo_terms(docs, params: NvdmParams, num_samples: int = 1, rng=None, epsilon=None,
               clamp: bool = True) -> ElboTerms:
    """Monte Carlo reconstruction term and analytic KL for a batch of documents.

    ``epsilon`` (shape (B, K), or (B, L, K) for L samples) fixes the noise;
    otherwise it is drawn from ``rng``.
    """
    if num_samples < 1:
        raise ContractError("num_samples must be at least 1")
    X, _ = _as_batch(docs, params)
    if not np.all(X.sum(axis=1) > 0):
        raise EmptyDocumentError("empty document in batch")
    B, K, L = X.shape[0], params.latent_dim, num_samples
    q = _encode_matrix(X, params)
    if clamp:
        q = q.clamped()
    if epsilon is None:
        if rng is None:
            raise ContractError("either rng or epsilon is required")
        epsilon = standard_normal(rng, (B, L, K), params.dtype)
    eps = np.asarray(epsilon, dtype=params.dtype).reshape(B * L, K)
    if L == 1:
        tiled, Xt = q, X
    else:
        rows = np.repeat(np.arange(B), L)
        tiled = DiagGaussian(ad.take_rows(q.mu, rows), ad.take_rows(q.log_sigma, rows))
        Xt = np.repeat(X, L, axis=0)
    h = reparameterized_sample(tiled, eps).h
    logp = decode_log_probs(h, params)
    recon = ad.sum(ad.mul(Tensor._wrap(Xt), logp), axis=1)
    if L > 1:
        recon = ad.mean(ad.reshape(recon, (B, L)), axis=1)
    return ElboTerms(recon, kl_standard(q), q, eps.reshape(B, L, K))


def elbo(docs, params: NvdmParams, num_samples: int = 1, rng=None, epsilon=None) -> Tensor:
    """Lower bound on log p(X): shape () for one document, (B,) for a batch."""
    terms = elbo_terms(docs, params, num_samples, rng, epsilon)
    out = terms.elbo
    return ad.reshape(out, ()) if isinstance(docs, BowDocument) else out


def document_bounds(corpus: Sequence[BowDocument], params: NvdmParams, num_samples: int = 20,
                    rng=None, batch_size: int = 64) -> np.ndarray:
    """ELBO of each document (float64), computed in batches without recording."""
    if not corpus:
        raise EmptyDocumentError("empty corpus")
    for doc in corpus:
        if doc.n_words == 0:
            raise EmptyDocumentError(f"document {doc.doc_id!r} is empty")
    rng = make_rng(0) if rng is None else rng
    out = np.empty(len(corpus))
    for start in range(0, len(corpus), batch_size):
        chunk = corpus[start:start + batch_size]
        out[start:start + len(chunk)] = elbo(chunk, params, num_samples, rng).values
    return out


def perplexity(corpus: Sequence[BowDocument], params: NvdmParams, num_samples: int = 20,
               rng=None, batch_size: int = 64) -> float:
    """exp(-(1/D) sum_d ELBO_d / N_d): an upper bound on the true perplexity."""
    bounds = document_bounds(corpus, params, num_samples, rng, batch_size)
    lengths = np.array([d.n_words for d in corpus], dtype=np.float64)
    return float(np.exp(-np.mean(bounds / lengths)))


def _token_id(word, vocab) -> int:
    if isinstance(word, (int, np.integer)):
        return int(word)
    if vocab is None:
        raise ContractError("a vocabulary is needed to look up tokens by name")
    try:
        return vocab.id_of(word)
    except KeyError:
        raise VocabularyError(f"unknown token {word!r}") from None


def _label(i: int, vocab):
    return vocab.token_of(i) if vocab is not None else i


def _top_k(scores: np.ndarray, k: int) -> np.ndarray:
    # stable sort on the negated scores: ties go to the smaller id
    return np.argsort(-scores, kind="stable")[:k]


def nearest_words(word, k: int, params: NvdmParams, vocab=None) -> list[tuple]:
    """The k tokens whose columns of R have the highest cosine similarity to ``word``'s."""
    V = params.vocab_size
    i = _token_id(word, vocab)
    if not 0 <= i < V:
        raise VocabularyError(f"token id {i} outside vocabulary of size {V}")
    if not 1 <= k < V:
        raise ContractError(f"k must lie in [1, {V - 1}], got {k}")
    R = params.R.values.astype(np.float64)
    norms = np.linalg.norm(R, axis=0)
    norms[norms == 0] = 1.0
    sims = (R[:, i] @ R) / (norms * norms[i])
    sims[i] = -np.inf
    return [(_label(int(j), vocab), float(sims[j])) for j in _top_k(sims, k)]


def topic_words(dimension: int, k: int, params: NvdmParams, vocab=None) -> list[tuple]:
    """The k tokens with the largest weight in row ``dimension`` of R."""
    if not 0 <= dimension < params.latent_dim:
        raise IndexError(f"dimension {dimension} outside [0, {params.latent_dim})")
    row = params.R.values[dimension].astype(np.float64)
    return [(_label(int(j), vocab), float(row[j])) for j in _top_k(row, k)]


class NVDM:
    """Trainable wrapper: parameters, vocabulary and the hooks the trainer calls."""

    kind = "nvdm"

    def __init__(self, params: NvdmParams, vocab=None, eval_samples: int = 20):
        self.params = params
        self.vocab = vocab
        self.eval_samples = eval_samples

    @classmethod
    def create(cls, vocab_size: int, latent_dim: int = 50, hidden: int = 500, seed: int = 0,
               vocab=None, dtype=np.float32, eval_samples: int = 20) -> "NVDM":
        return cls(init_params(vocab_size, latent_dim, hidden, seed, dtype), vocab, eval_samples)

    @property
    def config(self) -> dict:
        p = self.params
        return {"vocab_size": p.vocab_size, "latent_dim": p.latent_dim, "hidden": p.hidden}

    def parameters(self) -> dict[str, Tensor]:
        return self.params.named()

    @property
    def groups(self) -> dict[str, list[str]]:
        return {"inference": list(NvdmParams.ENCODER), "generative": list(NvdmParams.DECODER)}

    def objective(self, batch: Sequence[BowDocument], rng) -> Tensor:
        """Negative mean single-sample ELBO of the batch (to be minimised)."""
        return -ad.mean(elbo(batch, self.params, 1, rng))

    def dev_metric(self, docs: Sequence[BowDocument], seed: int) -> float:
        return perplexity(docs, self.params, self.eval_samples, make_rng(seed, stream=7))

    higher_is_better = False
