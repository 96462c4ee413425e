"""Neural Answer Selection Model.

Question and answer are read by multi-layer LSTMs.  A Gaussian prior
p(h|q), computed from the last question state, supplies the query vector
of an additive attention over the answer states, and a bilinear form
between the question vector and the attended answer vector gives the
probability that the answer is correct.  Training maximises the bound
E_q[log p(y|q,a,h)] - KL(q(h|q,a,y) || p(h|q)), where q is an inference
network that also sees the answer and the label.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .. import autodiff as ad
from ..autodiff import Tensor
from ..distributions import DiagGaussian, kl_gaussians, reparameterized_sample
from ..errors import ContractError, DimensionError, VocabularyError
from ..params import ParamSet, fan_in_uniform, zeros
from ..rng import bernoulli_mask, make_rng, standard_normal

log = logging.getLogger(__name__)

MASK_FILL = -1e9


@dataclass
class QATriple:
    question: list[int]
    answer: list[int]
    label: int
    question_id: str = ""

    def __post_init__(self):
        if not len(self.question) or not len(self.answer):
            raise ContractError(f"question {self.question_id!r}: empty question or answer")
        if self.label not in (0, 1):
            raise ContractError(f"question {self.question_id!r}: label must be 0 or 1, got {self.label}")


@dataclass
class NasmConfig:
    vocab_size: int
    embed_dim: int = 50
    hidden: int = 50
    layers: int = 3
    latent_dim: int = 50
    prior_hidden: int = 50
    joint_hidden: int = 150
    dropout: float = 0.4
    max_len: int = 100
    shared_lstm: bool = True


@dataclass
class LstmLayer(ParamSet):
    Wx: Tensor
    Wh: Tensor
    b: Tensor


@dataclass
class LstmParams(ParamSet):
    """Stacked LSTM; gate blocks in each fused matrix are ordered input, forget, output, candidate."""

    layers: list[LstmLayer]

    @property
    def hidden(self) -> int:
        return self.layers[0].Wh.shape[0]


def init_lstm(rng, input_dim: int, hidden: int, n_layers: int, dtype, prefix: str,
              forget_bias: float = 1.0) -> LstmParams:
    layers = []
    for i in range(n_layers):
        d = input_dim if i == 0 else hidden
        layers.append(LstmLayer(
            Wx=fan_in_uniform(rng, d, 4 * hidden, dtype, f"{prefix}{i}.Wx"),
            Wh=fan_in_uniform(rng, hidden, 4 * hidden, dtype, f"{prefix}{i}.Wh"),
            b=zeros(4 * hidden, dtype, f"{prefix}{i}.b"),
        ))
        layers[-1].b.values[hidden:2 * hidden] = forget_bias
    return LstmParams(layers)


@dataclass
class NasmGenParams(ParamSet):
    embedding: Tensor
    q_lstm: LstmParams
    a_lstm: LstmParams
    W1: Tensor
    b1: Tensor
    W2: Tensor
    b2: Tensor
    W3: Tensor
    b3: Tensor
    W4: Tensor
    b4: Tensor
    W_h: Tensor
    W_s: Tensor
    W_alpha: Tensor
    W_a: Tensor
    W_n: Tensor
    M: Tensor
    b: Tensor

    @property
    def dtype(self):
        return self.M.dtype


@dataclass
class NasmInfParams(ParamSet):
    W5: Tensor
    b5: Tensor
    W6: Tensor
    b6: Tensor
    W7: Tensor
    b7: Tensor
    W8: Tensor
    b8: Tensor
    W9: Tensor
    b9: Tensor
    q_lstm: LstmParams | None = None
    a_lstm: LstmParams | None = None


def init_params(config: NasmConfig, seed: int = 0, dtype=np.float32,
                embeddings: np.ndarray | None = None) -> tuple[NasmGenParams, NasmInfParams]:
    """Fan-in uniform weights, zero biases, both log-sigma heads start at zero."""
    c = config
    rng = make_rng(seed, stream=2)
    H, K, P, J = c.hidden, c.latent_dim, c.prior_hidden, c.joint_hidden
    if embeddings is None:
        emb = Tensor(rng.uniform(-0.1, 0.1, (c.vocab_size, c.embed_dim)).astype(dtype),
                     requires_grad=True, name="embedding", dtype=dtype)
    else:
        if embeddings.shape != (c.vocab_size, c.embed_dim):
            raise DimensionError(f"embedding matrix {embeddings.shape} != ({c.vocab_size}, {c.embed_dim})")
        emb = Tensor(embeddings, requires_grad=True, name="embedding", dtype=dtype)
    gen = NasmGenParams(
        embedding=emb,
        q_lstm=init_lstm(rng, c.embed_dim, H, c.layers, dtype, "q_lstm"),
        a_lstm=init_lstm(rng, c.embed_dim, H, c.layers, dtype, "a_lstm"),
        W1=fan_in_uniform(rng, H, P, dtype, "W1"), b1=zeros(P, dtype, "b1"),
        W2=fan_in_uniform(rng, P, P, dtype, "W2"), b2=zeros(P, dtype, "b2"),
        W3=fan_in_uniform(rng, P, K, dtype, "W3"), b3=zeros(K, dtype, "b3"),
        W4=zeros((P, K), dtype, "W4"), b4=zeros(K, dtype, "b4"),
        W_h=fan_in_uniform(rng, K, H, dtype, "W_h"),
        W_s=fan_in_uniform(rng, H, H, dtype, "W_s"),
        W_alpha=fan_in_uniform(rng, H, 1, dtype, "W_alpha"),
        W_a=fan_in_uniform(rng, H, H, dtype, "W_a"),
        W_n=fan_in_uniform(rng, H, H, dtype, "W_n"),
        M=fan_in_uniform(rng, H, H, dtype, "M"), b=zeros(1, dtype, "b"),
    )
    inf = NasmInfParams(
        W5=fan_in_uniform(rng, 1, H, dtype, "W5"), b5=zeros(H, dtype, "b5"),
        W6=fan_in_uniform(rng, 3 * H, J, dtype, "W6"), b6=zeros(J, dtype, "b6"),
        W7=fan_in_uniform(rng, J, J, dtype, "W7"), b7=zeros(J, dtype, "b7"),
        W8=fan_in_uniform(rng, J, K, dtype, "W8"), b8=zeros(K, dtype, "b8"),
        W9=zeros((J, K), dtype, "W9"), b9=zeros(K, dtype, "b9"),
    )
    if not c.shared_lstm:
        inf.q_lstm = init_lstm(rng, c.embed_dim, H, c.layers, dtype, "inf_q_lstm")
        inf.a_lstm = init_lstm(rng, c.embed_dim, H, c.layers, dtype, "inf_a_lstm")
    return gen, inf


# ---------------------------------------------------------------------------
# batching


@dataclass
class Batch:
    q_ids: np.ndarray
    q_len: np.ndarray
    a_ids: np.ndarray
    a_len: np.ndarray
    labels: np.ndarray

    def __len__(self):
        return len(self.labels)

    def repeat(self, n: int) -> "Batch":
        return Batch(*(np.repeat(x, n, axis=0) for x in
                       (self.q_ids, self.q_len, self.a_ids, self.a_len, self.labels)))


def _pad(seqs: Sequence[Sequence[int]], vocab_size: int, max_len: int, what: str):
    lengths = np.empty(len(seqs), dtype=np.intp)
    truncated = 0
    for i, s in enumerate(seqs):
        if len(s) == 0:
            raise ContractError(f"empty {what} sequence")
        if len(s) > max_len:
            truncated += 1
        lengths[i] = min(len(s), max_len)
    ids = np.zeros((len(seqs), int(lengths.max())), dtype=np.intp)
    for i, s in enumerate(seqs):
        row = np.asarray(s[:lengths[i]], dtype=np.intp)
        if row.min() < 0 or row.max() >= vocab_size:
            raise VocabularyError(f"token id outside vocabulary of size {vocab_size} in {what}")
        ids[i, :lengths[i]] = row
    if truncated:
        log.warning("truncated %d %s sequences to %d tokens", truncated, what, max_len)
    return ids, lengths


def make_batch(triples: Sequence[QATriple], vocab_size: int, max_len: int = 100) -> Batch:
    q_ids, q_len = _pad([t.question for t in triples], vocab_size, max_len, "question")
    a_ids, a_len = _pad([t.answer for t in triples], vocab_size, max_len, "answer")
    labels = np.array([t.label for t in triples], dtype=np.float64)
    return Batch(q_ids, q_len, a_ids, a_len, labels)


# ---------------------------------------------------------------------------
# network pieces


def _lstm_run(ids: np.ndarray, lengths: np.ndarray, embedding: Tensor, lstm: LstmParams,
              masks=None, rate: float = 0.0) -> tuple[list[Tensor], Tensor]:
    """Top-layer states at every step and the state at each row's true last token.

    Rows shorter than the batch keep their state frozen past their end.
    """
    B, T = ids.shape
    H = lstm.hidden
    dtype = embedding.dtype
    n = len(lstm.layers)
    h = [Tensor._wrap(np.zeros((B, H), dtype=dtype)) for _ in range(n)]
    c = [Tensor._wrap(np.zeros((B, H), dtype=dtype)) for _ in range(n)]
    outputs = []
    for t in range(T):
        x = ad.take_rows(embedding, ids[:, t])
        if masks is not None:
            x = ad.dropout(x, masks[t], rate)
        valid = t < lengths
        for i, layer in enumerate(lstm.layers):
            z = (x @ layer.Wx + h[i] @ layer.Wh) + layer.b
            gate_i = ad.sigmoid(ad.cols(z, 0, H))
            gate_f = ad.sigmoid(ad.cols(z, H, 2 * H))
            gate_o = ad.sigmoid(ad.cols(z, 2 * H, 3 * H))
            cand = ad.tanh(ad.cols(z, 3 * H, 4 * H))
            c_new = ad.mul(gate_f, c[i]) + ad.mul(gate_i, cand)
            h_new = ad.mul(gate_o, ad.tanh(c_new))
            if valid.all():
                h[i], c[i] = h_new, c_new
            else:
                keep = Tensor._wrap(np.repeat(valid[:, None], H, axis=1).astype(dtype))
                hold = Tensor._wrap(1 - keep.values)
                h[i] = ad.mul(keep, h_new) + ad.mul(hold, h[i])
                c[i] = ad.mul(keep, c_new) + ad.mul(hold, c[i])
            x = h[i]
        outputs.append(h[-1])
    return outputs, h[-1]


def lstm_encode(tokens: Sequence[int], embedding: Tensor, lstm: LstmParams,
                dropout_mask=None, rate: float = 0.0) -> Tensor:
    """State sequence (T, H) of one token sequence; row T-1 is the sentence vector.

    ``dropout_mask`` (T, embed_dim), when given, is applied to the embedded
    tokens.
    """
    if len(tokens) == 0:
        raise ContractError("empty token sequence")
    ids = np.asarray(tokens, dtype=np.intp)
    V = embedding.shape[0]
    if ids.min() < 0 or ids.max() >= V:
        raise VocabularyError(f"token id outside vocabulary of size {V}")
    masks = None
    if dropout_mask is not None:
        m = np.asarray(dropout_mask)
        if m.shape != (len(ids), embedding.shape[1]):
            raise DimensionError(f"dropout mask {m.shape} != ({len(ids)}, {embedding.shape[1]})")
        masks = [m[t:t + 1] for t in range(len(ids))]
    states, _ = _lstm_run(ids[None, :], np.array([len(ids)]), embedding, lstm, masks, rate)
    return ad.concat(states, axis=0)


def _mlp_heads(x: Tensor, layers, heads) -> DiagGaussian:
    for W, b in layers:
        x = ad.tanh(x @ W + b)
    (W_mu, b_mu), (W_ls, b_ls) = heads
    return DiagGaussian(x @ W_mu + b_mu, x @ W_ls + b_ls)


def prior(q_last: Tensor, gen: NasmGenParams) -> DiagGaussian:
    """p(h|q) from the last question state(s), shape (H,) or (B, H)."""
    return _mlp_heads(q_last, [(gen.W1, gen.b1), (gen.W2, gen.b2)],
                      [(gen.W3, gen.b3), (gen.W4, gen.b4)])


def infer(q_last: Tensor, a_last: Tensor, labels, inf: NasmInfParams) -> DiagGaussian:
    """q(h|q,a,y) from the last question and answer states and the label."""
    y = np.asarray(labels, dtype=q_last.dtype).reshape(-1, 1)
    if q_last.values.ndim == 1:
        q_last, a_last = ad.reshape(q_last, (1, -1)), ad.reshape(a_last, (1, -1))
        single = True
    else:
        single = False
    s_y = Tensor._wrap(y) @ inf.W5 + inf.b5
    gamma = ad.concat([q_last, a_last, s_y], axis=1)
    dist = _mlp_heads(gamma, [(inf.W6, inf.b6), (inf.W7, inf.b7)],
                      [(inf.W8, inf.b8), (inf.W9, inf.b9)])
    if single:
        k = dist.dim
        return DiagGaussian(ad.reshape(dist.mu, (k,)), ad.reshape(dist.log_sigma, (k,)))
    return dist


def _attend_batch(h: Tensor, a_states: list[Tensor], a_last: Tensor, a_len: np.ndarray,
                  gen: NasmGenParams) -> tuple[Tensor, Tensor, Tensor]:
    query = h @ gen.W_h
    scores = [ad.tanh(s @ gen.W_s + query) @ gen.W_alpha for s in a_states]
    scores = ad.concat(scores, axis=1)
    T = len(a_states)
    pad = np.arange(T)[None, :] >= a_len[:, None]
    if pad.any():
        scores = scores + Tensor._wrap((pad * MASK_FILL).astype(scores.dtype))
    alpha = ad.softmax(scores, axis=1)
    context = ad.scale_rows(a_states[0], ad.cols(alpha, 0, 1))
    for t in range(1, T):
        context = context + ad.scale_rows(a_states[t], ad.cols(alpha, t, t + 1))
    z_a = ad.tanh(context @ gen.W_a + a_last @ gen.W_n)
    return alpha, context, z_a


def attend(h: Tensor, a_states: Tensor, gen: NasmGenParams) -> tuple[Tensor, Tensor, Tensor]:
    """Attention weights (T,), context vector (H,) and answer vector z_a (H,) for one answer."""
    h = h if isinstance(h, Tensor) else Tensor(h, dtype=gen.dtype)
    T, H = a_states.shape
    rows = [ad.take_rows(a_states, [t]) for t in range(T)]
    alpha, context, z_a = _attend_batch(ad.reshape(h, (1, -1)), rows, rows[-1], np.array([T]), gen)
    return ad.reshape(alpha, (T,)), ad.reshape(context, (H,)), ad.reshape(z_a, (H,))


def relatedness_logit(z_q: Tensor, z_a: Tensor, M: Tensor, b: Tensor) -> Tensor:
    """z_q^T M z_a + b per row, shape (B, 1)."""
    if z_q.values.ndim == 1:
        z_q, z_a = ad.reshape(z_q, (1, -1)), ad.reshape(z_a, (1, -1))
    bil = ad.sum(ad.mul(z_q @ M, z_a), axis=1)
    return ad.reshape(bil, (-1, 1)) + b


def predict(z_q, z_a, M: Tensor, b: Tensor) -> Tensor:
    """p(y=1 | z_q, z_a) = sigmoid(z_q^T M z_a + b)."""
    z_q = z_q if isinstance(z_q, Tensor) else Tensor(z_q, dtype=M.dtype)
    z_a = z_a if isinstance(z_a, Tensor) else Tensor(z_a, dtype=M.dtype)
    single = z_q.values.ndim == 1
    p = ad.sigmoid(relatedness_logit(z_q, z_a, M, b))
    return ad.reshape(p, ()) if single else ad.reshape(p, (-1,))


# ---------------------------------------------------------------------------
# bound and scoring


@dataclass
class Encoded:
    q_last: Tensor
    a_states: list[Tensor]
    a_last: Tensor
    inf_q_last: Tensor
    inf_a_last: Tensor


def _encode(batch: Batch, gen: NasmGenParams, inf: NasmInfParams | None, masks=None,
            rate: float = 0.0) -> Encoded:
    qm, am = (masks if masks is not None else (None, None))
    _, q_last = _lstm_run(batch.q_ids, batch.q_len, gen.embedding, gen.q_lstm, qm, rate)
    a_states, a_last = _lstm_run(batch.a_ids, batch.a_len, gen.embedding, gen.a_lstm, am, rate)
    iq, ia = q_last, a_last
    if inf is not None and inf.q_lstm is not None:
        _, iq = _lstm_run(batch.q_ids, batch.q_len, gen.embedding, inf.q_lstm, qm, rate)
        _, ia = _lstm_run(batch.a_ids, batch.a_len, gen.embedding, inf.a_lstm, am, rate)
    return Encoded(q_last, a_states, a_last, iq, ia)


def dropout_masks(batch: Batch, embed_dim: int, rate: float, rng) -> tuple[list, list]:
    keep = 1.0 - rate
    qm = [bernoulli_mask(rng, (len(batch), embed_dim), keep) for _ in range(batch.q_ids.shape[1])]
    am = [bernoulli_mask(rng, (len(batch), embed_dim), keep) for _ in range(batch.a_ids.shape[1])]
    return qm, am


@dataclass
class NasmElboTerms:
    log_likelihood: Tensor
    kl: Tensor
    posterior: DiagGaussian
    prior: DiagGaussian
    epsilon: np.ndarray = field(repr=False)

    @property
    def elbo(self) -> Tensor:
        return self.log_likelihood - self.kl


def _tile(t: Tensor, rows: np.ndarray | None) -> Tensor:
    return t if rows is None else ad.take_rows(t, rows)


def _bernoulli_loglik(logit: Tensor, y: np.ndarray) -> Tensor:
    yt = Tensor._wrap(y.astype(logit.dtype).reshape(logit.shape))
    not_y = Tensor._wrap((1 - y).astype(logit.dtype).reshape(logit.shape))
    return ad.mul(yt, ad.log_sigmoid(logit)) + ad.mul(not_y, ad.log_sigmoid(-logit))


def elbo_terms(triples, gen: NasmGenParams, inf: NasmInfParams, num_samples: int = 1, rng=None,
               epsilon=None, masks=None, dropout: float = 0.0, clamp: bool = True,
               max_len: int = 100) -> NasmElboTerms:
    """Per-triple bound pieces.

    Noise is either drawn from ``rng`` or fixed with ``epsilon`` of shape
    (B, L, K).  ``masks`` (question masks, answer masks) switch on embedding
    dropout at ``dropout``; with ``dropout > 0`` and no masks they are drawn
    from ``rng``.
    """
    if num_samples < 1:
        raise ContractError("num_samples must be at least 1")
    batch = triples if isinstance(triples, Batch) else make_batch(triples, gen.embedding.shape[0], max_len)
    B, L, K = len(batch), num_samples, gen.W3.shape[1]
    if masks is None and dropout > 0:
        if rng is None:
            raise ContractError("dropout needs an rng or explicit masks")
        masks = dropout_masks(batch, gen.embedding.shape[1], dropout, rng)
    enc = _encode(batch, gen, inf, masks, dropout)
    p = prior(enc.q_last, gen)
    q = infer(enc.inf_q_last, enc.inf_a_last, batch.labels, inf)
    if clamp:
        p, q = p.clamped(), q.clamped()
    if epsilon is None:
        if rng is None:
            raise ContractError("either rng or epsilon is required")
        epsilon = standard_normal(rng, (B, L, K), gen.dtype)
    eps = np.asarray(epsilon, dtype=gen.dtype).reshape(B * L, K)
    rows = None if L == 1 else np.repeat(np.arange(B), L)
    h = reparameterized_sample(DiagGaussian(_tile(q.mu, rows), _tile(q.log_sigma, rows)), eps).h
    a_states = [_tile(s, rows) for s in enc.a_states]
    a_len = batch.a_len if rows is None else batch.a_len[rows]
    _, _, z_a = _attend_batch(h, a_states, _tile(enc.a_last, rows), a_len, gen)
    logit = relatedness_logit(_tile(enc.q_last, rows), z_a, gen.M, gen.b)
    y = batch.labels if rows is None else batch.labels[rows]
    ll = ad.reshape(_bernoulli_loglik(logit, y), (B, L))
    ll = ad.mean(ll, axis=1)
    return NasmElboTerms(ll, kl_gaussians(q, p), q, p, eps.reshape(B, L, K))


def elbo(triples, gen: NasmGenParams, inf: NasmInfParams, num_samples: int = 1, rng=None,
         **kwargs) -> Tensor:
    """Lower bound on log p(y|q,a) for each triple, shape (B,)."""
    return elbo_terms(triples, gen, inf, num_samples, rng, **kwargs).elbo


def _logits_given_h(enc: Encoded, batch: Batch, h: Tensor, rows, gen: NasmGenParams) -> Tensor:
    a_states = [_tile(s, rows) for s in enc.a_states]
    a_len = batch.a_len if rows is None else batch.a_len[rows]
    _, _, z_a = _attend_batch(h, a_states, _tile(enc.a_last, rows), a_len, gen)
    return relatedness_logit(_tile(enc.q_last, rows), z_a, gen.M, gen.b)


def score(triples, gen: NasmGenParams, num_samples: int = 20, rng=None, max_len: int = 100,
          batch_size: int = 256) -> np.ndarray:
    """Mean over h ~ p(h|q) of p(y=1|q,a,h), one probability per pair."""
    if num_samples < 1:
        raise ContractError("num_samples must be at least 1")
    if not isinstance(triples, Batch) and len(triples) == 0:
        raise ContractError("no candidates to score")
    rng = make_rng(0) if rng is None else rng
    items = list(triples) if not isinstance(triples, Batch) else None
    if items is None:
        return _score_batch(triples, gen, num_samples, rng)
    out = []
    for start in range(0, len(items), batch_size):
        batch = make_batch(items[start:start + batch_size], gen.embedding.shape[0], max_len)
        out.append(_score_batch(batch, gen, num_samples, rng))
    return np.concatenate(out)


def _score_batch(batch: Batch, gen: NasmGenParams, L: int, rng) -> np.ndarray:
    B, K = len(batch), gen.W3.shape[1]
    enc = _encode(batch, gen, None)
    p = prior(enc.q_last, gen)
    rows = None if L == 1 else np.repeat(np.arange(B), L)
    eps = standard_normal(rng, (B * L, K), gen.dtype)
    h = reparameterized_sample(DiagGaussian(_tile(p.mu, rows), _tile(p.log_sigma, rows)), eps).h
    probs = ad.sigmoid(_logits_given_h(enc, batch, h, rows, gen)).values.reshape(B, L)
    return probs.astype(np.float64).mean(axis=1)


def deterministic_score(triples, gen: NasmGenParams, max_len: int = 100) -> np.ndarray:
    """The attention model with the latent replaced by the prior mean (no sampling)."""
    batch = triples if isinstance(triples, Batch) else make_batch(triples, gen.embedding.shape[0], max_len)
    enc = _encode(batch, gen, None)
    h = prior(enc.q_last, gen).mu
    return ad.sigmoid(_logits_given_h(enc, batch, h, None, gen)).values.reshape(-1).astype(np.float64)


def prior_of_questions(questions: Sequence[Sequence[int]], gen: NasmGenParams,
                       max_len: int = 100) -> DiagGaussian:
    ids, lengths = _pad(questions, gen.embedding.shape[0], max_len, "question")
    _, q_last = _lstm_run(ids, lengths, gen.embedding, gen.q_lstm)
    return prior(q_last, gen)


class NASM:
    """Trainable wrapper around generative and inference parameters."""

    kind = "nasm"
    higher_is_better = True

    def __init__(self, gen: NasmGenParams, inf: NasmInfParams, config: NasmConfig, vocab=None,
                 eval_samples: int = 20):
        self.gen = gen
        self.inf = inf
        self.cfg = config
        self.vocab = vocab
        self.eval_samples = eval_samples
        self.combiner = None

    @classmethod
    def create(cls, config: NasmConfig, seed: int = 0, vocab=None, dtype=np.float32,
               embeddings: np.ndarray | None = None, eval_samples: int = 20) -> "NASM":
        gen, inf = init_params(config, seed, dtype, embeddings)
        return cls(gen, inf, config, vocab, eval_samples)

    @property
    def config(self) -> dict:
        from dataclasses import asdict
        return asdict(self.cfg)

    def parameters(self) -> dict[str, Tensor]:
        out = {f"gen.{k}": v for k, v in self.gen.named().items()}
        out.update({f"inf.{k}": v for k, v in self.inf.named().items()})
        return out

    @property
    def groups(self) -> dict[str, list[str]]:
        names = list(self.parameters())
        return {"generative": [n for n in names if n.startswith("gen.")],
                "inference": [n for n in names if n.startswith("inf.")]}

    def objective(self, batch: Sequence[QATriple], rng) -> Tensor:
        """Negative mean single-sample bound with embedding dropout."""
        b = make_batch(batch, self.cfg.vocab_size, self.cfg.max_len)
        return -ad.mean(elbo(b, self.gen, self.inf, 1, rng, dropout=self.cfg.dropout))

    def score(self, triples, num_samples: int | None = None, rng=None) -> np.ndarray:
        n = self.eval_samples if num_samples is None else num_samples
        return score(triples, self.gen, n, rng, self.cfg.max_len)

    def dev_metric(self, triples: Sequence[QATriple], seed: int) -> float:
        from .ranking import evaluate_ranking
        scores = self.score(triples, rng=make_rng(seed, stream=7))
        return evaluate_ranking(triples, scores).map
