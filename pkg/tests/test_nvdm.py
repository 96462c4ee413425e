import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nvi import autodiff as ad
from nvi.distributions import kl_standard
from nvi.errors import ContractError, DimensionError, EmptyDocumentError, VocabularyError
from nvi.nvdm import (NVDM, BowDocument, NvdmParams, decode_log_probs, document_bounds, elbo,
                      elbo_terms, encode, init_params, nearest_words, perplexity, topic_words)
from nvi.rng import make_rng, standard_normal


def zero_params(V, K, H=4, **over):
    shapes = dict(W1=(V, H), b1=(H,), W2=(H, H), b2=(H,), W3=(H, K), b3=(K,), W4=(H, K), b4=(K,),
                  R=(K, V), b_x=(V,))
    vals = {k: np.zeros(s) for k, s in shapes.items()}
    vals.update({k: np.asarray(v, float) for k, v in over.items()})
    return NvdmParams(**{k: ad.Tensor(v, requires_grad=True, name=k) for k, v in vals.items()})


def random_params(V, K, H, seed, scale=0.5):
    p = init_params(V, K, H, seed=seed, dtype=np.float64)
    r = np.random.default_rng(seed + 100)
    for t in p.named().values():
        t.values += scale * r.normal(size=t.shape)
    return p


def doc(counts, doc_id="d"):
    return BowDocument(dict(counts), doc_id=doc_id)


def test_bow_document_invariants():
    d = BowDocument.from_ids([0, 0, 2])
    assert d.counts == {0: 2, 2: 1} and d.n_words == 3
    with pytest.raises(ContractError):
        BowDocument({0: 2}, n_words=5)
    with pytest.raises(ContractError):
        BowDocument({0: 0})


def test_encode_zero_weights_pass_biases():
    p = zero_params(6, 3, b3=[0.3, 0.3, 0.3], b4=[-1, -1, -1])
    for d in (doc({0: 1}), doc({1: 4, 5: 2})):
        q = encode(d, p)
        np.testing.assert_array_equal(q.mu.values, [0.3] * 3)
        np.testing.assert_array_equal(q.log_sigma.values, [-1] * 3)


def test_encode_is_deterministic():
    p = random_params(7, 2, 5, 0)
    d = doc({1: 2, 3: 1})
    a, b = encode(d, p), encode(d, p)
    assert a.mu.values.tobytes() == b.mu.values.tobytes()
    assert a.log_sigma.values.tobytes() == b.log_sigma.values.tobytes()


def test_encode_hand_instance():
    # |V|=3, hidden=2, K=1; X = (2, 0, 1)
    W1 = [[0.5, -1.0], [0.2, 0.3], [-0.4, 1.0]]
    b1 = [0.1, -0.2]
    W2 = [[1.0, 0.5], [-0.5, 2.0]]
    b2 = [0.0, 0.1]
    p = zero_params(3, 1, H=2, W1=W1, b1=b1, W2=W2, b2=b2, W3=[[1.0], [-1.0]], b3=[0.2],
                    W4=[[0.5], [0.25]], b4=[-0.3])
    # lambda = relu(2*(0.5,-1) + (-0.4,1) + (0.1,-0.2)) = relu(0.7, -1.2) = (0.7, 0)
    # pi = relu(0.7*(1, 0.5) + (0, 0.1)) = (0.7, 0.45)
    q = encode(doc({0: 2, 2: 1}), p)
    assert float(q.mu.values[0]) == pytest.approx(0.7 - 0.45 + 0.2, abs=1e-12)
    assert float(q.log_sigma.values[0]) == pytest.approx(0.35 + 0.1125 - 0.3, abs=1e-12)


def test_encode_vocab_mismatch():
    p = zero_params(3, 1)
    with pytest.raises(DimensionError):
        encode(doc({5: 1}), p)


def test_batch_encode_matches_single_rows():
    p = random_params(8, 3, 6, 1)
    docs = [doc({0: 1, 3: 2}), doc({7: 5}), doc({1: 1, 2: 1, 4: 1})]
    batch = encode(docs, p)
    for i, d in enumerate(docs):
        np.testing.assert_allclose(batch.mu.values[i], encode(d, p).mu.values, rtol=1e-14)


def test_decode_uniform_when_everything_zero():
    p = zero_params(5, 2)
    np.testing.assert_allclose(decode_log_probs(np.zeros(2), p).values, np.log(1 / 5), rtol=1e-15)


def test_decode_bias_shift_invariance(rng):
    p = random_params(6, 2, 3, 2)
    h = rng.normal(size=2)
    before = decode_log_probs(h, p).values.copy()
    p.b_x.values += 3.7
    np.testing.assert_allclose(decode_log_probs(h, p).values, before, atol=1e-12)


def test_decode_hand_values():
    p = zero_params(3, 1, R=[[1.0, 0.0, -1.0]])
    lse = math.log(math.e + 1.0 + 1.0 / math.e)  # 1.40760596...
    expected = [1.0 - lse, -lse, -1.0 - lse]
    np.testing.assert_allclose(expected, [-0.4076, -1.4076, -2.4076], atol=1e-4)
    np.testing.assert_allclose(decode_log_probs([1.0], p).values, expected, atol=1e-12)


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 10**6))
def test_decode_normalises(seed):
    p = random_params(9, 3, 4, seed % 97, scale=2.0)
    h = np.random.default_rng(seed).normal(size=3) * 3
    assert np.exp(decode_log_probs(h, p).values).sum() == pytest.approx(1.0, abs=1e-6)


def test_elbo_closed_form_when_uniform_and_standard():
    V = 5
    p = zero_params(V, 2)
    d = doc({0: 3, 4: 2, 2: 1})
    value = float(elbo(d, p, 1, make_rng(0)).values)
    assert value == pytest.approx(6 * math.log(1 / V), rel=1e-15)
    terms = elbo_terms(d, p, 3, make_rng(0))
    assert float(terms.kl.values[0]) == 0.0


def test_single_sample_average_matches_many_sample_bound():
    p = random_params(6, 2, 4, 3)
    d = doc({0: 2, 1: 1, 5: 3})
    eps = standard_normal(make_rng(1), (10_000, 1, 2))
    singles = elbo([d] * 10_000, p, 1, epsilon=eps).values
    many = float(elbo(d, p, 10_000, make_rng(2)).values)
    se = singles.std(ddof=1) / math.sqrt(singles.size)
    # the 10^4-sample bound has its own MC error of about the same size
    assert abs(singles.mean() - many) < 3 * math.sqrt(2) * se


def test_empty_document_rejected():
    empty = BowDocument({}, doc_id="blank")
    p = zero_params(4, 1)
    with pytest.raises(EmptyDocumentError):
        elbo(empty, p, 1, make_rng(0))
    with pytest.raises(EmptyDocumentError, match="blank"):
        perplexity([doc({0: 1}), empty], p)


def test_num_samples_must_be_positive():
    with pytest.raises(ContractError):
        elbo(doc({0: 1}), zero_params(2, 1), 0, make_rng(0))


def test_perplexity_uniform_equals_vocab_size():
    V = 7
    p = zero_params(V, 3)
    corpus = [doc({0: 1}), doc({1: 2, 6: 4}), doc({3: 9})]
    assert perplexity(corpus, p, 20, make_rng(0)) == pytest.approx(V, rel=1e-14)
    assert perplexity(corpus[:1], p, 20, make_rng(0)) == pytest.approx(V, rel=1e-14)


def test_perplexity_single_document():
    p = random_params(6, 2, 4, 4)
    d = doc({0: 2, 3: 3})
    bound = float(elbo(d, p, 20, make_rng(9)).values)
    assert perplexity([d], p, 20, make_rng(9)) == pytest.approx(math.exp(-bound / 5), rel=1e-12)


def test_perplexity_rejects_empty_corpus():
    with pytest.raises(EmptyDocumentError):
        perplexity([], zero_params(3, 1))


def test_document_bounds_are_batch_invariant():
    p = random_params(6, 2, 4, 5)
    corpus = [doc({i % 6: 1 + i % 3, (i + 2) % 6: 2}) for i in range(10)]
    a = document_bounds(corpus, p, 4, make_rng(3), batch_size=3)
    b = document_bounds(corpus, p, 4, make_rng(3), batch_size=3)
    assert a.tobytes() == b.tobytes()


def test_nearest_words_excludes_query_and_finds_duplicate():
    R = np.array([[1.0, 0.2, 1.0, -0.3, 0.5], [0.5, -1.0, 0.5, 0.8, 0.1]])
    p = zero_params(5, 2, R=R)
    hits = nearest_words(0, 3, p)
    assert 0 not in [w for w, _ in hits]
    assert hits[0][0] == 2 and hits[0][1] == pytest.approx(1.0, abs=1e-12)
    sims = [s for _, s in hits]
    assert sims == sorted(sims, reverse=True)


def test_nearest_words_with_names_and_errors():
    from nvi.corpus_io import Vocabulary
    vocab = Vocabulary(["a", "b", "c"])
    p = zero_params(3, 2, R=[[1.0, 1.0, -1.0], [0.0, 0.1, 0.0]])
    assert nearest_words("a", 1, p, vocab)[0][0] == "b"
    with pytest.raises(VocabularyError):
        nearest_words("zzz", 1, p, vocab)
    with pytest.raises(ContractError):
        nearest_words("a", 3, p, vocab)


def test_nearest_words_tie_break_by_id():
    p = zero_params(4, 1, R=[[1.0, 2.0, 2.0, 2.0]])
    assert [w for w, _ in nearest_words(0, 3, p)] == [1, 2, 3]


def test_topic_words_examples():
    p = zero_params(4, 2, R=[[-1.0, -2.0, 0.5, -0.1], [1.0, 1.0, 1.0, 1.0]])
    assert [w for w, _ in topic_words(0, 1, p)] == [2]
    assert [w for w, _ in topic_words(1, 3, p)] == [0, 1, 2]
    with pytest.raises(IndexError):
        topic_words(2, 1, p)


def test_full_elbo_gradient():
    p = random_params(5, 2, 3, 6)
    docs = [doc({0: 2, 3: 1}), doc({1: 1, 2: 2, 4: 1})]
    eps = np.random.default_rng(0).normal(size=(2, 1, 2))
    err = ad.grad_check(lambda: ad.sum(elbo(docs, p, 1, epsilon=eps)), list(p.named().values()))
    assert err < 1e-4


def test_inflating_mean_lowers_elbo_by_kl_difference():
    p = random_params(6, 2, 4, 7)
    d = doc({0: 1, 2: 3, 5: 1})
    eps = np.array([[[0.3, -0.8]]])
    base = elbo_terms(d, p, 1, epsilon=eps)
    q = base.posterior
    mu, sigma = q.mu.values[0], np.exp(q.log_sigma.values[0])
    p.W3.values *= 2
    p.b3.values *= 2
    # move epsilon so that h = mu + sigma * eps stays where it was
    eps2 = eps + (mu - 2 * mu) / sigma
    inflated = elbo_terms(d, p, 1, epsilon=eps2)
    np.testing.assert_allclose(inflated.reconstruction.values, base.reconstruction.values, rtol=1e-12)
    drop = float(base.elbo.values[0] - inflated.elbo.values[0])
    kl_gap = float(inflated.kl.values[0] - base.kl.values[0])
    assert drop > 0
    assert drop == pytest.approx(kl_gap, rel=1e-10)


def test_vocabulary_permutation_equivariance():
    V, K, H = 6, 2, 4
    p = random_params(V, K, H, 8)
    perm = np.array([3, 0, 5, 1, 4, 2])  # new id of old token i is perm[i]
    docs = [doc({0: 2, 1: 1}), doc({2: 1, 5: 3, 4: 1})]
    eps = np.random.default_rng(1).normal(size=(2, 1, K))
    before = elbo(docs, p, 1, epsilon=eps).values
    inv = np.argsort(perm)
    p.W1.values[...] = p.W1.values[inv]
    p.R.values[...] = p.R.values[:, inv]
    p.b_x.values[...] = p.b_x.values[inv]
    moved = [BowDocument({int(perm[i]): c for i, c in d.counts.items()}) for d in docs]
    np.testing.assert_allclose(elbo(moved, p, 1, epsilon=eps).values, before, rtol=1e-12)


def test_kl_term_uses_clamped_log_sigma():
    p = zero_params(3, 1, b4=[-50.0])
    terms = elbo_terms(doc({0: 1}), p, 1, epsilon=np.zeros((1, 1, 1)))
    expected = float(kl_standard(terms.posterior).values[0])
    assert float(terms.posterior.log_sigma.values[0, 0]) == -10.0
    assert float(terms.kl.values[0]) == expected


def test_init_matches_design():
    p = init_params(30, latent_dim=4, hidden=8, seed=1)
    assert p.W1.dtype == np.float32
    assert np.abs(p.W1.values).max() <= 1 / math.sqrt(30)
    assert np.abs(p.R.values).max() <= 1 / math.sqrt(4)
    assert not np.any(p.W4.values) and not np.any(p.b4.values)
    assert (p.vocab_size, p.latent_dim, p.hidden) == (30, 4, 8)
    q = encode(doc({0: 5, 7: 1}), p)
    np.testing.assert_array_equal(q.log_sigma.values, 0.0)


def test_wrapper_groups_partition_parameters():
    m = NVDM.create(12, 3, 5, seed=0)
    names = set(m.parameters())
    inf, gen = set(m.groups["inference"]), set(m.groups["generative"])
    assert inf | gen == names and not inf & gen
    batch = [doc({0: 1, 4: 2}), doc({11: 3})]
    assert m.objective(batch, make_rng(0)).shape == ()
    assert m.higher_is_better is False
