"""Two numerical sanity checks you can eyeball.

1. Closed-form KL between diagonal Gaussians against a Monte Carlo average
   of log q - log p.
2. For a one-dimensional NVDM, the exact log marginal likelihood by
   Gauss-Hermite quadrature sits above the sampled lower bound, and the
   gap is the expected KL(q || posterior).
"""
import numpy as np

from nvi.distributions import DiagGaussian, kl_gaussians, kl_standard
from nvi.nvdm import BowDocument, decode_log_probs, elbo, init_params
from nvi.rng import make_rng

rng = np.random.default_rng(0)
for k in (1, 3, 10):
    mu_q, ls_q, mu_p, ls_p = rng.normal(size=(4, k)) * 0.7
    q, p = DiagGaussian(mu_q, ls_q), DiagGaussian(mu_p, ls_p)
    closed = float(kl_gaussians(q, p).values)
    x = mu_q + np.exp(ls_q) * rng.standard_normal((1_000_000, k))
    log_ratio = (-0.5 * ((x - mu_q) / np.exp(ls_q)) ** 2 - ls_q
                 + 0.5 * ((x - mu_p) / np.exp(ls_p)) ** 2 + ls_p).sum(axis=1)
    se = log_ratio.std() / np.sqrt(len(log_ratio))
    print(f"K={k:>2}  closed {closed:.5f}  MC {log_ratio.mean():.5f} +- {se:.5f}"
          f"   KL(q||N(0,I)) {float(kl_standard(q).values):.5f}")

params = init_params(vocab_size=5, latent_dim=1, hidden=4, seed=0, dtype=np.float64)
noise = np.random.default_rng(1)
for t in params.named().values():
    t.values += noise.normal(0, 0.8, t.values.shape)
doc = BowDocument({0: 3, 2: 1, 4: 2})

nodes, weights = np.polynomial.hermite_e.hermegauss(200)
log_lik = np.array([float((decode_log_probs(np.array([[h]]), params).values[0] * [3, 0, 1, 0, 2]).sum())
                    for h in nodes])
m = log_lik.max()
exact = m + np.log(np.sum(weights * np.exp(log_lik - m)) / np.sqrt(2 * np.pi))
print(f"\nlog p(doc) by quadrature {exact:.5f}")
for L in (1, 10, 100, 10_000):
    bound = float(elbo(doc, params, L, make_rng(0)).values)
    print(f"ELBO with L={L:>6}: {bound:.5f}   gap {exact - bound:.5f}")
