"""How much does the sampled NASM score move MAP from run to run?

The score averages p(y=1|q,a,h) over draws of h from the prior, so MAP on a
fixed test set is itself random.  This scores one model ten times per
sample count and prints the spread.  Weights are random with a wide prior,
which makes the latent matter for every pair; then the prior is squeezed
to a point and the spread disappears.
"""
import numpy as np

from nvi.nasm import NASM, NasmConfig
from nvi.nasm.study import sample_variance_study
from nvi.synthetic import planted_keyword_qa

triples, vocab = planted_keyword_qa(n_questions=60, seed=1)
cfg = NasmConfig(vocab_size=len(vocab), embed_dim=8, hidden=8, layers=1, latent_dim=4,
                 prior_hidden=8, joint_hidden=24)
model = NASM.create(cfg, seed=0, vocab=vocab, dtype=np.float64)
noise = np.random.default_rng(0)
for t in model.parameters().values():
    t.values += noise.normal(0, 0.5, t.values.shape)
model.gen.b4.values[...] = 0.5     # prior sigma about 1.6 in every direction


def table(title):
    print(title)
    print(f"{'samples':>8} {'mean MAP':>9} {'std MAP':>9}")
    for row in sample_variance_study(model, triples, (1, 5, 10, 20, 50), seeds=range(10)):
        print(f"{row['samples']:>8} {row['mean_map']:>9.4f} {row['std_map']:>9.4f}")


table("wide prior")
model.gen.W4.values[...] = 0
model.gen.b4.values[...] = -20.0
table("\nprior collapsed to its mean")
