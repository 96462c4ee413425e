"""Fit a two-dimensional NVDM on a corpus with two planted word groups.

Prints dev perplexity before and after training, then the five words each
latent dimension pushes up the most.  Word ids below 10 belong to one
group and the rest to the other, so a good fit shows each list drawn
mostly from one half.  Both dimensions may lean towards the same group;
the decoder bias and the sign of h decide which half a dimension favours.
"""
from nvi.nvdm import NVDM, perplexity, topic_words
from nvi.optimizer import TrainSchedule, history_rows, run_training
from nvi.rng import make_rng
from nvi.synthetic import two_topic_corpus

docs, groups = two_topic_corpus(n_docs=500, vocab_size=20, seed=0)
train, dev = docs[:400], docs[400:]

model = NVDM.create(vocab_size=20, latent_dim=2, hidden=50, seed=0)
print(f"dev perplexity at init: {perplexity(dev, model.params, 20, make_rng(1)):.2f}")

result = run_training(model, train, dev, TrainSchedule(max_epochs=60, patience=10, batch_size=32, lr=0.01))
for epoch, phase, train_obj, dev_ppx in history_rows(result.history)[::10]:
    print(f"  epoch {epoch:>3}  {phase:<10}  train {float(train_obj):8.3f}  dev {float(dev_ppx):7.3f}")
print(f"best epoch {result.best_epoch}")
print(f"dev perplexity after training: {perplexity(dev, model.params, 20, make_rng(1)):.2f}")

for d in range(2):
    words = [w for w, _ in topic_words(d, 5, model.params)]
    low = sum(w in groups[0] for w in words)
    print(f"dimension {d}: {words}  ({low} from the low group, {5 - low} from the high group)")
