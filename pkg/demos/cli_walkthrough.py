"""Drive every `nvi` subcommand on synthetic data in a scratch directory.

Equivalent shell commands are printed before each step, so the output
doubles as a usage reference.
"""
import shlex
import tempfile
from pathlib import Path

from nvi.cli import main
from nvi.synthetic import planted_keyword_qa, split_by_question, two_topic_corpus, write_bow_text, write_qa_tsv


def nvi(*args):
    args = [str(a) for a in args]
    print("\n$ nvi " + " ".join(shlex.quote(a) for a in args))
    code = main(args)
    if code:
        raise SystemExit(code)


def show(path, lines=8):
    text = Path(path).read_text().splitlines()
    print(f"--- {Path(path).name}")
    print("\n".join(text[:lines]))


work = Path(tempfile.mkdtemp(prefix="nvi-demo-"))
docs, _ = two_topic_corpus(n_docs=300, vocab_size=20, seed=0)
write_bow_text(docs[:200], work / "train.txt")
write_bow_text(docs[200:250], work / "dev.txt")
write_bow_text(docs[250:], work / "test.txt")
triples, vocab = planted_keyword_qa(n_questions=80, seed=0)
for name, part in zip(("qtrain", "qdev", "qtest"), split_by_question(triples, (0.6, 0.2, 0.2))):
    write_qa_tsv(part, vocab, work / f"{name}.tsv")
(work / "nasm.cfg").write_text("model = nasm\ndim = 8\nhidden = 16\nembed_dim = 16\nlayers = 1\n"
                               "prior_hidden = 16\njoint_hidden = 48\nepochs = 5\nsamples = 5\n")

nvi("train", "--train", work / "train.txt", "--dev", work / "dev.txt", "--dim", 2, "--hidden", 32,
    "--epochs", 20, "--lr", 0.01, "--batch-size", 32, "--out-dir", work / "nvdm")
show(work / "nvdm" / "history.tsv")
nvi("eval", "--checkpoint", work / "nvdm" / "model.ckpt", "--test", work / "test.txt",
    "--out-dir", work / "nvdm" / "eval")
nvi("inspect", "topics", "--checkpoint", work / "nvdm" / "model.ckpt", "--k", 5,
    "--out-dir", work / "nvdm" / "inspect")
nvi("inspect", "nearest", "--checkpoint", work / "nvdm" / "model.ckpt", "--word", "t3", "--k", 4,
    "--out-dir", work / "nvdm" / "inspect")

# flags override the config file, which overrides built-in defaults
nvi("train", "--config", work / "nasm.cfg", "--epochs", 8, "--train", work / "qtrain.tsv",
    "--dev", work / "qdev.tsv", "--out-dir", work / "nasm")
show(work / "nasm" / "train_summary.tsv")
nvi("eval", "--checkpoint", work / "nasm" / "model.ckpt", "--test", work / "qtest.tsv",
    "--out-dir", work / "nasm" / "eval")
nvi("inspect", "logsigma", "--checkpoint", work / "nasm" / "model.ckpt", "--test", work / "qtest.tsv",
    "--out-dir", work / "nasm" / "inspect")
nvi("variance-study", "--checkpoint", work / "nasm" / "model.ckpt", "--test", work / "qtest.tsv",
    "--sample-counts", "1,5,20", "--runs", 4, "--out-dir", work / "nasm" / "variance")

print(f"\nall outputs under {work}")
for p in sorted(work.rglob("*.tsv")):
    print("  ", p.relative_to(work))
