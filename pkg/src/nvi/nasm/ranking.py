"""Ranking metrics and the lexical-overlap combiner."""
from __future__ import annotations

import math
from collections import Counter, OrderedDict
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from ..errors import ContractError


def average_precision(labels_in_rank_order: Sequence[int]) -> float:
    hits, total = 0, 0.0
    for rank, y in enumerate(labels_in_rank_order, start=1):
        if y:
            hits += 1
            total += hits / rank
    return total / hits if hits else 0.0


def reciprocal_rank(labels_in_rank_order: Sequence[int]) -> float:
    for rank, y in enumerate(labels_in_rank_order, start=1):
        if y:
            return 1.0 / rank
    return 0.0


def rank_labels(group: Sequence[tuple[float, int]]) -> list[int]:
    """Labels sorted by descending score; equal scores keep input order."""
    order = sorted(range(len(group)), key=lambda i: -group[i][0])
    return [group[i][1] for i in order]


@dataclass
class RankingReport:
    map: float
    mrr: float
    question_ids: list = field(default_factory=list)
    ap: list[float] = field(default_factory=list)
    rr: list[float] = field(default_factory=list)
    excluded: int = 0

    def rows(self) -> list[tuple]:
        return list(zip(self.question_ids, self.ap, self.rr))


def _report(groups: "OrderedDict[object, list[tuple[float, int]]]") -> RankingReport:
    report = RankingReport(0.0, 0.0)
    for qid, group in groups.items():
        if not group:
            raise ContractError(f"question {qid!r} has no candidates")
        if not any(y for _, y in group):
            report.excluded += 1
            continue
        ranked = rank_labels(group)
        report.question_ids.append(qid)
        report.ap.append(average_precision(ranked))
        report.rr.append(reciprocal_rank(ranked))
    if not report.ap:
        raise ContractError("no evaluable questions")
    report.map = float(np.mean(report.ap))
    report.mrr = float(np.mean(report.rr))
    return report


def map_mrr(groups: Iterable[Sequence[tuple[float, int]]]) -> tuple[float, float]:
    """(MAP, MRR) over per-question lists of (score, label).

    Questions without a correct candidate are skipped.
    """
    rep = _report(OrderedDict(enumerate(list(g) for g in groups)))
    return rep.map, rep.mrr


def group_by_question(triples, scores) -> "OrderedDict[str, list[tuple[float, int]]]":
    groups: OrderedDict = OrderedDict()
    for t, s in zip(triples, scores):
        groups.setdefault(t.question_id, []).append((float(s), int(t.label)))
    return groups


def evaluate_ranking(triples, scores) -> RankingReport:
    """Per-question AP/RR and aggregates for scored triples."""
    if len(triples) != len(scores):
        raise ContractError(f"{len(triples)} triples but {len(scores)} scores")
    return _report(group_by_question(triples, scores))


# ---------------------------------------------------------------------------
# lexical overlap


def overlap_count(question: Sequence[int], answer: Sequence[int], ignore: set = frozenset(),
                  idf: dict | None = None) -> float:
    """Distinct question tokens (minus ``ignore``) that also occur in the answer.

    With ``idf`` each matched token contributes its idf instead of 1.
    """
    shared = (set(question) - set(ignore)) & set(answer)
    if idf is None:
        return float(len(shared))
    return float(sum(idf.get(t, 0.0) for t in shared))


def answer_idf(triples) -> dict:
    """idf over the distinct answer sentences: log(n / df)."""
    answers = {tuple(t.answer) for t in triples}
    df = Counter(tok for a in answers for tok in set(a))
    n = len(answers)
    return {tok: math.log(n / c) for tok, c in df.items()}


class CountCombiner:
    """Logistic regression on (neural probability, overlap count).

    Weights are stored on the raw feature scale as (w0, w_neural, w_count).
    """

    def __init__(self, weights: Sequence[float] | None = None, ignore: Iterable[int] = (),
                 idf: dict | None = None):
        self.weights = None if weights is None else np.asarray(weights, dtype=np.float64)
        self.ignore = set(ignore)
        self.idf = idf

    @property
    def fitted(self) -> bool:
        return self.weights is not None

    def features(self, triples) -> np.ndarray:
        return np.array([overlap_count(t.question, t.answer, self.ignore, self.idf) for t in triples])

    def fit(self, neural: Sequence[float], counts: Sequence[float], labels: Sequence[int],
            lr: float = 0.5, iters: int = 3000) -> "CountCombiner":
        """Full-batch gradient descent on the mean logistic loss."""
        X = np.column_stack([np.asarray(neural, float), np.asarray(counts, float)])
        y = np.asarray(labels, float)
        mu, sd = X.mean(axis=0), X.std(axis=0)
        sd[sd == 0] = 1.0
        Z = np.column_stack([np.ones(len(y)), (X - mu) / sd])
        w = np.zeros(3)
        for _ in range(iters):
            p = 1 / (1 + np.exp(-(Z @ w)))
            w -= lr * Z.T @ (p - y) / len(y)
        raw = np.empty(3)
        raw[1:] = w[1:] / sd
        raw[0] = w[0] - float(np.sum(w[1:] * mu / sd))
        self.weights = raw
        return self

    def fit_triples(self, triples, neural: Sequence[float], **kw) -> "CountCombiner":
        return self.fit(neural, self.features(triples), [t.label for t in triples], **kw)

    def combine(self, neural, counts) -> np.ndarray:
        if not self.fitted:
            raise ContractError("combiner has not been fit")
        w0, w1, w2 = self.weights
        z = w0 + w1 * np.asarray(neural, float) + w2 * np.asarray(counts, float)
        return 1 / (1 + np.exp(-z))

    def score_triples(self, triples, neural) -> np.ndarray:
        return self.combine(neural, self.features(triples))


def combine_with_count(neural_score: float, question: Sequence[int], answer: Sequence[int],
                       combiner: CountCombiner) -> float:
    count = overlap_count(question, answer, combiner.ignore, combiner.idf)
    return float(combiner.combine([neural_score], [count])[0])
