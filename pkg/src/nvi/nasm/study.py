"""Diagnostics: MAP spread across sample counts, and per-question prior log-sigmas."""
from __future__ import annotations

from collections import OrderedDict
from typing import Sequence

import numpy as np

from ..errors import ContractError
from ..rng import make_rng
from .model import prior_of_questions, score
from .ranking import evaluate_ranking


def sample_variance_study(models, dataset, sample_counts: Sequence[int], seeds: Sequence[int],
                          max_len: int = 100) -> list[dict]:
    """Mean and standard deviation of MAP across runs for each sample count.

    Run ``r`` scores ``dataset`` with ``models[r % len(models)]`` (generative
    parameters or a NASM wrapper) and an rng seeded with ``seeds[r]``.
    """
    if len(seeds) < 2:
        raise ContractError("a variance study needs at least two runs")
    if not isinstance(models, (list, tuple)):
        models = [models]
    gens = [getattr(m, "gen", m) for m in models]
    rows = []
    for n in sample_counts:
        maps = []
        for r, seed in enumerate(seeds):
            s = score(dataset, gens[r % len(gens)], n, make_rng(seed, stream=11), max_len)
            maps.append(evaluate_ranking(dataset, s).map)
        maps = np.array(maps)
        rows.append({"samples": int(n), "mean_map": float(maps.mean()),
                     "std_map": float(maps.std(ddof=1)), "runs": len(seeds)})
    return rows


def group_by_leading_word(triples, vocab, groups: Sequence[str] | None = None) -> "OrderedDict[str, list]":
    """Distinct questions keyed by their first token; optionally only the named groups."""
    seen = set()
    out: OrderedDict = OrderedDict()
    for t in triples:
        if t.question_id in seen:
            continue
        seen.add(t.question_id)
        lead = vocab.token_of(t.question[0]) if vocab is not None else str(t.question[0])
        if groups is not None and lead not in groups:
            continue
        out.setdefault(lead, []).append((t.question_id, list(t.question)))
    return out


def dump_log_sigma_by_group(grouped, gen, max_len: int = 100) -> list[tuple]:
    """Rows (group, question_id, log_sigma_1..K) of p(h|q) for every grouped question."""
    rows = []
    for label, questions in grouped.items():
        if not questions:
            continue
        p = prior_of_questions([q for _, q in questions], gen, max_len)
        for (qid, _), ls in zip(questions, p.log_sigma.values):
            rows.append((label, qid, *[float(v) for v in ls]))
    return rows


def stratified_map(triples, scores, vocab) -> dict[str, float]:
    """MAP restricted to questions sharing a first token."""
    by_lead: OrderedDict = OrderedDict()
    for t, s in zip(triples, scores):
        lead = vocab.token_of(t.question[0]) if vocab is not None else str(t.question[0])
        by_lead.setdefault(lead, ([], []))
        by_lead[lead][0].append(t)
        by_lead[lead][1].append(s)
    out = {}
    for lead, (ts, ss) in by_lead.items():
        try:
            out[lead] = evaluate_ranking(ts, ss).map
        except ContractError:
            continue
    return out
