"""Answer selection with a latent stochastic attention query."""
from .model import (
    NASM, Batch, LstmLayer, LstmParams, NasmConfig, NasmElboTerms, NasmGenParams,
    NasmInfParams, QATriple, attend, deterministic_score, elbo, elbo_terms, infer,
    init_params, lstm_encode, make_batch, predict, prior, prior_of_questions, score,
)
from .ranking import (
    CountCombiner, RankingReport, answer_idf, average_precision, combine_with_count,
    evaluate_ranking, group_by_question, map_mrr, overlap_count, reciprocal_rank,
)
from .study import dump_log_sigma_by_group, group_by_leading_word, sample_variance_study, stratified_map

__all__ = [
    "NASM", "Batch", "LstmLayer", "LstmParams", "NasmConfig", "NasmElboTerms", "NasmGenParams",
    "NasmInfParams", "QATriple", "attend", "deterministic_score", "elbo", "elbo_terms", "infer",
    "init_params", "lstm_encode", "make_batch", "predict", "prior", "prior_of_questions", "score",
    "CountCombiner", "RankingReport", "answer_idf", "average_precision", "combine_with_count",
    "evaluate_ranking", "group_by_question", "map_mrr", "overlap_count", "reciprocal_rank",
    "dump_log_sigma_by_group", "group_by_leading_word", "sample_variance_study", "stratified_map",
]
