"""Multinomial distribution learning for cell-based neural architecture
search, with a Kendall-tau analyzer for the early-ranking consistency
hypothesis."""

from .search_space import (
    OP_NAMES,
    OperationKind,
    OPERATIONS,
    NodeId,
    Edge,
    CellTemplate,
    Genotype,
    NetworkTemplate,
    build_cell_template,
    derive_genotype,
    search_space_size,
)
from .distribution import (
    EdgeDistribution,
    GateVector,
    DifferentialPair,
    init_uniform,
    sample_gate,
    record_feedback,
    differentials,
    update_probs,
)
from .evaluator import (
    TabularOracle,
    SurrogateCurveEvaluator,
    best_genotype,
    measure_consistency,
)
from .ranking import RankStats, TauTrace, kendall_tau, tau_trace, mean_tau
from .engine import SearchConfig, SearchResult, Searcher, run_search

__all__ = [
    "OP_NAMES",
    "OperationKind",
    "OPERATIONS",
    "NodeId",
    "Edge",
    "CellTemplate",
    "Genotype",
    "NetworkTemplate",
    "build_cell_template",
    "derive_genotype",
    "search_space_size",
    "EdgeDistribution",
    "GateVector",
    "DifferentialPair",
    "init_uniform",
    "sample_gate",
    "record_feedback",
    "differentials",
    "update_probs",
    "TabularOracle",
    "SurrogateCurveEvaluator",
    "best_genotype",
    "measure_consistency",
    "RankStats",
    "TauTrace",
    "kendall_tau",
    "tau_trace",
    "mean_tau",
    "SearchConfig",
    "SearchResult",
    "Searcher",
    "run_search",
]
