"""Causal detection and removal of discrimination in ranked data."""

from .btscore import (
    BTFitConfig,
    BTFitDiagnostics,
    bt_loss_and_gradient,
    fit_scores,
    pair_probability,
)
from .dataset import (
    CsvRoles,
    RankedDataset,
    ScoreAssignment,
    load_ranked_csv,
    write_ranked_csv,
)
from .effects import (
    EffectReport,
    PathSet,
    direct_effect,
    fdetect,
    path_specific_effect,
    total_effect,
)
from .errors import (
    ConvergenceError,
    FairRankError,
    GraphError,
    NonpositiveBaselineError,
    UnidentifiableError,
    ValidationError,
)
from .fairmetrics import (
    ParityReport,
    kendall_tau_distance,
    parity_measures,
    spearman_footrule,
)
from .graph import CausalGraph, CausalModel, estimate_parameters, load_graph, save_graph
from .pipeline import PipelineConfig, detect, frank
from .repair import (
    FrankResult,
    RepairedRanking,
    RepairPlan,
    frank_model,
    plan_repair,
    regenerate_and_rerank,
)
from .structure import CiTestResult, learn_structure
from .threshold import CutoffContext, binary_direct_effect, binary_indirect_effect

__version__ = "0.1.0"

__all__ = [
    "BTFitConfig",
    "BTFitDiagnostics",
    "CausalGraph",
    "CausalModel",
    "CiTestResult",
    "ConvergenceError",
    "CsvRoles",
    "CutoffContext",
    "EffectReport",
    "FairRankError",
    "FrankResult",
    "GraphError",
    "NonpositiveBaselineError",
    "ParityReport",
    "PathSet",
    "PipelineConfig",
    "RankedDataset",
    "RepairPlan",
    "RepairedRanking",
    "ScoreAssignment",
    "UnidentifiableError",
    "ValidationError",
    "binary_direct_effect",
    "binary_indirect_effect",
    "bt_loss_and_gradient",
    "detect",
    "direct_effect",
    "estimate_parameters",
    "fdetect",
    "fit_scores",
    "frank",
    "frank_model",
    "kendall_tau_distance",
    "learn_structure",
    "load_graph",
    "load_ranked_csv",
    "pair_probability",
    "parity_measures",
    "path_specific_effect",
    "plan_repair",
    "regenerate_and_rerank",
    "save_graph",
    "spearman_footrule",
    "total_effect",
    "write_ranked_csv",
]
