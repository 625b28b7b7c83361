"""End-to-end detection and repair starting from a ranked dataset."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .btscore import BTFitConfig, BTFitDiagnostics, fit_scores
from .dataset import RankedDataset, ScoreAssignment
from .effects import EffectReport, fdetect
from .graph import CausalGraph, CausalModel, estimate_parameters
from .repair import EPS_BASELINE, FrankResult, frank_model
from .structure import learn_structure


@dataclass(frozen=True)
class PipelineConfig:
    bt: BTFitConfig = field(default_factory=BTFitConfig)
    smoothing: float = 1.0
    min_count: int = 5
    alpha: float = 0.05
    max_cond: int = 3
    eps: float = EPS_BASELINE
    score_name: str = "score"


@dataclass(frozen=True)
class Fitted:
    scores: ScoreAssignment
    graph: CausalGraph
    model: CausalModel
    bt_diagnostics: BTFitDiagnostics | None = None


def fit(
    data: RankedDataset,
    graph: CausalGraph | None = None,
    config: PipelineConfig | None = None,
    scores: ScoreAssignment | np.ndarray | None = None,
) -> Fitted:
    """Scores (Bradley-Terry unless given), graph (learned unless given) and parameters."""
    config = config or PipelineConfig()
    diag = None
    if scores is None:
        scores, diag = fit_scores(data, config.bt)
    elif not isinstance(scores, ScoreAssignment):
        scores = ScoreAssignment(np.asarray(scores, dtype=float))
    if graph is None:
        graph = learn_structure(data, scores, config.alpha, config.max_cond, config.score_name)
    model = estimate_parameters(data, scores, graph, config.smoothing, config.min_count)
    return Fitted(scores, graph, model, diag)


def detect(
    data: RankedDataset,
    tau: float = 0.05,
    graph: CausalGraph | None = None,
    config: PipelineConfig | None = None,
    scores: ScoreAssignment | np.ndarray | None = None,
) -> tuple[EffectReport, Fitted]:
    fitted = fit(data, graph, config, scores)
    return fdetect(fitted.model, tau), fitted


def frank(
    data: RankedDataset,
    tau: float = 0.05,
    graph: CausalGraph | None = None,
    config: PipelineConfig | None = None,
    scores: ScoreAssignment | np.ndarray | None = None,
) -> tuple[FrankResult, Fitted]:
    """Detect and, if needed, repair; the input comes back unchanged when fair."""
    config = config or PipelineConfig()
    fitted = fit(data, graph, config, scores)
    return frank_model(data, fitted.scores, fitted.model, tau, eps=config.eps), fitted
