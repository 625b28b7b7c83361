"""Discrimination removal by minimal shifts of the conditional-Gaussian means.

The repaired means ``mu'`` minimize ``sum (mu' - mu)^2 / sigma^2`` (the
Bhattacharyya distance between equal-variance Gaussians without its 1/8
factor) subject to all four relative effects being at most ``tau``. Each
effect and the baseline ``E'[S | c+]`` are linear in ``mu'``, so the ratio
constraint ``SE(mu') / E'(mu') <= tau`` is encoded exactly as
``SE(mu') - tau * E'(mu') <= 0`` together with ``E'(mu') >= eps``.

With at most five inequality rows and a diagonal Hessian the QP is solved
by enumerating active sets and keeping the KKT point, which is unique by
strict convexity.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field

import numpy as np

from .dataset import RankedDataset, ScoreAssignment
from .effects import (
    EffectReport,
    PathSet,
    effect_weights,
    fdetect,
    indirect_paths,
    mean_score_weights,
)
from .errors import ConvergenceError, ValidationError
from .graph import CausalModel

log = logging.getLogger(__name__)

EPS_BASELINE = 1e-6
CONSTRAINT_NAMES = ("DE_d fwd", "DE_d rev", "DE_i fwd", "DE_i rev", "baseline")
FEAS_TOL = 1e-9
KKT_TOL = 1e-8


def bhattacharyya_distance(mu1: float, mu2: float, sigma: float) -> float:
    """Bhattacharyya distance between N(mu1, sigma^2) and N(mu2, sigma^2).

    >>> bhattacharyya_distance(0.0, 2.0, 1.0)
    0.5
    """
    if not sigma > 0:
        raise ValidationError("sigma must be positive")
    return (mu1 - mu2) ** 2 / (8.0 * sigma**2)


@dataclass(frozen=True)
class RepairQP:
    """``min sum w * (x - mu)^2  s.t.  A x <= b`` over the flattened CG means."""

    mu: np.ndarray
    weights: np.ndarray
    A: np.ndarray
    b: np.ndarray
    names: tuple[str, ...]
    shape: tuple[int, ...]
    tau: float
    eps: float = EPS_BASELINE

    def objective(self, x: np.ndarray) -> float:
        d = np.asarray(x, dtype=float) - self.mu
        return float(np.sum(self.weights * d * d))

    def violation(self, x: np.ndarray) -> np.ndarray:
        return self.A @ x - self.b


def _pi_i(model: CausalModel, pi_i: PathSet | None) -> PathSet:
    return pi_i if pi_i is not None else indirect_paths(model)


def build_repair_qp(
    model: CausalModel,
    tau: float,
    pi_i: PathSet | None = None,
    eps: float = EPS_BASELINE,
    fixed_denominator: bool = False,
) -> RepairQP:
    """Constraint rows for the four relative effects plus the baseline guard.

    With ``fixed_denominator`` the baseline in each ratio is frozen at its
    current value ``E[S | c+](mu)`` instead of moving with ``mu'``.
    """
    if tau < 0:
        raise ValidationError("tau must be nonnegative")
    g = model.graph
    pi_d = PathSet.direct(g)
    pi_i = _pi_i(model, pi_i)
    fav, unf = model.fav_index, model.unfav_index
    base = mean_score_weights(model, fav).reshape(-1)
    mu = model.cg.mu.reshape(-1).astype(float)
    rows, rhs = [], []
    for pi in (pi_d, pi_i):
        for f, t in ((fav, unf), (unf, fav)):
            w = effect_weights(model, pi, f, t).reshape(-1)
            if fixed_denominator:
                rows.append(w)
                rhs.append(tau * float(base @ mu))
            else:
                rows.append(w - tau * base)
                rhs.append(0.0)
    rows.append(-base)
    rhs.append(-eps)
    return RepairQP(
        mu=mu,
        weights=1.0 / model.cg.sigma.reshape(-1) ** 2,
        A=np.array(rows),
        b=np.array(rhs),
        names=CONSTRAINT_NAMES,
        shape=model.cg.mu.shape,
        tau=tau,
        eps=eps,
    )


@dataclass(frozen=True)
class QPSolution:
    x: np.ndarray
    multipliers: np.ndarray
    active: tuple[int, ...]
    objective: float
    kkt_residual: float


def kkt_residual(qp: RepairQP, x: np.ndarray, lam: np.ndarray) -> float:
    """Largest violation among stationarity, feasibility and complementarity.

    Stationarity is measured per variable after dividing by its weight, so
    the residual is in the units of the means.
    """
    grad = 2.0 * qp.weights * (x - qp.mu) + qp.A.T @ lam
    slack = qp.violation(x)
    return float(
        max(
            np.max(np.abs(grad / (2.0 * qp.weights))),
            np.max(np.maximum(slack, 0.0)),
            np.max(np.maximum(-lam, 0.0)),
            np.max(np.abs(lam * slack)),
        )
    )


def solve_repair_qp(qp: RepairQP) -> QPSolution:
    """Exact active-set enumeration for a diagonal QP with a handful of rows.

    For each candidate active set with linearly independent rows the
    equality-constrained problem is solved in closed form; the first
    candidate that is primal and dual feasible is the optimum.
    """
    A, b, mu = qp.A, qp.b, qp.mu
    hinv = 1.0 / (2.0 * qp.weights)
    m = A.shape[0]
    scale = max(1.0, float(np.max(np.abs(mu))))
    subsets = sorted(
        (s for k in range(m + 1) for s in itertools.combinations(range(m), k)), key=len
    )
    for active in subsets:
        idx = list(active)
        lam = np.zeros(m)
        if idx:
            As = A[idx]
            if np.linalg.matrix_rank(As) < len(idx):
                continue
            # x = mu - H^-1 As^T l, with As x = bs.
            M = (As * hinv) @ As.T
            lam[idx] = np.linalg.solve(M, As @ mu - b[idx])
        x = mu - hinv * (A.T @ lam)
        if np.any(lam < -1e-10 * max(1.0, float(np.max(np.abs(lam))))):
            continue
        if np.any(qp.violation(x) > FEAS_TOL * scale):
            continue
        lam = np.maximum(lam, 0.0)
        sol = QPSolution(x, lam, tuple(idx), qp.objective(x), kkt_residual(qp, x, lam))
        if sol.kkt_residual > KKT_TOL * scale:
            log.warning("repair QP KKT residual %.3g exceeds %.1g", sol.kkt_residual, KKT_TOL)
        # Strict convexity: the first KKT point is the unique optimum.
        return sol
    raise ConvergenceError("repair QP: no active set satisfies the KKT conditions")


@dataclass(frozen=True)
class RepairPlan:
    original_means: dict[str, float]
    repaired_means: dict[str, float]
    objective_value: float
    active_constraints: tuple[str, ...]
    kkt_residual: float
    tau: float
    mu: np.ndarray = field(repr=False)
    mu_repaired: np.ndarray = field(repr=False)
    multipliers: dict[str, float] = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)

    @property
    def shift(self) -> np.ndarray:
        return self.mu_repaired - self.mu

    def to_dict(self) -> dict:
        return {
            "original_means": dict(self.original_means),
            "repaired_means": dict(self.repaired_means),
            "objective_value": self.objective_value,
            "active_constraints": list(self.active_constraints),
            "kkt_residual": self.kkt_residual,
            "tau": self.tau,
            "multipliers": dict(self.multipliers),
            "diagnostics": self.diagnostics,
        }


def _by_key(model: CausalModel, arr: np.ndarray) -> dict[str, float]:
    return {model.stratum_key(c, q): float(arr[(c, *q)]) for c, q in model.strata()}


def plan_repair(
    model: CausalModel, tau: float, pi_i: PathSet | None = None, eps: float = EPS_BASELINE
) -> RepairPlan:
    """Solve the repair QP and package the result with both denominator encodings."""
    qp = build_repair_qp(model, tau, pi_i, eps)
    sol = solve_repair_qp(qp)
    mu_new = sol.x.reshape(qp.shape)
    # Frozen-baseline variant, reported for comparison only.
    qp_fixed = build_repair_qp(model, tau, pi_i, eps, fixed_denominator=True)
    sol_fixed = solve_repair_qp(qp_fixed)
    after_fixed = fdetect(model.with_means(sol_fixed.x.reshape(qp.shape)), tau, _pi_i(model, pi_i))
    diagnostics = {
        "encoding": "exact-ratio",
        "fixed_denominator": {
            "objective_value": sol_fixed.objective,
            "active_constraints": [qp.names[i] for i in sol_fixed.active],
            "de_d_fwd": after_fixed.de_d_fwd,
            "de_d_rev": after_fixed.de_d_rev,
            "de_i_fwd": after_fixed.de_i_fwd,
            "de_i_rev": after_fixed.de_i_rev,
        },
    }
    return RepairPlan(
        original_means=_by_key(model, model.cg.mu),
        repaired_means=_by_key(model, mu_new),
        objective_value=sol.objective,
        active_constraints=tuple(qp.names[i] for i in sol.active),
        kkt_residual=sol.kkt_residual,
        tau=tau,
        mu=np.array(model.cg.mu, dtype=float),
        mu_repaired=mu_new,
        multipliers={n: float(v) for n, v in zip(qp.names, sol.multipliers)},
        diagnostics=diagnostics,
    )


@dataclass(frozen=True)
class Provenance:
    old_score: float
    stratum: str
    shift: float


@dataclass(frozen=True)
class RepairedRanking:
    new_scores: np.ndarray
    new_rank: tuple[int, ...]
    provenance: tuple[Provenance, ...]
    data: RankedDataset = field(repr=False)

    @property
    def old_rank(self) -> tuple[int, ...]:
        return self.data.rank

    def dataset(self) -> RankedDataset:
        return self.data.with_rank(self.new_rank)


def stratum_indices(data: RankedDataset, model: CausalModel) -> tuple[np.ndarray, ...]:
    """Per-individual CG index tuple ``(c, q...)`` in the model's domain coding."""
    out = []
    for node in (model.protected, *model.q_nodes):
        if node not in data.attribute_names:
            raise ValidationError(f"model node {node!r} missing from data")
        lookup = {v: i for i, v in enumerate(model.domains[node])}
        col = data.column(node)
        bad = sorted(set(col) - set(lookup))
        if bad:
            raise ValidationError(f"values {bad} of {node!r} fall in no stratum of the plan")
        out.append(np.array([lookup[v] for v in col], dtype=np.int64))
    return tuple(out)


def rank_by_score(scores: np.ndarray, old_rank) -> tuple[int, ...]:
    """Descending score; ties keep the earlier original position first."""
    s = np.asarray(scores, dtype=float)
    order = np.lexsort((np.asarray(old_rank), -s))
    rank = np.empty(s.size, dtype=np.int64)
    rank[order] = np.arange(1, s.size + 1)
    return tuple(int(r) for r in rank)


def regenerate_and_rerank(
    data: RankedDataset, scores: ScoreAssignment | np.ndarray, model: CausalModel, plan: RepairPlan
) -> RepairedRanking:
    """Shift every score by its stratum's mean change and re-rank."""
    s = scores.scores if isinstance(scores, ScoreAssignment) else np.asarray(scores, dtype=float)
    if s.shape != (data.n,):
        raise ValidationError("scores length does not match dataset")
    if plan.mu.shape != model.cg.mu.shape:
        raise ValidationError("plan does not match the model's strata")
    idx = stratum_indices(data, model)
    shift = plan.shift[idx]
    new = s + shift
    prov = tuple(
        Provenance(float(s[k]), model.stratum_key(int(idx[0][k]), [int(i[k]) for i in idx[1:]]), float(shift[k]))
        for k in range(data.n)
    )
    return RepairedRanking(new, rank_by_score(new, data.rank), prov, data)


@dataclass(frozen=True)
class FrankResult:
    ranking: RepairedRanking
    before: EffectReport
    after: EffectReport
    plan: RepairPlan | None
    repaired_model: CausalModel = field(repr=False)

    @property
    def changed(self) -> bool:
        return self.plan is not None


def frank_model(
    data: RankedDataset,
    scores: ScoreAssignment | np.ndarray,
    model: CausalModel,
    tau: float = 0.05,
    pi_i: PathSet | None = None,
    eps: float = EPS_BASELINE,
) -> FrankResult:
    """Detect, and if needed repair, a ranking given its scores and fitted model.

    Without discrimination the input is returned unchanged and ``plan`` is
    ``None``.
    """
    s = scores.scores if isinstance(scores, ScoreAssignment) else np.asarray(scores, dtype=float)
    pi_i = _pi_i(model, pi_i)
    before = fdetect(model, tau, pi_i)
    if not (before.judge_d or before.judge_i):
        unchanged = RepairedRanking(
            s.copy(),
            data.rank,
            tuple(
                Provenance(float(v), model.stratum_key(int(k[0]), [int(i) for i in k[1:]]), 0.0)
                for v, k in zip(s, zip(*stratum_indices(data, model)))
            ),
            data,
        )
        return FrankResult(unchanged, before, before, None, model)
    plan = plan_repair(model, tau, pi_i, eps)
    repaired = model.with_means(plan.mu_repaired)
    after = fdetect(repaired, tau, pi_i)
    if after.max_de > tau + 1e-6:
        raise ConvergenceError(f"repair left an effect above tau: {after.max_de:.6g} > {tau}")
    return FrankResult(regenerate_and_rerank(data, s, model, plan), before, after, plan, repaired)
