"""Binary decisions from a score cut-off.

A decision ``e+`` is made when ``s >= theta``. Under equal per-stratum
standard deviations and ``theta >= mu[c+, q] >= mu[c-, q]`` the direct and
indirect effects on the decision have closed forms in ``erf``; two erf
inequalities turn rank-level effect values into sufficient budgets for the
binary effects.

``delta_q`` is defined as ``P(q | do(c+)) - P(q | do(c-))`` with every child
of the protected node switched, which matches the all-indirect effect on the
score: ``SE_i(c+, c-) = sum_q mu[c-, q] * delta_q``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import erf

from .effects import q_distribution
from .errors import ValidationError
from .graph import CausalModel

SQRT2 = math.sqrt(2.0)
CONDITION_ATOL = 1e-12


@dataclass(frozen=True)
class CutoffContext:
    """Everything the cut-off formulas need, flattened over the Q strata.

    Attributes
    ----------
    theta : float
        Cut-off score; ``s >= theta`` is the positive decision.
    sigma : float
        Common standard deviation shared by every stratum.
    mu_plus, mu_minus : ndarray
        ``mu[c+, q]`` and ``mu[c-, q]`` per stratum ``q``.
    p_q_minus : ndarray
        ``P(q | do(c-))``.
    delta_q : ndarray
        ``P(q | do(c+)) - P(q | do(c-))``.
    tau : float
        Tolerance for the binary decision.
    max_score : float, optional
        Largest observed score; needed by the indirect budget only.
    """

    theta: float
    sigma: float
    mu_plus: np.ndarray
    mu_minus: np.ndarray
    p_q_minus: np.ndarray
    delta_q: np.ndarray
    tau: float = 0.05
    max_score: float | None = None
    model: CausalModel | None = field(default=None, compare=False, repr=False)
    check: bool = True

    def __post_init__(self) -> None:
        for name in ("mu_plus", "mu_minus", "p_q_minus", "delta_q"):
            arr = np.asarray(getattr(self, name), dtype=float).reshape(-1).copy()
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        k = self.mu_plus.size
        if not (self.mu_minus.size == self.p_q_minus.size == self.delta_q.size == k):
            raise ValidationError("per-stratum arrays must have equal length")
        if not self.sigma > 0:
            raise ValidationError("sigma must be positive")
        if self.check:
            self.check_condition()

    def check_condition(self) -> None:
        """Raise unless ``theta >= mu+ >= mu-`` holds in every stratum."""
        tol = CONDITION_ATOL
        if np.any(self.mu_plus > self.theta + tol):
            raise ValidationError("cut-off condition violated: some mu[c+, q] exceeds theta")
        if np.any(self.mu_minus > self.mu_plus + tol):
            raise ValidationError("cut-off condition violated: some mu[c-, q] exceeds mu[c+, q]")

    @classmethod
    def from_model(
        cls,
        model: CausalModel,
        theta: float,
        tau: float = 0.05,
        sigma: float | None = None,
        max_score: float | None = None,
        check: bool = True,
    ) -> CutoffContext:
        """Build a context from a parameterized model.

        Without an explicit ``sigma`` the root-mean-square of the model's
        per-stratum standard deviations is used as the common value.
        """
        fav, unfav = model.fav_index, model.unfav_index
        mu = model.cg.mu
        if sigma is None:
            sigma = float(np.sqrt(np.mean(model.cg.sigma**2)))
        p_minus = q_distribution(model, unfav)
        p_plus = q_distribution(model, fav)
        return cls(
            theta=float(theta),
            sigma=float(sigma),
            mu_plus=mu[fav],
            mu_minus=mu[unfav],
            p_q_minus=p_minus,
            delta_q=p_plus - p_minus,
            tau=float(tau),
            max_score=max_score,
            model=model,
            check=check,
        )

    def z(self, mu: np.ndarray) -> np.ndarray:
        return (self.theta - mu) / (SQRT2 * self.sigma)


def positive_rate(theta: float, mu, sigma: float) -> np.ndarray:
    """``P(s >= theta)`` for ``s ~ N(mu, sigma^2)``."""
    return 0.5 * (1.0 - erf((theta - np.asarray(mu, dtype=float)) / (SQRT2 * sigma)))


def binary_direct_effect(ctx: CutoffContext) -> float:
    """Direct effect of the protected attribute on the cut-off decision.

    >>> ctx = CutoffContext(1.0, 1.0, [1.0], [0.0], [1.0], [0.0])
    >>> round(binary_direct_effect(ctx), 6)
    0.341345
    """
    terms = 0.5 * (erf(ctx.z(ctx.mu_minus)) - erf(ctx.z(ctx.mu_plus)))
    return float(np.dot(terms, ctx.p_q_minus))


def binary_indirect_effect(ctx: CutoffContext) -> float:
    terms = 0.5 * (1.0 - erf(ctx.z(ctx.mu_minus)))
    return float(np.dot(terms, ctx.delta_q))


def rank_direct_effect(ctx: CutoffContext) -> float:
    """``SE_d(c+, c-)`` on the score, from the same context."""
    return float(np.dot(ctx.mu_plus - ctx.mu_minus, ctx.p_q_minus))


def rank_indirect_effect(ctx: CutoffContext) -> float:
    """``SE_i(c+, c-)`` on the score (all indirect paths), from the same context."""
    return float(np.dot(ctx.mu_minus, ctx.delta_q))


def erf_concavity_gap(x1: float, x2: float) -> tuple[float, float]:
    """Both sides of ``(erf(x1) - erf(x2)) / 2 <= erf((x1 - x2) / 2)`` for ``x1 >= x2 >= 0``."""
    if not (x1 >= x2 >= 0):
        raise ValidationError(f"need x1 >= x2 >= 0, got x1={x1}, x2={x2}")
    return 0.5 * (math.erf(x1) - math.erf(x2)), math.erf((x1 - x2) / 2.0)


def _tangent_point(t: float) -> float:
    arg = 2.0 * t / (math.sqrt(math.pi) * math.erf(t))
    if arg < 1.0:
        # erf(t) <= 2t/sqrt(pi) for t > 0, so only rounding lands here.
        if arg < 1.0 - 1e-12:
            raise ValidationError(f"logarithm domain violated at t={t}")
        arg = 1.0
    return math.sqrt(math.log(arg))


def erf_linear_bounds(t: float) -> tuple[float, float]:
    """Slope and offset with ``alpha * x <= erf(x) <= alpha * x + beta`` on ``[0, t]``.

    ``alpha`` is the chord slope ``erf(t) / t`` and ``beta`` the offset of the
    tangent with that slope. ``t = 0`` returns the limit ``(2 / sqrt(pi), 0)``.

    >>> [round(v, 6) for v in erf_linear_bounds(1.0)][0]
    0.842701
    """
    if t < 0 or not math.isfinite(t):
        raise ValidationError(f"t must be a finite nonnegative number, got {t}")
    if t == 0:
        return 2.0 / math.sqrt(math.pi), 0.0
    alpha = math.erf(t) / t
    x0 = _tangent_point(t)
    return alpha, math.erf(x0) - alpha * x0


@dataclass(frozen=True)
class Budget:
    """A rank-level effect budget plus the constants it was computed from."""

    budget: float
    t: float
    alpha: float
    beta: float
    c: float | None = None
    as_printed: bool = False

    def to_dict(self) -> dict:
        return {
            "budget": self.budget,
            "t": self.t,
            "alpha_t": self.alpha,
            "beta_t": self.beta,
            "c": self.c,
            "as_printed": self.as_printed,
        }


def rank_budget_for_binary_direct(ctx: CutoffContext) -> Budget:
    """Largest ``SE_d`` on the score that still guarantees a direct decision effect ``<= tau``.

    Uses ``t = max_q (mu+ - mu-) / (2 sqrt(2) sigma)``; a budget below zero
    means no nonnegative rank-level effect is certified.
    """
    t = float(np.max(ctx.mu_plus - ctx.mu_minus)) / (2.0 * SQRT2 * ctx.sigma)
    t = max(t, 0.0)
    alpha, beta = erf_linear_bounds(t)
    return Budget(2.0 * SQRT2 * (ctx.tau - beta) * ctx.sigma / alpha, t, alpha, beta)


def rank_budget_for_binary_indirect(ctx: CutoffContext) -> Budget:
    """Indirect budget with the constant ``c`` evaluated exactly as written.

    The constant sums unweighted per-stratum terms, so the result is labelled
    ``as_printed``; use :func:`check_indirect_implication` to test whether
    the implied guarantee actually holds for a given context.
    """
    if ctx.max_score is None:
        raise ValidationError("the indirect budget needs max_score")
    t = float(np.max(ctx.max_score - ctx.mu_minus)) / (SQRT2 * ctx.sigma)
    if t < 0:
        raise ValidationError("max_score is below some mu[c-, q]")
    alpha, beta = erf_linear_bounds(t)
    pos = ctx.delta_q >= 0
    c = (
        0.5
        - int(pos.sum()) * alpha * float(np.max(ctx.mu_plus)) / SQRT2
        - int((~pos).sum()) * (alpha / (2.0 * SQRT2) + beta)
    )
    return Budget(2.0 * SQRT2 * (ctx.tau - c) * ctx.sigma / alpha, t, alpha, beta, c, as_printed=True)


@dataclass(frozen=True)
class ImplicationCheck:
    rank_effect: float
    budget: float
    binary_effect: float
    premise: bool
    conclusion: bool

    @property
    def holds(self) -> bool:
        return (not self.premise) or self.conclusion

    def to_dict(self) -> dict:
        return {
            "rank_effect": self.rank_effect,
            "budget": self.budget,
            "binary_effect": self.binary_effect,
            "premise": self.premise,
            "conclusion": self.conclusion,
            "holds": self.holds,
        }


def check_direct_implication(ctx: CutoffContext, slack: float = 1e-9) -> ImplicationCheck:
    b = rank_budget_for_binary_direct(ctx).budget
    se = rank_direct_effect(ctx)
    se_e = binary_direct_effect(ctx)
    return ImplicationCheck(se, b, se_e, se <= b, se_e <= ctx.tau + slack)


def check_indirect_implication(ctx: CutoffContext, slack: float = 1e-9) -> ImplicationCheck:
    """Evaluate the indirect guarantee on ``ctx`` directly instead of trusting its constant."""
    b = rank_budget_for_binary_indirect(ctx).budget
    se = rank_indirect_effect(ctx)
    se_e = binary_indirect_effect(ctx)
    return ImplicationCheck(se, b, se_e, se <= b, se_e <= ctx.tau + slack)


def threshold_report(ctx: CutoffContext) -> dict:
    """JSON-ready summary of both decision effects, budgets and checks."""
    out = {
        "theta": ctx.theta,
        "sigma": ctx.sigma,
        "tau": ctx.tau,
        "se_binary_direct": binary_direct_effect(ctx),
        "se_binary_indirect": binary_indirect_effect(ctx),
        "se_rank_direct": rank_direct_effect(ctx),
        "se_rank_indirect": rank_indirect_effect(ctx),
        "direct_budget": rank_budget_for_binary_direct(ctx).to_dict(),
        "direct_check": check_direct_implication(ctx).to_dict(),
    }
    if ctx.max_score is not None:
        out["max_score"] = ctx.max_score
        out["indirect_budget"] = rank_budget_for_binary_indirect(ctx).to_dict()
        out["indirect_check"] = check_indirect_implication(ctx).to_dict()
    return out
