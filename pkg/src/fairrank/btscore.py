"""Bradley-Terry scores from a single total-order ranking.

Every ordered pair ``(i, j)`` with ``i`` ranked above ``j`` contributes
``-log p_ij`` with ``p_ij = exp(s_i) / (exp(s_i) + exp(s_j))``. A ridge term
``(lam / 2) * ||s||^2`` keeps the problem strictly convex: a single consistent
ranking is perfectly separable and the unpenalized MLE diverges.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.special import expit, log_expit

from .dataset import RankedDataset, ScoreAssignment
from .errors import ConvergenceError, ValidationError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class BTFitConfig:
    lam: float = 0.5
    max_iters: int = 10_000
    tol: float = 1e-8
    gauge_anchor: float = 1.0
    method: str = "newton"

    def __post_init__(self) -> None:
        if not self.lam >= 0:
            raise ValidationError("lam must be nonnegative")
        if not self.tol > 0:
            raise ValidationError("tol must be positive")
        if self.max_iters < 1:
            raise ValidationError("max_iters must be positive")
        if self.method not in ("newton", "gd"):
            raise ValidationError(f"unknown method {self.method!r}")


@dataclass(frozen=True)
class BTFitDiagnostics:
    final_loss: float
    iterations: int
    gradient_norm: float
    converged: bool
    loss_history: tuple[float, ...] = ()


def pair_probability(s_i: float, s_j: float) -> float:
    """Probability that ``i`` is ranked above ``j``; stable for large gaps."""
    return float(expit(s_i - s_j))


def _order_scores(scores: np.ndarray, rank) -> np.ndarray:
    rank = np.asarray(rank)
    if scores.shape != rank.shape:
        raise ValidationError(f"dimension mismatch: {scores.shape} scores vs {rank.shape} ranks")
    return np.argsort(rank, kind="stable")


def bt_loss_and_gradient(scores, rank, lam: float) -> tuple[float, np.ndarray]:
    """Regularized negative log-likelihood and its exact gradient.

    >>> loss, grad = bt_loss_and_gradient([0.0, 0.0], [1, 2], 0.0)
    >>> round(loss, 12) == round(float(np.log(2)), 12), grad.tolist()
    (True, [-0.5, 0.5])
    """
    s = np.asarray(scores, dtype=float)
    order = _order_scores(s, rank)
    loss, g_sorted = _loss_grad_sorted(s[order], lam)
    grad = np.empty_like(s)
    grad[order] = g_sorted
    return loss, grad


def _pair_margin(t: np.ndarray) -> np.ndarray:
    # d[a, b] = t[a] - t[b]; pairs with a < b (a above b) are the observed wins.
    return t[:, None] - t[None, :]


def _loss_grad_sorted(t: np.ndarray, lam: float) -> tuple[float, np.ndarray]:
    n = t.shape[0]
    reg = 0.5 * lam * float(t @ t)
    if n < 2:
        return reg, lam * t
    d = _pair_margin(t)
    upper = np.triu(np.ones((n, n), dtype=bool), k=1)
    nll = -float(log_expit(d[upper]).sum())
    # q[a, b] = 1 - p_ab = sigmoid(t_b - t_a), only for a < b.
    q = np.where(upper, expit(-d), 0.0)
    grad = -q.sum(axis=1) + q.sum(axis=0) + lam * t
    return nll + reg, grad


def _hessian_sorted(t: np.ndarray, lam: float) -> np.ndarray:
    n = t.shape[0]
    d = _pair_margin(t)
    w = expit(d) * expit(-d)
    np.fill_diagonal(w, 0.0)
    h = -w
    h[np.diag_indices(n)] = w.sum(axis=1) + lam
    return h


def _armijo(t, loss, grad, direction, lam, c1=1e-4, shrink=0.5, max_halvings=60):
    slope = float(grad @ direction)
    gnorm = float(np.linalg.norm(grad))
    # Below this the predicted decrease is lost in the rounding of the loss.
    resolution = 64 * np.finfo(float).eps * max(1.0, abs(loss))
    step = 1.0
    for _ in range(max_halvings):
        cand = t + step * direction
        new_loss, new_grad = _loss_grad_sorted(cand, lam)
        if new_loss <= loss + c1 * step * slope:
            return cand, new_loss, new_grad
        if -step * slope < resolution and float(np.linalg.norm(new_grad)) < gnorm:
            return cand, new_loss, new_grad
        step *= shrink
    return t, loss, grad


def minimize_bt(t0: np.ndarray, lam: float, config: BTFitConfig) -> tuple[np.ndarray, BTFitDiagnostics]:
    """Minimize the loss for scores given in ranking order (top first)."""
    t = np.asarray(t0, dtype=float).copy()
    loss, grad = _loss_grad_sorted(t, lam)
    history = [loss]
    gnorm = float(np.linalg.norm(grad))
    it = 0
    while gnorm > config.tol and it < config.max_iters:
        it += 1
        if config.method == "newton":
            direction = -np.linalg.solve(_hessian_sorted(t, lam), grad)
            if not float(grad @ direction) < 0:
                direction = -grad
        else:
            direction = -grad
        t_new, loss_new, grad_new = _armijo(t, loss, grad, direction, lam)
        if t_new is t:
            log.warning("line search stalled at iteration %d (|g|=%.3g)", it, gnorm)
            break
        t, loss, grad = t_new, loss_new, grad_new
        history.append(loss)
        gnorm = float(np.linalg.norm(grad))
    diag = BTFitDiagnostics(
        final_loss=loss,
        iterations=it,
        gradient_norm=gnorm,
        converged=gnorm <= config.tol,
        loss_history=tuple(history),
    )
    return t, diag


def fit_scores(
    data: RankedDataset, config: BTFitConfig | None = None, *, strict: bool = True
) -> tuple[ScoreAssignment, BTFitDiagnostics]:
    """Fit Bradley-Terry scores to the ranking of ``data``.

    The optimum is shifted so that the mean score equals
    ``config.gauge_anchor``; the shift is recorded on the returned
    :class:`ScoreAssignment`. Raises :class:`ConvergenceError` when the
    gradient norm is still above ``tol`` after ``max_iters`` and ``strict``
    is set.
    """
    config = config or BTFitConfig()
    if data.n < 1:
        raise ValidationError("need at least one individual")
    if not config.lam > 0:
        raise ValidationError("lam must be positive: the unregularized MLE diverges")
    n = data.n
    order = data.order()
    # Evenly spaced, rank-consistent start; the optimum is unique anyway.
    t0 = np.linspace(1.0, -1.0, n) if n > 1 else np.zeros(1)
    t, diag = minimize_bt(t0, config.lam, config)
    if not diag.converged:
        msg = (
            f"Bradley-Terry fit did not converge: |grad|={diag.gradient_norm:.3g} "
            f"> tol={config.tol:g} after {diag.iterations} iterations"
        )
        if strict:
            raise ConvergenceError(msg)
        log.warning(msg)
    raw = np.empty(n)
    raw[order] = t
    shift = config.gauge_anchor - float(raw.mean())
    scores = ScoreAssignment(
        scores=raw + shift,
        shift=shift,
        scale=1.0,
        regularization=config.lam,
        anchor=config.gauge_anchor,
    )
    return scores, diag

