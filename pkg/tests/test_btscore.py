import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.optimize import minimize

from fairrank.btscore import (
    BTFitConfig,
    _hessian_sorted,
    _loss_grad_sorted,
    bt_loss_and_gradient,
    fit_scores,
    minimize_bt,
    pair_probability,
)
from fairrank.errors import ConvergenceError, ValidationError
from fairrank.synthetic import toy_dataset


def naive_loss(s, rank, lam):
    """Independent pair loop over the definition."""
    total = 0.5 * lam * sum(x * x for x in s)
    n = len(s)
    for i in range(n):
        for j in range(n):
            if rank[i] < rank[j]:
                total += math.log1p(math.exp(-(s[i] - s[j])))
    return total


def ranking_dataset(rank):
    from fairrank.dataset import RankedDataset

    n = len(rank)
    return RankedDataset(
        attribute_names=("C",),
        attribute_domains={"C": ("0", "1")},
        rows=tuple((str(k % 2),) for k in range(n)),
        rank=tuple(rank),
        protected_attribute="C",
        favorable_value="1",
    )


def test_pair_probability_examples():
    assert pair_probability(0, 0) == 0.5
    assert pair_probability(math.log(3), 0) == pytest.approx(0.75, abs=1e-15)
    assert abs(pair_probability(30, -30) - 1.0) <= 1e-15
    assert pair_probability(-800, 800) == 0.0


def test_loss_two_items_zero_scores():
    loss, grad = bt_loss_and_gradient([0.0, 0.0], [1, 2], 0.0)
    assert loss == pytest.approx(math.log(2), abs=1e-15)
    assert grad.tolist() == [-0.5, 0.5]


def test_single_item_has_no_pairs():
    loss, grad = bt_loss_and_gradient([1.5], [1], 0.4)
    assert loss == pytest.approx(0.5 * 0.4 * 1.5**2)
    assert grad.tolist() == pytest.approx([0.4 * 1.5])


def test_dimension_mismatch():
    with pytest.raises(ValidationError):
        bt_loss_and_gradient([0.0, 1.0], [1, 2, 3], 0.1)


@given(st.integers(2, 8), st.integers(0, 2**32 - 1), st.floats(0.0, 2.0))
def test_loss_matches_naive_definition(n, seed, lam):
    rng = np.random.default_rng(seed)
    s = rng.normal(0, 2, n)
    rank = rng.permutation(n) + 1
    loss, _ = bt_loss_and_gradient(s, rank, lam)
    assert loss == pytest.approx(naive_loss(s, rank, lam), rel=1e-12, abs=1e-12)


@given(st.integers(0, 2**32 - 1))
def test_gradient_matches_central_differences(seed):
    rng = np.random.default_rng(seed)
    n = 6
    s = rng.normal(0, 1, n)
    rank = rng.permutation(n) + 1
    _, grad = bt_loss_and_gradient(s, rank, 0.3)
    h = 1e-5
    fd = np.array(
        [
            (bt_loss_and_gradient(s + h * e, rank, 0.3)[0] - bt_loss_and_gradient(s - h * e, rank, 0.3)[0]) / (2 * h)
            for e in np.eye(n)
        ]
    )
    assert np.max(np.abs(fd - grad)) <= 1e-5 * max(1.0, np.max(np.abs(grad)))


def test_hessian_matches_gradient_differences(rng):
    t = rng.normal(0, 1, 5)
    h = 1e-6
    num = np.array(
        [(_loss_grad_sorted(t + h * e, 0.7)[1] - _loss_grad_sorted(t - h * e, 0.7)[1]) / (2 * h) for e in np.eye(5)]
    )
    assert np.allclose(num, _hessian_sorted(t, 0.7), atol=1e-7)


@given(st.integers(0, 2**32 - 1), st.floats(0.0, 1.0))
def test_convexity_chord(seed, t):
    rng = np.random.default_rng(seed)
    rank = rng.permutation(7) + 1
    u, v = rng.normal(0, 3, 7), rng.normal(0, 3, 7)
    f = lambda x: bt_loss_and_gradient(x, rank, 0.2)[0]
    assert f(t * u + (1 - t) * v) <= t * f(u) + (1 - t) * f(v) + 1e-9


def test_two_items_antisymmetric_before_shift():
    cfg = BTFitConfig(lam=1.0, gauge_anchor=0.0)
    scores, diag = fit_scores(ranking_dataset([1, 2]), cfg)
    s1, s2 = scores.scores
    assert s1 > 0 and s1 == pytest.approx(-s2, abs=1e-12)
    assert scores.shift == pytest.approx(0.0, abs=1e-12)
    assert diag.converged


def test_three_items_match_independent_minimizer():
    rank = [1, 2, 3]
    res = minimize(lambda s: naive_loss(s, rank, 1.0), np.zeros(3), method="BFGS", options={"gtol": 1e-12})
    scores, _ = fit_scores(ranking_dataset(rank), BTFitConfig(lam=1.0, gauge_anchor=0.0))
    # The regularizer already centres the optimum, so the gauge shift is ~0.
    assert np.allclose(scores.scores, res.x, atol=1e-6)


@given(st.integers(2, 60), st.integers(0, 2**32 - 1))
def test_fitted_scores_are_rank_consistent(n, seed):
    rank = np.random.default_rng(seed).permutation(n) + 1
    scores, _ = fit_scores(ranking_dataset(rank))
    order = np.argsort(rank)
    assert np.all(np.diff(scores.scores[order]) < 0)
    assert scores.scores.mean() == pytest.approx(1.0, abs=1e-9)


def test_gauge_anchor_shift_recorded():
    d = toy_dataset(1)
    a, _ = fit_scores(d, BTFitConfig(gauge_anchor=1.0))
    b, _ = fit_scores(d, BTFitConfig(gauge_anchor=25.0))
    assert np.allclose(b.scores - a.scores, 24.0)
    assert b.shift - a.shift == pytest.approx(24.0)
    for i, j in [(0, 1), (3, 7)]:
        assert pair_probability(a.scores[i], a.scores[j]) == pytest.approx(
            pair_probability(b.scores[i], b.scores[j]), abs=1e-12
        )


@pytest.mark.parametrize("method", ["newton", "gd"])
def test_monotone_descent(method):
    t0 = np.linspace(1, -1, 30)[np.random.default_rng(0).permutation(30)]
    _, diag = minimize_bt(t0, 0.5, BTFitConfig(method=method, max_iters=300, tol=1e-8))
    hist = np.array(diag.loss_history)
    assert np.all(np.diff(hist) <= 1e-12)


def test_gd_and_newton_agree():
    d = ranking_dataset(list(range(1, 16)))
    a, _ = fit_scores(d, BTFitConfig(method="newton"))
    b, _ = fit_scores(d, BTFitConfig(method="gd", tol=1e-7, max_iters=200_000))
    assert np.allclose(a.scores, b.scores, atol=1e-6)


def test_nonconvergence_is_reported():
    d = ranking_dataset(list(range(1, 40)))
    with pytest.raises(ConvergenceError):
        fit_scores(d, BTFitConfig(max_iters=1, method="gd"))
    _, diag = fit_scores(d, BTFitConfig(max_iters=1, method="gd"), strict=False)
    assert not diag.converged and diag.gradient_norm > 1e-8


@pytest.mark.parametrize("kw", [{"lam": -1.0}, {"tol": 0.0}, {"max_iters": 0}, {"method": "sgd"}])
def test_config_validation(kw):
    with pytest.raises(ValidationError):
        BTFitConfig(**kw)


def test_zero_lambda_rejected_for_fitting():
    with pytest.raises(ValidationError):
        fit_scores(toy_dataset(1), BTFitConfig(lam=0.0))


def test_newton_reaches_tight_tolerance_on_large_losses():
    # The loss is ~N^2 here, so near the optimum Armijo decreases fall below its rounding.
    rng = np.random.default_rng(3)
    for n in (150, 200, 400):
        _sc, diag = fit_scores(ranking_dataset(rng.permutation(n) + 1), BTFitConfig(tol=1e-10))
        assert diag.converged and diag.iterations < 30
