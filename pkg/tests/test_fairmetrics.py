import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.stats import kendalltau

from fairrank.errors import ValidationError
from fairrank.fairmetrics import (
    default_cut_points,
    kendall_tau_distance,
    parity_from_membership,
    parity_measures,
    spearman_footrule,
)
from fairrank.synthetic import toy_dataset

perms = st.integers(1, 60).flatmap(lambda n: st.tuples(st.permutations(range(1, n + 1)), st.permutations(range(1, n + 1))))


def brute_ktd(a, b) -> int:
    n = len(a)
    return sum(
        1 for i, j in itertools.combinations(range(n), 2) if (a[i] - a[j]) * (b[i] - b[j]) < 0
    )


def naive_parity(flags, cuts):
    """Direct transcription of the three measures, one loop per cut."""
    flags = list(flags)
    n = len(flags)
    p = sum(flags) / n

    def sums(order):
        out = {"rND": 0.0, "rRD": 0.0, "rKL": 0.0}
        for i in cuts:
            pi = sum(order[:i]) / i
            d = 1.0 / np.log2(i)
            out["rND"] += d * abs(pi - p)
            if pi < 1:
                out["rRD"] += d * abs(pi / (1 - pi) - p / (1 - p))
            kl = 0.0
            if pi > 0:
                kl += pi * np.log(pi / p)
            if pi < 1:
                kl += (1 - pi) * np.log((1 - pi) / (1 - p))
            out["rKL"] += d * kl
        return out

    raw = sums(flags)
    worst = sums(sorted(flags))
    return {k: min(1.0, raw[k] / worst[k]) if worst[k] > 0 else 0.0 for k in raw}


# -- distances ---------------------------------------------------------------


def test_distance_examples():
    assert kendall_tau_distance([1, 2, 3], [1, 2, 3]) == 0
    assert spearman_footrule([1, 2, 3], [1, 2, 3]) == 0
    assert kendall_tau_distance([1, 2, 3], [3, 2, 1]) == 3
    assert spearman_footrule([1, 2, 3], [3, 2, 1]) == 4
    with pytest.raises(ValidationError):
        kendall_tau_distance([1, 2], [1, 2, 3])
    with pytest.raises(ValidationError):
        spearman_footrule([1, 2], [1, 2, 3])


def test_ktd_matches_brute_force_exhaustively_small():
    for n in range(1, 6):
        for b in itertools.permutations(range(1, n + 1)):
            assert kendall_tau_distance(list(range(1, n + 1)), b) == brute_ktd(range(1, n + 1), b)


@given(st.integers(1, 8).flatmap(lambda n: st.tuples(st.permutations(range(1, n + 1)), st.permutations(range(1, n + 1)))))
def test_ktd_matches_brute_force_random(pair):
    a, b = pair
    assert kendall_tau_distance(a, b) == brute_ktd(a, b)


@given(perms)
def test_diaconis_graham_and_symmetry(pair):
    a, b = pair
    k = kendall_tau_distance(a, b)
    f = spearman_footrule(a, b)
    assert k <= f <= 2 * k
    assert k == kendall_tau_distance(b, a)
    assert f == spearman_footrule(b, a)
    assert (k == 0) == (list(a) == list(b))


def test_ktd_large_matches_scipy_rank_correlation(rng):
    n = 2000
    a = rng.permutation(n) + 1
    b = rng.permutation(n) + 1
    k = kendall_tau_distance(a, b)
    tau = kendalltau(a, b).statistic
    pairs = n * (n - 1) / 2
    assert k == round((1 - tau) * pairs / 2)


# -- parity ------------------------------------------------------------------


def test_default_cut_points():
    assert default_cut_points(35) == [10, 20, 30, 35]
    assert default_cut_points(30) == [10, 20, 30]
    assert default_cut_points(10, 1) == list(range(2, 11))
    assert default_cut_points(5) == [5]
    with pytest.raises(ValidationError):
        default_cut_points(10, 0)


def test_perfect_parity_is_zero():
    flags = [True, False] * 10
    rep = parity_from_membership(flags, [2, 4, 6, 8, 10, 20])
    assert (rep.rND, rep.rRD, rep.rKL) == (0.0, 0.0, 0.0)


def test_protected_last_is_one():
    flags = [False] * 12 + [True] * 8
    rep = parity_from_membership(flags)
    assert rep.rND == 1.0 and rep.rRD == 1.0 and rep.rKL == 1.0


@given(st.lists(st.booleans(), min_size=4, max_size=40), st.integers(1, 5))
def test_parity_matches_naive_transcription(flags, step):
    n = len(flags)
    if sum(flags) in (0, n):
        return
    cuts = default_cut_points(n, step)
    rep = parity_from_membership(flags, cuts)
    want = naive_parity(flags, cuts)
    for m in ("rND", "rRD", "rKL"):
        assert 0.0 <= getattr(rep, m) <= 1.0
        assert getattr(rep, m) == pytest.approx(want[m], abs=1e-12)


def test_degenerate_population(caplog):
    rep = parity_from_membership([True] * 5)
    assert (rep.rND, rep.rRD, rep.rKL) == (0.0, 0.0, 0.0)
    assert "protected share" in caplog.text


def test_bad_cut_points():
    with pytest.raises(ValidationError):
        parity_from_membership([True, False, True], [1, 3])
    with pytest.raises(ValidationError):
        parity_from_membership([True, False, True], [4])


def test_toy_rankers_parity_contrast():
    cuts = default_cut_points(10, 1)
    r1 = parity_measures(toy_dataset(1), cuts)
    r2 = parity_measures(toy_dataset(2), cuts)
    assert r1.protected_share == 0.5
    for m in ("rND", "rRD", "rKL"):
        assert getattr(r2, m) < getattr(r1, m)
    # Frozen after an independent recomputation with naive_parity.
    assert (r1.rND, r1.rRD, r1.rKL) == pytest.approx((0.9025, 0.7663, 0.8500), abs=5e-4)
    assert (r2.rND, r2.rRD, r2.rKL) == pytest.approx((0.5160, 0.5038, 0.4049), abs=5e-4)
    for d in (toy_dataset(1), toy_dataset(2)):
        c = np.asarray(d.column("C"))[d.order()] == "0"
        want = naive_parity(c.tolist(), cuts)
        rep = parity_measures(d, cuts)
        assert (rep.rND, rep.rRD, rep.rKL) == pytest.approx((want["rND"], want["rRD"], want["rKL"]), abs=1e-12)
