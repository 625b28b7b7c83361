import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from fairrank.effects import (
    JUDGE_ATOL,
    PathSet,
    all_indirect_effect,
    brute_force_intervention,
    direct_effect,
    fdetect,
    mean_score,
    nested_counterfactual_oracle,
    partition_children,
    path_specific_effect,
    q_distribution,
    total_effect,
)
from fairrank.errors import (
    NonpositiveBaselineError,
    UnidentifiableError,
    ValidationError,
)
from fairrank.graph import CausalGraph, CausalModel, CgTable, Cpt
from fairrank.synthetic import figure2_graph, figure2_model, random_model, toy_model

seeds = st.integers(0, 2**31 - 1)


def two_node(mu_plus: float, mu_minus: float) -> CausalModel:
    g = CausalGraph.build("C", "S", [("C", "S")])
    cg = CgTable((), [mu_minus, mu_plus], [1.0, 1.0])
    return CausalModel(g, {"C": ("0", "1")}, "1", {"C": Cpt("C", (), [0.5, 0.5])}, cg)


def relabel(model: CausalModel, node: str) -> CausalModel:
    """Reverse the value order of ``node`` and rename its labels; the model is unchanged semantically."""
    dom = model.domains[node]
    new_dom = tuple(f"x{v}" for v in reversed(dom))
    domains = dict(model.domains)
    domains[node] = new_dom
    cpts = {}
    for v, cpt in model.cpts.items():
        t = cpt.table
        for axis, p in enumerate((*cpt.parent_order, v)):
            if p == node:
                t = np.flip(t, axis=axis)
        cpts[v] = Cpt(v, cpt.parent_order, t, cpt.smoothing)
    mu, sigma = model.cg.mu, model.cg.sigma
    if node in model.q_nodes:
        axis = 1 + model.q_nodes.index(node)
        mu, sigma = np.flip(mu, axis), np.flip(sigma, axis)
    cg = CgTable(model.cg.q_order, mu, sigma)
    return CausalModel(model.graph, domains, model.favorable, cpts, cg, model.redlining)


# -- closed forms ------------------------------------------------------------


def test_two_node_total_effect():
    m = two_node(3.0, 1.0)
    assert total_effect(m, "1", "0") == pytest.approx(2.0)
    assert total_effect(m, "0", "1") == pytest.approx(-2.0)
    assert brute_force_intervention(m, "1") == pytest.approx(3.0)
    assert direct_effect(m, "1", "0") == pytest.approx(2.0)


def test_figure2_hand_enumeration():
    # mu = 1 + c + 1.2 e + i + 0.8 z; E[e] = E[i] = 0.5, P(z=1|c=0) = 0.3, P(z=1|c=1) = 0.8.
    m = figure2_model()
    assert brute_force_intervention(m, "0") == pytest.approx(2.34, abs=1e-12)
    assert brute_force_intervention(m, "1") == pytest.approx(3.74, abs=1e-12)
    assert mean_score(m, "1") == pytest.approx(3.74, abs=1e-12)
    assert total_effect(m, "1", "0") == pytest.approx(1.4, abs=1e-12)
    assert direct_effect(m, "1", "0") == pytest.approx(1.0, abs=1e-12)
    pi_i = PathSet.through(m.graph, {"Z"})
    assert path_specific_effect(m, pi_i, "1", "0") == pytest.approx(0.8 * 0.5, abs=1e-12)


def test_symmetric_model_has_no_effects(rng):
    m = random_model(rng, n_profile=3, c_to_s=False)
    # Remove any dependence on C in the CPTs.
    cpts = {}
    for v, cpt in m.cpts.items():
        t = np.array(cpt.table)
        if "C" in cpt.parent_order:
            ax = cpt.parent_order.index("C")
            t = np.repeat(np.take(t, [0], axis=ax), 2, axis=ax)
        cpts[v] = Cpt(v, cpt.parent_order, t)
    m = CausalModel(m.graph, m.domains, "1", cpts, m.cg, m.redlining)
    rep = fdetect(m, pi_i=PathSet.all_indirect(m.graph))
    for x in (rep.te_fwd, rep.se_d_fwd, rep.se_d_rev, rep.se_i_fwd, rep.se_i_rev):
        assert x == pytest.approx(0.0, abs=1e-12)
    assert not rep.judge_d and not rep.judge_i


def test_no_c_to_profile_edges_gives_zero_indirect():
    g = CausalGraph.build("C", "S", [("C", "S"), ("Z", "S")])
    cpts = {"C": Cpt("C", (), [0.4, 0.6]), "Z": Cpt("Z", (), [0.3, 0.7])}
    cg = CgTable(("Z",), [[1.0, 2.0], [1.5, 3.0]], np.ones((2, 2)))
    m = CausalModel(g, {"C": ("0", "1"), "Z": ("0", "1")}, "1", cpts, cg)
    assert all_indirect_effect(m, "1", "0") == 0.0
    assert path_specific_effect(m, PathSet.all_indirect(g), "1", "0") == 0.0


# -- path sets and partitions ------------------------------------------------


def test_partition_children():
    g = figure2_graph()
    part = partition_children(g, PathSet.all_indirect(g))
    assert part.v_pi == {"Z"} and part.v_bar == set()
    part = partition_children(g, PathSet.direct(g))
    assert part.v_pi == set() and part.v_bar == {"Z"}


def test_recanting_witness_is_unidentifiable():
    g = CausalGraph.build("C", "S", [("C", "W"), ("W", "S"), ("W", "R"), ("R", "S")])
    pi = PathSet.through(g, {"R"})
    assert pi.paths == (("C", "W", "R", "S"),)
    with pytest.raises(UnidentifiableError, match="recanting"):
        partition_children(g, pi)


def test_invalid_path_rejected():
    g = figure2_graph()
    with pytest.raises(ValidationError):
        partition_children(g, PathSet((("C", "E", "score"),), "custom"))


def test_q_distribution_is_a_distribution(rng):
    m = random_model(rng, n_profile=4, domain_size=3)
    for c in (0, 1):
        p = q_distribution(m, c)
        assert p.shape == m.q_shape
        assert p.sum() == pytest.approx(1.0, abs=1e-12)
        assert np.all(p >= 0)


# -- oracle equivalence ------------------------------------------------------


@given(seeds, st.integers(1, 4))
def test_total_effect_matches_oracle(seed, k):
    m = random_model(np.random.default_rng(seed), n_profile=k)
    for f, t in ((1, 0), (0, 1)):
        want = brute_force_intervention(m, f) - brute_force_intervention(m, t)
        assert total_effect(m, f, t) == pytest.approx(want, abs=1e-12)
    assert total_effect(m, 1, 0) == -total_effect(m, 0, 1)


@given(seeds, st.integers(1, 4))
def test_direct_effect_matches_oracles(seed, k):
    m = random_model(np.random.default_rng(seed), n_profile=k)
    pi_d = PathSet.direct(m.graph)
    for f, t in ((1, 0), (0, 1)):
        closed = direct_effect(m, f, t)
        assert path_specific_effect(m, pi_d, f, t) == pytest.approx(closed, abs=1e-12)
        cross = brute_force_intervention(m, t, score_c=f) - brute_force_intervention(m, t)
        assert closed == pytest.approx(cross, abs=1e-12)
        assert closed == pytest.approx(nested_counterfactual_oracle(m, pi_d, f, t), abs=1e-12)


@given(seeds, st.integers(1, 4))
def test_all_indirect_general_equals_closed_form_and_oracle(seed, k):
    m = random_model(np.random.default_rng(seed), n_profile=k)
    pi = PathSet.all_indirect(m.graph)
    for f, t in ((1, 0), (0, 1)):
        general = path_specific_effect(m, pi, f, t)
        assert general == pytest.approx(all_indirect_effect(m, f, t), abs=1e-12)
        assert general == pytest.approx(nested_counterfactual_oracle(m, pi, f, t), abs=1e-12)


@given(seeds, st.integers(1, 4))
def test_all_indirect_is_total_plus_reverse_direct(seed, k):
    m = random_model(np.random.default_rng(seed), n_profile=k)
    pi = PathSet.all_indirect(m.graph)
    lhs = path_specific_effect(m, pi, 1, 0)
    rhs = total_effect(m, 1, 0) + direct_effect(m, 0, 1)
    assert lhs == pytest.approx(rhs, abs=1e-9)


@given(seeds, st.integers(2, 4), st.data())
def test_redlining_subset_matches_oracle(seed, k, data):
    rng = np.random.default_rng(seed)
    m = random_model(rng, n_profile=k, edge_prob=0.6)
    red = data.draw(st.sets(st.sampled_from([f"Z{j}" for j in range(k)]), min_size=1))
    pi = PathSet.through(m.graph, red)
    try:
        partition_children(m.graph, pi)
    except UnidentifiableError:
        assume(False)
    for f, t in ((1, 0), (0, 1)):
        want = nested_counterfactual_oracle(m, pi, f, t)
        assert path_specific_effect(m, pi, f, t) == pytest.approx(want, abs=1e-12)


# -- detection ---------------------------------------------------------------


def test_fdetect_report_consistency(rng):
    m = random_model(rng, n_profile=3, redlining={"Z0"})
    rep = fdetect(m, tau=0.05)
    base = rep.mean_score_favorable
    assert base == pytest.approx(mean_score(m, m.fav_index))
    assert rep.de_d_fwd == rep.se_d_fwd / base
    assert rep.de_i_rev == rep.se_i_rev / base
    assert rep.judge_d == (max(rep.de_d_fwd, rep.de_d_rev) > rep.tau + JUDGE_ATOL)
    assert rep.judge_i == (max(rep.de_i_fwd, rep.de_i_rev) > rep.tau + JUDGE_ATOL)
    assert rep.te_fwd == pytest.approx(-rep.te_rev, abs=1e-15)
    d = rep.to_dict()
    assert d["judge_d"] == rep.judge_d and isinstance(d["indirect_paths"], list)


def test_fdetect_toy_rankers():
    fair = fdetect(toy_model(1))
    assert fair.de_d_fwd == pytest.approx(0.0, abs=1e-12)
    assert not fair.judge_d and not fair.judge_i
    biased = fdetect(toy_model(2))
    assert biased.judge_d
    assert biased.de_d_fwd > 0.05


def test_fdetect_nonpositive_baseline():
    with pytest.raises(NonpositiveBaselineError):
        fdetect(two_node(-1.0, -2.0))
    with pytest.raises(ValidationError):
        fdetect(two_node(3.0, 1.0), tau=-0.1)


def test_judgment_at_exact_tau_is_not_flagged():
    # DE_d = (mu+ - mu-) / mu+ = 0.05 exactly in real arithmetic.
    rep = fdetect(two_node(1.0, 0.95), tau=0.05)
    assert rep.de_d_fwd == pytest.approx(0.05)
    assert not rep.judge_d


@given(seeds)
def test_de_invariant_under_relabeling(seed):
    m = random_model(np.random.default_rng(seed), n_profile=3, domain_size=3)
    pi = PathSet.all_indirect(m.graph)
    base = fdetect(m, pi_i=pi)
    for node in ("Z0", "Z1", "Z2"):
        other = fdetect(relabel(m, node), pi_i=pi)
        for f in ("de_d_fwd", "de_d_rev", "de_i_fwd", "de_i_rev"):
            assert getattr(other, f) == pytest.approx(getattr(base, f), abs=1e-12)
