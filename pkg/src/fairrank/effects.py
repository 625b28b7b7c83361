"""Total and path-specific effects of the protected attribute on the score.

Every effect here is a linear functional of the CG means: it can be written
as ``sum(W * mu)`` for a weight array ``W`` of the CG table's shape whose
entries are products of CPT probabilities. :func:`effect_weights` returns
that array; the repair QP reuses it as constraint coefficients.

The weights come from exact contraction of the CPT product over the
ancestors of ``S`` (no empirical counting). Two deliberately naive
enumeration oracles live at the bottom of the module for cross-checks.
"""

from __future__ import annotations

import itertools
import logging
from collections.abc import Iterable, Mapping
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import NonpositiveBaselineError, UnidentifiableError, ValidationError
from .graph import CausalGraph, CausalModel, topological_order

log = logging.getLogger(__name__)

DIRECT = "direct"
INDIRECT_REDLINING = "indirect-via-redlining"
ALL_INDIRECT = "all-indirect"

ENUMERATION_LIMIT = 10**6
# Keeps a ratio sitting exactly on tau (e.g. after repair) from being flagged by rounding.
JUDGE_ATOL = 1e-9


@dataclass(frozen=True)
class PathSet:
    """A set of causal paths from the protected node to the score node."""

    paths: tuple[tuple[str, ...], ...]
    kind: str

    @classmethod
    def direct(cls, graph: CausalGraph) -> PathSet:
        c, s = graph.protected, graph.score
        paths = ((c, s),) if graph.has_edge(c, s) else ()
        return cls(paths, DIRECT)

    @classmethod
    def all_indirect(cls, graph: CausalGraph) -> PathSet:
        paths = tuple(p for p in graph.directed_paths(graph.protected, graph.score) if len(p) > 2)
        return cls(paths, ALL_INDIRECT)

    @classmethod
    def through(cls, graph: CausalGraph, redlining: Iterable[str]) -> PathSet:
        r = set(redlining)
        paths = tuple(
            p for p in graph.directed_paths(graph.protected, graph.score) if r.intersection(p[1:-1])
        )
        return cls(paths, INDIRECT_REDLINING)

    def edges(self) -> set[tuple[str, str]]:
        return {(p[k], p[k + 1]) for p in self.paths for k in range(len(p) - 1)}

    def validate(self, graph: CausalGraph) -> None:
        edges = set(graph.edges)
        for p in self.paths:
            if p[0] != graph.protected or p[-1] != graph.score:
                raise ValidationError(f"path {p} does not run from the protected node to the score")
            for k in range(len(p) - 1):
                if (p[k], p[k + 1]) not in edges:
                    raise ValidationError(f"path {p} uses missing edge {p[k]}->{p[k + 1]}")


def indirect_paths(model: CausalModel) -> PathSet:
    """Paths through the model's redlining attributes (empty if there are none)."""
    if not model.redlining:
        log.warning("no redlining attributes declared; the indirect effect is zero by definition")
    return PathSet.through(model.graph, model.redlining)


@dataclass(frozen=True)
class ChildPartition:
    v_pi: frozenset[str]
    v_bar: frozenset[str]


def partition_children(graph: CausalGraph, pi: PathSet) -> ChildPartition:
    """Split ``Ch(C) \\ {S}`` by whether the edge ``C -> V`` starts a path in ``pi``.

    Raises :class:`UnidentifiableError` when some child starts both a path in
    ``pi`` and a causal path outside it.
    """
    pi.validate(graph)
    c, s = graph.protected, graph.score
    inside = set(pi.paths)
    outside = [p for p in graph.directed_paths(c, s) if p not in inside]
    v_pi, v_bar = set(), set()
    for v in graph.children(c):
        if v == s:
            continue
        on_pi = any(p[1] == v for p in pi.paths)
        on_other = [p for p in outside if p[1] == v]
        if on_pi and on_other:
            witness = next(p for p in pi.paths if p[1] == v)
            raise UnidentifiableError(
                f"{v!r} is a recanting witness: {' -> '.join(witness)} is in the path set but "
                f"{' -> '.join(on_other[0])} is not; the effect is not identifiable"
            )
        (v_pi if on_pi else v_bar).add(v)
    return ChildPartition(frozenset(v_pi), frozenset(v_bar))


# -- exact contraction -------------------------------------------------------


def _score_ancestors(model: CausalModel) -> list[str]:
    g = model.graph
    anc = g.ancestors(g.score) - {g.protected}
    return [v for v in topological_order(g) if v in anc]


def q_distribution(model: CausalModel, c_for: Mapping[str, int] | int) -> np.ndarray:
    """Distribution of Q when each node's CPT reads ``C`` as ``c_for[node]``.

    With an int, every node sees the same protected value and the result is
    P(q | c). Shape is ``model.q_shape`` (a 0-d array when Q is empty).
    """
    g = model.graph
    nodes = _score_ancestors(model)
    if len(nodes) > 52:
        raise ValidationError("too many ancestors of the score node for contraction")
    letter = {v: k for k, v in enumerate(nodes)}
    size = int(np.prod([len(model.domains[v]) for v in nodes])) if nodes else 1
    if size > ENUMERATION_LIMIT:
        raise ValidationError(f"joint over {len(nodes)} nodes has {size} cells (> {ENUMERATION_LIMIT})")
    operands: list = []
    for v in nodes:
        cpt = model.cpts[v]
        table = cpt.table
        subs = []
        for p in cpt.parent_order:
            if p == g.protected:
                ci = c_for if isinstance(c_for, int) else c_for.get(v)
                if ci is None:
                    raise ValidationError(f"no protected value given for node {v!r}")
                table = np.take(table, ci, axis=len(subs))
            else:
                subs.append(letter[p])
        subs.append(letter[v])
        operands += [table, subs]
    out = [letter[q] for q in model.q_nodes]
    if not operands:
        return np.ones(())
    return np.asarray(np.einsum(*operands, out, optimize=True))


def _weights(model: CausalModel) -> np.ndarray:
    return np.zeros(model.cg.mu.shape)


def mean_score_weights(model: CausalModel, c: int) -> np.ndarray:
    """Weights of E[S | do(c)]; C has no parents so this is also E[S | c]."""
    w = _weights(model)
    w[c] = q_distribution(model, c)
    return w


def total_effect_weights(model: CausalModel, c_from: int, c_to: int) -> np.ndarray:
    w = mean_score_weights(model, c_from)
    w[c_to] -= q_distribution(model, c_to)
    return w


def effect_weights(model: CausalModel, pi: PathSet, c_from: int, c_to: int) -> np.ndarray:
    """Weights of SE_pi(c_from, c_to) via the child-partition substitution.

    CPT rows of children starting a path in ``pi`` read ``c_from``; all
    other children read ``c_to``. The score's own lookup reads ``c_from``
    only if the direct edge belongs to ``pi``.
    """
    g = model.graph
    part = partition_children(g, pi)
    c_for = {v: (c_from if v in part.v_pi else c_to) for v in g.children(g.protected)}
    c_score = c_from if (g.protected, g.score) in pi.edges() else c_to
    w = _weights(model)
    w[c_score] += q_distribution(model, c_for)
    w[c_to] -= q_distribution(model, c_to)
    return w


def apply(weights: np.ndarray, model: CausalModel) -> float:
    return float(np.sum(weights * model.cg.mu))


def total_effect(model: CausalModel, c_from: str | int, c_to: str | int) -> float:
    """TE(from, to) = sum_q mu[from, q] P(q | from) - mu[to, q] P(q | to)."""
    return apply(total_effect_weights(model, model.c_index(c_from), model.c_index(c_to)), model)


def path_specific_effect(model: CausalModel, pi: PathSet, c_from: str | int, c_to: str | int) -> float:
    return apply(effect_weights(model, pi, model.c_index(c_from), model.c_index(c_to)), model)


def direct_effect(model: CausalModel, c_from: str | int, c_to: str | int) -> float:
    """sum_q (mu[from, q] - mu[to, q]) P(q | to)."""
    f, t = model.c_index(c_from), model.c_index(c_to)
    p = q_distribution(model, t)
    return float(np.sum((model.cg.mu[f] - model.cg.mu[t]) * p))


def all_indirect_effect(model: CausalModel, c_from: str | int, c_to: str | int) -> float:
    """Closed form when every non-direct path is included:
    sum_q mu[to, q] (P(q | from) - P(q | to)).
    """
    f, t = model.c_index(c_from), model.c_index(c_to)
    return float(np.sum(model.cg.mu[t] * (q_distribution(model, f) - q_distribution(model, t))))


def mean_score(model: CausalModel, c: str | int) -> float:
    return apply(mean_score_weights(model, model.c_index(c)), model)


# -- detection ---------------------------------------------------------------


@dataclass(frozen=True)
class EffectReport:
    te_fwd: float
    te_rev: float
    se_d_fwd: float
    se_d_rev: float
    se_i_fwd: float
    se_i_rev: float
    mean_score_favorable: float
    de_d_fwd: float
    de_d_rev: float
    de_i_fwd: float
    de_i_rev: float
    tau: float
    judge_d: bool
    judge_i: bool
    indirect_kind: str = INDIRECT_REDLINING
    indirect_paths: tuple[tuple[str, ...], ...] = field(default=())

    @property
    def max_de(self) -> float:
        return max(self.de_d_fwd, self.de_d_rev, self.de_i_fwd, self.de_i_rev)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["indirect_paths"] = [list(p) for p in self.indirect_paths]
        return out


def fdetect(model: CausalModel, tau: float = 0.05, pi_i: PathSet | None = None) -> EffectReport:
    """Direct and indirect discrimination judgments for a parameterized model.

    ``pi_i`` defaults to the paths through the model's redlining attributes.
    DE values are the path-specific effects divided by E[S | c+]; a judgment
    is raised when either direction exceeds ``tau``.
    """
    if tau < 0:
        raise ValidationError("tau must be nonnegative")
    g = model.graph
    pi_d = PathSet.direct(g)
    pi_i = pi_i if pi_i is not None else indirect_paths(model)
    fav, unf = model.fav_index, model.unfav_index
    base = mean_score(model, fav)
    if not base > 0:
        raise NonpositiveBaselineError(
            f"E[S|c+] = {base:.6g} <= 0; relative measures are undefined (raise the score anchor)"
        )
    se_d_fwd = path_specific_effect(model, pi_d, fav, unf)
    se_d_rev = path_specific_effect(model, pi_d, unf, fav)
    se_i_fwd = path_specific_effect(model, pi_i, fav, unf)
    se_i_rev = path_specific_effect(model, pi_i, unf, fav)
    de = [x / base for x in (se_d_fwd, se_d_rev, se_i_fwd, se_i_rev)]
    return EffectReport(
        te_fwd=total_effect(model, fav, unf),
        te_rev=total_effect(model, unf, fav),
        se_d_fwd=se_d_fwd,
        se_d_rev=se_d_rev,
        se_i_fwd=se_i_fwd,
        se_i_rev=se_i_rev,
        mean_score_favorable=base,
        de_d_fwd=de[0],
        de_d_rev=de[1],
        de_i_fwd=de[2],
        de_i_rev=de[3],
        tau=tau,
        judge_d=max(de[0], de[1]) > tau + JUDGE_ATOL,
        judge_i=max(de[2], de[3]) > tau + JUDGE_ATOL,
        indirect_kind=pi_i.kind,
        indirect_paths=pi_i.paths,
    )


# -- enumeration oracles -----------------------------------------------------


def _profile_nodes(model: CausalModel) -> list[str]:
    g = model.graph
    return [v for v in topological_order(g) if v not in (g.protected, g.score)]


def _guard(model: CausalModel, nodes: list[str], copies: int = 1) -> None:
    size = 1
    for v in nodes:
        size *= len(model.domains[v]) ** copies
    if size > ENUMERATION_LIMIT:
        raise ValidationError(f"enumeration over {size} configurations exceeds {ENUMERATION_LIMIT}")


def _cpt(model: CausalModel, v: str, values: Mapping[str, int]) -> float:
    cpt = model.cpts[v]
    return float(cpt.table[tuple(values[p] for p in cpt.parent_order) + (values[v],)])


def brute_force_intervention(model: CausalModel, c: str | int, score_c: str | int | None = None) -> float:
    """E[S | do(C=c)] by summing the truncated factorization over every profile configuration.

    ``score_c`` (default ``c``) is the protected value used for the score's
    mean lookup only, which gives the cross-world terms of the direct and
    all-indirect effects.
    """
    g = model.graph
    ci = model.c_index(c)
    si = ci if score_c is None else model.c_index(score_c)
    nodes = _profile_nodes(model)
    _guard(model, nodes)
    total = 0.0
    for combo in itertools.product(*(range(len(model.domains[v])) for v in nodes)):
        values = dict(zip(nodes, combo))
        values[g.protected] = ci
        p = 1.0
        for v in nodes:
            p *= _cpt(model, v, values)
        total += p * model.cg.mu[(si,) + tuple(values[q] for q in model.q_nodes)]
    return float(total)


def nested_counterfactual_oracle(model: CausalModel, pi: PathSet, c_from: str | int, c_to: str | int) -> float:
    """SE_pi(from, to) from a twin network, without the child partition.

    Every profile node gets a reference copy (driven by ``c_to`` everywhere)
    and an active copy. The active copy reads each parent through an edge
    of ``pi`` from the active world (``c_from`` for edges out of ``C``) and
    every other parent from the reference world. The two copies are
    enumerated jointly; the score mean follows the same edge rule.
    """
    g = model.graph
    f, t = model.c_index(c_from), model.c_index(c_to)
    pi_edges = pi.edges()
    nodes = _profile_nodes(model)
    _guard(model, nodes, copies=2)
    total = 0.0
    ranges = [range(len(model.domains[v])) for v in nodes]
    for ref in itertools.product(*ranges):
        ref_vals = dict(zip(nodes, ref))
        ref_vals[g.protected] = t
        p_ref = 1.0
        for v in nodes:
            p_ref *= _cpt(model, v, ref_vals)
        if p_ref == 0.0:
            continue
        for act in itertools.product(*ranges):
            act_vals = dict(zip(nodes, act))
            p_act = 1.0
            for v in nodes:
                view = {v: act_vals[v]}
                for par in model.cpts[v].parent_order:
                    if (par, v) in pi_edges:
                        view[par] = f if par == g.protected else act_vals[par]
                    else:
                        view[par] = ref_vals[par]
                p_act *= _cpt(model, v, view)
                if p_act == 0.0:
                    break
            if p_act == 0.0:
                continue
            c_s = f if (g.protected, g.score) in pi_edges else t
            q = tuple(act_vals[x] if (x, g.score) in pi_edges else ref_vals[x] for x in model.q_nodes)
            total += p_ref * p_act * model.cg.mu[(c_s,) + q]
    return float(total - brute_force_intervention(model, t))
