"""PC-style structure learning over discrete profile attributes and the score.

Discrete pairs use a stratified Pearson chi-square test; pairs involving the
score use a conditional-Gaussian likelihood-ratio test. Background knowledge
(no edge into the protected node, no edge out of the score) orients every
edge touching either node and is respected by every later orientation step.
"""

from __future__ import annotations

import itertools
import logging
from collections.abc import Mapping, Sequence
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .dataset import RankedDataset, ScoreAssignment
from .graph import PROFILE, PROTECTED, SCORE, SIGMA_FLOOR, CausalGraph

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class CiTestResult:
    x: str
    y: str
    conditioning_set: tuple[str, ...]
    statistic: float
    p_value: float
    dof: int
    independent: bool
    inconclusive: bool = False


def chi_square_table(table: np.ndarray) -> tuple[float, int, bool]:
    """Pearson statistic and dof of one contingency table.

    Empty rows and columns are dropped first. Returns ``usable=False`` when
    any expected count is below 1 (the stratum then contributes nothing).
    """
    t = np.asarray(table, dtype=float)
    t = t[t.sum(axis=1) > 0][:, t.sum(axis=0) > 0]
    if t.size == 0 or min(t.shape) < 2:
        return 0.0, 0, True
    expected = np.outer(t.sum(axis=1), t.sum(axis=0)) / t.sum()
    if np.any(expected < 1):
        return 0.0, 0, False
    stat = float(((t - expected) ** 2 / expected).sum())
    return stat, (t.shape[0] - 1) * (t.shape[1] - 1), True


def _stratum_ids(codes: Mapping[str, np.ndarray], cond: Sequence[str], n: int) -> np.ndarray:
    if not cond:
        return np.zeros(n, dtype=np.int64)
    stacked = np.stack([codes[c] for c in cond], axis=1)
    _, ids = np.unique(stacked, axis=0, return_inverse=True)
    return ids.reshape(-1)


def _codes(data: RankedDataset) -> dict[str, np.ndarray]:
    return {a: data.codes(a) for a in data.attribute_names}


def _chi_square(codes, sizes, x, y, cond, alpha, n) -> CiTestResult:
    strata = _stratum_ids(codes, cond, n)
    stat, dof, skipped = 0.0, 0, 0
    for k in range(int(strata.max()) + 1 if n else 0):
        sel = strata == k
        table = np.zeros((sizes[x], sizes[y]))
        np.add.at(table, (codes[x][sel], codes[y][sel]), 1.0)
        s, d, usable = chi_square_table(table)
        if not usable:
            skipped += 1
            continue
        stat += s
        dof += d
    if dof == 0:
        if skipped:
            log.warning("chi-square %s _||_ %s | %s inconclusive (sparse strata); treated as independent", x, y, list(cond))
        return CiTestResult(x, y, tuple(cond), 0.0, 1.0, 0, True, inconclusive=True)
    p = float(stats.chi2.sf(stat, dof))
    return CiTestResult(x, y, tuple(cond), stat, p, dof, p > alpha)


def chi_square_ci(
    data: RankedDataset, x: str, y: str, cond: Sequence[str] = (), alpha: float = 0.05
) -> CiTestResult:
    """Stratified Pearson chi-square test of ``x _||_ y | cond``.

    Statistics and degrees of freedom are summed over the strata of
    ``cond``. Strata with an expected count below 1 are skipped; if nothing
    is left the test is inconclusive and reported as independent.
    """
    codes = _codes(data)
    sizes = {a: len(data.attribute_domains[a]) for a in data.attribute_names}
    return _chi_square(codes, sizes, x, y, tuple(cond), alpha, data.n)


def _gauss_loglik(s: np.ndarray, groups: np.ndarray, fallback_var: np.ndarray | float) -> tuple[float, int]:
    """Log-likelihood with one Gaussian per group; groups of size 1 borrow ``fallback_var``."""
    ll, params = 0.0, 0
    floor = SIGMA_FLOOR**2
    for k in np.unique(groups):
        v = s[groups == k]
        m = v.mean()
        params += 1
        if v.size >= 2:
            var = max(float(((v - m) ** 2).mean()), floor)
            params += 1
            ll += -0.5 * v.size * (np.log(2 * np.pi * var) + 1.0)
        else:
            fb = fallback_var[k] if isinstance(fallback_var, np.ndarray) else fallback_var
            ll += -0.5 * np.log(2 * np.pi * max(fb, floor))
    return ll, params


def _cg_lr(codes, scores, y, cond, alpha, score_name) -> CiTestResult:
    s = np.asarray(scores, dtype=float)
    n = s.size
    strata = _stratum_ids(codes, cond, n)
    global_var = float(s.var()) if n > 1 else 1.0
    reduced_ll = 0.0
    full_ll = 0.0
    dof = 0
    for k in range(int(strata.max()) + 1 if n else 0):
        sel = strata == k
        sk = s[sel]
        var_k = float(sk.var()) if sk.size > 1 else global_var
        ll_r, p_r = _gauss_loglik(sk, np.zeros(sk.size, dtype=np.int64), global_var)
        ll_f, p_f = _gauss_loglik(sk, codes[y][sel], var_k)
        reduced_ll += ll_r
        full_ll += ll_f
        dof += p_f - p_r
    stat = max(2.0 * (full_ll - reduced_ll), 0.0)
    if dof <= 0:
        return CiTestResult(score_name, y, tuple(cond), 0.0, 1.0, 0, True, inconclusive=True)
    p = float(stats.chi2.sf(stat, dof))
    return CiTestResult(score_name, y, tuple(cond), stat, p, dof, p > alpha)


def cg_likelihood_ratio_ci(
    data: RankedDataset,
    scores: ScoreAssignment | np.ndarray,
    y: str,
    cond: Sequence[str] = (),
    alpha: float = 0.05,
    score_name: str = "score",
) -> CiTestResult:
    """Likelihood-ratio test of ``S _||_ y | cond`` for a continuous score.

    Compares one Gaussian per ``(y, cond)`` stratum against one Gaussian per
    ``cond`` stratum; the statistic is chi-square with the difference in the
    number of free parameters.
    """
    s = scores.scores if isinstance(scores, ScoreAssignment) else scores
    return _cg_lr(_codes(data), s, y, tuple(cond), alpha, score_name)


# -- PC search ---------------------------------------------------------------


class _Pdag:
    def __init__(self, nodes: Sequence[str], adj: Mapping[str, set[str]]):
        self.nodes = list(nodes)
        self.adj = {v: set(adj[v]) for v in nodes}
        self.directed: set[tuple[str, str]] = set()

    def undirected(self) -> list[tuple[str, str]]:
        out = []
        for a in sorted(self.nodes):
            for b in sorted(self.adj[a]):
                if a < b and (a, b) not in self.directed and (b, a) not in self.directed:
                    out.append((a, b))
        return out

    def is_undirected(self, a: str, b: str) -> bool:
        return b in self.adj[a] and (a, b) not in self.directed and (b, a) not in self.directed

    def reaches(self, src: str, dst: str) -> bool:
        stack, seen = [src], set()
        while stack:
            v = stack.pop()
            if v == dst:
                return True
            if v in seen:
                continue
            seen.add(v)
            stack.extend(b for a, b in self.directed if a == v)
        return False

    def orient(self, a: str, b: str, forbidden: set[tuple[str, str]]) -> bool:
        if (a, b) in forbidden or (b, a) in self.directed or self.reaches(b, a):
            return False
        self.directed.add((a, b))
        return True


def _meek(pdag: _Pdag, forbidden: set[tuple[str, str]]) -> None:
    changed = True
    while changed:
        changed = False
        for a, b in pdag.undirected():
            for x, y in ((a, b), (b, a)):
                if not pdag.is_undirected(x, y):
                    continue
                parents_x = {p for p, q in pdag.directed if q == x}
                parents_y = {p for p, q in pdag.directed if q == y}
                # R1: w -> x - y with w, y nonadjacent.
                r1 = any(w not in pdag.adj[y] and w != y for w in parents_x)
                # R2: x -> w -> y with x - y.
                r2 = any((x, w) in pdag.directed for w in parents_y)
                # R3: x - w1 -> y, x - w2 -> y, w1 and w2 nonadjacent.
                cands = sorted(w for w in parents_y if pdag.is_undirected(x, w))
                r3 = any(w2 not in pdag.adj[w1] for w1, w2 in itertools.combinations(cands, 2))
                if (r1 or r2 or r3) and pdag.orient(x, y, forbidden):
                    changed = True


def learn_structure(
    data: RankedDataset,
    scores: ScoreAssignment | np.ndarray,
    alpha: float = 0.05,
    max_cond: int = 3,
    score_name: str = "score",
) -> CausalGraph:
    """PC search with background knowledge; always returns a valid DAG.

    Conditioning sets for two discrete nodes never include the score: it is
    a sink, so a separating set without it always exists. Edges still
    undirected after the Meek rules are oriented from the lexicographically
    smaller name to the larger one unless that would close a cycle.
    """
    if score_name in data.attribute_names:
        raise ValueError(f"score node name {score_name!r} clashes with an attribute")
    s = scores.scores if isinstance(scores, ScoreAssignment) else np.asarray(scores, dtype=float)
    codes = _codes(data)
    sizes = {a: len(data.attribute_domains[a]) for a in data.attribute_names}
    c_node = data.protected_attribute
    nodes = sorted(data.attribute_names) + [score_name]
    adj = {v: set(nodes) - {v} for v in nodes}
    sepset: dict[frozenset[str], tuple[str, ...]] = {}

    def test(x: str, y: str, cond: tuple[str, ...]) -> CiTestResult:
        if x == score_name:
            return _cg_lr(codes, s, y, cond, alpha, score_name)
        if y == score_name:
            return _cg_lr(codes, s, x, cond, alpha, score_name)
        return _chi_square(codes, sizes, x, y, cond, alpha, data.n)

    level = 0
    while level <= max_cond:
        snapshot = {v: set(adj[v]) for v in nodes}
        tested = False
        for x in nodes:
            for y in sorted(snapshot[x]):
                if y not in adj[x]:
                    continue
                pool = snapshot[x] - {y}
                if score_name not in (x, y):
                    pool.discard(score_name)
                if len(pool) < level:
                    continue
                tested = True
                for cond in itertools.combinations(sorted(pool), level):
                    res = test(x, y, cond)
                    if res.independent:
                        adj[x].discard(y)
                        adj[y].discard(x)
                        sepset[frozenset((x, y))] = cond
                        log.debug("removed %s - %s | %s (p=%.3g)", x, y, list(cond), res.p_value)
                        break
        if not tested:
            break
        level += 1

    forbidden = {(v, c_node) for v in nodes} | {(score_name, v) for v in nodes}
    pdag = _Pdag(nodes, adj)
    for v in sorted(adj[c_node]):
        pdag.orient(c_node, v, forbidden)
    for v in sorted(adj[score_name]):
        pdag.orient(v, score_name, forbidden)
    for z in nodes:
        for x, y in itertools.combinations(sorted(adj[z]), 2):
            if y in adj[x] or z in sepset.get(frozenset((x, y)), (z,)):
                continue
            for a in (x, y):
                if pdag.is_undirected(a, z) and not pdag.orient(a, z, forbidden):
                    log.info("v-structure %s -> %s <- %s conflicts; edge %s - %s left to later rules", x, z, y, a, z)
    _meek(pdag, forbidden)
    while True:
        pending = pdag.undirected()
        if not pending:
            break
        a, b = pending[0]
        if not pdag.orient(a, b, forbidden):
            pdag.orient(b, a, forbidden)
        _meek(pdag, forbidden)

    kinds = {v: PROFILE for v in nodes}
    kinds[c_node] = PROTECTED
    kinds[score_name] = SCORE
    return CausalGraph(nodes=tuple(nodes), kinds=kinds, edges=tuple(sorted(pdag.directed)))
