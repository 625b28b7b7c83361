"""Mixed-variable causal graphs: CPTs for the discrete nodes, a conditional
Gaussian table for the score node.
"""

from __future__ import annotations

import itertools
import json
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataset import RankedDataset, ScoreAssignment
from .errors import GraphError, ValidationError

PROTECTED = "protected"
PROFILE = "profile"
SCORE = "score"
KINDS = (PROTECTED, PROFILE, SCORE)

SIGMA_FLOOR = 1e-3


@dataclass(frozen=True)
class CausalGraph:
    """DAG over one protected node, profile nodes and one score node."""

    nodes: tuple[str, ...]
    kinds: Mapping[str, str]
    edges: tuple[tuple[str, str], ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "kinds", dict(self.kinds))
        object.__setattr__(self, "edges", tuple(sorted({(a, b) for a, b in self.edges})))
        self._validate()

    def _validate(self) -> None:
        if len(set(self.nodes)) != len(self.nodes):
            raise GraphError("duplicate node names")
        if set(self.kinds) != set(self.nodes):
            raise GraphError("every node needs exactly one kind")
        bad = {k for k in self.kinds.values() if k not in KINDS}
        if bad:
            raise GraphError(f"unknown node kinds {sorted(bad)}")
        for kind in (PROTECTED, SCORE):
            count = sum(1 for k in self.kinds.values() if k == kind)
            if count != 1:
                raise GraphError(f"graph needs exactly one {kind} node, found {count}")
        names = set(self.nodes)
        for a, b in self.edges:
            if a not in names or b not in names:
                raise GraphError(f"edge {a}->{b} references an unknown node")
            if a == b:
                raise GraphError(f"self-loop on {a}")
        if self.parents(self.protected):
            raise GraphError(
                f"protected node {self.protected!r} has parents {list(self.parents(self.protected))}"
            )
        if self.children(self.score):
            raise GraphError(
                f"score node {self.score!r} has children {list(self.children(self.score))}"
            )
        topological_order(self)

    @property
    def protected(self) -> str:
        return next(n for n in self.nodes if self.kinds[n] == PROTECTED)

    @property
    def score(self) -> str:
        return next(n for n in self.nodes if self.kinds[n] == SCORE)

    @property
    def profile(self) -> tuple[str, ...]:
        return tuple(n for n in self.nodes if self.kinds[n] == PROFILE)

    @property
    def discrete(self) -> tuple[str, ...]:
        return tuple(n for n in self.nodes if self.kinds[n] != SCORE)

    def parents(self, node: str) -> tuple[str, ...]:
        return tuple(sorted(a for a, b in self.edges if b == node))

    def children(self, node: str) -> tuple[str, ...]:
        return tuple(sorted(b for a, b in self.edges if a == node))

    def has_edge(self, a: str, b: str) -> bool:
        return (a, b) in set(self.edges)

    def ancestors(self, node: str) -> set[str]:
        out: set[str] = set()
        stack = list(self.parents(node))
        while stack:
            v = stack.pop()
            if v not in out:
                out.add(v)
                stack.extend(self.parents(v))
        return out

    def directed_paths(self, src: str, dst: str) -> list[tuple[str, ...]]:
        """All directed paths from ``src`` to ``dst`` in lexicographic DFS order."""
        paths: list[tuple[str, ...]] = []

        def walk(path: list[str]) -> None:
            v = path[-1]
            if v == dst:
                paths.append(tuple(path))
                return
            for w in self.children(v):
                walk(path + [w])

        walk([src])
        return paths

    def q_nodes(self) -> tuple[str, ...]:
        """Parents of the score node other than the protected node, sorted by name."""
        return tuple(p for p in self.parents(self.score) if p != self.protected)

    @classmethod
    def build(
        cls, protected: str, score: str, edges: Iterable[tuple[str, str]], profile: Iterable[str] = ()
    ) -> CausalGraph:
        edges = list(edges)
        names = {protected, score, *profile}
        for a, b in edges:
            names.update((a, b))
        kinds = {n: PROFILE for n in names}
        kinds[protected] = PROTECTED
        kinds[score] = SCORE
        return cls(nodes=tuple(sorted(names)), kinds=kinds, edges=tuple(edges))


def topological_order(graph: CausalGraph) -> list[str]:
    """Kahn's algorithm with lexicographic tie-breaks; the score node is always last."""
    score = next((n for n in graph.nodes if graph.kinds.get(n) == SCORE), None)
    nodes = [n for n in graph.nodes if n != score]
    indeg = {n: 0 for n in nodes}
    out: dict[str, list[str]] = {n: [] for n in nodes}
    for a, b in graph.edges:
        if b == score or a == score:
            continue
        indeg[b] += 1
        out[a].append(b)
    ready = sorted(n for n in nodes if indeg[n] == 0)
    order: list[str] = []
    while ready:
        v = ready.pop(0)
        order.append(v)
        for w in out[v]:
            indeg[w] -= 1
            if indeg[w] == 0:
                ready.append(w)
        ready.sort()
    if len(order) != len(nodes):
        stuck = sorted(n for n in nodes if n not in order)
        raise GraphError(f"graph has a cycle through {stuck}")
    if score is not None:
        if any(a == score for a, _ in graph.edges):
            raise GraphError(f"score node {score!r} has children")
        order.append(score)
    return order


@dataclass(frozen=True)
class Cpt:
    """P(node | parents) as an array of shape ``(*parent_sizes, node_size)``."""

    node: str
    parent_order: tuple[str, ...]
    table: np.ndarray
    smoothing: float = 0.0

    def __post_init__(self) -> None:
        t = np.asarray(self.table, dtype=float).copy()
        t.setflags(write=False)
        object.__setattr__(self, "table", t)
        object.__setattr__(self, "parent_order", tuple(self.parent_order))
        if t.ndim != len(self.parent_order) + 1:
            raise ValidationError(f"CPT for {self.node}: table rank does not match parents")
        if np.any(t < 0) or np.any(t > 1):
            raise ValidationError(f"CPT for {self.node}: entries outside [0, 1]")
        if not np.allclose(t.sum(axis=-1), 1.0, rtol=0, atol=1e-9):
            raise ValidationError(f"CPT for {self.node}: rows do not sum to 1")


@dataclass(frozen=True)
class CgTable:
    """Per-stratum Gaussian N(mu[c, q], sigma[c, q]^2) for the score.

    Axis 0 indexes the protected value (in domain order), the remaining axes
    the Q nodes in ``q_order`` (sorted by name).
    """

    q_order: tuple[str, ...]
    mu: np.ndarray
    sigma: np.ndarray
    counts: np.ndarray | None = None
    min_count: int = 5

    def __post_init__(self) -> None:
        mu = np.asarray(self.mu, dtype=float).copy()
        sigma = np.asarray(self.sigma, dtype=float).copy()
        mu.setflags(write=False)
        sigma.setflags(write=False)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "q_order", tuple(self.q_order))
        if mu.shape != sigma.shape or mu.ndim != len(self.q_order) + 1 or mu.shape[0] != 2:
            raise ValidationError("CG table shape does not match (C, *Q)")
        if not np.all(np.isfinite(mu)):
            raise ValidationError("CG means must be finite")
        if not np.all(sigma > 0):
            raise ValidationError("CG standard deviations must be positive")


@dataclass(frozen=True)
class CausalModel:
    """A graph with all its parameters; the object detection and repair act on."""

    graph: CausalGraph
    domains: Mapping[str, tuple[str, ...]]
    favorable: str
    cpts: Mapping[str, Cpt]
    cg: CgTable
    redlining: frozenset[str] = frozenset()

    def __post_init__(self) -> None:
        object.__setattr__(self, "domains", {k: tuple(v) for k, v in self.domains.items()})
        object.__setattr__(self, "cpts", dict(self.cpts))
        object.__setattr__(self, "redlining", frozenset(self.redlining))
        g = self.graph
        if set(self.domains) != set(g.discrete):
            raise ValidationError("domains must cover exactly the discrete nodes")
        if len(self.domains[g.protected]) != 2:
            raise ValidationError("protected node must be binary")
        if self.favorable not in self.domains[g.protected]:
            raise ValidationError("favorable value not in protected domain")
        if set(self.cpts) != set(g.discrete):
            raise ValidationError("need exactly one CPT per discrete node")
        for v, cpt in self.cpts.items():
            if cpt.parent_order != g.parents(v):
                raise ValidationError(f"CPT for {v}: parents {cpt.parent_order} != {g.parents(v)}")
            want = tuple(len(self.domains[p]) for p in cpt.parent_order) + (len(self.domains[v]),)
            if cpt.table.shape != want:
                raise ValidationError(f"CPT for {v}: shape {cpt.table.shape} != {want}")
        if self.cg.q_order != g.q_nodes():
            raise ValidationError("CG table Q order does not match the graph")
        want = (2,) + tuple(len(self.domains[q]) for q in g.q_nodes())
        if self.cg.mu.shape != want:
            raise ValidationError(f"CG table shape {self.cg.mu.shape} != {want}")
        bad = self.redlining - set(g.profile)
        if bad:
            raise ValidationError(f"redlining attributes not profile nodes: {sorted(bad)}")

    @property
    def protected(self) -> str:
        return self.graph.protected

    @property
    def fav_index(self) -> int:
        return self.domains[self.protected].index(self.favorable)

    @property
    def unfav_index(self) -> int:
        return 1 - self.fav_index

    @property
    def q_nodes(self) -> tuple[str, ...]:
        return self.cg.q_order

    @property
    def q_shape(self) -> tuple[int, ...]:
        return tuple(len(self.domains[q]) for q in self.q_nodes)

    def c_index(self, c: str | int) -> int:
        """Accept a protected-domain label or a 0/1 index."""
        dom = self.domains[self.protected]
        if isinstance(c, str):
            if c not in dom:
                raise ValidationError(f"{c!r} is not a value of {self.protected}")
            return dom.index(c)
        if c not in (0, 1):
            raise ValidationError(f"protected index must be 0 or 1, got {c!r}")
        return int(c)

    def with_means(self, mu: np.ndarray) -> CausalModel:
        cg = CgTable(
            q_order=self.cg.q_order,
            mu=np.asarray(mu, dtype=float).reshape(self.cg.mu.shape),
            sigma=self.cg.sigma,
            counts=self.cg.counts,
            min_count=self.cg.min_count,
        )
        return CausalModel(self.graph, self.domains, self.favorable, self.cpts, cg, self.redlining)

    def strata(self) -> list[tuple[int, tuple[int, ...]]]:
        return [(c, q) for c in (0, 1) for q in itertools.product(*(range(k) for k in self.q_shape))]

    def stratum_key(self, c: int, q: Sequence[int]) -> str:
        return stratum_key(
            self.domains[self.protected][c],
            [(name, self.domains[name][i]) for name, i in zip(self.q_nodes, q)],
        )


def stratum_key(c_value: str, q_assignment: Sequence[tuple[str, str]]) -> str:
    """``c=<value>|<name>=<value>,...`` with Q names in sorted order."""
    body = ",".join(f"{n}={v}" for n, v in sorted(q_assignment))
    return f"c={c_value}|{body}"


def _assignment_key(names: Sequence[str], values: Sequence[str]) -> str:
    return ",".join(f"{n}={v}" for n, v in zip(names, values))


# -- estimation -------------------------------------------------------------


def _codes(data: RankedDataset, node: str, domain: tuple[str, ...]) -> np.ndarray:
    lookup = {v: i for i, v in enumerate(domain)}
    return np.array([lookup[v] for v in data.column(node)], dtype=np.int64)


def estimate_cpt(
    data: RankedDataset, graph: CausalGraph, node: str, domains: Mapping[str, tuple[str, ...]], smoothing: float
) -> Cpt:
    parents = graph.parents(node)
    shape = tuple(len(domains[p]) for p in parents) + (len(domains[node]),)
    counts = np.zeros(shape)
    idx = tuple(_codes(data, v, domains[v]) for v in (*parents, node))
    np.add.at(counts, idx, 1.0)
    totals = counts.sum(axis=-1, keepdims=True)
    if smoothing == 0 and np.any(totals == 0):
        empty = np.argwhere(totals[..., 0] == 0)[0]
        assignment = _assignment_key(parents, [domains[p][i] for p, i in zip(parents, empty)])
        raise ValidationError(
            f"CPT for {node}: no observations for parent configuration {assignment!r} and smoothing=0"
        )
    table = (counts + smoothing) / (totals + smoothing * shape[-1])
    return Cpt(node=node, parent_order=parents, table=table, smoothing=smoothing)


def _stratum_stats(idx: np.ndarray, s: np.ndarray, size: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    n = np.bincount(idx, minlength=size).astype(float)
    tot = np.bincount(idx, weights=s, minlength=size)
    mean = np.divide(tot, n, out=np.full(size, np.nan), where=n > 0)
    dev = s - np.nan_to_num(mean)[idx]
    ss = np.bincount(idx, weights=dev * dev, minlength=size)
    sd = np.sqrt(np.divide(ss, n - 1, out=np.full(size, np.nan), where=n > 1))
    return n, mean, sd


def estimate_cg(
    data: RankedDataset,
    scores: np.ndarray,
    graph: CausalGraph,
    domains: Mapping[str, tuple[str, ...]],
    min_count: int = 5,
    sigma_floor: float = SIGMA_FLOOR,
) -> CgTable:
    """Per-stratum mean and unbiased standard deviation of the scores.

    Strata with fewer than ``min_count`` members back off: the mean to the
    stratum with the same ``q`` pooled over both protected values (or to the
    global mean when that ``q`` was never observed), the standard deviation
    likewise. Every sigma is floored at ``sigma_floor``.
    """
    s = np.asarray(scores, dtype=float)
    if s.shape != (data.n,):
        raise ValidationError("scores are not aligned with dataset rows")
    c_name = graph.protected
    q_names = graph.q_nodes()
    q_shape = tuple(len(domains[q]) for q in q_names)
    nq = int(np.prod(q_shape)) if q_shape else 1
    c_codes = _codes(data, c_name, domains[c_name])
    if q_names:
        q_flat = np.ravel_multi_index(tuple(_codes(data, q, domains[q]) for q in q_names), q_shape)
    else:
        q_flat = np.zeros(data.n, dtype=np.int64)

    n_q, mean_q, sd_q = _stratum_stats(q_flat, s, nq)
    g_mean = float(s.mean()) if s.size else 0.0
    g_sd = float(s.std(ddof=1)) if s.size > 1 else sigma_floor
    c_is_parent = graph.has_edge(c_name, graph.score)
    if c_is_parent:
        n_cq, mean_cq, sd_cq = _stratum_stats(c_codes * nq + q_flat, s, 2 * nq)
        n_cq, mean_cq, sd_cq = (a.reshape(2, nq) for a in (n_cq, mean_cq, sd_cq))
    else:
        n_cq = np.vstack([n_q, n_q])
        mean_cq = np.vstack([mean_q, mean_q])
        sd_cq = np.vstack([sd_q, sd_q])

    pooled_mu = np.where(n_q > 0, mean_q, g_mean)
    pooled_sd = np.where(n_q > 1, sd_q, g_sd)
    own_mu = n_cq >= max(min_count, 1)
    own_sd = n_cq >= max(min_count, 2)
    mu = np.where(own_mu, np.nan_to_num(mean_cq), pooled_mu[None, :])
    sd = np.where(own_sd, np.nan_to_num(sd_cq), pooled_sd[None, :])
    sd = np.maximum(np.nan_to_num(sd, nan=sigma_floor), sigma_floor)
    shape = (2,) + q_shape
    return CgTable(
        q_order=q_names,
        mu=mu.reshape(shape),
        sigma=sd.reshape(shape),
        counts=n_cq.reshape(shape),
        min_count=min_count,
    )


def estimate_parameters(
    data: RankedDataset,
    scores: ScoreAssignment | np.ndarray,
    graph: CausalGraph,
    smoothing: float = 1.0,
    min_count: int = 5,
    sigma_floor: float = SIGMA_FLOOR,
) -> CausalModel:
    """Fit CPTs (Laplace-smoothed frequencies) and the CG table from data."""
    if smoothing < 0:
        raise ValidationError("smoothing must be nonnegative")
    if graph.protected != data.protected_attribute:
        raise ValidationError(
            f"graph protected node {graph.protected!r} != dataset protected attribute "
            f"{data.protected_attribute!r}"
        )
    missing = set(graph.discrete) - set(data.attribute_names)
    if missing:
        raise ValidationError(f"graph nodes missing from data: {sorted(missing)}")
    s = scores.scores if isinstance(scores, ScoreAssignment) else np.asarray(scores, dtype=float)
    domains = {v: data.attribute_domains[v] for v in graph.discrete}
    cpts = {v: estimate_cpt(data, graph, v, domains, smoothing) for v in graph.discrete}
    cg = estimate_cg(data, s, graph, domains, min_count=min_count, sigma_floor=sigma_floor)
    redlining = data.redlining_attributes & set(graph.profile)
    return CausalModel(graph, domains, data.favorable_value, cpts, cg, redlining)


# -- JSON -------------------------------------------------------------------


def graph_to_dict(graph: CausalGraph, model: CausalModel | None = None) -> dict:
    nodes = []
    for n in sorted(graph.nodes):
        entry: dict = {"name": n, "kind": graph.kinds[n]}
        if model is not None and n in model.domains:
            entry["domain"] = list(model.domains[n])
            if n == graph.protected:
                entry["favorable"] = model.favorable
            if n in model.redlining:
                entry["redlining"] = True
        nodes.append(entry)
    out: dict = {"nodes": nodes, "edges": [list(e) for e in graph.edges]}
    if model is not None:
        out["params"] = _params_to_dict(model)
    return out


def _params_to_dict(model: CausalModel) -> dict:
    cpts = {}
    for v, cpt in model.cpts.items():
        table = {}
        for pa in itertools.product(*(range(len(model.domains[p])) for p in cpt.parent_order)):
            key = _assignment_key(cpt.parent_order, [model.domains[p][i] for p, i in zip(cpt.parent_order, pa)])
            table[key] = {val: float(cpt.table[pa + (k,)]) for k, val in enumerate(model.domains[v])}
        cpts[v] = {"parents": list(cpt.parent_order), "smoothing": cpt.smoothing, "table": table}
    cg: dict = {}
    for c, q in model.strata():
        entry = {"mu": float(model.cg.mu[(c,) + q]), "sigma": float(model.cg.sigma[(c,) + q])}
        if model.cg.counts is not None:
            entry["count"] = int(model.cg.counts[(c,) + q])
        cg[model.stratum_key(c, q)] = entry
    return {"cpts": cpts, "cg": cg, "min_count": model.cg.min_count}


def dumps_graph(graph: CausalGraph, model: CausalModel | None = None) -> str:
    """Canonical JSON text: sorted keys, sorted nodes and edges, repr floats."""
    return json.dumps(graph_to_dict(graph, model), sort_keys=True, indent=2) + "\n"


def save_graph(path: str | Path, graph: CausalGraph, model: CausalModel | None = None) -> None:
    Path(path).write_text(dumps_graph(graph, model), encoding="utf-8")


def graph_from_dict(obj: Mapping) -> tuple[CausalGraph, CausalModel | None]:
    try:
        nodes = obj["nodes"]
        kinds = {n["name"]: n["kind"] for n in nodes}
        edges = [tuple(e) for e in obj.get("edges", [])]
    except (KeyError, TypeError) as exc:
        raise GraphError(f"malformed graph JSON: {exc}") from None
    if any(len(e) != 2 for e in edges):
        raise GraphError("edges must be [from, to] pairs")
    graph = CausalGraph(nodes=tuple(n["name"] for n in nodes), kinds=kinds, edges=tuple(edges))
    if "params" not in obj:
        return graph, None
    return graph, _model_from_dict(graph, nodes, obj["params"])


def _model_from_dict(graph: CausalGraph, nodes: list, params: Mapping) -> CausalModel:
    meta = {n["name"]: n for n in nodes}
    try:
        domains = {v: tuple(str(x) for x in meta[v]["domain"]) for v in graph.discrete}
        favorable = str(meta[graph.protected]["favorable"])
    except KeyError as exc:
        raise GraphError(f"parameterized graph JSON lacks {exc} on a node entry") from None
    redlining = {n["name"] for n in nodes if n.get("redlining")}
    cpts = {}
    for v in graph.discrete:
        try:
            spec = params["cpts"][v]
        except KeyError:
            raise GraphError(f"missing CPT for {v!r}") from None
        parents = graph.parents(v)
        if tuple(spec.get("parents", ())) != parents:
            raise GraphError(f"CPT for {v!r}: parents {spec.get('parents')} != graph parents {list(parents)}")
        shape = tuple(len(domains[p]) for p in parents) + (len(domains[v]),)
        table = np.zeros(shape)
        for pa in itertools.product(*(range(len(domains[p])) for p in parents)):
            key = _assignment_key(parents, [domains[p][i] for p, i in zip(parents, pa)])
            try:
                row = spec["table"][key]
                table[pa] = [float(row[val]) for val in domains[v]]
            except KeyError as exc:
                raise GraphError(f"CPT for {v!r}: missing entry {exc} in row {key!r}") from None
        cpts[v] = Cpt(v, parents, table, float(spec.get("smoothing", 0.0)))
    q_names = graph.q_nodes()
    q_shape = tuple(len(domains[q]) for q in q_names)
    mu = np.zeros((2,) + q_shape)
    sigma = np.ones((2,) + q_shape)
    counts = np.zeros((2,) + q_shape)
    have_counts = True
    cdom = domains[graph.protected]
    for c in (0, 1):
        for q in itertools.product(*(range(k) for k in q_shape)):
            key = stratum_key(cdom[c], [(n, domains[n][i]) for n, i in zip(q_names, q)])
            try:
                entry = params["cg"][key]
            except KeyError:
                raise GraphError(f"CG table lacks stratum {key!r}") from None
            mu[(c,) + q] = float(entry["mu"])
            sigma[(c,) + q] = float(entry["sigma"])
            if "count" in entry:
                counts[(c,) + q] = int(entry["count"])
            else:
                have_counts = False
    cg = CgTable(q_names, mu, sigma, counts if have_counts else None, int(params.get("min_count", 5)))
    return CausalModel(graph, domains, favorable, cpts, cg, frozenset(redlining))


def loads_graph(text: str) -> tuple[CausalGraph, CausalModel | None]:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise GraphError(f"malformed graph JSON: {exc}") from None
    return graph_from_dict(obj)


def load_graph(path: str | Path) -> tuple[CausalGraph, CausalModel | None]:
    return loads_graph(Path(path).read_text(encoding="utf-8"))
