"""Synthetic models and datasets with known ground truth, for tests and demos."""

from __future__ import annotations

from collections.abc import Iterable, Mapping, Sequence

import numpy as np

from .dataset import RankedDataset
from .graph import (
    CausalGraph,
    CausalModel,
    CgTable,
    Cpt,
    estimate_cpt,
    topological_order,
)


def random_model(
    rng: np.random.Generator,
    n_profile: int = 3,
    edge_prob: float = 0.5,
    domain_size: int | Sequence[int] = 2,
    mu_range: tuple[float, float] = (0.5, 3.0),
    redlining: Iterable[str] = (),
    c_to_s: bool = True,
) -> CausalModel:
    """Random parameterized model over ``C``, ``Z0..Z{n-1}`` and ``S``.

    Profile nodes are ordered ``Z0 < Z1 < ...``; each forward edge (including
    from ``C`` and into ``S``) is present with ``edge_prob``.
    """
    names = [f"Z{k}" for k in range(n_profile)]
    order = ["C", *names]
    edges = []
    for i, a in enumerate(order):
        for b in order[i + 1:]:
            if rng.random() < edge_prob:
                edges.append((a, b))
        if a == "C":
            if c_to_s:
                edges.append(("C", "S"))
        elif rng.random() < edge_prob:
            edges.append((a, "S"))
    graph = CausalGraph.build("C", "S", edges, profile=names)
    sizes = [domain_size] * n_profile if isinstance(domain_size, int) else list(domain_size)
    domains = {"C": ("0", "1")}
    for name, k in zip(names, sizes):
        domains[name] = tuple(str(i) for i in range(k))
    cpts = {}
    for v in graph.discrete:
        pa = graph.parents(v)
        shape = tuple(len(domains[p]) for p in pa) + (len(domains[v]),)
        table = rng.dirichlet(np.ones(shape[-1]), size=shape[:-1]) if pa else rng.dirichlet(np.ones(shape[-1]))
        cpts[v] = Cpt(v, pa, table.reshape(shape))
    q = graph.q_nodes()
    shape = (2,) + tuple(len(domains[n]) for n in q)
    mu = rng.uniform(*mu_range, size=shape)
    if not c_to_s:
        mu[1] = mu[0]
    sigma = rng.uniform(0.2, 1.0, size=shape)
    cg = CgTable(q, mu, sigma, None, 5)
    return CausalModel(graph, domains, "1", cpts, cg, frozenset(redlining))


def sample_model(model: CausalModel, n: int, rng: np.random.Generator) -> tuple[dict[str, np.ndarray], np.ndarray]:
    """Ancestral sample of ``n`` rows: integer codes per discrete node plus scores."""
    g = model.graph
    codes: dict[str, np.ndarray] = {}
    for v in topological_order(g):
        if v == g.score:
            continue
        table = model.cpts[v].table
        pa = model.cpts[v].parent_order
        probs = table[tuple(codes[p] for p in pa)] if pa else np.broadcast_to(table, (n, table.shape[-1]))
        u = rng.random(n)[:, None]
        codes[v] = (u > np.cumsum(probs, axis=1)).sum(axis=1).clip(max=table.shape[-1] - 1)
    idx = (codes[g.protected],) + tuple(codes[q] for q in model.q_nodes)
    s = rng.normal(model.cg.mu[idx], model.cg.sigma[idx])
    return codes, s


def dataset_from_codes(
    model: CausalModel, codes: Mapping[str, np.ndarray], scores: np.ndarray, redlining: Iterable[str] = ()
) -> RankedDataset:
    """Rank individuals by descending score (ties by index) and wrap them as a dataset."""
    names = tuple(sorted(codes))
    rows = tuple(
        tuple(model.domains[a][int(codes[a][k])] for a in names) for k in range(len(scores))
    )
    order = np.lexsort((np.arange(len(scores)), -np.asarray(scores)))
    rank = np.empty(len(scores), dtype=int)
    rank[order] = np.arange(1, len(scores) + 1)
    return RankedDataset(
        attribute_names=names,
        attribute_domains={a: model.domains[a] for a in names},
        rows=rows,
        rank=tuple(rank),
        protected_attribute=model.protected,
        favorable_value=model.favorable,
        redlining_attributes=frozenset(redlining),
    )


def weighted_sum_dataset(
    n: int,
    rng: np.random.Generator,
    weights: Mapping[str, float],
    c_weight: float = 0.0,
    c_dependence: Mapping[str, float] | None = None,
    domain_size: int = 3,
    noise: float = 0.25,
    redlining: Iterable[str] = (),
) -> tuple[RankedDataset, CausalGraph, np.ndarray]:
    """Population ranked by ``c_weight * C + sum_k w_k * Z_k + noise``.

    ``C`` is a fair coin with favorable value ``"1"``. Each profile
    attribute takes values ``0..domain_size-1``; with ``c_dependence[z] = d``
    its distribution is tilted toward larger values for ``C = 1`` (``d = 0``
    makes it independent of ``C``). Returns the dataset, the generating
    graph and the latent ranker score.
    """
    dep = dict(c_dependence or {})
    names = sorted(weights)
    c = (rng.random(n) < 0.5).astype(np.int64)
    codes = {"C": c}
    edges: list[tuple[str, str]] = []
    base = np.ones(domain_size) / domain_size
    tilt = np.linspace(-1.0, 1.0, domain_size)
    for z in names:
        d = dep.get(z, 0.0)
        p1 = np.clip(base + d * tilt / domain_size, 1e-6, None)
        p0 = np.clip(base - d * tilt / domain_size, 1e-6, None)
        probs = np.where(c[:, None] == 1, p1 / p1.sum(), p0 / p0.sum())
        u = rng.random(n)[:, None]
        codes[z] = (u > np.cumsum(probs, axis=1)).sum(axis=1).clip(max=domain_size - 1)
        if d != 0:
            edges.append(("C", z))
        if weights[z] != 0:
            edges.append((z, "score"))
    if c_weight != 0:
        edges.append(("C", "score"))
    latent = c_weight * c + sum(weights[z] * codes[z] for z in names) + rng.normal(0.0, noise, n)
    domains = {"C": ("0", "1"), **{z: tuple(str(i) for i in range(domain_size)) for z in names}}
    graph = CausalGraph.build("C", "score", edges, profile=names)
    attrs = ("C", *names)
    rows = tuple(tuple(domains[a][int(codes[a][k])] for a in attrs) for k in range(n))
    order = np.lexsort((np.arange(n), -latent))
    rank = np.empty(n, dtype=int)
    rank[order] = np.arange(1, n + 1)
    data = RankedDataset(
        attribute_names=attrs,
        attribute_domains={a: domains[a] for a in attrs},
        rows=rows,
        rank=tuple(rank),
        protected_attribute="C",
        favorable_value="1",
        redlining_attributes=frozenset(redlining),
    )
    return data, graph, latent


# Stand-ins for two weighted-sum benchmark rankers: D ignores C and C is
# independent of the profile; D1 adds C to the sum and makes Z1 a
# C-dependent redlining attribute.
ANALOGUE_WEIGHTS = {"Z1": 1.0, "Z2": 1.0}
# Mean score to use when fitting BT scores to these rankings; close to the
# score spread at N = 500, so relative effects are not inflated by the gauge.
ANALOGUE_ANCHOR = 25.0


def d_analogue(seed: int = 0, n: int = 500) -> tuple[RankedDataset, CausalGraph, np.ndarray]:
    data, graph, latent = weighted_sum_dataset(n, np.random.default_rng(seed), ANALOGUE_WEIGHTS)
    # Keep C -> score so the direct effect is estimated rather than assumed zero.
    graph = CausalGraph.build("C", "score", [*graph.edges, ("C", "score")], profile=graph.profile)
    return data, graph, latent


def d1_analogue(seed: int = 0, n: int = 500) -> tuple[RankedDataset, CausalGraph, np.ndarray]:
    return weighted_sum_dataset(
        n,
        np.random.default_rng(seed),
        ANALOGUE_WEIGHTS,
        c_weight=1.5,
        c_dependence={"Z1": 0.5},
        redlining=("Z1",),
    )


FIGURE2_EDGES = (
    ("C", "Z"), ("C", "score"), ("Z", "score"),
    ("E", "I"), ("E", "score"), ("I", "score"),
)


def figure2_graph() -> CausalGraph:
    """Hiring example: race ``C``, zip code ``Z``, education ``E``, interview ``I``."""
    return CausalGraph.build("C", "score", FIGURE2_EDGES, profile=("E", "I", "Z"))


def figure2_model(sigma: float = 0.5) -> CausalModel:
    """Binary-valued model on :func:`figure2_graph` with clearly dependent edges."""
    g = figure2_graph()
    domains = {v: ("0", "1") for v in ("C", "E", "I", "Z")}
    cpts = {
        "C": Cpt("C", (), np.array([0.5, 0.5])),
        "Z": Cpt("Z", ("C",), np.array([[0.7, 0.3], [0.2, 0.8]])),
        "E": Cpt("E", (), np.array([0.5, 0.5])),
        "I": Cpt("I", ("E",), np.array([[0.75, 0.25], [0.25, 0.75]])),
    }
    # Q order is (E, I, Z).
    c, e, i, z = np.meshgrid(*(np.arange(2),) * 4, indexing="ij")
    mu = 1.0 + 1.0 * c + 1.2 * e + 1.0 * i + 0.8 * z
    cg = CgTable(g.q_nodes(), mu, np.full(mu.shape, sigma), None, 5)
    return CausalModel(g, domains, "1", cpts, cg, frozenset({"Z"}))


# Four-attribute hiring toy: race C (1 favorable), zip code Z, interview I, education E.
TOY_IDS = tuple(f"u{k}" for k in range(1, 11))
TOY_COLUMNS = {
    "C": (1, 1, 1, 1, 1, 0, 0, 0, 0, 0),
    "Z": (1, 1, 1, 1, 1, 1, 0, 0, 1, 0),
    "I": (1, 2, 2, 4, 2, 5, 4, 4, 3, 2),
    "E": (1, 2, 1, 2, 4, 5, 4, 5, 3, 5),
}
TOY_DOMAINS = {"C": ("0", "1"), "Z": ("0", "1"), "I": tuple("12345"), "E": tuple("12345")}
TOY_BONUS = 2.0


def toy_scores(ranker: int) -> np.ndarray:
    """Ranker 1 scores ``E + I``; ranker 2 adds a bonus of 2 for ``C = 1``."""
    if ranker not in (1, 2):
        raise ValueError("ranker must be 1 or 2")
    s = np.add(TOY_COLUMNS["E"], TOY_COLUMNS["I"]).astype(float)
    if ranker == 2:
        s = s + TOY_BONUS * np.asarray(TOY_COLUMNS["C"])
    return s


def toy_dataset(ranker: int) -> RankedDataset:
    """The ten candidates ranked by descending ranker score, ties by id."""
    s = toy_scores(ranker)
    order = np.lexsort((np.arange(10), -s))
    rank = np.empty(10, dtype=int)
    rank[order] = np.arange(1, 11)
    attrs = ("C", "Z", "I", "E")
    rows = tuple(tuple(str(TOY_COLUMNS[a][k]) for a in attrs) for k in range(10))
    return RankedDataset(
        attribute_names=attrs,
        attribute_domains=dict(TOY_DOMAINS),
        rows=rows,
        rank=tuple(rank),
        protected_attribute="C",
        favorable_value="1",
        redlining_attributes=frozenset({"Z"}),
        ids=TOY_IDS,
        id_column="id",
    )


def toy_model(ranker: int, smoothing: float = 1.0) -> CausalModel:
    """Figure-2 graph with CPTs estimated from the toy rows and the ranker's own score function as CG means.

    Ten rows never share a ``(c, q)`` profile across groups, so the CG table
    cannot be estimated; the means are the ranker's exact score in every
    stratum, which is what an infinite sample from that ranker would give.
    """
    data = toy_dataset(ranker)
    g = figure2_graph()
    domains = {v: TOY_DOMAINS[v] for v in g.discrete}
    cpts = {v: estimate_cpt(data, g, v, domains, smoothing) for v in g.discrete}
    c, e, i, _ = np.meshgrid(
        np.arange(2), np.arange(1, 6), np.arange(1, 6), np.arange(2), indexing="ij"
    )
    mu = (e + i).astype(float)
    if ranker == 2:
        mu = mu + TOY_BONUS * c
    cg = CgTable(g.q_nodes(), mu, np.ones(mu.shape), None, 5)
    return CausalModel(g, domains, "1", cpts, cg, frozenset({"Z"}))
