"""Command-line front end.

Exit codes: 0 success, 1 invalid input or usage, 2 unidentifiable
path-specific effect, 3 numeric non-convergence. Reports are JSON with
sorted keys and floats rounded to 12 significant digits; each one embeds
the run configuration.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
from collections.abc import Sequence
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .btscore import BTFitConfig, fit_scores
from .dataset import (
    CsvRoles,
    RankedDataset,
    ScoreAssignment,
    load_ranked_csv,
    write_ranked_csv,
)
from .effects import fdetect
from .errors import (
    ConvergenceError,
    FairRankError,
    UnidentifiableError,
    ValidationError,
)
from .fairmetrics import (
    default_cut_points,
    kendall_tau_distance,
    parity_measures,
    spearman_footrule,
)
from .graph import CausalGraph, estimate_parameters, graph_from_dict, save_graph
from .repair import frank_model
from .structure import learn_structure
from .threshold import CutoffContext, threshold_report

log = logging.getLogger("fairrank")

ENV_CONFIG = "FAIRRANK_CONFIG"
EXIT_OK, EXIT_INVALID, EXIT_UNIDENTIFIABLE, EXIT_NONCONVERGENCE = 0, 1, 2, 3


@dataclass(frozen=True)
class RunConfig:
    """Every setting that can influence a result; recorded in each report."""

    command: str
    paths: dict = field(default_factory=dict)
    lam: float = 0.5
    anchor: float = 1.0
    max_iters: int = 10_000
    tol: float = 1e-8
    alpha: float = 0.05
    max_cond: int = 3
    tau: float = 0.05
    theta: float | None = None
    eps: float = 1e-6
    smoothing: float = 1.0
    min_count: int = 5
    seed: int = 0
    verbosity: int = 0
    options: dict = field(default_factory=dict)

    def validate(self) -> None:
        checks = [
            (self.lam > 0, "--lambda must be positive"),
            (math.isfinite(self.anchor), "--anchor must be finite"),
            (self.max_iters >= 1, "--max-iters must be positive"),
            (self.tol > 0, "--tol must be positive"),
            (0 < self.alpha < 1, "--alpha must lie in (0, 1)"),
            (self.max_cond >= 0, "--max-cond must be nonnegative"),
            (self.tau >= 0, "--tau must be nonnegative"),
            (self.eps > 0, "--eps must be positive"),
            (self.smoothing >= 0, "--smoothing must be nonnegative"),
            (self.min_count >= 0, "--min-count must be nonnegative"),
            (self.theta is None or math.isfinite(self.theta), "--theta must be finite"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ValidationError(msg)

    def bt(self) -> BTFitConfig:
        return BTFitConfig(
            lam=self.lam,
            max_iters=self.max_iters,
            tol=self.tol,
            gauge_anchor=self.anchor,
            method=self.options.get("method", "newton"),
        )


# -- JSON --------------------------------------------------------------------


def _canon(obj):
    if isinstance(obj, dict):
        return {str(k): _canon(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_canon(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _canon(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return float(f"{x:.12g}") if math.isfinite(x) else None
    if isinstance(obj, Path):
        return str(obj)
    return obj


def dumps_report(obj) -> str:
    return json.dumps(_canon(obj), sort_keys=True, indent=2, allow_nan=False) + "\n"


def _emit(obj, path: str | None) -> None:
    text = dumps_report(obj)
    if path:
        Path(path).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


# -- argument parsing ----------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=0, help="recorded in every report (default 0)")
    p.add_argument("--config", help=f"JSON file of option defaults (or set ${ENV_CONFIG})")
    p.add_argument("-v", "--verbose", action="count", default=0)


def _columns(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("columns")
    g.add_argument("--rank-col", default="rank")
    g.add_argument("--protected", help="protected attribute column (default: from --graph)")
    g.add_argument("--favorable", help="favorable protected value (default: from --graph)")
    g.add_argument("--redlining", help="comma-separated redlining columns (default: from --graph)")
    g.add_argument("--id-col")
    g.add_argument("--attributes", help="comma-separated attribute columns (default: all others)")


def _bt(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("Bradley-Terry")
    g.add_argument("--lambda", dest="lam", type=float, default=0.5)
    g.add_argument("--anchor", type=float, default=1.0, help="mean score after gauge fixing")
    g.add_argument("--max-iters", type=int, default=10_000)
    g.add_argument("--tol", type=float, default=1e-8)
    g.add_argument("--method", choices=("newton", "gd"), default="newton")
    g.add_argument("--refit", action="store_true", help="ignore an existing __score column")


def _params(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("estimation")
    g.add_argument("--smoothing", type=float, default=1.0, help="Laplace pseudo-count for CPTs")
    g.add_argument("--min-count", type=int, default=5, help="per-stratum count before backoff")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="fairrank", description="Causal discrimination detection and removal for ranked data.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    p = sub.add_parser("btfit", help="fit Bradley-Terry scores to a ranking")
    p.add_argument("--data")
    p.add_argument("--out", help="scored CSV (adds a __score column)")
    p.add_argument("--diagnostics", help="JSON sidecar (default: <out> with .json suffix)")
    _columns(p)
    _bt(p)
    _common(p)

    p = sub.add_parser("learn", help="learn a causal graph with the PC algorithm")
    p.add_argument("--data")
    p.add_argument("--out", help="graph JSON")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--max-cond", type=int, default=3)
    p.add_argument("--no-params", action="store_true", help="write the structure only")
    _columns(p)
    _bt(p)
    _params(p)
    _common(p)

    p = sub.add_parser("fdetect", help="detect direct and indirect discrimination")
    p.add_argument("--data")
    p.add_argument("--graph")
    p.add_argument("--tau", type=float, default=0.05)
    p.add_argument("--out", help="report JSON (default: stdout)")
    _columns(p)
    _bt(p)
    _params(p)
    _common(p)

    p = sub.add_parser("frank", help="remove discrimination and re-rank")
    p.add_argument("--data")
    p.add_argument("--graph")
    p.add_argument("--tau", type=float, default=0.05)
    p.add_argument("--eps", type=float, default=1e-6, help="lower bound on the repaired E[S|c+]")
    p.add_argument("--out", help="repaired CSV")
    p.add_argument("--report", help="report JSON (default: stdout)")
    _columns(p)
    _bt(p)
    _params(p)
    _common(p)

    p = sub.add_parser("threshold", help="binary-decision effects and rank budgets for a cut-off")
    p.add_argument("--graph")
    p.add_argument("--data", help="estimate parameters from this data instead of the graph file")
    p.add_argument("--theta", type=float)
    p.add_argument("--tau", type=float, default=0.05)
    p.add_argument("--sigma", type=float, help="common standard deviation (default: RMS of the CG table)")
    p.add_argument("--max-score", type=float, help="needed for the indirect budget (default: from --data)")
    p.add_argument("--no-check", action="store_true", help="do not enforce theta >= mu+ >= mu-")
    p.add_argument("--out")
    _columns(p)
    _bt(p)
    _params(p)
    _common(p)

    p = sub.add_parser("measure", help="Kendall tau distance and Spearman footrule of two rankings")
    p.add_argument("--a")
    p.add_argument("--b")
    p.add_argument("--rank-col", default="rank")
    p.add_argument("--id-col", help="match rows by this column instead of by position")
    p.add_argument("--out")
    _common(p)

    p = sub.add_parser("parity", help="rND, rRD and rKL statistical-parity measures")
    p.add_argument("--data")
    p.add_argument("--steps", type=int, default=10, help="prefix step between cut points")
    p.add_argument("--out")
    _columns(p)
    _common(p)

    p = sub.add_parser("pipeline", help="btfit, learn (unless --graph), fdetect and frank in one go")
    p.add_argument("--data")
    p.add_argument("--graph")
    p.add_argument("--tau", type=float, default=0.05)
    p.add_argument("--eps", type=float, default=1e-6)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--max-cond", type=int, default=3)
    p.add_argument("--out", help="repaired CSV")
    p.add_argument("--report")
    _columns(p)
    _bt(p)
    _params(p)
    _common(p)
    return parser


def _config_path(argv: Sequence[str]) -> str | None:
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    return known.config or os.environ.get(ENV_CONFIG) or None


def _apply_config(parser: argparse.ArgumentParser, path: str) -> None:
    try:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ValidationError(f"cannot read config {path}: {exc}") from None
    if not isinstance(obj, dict):
        raise ValidationError("config must be a JSON object")
    subparsers = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    for name, sp in subparsers.choices.items():
        dests = {a.dest for a in sp._actions}
        shared = {k: v for k, v in obj.items() if not isinstance(v, dict) and k in dests}
        own = obj.get(name, {})
        if not isinstance(own, dict):
            raise ValidationError(f"config section {name!r} must be an object")
        unknown = set(own) - dests
        if unknown:
            raise ValidationError(f"config section {name!r}: unknown keys {sorted(unknown)}")
        sp.set_defaults(**shared, **own)


_NUMERIC = ("lam", "anchor", "max_iters", "tol", "alpha", "max_cond", "tau", "theta", "eps", "smoothing", "min_count")
_PATHS = ("data", "graph", "out", "report", "diagnostics", "a", "b", "config")


def run_config(ns: argparse.Namespace) -> RunConfig:
    values = vars(ns)
    numeric = {k: values[k] for k in _NUMERIC if values.get(k) is not None}
    paths = {k: values[k] for k in _PATHS if values.get(k) is not None}
    skip = set(_NUMERIC) | set(_PATHS) | {"command", "seed", "verbose", "func"}
    options = {k: v for k, v in values.items() if k not in skip}
    cfg = RunConfig(
        command=ns.command,
        paths=paths,
        seed=ns.seed,
        verbosity=ns.verbose,
        options=options,
        **numeric,
    )
    cfg.validate()
    return cfg


# -- helpers ---------------------------------------------------------------


def _require(ns: argparse.Namespace, *names: str) -> None:
    missing = [n for n in names if getattr(ns, n, None) is None]
    if missing:
        raise ValidationError("missing required option(s): " + ", ".join("--" + m.replace("_", "-") for m in missing))


def _load_graph_file(path: str) -> tuple[CausalGraph, object, dict]:
    try:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: malformed JSON: {exc}") from None
    graph, model = graph_from_dict(obj)
    meta = {n["name"]: n for n in obj["nodes"]}
    return graph, model, meta


def _split(value: str | None) -> list[str] | None:
    if value is None:
        return None
    return [v.strip() for v in value.split(",") if v.strip()]


def _roles(ns: argparse.Namespace, graph: CausalGraph | None = None, meta: dict | None = None) -> CsvRoles:
    protected = ns.protected
    favorable = ns.favorable
    redlining = _split(ns.redlining)
    if graph is not None:
        protected = protected or graph.protected
        if favorable is None and meta and "favorable" in meta.get(graph.protected, {}):
            favorable = str(meta[graph.protected]["favorable"])
        if redlining is None and meta:
            redlining = sorted(n for n, m in meta.items() if m.get("redlining"))
    if protected is None or favorable is None:
        raise ValidationError("--protected and --favorable are required (or a graph that declares them)")
    return CsvRoles(
        rank_col=ns.rank_col,
        protected=protected,
        favorable=favorable,
        redlining=redlining or [],
        id_col=ns.id_col,
        attributes=_split(ns.attributes),
    )


def _scores(data: RankedDataset, existing: np.ndarray | None, cfg: RunConfig, refit: bool):
    if existing is not None and not refit:
        log.info("using the __score column of the input")
        return ScoreAssignment(existing, anchor=None), None
    scores, diag = fit_scores(data, cfg.bt())
    log.info("Bradley-Terry fit: %d iterations, |grad| = %.3g", diag.iterations, diag.gradient_norm)
    return scores, diag


def _diag_dict(diag) -> dict | None:
    if diag is None:
        return None
    return {
        "final_loss": diag.final_loss,
        "iterations": diag.iterations,
        "gradient_norm": diag.gradient_norm,
        "converged": diag.converged,
    }


# -- subcommands -------------------------------------------------------------


def cmd_btfit(ns, cfg: RunConfig) -> int:
    _require(ns, "data", "out")
    data = load_ranked_csv(ns.data, _roles(ns))
    scores, diag = fit_scores(data, cfg.bt())
    write_ranked_csv(data, ns.out, scores=scores.scores)
    sidecar = ns.diagnostics or str(Path(ns.out).with_suffix(".json"))
    _emit(
        {
            "config": asdict(cfg),
            "diagnostics": _diag_dict(diag),
            "gauge": {"anchor": scores.anchor, "shift": scores.shift, "regularization": scores.regularization},
            "n": data.n,
        },
        sidecar,
    )
    return EXIT_OK


def cmd_learn(ns, cfg: RunConfig) -> int:
    _require(ns, "data", "out")
    data, existing = load_ranked_csv(ns.data, _roles(ns), with_scores=True)
    scores, _ = _scores(data, existing, cfg, ns.refit)
    graph = learn_structure(data, scores, cfg.alpha, cfg.max_cond)
    model = None if ns.no_params else estimate_parameters(data, scores, graph, cfg.smoothing, cfg.min_count)
    save_graph(ns.out, graph, model)
    return EXIT_OK


def _fit_model(ns, cfg: RunConfig):
    graph, _, meta = _load_graph_file(ns.graph)
    data, existing = load_ranked_csv(ns.data, _roles(ns, graph, meta), with_scores=True)
    scores, diag = _scores(data, existing, cfg, ns.refit)
    model = estimate_parameters(data, scores, graph, cfg.smoothing, cfg.min_count)
    return data, scores, model, diag


def _model_summary(model) -> dict:
    return {
        "edges": [list(e) for e in model.graph.edges],
        "protected": model.protected,
        "favorable": model.favorable,
        "redlining": sorted(model.redlining),
        "q_nodes": list(model.q_nodes),
    }


def cmd_fdetect(ns, cfg: RunConfig) -> int:
    _require(ns, "data", "graph")
    data, _, model, diag = _fit_model(ns, cfg)
    report = fdetect(model, cfg.tau)
    _emit(
        {
            "config": asdict(cfg),
            "effects": report.to_dict(),
            "bt_diagnostics": _diag_dict(diag),
            "model": _model_summary(model),
            "n": data.n,
        },
        ns.out,
    )
    return EXIT_OK


def _write_repaired(data: RankedDataset, result, path: str) -> None:
    r = result.ranking
    out = data.with_rank(r.new_rank)
    old_scores = np.array([p.old_score for p in r.provenance])
    write_ranked_csv(
        out,
        path,
        scores=r.new_scores,
        extra_columns={"__old_rank": list(data.rank), "__old_score": old_scores},
    )


def _frank_report(cfg: RunConfig, data: RankedDataset, result, diag, extra: dict | None = None) -> dict:
    r = result.ranking
    body = {
        "config": asdict(cfg),
        "changed": result.changed,
        "before": result.before.to_dict(),
        "after": result.after.to_dict(),
        "plan": result.plan.to_dict() if result.plan is not None else None,
        "distances": {
            "kendall_tau": kendall_tau_distance(data.rank, r.new_rank),
            "spearman_footrule": spearman_footrule(data.rank, r.new_rank),
        },
        "bt_diagnostics": _diag_dict(diag),
        "n": data.n,
    }
    body.update(extra or {})
    return body


def cmd_frank(ns, cfg: RunConfig) -> int:
    _require(ns, "data", "graph", "out")
    data, scores, model, diag = _fit_model(ns, cfg)
    result = frank_model(data, scores, model, cfg.tau, eps=cfg.eps)
    _write_repaired(data, result, ns.out)
    _emit(_frank_report(cfg, data, result, diag, {"model": _model_summary(model)}), ns.report)
    return EXIT_OK


def cmd_threshold(ns, cfg: RunConfig) -> int:
    _require(ns, "graph", "theta")
    graph, model, meta = _load_graph_file(ns.graph)
    max_score = ns.max_score
    if ns.data is not None:
        data, existing = load_ranked_csv(ns.data, _roles(ns, graph, meta), with_scores=True)
        scores, _ = _scores(data, existing, cfg, ns.refit)
        model = estimate_parameters(data, scores, graph, cfg.smoothing, cfg.min_count)
        if max_score is None:
            max_score = float(np.max(scores.scores))
    if model is None:
        raise ValidationError("the graph file has no parameters; pass --data to estimate them")
    ctx = CutoffContext.from_model(model, ns.theta, cfg.tau, ns.sigma, max_score, check=not ns.no_check)
    _emit({"config": asdict(cfg), "threshold": threshold_report(ctx)}, ns.out)
    return EXIT_OK


def _read_ranks(path: str, rank_col: str, id_col: str | None) -> tuple[list[int], list[str] | None]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    if rows and rank_col not in rows[0]:
        raise ValidationError(f"{path}: no column {rank_col!r}")
    if id_col is not None and rows and id_col not in rows[0]:
        raise ValidationError(f"{path}: no column {id_col!r}")
    try:
        ranks = [int(float(r[rank_col])) for r in rows]
    except ValueError:
        raise ValidationError(f"{path}: non-integer rank") from None
    if sorted(ranks) != list(range(1, len(ranks) + 1)):
        raise ValidationError(f"{path}: ranks are not a permutation of 1..N")
    ids = [r[id_col] for r in rows] if id_col else None
    return ranks, ids


def cmd_measure(ns, cfg: RunConfig) -> int:
    _require(ns, "a", "b")
    ra, ida = _read_ranks(ns.a, ns.rank_col, ns.id_col)
    rb, idb = _read_ranks(ns.b, ns.rank_col, ns.id_col)
    if len(ra) != len(rb):
        raise ValidationError(f"rankings have different lengths: {len(ra)} vs {len(rb)}")
    if ida is not None:
        pos = {k: i for i, k in enumerate(idb)}
        if len(pos) != len(idb) or set(pos) != set(ida):
            raise ValidationError("id columns do not hold the same unique ids")
        rb = [rb[pos[k]] for k in ida]
    _emit(
        {
            "config": asdict(cfg),
            "n": len(ra),
            "kendall_tau": kendall_tau_distance(ra, rb),
            "spearman_footrule": spearman_footrule(ra, rb),
        },
        ns.out,
    )
    return EXIT_OK


def cmd_parity(ns, cfg: RunConfig) -> int:
    _require(ns, "data")
    data = load_ranked_csv(ns.data, _roles(ns))
    report = parity_measures(data, default_cut_points(data.n, ns.steps))
    _emit({"config": asdict(cfg), "parity": report.to_dict()}, ns.out)
    return EXIT_OK


def cmd_pipeline(ns, cfg: RunConfig) -> int:
    _require(ns, "data", "out")
    graph, meta = None, None
    if ns.graph is not None:
        graph, _, meta = _load_graph_file(ns.graph)
    data, existing = load_ranked_csv(ns.data, _roles(ns, graph, meta), with_scores=True)
    scores, diag = _scores(data, existing, cfg, ns.refit)
    learned = graph is None
    if learned:
        graph = learn_structure(data, scores, cfg.alpha, cfg.max_cond)
    model = estimate_parameters(data, scores, graph, cfg.smoothing, cfg.min_count)
    result = frank_model(data, scores, model, cfg.tau, eps=cfg.eps)
    _write_repaired(data, result, ns.out)
    extra = {"model": _model_summary(model), "graph_learned": learned}
    _emit(_frank_report(cfg, data, result, diag, extra), ns.report)
    return EXIT_OK


COMMANDS = {
    "btfit": cmd_btfit,
    "learn": cmd_learn,
    "fdetect": cmd_fdetect,
    "frank": cmd_frank,
    "threshold": cmd_threshold,
    "measure": cmd_measure,
    "parity": cmd_parity,
    "pipeline": cmd_pipeline,
}


def _origin(exc: BaseException) -> str:
    tb = exc.__traceback__
    name = "fairrank"
    while tb is not None:
        mod = tb.tb_frame.f_globals.get("__name__", "")
        if mod.startswith("fairrank"):
            name = mod
        tb = tb.tb_next
    return name


def run(argv: Sequence[str] | None = None) -> int:
    """Parse ``argv``, run one subcommand and return its exit code."""
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        cfg_path = _config_path(argv)
        if cfg_path:
            _apply_config(parser, cfg_path)
        ns = parser.parse_args(argv)
    except ValidationError as exc:
        print(f"error [{_origin(exc)}]: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except SystemExit as exc:
        return int(exc.code or 0)
    if ns.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_INVALID
    level = {0: logging.WARNING, 1: logging.INFO}.get(ns.verbose, logging.DEBUG)
    logging.basicConfig(level=level, format="%(levelname)s [%(name)s] %(message)s")
    try:
        cfg = run_config(ns)
        return COMMANDS[ns.command](ns, cfg)
    except UnidentifiableError as exc:
        print(f"error [{_origin(exc)}]: {exc}", file=sys.stderr)
        return EXIT_UNIDENTIFIABLE
    except ConvergenceError as exc:
        print(f"error [{_origin(exc)}]: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGENCE
    except (FairRankError, ValueError, OSError, KeyError) as exc:
        print(f"error [{_origin(exc)}]: {exc}", file=sys.stderr)
        return EXIT_INVALID


def main() -> None:
    sys.exit(run())
