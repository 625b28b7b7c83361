"""Ranked datasets: validated containers plus CSV ingest and export."""

from __future__ import annotations

import csv
import math
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ValidationError

SCORE_COLUMN = "__score"


@dataclass(frozen=True)
class RankedDataset:
    """Individuals with categorical profile attributes and a total-order ranking.

    ``rank[k]`` is the position of individual ``k``; position 1 is the top.
    Category values are plain strings with no ordinal meaning.
    """

    attribute_names: tuple[str, ...]
    attribute_domains: Mapping[str, tuple[str, ...]]
    rows: tuple[tuple[str, ...], ...]
    rank: tuple[int, ...]
    protected_attribute: str
    favorable_value: str
    redlining_attributes: frozenset[str] = frozenset()
    ids: tuple[str, ...] | None = None
    rank_column: str = "rank"
    id_column: str | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "attribute_names", tuple(self.attribute_names))
        object.__setattr__(
            self,
            "attribute_domains",
            {k: tuple(v) for k, v in self.attribute_domains.items()},
        )
        object.__setattr__(self, "rows", tuple(tuple(str(x) for x in r) for r in self.rows))
        object.__setattr__(self, "rank", tuple(int(r) for r in self.rank))
        object.__setattr__(self, "redlining_attributes", frozenset(self.redlining_attributes))
        if self.ids is not None:
            object.__setattr__(self, "ids", tuple(str(i) for i in self.ids))
        self._validate()

    def _validate(self) -> None:
        names = self.attribute_names
        if len(set(names)) != len(names):
            raise ValidationError(f"duplicate attribute names: {names}")
        if set(self.attribute_domains) != set(names):
            raise ValidationError("attribute_domains must cover exactly the attribute names")
        if self.protected_attribute not in names:
            raise ValidationError(f"unknown protected attribute {self.protected_attribute!r}")
        dom = self.attribute_domains[self.protected_attribute]
        if len(dom) != 2:
            raise ValidationError(
                f"protected attribute {self.protected_attribute!r} must have exactly two "
                f"values, got {list(dom)}"
            )
        if self.favorable_value not in dom:
            raise ValidationError(
                f"favorable value {self.favorable_value!r} not in domain {list(dom)}"
            )
        if self.protected_attribute in self.redlining_attributes:
            raise ValidationError("the protected attribute cannot be a redlining attribute")
        unknown = self.redlining_attributes - set(names)
        if unknown:
            raise ValidationError(f"unknown redlining attributes: {sorted(unknown)}")
        for d in self.attribute_domains.values():
            if len(set(d)) != len(d):
                raise ValidationError(f"duplicate values in domain {d}")
        n = len(self.rows)
        if len(self.rank) != n:
            raise ValidationError("rank length does not match the number of rows")
        if self.ids is not None and len(self.ids) != n:
            raise ValidationError("ids length does not match the number of rows")
        if sorted(self.rank) != list(range(1, n + 1)):
            raise ValidationError("rank values are not a permutation of 1..N")
        domsets = [set(self.attribute_domains[a]) for a in names]
        for k, row in enumerate(self.rows):
            if len(row) != len(names):
                raise ValidationError(f"row {k} has {len(row)} values, expected {len(names)}")
            for a, v, d in zip(names, row, domsets):
                if v not in d:
                    raise ValidationError(f"row {k}: value {v!r} not in domain of {a!r}")

    @property
    def n(self) -> int:
        return len(self.rows)

    @property
    def unfavorable_value(self) -> str:
        a, b = self.attribute_domains[self.protected_attribute]
        return b if a == self.favorable_value else a

    @property
    def non_protected(self) -> tuple[str, ...]:
        return tuple(a for a in self.attribute_names if a != self.protected_attribute)

    def column(self, name: str) -> tuple[str, ...]:
        j = self.attribute_names.index(name)
        return tuple(r[j] for r in self.rows)

    def codes(self, name: str) -> np.ndarray:
        """Integer codes of a column, indexing into its domain tuple."""
        lookup = {v: i for i, v in enumerate(self.attribute_domains[name])}
        return np.array([lookup[v] for v in self.column(name)], dtype=np.int64)

    def order(self) -> np.ndarray:
        """Row indices sorted from the top of the ranking to the bottom."""
        return np.argsort(np.asarray(self.rank), kind="stable")

    def with_rank(self, rank: Sequence[int]) -> RankedDataset:
        return RankedDataset(
            attribute_names=self.attribute_names,
            attribute_domains=self.attribute_domains,
            rows=self.rows,
            rank=tuple(rank),
            protected_attribute=self.protected_attribute,
            favorable_value=self.favorable_value,
            redlining_attributes=self.redlining_attributes,
            ids=self.ids,
            rank_column=self.rank_column,
            id_column=self.id_column,
        )


@dataclass(frozen=True)
class ScoreAssignment:
    """Continuous qualification score per individual, plus the gauge applied to it."""

    scores: np.ndarray
    shift: float = 0.0
    scale: float = 1.0
    regularization: float = 0.0
    anchor: float | None = None

    def __post_init__(self) -> None:
        s = np.asarray(self.scores, dtype=float).copy()
        s.setflags(write=False)
        object.__setattr__(self, "scores", s)
        if s.ndim != 1:
            raise ValidationError("scores must be one-dimensional")
        if not np.all(np.isfinite(s)):
            raise ValidationError("scores must be finite")
        if self.regularization < 0:
            raise ValidationError("regularization must be nonnegative")

    def __len__(self) -> int:
        return len(self.scores)


@dataclass
class CsvRoles:
    """Which CSV columns play which role; mirrors the CLI column flags."""

    rank_col: str = "rank"
    protected: str | None = None
    favorable: str | None = None
    redlining: Sequence[str] = ()
    id_col: str | None = None
    attributes: Sequence[str] | None = None
    domains: Mapping[str, Sequence[str]] = field(default_factory=dict)


def _read_rows(path: Path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValidationError(f"{path}: empty file, header row required") from None
        body = [r for r in reader if r]
    for k, r in enumerate(body):
        if len(r) != len(header):
            raise ValidationError(f"{path}: line {k + 2} has {len(r)} fields, expected {len(header)}")
    return header, body


def _parse_rank(values: Iterable[str], col: str) -> list[int]:
    out = []
    for v in values:
        try:
            f = float(v)
        except ValueError:
            raise ValidationError(f"rank column {col!r} holds a non-integer value {v!r}") from None
        if not f.is_integer():
            raise ValidationError(f"rank column {col!r} holds a non-integer value {v!r}")
        out.append(int(f))
    return out


def _sorted_labels(values: Iterable[str]) -> tuple[str, ...]:
    vals = set(values)
    try:
        return tuple(sorted(vals, key=lambda v: (float(v), v)))
    except ValueError:
        return tuple(sorted(vals))


def load_ranked_csv(
    path: str | Path, roles: CsvRoles, *, with_scores: bool = False
) -> RankedDataset | tuple[RankedDataset, np.ndarray | None]:
    """Read a ranked dataset from a UTF-8 CSV file with a header row.

    Every column other than the rank, id and ``__score`` columns is a
    categorical attribute unless ``roles.attributes`` restricts the set.
    Domains are the observed values (numeric-aware sort) unless declared in
    ``roles.domains``. With ``with_scores`` the ``__score`` column, if
    present, is returned alongside the dataset.
    """
    path = Path(path)
    header, body = _read_rows(path)
    if roles.protected is None or roles.favorable is None:
        raise ValidationError("protected attribute and favorable value are required")
    if roles.rank_col not in header:
        raise ValidationError(f"rank column {roles.rank_col!r} not found in {path}")
    if roles.id_col is not None and roles.id_col not in header:
        raise ValidationError(f"id column {roles.id_col!r} not found in {path}")
    reserved = {roles.rank_col, SCORE_COLUMN, roles.id_col}
    if roles.attributes is not None:
        attrs = list(roles.attributes)
        missing = [a for a in attrs if a not in header]
        if missing:
            raise ValidationError(f"unknown attribute columns: {missing}")
    else:
        attrs = [h for h in header if h not in reserved and not h.startswith("__")]
    if roles.protected not in attrs:
        raise ValidationError(f"unknown protected column {roles.protected!r}")
    for r in roles.redlining:
        if r not in attrs:
            raise ValidationError(f"unknown redlining column {r!r}")

    idx = {h: i for i, h in enumerate(header)}
    rows = [tuple(r[idx[a]].strip() for a in attrs) for r in body]
    domains: dict[str, tuple[str, ...]] = {}
    for j, a in enumerate(attrs):
        observed = [row[j] for row in rows]
        if a in roles.domains:
            declared = tuple(str(v) for v in roles.domains[a])
            extra = set(observed) - set(declared)
            if extra:
                raise ValidationError(f"column {a!r}: values {sorted(extra)} outside declared domain")
            domains[a] = declared
        else:
            domains[a] = _sorted_labels(observed)
    rank = _parse_rank((r[idx[roles.rank_col]] for r in body), roles.rank_col)
    ids = tuple(r[idx[roles.id_col]] for r in body) if roles.id_col else None
    data = RankedDataset(
        attribute_names=tuple(attrs),
        attribute_domains=domains,
        rows=tuple(rows),
        rank=tuple(rank),
        protected_attribute=roles.protected,
        favorable_value=str(roles.favorable),
        redlining_attributes=frozenset(roles.redlining),
        ids=ids,
        rank_column=roles.rank_col,
        id_column=roles.id_col,
    )
    if not with_scores:
        return data
    scores = None
    if SCORE_COLUMN in idx:
        try:
            scores = np.array([float(r[idx[SCORE_COLUMN]]) for r in body])
        except ValueError:
            raise ValidationError(f"non-numeric value in {SCORE_COLUMN}") from None
    return data, scores


def write_ranked_csv(
    data: RankedDataset,
    path: str | Path,
    *,
    scores: Sequence[float] | np.ndarray | None = None,
    extra_columns: Mapping[str, Sequence[object]] | None = None,
) -> None:
    """Write ``data`` as CSV; rows keep their original order.

    ``scores`` become a ``__score`` column written with ``repr`` precision so
    the values survive a round trip exactly.
    """
    header = []
    if data.id_column is not None and data.ids is not None:
        header.append(data.id_column)
    header += list(data.attribute_names)
    header.append(data.rank_column)
    extra = dict(extra_columns or {})
    header += list(extra)
    if scores is not None:
        if len(scores) != data.n:
            raise ValidationError("scores length does not match dataset")
        header.append(SCORE_COLUMN)
    with open(Path(path), "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for k in range(data.n):
            line: list[object] = []
            if data.id_column is not None and data.ids is not None:
                line.append(data.ids[k])
            line += list(data.rows[k])
            line.append(data.rank[k])
            line += [_fmt(col[k]) for col in extra.values()]
            if scores is not None:
                line.append(repr(float(scores[k])))
            w.writerow(line)


def _fmt(v: object) -> object:
    if isinstance(v, (float, np.floating)) and math.isfinite(float(v)):
        return repr(float(v))
    return v


def roles_for(data: RankedDataset) -> CsvRoles:
    """Roles that reload a file written by :func:`write_ranked_csv` into ``data``."""
    return CsvRoles(
        rank_col=data.rank_column,
        protected=data.protected_attribute,
        favorable=data.favorable_value,
        redlining=sorted(data.redlining_attributes),
        id_col=data.id_column,
        attributes=list(data.attribute_names),
        domains=dict(data.attribute_domains),
    )
