"""Prefix statistical-parity measures and distances between rankings.

Parity measures look at the share ``p_i`` of protected (unfavorable-group)
individuals in each top-``i`` prefix, for ``i`` in a list of cut points,
against the overall share ``p``:

* rND: ``|p_i - p|``
* rRD: ``|p_i / (1 - p_i) - p / (1 - p)|`` (a term with a zero denominator counts as 0)
* rKL: ``KL((p_i, 1 - p_i) || (p, 1 - p))`` in nats

Each term is weighted by ``1 / log2(i)`` and the sum divided by a normalizer
``Z``: the same sum on the ranking with the protected group entirely last.
Rankings that favor the protected group strongly can exceed that value, so
results are clipped to ``[0, 1]``; 0 is perfect parity.
"""

from __future__ import annotations

import logging
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from .dataset import RankedDataset
from .errors import ValidationError

log = logging.getLogger(__name__)

MEASURES = ("rND", "rRD", "rKL")


@dataclass(frozen=True)
class ParityReport:
    cut_points: tuple[int, ...]
    rND: float
    rRD: float
    rKL: float
    normalizer_Z: dict[str, float]
    protected_share: float

    def to_dict(self) -> dict:
        return {
            "cut_points": list(self.cut_points),
            "rND": self.rND,
            "rRD": self.rRD,
            "rKL": self.rKL,
            "normalizer_Z": dict(self.normalizer_Z),
            "protected_share": self.protected_share,
        }


def default_cut_points(n: int, step: int = 10) -> list[int]:
    """``step, 2*step, ...`` up to ``n``; ``n`` itself is always last.

    Prefix 1 is skipped because its discount ``1 / log2(1)`` is undefined.
    """
    if step < 1:
        raise ValidationError("step must be positive")
    cuts = [c for c in range(step, n + 1, step) if c >= 2]
    if not cuts or cuts[-1] != n:
        cuts.append(n)
    return cuts


def _odds(p: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    ok = p < 1.0
    return np.where(ok, p / np.where(ok, 1.0 - p, 1.0), 0.0), ok


def _kl(pi: np.ndarray, p: float) -> np.ndarray:
    out = np.zeros_like(pi)
    for share, ref in ((pi, p), (1.0 - pi, 1.0 - p)):
        pos = share > 0
        out[pos] += share[pos] * np.log(share[pos] / ref)
    return out


def _raw_sums(protected_sorted: np.ndarray, cuts: np.ndarray, p: float) -> dict[str, float]:
    counts = np.cumsum(protected_sorted)[cuts - 1]
    pi = counts / cuts
    disc = 1.0 / np.log2(cuts.astype(float))
    odds_i, ok_i = _odds(pi)
    odds_p = p / (1.0 - p)
    rd = np.where(ok_i, np.abs(odds_i - odds_p), 0.0)
    return {
        "rND": float(np.sum(disc * np.abs(pi - p))),
        "rRD": float(np.sum(disc * rd)),
        "rKL": float(np.sum(disc * _kl(pi, p))),
    }


def parity_from_membership(protected_in_order: Sequence[bool], cut_points: Sequence[int] | None = None) -> ParityReport:
    """Parity measures for a ranking given as protected flags from top to bottom."""
    flags = np.asarray(protected_in_order, dtype=float)
    n = flags.size
    cuts = default_cut_points(n) if cut_points is None else list(cut_points)
    if any(c < 2 or c > n for c in cuts):
        # log2(1) = 0 would make the first discount infinite.
        raise ValidationError(f"cut points must lie in [2, {n}], got {cuts}")
    cuts_arr = np.asarray(sorted({int(c) for c in cuts}))
    n_prot = int(flags.sum())
    p = n_prot / n
    if n_prot in (0, n):
        log.warning("protected share is %s; parity measures defined as 0", p)
        zero = {m: 0.0 for m in MEASURES}
        return ParityReport(tuple(cuts_arr), 0.0, 0.0, 0.0, zero, p)
    raw = _raw_sums(flags, cuts_arr, p)
    z = _raw_sums(np.r_[np.zeros(n - n_prot), np.ones(n_prot)], cuts_arr, p)
    vals = {m: (min(max(raw[m] / z[m], 0.0), 1.0) if z[m] > 0 else 0.0) for m in MEASURES}
    return ParityReport(tuple(int(c) for c in cuts_arr), vals["rND"], vals["rRD"], vals["rKL"], z, p)


def parity_measures(data: RankedDataset, cut_points: Sequence[int] | None = None) -> ParityReport:
    """rND, rRD and rKL of ``data``'s ranking; the unfavorable group is the protected one."""
    c = np.asarray(data.column(data.protected_attribute))
    flags = c[data.order()] == data.unfavorable_value
    return parity_from_membership(flags, cut_points)


def _check_pair(r1, r2) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(r1, dtype=np.int64)
    b = np.asarray(r2, dtype=np.int64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValidationError(f"rankings have different lengths: {a.shape} vs {b.shape}")
    return a, b


def _count_inversions(seq: list[int]) -> int:
    """Bottom-up merge sort that counts inversions; O(N log N)."""
    a = list(seq)
    n = len(a)
    buf = [0] * n
    inv = 0
    width = 1
    while width < n:
        for lo in range(0, n, 2 * width):
            mid = min(lo + width, n)
            hi = min(lo + 2 * width, n)
            i, j, k = lo, mid, lo
            while i < mid and j < hi:
                if a[i] <= a[j]:
                    buf[k] = a[i]
                    i += 1
                else:
                    buf[k] = a[j]
                    inv += mid - i
                    j += 1
                k += 1
            buf[k:k + mid - i] = a[i:mid]
            k += mid - i
            buf[k:k + hi - j] = a[j:hi]
        a, buf = buf, a
        width *= 2
    return inv


def kendall_tau_distance(r1, r2) -> int:
    """Number of pairs the two rankings order differently.

    ``r1[k]`` and ``r2[k]`` are the positions of item ``k``.

    >>> kendall_tau_distance([1, 2, 3], [3, 2, 1])
    3
    """
    a, b = _check_pair(r1, r2)
    order = np.argsort(a, kind="stable")
    return _count_inversions(b[order].tolist())


def spearman_footrule(r1, r2) -> int:
    """Total displacement ``sum_k |r1[k] - r2[k]|``.

    >>> spearman_footrule([1, 2, 3], [3, 2, 1])
    4
    """
    a, b = _check_pair(r1, r2)
    return int(np.abs(a - b).sum())
