"""Position from pseudo-ranges: linearised least squares plus residual-based
selection among subsets of equations.

Squaring each range equation and subtracting the reference (index 1) one
gives a linear system in ``(x, y)``.  Every subset of at least three of these
equations is solved; the subset whose solution best explains its measured
ranges wins.
"""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, field
from typing import Optional

import numpy as np


class DegenerateGeometry(ValueError):
    """The anchors of a system do not constrain both coordinates."""


class FixStatus(str, enum.Enum):
    OK = "OK"
    INSUFFICIENT_RANGES = "INSUFFICIENT_RANGES"
    DEGENERATE = "DEGENERATE"


@dataclass(frozen=True)
class Anchor:
    x: float
    y: float
    index: int

    def __post_init__(self):
        if not (np.isfinite(self.x) and np.isfinite(self.y)):
            raise ValueError(f"anchor {self.index} has non-finite coordinates")

    @property
    def pos(self) -> np.ndarray:
        return np.array([self.x, self.y], dtype=float)


@dataclass(frozen=True)
class RangeSet:
    """Anchors with their measured ranges; anchor ``index == 1`` is the reference."""

    anchors: tuple
    ranges: tuple

    def __post_init__(self):
        object.__setattr__(self, "anchors", tuple(self.anchors))
        object.__setattr__(self, "ranges", tuple(float(r) for r in self.ranges))
        if len(self.anchors) != len(self.ranges):
            raise ValueError("anchors and ranges differ in length")
        if any(r < 0 for r in self.ranges):
            raise ValueError("ranges must be >= 0")
        idx = [a.index for a in self.anchors]
        if len(set(idx)) != len(idx):
            raise ValueError("duplicate anchor index")

    @classmethod
    def from_arrays(cls, positions, ranges) -> "RangeSet":
        """Anchors numbered 1..n in the given order."""
        pos = np.asarray(positions, dtype=float)
        return cls(tuple(Anchor(float(p[0]), float(p[1]), i + 1) for i, p in enumerate(pos)),
                   tuple(ranges))

    def __len__(self):
        return len(self.anchors)

    def _lookup(self, index):
        for a, r in zip(self.anchors, self.ranges):
            if a.index == index:
                return a, r
        raise KeyError(index)

    @property
    def reference(self) -> Anchor:
        try:
            return self._lookup(1)[0]
        except KeyError:
            raise ValueError("range set has no reference anchor (index 1)") from None

    @property
    def equation_indices(self) -> tuple:
        return tuple(sorted(a.index for a in self.anchors if a.index != 1))

    def anchor(self, index: int) -> Anchor:
        return self._lookup(index)[0]

    def range_of(self, index: int) -> float:
        return self._lookup(index)[1]


@dataclass(frozen=True)
class SubsetSolution:
    subset: tuple
    position: np.ndarray
    residual: float


@dataclass(frozen=True)
class PositionFix:
    position: np.ndarray
    chosen_subset: tuple
    residual: float
    status: FixStatus
    residual_subset_only: float = float("nan")
    candidates: list = field(default_factory=list, repr=False, compare=False)

    @property
    def ok(self) -> bool:
        return self.status is FixStatus.OK


def build_linear_system(rs: RangeSet, subset) -> tuple:
    """Rows ``(x_k - x_1, y_k - y_1)`` and right-hand side
    ``(x_k**2 + y_k**2 - x_1**2 - y_1**2 + D_1**2 - D_k**2) / 2`` for each k in ``subset``.
    """
    ref = rs.reference
    d1 = rs.range_of(1)
    ks = list(subset)
    if 1 in ks:
        raise ValueError("the reference anchor cannot appear as an equation")
    a = np.empty((len(ks), 2))
    b = np.empty(len(ks))
    for row, k in enumerate(ks):
        ak, dk = rs._lookup(k)
        a[row] = (ak.x - ref.x, ak.y - ref.y)
        b[row] = 0.5 * (ak.x ** 2 + ak.y ** 2 - ref.x ** 2 - ref.y ** 2 + d1 ** 2 - dk ** 2)
    return a, b


def solve_ls(a, b, rcond: float = 1e-6) -> np.ndarray:
    """Least-squares solution of ``a @ p = b`` via SVD.

    Raises
    ------
    DegenerateGeometry
        If the smallest singular value is below ``rcond`` times the largest.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.ndim != 2 or a.shape[0] < 2 or a.shape[1] != 2:
        raise ValueError(f"need an (m>=2, 2) system, got shape {a.shape}")
    u, s, vt = np.linalg.svd(a, full_matrices=False)
    if not s[0] > 0 or s[-1] < rcond * s[0]:
        raise DegenerateGeometry(f"singular values {s} below relative cutoff {rcond}")
    return vt.T @ ((u.T @ b) / s)


def _solve_batch(a, b, rcond):
    # Stacked version of solve_ls: (n, m, 2), (n, m) -> positions, ok mask.
    u, s, vt = np.linalg.svd(a, full_matrices=False)
    ok = (s[:, 0] > 0) & (s[:, -1] >= rcond * s[:, 0])
    s_safe = np.where(ok[:, None], s, 1.0)
    coef = np.einsum("nmk,nm->nk", u, b) / s_safe
    pos = np.einsum("nkj,nk->nj", vt, coef)
    return pos, ok


def residual(position, rs: RangeSet, subset, include_reference: bool = False) -> float:
    """Sum of squared mismatches between measured and implied ranges over ``subset``."""
    p = np.asarray(position, dtype=float)
    idx = list(subset)
    if include_reference and 1 not in idx:
        idx.append(1)
    total = 0.0
    for k in idx:
        ak, dk = rs._lookup(k)
        total += (dk - float(np.hypot(p[0] - ak.x, p[1] - ak.y))) ** 2
    return total


def candidate_subsets(n_equations: int, equation_indices=None) -> list:
    """All equation subsets considered for ``n_equations`` equations.

    Sizes 3..n; with exactly two equations the single full system is used.
    """
    eq = tuple(equation_indices) if equation_indices is not None else tuple(range(2, n_equations + 2))
    if n_equations < 2:
        return []
    if n_equations == 2:
        return [eq]
    return [c for size in range(3, n_equations + 1) for c in itertools.combinations(eq, size)]


def position_fix(rs: RangeSet, include_reference: bool = True, rcond: float = 1e-6,
                 keep_candidates: bool = False) -> PositionFix:
    """Pick the subset solution with the smallest residual.

    Ties on the residual go to the lexicographically smallest subset.
    """
    nan2 = np.array([np.nan, np.nan])
    if len(rs) < 3:
        return PositionFix(nan2, (), float("nan"), FixStatus.INSUFFICIENT_RANGES)
    eq = rs.equation_indices
    subsets = candidate_subsets(len(eq), eq)

    ref = rs.reference
    d1 = rs.range_of(1)
    pos_all = np.array([rs.anchor(k).pos for k in eq])
    rng_all = np.array([rs.range_of(k) for k in eq])
    a_all = pos_all - ref.pos
    b_all = 0.5 * (np.sum(pos_all ** 2, axis=1) - ref.x ** 2 - ref.y ** 2 + d1 ** 2 - rng_all ** 2)
    col = {k: i for i, k in enumerate(eq)}

    sols = []
    by_size = {}
    for s in subsets:
        by_size.setdefault(len(s), []).append(s)
    for size, group in by_size.items():
        rows = np.array([[col[k] for k in s] for s in group])
        pos, ok = _solve_batch(a_all[rows], b_all[rows], rcond)
        implied = np.linalg.norm(pos[:, None, :] - pos_all[rows], axis=2)
        res_sub = np.sum((rng_all[rows] - implied) ** 2, axis=1)
        res_ref = (d1 - np.linalg.norm(pos - ref.pos, axis=1)) ** 2
        for i, s in enumerate(group):
            if ok[i]:
                sols.append((float(res_sub[i] + res_ref[i]) if include_reference else float(res_sub[i]),
                             s, pos[i], float(res_sub[i])))
    if not sols:
        return PositionFix(nan2, (), float("nan"), FixStatus.DEGENERATE)
    best = min(sols, key=lambda t: (t[0], t[1]))
    cands = [SubsetSolution(s, p, r) for r, s, p, _ in sols] if keep_candidates else []
    return PositionFix(best[2].copy(), best[1], best[0], FixStatus.OK, best[3], cands)


def full_system_fix(rs: RangeSet, rcond: float = 1e-6) -> Optional[np.ndarray]:
    """Plain least squares over all equations, no subset selection."""
    if len(rs) < 3:
        return None
    a, b = build_linear_system(rs, rs.equation_indices)
    try:
        return solve_ls(a, b, rcond)
    except DegenerateGeometry:
        return None
