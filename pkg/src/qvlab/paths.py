"""Realized cadlag paths on a uniform master grid.

A path is stored as a continuous component sampled at the grid times plus an
explicit list of jumps located at grid indices.  The value at ``t_i`` is the
continuous sample plus every jump at or before ``i``; the left limit at
``t_i`` excludes the jump at ``i`` itself.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import TYPE_CHECKING, Any, Iterable, Sequence

import numpy as np

if TYPE_CHECKING:
    from qvlab.transforms import TransformSpec


class GridMismatchError(ValueError):
    """Raised when two paths that must share a grid do not."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class TimeGrid:
    horizon: float
    n_steps: int

    def __post_init__(self) -> None:
        if not (np.isfinite(self.horizon) and self.horizon > 0):
            raise ValueError(f"horizon must be positive, got {self.horizon}")
        if int(self.n_steps) != self.n_steps or self.n_steps < 2:
            raise ValueError(f"n_steps must be an integer >= 2, got {self.n_steps}")
        object.__setattr__(self, "n_steps", int(self.n_steps))
        object.__setattr__(self, "horizon", float(self.horizon))

    @property
    def dt(self) -> float:
        return self.horizon / self.n_steps

    @cached_property
    def times(self) -> np.ndarray:
        return _frozen(np.arange(self.n_steps + 1) * self.dt)

    def index_of(self, t: float) -> int:
        """Smallest grid index whose time is >= ``t`` (right-continuous snap)."""
        i = int(np.ceil(t / self.dt - 1e-9))
        return min(max(i, 0), self.n_steps)


@dataclass(frozen=True, eq=False)
class CadlagPath:
    """One realized path: ``cont`` has N+1 samples, jumps sit at indices >= 1."""

    grid: TimeGrid
    cont: np.ndarray
    jump_idx: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    jump_size: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self) -> None:
        n = self.grid.n_steps
        cont = np.array(self.cont, dtype=float)
        idx = np.array(self.jump_idx, dtype=np.int64).reshape(-1)
        size = np.array(self.jump_size, dtype=float).reshape(-1)
        if cont.shape != (n + 1,):
            raise ValueError(f"cont must have {n + 1} samples, got shape {cont.shape}")
        if idx.shape != size.shape:
            raise ValueError("jump_idx and jump_size differ in length")
        if not np.all(np.isfinite(cont)) or not np.all(np.isfinite(size)):
            raise ValueError("path values must be finite")
        if idx.size:
            if idx[0] < 1 or idx[-1] > n:
                raise ValueError("jump indices must lie in 1..N")
            if np.any(np.diff(idx) <= 0):
                raise ValueError("jump indices must be strictly increasing")
            if np.any(size == 0.0):
                raise ValueError("zero-size jumps are not jumps")
        object.__setattr__(self, "cont", _frozen(cont))
        object.__setattr__(self, "jump_idx", _frozen(idx))
        object.__setattr__(self, "jump_size", _frozen(size))

    @classmethod
    def from_jumps(
        cls,
        grid: TimeGrid,
        cont: Any,
        jumps: Iterable[tuple[int, float]] = (),
    ) -> "CadlagPath":
        """Build a path from unsorted ``(index, size)`` pairs, merging duplicates."""
        idx, size = merge_jumps(jumps)
        return cls(grid, cont, idx, size)

    @classmethod
    def zeros(cls, grid: TimeGrid) -> "CadlagPath":
        return cls(grid, np.zeros(grid.n_steps + 1))

    @classmethod
    def from_values(cls, grid: TimeGrid, values: Any, jump_idx: Any = (), jump_size: Any = ()) -> "CadlagPath":
        """Build a path from full values and the jumps they contain."""
        idx = np.asarray(jump_idx, dtype=np.int64)
        size = np.asarray(jump_size, dtype=float)
        dense = np.zeros(grid.n_steps + 1)
        dense[idx] = size
        cont = np.asarray(values, dtype=float) - np.cumsum(dense)
        return cls(grid, cont, idx, size)

    @property
    def n_steps(self) -> int:
        return self.grid.n_steps

    @property
    def jumps(self) -> list[tuple[int, float]]:
        return list(zip(self.jump_idx.tolist(), self.jump_size.tolist()))

    @cached_property
    def jump_dense(self) -> np.ndarray:
        """Jump size at every grid index (0 where there is no jump)."""
        dense = np.zeros(self.n_steps + 1)
        dense[self.jump_idx] = self.jump_size
        return _frozen(dense)

    @cached_property
    def jump_part(self) -> np.ndarray:
        """Cumulative jump component sampled on the grid."""
        return _frozen(np.cumsum(self.jump_dense))

    @cached_property
    def values(self) -> np.ndarray:
        return _frozen(self.cont + self.jump_part)

    @cached_property
    def left_values(self) -> np.ndarray:
        """Left limits; entry 0 is the initial value by convention."""
        return _frozen(self.values - self.jump_dense)

    def value_at(self, i: int) -> float:
        if not 0 <= i <= self.n_steps:
            raise IndexError(f"grid index {i} outside 0..{self.n_steps}")
        return float(self.values[i])

    def left_limit_at(self, i: int) -> float:
        if not 1 <= i <= self.n_steps:
            raise IndexError(f"left limit index {i} outside 1..{self.n_steps}")
        return float(self.left_values[i])

    def jump_at(self, i: int) -> float:
        return float(self.jump_dense[i])

    def continuous_part(self) -> "CadlagPath":
        return CadlagPath(self.grid, self.cont)

    def pure_jump_part(self) -> "CadlagPath":
        return CadlagPath(self.grid, np.zeros(self.n_steps + 1), self.jump_idx, self.jump_size)

    def scaled(self, a: float) -> "CadlagPath":
        return combine(a, self, 0.0, self)

    def __add__(self, other: "CadlagPath") -> "CadlagPath":
        return combine(1.0, self, 1.0, other)

    def __sub__(self, other: "CadlagPath") -> "CadlagPath":
        return combine(1.0, self, -1.0, other)

    def __neg__(self) -> "CadlagPath":
        return self.scaled(-1.0)


def merge_jumps(jumps: Iterable[tuple[int, float]]) -> tuple[np.ndarray, np.ndarray]:
    """Sort jumps by index, sum sizes sharing an index and drop exact zeros."""
    pairs = list(jumps)
    if not pairs:
        return np.zeros(0, dtype=np.int64), np.zeros(0)
    idx = np.array([p[0] for p in pairs], dtype=np.int64)
    size = np.array([p[1] for p in pairs], dtype=float)
    return merge_jump_arrays(idx, size)


def merge_jump_arrays(idx: np.ndarray, size: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    idx = np.asarray(idx, dtype=np.int64)
    size = np.asarray(size, dtype=float)
    if idx.size == 0:
        return np.zeros(0, dtype=np.int64), np.zeros(0)
    uniq, inv = np.unique(idx, return_inverse=True)
    total = np.zeros(uniq.size)
    np.add.at(total, inv, size)
    keep = total != 0.0
    return uniq[keep], total[keep]


def check_same_grid(*paths: CadlagPath) -> TimeGrid:
    grid = paths[0].grid
    for p in paths[1:]:
        if p.grid != grid:
            raise GridMismatchError(f"grid mismatch: {grid} vs {p.grid}")
    return grid


def combine(a: float, p: CadlagPath, b: float, q: CadlagPath) -> CadlagPath:
    """Pointwise ``a*p + b*q`` with exact jump bookkeeping."""
    grid = check_same_grid(p, q)
    cont = a * p.cont + b * q.cont
    idx = np.concatenate([p.jump_idx, q.jump_idx])
    size = np.concatenate([a * p.jump_size, b * q.jump_size])
    return CadlagPath(grid, cont, *merge_jump_arrays(idx, size))


def linear_combination(coeffs: Sequence[float], paths: Sequence[CadlagPath]) -> CadlagPath:
    grid = check_same_grid(*paths)
    cont = np.zeros(grid.n_steps + 1)
    for c, p in zip(coeffs, paths):
        cont = cont + c * p.cont
    idx = np.concatenate([p.jump_idx for p in paths])
    size = np.concatenate([c * p.jump_size for c, p in zip(coeffs, paths)])
    return CadlagPath(grid, cont, *merge_jump_arrays(idx, size))


def sup_norm(path: CadlagPath) -> float:
    """Running supremum of |X| at time horizon, left limits included."""
    return float(max(np.max(np.abs(path.values)), np.max(np.abs(path.left_values))))


def transform(path: CadlagPath, f: "TransformSpec | Any") -> CadlagPath:
    """Apply ``f`` pathwise; jumps of the image are ``f(X_t) - f(X_t-)``."""
    if getattr(f, "name", None) == "identity":
        return path
    fn = getattr(f, "f", f)
    values = np.asarray(fn(path.values), dtype=float)
    if values.shape != path.values.shape or not np.all(np.isfinite(values)):
        raise ValueError("transform is undefined on the range of the path")
    if path.jump_idx.size:
        left = np.asarray(fn(path.left_values[path.jump_idx]), dtype=float)
        sizes = values[path.jump_idx] - left
    else:
        sizes = np.zeros(0)
    keep = sizes != 0.0
    idx, sizes = path.jump_idx[keep], sizes[keep]
    dense = np.zeros(path.n_steps + 1)
    dense[idx] = sizes
    return CadlagPath(path.grid, values - np.cumsum(dense), idx, sizes)


@dataclass(frozen=True, eq=False)
class PathEnsemble:
    seed: int
    members: tuple[CadlagPath, ...]
    provenance: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "members", tuple(self.members))
        if self.members:
            check_same_grid(*self.members)

    @property
    def member_count(self) -> int:
        return len(self.members)

    @property
    def grid(self) -> TimeGrid:
        return self.members[0].grid
