"""Fixed-time refining sequences and adapted stopping-time partitions.

Every partition is a strictly increasing array of master-grid indices that
starts at 0 and ends at N.  Stopping times snap to the next grid index, so a
partition point is decided using path values up to that index only.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Mapping

import numpy as np

from qvlab.paths import CadlagPath, TimeGrid


class PartitionError(ValueError):
    pass


def _validate_indices(indices: np.ndarray, n_steps: int | None) -> np.ndarray:
    idx = np.asarray(indices, dtype=np.int64).reshape(-1)
    if idx.size < 2 or idx[0] != 0:
        raise PartitionError("a partition must start at index 0 and contain at least two points")
    if np.any(np.diff(idx) <= 0):
        raise PartitionError("partition indices must be strictly increasing")
    if n_steps is not None and idx[-1] != n_steps:
        raise PartitionError(f"partition must end at N={n_steps}, ends at {idx[-1]}")
    idx.setflags(write=False)
    return idx


@dataclass(frozen=True, eq=False)
class FixedPartition:
    indices: np.ndarray
    label: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(self, "indices", _validate_indices(self.indices, None))

    def __len__(self) -> int:
        return int(self.indices.size)


@dataclass(frozen=True, eq=False)
class StoppingPartition:
    indices: np.ndarray
    rule: Mapping[str, float] = field(default_factory=dict)
    label: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(self, "indices", _validate_indices(self.indices, None))

    def __len__(self) -> int:
        return int(self.indices.size)


Partition = FixedPartition | StoppingPartition


@dataclass(frozen=True)
class RefiningSequence:
    depths: tuple[int, ...]
    partitions: tuple[FixedPartition, ...]

    def __iter__(self):
        return iter(zip(self.depths, self.partitions))

    def __len__(self) -> int:
        return len(self.partitions)

    @property
    def finest(self) -> FixedPartition:
        return self.partitions[-1]


def full_grid(grid: TimeGrid) -> FixedPartition:
    return FixedPartition(np.arange(grid.n_steps + 1), label="grid")


def dyadic(grid: TimeGrid, k: int) -> FixedPartition:
    """Partition keeping every ``N / 2**k``-th grid index."""
    if k < 0 or 2**k > grid.n_steps or grid.n_steps % (2**k):
        raise PartitionError(f"dyadic depth {k} exceeds the resolution of N={grid.n_steps}")
    step = grid.n_steps // 2**k
    return FixedPartition(np.arange(0, grid.n_steps + 1, step), label=f"dyadic{k}")


def dyadic_refining(grid: TimeGrid, k_min: int, k_max: int) -> RefiningSequence:
    if k_min > k_max:
        raise PartitionError("k_min must not exceed k_max")
    ks = tuple(range(k_min, k_max + 1))
    return RefiningSequence(ks, tuple(dyadic(grid, k) for k in ks))


def shifted_dyadic(grid: TimeGrid, k: int, shift: float = 0.5) -> FixedPartition:
    """Dyadic depth ``k`` with interior points moved by ``shift`` of a cell."""
    base = dyadic(grid, k).indices
    step = grid.n_steps // 2**k
    off = int(round(shift * step)) % step
    inner = base[:-1] + off
    idx = np.unique(np.concatenate([[0], inner[inner > 0], [grid.n_steps]]))
    return FixedPartition(idx, label=f"shifted_dyadic{k}")


def random_mesh(grid: TimeGrid, mean_gap: float, rng: np.random.Generator) -> FixedPartition:
    """Partition from i.i.d. exponential gaps, independent of any path."""
    mean_steps = max(mean_gap / grid.dt, 1.0)
    n_draw = int(grid.n_steps / mean_steps * 2 + 16)
    pts = np.cumsum(rng.exponential(mean_steps, size=n_draw))
    while pts[-1] < grid.n_steps:
        pts = np.concatenate([pts, pts[-1] + np.cumsum(rng.exponential(mean_steps, size=n_draw))])
    idx = np.ceil(pts[pts < grid.n_steps]).astype(np.int64)
    idx = np.unique(np.concatenate([[0], idx[(idx > 0) & (idx < grid.n_steps)], [grid.n_steps]]))
    return FixedPartition(idx, label="random")


def hitting_time_partition(path: CadlagPath, epsilon: float, cap: float = np.inf) -> StoppingPartition:
    """Level-crossing stopping times.

    ``tau_{m+1}`` is the first grid index after ``tau_m`` where the path has
    moved by at least ``epsilon`` from its value at ``tau_m``, or
    ``tau_m + cap`` (snapped down to the grid, at least one step), whichever
    comes first.
    """
    if not epsilon > 0 or not cap > 0:
        raise PartitionError("epsilon and cap must be positive")
    x = path.values
    n = path.n_steps
    cap_steps = n if not np.isfinite(cap) else max(1, int(np.floor(cap / path.grid.dt + 1e-9)))
    out = [0]
    cur = 0
    while cur < n:
        limit = min(cur + cap_steps, n)
        level = x[cur]
        nxt = limit
        lo = cur + 1
        width = 64
        # doubling window search keeps the scan near-linear in N
        while lo <= limit:
            hi = min(lo + width, limit + 1)
            hits = np.flatnonzero(np.abs(x[lo:hi] - level) >= epsilon)
            if hits.size:
                nxt = lo + int(hits[0])
                break
            lo = hi
            width *= 2
        out.append(nxt)
        cur = nxt
    return StoppingPartition(np.asarray(out), rule={"epsilon": epsilon, "cap": cap}, label=f"hitting{epsilon:g}")


def mesh(p: Partition, grid: TimeGrid) -> float:
    return float(np.max(np.diff(p.indices)) * grid.dt)


SCHEME_KEYS = {
    "dyadic": {"depth"},
    "shifted_dyadic": {"depth", "shift"},
    "hitting": {"epsilon", "cap"},
    "random": {"mean_gap", "seed"},
    "grid": set(),
}


def validate_scheme(scheme: Mapping[str, Any]) -> None:
    name = scheme.get("name")
    if name not in SCHEME_KEYS:
        raise PartitionError(f"unknown partition scheme {name!r}")
    extra = set(scheme) - SCHEME_KEYS[name] - {"name"}
    if extra:
        raise PartitionError(f"unknown keys for scheme {name!r}: {sorted(extra)}")


def scheme_label(scheme: Mapping[str, Any]) -> str:
    parts = [str(scheme["name"])] + [f"{k}={scheme[k]}" for k in sorted(scheme) if k != "name"]
    return ":".join(parts)


def build_partition(scheme: Mapping[str, Any], path: CadlagPath) -> Partition:
    """Instantiate a scheme descriptor such as ``{"name": "dyadic", "depth": 12}``."""
    validate_scheme(scheme)
    grid = path.grid
    name = scheme["name"]
    if name == "dyadic":
        return dyadic(grid, int(scheme["depth"]))
    if name == "shifted_dyadic":
        return shifted_dyadic(grid, int(scheme["depth"]), float(scheme.get("shift", 0.5)))
    if name == "hitting":
        return hitting_time_partition(path, float(scheme["epsilon"]), float(scheme.get("cap", np.inf)))
    if name == "random":
        from qvlab.streams import stream

        rng = stream(int(scheme.get("seed", 0)), "random_mesh")
        return random_mesh(grid, float(scheme["mean_gap"]), rng)
    return full_grid(grid)
