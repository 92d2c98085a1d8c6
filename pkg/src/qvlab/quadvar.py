"""Partition sums for quadratic variation and covariation.

All sums follow the stopped-increment convention: for a partition
``tau_0 < tau_1 < ...`` and a time ``s`` the sum runs over increments
``X(tau_{i+1} ^ s) - X(tau_i ^ s)``, so the last contributing increment ends
at ``s`` itself.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Mapping, Sequence

import numpy as np

from qvlab.partitions import (
    Partition,
    RefiningSequence,
    build_partition,
    mesh,
    scheme_label,
)
from qvlab.paths import CadlagPath, check_same_grid, linear_combination

NEG_CLAMP = 1e-12


def _stopped(values: np.ndarray, indices: np.ndarray, s_index: int) -> np.ndarray:
    return values[np.minimum(indices, s_index)]


def partition_qv(path: CadlagPath, p: Partition, s_index: int | None = None) -> float:
    s = path.n_steps if s_index is None else int(s_index)
    inc = np.diff(_stopped(path.values, p.indices, s))
    return float(np.dot(inc, inc))


def partition_covar(x: CadlagPath, y: CadlagPath, p: Partition, s_index: int | None = None) -> float:
    check_same_grid(x, y)
    s = x.n_steps if s_index is None else int(s_index)
    dx = np.diff(_stopped(x.values, p.indices, s))
    dy = np.diff(_stopped(y.values, p.indices, s))
    return float(np.dot(dx, dy))


def _last_point(indices: np.ndarray, n_steps: int) -> np.ndarray:
    """For every grid index, the position of the last partition point <= it."""
    return np.searchsorted(indices, np.arange(n_steps + 1), side="right") - 1


def covar_process(x: np.ndarray, y: np.ndarray, indices: np.ndarray) -> np.ndarray:
    """``[x, y]^P_s`` evaluated at every grid index ``s``."""
    dx = np.diff(x[indices])
    dy = np.diff(y[indices])
    cum = np.concatenate([[0.0], np.cumsum(dx * dy)])
    k = _last_point(indices, x.size - 1)
    tau = indices[k]
    return cum[k] + (x - x[tau]) * (y - y[tau])


def qv_process(path: CadlagPath, p: Partition) -> np.ndarray:
    v = path.values
    return covar_process(v, v, p.indices)


def jump_qv_process(path: CadlagPath) -> np.ndarray:
    """Cumulative sum of squared jumps on the grid."""
    return np.cumsum(path.jump_dense**2)


@dataclass
class QVReport:
    labels: list[str]
    meshes: np.ndarray
    estimates: np.ndarray
    point_indices: list[np.ndarray]
    point_values: list[np.ndarray]
    process: np.ndarray
    jump_part: float
    cont_part_estimate: float
    cauchy: np.ndarray
    horizon: float = 1.0
    n_steps: int = 0

    @property
    def estimate(self) -> float:
        return float(self.estimates[-1])

    def to_rows(self, max_rows_per_depth: int = 1024) -> list[list[Any]]:
        dt = self.horizon / self.n_steps
        rows: list[list[Any]] = []
        for lab, m, idx, vals in zip(self.labels, self.meshes, self.point_indices, self.point_values):
            sel = np.arange(idx.size)
            if idx.size > max_rows_per_depth:
                sel = np.unique(np.linspace(0, idx.size - 1, max_rows_per_depth).round().astype(int))
            for j in sel:
                rows.append([lab, float(m), float(idx[j] * dt), float(vals[j])])
        fm = float(self.meshes[-1])
        rows.append(["summary:estimate", fm, self.horizon, self.estimate])
        rows.append(["summary:jump_part", fm, self.horizon, self.jump_part])
        rows.append(["summary:cont_part", fm, self.horizon, self.cont_part_estimate])
        return rows


QV_COLUMNS = ["depth_or_scheme", "mesh", "s", "S_value"]


def _clamp(v: float) -> float:
    return 0.0 if -NEG_CLAMP < v < 0.0 else v


def weak_qv(path: CadlagPath, rs: RefiningSequence, labels: Sequence[str] | None = None) -> QVReport:
    """Partition sums along a refining sequence; the deepest one is the estimate."""
    grid = path.grid
    v = path.values
    ests, meshes, pidx, pvals = [], [], [], []
    for _, part in rs:
        idx = part.indices
        inc = np.diff(v[idx])
        cum = np.concatenate([[0.0], np.cumsum(inc * inc)])
        ests.append(float(cum[-1]))
        meshes.append(mesh(part, grid))
        pidx.append(idx)
        pvals.append(cum)
    ests_a = np.asarray(ests)
    jump_part = float(np.sum(path.jump_size**2))
    return QVReport(
        labels=list(labels) if labels is not None else [f"depth{k}" for k in rs.depths],
        meshes=np.asarray(meshes),
        estimates=ests_a,
        point_indices=pidx,
        point_values=pvals,
        process=qv_process(path, rs.finest),
        jump_part=jump_part,
        cont_part_estimate=_clamp(float(ests_a[-1]) - jump_part),
        cauchy=np.abs(np.diff(ests_a)),
        horizon=grid.horizon,
        n_steps=grid.n_steps,
    )


def weak_covar(x: CadlagPath, y: CadlagPath, rs: RefiningSequence) -> np.ndarray:
    """Terminal covariation sums at each depth (no positivity constraint)."""
    return np.array([partition_covar(x, y, part) for _, part in rs])


@dataclass
class SweepReport:
    labels: list[str]
    meshes: np.ndarray
    deviations: np.ndarray
    note: str = "finite scheme family: can falsify strong-sense QV, never certify it"

    @property
    def max_deviation(self) -> float:
        return float(np.max(self.deviations)) if self.deviations.size else 0.0


def strong_qv_sweep(
    path: CadlagPath,
    schemes: Sequence[Mapping[str, Any] | Partition],
    reference: QVReport | np.ndarray | float,
) -> SweepReport:
    """Sup over grid times of ``|[X]^P_s - reference_s|`` for each scheme."""
    if isinstance(reference, QVReport):
        ref = reference.process
    else:
        ref = np.broadcast_to(np.asarray(reference, dtype=float), path.values.shape)
    labels, meshes, devs = [], [], []
    for sch in schemes:
        if isinstance(sch, Mapping):
            part = build_partition(sch, path)
            labels.append(scheme_label(sch))
        else:
            part = sch
            labels.append(part.label or "partition")
        proc = qv_process(path, part)
        devs.append(float(np.max(np.abs(proc - ref))))
        meshes.append(mesh(part, path.grid))
    return SweepReport(labels, np.asarray(meshes), np.asarray(devs))


def kunita_watanabe_check(x: CadlagPath, y: CadlagPath, p: Partition, rtol: float = 1e-9) -> tuple[bool, float]:
    """``|[x,y]^P| <= sqrt([x]^P [y]^P)``; returns (holds, slack)."""
    bound = np.sqrt(partition_qv(x, p) * partition_qv(y, p))
    slack = float(bound - abs(partition_covar(x, y, p)))
    return slack >= -rtol * max(bound, 1e-300), slack


def triangle_check(paths: Sequence[CadlagPath], p: Partition, rtol: float = 1e-9) -> tuple[bool, float]:
    """``[sum X^k]^P <= (sum sqrt([X^k]^P))^2``; returns (holds, slack)."""
    total = linear_combination([1.0] * len(paths), paths)
    rhs = float(sum(np.sqrt(partition_qv(q, p)) for q in paths)) ** 2
    slack = rhs - partition_qv(total, p)
    return slack >= -rtol * max(rhs, 1e-300), slack
