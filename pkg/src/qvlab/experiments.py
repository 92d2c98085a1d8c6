"""Stability and decomposition experiments over seeded ensembles.

Every per-seed pipeline is sequential and pure; ensembles optionally fan out
over worker processes and are always aggregated in seed order, so the output
does not depend on ``jobs``.
"""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np

from qvlab.calculus import zero_qv_integral_check
from qvlab.decomposition import (
    follmer_decompose,
    lowther_qv_identity,
    predictable_summability,
    rewrite_consistency,
    ya_decompose,
)
from qvlab.generators import DirichletSample, PerturbationFamily, ProcessSpec, gen_dirichlet, gen_perturbed_family
from qvlab.laws import DiscreteLaw
from qvlab.partitions import RefiningSequence, dyadic, validate_scheme
from qvlab.paths import combine, sup_norm, transform
from qvlab.quadvar import weak_qv
from qvlab.transforms import TransformSpec, get_transform

log = logging.getLogger(__name__)

SLOPE_FLOOR = 1e-15


@dataclass(frozen=True)
class Tolerances:
    bound_factor: float = 1.25
    slope_target: float = 2.0
    slope_tol: float = 0.4
    terminal_ratio: float = 0.10
    jump_rtol: float = 1e-9
    qv_vanish: float = 0.05
    rewrite_density: float = 1e-6
    rewrite_discrete: float = 1e-9
    follmer_rtol: float = 5e-3
    lowther_gap: float = 0.03


@dataclass(frozen=True)
class ExperimentConfig:
    process: ProcessSpec
    transform: str = "square"
    table: dict | None = None
    family: PerturbationFamily = field(default_factory=lambda: PerturbationFamily("add_bm", tuple(range(2, 11))))
    depths: tuple[int, ...] = (10, 11, 12, 13, 14)
    schemes: tuple[dict, ...] = ()
    seeds: int = 1
    base_seed: int = 0
    thresholds: tuple[float, ...] = (1.0,)
    qv_c: str = "estimate"
    tolerances: Tolerances = field(default_factory=Tolerances)
    output: str | None = None

    def __post_init__(self) -> None:
        if self.seeds < 1:
            raise ValueError("seeds must be at least 1")
        if not self.depths:
            raise ValueError("depth list must not be empty")
        if list(self.depths) != sorted(set(self.depths)):
            raise ValueError("depths must be strictly increasing")
        for k in self.depths:
            dyadic(self.process.grid, k)
        for s in self.schemes:
            validate_scheme(s)
        if any(not a > 0 for a in self.thresholds):
            raise ValueError("thresholds must be positive")
        if self.qv_c not in ("estimate", "exact"):
            raise ValueError("qv_c must be 'estimate' or 'exact'")
        self.transform_spec()

    def transform_spec(self) -> TransformSpec:
        return get_transform(self.transform, self.table)

    def refining(self) -> RefiningSequence:
        grid = self.process.grid
        return RefiningSequence(tuple(self.depths), tuple(dyadic(grid, k) for k in self.depths))

    def seed_list(self) -> list[int]:
        return [self.base_seed + i for i in range(self.seeds)]


def convergence_slope(values: Sequence[float], xs: Sequence[float]) -> float:
    """Least-squares slope of ``log(value)`` against ``log(x)``."""
    v = np.maximum(np.asarray(values, dtype=float), SLOPE_FLOOR)
    x = np.asarray(xs, dtype=float)
    if v.size < 3 or v.size != x.size:
        raise ValueError("need at least three matching values")
    if np.any(~np.isfinite(v)) or np.any(x <= 0):
        raise ValueError("slope needs finite values and positive abscissae")
    return float(np.polyfit(np.log(x), np.log(v), 1)[0])


def _map(fn: Callable[[int], Any], items: Sequence[int], jobs: int) -> list[Any]:
    if jobs <= 1 or len(items) <= 1:
        return [fn(i) for i in items]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(fn, items))


# -- stability ---------------------------------------------------------------


@dataclass
class StabilityReport:
    ns: np.ndarray
    eps: np.ndarray
    depths: np.ndarray
    qv_diff: np.ndarray  # (seeds, n, depth)
    qv_f_diff: np.ndarray  # (seeds, n, depth)
    bound: np.ndarray  # (seeds, n)
    sup_dist: np.ndarray  # (seeds, n)
    xn_sup: np.ndarray  # (seeds, n)
    transform: str
    family_status: str
    verdicts: dict[str, bool] = field(default_factory=dict)
    slope: float = float("nan")

    @property
    def median_qv_f_diff(self) -> np.ndarray:
        return np.median(self.qv_f_diff[:, :, -1], axis=0)

    @property
    def median_qv_diff(self) -> np.ndarray:
        return np.median(self.qv_diff[:, :, -1], axis=0)

    @property
    def median_bound(self) -> np.ndarray:
        return np.median(self.bound, axis=0)

    @property
    def depth_curves(self) -> np.ndarray:
        """Median ``[f(X^n) - f(X)]`` per (n, depth)."""
        return np.median(self.qv_f_diff, axis=0)

    @property
    def xn_sup_p99(self) -> float:
        return float(np.percentile(self.xn_sup, 99))

    @property
    def xn_sup_p99_by_n(self) -> np.ndarray:
        return np.percentile(self.xn_sup, 99, axis=0)

    @property
    def sup_drift_flag(self) -> bool:
        """True if the 99th percentile of ``(X^n)*`` grows by more than 10% across ``n``."""
        p = self.xn_sup_p99_by_n
        return bool(p[-1] > 1.1 * p[0])

    @property
    def passed(self) -> bool:
        return all(self.verdicts.values())

    def to_rows(self) -> list[list[Any]]:
        rows: list[list[Any]] = []
        curves = self.depth_curves
        med_diff = np.median(self.qv_diff, axis=0)
        for i, n in enumerate(self.ns):
            for j, d in enumerate(self.depths):
                rows.append(["estimate", int(n), float(self.eps[i]), int(d), float(curves[i, j]),
                             float(med_diff[i, j]), float(self.median_bound[i]),
                             float(np.median(self.sup_dist[:, i])), ""])
        for i, n in enumerate(self.ns):
            rows.append(["summary:xn_sup_p99", int(n), float(self.eps[i]), "", "", "", "", "",
                         float(self.xn_sup_p99_by_n[i])])
        rows.append(["summary:slope", "", "", "", "", "", "", "", float(self.slope)])
        rows.append(["summary:family_status", "", "", "", "", "", "", "", self.family_status])
        rows.append(["summary:sup_drift_flag", "", "", "", "", "", "", "", int(self.sup_drift_flag)])
        for k, v in self.verdicts.items():
            rows.append([f"verdict:{k}", "", "", "", "", "", "", "", int(v)])
        return rows


STABILITY_COLUMNS = ["kind", "n", "eps", "depth", "qv_f_diff", "qv_diff", "bound", "sup_dist", "value"]


@dataclass(frozen=True)
class _StabilityWorker:
    config: ExperimentConfig

    def __call__(self, seed: int) -> tuple[np.ndarray, ...]:
        cfg = self.config
        f = cfg.transform_spec()
        rs = cfg.refining()
        sample = gen_dirichlet(cfg.process, seed)
        x = sample.x
        fx = transform(x, f)
        members = gen_perturbed_family(sample, cfg.family, seed)
        qd, qf, bound, sd, xs = [], [], [], [], []
        lo_x = min(x.values.min(), x.left_values.min())
        hi_x = max(x.values.max(), x.left_values.max())
        for xn in members:
            diff = combine(1.0, xn, -1.0, x)
            fdiff = combine(1.0, transform(xn, f), -1.0, fx)
            e_diff = weak_qv(diff, rs).estimates
            e_f = weak_qv(fdiff, rs).estimates
            lo = min(lo_x, xn.values.min(), xn.left_values.min())
            hi = max(hi_x, xn.values.max(), xn.left_values.max())
            m = f.lipschitz_bound(lo, hi)
            qd.append(e_diff)
            qf.append(e_f)
            bound.append(2.0 * m * m * e_diff[-1])
            sd.append(sup_norm(diff))
            xs.append(sup_norm(xn))
        return np.array(qd), np.array(qf), np.array(bound), np.array(sd), np.array(xs)


def run_stability(config: ExperimentConfig, jobs: int = 1) -> StabilityReport:
    """Ensemble estimates of ``[f(X^n) - f(X)]_t`` against the ``2 M^2 [X^n - X]_t`` bound."""
    res = _map(_StabilityWorker(config), config.seed_list(), jobs)
    fam = config.family
    f = config.transform_spec()
    rep = StabilityReport(
        ns=np.array(fam.n_range), eps=fam.eps_values, depths=np.array(config.depths),
        qv_diff=np.stack([r[0] for r in res]), qv_f_diff=np.stack([r[1] for r in res]),
        bound=np.stack([r[2] for r in res]), sup_dist=np.stack([r[3] for r in res]),
        xn_sup=np.stack([r[4] for r in res]), transform=f.name, family_status=fam.hypothesis_status,
    )
    rep.verdicts, rep.slope = stability_verdicts(rep, f, config.tolerances)
    return rep


def stability_verdicts(rep: StabilityReport, f: TransformSpec, tol: Tolerances) -> tuple[dict[str, bool], float]:
    med = rep.median_qv_f_diff
    v: dict[str, bool] = {}
    if np.all(med == 0.0):
        # degenerate family: nothing moves, every check is an exact pass
        return {"monotone": True}, float("nan")
    v["monotone"] = bool(np.all(np.diff(med) <= 0.0))
    if f.cls != "PrimitiveOfCadlag":
        # the 2 M^2 bound needs a continuous derivative
        v["bound"] = bool(np.all(med <= tol.bound_factor * rep.median_bound))
    slope = float("nan")
    if med.size >= 3 and np.all(rep.eps > 0):
        slope = convergence_slope(med, rep.eps)
    if f.cls == "C2":
        v["slope"] = bool(abs(slope - tol.slope_target) <= tol.slope_tol)
    else:
        v["terminal_ratio"] = bool(med[-1] <= tol.terminal_ratio * med[0])
    return v, slope


# -- decomposition suite -----------------------------------------------------


@dataclass
class SuiteSeedResult:
    seed: int
    follmer_rel: float
    lowther_gap: float
    lowther_occupation: float
    jump_cancellation_rel: dict[float, float]
    gamma_qv_ratio: dict[float, float]
    rewrite_gap: dict[float, float]
    zero_qv_ratio: float
    zero_qv_identity_gap: float


@dataclass
class SuiteReport:
    thresholds: tuple[float, ...]
    seeds: list[SuiteSeedResult]
    summability: dict[float, float]
    verdicts: dict[str, bool] = field(default_factory=dict)
    medians: dict[str, float] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(self.verdicts.values())

    def to_rows(self) -> list[list[Any]]:
        rows: list[list[Any]] = []
        for r in self.seeds:
            rows.append([r.seed, "follmer_rel", "", r.follmer_rel])
            rows.append([r.seed, "lowther_gap", "", r.lowther_gap])
            rows.append([r.seed, "lowther_occupation", "", r.lowther_occupation])
            for a in self.thresholds:
                rows.append([r.seed, "jump_cancellation_rel", a, r.jump_cancellation_rel[a]])
                rows.append([r.seed, "gamma_qv_ratio", a, r.gamma_qv_ratio[a]])
                rows.append([r.seed, "rewrite_gap", a, r.rewrite_gap[a]])
            rows.append([r.seed, "zero_qv_ratio", "", r.zero_qv_ratio])
            rows.append([r.seed, "zero_qv_identity_gap", "", r.zero_qv_identity_gap])
        for a in self.thresholds:
            rows.append(["summary", "predictable_summability", a, self.summability[a]])
        for k, v in self.medians.items():
            rows.append(["summary", f"median:{k}", "", v])
        for k, v in self.verdicts.items():
            rows.append(["summary", f"verdict:{k}", "", int(v)])
        return rows


SUITE_COLUMNS = ["seed", "quantity", "a", "value"]


def _qv_c(sample: DirichletSample, mode: str) -> np.ndarray | None:
    return sample.qv_c_exact() if mode == "exact" else None


@dataclass(frozen=True)
class _SuiteWorker:
    config: ExperimentConfig

    def __call__(self, seed: int) -> SuiteSeedResult:
        cfg = self.config
        f = cfg.transform_spec()
        rs = cfg.refining()
        sample = gen_dirichlet(cfg.process, seed)
        x = sample.x
        qv_c = _qv_c(sample, cfg.qv_c)
        follmer_rel = float("nan")
        if f.cls == "C2":
            fr = follmer_decompose(f, x, rs, qv_c)
            follmer_rel = fr.residual / max(sup_norm(fr.target), 1e-300)
        low = lowther_qv_identity(f, x, rs, qv_c)
        jc, gq, rw = {}, {}, {}
        for a in cfg.thresholds:
            rep = ya_decompose(f, sample, a=a, rs=rs)
            jc[a] = rep.jump_cancellation / rep.scale
            gq[a] = float(rep.summary["gamma_qv_ratio"])
            rw[a] = rewrite_consistency(f, x, cfg.process.jumps, a)
        zq = zero_qv_integral_check(sample.z, f, sample.c, cfg.schemes)
        zq_ratio = weak_qv(zq.integral, rs).estimate / max(weak_qv(sample.z, rs).estimate, 1e-300)
        return SuiteSeedResult(seed, follmer_rel, low.gap, low.occupation, jc, gq, rw, float(zq_ratio),
                               zq.identity_gap)


def _rewrite_tol(config: ExperimentConfig) -> float:
    tol = config.tolerances
    laws = [fj.law for fj in config.process.jumps.fixed_times]
    exact = all(isinstance(law, DiscreteLaw) for law in laws)
    return tol.rewrite_discrete if exact else tol.rewrite_density


def run_decomposition_suite(config: ExperimentConfig, jobs: int = 1) -> SuiteReport:
    """Follmer, QV-identity, ``Y^a``/``Gamma^a`` and chain-rule checks over the ensemble."""
    results: list[SuiteSeedResult] = _map(_SuiteWorker(config), config.seed_list(), jobs)
    tol = config.tolerances
    f = config.transform_spec()
    model = config.process.jumps
    rep = SuiteReport(tuple(config.thresholds), results,
                      {a: predictable_summability(model, a) for a in config.thresholds})
    med = rep.medians
    med["lowther_gap"] = float(np.median([r.lowther_gap for r in results]))
    med["zero_qv_ratio"] = float(np.median([r.zero_qv_ratio for r in results]))
    if f.cls == "C2":
        med["follmer_rel"] = float(np.median([r.follmer_rel for r in results]))
        rep.verdicts["follmer"] = med["follmer_rel"] <= tol.follmer_rtol
    rep.verdicts["lowther"] = med["lowther_gap"] <= tol.lowther_gap
    rw_tol = _rewrite_tol(config)
    for a in config.thresholds:
        med[f"gamma_qv_ratio@{a!r}"] = float(np.median([r.gamma_qv_ratio[a] for r in results]))
        worst_jc = max(r.jump_cancellation_rel[a] for r in results)
        worst_rw = max(r.rewrite_gap[a] for r in results)
        med[f"max_jump_cancellation_rel@{a!r}"] = worst_jc
        med[f"max_rewrite_gap@{a!r}"] = worst_rw
        rep.verdicts[f"jump_cancellation@{a!r}"] = worst_jc <= tol.jump_rtol
        rep.verdicts[f"gamma_qv@{a!r}"] = med[f"gamma_qv_ratio@{a!r}"] <= tol.qv_vanish
        rep.verdicts[f"rewrite@{a!r}"] = worst_rw <= rw_tol
    rep.verdicts["zero_qv_integral"] = med["zero_qv_ratio"] <= tol.qv_vanish
    return rep
