"""Term-by-term Itô-type decompositions of ``f(X)``.

* :func:`follmer_decompose` -- C2 expansion into a jump-compensation sum,
  ``int f'(X_-) dX`` along partitions and ``1/2 int f''(X_-) d[X]^c``.
* :func:`lowther_qv_identity` -- ``[f(X)] = int f'(X_-)^2 d[X]^c + sum (Delta f(X))^2``.
* :func:`ya_decompose` -- ``f(X) = Y^a + Gamma^a`` where ``Y^a`` collects big
  jumps, ``int f'(X_-) dZ``, compensated small non-predictable jumps and
  realized small predictable jumps; ``Gamma^a`` must be continuous with zero
  quadratic variation.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from qvlab.calculus import left_point_sums, riemann_integral, stieltjes_sum
from qvlab.generators import DirichletSample
from qvlab.laws import JumpModel, compensator_queries, expect
from qvlab.partitions import RefiningSequence, full_grid
from qvlab.paths import CadlagPath, linear_combination, merge_jump_arrays, sup_norm, transform
from qvlab.quadvar import QVReport, jump_qv_process, qv_process, weak_qv
from qvlab.transforms import TransformSpec

JUMP_RTOL = 1e-9
OCCUPATION_LIMIT = 1e-3
DISC_BAND = 1e-6
_CHUNK = 8192


class AssumptionWarning(UserWarning):
    """The occupation proxy for the differentiability assumption is exceeded."""


@dataclass
class DecompositionReport:
    kind: str
    terms: dict[str, CadlagPath]
    target: CadlagPath
    gamma: CadlagPath | None = None
    residual: float = 0.0
    gamma_qv: QVReport | None = None
    jump_cancellation: float = 0.0
    summary: dict[str, Any] = field(default_factory=dict)

    @property
    def scale(self) -> float:
        return max(1.0, sup_norm(self.target))

    def to_rows(self, downsample: int = 256) -> list[list[Any]]:
        grid = self.target.grid
        sel = np.arange(0, grid.n_steps + 1, max(1, downsample))
        if sel[-1] != grid.n_steps:
            sel = np.append(sel, grid.n_steps)
        named = dict(self.terms)
        named["f(X)"] = self.target
        if self.gamma is not None:
            named["gamma"] = self.gamma
        rows: list[list[Any]] = []
        for name, path in named.items():
            vals = path.values
            rows.extend([name, float(grid.times[i]), float(vals[i])] for i in sel)
        for key, val in self.summary.items():
            if isinstance(val, (list, tuple, np.ndarray)):
                for j, v in enumerate(np.ravel(val)):
                    rows.append([f"summary:{key}[{j}]", "", float(v)])
            else:
                rows.append([f"summary:{key}", "", val if isinstance(val, str) else float(val)])
        return rows


DECOMP_COLUMNS = ["term", "s", "value"]


def jump_compensation(f: TransformSpec, x: CadlagPath, mask: np.ndarray | None = None) -> CadlagPath:
    """Pure-jump path of ``f(X_u) - f(X_u-) - Delta X_u f'(X_u-)`` over selected jumps."""
    idx, size = x.jump_idx, x.jump_size
    if mask is not None:
        idx, size = idx[mask], size[mask]
    left = x.left_values[idx]
    vals = f.f(left + size) - f.f(left) - size * f.fprime(left)
    return CadlagPath(x.grid, np.zeros(x.n_steps + 1), *merge_jump_arrays(idx, vals))


def _continuous_qv_estimate(x: CadlagPath, part, qv_c: np.ndarray | None) -> np.ndarray:
    if qv_c is not None:
        return np.asarray(qv_c, dtype=float)
    return qv_process(x, part) - jump_qv_process(x)


def follmer_decompose(
    f: TransformSpec,
    x: CadlagPath,
    rs: RefiningSequence,
    qv_c: np.ndarray | None = None,
) -> DecompositionReport:
    """Föllmer's C2 formula evaluated along every depth of ``rs``.

    Without ``qv_c`` the continuous QV is the partition estimate minus the
    exact squared-jump sum along the same partition.
    """
    if f.cls != "C2" or f.fsecond is None:
        raise ValueError(f"follmer_decompose needs a C2 transform, got {f.name} ({f.cls})")
    fx = transform(x, f)
    jumps = jump_compensation(f, x)
    d1 = f.fprime(x.values)
    d2 = f.fsecond(x.values)
    base = fx.values - fx.values[0] - jumps.values
    sups, integral, second = [], None, None
    for _, part in rs:
        integral = riemann_integral(d1, x, part)
        a_c = _continuous_qv_estimate(x, part, qv_c)
        second = 0.5 * stieltjes_sum(d2, a_c - a_c[0], part)
        sups.append(float(np.max(np.abs(base - integral.values - second))))
    terms = {
        "f(X_0)": CadlagPath(x.grid, np.full(x.n_steps + 1, fx.values[0])),
        "jump_compensation": jumps,
        "int_fprime_dX": integral,
        "half_int_fsecond_dQVc": CadlagPath(x.grid, second),
    }
    rep = DecompositionReport("follmer", terms, fx, residual=sups[-1])
    rep.summary = {"residual_by_depth": np.asarray(sups), "depths": np.asarray(rs.depths, dtype=float),
                   "sup_abs_fX": sup_norm(fx)}
    return rep


@dataclass
class LowtherResult:
    lhs: float
    rhs: float
    gap: float
    lhs_by_depth: np.ndarray
    rhs_by_depth: np.ndarray
    gap_by_depth: np.ndarray
    occupation: float
    assumption_ok: bool


def occupation_fraction(f: TransformSpec, x: CadlagPath, a_c: np.ndarray) -> float:
    """Share of continuous-QV increments accrued within DISC_BAND of ``disc(f')``."""
    if not f.disc:
        return 0.0
    w = np.clip(np.diff(a_c), 0.0, None)
    total = w.sum()
    if total <= 0:
        return 0.0
    xl = x.values[:-1]
    d = np.asarray(f.disc)
    near = np.min(np.abs(xl[:, None] - d[None, :]), axis=1) < DISC_BAND
    return float(w[near].sum() / total)


def lowther_qv_identity(
    f: TransformSpec,
    x: CadlagPath,
    rs: RefiningSequence,
    qv_c: np.ndarray | None = None,
) -> LowtherResult:
    fx = transform(x, f)
    lhs = weak_qv(fx, rs).estimates
    jump_sq = float(np.sum(fx.jump_size**2))
    d1sq = f.fprime(x.values) ** 2
    rhs = []
    for _, part in rs:
        a_c = _continuous_qv_estimate(x, part, qv_c)
        rhs.append(float(stieltjes_sum(d1sq, a_c - a_c[0], part)[-1]) + jump_sq)
    rhs_a = np.asarray(rhs)
    gaps = np.abs(lhs - rhs_a) / np.maximum(np.abs(lhs), 1e-300)
    occ = occupation_fraction(f, x, _continuous_qv_estimate(x, rs.finest, qv_c))
    ok = occ <= OCCUPATION_LIMIT
    if not ok:
        warnings.warn(f"occupation near disc(f') is {occ:.2e} > {OCCUPATION_LIMIT:g}", AssumptionWarning,
                      stacklevel=2)
    return LowtherResult(float(lhs[-1]), float(rhs_a[-1]), float(gaps[-1]), lhs, rhs_a, gaps, occ, ok)


def _w(f: TransformSpec, left: np.ndarray, size: np.ndarray) -> np.ndarray:
    """Second-order jump remainder ``f(l + x) - f(l) - x f'(l)``."""
    return f.f(left + size) - f.f(left) - size * f.fprime(left)


def _compensator_rate(f: TransformSpec, left: np.ndarray, nodes: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """``int W(left_i, x) nu(dx)`` for every entry of ``left``."""
    out = np.empty(left.size)
    if nodes.size == 0:
        out[:] = 0.0
        return out
    for lo in range(0, left.size, _CHUNK):
        l = left[lo:lo + _CHUNK, None]
        out[lo:lo + _CHUNK] = _w(f, l, nodes[None, :]) @ weights
    return out


@dataclass
class _SmallJumpTerms:
    realized_free: CadlagPath
    realized_pred: CadlagPath
    nu_c_comp: np.ndarray
    atom_comp: np.ndarray


def _small_jump_terms(f: TransformSpec, x: CadlagPath, model: JumpModel, a: float, refine: int) -> _SmallJumpTerms:
    grid = x.grid
    info = compensator_queries(model, a, refine)
    idx, size = x.jump_idx, x.jump_size
    left = x.left_values[idx]
    small = np.abs(size) <= a
    pred = np.isin(idx, model.predictable_indices)
    wv = _w(f, left, size)
    zeros = np.zeros(grid.n_steps + 1)
    free = CadlagPath(grid, zeros, *merge_jump_arrays(idx[small & ~pred], wv[small & ~pred]))
    predj = CadlagPath(grid, zeros, *merge_jump_arrays(idx[small & pred], wv[small & pred]))
    # predictable integrand: value at the left end of each grid cell
    rate = _compensator_rate(f, x.values[:-1], *info.nu_c_nodes)
    nu_c = np.concatenate([[0.0], np.cumsum(rate * grid.dt)])
    atom = np.zeros(grid.n_steps + 1)
    for s, (nodes, weights) in sorted(info.atoms.items()):
        atom[s] = float(_compensator_rate(f, x.left_values[s:s + 1], nodes, weights)[0])
    return _SmallJumpTerms(free, predj, nu_c, np.cumsum(atom))


def integral_fprime_dz(f: TransformSpec, x: CadlagPath, z: CadlagPath) -> CadlagPath:
    """``int f'(X_-) dZ``: left-point sums on the continuous part, exact on jumps."""
    cont = left_point_sums(f.fprime(x.values), z.cont, full_grid(x.grid).indices)
    sizes = f.fprime(x.left_values[z.jump_idx]) * z.jump_size
    return CadlagPath(x.grid, cont, *merge_jump_arrays(z.jump_idx, sizes))


def ya_decompose(
    f: TransformSpec,
    x: CadlagPath | DirichletSample,
    z: CadlagPath | None = None,
    model: JumpModel | None = None,
    a: float = 1.0,
    rs: RefiningSequence | None = None,
    refine: int = 1,
) -> DecompositionReport:
    """Split ``f(X)`` into the semimartingale ``Y^a`` and the remainder ``Gamma^a``."""
    if isinstance(x, DirichletSample):
        z = x.z if z is None else z
        model = x.spec.jumps if model is None else model
        x = x.x
    if z is None or model is None:
        raise ValueError("ya_decompose needs the semimartingale component and the jump model")
    if not a > 0:
        raise ValueError("threshold a must be positive")
    grid = x.grid
    fx = transform(x, f)
    big = np.abs(x.jump_size) > a
    small = _small_jump_terms(f, x, model, a, refine)
    mu_tilde = CadlagPath(grid, small.realized_free.cont - small.nu_c_comp,
                          small.realized_free.jump_idx, small.realized_free.jump_size)
    terms = {
        "f(X_0)": CadlagPath(grid, np.full(grid.n_steps + 1, fx.values[0])),
        "big_jumps": jump_compensation(f, x, big),
        "int_fprime_dZ": integral_fprime_dz(f, x, z),
        "compensated_small_jumps": mu_tilde,
        "predictable_small_jumps": small.realized_pred,
    }
    names = list(terms)
    y = linear_combination([1.0] * len(names), [terms[k] for k in names])
    gamma = fx - y
    scale = max(1.0, sup_norm(fx))
    jc = float(np.max(np.abs(gamma.jump_dense[x.jump_idx]))) if x.jump_idx.size else 0.0
    residual = float(np.max(np.abs(fx.values - (y.values + gamma.values))))
    rep = DecompositionReport("ya", terms, fx, gamma=gamma, residual=residual, jump_cancellation=jc)
    rep.summary = {"a": a, "scale": scale, "jump_cancellation": jc, "residual": residual}
    if rs is not None:
        rep.gamma_qv = weak_qv(gamma, rs)
        fqv = weak_qv(fx, rs)
        rep.summary.update({
            "gamma_qv_by_depth": rep.gamma_qv.estimates,
            "fX_qv_by_depth": fqv.estimates,
            "gamma_qv_ratio": rep.gamma_qv.estimate / max(fqv.estimate, 1e-300),
        })
    return rep


def predictable_summability(model: JumpModel, a: float) -> float:
    """``sum_s int_{|x|<=a} |x| nu({s}, dx)`` over the fixed jump times."""
    return float(sum(fj.fire_prob * expect(fj.law, np.abs, a) for fj in model.fixed_times))


def rewrite_consistency(
    f: TransformSpec,
    x: CadlagPath,
    model: JumpModel,
    a: float,
    refine: int = 1,
) -> float:
    """Sup gap between the (mu - nu) routing and the (mu~ - nu_c) routing of small jumps.

    The first routing compensates every small jump with the full compensator
    (atoms included) and adds back the predictable atoms as a separate sum;
    the second compensates only non-predictable jumps and keeps realized
    predictable ones.
    """
    t = _small_jump_terms(f, x, model, a, refine)
    realized_all = t.realized_free.values + t.realized_pred.values
    form_mu_nu = (realized_all - t.nu_c_comp - t.atom_comp) + t.atom_comp
    form_tilde = (t.realized_free.values - t.nu_c_comp) + t.realized_pred.values
    return float(np.max(np.abs(form_mu_nu - form_tilde)))
