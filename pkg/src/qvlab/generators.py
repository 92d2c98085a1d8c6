"""Seeded simulation of Dirichlet processes ``X = Z + C``.

``Z = M + V + J`` is a Brownian martingale, a finite-variation drift and a
jump part drawn from a :class:`~qvlab.laws.JumpModel`; ``C`` is a continuous
zero-quadratic-variation path (fractional Brownian motion with H > 1/2 or a
deterministic Weierstrass-type Hölder path).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from qvlab.laws import JumpModel
from qvlab.paths import CadlagPath, TimeGrid, combine, linear_combination, merge_jump_arrays
from qvlab.streams import stream

log = logging.getLogger(__name__)

# direct factorisation is O(N^3); refuse beyond this size
_CHOLESKY_MAX = 4096


def gen_bm(grid: TimeGrid, sigma: float, rng: np.random.Generator) -> CadlagPath:
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    inc = rng.standard_normal(grid.n_steps) * (sigma * np.sqrt(grid.dt))
    return CadlagPath(grid, np.concatenate([[0.0], np.cumsum(inc)]))


def fgn_autocovariance(n: int, hurst: float) -> np.ndarray:
    """Autocovariance of unit-step fractional Gaussian noise at lags 0..n."""
    k = np.arange(n + 1, dtype=float)
    h2 = 2.0 * hurst
    return 0.5 * ((k + 1) ** h2 - 2 * k**h2 + np.abs(k - 1) ** h2)


def _fgn_cholesky(n: int, hurst: float, rng: np.random.Generator) -> np.ndarray:
    if n > _CHOLESKY_MAX:
        raise RuntimeError(f"covariance factorisation refused for n={n} > {_CHOLESKY_MAX}")
    from scipy.linalg import toeplitz

    cov = toeplitz(fgn_autocovariance(n - 1, hurst))
    return np.linalg.cholesky(cov) @ rng.standard_normal(n)


def fgn_circulant(n: int, hurst: float, rng: np.random.Generator) -> np.ndarray:
    """Exact unit-step fGn of length ``n`` by circulant embedding (Davies-Harte).

    Falls back to a Cholesky factorisation when the embedding has negative
    eigenvalues.
    """
    gamma = fgn_autocovariance(n, hurst)
    row = np.concatenate([gamma, gamma[-2:0:-1]])
    m = row.size
    eig = np.fft.fft(row).real
    if eig.min() < -1e-10 * eig.max():
        log.warning("circulant embedding not nonnegative for H=%s; using factorisation", hurst)
        return _fgn_cholesky(n, hurst, rng)
    eig = np.clip(eig, 0.0, None)
    xi = rng.standard_normal(m) + 1j * rng.standard_normal(m)
    return np.fft.fft(np.sqrt(eig / m) * xi).real[:n]


def gen_fbm(grid: TimeGrid, hurst: float, scale: float, rng: np.random.Generator) -> CadlagPath:
    if not 0.5 < hurst < 1.0:
        raise ValueError("hurst must lie in (0.5, 1) for a zero-QV path")
    inc = fgn_circulant(grid.n_steps, hurst, rng) * (scale * grid.dt**hurst)
    return CadlagPath(grid, np.concatenate([[0.0], np.cumsum(inc)]))


def gen_holder(grid: TimeGrid, alpha: float, scale: float, base: float = 2.0) -> CadlagPath:
    """Deterministic Weierstrass path ``sum_k base^{-k alpha} cos(base^k pi t / T)``."""
    if not 0.5 < alpha < 1.0:
        raise ValueError("alpha must lie in (0.5, 1) for a zero-QV path")
    t = grid.times / grid.horizon
    n_terms = int(np.ceil(np.log(grid.n_steps) / np.log(base))) + 2
    out = np.zeros_like(t)
    for k in range(n_terms):
        out += base ** (-k * alpha) * np.cos(base**k * np.pi * t)
    return CadlagPath(grid, scale * (out - out[0]))


def gen_jumps(
    grid: TimeGrid,
    model: JumpModel,
    rng: np.random.Generator,
    rng_fixed: np.random.Generator | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Jump indices and sizes; Poisson arrivals snap to the next grid index."""
    rng_fixed = rng if rng_fixed is None else rng_fixed
    idx_parts, size_parts = [], []
    if model.poisson is not None and model.poisson.intensity > 0:
        count = rng.poisson(model.poisson.intensity * grid.horizon)
        times = rng.uniform(0.0, grid.horizon, size=count)
        idx = np.clip(np.ceil(times / grid.dt).astype(np.int64), 1, grid.n_steps)
        idx_parts.append(idx)
        size_parts.append(model.poisson.law.sample(rng, count))
    for fj in model.fixed_times:
        if fj.grid_index > grid.n_steps:
            raise ValueError(f"fixed jump index {fj.grid_index} beyond grid")
        # both draws happen regardless of the outcome so streams stay aligned
        fires = rng_fixed.random() < fj.fire_prob
        size = fj.law.sample(rng_fixed, 1)
        if fires:
            idx_parts.append(np.array([fj.grid_index]))
            size_parts.append(size)
    if not idx_parts:
        return np.zeros(0, dtype=np.int64), np.zeros(0)
    return merge_jump_arrays(np.concatenate(idx_parts), np.concatenate(size_parts))


@dataclass(frozen=True)
class DriftSpec:
    """Finite-variation part: constant ``rate`` plus piecewise-linear ``knots``."""

    rate: float = 0.0
    knots: tuple[tuple[float, float], ...] = ()

    def path(self, grid: TimeGrid, x0: float = 0.0) -> CadlagPath:
        v = x0 + self.rate * grid.times
        if self.knots:
            kt = np.array([k[0] for k in self.knots])
            kv = np.array([k[1] for k in self.knots])
            v = v + np.interp(grid.times, kt, kv)
        return CadlagPath(grid, v)


@dataclass(frozen=True)
class ZeroQVSpec:
    kind: str = "none"
    hurst: float = 0.75
    scale: float = 1.0

    def __post_init__(self) -> None:
        if self.kind not in ("none", "fbm", "holder"):
            raise ValueError(f"unknown zero-QV kind {self.kind!r}")
        if self.kind != "none" and not 0.5 < self.hurst < 1.0:
            raise ValueError("zero-QV part needs hurst in (0.5, 1)")
        if not np.isfinite(self.scale):
            raise ValueError("scale must be finite")


@dataclass(frozen=True)
class ProcessSpec:
    grid: TimeGrid
    sigma: float = 1.0
    drift: DriftSpec = field(default_factory=DriftSpec)
    jumps: JumpModel = field(default_factory=JumpModel)
    zero_qv: ZeroQVSpec = field(default_factory=ZeroQVSpec)
    independence: bool = True
    x0: float = 0.0

    def __post_init__(self) -> None:
        if not (np.isfinite(self.sigma) and self.sigma >= 0):
            raise ValueError("sigma must be finite and nonnegative")
        for fj in self.jumps.fixed_times:
            if fj.grid_index > self.grid.n_steps:
                raise ValueError("fixed jump time beyond the grid")


@dataclass(frozen=True, eq=False)
class DirichletSample:
    """A generated path together with its components ``X = Z + C``."""

    x: CadlagPath
    z: CadlagPath
    c: CadlagPath
    m: CadlagPath
    v: CadlagPath
    j: CadlagPath
    spec: ProcessSpec
    seed: int

    @property
    def predictable_indices(self) -> np.ndarray:
        return self.spec.jumps.predictable_indices

    def qv_c_exact(self) -> np.ndarray:
        """Generator-exact continuous quadratic variation ``sigma^2 s``."""
        return self.spec.sigma**2 * self.x.grid.times


def gen_dirichlet(spec: ProcessSpec, seed: int, c_seed: int | None = None, member: int = 0) -> DirichletSample:
    grid = spec.grid
    rng_bm = stream(seed, "bm", member)
    m = gen_bm(grid, spec.sigma, rng_bm)
    v = spec.drift.path(grid, spec.x0)
    idx, size = gen_jumps(grid, spec.jumps, stream(seed, "jumps.poisson", member), stream(seed, "jumps.fixed", member))
    j = CadlagPath(grid, np.zeros(grid.n_steps + 1), idx, size)
    zq = spec.zero_qv
    if zq.kind == "fbm":
        if spec.independence:
            rng_c = stream(seed if c_seed is None else c_seed, "zero_qv", member)
        else:
            rng_c = rng_bm  # shares the martingale's stream
        c = gen_fbm(grid, zq.hurst, zq.scale, rng_c)
    elif zq.kind == "holder":
        c = gen_holder(grid, zq.hurst, zq.scale)
    else:
        c = CadlagPath.zeros(grid)
    z = linear_combination([1.0, 1.0, 1.0], [m, v, j])
    x = combine(1.0, z, 1.0, c)
    return DirichletSample(x=x, z=z, c=c, m=m, v=v, j=j, spec=spec, seed=seed)


@dataclass(frozen=True)
class PerturbationFamily:
    """``X^n`` converging to ``X`` with size ``c * 2^{-rate n}``.

    ``kind`` is ``"add_bm"``, ``"add_zero_qv"`` (fBm with ``hurst``) or
    ``"jump_scale"`` (each jump multiplied by ``1 + delta_n``).
    """

    kind: str
    n_range: tuple[int, ...]
    c: float = 1.0
    rate: float = 0.5
    hurst: float = 0.75

    def __post_init__(self) -> None:
        if self.kind not in ("add_bm", "add_zero_qv", "jump_scale"):
            raise ValueError(f"unknown perturbation kind {self.kind!r}")
        object.__setattr__(self, "n_range", tuple(int(n) for n in self.n_range))
        if not self.n_range:
            raise ValueError("n_range must not be empty")
        if self.c != 0 and not self.rate > 0:
            raise ValueError("rate must be positive so that eps_n -> 0")

    def eps(self, n: int) -> float:
        return self.c * 2.0 ** (-self.rate * n)

    @property
    def eps_values(self) -> np.ndarray:
        return np.array([self.eps(n) for n in self.n_range])

    @property
    def hypothesis_status(self) -> str:
        return "hypothesis-unverified" if self.kind == "jump_scale" else "strong-Dirichlet-by-construction"


def gen_perturbed_family(x: CadlagPath | DirichletSample, fam: PerturbationFamily, seed: int) -> list[CadlagPath]:
    base = x.x if isinstance(x, DirichletSample) else x
    grid = base.grid
    out = []
    for n in fam.n_range:
        eps = fam.eps(n)
        if fam.kind == "add_bm":
            w = gen_bm(grid, 1.0, stream(seed, "perturb.bm", n))
            out.append(combine(1.0, base, eps, w))
        elif fam.kind == "add_zero_qv":
            w = gen_fbm(grid, fam.hurst, 1.0, stream(seed, "perturb.fbm", n))
            out.append(combine(1.0, base, eps, w))
        else:
            out.append(combine(1.0, base, eps, base.pure_jump_part()))
    return out

