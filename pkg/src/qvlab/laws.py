"""Jump-size laws and two-part jump models with known compensators.

A :class:`JumpModel` has an optional Poisson part with intensity ``lam`` and
size law ``F`` (compensator ``lam ds F(dx)``) and a finite list of fixed
times that fire with probability ``p_k`` and size law ``G_k`` (compensator
atom ``p_k G_k(dx)``).  The fixed times form the set of purely predictable
jump times.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import special

# Gauss-Legendre rule used on every panel of a density law
_GL_ORDER = 8
_GL_X, _GL_W = np.polynomial.legendre.leggauss(_GL_ORDER)


def composite_gauss_legendre(
    lo: float,
    hi: float,
    panels: int,
    breakpoints: Sequence[float] = (),
    order: int = _GL_ORDER,
) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights of a composite Gauss-Legendre rule on ``[lo, hi]``.

    ``panels`` equal panels are used, with extra panel edges at every
    breakpoint strictly inside the interval.
    """
    if order == _GL_ORDER:
        gx, gw = _GL_X, _GL_W
    else:
        gx, gw = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(lo, hi, panels + 1)
    inner = [b for b in breakpoints if lo < b < hi]
    if inner:
        edges = np.unique(np.concatenate([edges, inner]))
    a, b = edges[:-1, None], edges[1:, None]
    half = 0.5 * (b - a)
    x = (a + half * (gx[None, :] + 1.0)).ravel()
    w = (half * gw[None, :]).ravel()
    return x, w


@dataclass(frozen=True)
class DiscreteLaw:
    """Finitely many nonzero atoms with probabilities summing to one."""

    atoms: tuple[tuple[float, float], ...]

    def __post_init__(self) -> None:
        atoms = tuple((float(v), float(p)) for v, p in self.atoms)
        if not atoms:
            raise ValueError("a discrete law needs at least one atom")
        if any(v == 0.0 for v, _ in atoms):
            raise ValueError("jump laws must not charge 0")
        if any(p < 0 for _, p in atoms) or abs(sum(p for _, p in atoms) - 1.0) > 1e-12:
            raise ValueError("atom probabilities must be nonnegative and sum to 1")
        object.__setattr__(self, "atoms", atoms)

    @property
    def values(self) -> np.ndarray:
        return np.array([v for v, _ in self.atoms])

    @property
    def probs(self) -> np.ndarray:
        return np.array([p for _, p in self.atoms])

    @property
    def support(self) -> tuple[float, float]:
        return float(self.values.min()), float(self.values.max())

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if len(self.atoms) == 1:
            return np.full(n, self.atoms[0][0])
        return self.values[rng.choice(len(self.atoms), size=n, p=self.probs)]

    def nodes(self, refine: int = 1, breakpoints: Sequence[float] = ()) -> tuple[np.ndarray, np.ndarray]:
        """Quadrature nodes and weights; exact for atoms."""
        return self.values, self.probs

    def is_exact(self) -> bool:
        return True


@dataclass(frozen=True)
class DensityLaw:
    """Absolutely continuous law on a bounded support.

    ``kind`` is ``"uniform"`` (params ``lo``, ``hi``) or ``"truncnorm"``
    (params ``mean``, ``std``, ``lo``, ``hi``).
    """

    kind: str
    params: tuple[tuple[str, float], ...]
    panels: int = 64

    def __post_init__(self) -> None:
        params = tuple(sorted((str(k), float(v)) for k, v in dict(self.params).items()))
        object.__setattr__(self, "params", params)
        p = dict(params)
        if self.kind not in ("uniform", "truncnorm"):
            raise ValueError(f"unknown density kind {self.kind!r}")
        if not (np.isfinite(p["lo"]) and np.isfinite(p["hi"]) and p["lo"] < p["hi"]):
            raise ValueError("density support must be a bounded interval")
        if self.kind == "truncnorm" and not p["std"] > 0:
            raise ValueError("truncnorm needs std > 0")

    @property
    def p(self) -> dict[str, float]:
        return dict(self.params)

    @property
    def support(self) -> tuple[float, float]:
        return self.p["lo"], self.p["hi"]

    def _std_bounds(self) -> tuple[float, float]:
        p = self.p
        return (p["lo"] - p["mean"]) / p["std"], (p["hi"] - p["mean"]) / p["std"]

    def pdf(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        p = self.p
        inside = (x >= p["lo"]) & (x <= p["hi"])
        if self.kind == "uniform":
            return np.where(inside, 1.0 / (p["hi"] - p["lo"]), 0.0)
        alpha, beta = self._std_bounds()
        mass = special.ndtr(beta) - special.ndtr(alpha)
        z = (x - p["mean"]) / p["std"]
        dens = np.exp(-0.5 * z * z) / (np.sqrt(2 * np.pi) * p["std"] * mass)
        return np.where(inside, dens, 0.0)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        p = self.p
        u = rng.random(n)
        if self.kind == "uniform":
            return p["lo"] + (p["hi"] - p["lo"]) * u
        alpha, beta = self._std_bounds()
        lo_c, hi_c = special.ndtr(alpha), special.ndtr(beta)
        return p["mean"] + p["std"] * special.ndtri(lo_c + u * (hi_c - lo_c))

    def nodes(self, refine: int = 1, breakpoints: Sequence[float] = ()) -> tuple[np.ndarray, np.ndarray]:
        lo, hi = self.support
        x, w = composite_gauss_legendre(lo, hi, self.panels * refine, breakpoints)
        return x, w * self.pdf(x)

    def is_exact(self) -> bool:
        return False


JumpLaw = DiscreteLaw | DensityLaw


def expect(law: JumpLaw, g: Callable[[np.ndarray], np.ndarray], a: float | None = None, refine: int = 1) -> float:
    """``E[g(x) 1{|x| <= a}]`` under ``law`` (no restriction when ``a`` is None)."""
    x, w = restricted_nodes(law, a, refine)
    return float(np.dot(w, g(x))) if x.size else 0.0


def restricted_nodes(law: JumpLaw, a: float | None, refine: int = 1,
                     breakpoints: Sequence[float] = ()) -> tuple[np.ndarray, np.ndarray]:
    bps = list(breakpoints) + ([] if a is None else [-a, a])
    x, w = law.nodes(refine, bps)
    if a is not None:
        keep = np.abs(x) <= a
        x, w = x[keep], w[keep]
    return x, w


@dataclass(frozen=True)
class PoissonJumps:
    intensity: float
    law: JumpLaw

    def __post_init__(self) -> None:
        if not self.intensity >= 0:
            raise ValueError("intensity must be nonnegative")


@dataclass(frozen=True)
class FixedTimeJump:
    grid_index: int
    law: JumpLaw
    fire_prob: float = 1.0

    def __post_init__(self) -> None:
        if not 0.0 <= self.fire_prob <= 1.0:
            raise ValueError("fire_prob must lie in [0, 1]")
        if self.grid_index < 1:
            raise ValueError("fixed jump times must be at grid index >= 1")


@dataclass(frozen=True)
class JumpModel:
    poisson: PoissonJumps | None = None
    fixed_times: tuple[FixedTimeJump, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        fixed = tuple(sorted(self.fixed_times, key=lambda f: f.grid_index))
        idx = [f.grid_index for f in fixed]
        if len(set(idx)) != len(idx):
            raise ValueError("fixed jump times must be distinct")
        object.__setattr__(self, "fixed_times", fixed)

    @property
    def intensity(self) -> float:
        return self.poisson.intensity if self.poisson is not None else 0.0

    @property
    def predictable_indices(self) -> np.ndarray:
        return np.array([f.grid_index for f in self.fixed_times], dtype=np.int64)


@dataclass(frozen=True)
class CompensatorInfo:
    """Compensator of a :class:`JumpModel` in computable form.

    ``nu_c_nodes`` are nodes/weights of ``lam F(dx)``, the time density of the
    non-predictable part; ``atoms`` maps each predictable grid index to nodes
    and weights of ``nu({s}, dx) = p G(dx)``.
    """

    intensity: float
    nu_c_nodes: tuple[np.ndarray, np.ndarray]
    atoms: dict[int, tuple[np.ndarray, np.ndarray]]
    calA: frozenset[int]

    def nu_c_integral(self, g: Callable[[np.ndarray], np.ndarray], horizon: float) -> float:
        """``int_0^horizon int g(x) nu_c(ds, dx)`` for a time-independent ``g``."""
        x, w = self.nu_c_nodes
        return float(horizon * np.dot(w, g(x))) if x.size else 0.0

    def atom_integral(self, index: int, g: Callable[[np.ndarray], np.ndarray]) -> float:
        x, w = self.atoms[index]
        return float(np.dot(w, g(x)))


def compensator_queries(model: JumpModel, a: float | None = None, refine: int = 1) -> CompensatorInfo:
    if model.poisson is not None and model.poisson.intensity > 0:
        x, w = restricted_nodes(model.poisson.law, a, refine)
        nu_c = (x, model.poisson.intensity * w)
    else:
        nu_c = (np.zeros(0), np.zeros(0))
    atoms = {}
    for fj in model.fixed_times:
        x, w = restricted_nodes(fj.law, a, refine)
        atoms[fj.grid_index] = (x, fj.fire_prob * w)
    return CompensatorInfo(model.intensity, nu_c, atoms, frozenset(atoms))

