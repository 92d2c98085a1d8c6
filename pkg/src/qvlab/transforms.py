"""Transforms ``f`` with right-hand derivatives, plus the builtin catalogue."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

Func = Callable[[np.ndarray], np.ndarray]

CLASSES = ("C2", "C1", "PrimitiveOfCadlag")


@dataclass(frozen=True, eq=False)
class TransformSpec:
    """``f`` with its right-continuous right-hand derivative ``fprime``.

    ``disc`` lists the discontinuity points of ``fprime``; ``fsecond`` is
    required for class ``C2``.
    """

    name: str
    f: Func
    fprime: Func
    cls: str
    disc: tuple[float, ...] = ()
    fsecond: Func | None = None

    def __post_init__(self) -> None:
        if self.cls not in CLASSES:
            raise ValueError(f"unknown transform class {self.cls!r}")
        if self.cls == "C2" and (self.fsecond is None or self.disc):
            raise ValueError("a C2 transform needs fsecond and a continuous derivative")
        object.__setattr__(self, "disc", tuple(sorted(float(d) for d in self.disc)))

    def __call__(self, x):
        return self.f(np.asarray(x, dtype=float))

    def lipschitz_bound(self, lo: float, hi: float, samples: int = 4097) -> float:
        """``sup |f'|`` over ``[lo, hi]``, including one-sided limits at ``disc``."""
        if lo > hi:
            lo, hi = hi, lo
        pts = [np.linspace(lo, hi, samples)]
        inner = np.array([d for d in self.disc if lo <= d <= hi])
        if inner.size:
            pts += [inner, inner - 1e-12 * (1 + np.abs(inner))]
        x = np.clip(np.concatenate(pts), lo, hi)
        return float(np.max(np.abs(self.fprime(x))))

    def check_right_derivative(self, points: Sequence[float], h: float = 1e-6, tol: float = 1e-4) -> bool:
        """Forward difference quotients agree with ``fprime`` away from ``disc``."""
        x = np.asarray(points, dtype=float)
        if self.disc:
            d = np.asarray(self.disc)
            gap = np.min(np.abs(x[:, None] - d[None, :]), axis=1)
            x = x[gap > 10 * h]
        fd = (self.f(x + h) - self.f(x)) / h
        fp = self.fprime(x)
        return bool(np.all(np.abs(fd - fp) <= tol * np.maximum(1.0, np.abs(fp))))


def _sign_right(x):
    return np.where(np.asarray(x) >= 0, 1.0, -1.0)


IDENTITY = TransformSpec("identity", lambda x: np.asarray(x, dtype=float), lambda x: np.ones_like(x, dtype=float),
                         "C2", fsecond=lambda x: np.zeros_like(x, dtype=float))
SQUARE = TransformSpec("square", lambda x: np.square(x), lambda x: 2.0 * np.asarray(x), "C2",
                       fsecond=lambda x: np.full_like(x, 2.0, dtype=float))
CUBIC = TransformSpec("cubic", lambda x: np.power(x, 3), lambda x: 3.0 * np.square(x), "C2",
                      fsecond=lambda x: 6.0 * np.asarray(x))
ABS = TransformSpec("abs", lambda x: np.abs(x), _sign_right, "PrimitiveOfCadlag", disc=(0.0,))
SIGNED_SQUARE = TransformSpec("signed_square", lambda x: np.asarray(x) * np.abs(x), lambda x: 2.0 * np.abs(x), "C1")


def table_transform(xs: Sequence[float], ys: Sequence[float], name: str = "custom-table") -> TransformSpec:
    """Piecewise-linear ``f`` through ``(xs, ys)``, extended linearly at both ends.

    Its right-hand derivative is the right-continuous step function of slopes.
    """
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.size < 2 or np.any(np.diff(xs) <= 0):
        raise ValueError("table abscissae must be strictly increasing, at least two")
    slopes = np.diff(ys) / np.diff(xs)

    def fprime(x):
        k = np.clip(np.searchsorted(xs, np.asarray(x, dtype=float), side="right") - 1, 0, slopes.size - 1)
        return slopes[k]

    def f(x):
        x = np.asarray(x, dtype=float)
        k = np.clip(np.searchsorted(xs, x, side="right") - 1, 0, slopes.size - 1)
        return ys[k] + slopes[k] * (x - xs[k])

    return TransformSpec(name, f, fprime, "PrimitiveOfCadlag", disc=tuple(xs[1:-1]))


CATALOGUE = {t.name: t for t in (IDENTITY, SQUARE, CUBIC, ABS, SIGNED_SQUARE)}


def get_transform(name: str, table: dict | None = None) -> TransformSpec:
    if name == "custom-table":
        if not table:
            raise ValueError("custom-table transform needs a table with xs and ys")
        return table_transform(table["xs"], table["ys"])
    try:
        return CATALOGUE[name]
    except KeyError:
        raise ValueError(f"unknown transform {name!r}; choose from {sorted(CATALOGUE) + ['custom-table']}") from None
