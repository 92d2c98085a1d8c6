"""Experiment configuration files (YAML) with fail-closed key validation.

Layout::

    grid:        {horizon, n_steps}
    process:     {sigma, x0, independence, drift: {rate, knots},
                  jumps: {poisson: {intensity, law}, fixed_times: [{time | index, fire_prob, law}]},
                  zero_qv: {kind, hurst, scale}}
    family:      {kind, n_range, c, rate, hurst}
    experiment:  {transform, table, depths, schemes, seeds, base_seed, thresholds, qv_c}
    tolerances:  {...}            # any field of Tolerances
    output:      path or null

A law is ``{kind: discrete, atoms: [[value, prob], ...]}``,
``{kind: uniform, lo, hi}`` or ``{kind: truncnorm, mean, std, lo, hi}``;
``panels`` is accepted for densities.  ``depths`` and ``n_range`` are either
explicit lists or ``{min, max}`` (inclusive).
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from importlib import resources
from pathlib import Path
from typing import Any, Mapping

import yaml

from qvlab.experiments import ExperimentConfig, Tolerances
from qvlab.generators import DriftSpec, PerturbationFamily, ProcessSpec, ZeroQVSpec
from qvlab.laws import DensityLaw, DiscreteLaw, FixedTimeJump, JumpLaw, JumpModel, PoissonJumps
from qvlab.paths import TimeGrid


class ConfigError(ValueError):
    """Malformed or inconsistent configuration."""


_TOP = {"grid", "process", "family", "experiment", "tolerances", "output"}
_GRID = {"horizon", "n_steps"}
_PROCESS = {"sigma", "x0", "independence", "drift", "jumps", "zero_qv"}
_DRIFT = {"rate", "knots"}
_JUMPS = {"poisson", "fixed_times"}
_POISSON = {"intensity", "law"}
_FIXED = {"time", "index", "fire_prob", "law"}
_ZQV = {"kind", "hurst", "scale"}
_FAMILY = {"kind", "n_range", "c", "rate", "hurst"}
_EXPERIMENT = {"transform", "table", "depths", "schemes", "seeds", "base_seed", "thresholds", "qv_c"}
_TOL = {f.name for f in dataclasses.fields(Tolerances)}
_LAW = {"discrete": {"atoms"}, "uniform": {"lo", "hi", "panels"},
        "truncnorm": {"mean", "std", "lo", "hi", "panels"}}


def _section(raw: Any, allowed: set[str], where: str) -> dict:
    if raw is None:
        return {}
    if not isinstance(raw, Mapping):
        raise ConfigError(f"{where}: expected a mapping, got {type(raw).__name__}")
    extra = set(raw) - allowed
    if extra:
        raise ConfigError(f"{where}: unknown keys {sorted(map(str, extra))}")
    return dict(raw)


def _int_range(raw: Any, where: str) -> tuple[int, ...]:
    if isinstance(raw, Mapping):
        r = _section(raw, {"min", "max"}, where)
        try:
            return tuple(range(int(r["min"]), int(r["max"]) + 1))
        except KeyError as e:
            raise ConfigError(f"{where}: missing {e.args[0]!r}") from None
    if isinstance(raw, (list, tuple)):
        return tuple(int(v) for v in raw)
    raise ConfigError(f"{where}: expected a list or {{min, max}}")


def parse_law(raw: Any, where: str = "law") -> JumpLaw:
    if not isinstance(raw, Mapping) or raw.get("kind") not in _LAW:
        raise ConfigError(f"{where}: law needs kind in {sorted(_LAW)}")
    kind = raw["kind"]
    body = _section({k: v for k, v in raw.items() if k != "kind"}, _LAW[kind], where)
    if kind == "discrete":
        return DiscreteLaw(tuple((float(v), float(p)) for v, p in body["atoms"]))
    panels = int(body.pop("panels", 64))
    return DensityLaw(kind, tuple(sorted((k, float(v)) for k, v in body.items())), panels=panels)


def _jump_model(raw: Any, grid: TimeGrid) -> JumpModel:
    j = _section(raw, _JUMPS, "process.jumps")
    poisson = None
    if j.get("poisson") is not None:
        p = _section(j["poisson"], _POISSON, "process.jumps.poisson")
        poisson = PoissonJumps(float(p.get("intensity", 0.0)), parse_law(p["law"], "process.jumps.poisson.law"))
    fixed = []
    for i, fr in enumerate(j.get("fixed_times") or ()):
        where = f"process.jumps.fixed_times[{i}]"
        f = _section(fr, _FIXED, where)
        if ("time" in f) == ("index" in f):
            raise ConfigError(f"{where}: give exactly one of time or index")
        idx = int(f["index"]) if "index" in f else grid.index_of(float(f["time"]))
        fixed.append(FixedTimeJump(idx, parse_law(f["law"], where + ".law"), float(f.get("fire_prob", 1.0))))
    return JumpModel(poisson, tuple(fixed))


def build_config(raw: Any) -> ExperimentConfig:
    """Turn a parsed document into an :class:`ExperimentConfig`."""
    top = _section(raw, _TOP, "config")
    try:
        g = _section(top.get("grid"), _GRID, "grid")
        grid = TimeGrid(float(g.get("horizon", 1.0)), int(g.get("n_steps", 2**18)))
        p = _section(top.get("process"), _PROCESS, "process")
        d = _section(p.get("drift"), _DRIFT, "process.drift")
        drift = DriftSpec(float(d.get("rate", 0.0)), tuple((float(t), float(v)) for t, v in d.get("knots") or ()))
        z = _section(p.get("zero_qv"), _ZQV, "process.zero_qv")
        zero_qv = ZeroQVSpec(str(z.get("kind", "none")), float(z.get("hurst", 0.75)), float(z.get("scale", 1.0)))
        process = ProcessSpec(grid, float(p.get("sigma", 1.0)), drift, _jump_model(p.get("jumps"), grid), zero_qv,
                              bool(p.get("independence", True)), float(p.get("x0", 0.0)))
        fm = _section(top.get("family"), _FAMILY, "family")
        family = PerturbationFamily(str(fm.get("kind", "add_bm")), _int_range(fm.get("n_range", {"min": 2, "max": 10}),
                                    "family.n_range"), float(fm.get("c", 1.0)), float(fm.get("rate", 0.5)),
                                    float(fm.get("hurst", 0.75)))
        e = _section(top.get("experiment"), _EXPERIMENT, "experiment")
        tol = Tolerances(**{k: float(v) for k, v in _section(top.get("tolerances"), _TOL, "tolerances").items()})
        return ExperimentConfig(
            process=process,
            transform=str(e.get("transform", "square")),
            table=e.get("table"),
            family=family,
            depths=_int_range(e.get("depths", {"min": 10, "max": 14}), "experiment.depths"),
            schemes=tuple(dict(s) for s in e.get("schemes") or ()),
            seeds=int(e.get("seeds", 1)),
            base_seed=int(e.get("base_seed", 0)),
            thresholds=tuple(float(a) for a in e.get("thresholds", [1.0])),
            qv_c=str(e.get("qv_c", "estimate")),
            tolerances=tol,
            output=top.get("output"),
        )
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid configuration: {exc}") from exc


def parse_text(text: str) -> dict:
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"config is not valid YAML: {exc}") from exc
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping at top level")
    return raw


def load_raw(path: str | Path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_text(text)


def load_config(path: str | Path) -> ExperimentConfig:
    return build_config(load_raw(path))


def builtin_raw(name: str = "desk") -> dict:
    """A scenario shipped with the package (``configs/<name>.yaml``)."""
    res = resources.files("qvlab").joinpath("configs", f"{name}.yaml")
    if not res.is_file():
        raise ConfigError(f"no builtin config named {name!r}")
    return parse_text(res.read_text())


def config_hash(raw: Mapping[str, Any]) -> str:
    """SHA-256 of the canonical JSON form of a parsed config."""
    blob = json.dumps(raw, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()


def set_in(raw: dict, dotted: str, value: Any) -> dict:
    """Copy of ``raw`` with ``a.b.c`` set to ``value``."""
    out = json.loads(json.dumps(raw))
    node = out
    keys = dotted.split(".")
    for k in keys[:-1]:
        node = node.setdefault(k, {})
    node[keys[-1]] = value
    return out
