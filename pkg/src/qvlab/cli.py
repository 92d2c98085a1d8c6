"""Quadratic-variation experiments on simulated cadlag paths.

Exit codes: 0 pass, 1 verdict failure, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from qvlab import acceptance, io
from qvlab.config import ConfigError, build_config, builtin_raw, config_hash, load_raw, set_in
from qvlab.decomposition import DECOMP_COLUMNS, follmer_decompose, lowther_qv_identity, ya_decompose
from qvlab.experiments import (
    STABILITY_COLUMNS,
    SUITE_COLUMNS,
    ExperimentConfig,
    run_decomposition_suite,
    run_stability,
)
from qvlab.generators import gen_dirichlet
from qvlab.partitions import PartitionError, build_partition, mesh, scheme_label
from qvlab.quadvar import QV_COLUMNS, qv_process, strong_qv_sweep, weak_qv

log = logging.getLogger("qvlab")

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def parse_depths(text: str) -> list[int]:
    """``"10:14"`` (inclusive range) or ``"6,10,14"``."""
    try:
        if ":" in text:
            lo, hi = text.split(":")
            return list(range(int(lo), int(hi) + 1))
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"cannot parse depths {text!r}") from None


def _number(v: str) -> Any:
    try:
        return int(v)
    except ValueError:
        try:
            return float(v)
        except ValueError:
            return v


def parse_scheme(text: str) -> dict:
    """``"hitting:epsilon=0.05,cap=0.01"`` -> ``{"name": "hitting", ...}``."""
    name, _, rest = text.partition(":")
    out: dict[str, Any] = {"name": name}
    for item in filter(None, rest.split(",")):
        key, eq, val = item.partition("=")
        if not eq:
            raise UsageError(f"scheme parameter {item!r} must be key=value")
        out[key.strip()] = _number(val.strip())
    return out


def _raw_config(args: argparse.Namespace) -> dict:
    if args.config is None:
        raw = builtin_raw("desk")
    else:
        raw = load_raw(args.config)
        # a run manifest carries the effective config it was produced from
        if "config_hash" in raw and "config" in raw:
            raw = raw["config"]
    if args.seed is not None:
        raw = set_in(raw, "experiment.base_seed", args.seed)
    if args.depths is not None:
        raw = set_in(raw, "experiment.depths", parse_depths(args.depths))
    if args.scheme:
        raw = set_in(raw, "experiment.schemes", [parse_scheme(s) for s in args.scheme])
    if args.transform is not None:
        raw = set_in(raw, "experiment.transform", args.transform)
    if args.threshold_a:
        raw = set_in(raw, "experiment.thresholds", [float(a) for a in args.threshold_a])
    return raw


def _setup(args: argparse.Namespace) -> tuple[dict, ExperimentConfig, Path]:
    raw = _raw_config(args)
    cfg = build_config(raw)
    out = Path(args.out or cfg.output or "qvlab-out")
    return raw, cfg, out


def _manifest(out: Path, raw: dict, cfg: ExperimentConfig, command: str, files: Sequence[Path],
              extra: dict | None = None) -> None:
    data = io.manifest(config_hash(raw), cfg.base_seed, command,
                       {"config": raw, "outputs": sorted(p.name for p in files), **(extra or {})})
    io.write_manifest(out, data)


def cmd_generate(args: argparse.Namespace) -> int:
    raw, cfg, out = _setup(args)
    files = []
    for seed in cfg.seed_list():
        sample = gen_dirichlet(cfg.process, seed)
        files.append(io.write_path(out / f"path_seed{seed}.txt", sample.x))
    _manifest(out, raw, cfg, "generate", files)
    print(f"wrote {len(files)} path file(s) to {out}")
    return EXIT_OK


def _qv_rows(path, cfg: ExperimentConfig) -> list[list[Any]]:
    rep = weak_qv(path, cfg.refining())
    rows = rep.to_rows()
    grid = path.grid
    for sch in cfg.schemes:
        part = build_partition(sch, path)
        label = scheme_label(sch)
        proc = qv_process(path, part)
        idx = part.indices
        sel = idx if idx.size <= 1024 else idx[np.unique(np.linspace(0, idx.size - 1, 1024).round().astype(int))]
        m = mesh(part, grid)
        rows.extend([label, m, float(grid.times[i]), float(proc[i])] for i in sel)
    if cfg.schemes:
        sweep = strong_qv_sweep(path, cfg.schemes, rep)
        for lab, m, dev in zip(sweep.labels, sweep.meshes, sweep.deviations):
            rows.append([f"summary:strong_deviation:{lab}", float(m), grid.horizon, float(dev)])
    return rows


def cmd_qv(args: argparse.Namespace) -> int:
    raw, cfg, out = _setup(args)
    files = []
    if args.inputs:
        for p in args.inputs:
            try:
                path = io.read_path(p)
            except (OSError, ValueError) as exc:
                raise UsageError(f"cannot read path file {p}: {exc}") from exc
            if path.grid != cfg.process.grid:
                # depths are validated against the grid of the input
                raw = set_in(set_in(raw, "grid.n_steps", path.n_steps), "grid.horizon", path.grid.horizon)
                cfg = build_config(raw)
            files.append(io.write_csv(out / f"qv_{Path(p).stem}.csv", QV_COLUMNS, _qv_rows(path, cfg)))
    else:
        for seed in cfg.seed_list():
            path = gen_dirichlet(cfg.process, seed).x
            files.append(io.write_csv(out / f"qv_seed{seed}.csv", QV_COLUMNS, _qv_rows(path, cfg)))
    _manifest(out, raw, cfg, "qv", files)
    print(f"wrote {len(files)} QV report(s) to {out}")
    return EXIT_OK


def cmd_decompose(args: argparse.Namespace) -> int:
    raw, cfg, out = _setup(args)
    f = cfg.transform_spec()
    rs = cfg.refining()
    files = []
    for seed in cfg.seed_list():
        sample = gen_dirichlet(cfg.process, seed)
        qv_c = sample.qv_c_exact() if cfg.qv_c == "exact" else None
        low = lowther_qv_identity(f, sample.x, rs, qv_c)
        for a in cfg.thresholds:
            rep = ya_decompose(f, sample, a=a, rs=rs)
            rep.summary.update({"lowther_gap": low.gap, "lowther_occupation": low.occupation})
            if f.cls == "C2":
                fr = follmer_decompose(f, sample.x, rs, qv_c)
                rep.summary["follmer_residual_by_depth"] = fr.summary["residual_by_depth"]
            files.append(io.write_csv(out / f"decompose_seed{seed}_a{a!r}.csv", DECOMP_COLUMNS, rep.to_rows()))
    suite = run_decomposition_suite(cfg, jobs=args.jobs)
    files.append(io.write_csv(out / "suite.csv", SUITE_COLUMNS, suite.to_rows()))
    _manifest(out, raw, cfg, "decompose", files, {"verdicts": suite.verdicts})
    for k, v in suite.verdicts.items():
        print(f"[{'PASS' if v else 'FAIL'}] {k}")
    return EXIT_OK if suite.passed else EXIT_FAIL


def cmd_stability(args: argparse.Namespace) -> int:
    raw, cfg, out = _setup(args)
    rep = run_stability(cfg, jobs=args.jobs)
    files = [io.write_csv(out / "stability.csv", STABILITY_COLUMNS, rep.to_rows())]
    _manifest(out, raw, cfg, "stability", files,
              {"verdicts": rep.verdicts, "family_status": rep.family_status})
    for k, v in rep.verdicts.items():
        print(f"[{'PASS' if v else 'FAIL'}] {k}")
    if rep.sup_drift_flag:
        print("note: 99th percentile of sup|X^n| drifts upward across n")
    return EXIT_OK if rep.passed else EXIT_FAIL


def cmd_check(args: argparse.Namespace) -> int:
    keys = list(acceptance.CRITERIA)
    if args.config is not None:
        # rerun from a check manifest: same criteria, same fixed scenarios
        prior = load_raw(args.config)
        if prior.get("command") != "check" or "criteria" not in prior:
            raise UsageError(f"{args.config} is not a manifest written by check")
        keys = list(prior["criteria"])
    if args.only:
        keys = [k.strip() for k in args.only.split(",")]
    bad = [k for k in keys if k not in acceptance.CRITERIA]
    if bad:
        raise UsageError(f"unknown criteria {bad}; choose from {list(acceptance.CRITERIA)}")
    out = Path(args.out or "qvlab-check")
    results = acceptance.run_all(keys)
    rows = [r for res in results for r in res.rows()]
    files = [io.write_csv(out / "acceptance.csv", acceptance.ACCEPTANCE_COLUMNS, rows)]
    raw = acceptance.desk_raw()
    data = io.manifest(config_hash(raw), 0, "check",
                       {"config": raw, "criteria": keys, "outputs": [p.name for p in files]})
    io.write_manifest(out, data)
    for res in results:
        print(res.line())
    return EXIT_OK if all(r.passed for r in results) else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML experiment config or a run manifest (default: builtin desk)")
    common.add_argument("--seed", type=int, help="base seed (overrides experiment.base_seed)")
    common.add_argument("--jobs", type=int, default=1, help="worker processes for ensembles")
    common.add_argument("--out", help="output directory")
    common.add_argument("--depths", help="dyadic depths, e.g. 10:14 or 6,10,14")
    common.add_argument("--scheme", action="append", default=[],
                        help="partition scheme, e.g. dyadic:depth=12 or hitting:epsilon=0.05,cap=0.01")
    common.add_argument("--transform", help="identity, square, cubic, abs, signed_square or custom-table")
    common.add_argument("--threshold-a", action="append", type=float, default=[],
                        help="jump-size threshold a (repeatable)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="qvlab", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("generate", parents=[common], help="simulate paths and write them").set_defaults(fn=cmd_generate)
    q = sub.add_parser("qv", parents=[common], help="quadratic-variation reports")
    q.add_argument("inputs", nargs="*", help="path files written by generate (default: simulate from config)")
    q.set_defaults(fn=cmd_qv)
    sub.add_parser("decompose", parents=[common], help="term-by-term decompositions").set_defaults(fn=cmd_decompose)
    sub.add_parser("stability", parents=[common], help="perturbation stability report").set_defaults(
        fn=cmd_stability)
    c = sub.add_parser("check", parents=[common], help="run the acceptance suite")
    c.add_argument("--only", help="comma-separated criterion keys, e.g. C1,C3")
    c.set_defaults(fn=cmd_check)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.jobs < 1:
        print("error: --jobs must be at least 1", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.fn(args)
    except (ConfigError, PartitionError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
