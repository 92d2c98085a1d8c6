"""Text serialization of paths, CSV reports and run manifests.

Floats are written with ``repr`` so every file round-trips bit-exactly.
"""

from __future__ import annotations

import csv
import json
import platform
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from qvlab.paths import CadlagPath, TimeGrid


def _fmt(v: Any) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return str(v)


def write_csv(path: str | Path, columns: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(v) for v in r])
    return path


def read_csv(path: str | Path) -> list[dict[str, str]]:
    with Path(path).open(newline="") as fh:
        return list(csv.DictReader(fh))


def dump_path(path: CadlagPath) -> str:
    """Header ``horizon n_steps jump_count``, cont samples, then ``index size`` lines."""
    g = path.grid
    lines = [f"{g.horizon!r} {g.n_steps} {path.jump_idx.size}"]
    lines.extend(repr(float(v)) for v in path.cont)
    lines.extend(f"{int(i)} {float(s)!r}" for i, s in zip(path.jump_idx, path.jump_size))
    return "\n".join(lines) + "\n"


def parse_path(text: str) -> CadlagPath:
    lines = text.split("\n")
    try:
        horizon, n_steps, count = lines[0].split()
        grid = TimeGrid(float(horizon), int(n_steps))
        n, k = int(n_steps), int(count)
        cont = np.array([float(v) for v in lines[1:n + 2]])
        pairs = [lines[i].split() for i in range(n + 2, n + 2 + k)]
    except (ValueError, IndexError) as exc:
        raise ValueError(f"malformed path file: {exc}") from exc
    if cont.size != n + 1 or any(len(p) != 2 for p in pairs):
        raise ValueError("malformed path file: truncated")
    idx = np.array([int(p[0]) for p in pairs], dtype=np.int64)
    size = np.array([float(p[1]) for p in pairs])
    return CadlagPath(grid, cont, idx, size)


def write_path(file: str | Path, path: CadlagPath) -> Path:
    file = Path(file)
    file.parent.mkdir(parents=True, exist_ok=True)
    file.write_text(dump_path(path))
    return file


def read_path(file: str | Path) -> CadlagPath:
    return parse_path(Path(file).read_text())


def versions() -> dict[str, str]:
    import scipy

    from qvlab import __version__

    return {"qvlab": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version()}


def manifest(config_hash: str, seed: int, command: str, extra: Mapping[str, Any] | None = None) -> dict:
    """Run manifest; it holds no timestamps so reruns are byte-identical."""
    out = {"command": command, "config_hash": config_hash, "seed": int(seed), "versions": versions()}
    if extra:
        out.update(extra)
    return out


def write_manifest(directory: str | Path, data: Mapping[str, Any]) -> Path:
    path = Path(directory) / "manifest.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(data, sort_keys=True, indent=2, default=str) + "\n")
    return path
