"""CSV / JSON writers with stable layouts."""

from __future__ import annotations

import dataclasses
import json
import math
from pathlib import Path

import numpy as np

from .simulate import CascadeSample, ProjectedMasses
from .spectra import SpectrumCurve


def _num(x: float) -> str:
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return repr(x)


def jsonable(obj):
    """Convert reports to plain JSON types; infinities become "inf"."""
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {f.name: jsonable(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x):
            return None
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    return obj


def write_json(path: Path, obj) -> None:
    Path(path).write_text(json.dumps(jsonable(obj), indent=2, sort_keys=True) + "\n")


def write_curve(path: Path, curve: SpectrumCurve) -> None:
    legendre = curve.kind.endswith("*")
    lines = ["alpha,value" if legendre else "q,value,branch"]
    for x, y, lab in zip(curve.grid, curve.values, curve.branch_labels):
        lines.append(f"{_num(x)},{_num(y)}" if legendre else f"{_num(x)},{_num(y)},{lab}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_curve(path: Path) -> tuple[list[float], list[float], list[str]]:
    rows = Path(path).read_text().strip().splitlines()[1:]
    xs, ys, labs = [], [], []
    for row in rows:
        parts = row.split(",")
        xs.append(float(parts[0]))
        ys.append(float(parts[1]))
        labs.append(parts[2] if len(parts) > 2 else "")
    return xs, ys, labs


def _path_string(index: int, depth: int, m: int) -> str:
    digits = []
    for _ in range(depth):
        index, r = divmod(index, m)
        digits.append(str(r) if m <= 10 else f"{r}.")
    return "".join(reversed(digits))


def write_sample(path: Path, sample: CascadeSample) -> None:
    lines = ["u,v,mass"]
    for u, v, w in zip(sample.u.tolist(), sample.v.tolist(), sample.mass.tolist()):
        lines.append(f"{_path_string(u, sample.depth, sample.m)},"
                     f"{_path_string(v, sample.depth, sample.m)},{w!r}")
    Path(path).write_text("\n".join(lines) + "\n")


def write_projected(path: Path, pm: ProjectedMasses) -> None:
    lines = ["u,pi_mass,count"]
    for u, (w, c) in enumerate(zip(pm.masses.tolist(), pm.counts.tolist())):
        lines.append(f"{_path_string(u, pm.depth, pm.m)},{w!r},{c}")
    Path(path).write_text("\n".join(lines) + "\n")
