"""Built-in model presets stored as JSON data files."""

from __future__ import annotations

import itertools
import json
from importlib import resources

import numpy as np

from .model import ModelError, WeightModel, load_model


def _read(name: str) -> dict:
    path = resources.files(__package__) / "presets" / f"{name}.json"
    if not path.is_file():
        raise ModelError(f"unknown preset {name!r}")
    return json.loads(path.read_text())


def preset_names() -> list[str]:
    folder = resources.files(__package__) / "presets"
    names = [p.name[:-5] for p in folder.iterdir() if p.name.endswith(".json")]
    return sorted(n for n in names if n != "figures")


def figure_map() -> dict[str, list[str]]:
    return _read("figures")


def dominant_row_document(m: int, p0: float, beta: float, lam: float, v00: float,
                          name: str = "dominant-row") -> dict:
    """Row 0 deterministic (v00, 1-v00, 0...), other rows with independent
    entries equal to beta/m w.p. lam/beta and c otherwise; W = p_i V."""
    rest = (1.0 - p0) / (m - 1)
    p = [p0] + [rest] * (m - 1)
    c = beta * (1.0 - lam) / (m * (beta - lam))
    hi_prob = lam / beta
    entry = [(hi_prob, beta / m), (1.0 - hi_prob, c)]
    row0 = [v00, 1.0 - v00] + [0.0] * (m - 2)
    atoms = []
    for combo in itertools.product(entry, repeat=(m - 1) * m):
        prob = float(np.prod([pr for pr, _ in combo]))
        vals = np.array([v for _, v in combo]).reshape(m - 1, m)
        mat = np.vstack([np.array(row0) * p[0], vals * rest])
        atoms.append({"probability": prob, "matrix": mat.tolist()})
    return {"m": m, "family": "discrete", "name": name, "atoms": atoms}


BUILDERS = {
    "dominant_row": lambda prm, name: dominant_row_document(
        prm["m"], prm["p0"], prm["beta"], prm["lambda"], prm["v00"], name),
}


def preset_document(name: str) -> dict:
    data = _read(name)
    if "model" in data:
        return data["model"]
    return BUILDERS[data["builder"]](data["params"], data["name"])


def load_preset(name: str) -> WeightModel:
    return load_model(preset_document(name))


def preset_info(name: str) -> dict:
    data = _read(name)
    return {"name": data["name"], "description": data.get("description", ""),
            "q_max": float(data.get("q_max", 4.0))}
