"""Absolute continuity / singularity verdicts and degeneracy checks."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import brentq

from .constants import BOUNDARY_TOL, IDENTITY_TOL
from .model import ModelError, WeightModel
from .simulate import atom_table
from . import spectra as sp


@dataclass
class ClassificationReport:
    regime: str
    at_boundary: bool
    conditional_rate: float
    dims: sp.DimensionReport
    density_Ls: dict | None
    equivalence_ok: bool | str
    equivalence_witness: float | None
    dgf_unique: bool
    degenerate_flags: dict
    notes: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


def _row_slopes(model: WeightModel) -> np.ndarray:
    rows = np.nonzero(model.marginals.active)[0]
    return np.array([float(sp.derivative(model, "T_i", 1.0, row=int(i))) for i in rows])


def _density_condition(model: WeightModel, s):
    """min of T(s) and 1 - sum p_i m^{-T_i(s)}; positive inside L^s range."""
    s = np.atleast_1d(np.asarray(s, dtype=float))
    marg = model.marginals
    rows = np.nonzero(marg.active)[0]
    Ti = np.array([sp.T_row(model, int(i), s) for i in rows])
    mix = (marg.p[rows][:, None] * np.power(float(model.m), -Ti)).sum(axis=0)
    return np.minimum(sp.T(model, s), 1.0 - mix)


def density_range(model: WeightModel, points: int = 256) -> dict | None:
    """Largest interval (1, b] inside (1, 2] where both L^s conditions hold."""
    f = lambda s: _density_condition(model, s)
    x = np.linspace(1.0, 2.0, points + 1)[1:]
    y = f(x)
    if y[0] <= 0:
        return None
    bad = np.nonzero(y <= 0)[0]
    if bad.size == 0:
        return {"lo": 1.0, "hi": 2.0, "lo_closed": False, "hi_closed": True}
    k = bad[0]
    b = brentq(lambda s: float(f(s)[0]), x[k - 1], x[k], xtol=1e-12)
    return {"lo": 1.0, "hi": b, "lo_closed": False, "hi_closed": False}


def equivalence_witness(model: WeightModel):
    """Search c in (0,1) with P(max_j V_ij > c) = 1 and E #{j: V_ij > c} > 1
    for every active row.  Returns (verdict, c)."""
    if model.family == "lognormal":
        return "not-applicable", None
    probs, mats = atom_table(model)
    marg = model.marginals
    rows = np.nonzero(marg.active)[0]
    V = mats[:, rows, :] / marg.p[rows][None, :, None]
    support = np.unique(V[V > 0])
    cands = [0.5 * support[0]] + list(0.5 * (support[1:] + support[:-1]))
    best = None
    for c in cands:
        if not 0 < c < 1:
            continue
        above = V > c
        sure = np.all(probs @ above.any(axis=2) >= 1.0 - 1e-12)
        many = np.all(probs @ above.sum(axis=2) > 1.0)
        if sure and many:
            best = c if best is None else max(best, c)
    return best is not None, best


def degeneracy_flags(model: WeightModel) -> dict:
    """all_Ti_zero and property (P) of the row structure."""
    if model.family == "lognormal":
        return {"all_Ti_zero": False, "property_P": False}
    probs, mats = atom_table(model)
    marg = model.marginals
    rows = np.nonzero(marg.active)[0]
    EN = marg.EN[rows]
    V = mats[:, rows, :] / marg.p[rows][None, :, None]
    zero_or_one = np.all((np.abs(V) < 1e-12) | (np.abs(V - 1) < 1e-12))
    all_zero = bool(zero_or_one and np.all(np.abs(EN - 1) < 1e-12))

    # V takes values in {0, 1/E(N_i)} on every row
    indicator = np.all((np.abs(V) < 1e-12) | (np.abs(V - 1.0 / EN[None, :, None]) < 1e-12))
    prop = False
    if indicator:
        groups: dict[float, list[int]] = {}
        for k, i in enumerate(rows):
            groups.setdefault(round(float(marg.p[i]), 12), []).append(k)
        logs = np.log(EN)
        products_ok = all(abs(logs[g].sum()) < 1e-12 for g in groups.values())
        nontrivial = any(np.sum(np.abs(logs[g]) > 1e-12) >= 2 for g in groups.values())
        prop = bool(products_ok and nontrivial)
    return {"all_Ti_zero": all_zero, "property_P": prop}


def classify_projection(model: WeightModel) -> ClassificationReport:
    d = sp.dims(model)                     # raises on degenerate cascades
    p = model.marginals.p[model.marginals.active]
    rate = float(p @ _row_slopes(model))
    boundary = abs(rate) <= BOUNDARY_TOL
    regime = "AC" if rate > BOUNDARY_TOL else "singular"
    notes = []
    dens = None
    if regime == "AC":
        dens = density_range(model)
    verdict, c = equivalence_witness(model)
    if verdict is True:
        notes.append("equivalence conditions verified")
    elif verdict is False:
        notes.append("equivalence conditions not verified")
    dphi0 = float(sp.derivative(model, "phi", 0.0))
    return ClassificationReport(regime, boundary, rate, d, dens, verdict, c,
                                bool(dphi0 <= 0), degeneracy_flags(model), notes)


def ui_criterion(model: WeightModel, env) -> dict:
    env = np.asarray(env, dtype=float)
    marg = model.marginals
    if env.shape != (model.m,) or np.any(env < 0) or abs(env.sum() - 1) > IDENTITY_TOL:
        raise ValueError("environment must be a probability vector of length m")
    if np.any((env > 0) & ~marg.active):
        raise ModelError("environment charges an inactive row")
    rows = np.nonzero(env > 0)[0]
    value = float(sum(env[i] * float(sp.derivative(model, "T_i", 1.0, row=int(i))) for i in rows))
    return {"value": value, "uniformly_integrable": value > BOUNDARY_TOL,
            "at_boundary": abs(value) <= BOUNDARY_TOL}
