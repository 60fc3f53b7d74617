"""Crossings of T and tau_nu, phase transitions of tau and regime segments."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .constants import ROOT_TOL, SEGMENT_POINTS, TRANSVERSAL_TOL
from .model import ModelError, WeightModel
from . import spectra as sp

FIRST = "first"
HIGHER = "second-or-higher"


@dataclass
class Crossing:
    q: float
    transversal: bool
    slope_gap: float


@dataclass
class Transition:
    q: float
    order: str
    left_branch: str
    right_branch: str
    left_derivative: float
    right_derivative: float
    note: str = ""


@dataclass
class Segment:
    lo: float
    hi: float
    branch_label: str


@dataclass
class PhaseTransitionReport:
    q_max: float
    q_c: float
    q_c_tilde: float
    crossings: list[Crossing]
    transitions: list[Transition]
    segments: list[Segment]
    extension: Segment | None = None
    identical_curves: bool = False
    flags: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


def _gap(model: WeightModel, q):
    return sp.T(model, q) - sp.tau_nu(model, q)


def _slope_gap(model: WeightModel, q: float) -> float:
    return float(sp.derivative(model, "T", q) - sp.derivative(model, "tau_nu", q))


def crossings(model: WeightModel, q_lo: float, q_hi: float, points: int = SEGMENT_POINTS):
    """All zeros of T - tau_nu on [q_lo, q_hi].

    Returns a list of Crossing, or the string "identical" when the curves
    coincide on the whole range.
    """
    x = np.linspace(q_lo, q_hi, points + 1)
    d = _gap(model, x)
    scale = max(1.0, float(np.abs(sp.T(model, x)).max()))
    if np.abs(d).max() < 1e-12 * scale:
        return "identical"
    f = lambda q: float(_gap(model, q))
    roots: list[float] = []
    if q_lo <= 1.0 <= q_hi:
        roots.append(1.0)
    for k in range(points):
        a, b = d[k], d[k + 1]
        if a == 0.0:
            roots.append(float(x[k]))
        elif a * b < 0:
            roots.append(brentq(f, x[k], x[k + 1], xtol=1e-13))
    if d[-1] == 0.0:
        roots.append(float(x[-1]))
    # touching points: local minima of |gap| without a sign change
    absd = np.abs(d)
    for k in range(1, points):
        if absd[k] <= absd[k - 1] and absd[k] <= absd[k + 1] and d[k - 1] * d[k + 1] > 0:
            res = minimize_scalar(lambda q: abs(f(q)), bounds=(x[k - 1], x[k + 1]),
                                  method="bounded", options={"xatol": 1e-12})
            if abs(res.fun) < 1e-12:
                roots.append(float(res.x))
    roots.sort()
    out: list[Crossing] = []
    for r in roots:
        if out and abs(r - out[-1].q) < ROOT_TOL:
            continue
        gap = _slope_gap(model, r)
        out.append(Crossing(r, abs(gap) > TRANSVERSAL_TOL, gap))
    return out


def _labels(model: WeightModel, q, ex) -> np.ndarray:
    return sp._tau_arrays(model, np.atleast_1d(np.asarray(q, dtype=float)), ex)[1]


def _refine_boundary(model: WeightModel, lo: float, hi: float, ex) -> float:
    left = _labels(model, lo, ex)[0]
    while hi - lo > 1e-12:
        mid = 0.5 * (lo + hi)
        if _labels(model, mid, ex)[0] == left:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _segments(model: WeightModel, upper: float, ex):
    x = np.linspace(0.0, upper, SEGMENT_POINTS + 1)[1:]
    labs = _labels(model, x, ex)
    segs: list[Segment] = []
    start, cur = 0.0, labs[0]
    for k in range(1, x.size):
        if labs[k] != cur:
            b = _refine_boundary(model, x[k - 1], x[k], ex)
            segs.append(Segment(start, b, str(cur)))
            start, cur = b, labs[k]
    segs.append(Segment(start, upper, str(cur)))
    return segs


def classify_transitions(model: WeightModel, q_max: float = 4.0,
                         exponents: sp.CriticalExponents | None = None) -> PhaseTransitionReport:
    ex = exponents or sp.critical_exponents(model, max(q_max, 2.0))
    qc, qt = ex.q_c, ex.q_c_tilde
    upper = min(qt, q_max)
    flags = list(ex.flags)
    cr = crossings(model, 0.0, q_max)
    identical = cr == "identical"
    if identical:
        cr = []
        flags.append("T and tau_nu coincide")
    segs = _segments(model, upper, ex)

    trans: list[Transition] = []
    for left, right in zip(segs, segs[1:]):
        q = left.hi
        dl = sp.tau_derivative(model, q, left.branch_label, ex)
        dr = sp.tau_derivative(model, q, right.branch_label, ex)
        order, note = HIGHER, ""
        if q > 1.0 + ROOT_TOL:
            near = [c for c in cr if abs(c.q - q) < 1e-6]
            if near and near[0].transversal:
                order = FIRST
            elif near:
                note = "tangential crossing"
        trans.append(Transition(q, order, left.branch_label, right.branch_label, dl, dr, note))

    extension = None
    if math.isfinite(qc) and qt == qc and qc < q_max:
        extension = Segment(qc, q_max, sp.LINEAR)
        d = float(sp.derivative(model, "T", qc))
        trans.append(Transition(qc, HIGHER, segs[-1].branch_label, sp.LINEAR, d, d,
                                "start of linear extension"))
    for c in cr:
        if not c.transversal:
            flags.append(f"tangential crossing at q={c.q:.10g}")
    return PhaseTransitionReport(q_max, qc, qt, cr, trans, segs, extension, identical, flags)


# ------------------------------------------------------------ lognormal

def lognormal_regime(m: int, beta: float) -> dict:
    lnm = math.log(m)
    if not 0 < beta < 2.0 * math.sqrt(lnm):
        raise ModelError("beta must lie in (0, 2 sqrt(ln m))")
    q0 = 2.0 * lnm / beta ** 2
    qc = 2.0 * math.sqrt(lnm) / beta
    edge_c = math.sqrt(2.0 * lnm)
    if abs(beta - edge_c) <= 1e-12:
        regime = "C"
    elif beta <= math.sqrt(lnm):
        regime = "A"
    elif beta < edge_c:
        regime = "B"
    else:
        regime = "D"
    out = {"regime": regime, "q_0": q0, "q_c": qc}
    if regime == "D":
        out["transition_in_unit_interval"] = math.sqrt(q0)
    return out


def regime_from_report(report: PhaseTransitionReport) -> dict:
    """Read the lognormal regime off a transition report."""
    others = [c for c in report.crossings if abs(c.q - 1.0) > 1e-6]
    at_one = [c for c in report.crossings if abs(c.q - 1.0) <= 1e-6]
    firsts = [t for t in report.transitions if t.order == FIRST]
    if not others and at_one and not at_one[0].transversal:
        return {"regime": "C", "q_0": 1.0, "q_c": report.q_c}
    if len(others) != 1:
        return {"regime": "unknown", "q_0": math.nan, "q_c": report.q_c}
    q0 = others[0].q
    if q0 < 1:
        regime = "D"
    elif firsts and q0 < report.q_c:
        regime = "B"
    else:
        regime = "A"
    return {"regime": regime, "q_0": q0, "q_c": report.q_c}
