"""Analytic spectra of a planar cascade and of its horizontal projection.

Curves: T (full matrix), T_i (V rows), tau_nu (Bernoulli product of the row
masses), phi (branching-number pressure), the variational spectrum tau of
the projection, its critical exponents, Legendre transforms, dimensions and
the covering-number pressure P.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq
from scipy.special import logsumexp

from .constants import ARG_TOL, BOUNDARY_TOL, REFINE_FACTOR, SCAN_POINTS
from .model import ModelError, WeightModel, structure_function

TAU_T = "tau=T"
TAU_NU = "tau=tau_nu"
STRICT = "tau-strict-sup"
LINEAR = "linear-extension"
UNDEFINED = "undefined"

AT_Q, INTERIOR, AT_ONE = "at-q", "interior", "at-1"


@dataclass
class SpectrumCurve:
    grid: np.ndarray
    values: np.ndarray
    branch_labels: list[str]
    kind: str
    model: str = ""
    stderr: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.grid = np.asarray(self.grid, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.grid.shape != self.values.shape:
            raise ValueError("grid and values differ in length")
        if self.grid.size > 1 and np.any(np.diff(self.grid) <= 0):
            raise ValueError("grid must be strictly increasing")


@dataclass
class CriticalExponents:
    q_c: float
    q_c_tilde: float
    h_star: float
    p_prime: np.ndarray
    tau_prime_0: float
    tau_prime_0_case: str
    s0: float | None
    tau_prime_1: float
    q_max: float
    flags: list[str] = field(default_factory=list)


def _lnm(model: WeightModel) -> float:
    return math.log(model.m)


# ------------------------------------------------------------ base curves

def T(model: WeightModel, q):
    return structure_function(model, q)[0]


def T_row(model: WeightModel, i: int, q):
    return structure_function(model, q, row=i)[0]


def _bernoulli(model: WeightModel, x, logs: np.ndarray):
    """log_m sum_k exp(x*logs_k) with first and second x-derivatives."""
    x = np.asarray(x, dtype=float)
    lnm = _lnm(model)
    a = np.multiply.outer(x, logs)
    val = logsumexp(a, axis=-1)
    w = np.exp(a - val[..., None])
    d1 = w @ logs
    d2 = w @ logs ** 2 - d1 ** 2
    return val / lnm, d1 / lnm, d2 / lnm


def _log_p(model: WeightModel) -> np.ndarray:
    marg = model.marginals
    return np.log(marg.p[marg.active])


def _log_en(model: WeightModel) -> np.ndarray:
    EN = model.marginals.EN
    return np.log(EN[EN > 0])


def tau_nu(model: WeightModel, q):
    return -_bernoulli(model, q, _log_p(model))[0]


def phi(model: WeightModel, h):
    return _bernoulli(model, h, _log_en(model))[0]


def base_curve(model: WeightModel, kind: str, x, row: int | None = None):
    """Value of T, T_i, tau_nu or phi at x."""
    if kind == "T":
        return T(model, x)
    if kind == "T_i":
        return T_row(model, row, x)
    if kind == "tau_nu":
        return tau_nu(model, x)
    if kind == "phi":
        return phi(model, x)
    raise ValueError(f"unknown curve kind {kind!r}")


def derivative(model: WeightModel, kind: str, x, row: int | None = None, order: int = 1):
    """Closed-form first or second derivative of a base curve."""
    if order not in (1, 2):
        raise ValueError("order must be 1 or 2")
    if kind == "T":
        out = structure_function(model, x)
    elif kind == "T_i":
        out = structure_function(model, x, row=row)
    elif kind == "tau_nu":
        out = tuple(-v for v in _bernoulli(model, x, _log_p(model)))
    elif kind == "phi":
        out = _bernoulli(model, x, _log_en(model))
    else:
        raise ValueError(f"unknown curve kind {kind!r}")
    return out[order]


def dim_nu(model: WeightModel) -> float:
    p = model.marginals.p[model.marginals.active]
    return float(-(p * np.log(p)).sum() / _lnm(model))


# --------------------------------------------------------------- phi min

def phi_min(model: WeightModel) -> dict:
    """Minimiser h_star of the convex function phi on [0, 1]."""
    logs = _log_en(model)
    dphi = lambda h: float(_bernoulli(model, h, logs)[1])
    if dphi(0.0) >= 0:
        h = 0.0
    elif dphi(1.0) <= 0:
        h = 1.0
    else:
        h = brentq(dphi, 0.0, 1.0, xtol=ARG_TOL)
    unique = not np.all(np.abs(logs) == 0.0)
    return {"h_star": h, "value": float(phi(model, h)), "unique": unique}


def p_prime(model: WeightModel, h_star: float) -> np.ndarray:
    """Row weights EN_i^h / sum EN^h with 0^0 = 0."""
    EN = model.marginals.EN
    w = np.where(EN > 0, np.power(np.where(EN > 0, EN, 1.0), h_star), 0.0)
    return w / w.sum()


# ----------------------------------------------------------------- G and g

def _row_table(model: WeightModel, s):
    """T_i(s), T_i'(s) for every active row, shape (rows, *s.shape)."""
    s = np.asarray(s, dtype=float)
    rows = np.nonzero(model.marginals.active)[0]
    vals, ders = [], []
    for i in rows:
        v, d, _ = structure_function(model, s, row=int(i))
        vals.append(v)
        ders.append(d)
    return np.array(vals), np.array(ders)


def _log_terms(model: WeightModel, q, s):
    q, s = np.broadcast_arrays(np.asarray(q, float), np.asarray(s, float))
    Ti, dTi = _row_table(model, s)
    logp = _log_p(model).reshape((-1,) + (1,) * q.ndim)
    logt = q * logp - q * _lnm(model) * Ti / s
    return logt, Ti, dTi, s


def G(model: WeightModel, q, s):
    logt = _log_terms(model, q, s)[0]
    return np.exp(logsumexp(logt, axis=0))


def log_G(model: WeightModel, q, s):
    return logsumexp(_log_terms(model, q, s)[0], axis=0)


def g(model: WeightModel, q, s):
    logt, Ti, dTi, s = _log_terms(model, q, s)
    return (np.exp(logt) * (s * dTi - Ti)).sum(axis=0)


def _g_sign(model: WeightModel, q, s):
    """g rescaled by 1/max term so that its sign survives underflow."""
    logt, Ti, dTi, s = _log_terms(model, q, s)
    top = logt.max(axis=0)
    return (np.exp(logt - top) * (s * dTi - Ti)).sum(axis=0)


def s_of_q(model: WeightModel, q):
    """Minimiser of G(q, .) on [q, 1] and its branch label.

    Vectorised over q in (0, 1].  Returns (s, branch) where branch is an
    array of 'at-q', 'interior', 'at-1'.
    """
    q = np.atleast_1d(np.asarray(q, dtype=float))
    if np.any(q <= 0) or np.any(q > 1):
        raise ValueError("s_of_q needs q in (0, 1]")
    g1 = _g_sign(model, q, np.ones_like(q))
    gq = _g_sign(model, q, q)
    s = np.empty_like(q)
    branch = np.empty(q.shape, dtype=object)
    at1 = g1 >= 0
    atq = ~at1 & (gq <= 0)
    inner = ~at1 & ~atq
    s[at1], branch[at1] = 1.0, AT_ONE
    s[atq], branch[atq] = q[atq], AT_Q
    branch[inner] = INTERIOR
    if inner.any():
        lo, hi = q[inner].copy(), np.ones(inner.sum())
        qi = q[inner]
        # relative stopping rule: s is of order q when q is tiny
        for _ in range(200):
            if np.max((hi - lo) / hi) <= ARG_TOL:
                break
            mid = 0.5 * (lo + hi)
            pos = _g_sign(model, qi, mid) > 0
            lo = np.where(pos, mid, lo)
            hi = np.where(pos, hi, mid)
        s[inner] = 0.5 * (lo + hi)
    return s, branch


# --------------------------------------------------------------- scanning

def _first_sign_change(f, a: float, b: float, points: int = SCAN_POINTS):
    """First bracket [x0, x1] in (a, b] with f(x0) > 0 >= f(x1)."""
    for n in (points, points * REFINE_FACTOR):
        x = np.linspace(a, b, n + 1)[1:]
        y = f(x)
        idx = np.nonzero(y <= 0)[0]
        if idx.size:
            k = idx[0]
            return (a if k == 0 else x[k - 1]), x[k]
    return None


def _root(f, lo: float, hi: float) -> float:
    scalar = lambda x: float(f(np.array([x]))[0])
    if scalar(hi) == 0:
        return hi
    return brentq(scalar, lo, hi, xtol=1e-13, rtol=1e-15)


def q_c_value(model: WeightModel, q_max: float) -> float:
    """Zero of q T'(q) - T(q) on (1, q_max], or inf."""
    def F(q):
        v, d, _ = structure_function(model, q)
        return q * d - v
    br = _first_sign_change(F, 1.0, q_max)
    if br is None:
        return math.inf
    return _root(F, *br)


QTILDE_SCAN = 16.0


def q_c_tilde_value(model: WeightModel, q_c: float, q_max: float, flags: list | None = None) -> float:
    if not math.isfinite(q_c):
        return math.inf
    D = lambda q: -(tau_nu(model, q) - T(model, q))  # > 0 while tau_nu < T
    if D(np.array([q_c]))[0] <= 0:
        return q_c
    upper = max(q_max, QTILDE_SCAN, 2.0 * q_c)
    br = _first_sign_change(D, q_c, upper, SCAN_POINTS * 4)
    if br is None:
        if flags is not None:
            flags.append("q_c_tilde: no crossing beyond q_c up to %g (inf of empty set = q_c)" % upper)
        return q_c
    return _root(D, *br)


def critical_exponents(model: WeightModel, q_max: float = 8.0) -> CriticalExponents:
    if q_max < 2:
        raise ValueError("q_max must be >= 2")
    if float(derivative(model, "T", 1.0)) <= 0:
        raise ModelError("degenerate cascade: T'(1) <= 0")
    flags: list[str] = []
    qc = q_c_value(model, q_max)
    qt = q_c_tilde_value(model, qc, q_max, flags)
    pm = phi_min(model)
    h = pm["h_star"]
    pp = p_prime(model, h)
    lnm = _lnm(model)
    marg = model.marginals

    _, br = s_of_q(model, 1e-6)
    s0 = None
    if br[0] == AT_Q:
        case, tp0 = "i", float(derivative(model, "T", 0.0))
    elif br[0] == AT_ONE:
        case, tp0 = "ii", float(derivative(model, "tau_nu", 0.0))
    else:
        case = "iii"
        rows = np.nonzero(marg.active)[0]
        w = pp[rows]

        def conj_sum(s):
            Ti, dTi = _row_table(model, s)
            return w @ (s * dTi - Ti)

        if h > 0:
            s0 = 0.0
        else:
            a, b = float(conj_sum(0.0)), float(conj_sum(1.0))
            if a * b <= 0 and a != b:
                s0 = brentq(lambda s: float(conj_sum(s)), 0.0, 1.0, xtol=ARG_TOL)
            else:
                s0 = 0.0 if abs(a) <= abs(b) else 1.0
                flags.append("s0: no sign change on [0,1]; endpoint used")
        _, dTi = _row_table(model, s0)
        tp0 = float(-(w @ (np.log(marg.p[rows]) / lnm - dTi)))

    dT1 = float(derivative(model, "T", 1.0))
    dnu1 = float(derivative(model, "tau_nu", 1.0))
    tp1 = dT1 if dT1 <= dnu1 else dnu1
    return CriticalExponents(qc, qt, h, pp, tp0, case, s0, tp1, q_max, flags)


# -------------------------------------------------------------------- tau

def _tau_arrays(model: WeightModel, q: np.ndarray, ex: CriticalExponents):
    lnm = _lnm(model)
    vals = np.empty_like(q)
    labels = np.empty(q.shape, dtype=object)
    zero = q == 0
    if zero.any():
        h = ex.h_star
        vals[zero] = -phi(model, h)
        labels[zero] = TAU_NU if h == 0 else (TAU_T if h == 1 else STRICT)
    low = (q > 0) & (q <= 1)
    if low.any():
        s, br = s_of_q(model, q[low])
        vals[low] = -log_G(model, q[low], s) / lnm
        labels[low] = np.where(br == AT_Q, TAU_T, np.where(br == AT_ONE, TAU_NU, STRICT))
    high = q > 1
    if high.any():
        qh = q[high]
        t, nu = T(model, qh), tau_nu(model, qh)
        v = np.minimum(t, nu)
        # ties (up to round-off) go to tau_nu so coincident curves keep one label
        tie = 1e-12 * np.maximum(1.0, np.abs(t))
        lab = np.where(nu <= t + tie, TAU_NU, TAU_T).astype(object)
        qc, qt = ex.q_c, ex.q_c_tilde
        if math.isfinite(qc) and qt == qc:
            ext = qh > qc
            v = np.where(ext, qh * float(derivative(model, "T", qc)), v)
            lab[ext] = LINEAR
        elif math.isfinite(qt):
            lab[qh > qt] = UNDEFINED
        vals[high] = v
        labels[high] = lab
    return vals, labels


def tau(model: WeightModel, q: float, exponents: CriticalExponents | None = None):
    """(value, branch label) of the projected spectrum at q >= 0."""
    if q < 0:
        raise ValueError("tau is defined for q >= 0")
    ex = exponents or critical_exponents(model, max(8.0, q))
    v, lab = _tau_arrays(model, np.array([float(q)]), ex)
    return float(v[0]), str(lab[0])


def tau_curve(model: WeightModel, grid, exponents: CriticalExponents | None = None) -> SpectrumCurve:
    grid = np.asarray(grid, dtype=float)
    if np.any(grid < 0):
        raise ValueError("tau is defined for q >= 0")
    ex = exponents or critical_exponents(model, max(8.0, float(grid.max())))
    v, lab = _tau_arrays(model, grid, ex)
    return SpectrumCurve(grid, v, [str(x) for x in lab], "tau", model.name)


def tau_derivative(model: WeightModel, q: float, label: str, exponents: CriticalExponents | None = None) -> float:
    """Derivative of tau at q along the named branch formula."""
    lnm = _lnm(model)
    if label == TAU_T:
        return float(derivative(model, "T", q))
    if label == TAU_NU:
        return float(derivative(model, "tau_nu", q))
    if label == LINEAR:
        ex = exponents or critical_exponents(model)
        return float(derivative(model, "T", ex.q_c))
    if label == STRICT:
        s = float(s_of_q(model, q)[0][0])
        logt, Ti, _, _ = _log_terms(model, q, s)
        top = logt.max(axis=0)
        w = np.exp(logt - top)
        dG = (w * (_log_p(model) - lnm * Ti / s)).sum()
        return float(-dG / (lnm * w.sum()))
    raise ValueError(f"no derivative formula for branch {label!r}")


def curve(model: WeightModel, kind: str, grid) -> SpectrumCurve:
    grid = np.asarray(grid, dtype=float)
    if kind == "tau":
        return tau_curve(model, grid)
    return SpectrumCurve(grid, base_curve(model, kind, grid), [kind] * grid.size, kind, model.name)


# --------------------------------------------------------------- Legendre

def legendre(curve: SpectrumCurve, alpha_grid) -> SpectrumCurve:
    """f*(alpha) = min over grid points of alpha*q - f(q)."""
    if curve.grid.size == 0:
        raise ValueError("empty grid")
    alpha = np.asarray(alpha_grid, dtype=float)
    vals = (np.multiply.outer(alpha, curve.grid) - curve.values).min(axis=1)
    return SpectrumCurve(alpha, vals, ["legendre"] * alpha.size, curve.kind + "*", curve.model)


# ------------------------------------------------------------- dimensions

@dataclass
class DimensionReport:
    dim_mu: float
    dim_nu: float
    dim_pi_mu: float
    dim_conditional: float
    dim_pi_K: float


def dims(model: WeightModel) -> DimensionReport:
    d_mu = float(derivative(model, "T", 1.0))
    if d_mu <= 0:
        raise ModelError("degenerate cascade: T'(1) <= 0")
    d_nu = dim_nu(model)
    return DimensionReport(d_mu, d_nu, min(d_mu, d_nu), max(0.0, d_mu - d_nu),
                           phi_min(model)["value"])


# --------------------------------------------------------------- pressure

def pressure(model: WeightModel, q):
    """Growth rate P(q) of sum_u N(u)^q (natural log)."""
    q = np.asarray(q, dtype=float)
    if np.any(q < 0):
        raise ValueError("pressure is defined for q >= 0")
    lnm = _lnm(model)
    EN = model.marginals.EN
    log_total = math.log(model.marginals.EN_total)
    if np.all(EN[EN > 0] <= 1):
        return np.full(q.shape, log_total) if q.ndim else log_total
    q0 = phi_min(model)["h_star"]
    # inf of phi(q/s) over s in [q, 1] sits at q/s = clamp(q0, q, 1)
    inner = np.clip(np.maximum(q, q0), 0.0, 1.0)
    low = lnm * phi(model, inner)
    high = np.maximum(log_total, lnm * phi(model, q))
    out = np.where(q <= 1, low, high)
    return out if q.ndim else float(out)
