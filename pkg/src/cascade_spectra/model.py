"""Weight-model families for planar multiplicative cascades.

A model describes the law of a random nonnegative m x m matrix W.  Three
families are supported:

* ``discrete``: a finite joint atom table (probability, matrix).
* ``lognormal``: i.i.d. entries m^-2 exp(beta*N - beta^2/2).
* ``branching``: W[i, j] = p_i * 1{j < N_i} / E(N_i) with independent
  row counts N_i on {0..m}.

Everything downstream only needs the log-moment functionals
``q -> log sum_{i,j} E(1{W>0} W^q)`` (full matrix) and the same for a row
of V = W / p_i, together with their first two derivatives in q.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
from scipy.special import logsumexp

from .constants import ATOM_PROB_TOL, IDENTITY_TOL

FAMILIES = ("discrete", "lognormal", "branching")


class ModelError(ValueError):
    """Raised for malformed or invalid model descriptions."""


@dataclass(frozen=True)
class MarginalData:
    p: np.ndarray
    active: np.ndarray
    EN: np.ndarray
    EN_total: float


@dataclass(frozen=True, eq=False)
class WeightModel:
    m: int
    family: str
    name: str = "model"
    atom_probs: np.ndarray | None = None   # (A,)
    atom_mats: np.ndarray | None = None    # (A, m, m)
    beta: float | None = None
    branch_p: np.ndarray | None = None     # (m,)
    n_law: np.ndarray | None = None        # (m, m+1), rows are laws of N_i
    _marg: MarginalData = field(init=False, repr=False)
    _full: tuple = field(init=False, repr=False)
    _rows: tuple = field(init=False, repr=False)

    def __post_init__(self) -> None:
        _validate(self)
        marg = _compute_marginals(self)
        object.__setattr__(self, "_marg", marg)
        full, rows = _entry_tables(self, marg)
        object.__setattr__(self, "_full", full)
        object.__setattr__(self, "_rows", rows)

    @property
    def marginals(self) -> MarginalData:
        return self._marg

    @property
    def is_finite(self) -> bool:
        """True when W has finitely many values (enumerable / atom support)."""
        return self.family != "lognormal"

    def to_document(self) -> dict[str, Any]:
        doc: dict[str, Any] = {"m": self.m, "family": self.family, "name": self.name}
        if self.family == "discrete":
            doc["atoms"] = [
                {"probability": float(pr), "matrix": mat.tolist()}
                for pr, mat in zip(self.atom_probs, self.atom_mats)
            ]
        elif self.family == "lognormal":
            doc["beta"] = float(self.beta)
        else:
            doc["p"] = self.branch_p.tolist()
            doc["N_law"] = self.n_law.tolist()
        return doc


# ---------------------------------------------------------------- loading

def load_model(document: dict | str | Path) -> WeightModel:
    """Build a validated WeightModel from a JSON document, path or dict."""
    if isinstance(document, (str, Path)):
        text = str(document)
        if isinstance(document, Path) or not text.lstrip().startswith("{"):
            try:
                text = Path(document).read_text()
            except OSError as exc:
                raise ModelError(f"cannot read model file: {exc}") from exc
        try:
            document = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ModelError(f"parse error: {exc}") from exc
    if not isinstance(document, dict):
        raise ModelError("parse error: model document must be a JSON object")
    try:
        m = int(document["m"])
        family = document["family"]
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelError(f"parse error: missing or bad field {exc}") from exc
    if m < 2:
        raise ModelError("parse error: m must be >= 2")
    if family not in FAMILIES:
        raise ModelError(f"parse error: unknown family {family!r}")
    name = str(document.get("name", family))
    try:
        if family == "discrete":
            atoms = document["atoms"]
            if not atoms:
                raise ModelError("empty atom list")
            probs = np.array([float(a["probability"]) for a in atoms])
            mats = np.array([np.asarray(a["matrix"], dtype=float) for a in atoms])
            return WeightModel(m, family, name, atom_probs=probs, atom_mats=mats)
        if family == "lognormal":
            return WeightModel(m, family, name, beta=float(document["beta"]))
        p = np.asarray(document["p"], dtype=float)
        if "N_law" in document:
            law = np.asarray(document["N_law"], dtype=float)
        else:
            law = np.array([minimal_variance_law(float(e), m) for e in document["N_mean"]])
        return WeightModel(m, family, name, branch_p=p, n_law=law)
    except ModelError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelError(f"parse error: {exc!r}") from exc


def minimal_variance_law(mean: float, m: int) -> list[float]:
    """Law on {floor(mean), ceil(mean)} with the given mean."""
    if not 0.0 <= mean <= m:
        raise ModelError(f"mean branching number {mean} outside [0, {m}]")
    lo = math.floor(mean)
    frac = mean - lo
    law = [0.0] * (m + 1)
    law[lo] += 1.0 - frac
    if frac > 0:
        law[lo + 1] += frac
    return law


def _validate(model: WeightModel) -> None:
    m = model.m
    if model.family == "discrete":
        probs, mats = model.atom_probs, model.atom_mats
        if probs is None or len(probs) == 0:
            raise ModelError("empty atom list")
        if mats.shape != (len(probs), m, m):
            raise ModelError(f"atom matrices must be {m}x{m}")
        if np.any(probs <= 0) or np.any(probs > 1):
            raise ModelError("atom probabilities must lie in (0, 1]")
        if abs(probs.sum() - 1.0) > ATOM_PROB_TOL:
            raise ModelError(f"atom probabilities sum to {probs.sum()!r}, not 1")
        if not np.all(np.isfinite(mats)) or np.any(mats < 0):
            raise ModelError("weights must be finite and nonnegative")
        total = float(probs @ mats.sum(axis=(1, 2)))
        counts = (mats > 0).sum(axis=(1, 2))
        p_small = float(probs[counts <= 1].sum())
    elif model.family == "lognormal":
        beta = model.beta
        if beta is None or not math.isfinite(beta) or beta < 0:
            raise ModelError("lognormal beta must be a finite nonnegative real")
        total, p_small = 1.0, 0.0
    elif model.family == "branching":
        p, law = model.branch_p, model.n_law
        if p.shape != (m,) or law.shape != (m, m + 1):
            raise ModelError(f"branching model needs p of length {m} and N laws on 0..{m}")
        if np.any(p < 0) or np.any(law < 0):
            raise ModelError("probabilities must be nonnegative")
        if np.any(np.abs(law.sum(axis=1) - 1.0) > ATOM_PROB_TOL):
            raise ModelError("each N_i law must sum to 1")
        means = law @ np.arange(m + 1)
        if np.any((p > 0) & (means <= 0)):
            raise ModelError("active row with E(N_i) = 0")
        total = float(p.sum())
        # rows are independent; inactive rows carry no positive weight
        zero = np.where(p > 0, law[:, 0], 1.0)
        one = np.where(p > 0, law[:, 1], 0.0)
        p_none = float(np.prod(zero))
        p_one = 0.0
        for i in range(m):
            p_one += one[i] * float(np.prod(np.delete(zero, i)))
        p_small = p_none + p_one
    else:
        raise ModelError(f"unknown family {model.family!r}")
    if abs(total - 1.0) > IDENTITY_TOL:
        raise ModelError(
            f"normalization violated: E(sum W) = {total!r}, deviation {total - 1.0:+.3e}"
        )
    if p_small >= 1.0 - 1e-15:
        raise ModelError("P(N in {0,1}) = 1: the cascade is degenerate")


def _compute_marginals(model: WeightModel) -> MarginalData:
    m = model.m
    if model.family == "discrete":
        p = model.atom_probs @ model.atom_mats.sum(axis=2)
        EN = model.atom_probs @ (model.atom_mats > 0).sum(axis=2).astype(float)
    elif model.family == "lognormal":
        p = np.full(m, 1.0 / m)
        EN = np.full(m, float(m))
    else:
        p = model.branch_p.copy()
        EN = np.where(p > 0, model.n_law @ np.arange(m + 1), 0.0)
    active = p > 0
    for arr in (p, EN, active):
        arr.setflags(write=False)
    return MarginalData(p=p, active=active, EN=EN, EN_total=float(EN.sum()))


def marginals(model: WeightModel) -> MarginalData:
    return model.marginals


def _entry_tables(model: WeightModel, marg: MarginalData):
    """(log c, log w) pairs with sum_k c_k w_k^q = the moment sum."""
    m = model.m
    if model.family == "lognormal":
        return None, None
    full_c, full_w = [], []
    rows = []
    if model.family == "discrete":
        probs, mats = model.atom_probs, model.atom_mats
        for i in range(m):
            a_idx, j_idx = np.nonzero(mats[:, i, :] > 0)
            c = probs[a_idx]
            w = mats[a_idx, i, j_idx]
            full_c.append(c)
            full_w.append(w)
            if marg.active[i]:
                rows.append((np.log(c), np.log(w / marg.p[i])))
            else:
                rows.append(None)
    else:
        law = model.n_law
        for i in range(m):
            if not marg.active[i]:
                rows.append(None)
                continue
            # P(N_i > j) for j = 0..m-1
            tail = 1.0 - np.cumsum(law[i])[:m]
            tail = tail[tail > 1e-300]
            v = 1.0 / marg.EN[i]
            full_c.append(tail)
            full_w.append(np.full(tail.shape, marg.p[i] * v))
            rows.append((np.log(tail), np.full(tail.shape, math.log(v))))
    c = np.concatenate(full_c)
    w = np.concatenate(full_w)
    return (np.log(c), np.log(w)), tuple(rows)


# ---------------------------------------------------------------- moments

def log_moment(model: WeightModel, q, row: int | None = None):
    """log of the moment sum and its first two q-derivatives.

    ``row=None`` gives sum_{i,j} E(1{W>0} W^q); ``row=i`` gives
    sum_j E(1{V>0} V_{i,j}^q).  Vectorised over ``q``.
    """
    q = np.asarray(q, dtype=float)
    m = model.m
    lnm = math.log(m)
    if row is not None and not model.marginals.active[row]:
        raise ModelError(f"row {row} is inactive (p_i = 0)")
    if model.family == "lognormal":
        b2 = model.beta ** 2
        n_entries = 2.0 if row is None else 1.0
        value = n_entries * (1.0 - q) * lnm + b2 * q * (q - 1.0) / 2.0
        d1 = -n_entries * lnm + b2 * (2.0 * q - 1.0) / 2.0
        d2 = np.full_like(q, b2)
        return value, d1, d2
    logc, logw = model._full if row is None else model._rows[row]
    a = logc + np.multiply.outer(q, logw)
    value = logsumexp(a, axis=-1)
    wts = np.exp(a - value[..., None])
    d1 = wts @ logw
    d2 = wts @ (logw ** 2) - d1 ** 2
    return value, d1, np.maximum(d2, 0.0)


def moment(model: WeightModel, q, row: int | None = None):
    """Full-matrix moment sum (row=None) or V-row moment sum."""
    return np.exp(log_moment(model, q, row)[0])


def structure_function(model: WeightModel, q, row: int | None = None):
    """T(q) (row=None) or T_i(q), with first and second derivatives."""
    lnm = math.log(model.m)
    value, d1, d2 = log_moment(model, q, row)
    return -value / lnm, -d1 / lnm, -d2 / lnm


def tilt(model: WeightModel, q: float) -> WeightModel:
    """Model of W_q = m^{T(q)} W^q (zero entries stay zero)."""
    if q < 0:
        raise ModelError("tilt exponent must be nonnegative")
    T_q = float(structure_function(model, q)[0])
    if not math.isfinite(T_q):
        raise ModelError(f"T({q}) is not finite")
    scale = model.m ** T_q
    name = f"{model.name}|tilt({q:g})"
    if model.family == "lognormal":
        return WeightModel(model.m, "lognormal", name, beta=q * model.beta)
    if model.family == "discrete":
        mats = model.atom_mats
        pos = mats > 0
        new = np.where(pos, scale * np.power(np.where(pos, mats, 1.0), q), 0.0)
        return WeightModel(model.m, "discrete", name, atom_probs=model.atom_probs.copy(),
                           atom_mats=new)
    marg = model.marginals
    p = marg.p
    EN = np.where(marg.active, marg.EN, 1.0)
    new_p = np.where(marg.active, scale * np.power(np.where(marg.active, p, 1.0), q)
                     * EN ** (1.0 - q), 0.0)
    return WeightModel(model.m, "branching", name, branch_p=new_p, n_law=model.n_law.copy())
