"""Monte Carlo cascades, projections, estimators and an exact oracle."""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from itertools import product

import numpy as np
from scipy.special import logsumexp

from . import rng
from .constants import (ENUMERATION_LIMIT, LIVE_NODE_BUDGET, LIVE_NODE_WARN,
                        SURVIVAL_ATTEMPTS)
from .model import ModelError, WeightModel
from .spectra import SpectrumCurve, derivative

HARD_LIVE_LIMIT = 30_000_000
MAX_PROJECTED_CELLS = 2 ** 26


class SimulationError(RuntimeError):
    pass


# ------------------------------------------------------------- weight draws

def _cumulative(law: np.ndarray) -> np.ndarray:
    c = np.cumsum(law)
    c[-1] = 1.0
    return c


def draw_matrices(model: WeightModel, keys: np.ndarray) -> np.ndarray:
    """One weight matrix per node key, shape (len(keys), m, m)."""
    m = model.m
    L = keys.shape[0]
    if model.family == "lognormal":
        b = model.beta
        out = np.empty((L, m * m))
        for e in range(m * m):
            out[:, e] = rng.normal(keys, e)
        return np.exp(b * out - b * b / 2.0).reshape(L, m, m) / (m * m)
    if model.family == "discrete":
        idx = np.searchsorted(_cumulative(model.atom_probs), rng.uniform(keys, 0))
        return model.atom_mats[np.minimum(idx, len(model.atom_probs) - 1)]
    marg = model.marginals
    out = np.zeros((L, m, m))
    cols = np.arange(m)
    for i in range(m):
        if not marg.active[i]:
            continue
        n_i = np.searchsorted(_cumulative(model.n_law[i]), rng.uniform(keys, i))
        out[:, i, :] = (cols[None, :] < n_i[:, None]) * (marg.p[i] / marg.EN[i])
    return out


def draw_rows(model: WeightModel, keys: np.ndarray, row: int) -> np.ndarray:
    """Row ``row`` of V = W / p_row for each node, shape (len(keys), m).

    Uses the same stream positions as draw_matrices, so the result equals
    draw_matrices(...)[:, row, :] / p_row.
    """
    m = model.m
    marg = model.marginals
    if not marg.active[row]:
        raise ModelError(f"row {row} is inactive (p_i = 0)")
    if model.family == "lognormal":
        b = model.beta
        out = np.empty((keys.shape[0], m))
        for j in range(m):
            out[:, j] = rng.normal(keys, row * m + j)
        return np.exp(b * out - b * b / 2.0) / m
    if model.family == "discrete":
        idx = np.searchsorted(_cumulative(model.atom_probs), rng.uniform(keys, 0))
        idx = np.minimum(idx, len(model.atom_probs) - 1)
        return model.atom_mats[idx, row, :] / marg.p[row]
    n_i = np.searchsorted(_cumulative(model.n_law[row]), rng.uniform(keys, row))
    return (np.arange(m)[None, :] < n_i[:, None]) / marg.EN[row]


# ---------------------------------------------------------------- samples

@dataclass
class CascadeSample:
    m: int
    depth: int
    u: np.ndarray
    v: np.ndarray
    mass: np.ndarray
    survived: bool
    seed: int
    model_id: str
    key: int
    attempts: int = 1

    def total_mass(self) -> float:
        """Y_n, summed column by column (same order as project)."""
        return float(_column_sums(self)[0].sum())


@dataclass
class ProjectedMasses:
    m: int
    depth: int
    masses: np.ndarray
    counts: np.ndarray


class _Digits(dict):
    def __missing__(self, m):
        self[m] = np.arange(m, dtype=np.int64)
        return self[m]


_DIGITS = _Digits()


def _check_address_space(m: int, depth: int) -> None:
    if depth < 1:
        raise ValueError("depth must be >= 1")
    if m ** depth > rng.MAX_ADDRESS:
        raise SimulationError(f"m^depth = {m}^{depth} exceeds the 2^32 address space")


def _grow(model: WeightModel, key: np.uint64, depth: int, on_level=None,
          max_live: int = HARD_LIVE_LIMIT):
    """Level-by-level expansion of the surviving subtree.

    Calls on_level(n, u, v, mass) for n = 1..depth and returns the last
    level.  Zero-weight children are pruned immediately.
    """
    m = model.m
    u = np.zeros(1, dtype=np.int64)
    v = np.zeros(1, dtype=np.int64)
    mass = np.ones(1)
    warned = False
    for n in range(depth):
        if u.size == 0:
            empty = np.zeros(0, dtype=np.int64)
            for k in range(n + 1, depth + 1):
                if on_level is not None:
                    on_level(k, empty, empty, np.zeros(0))
            return empty, empty, np.zeros(0)
        W = draw_matrices(model, rng.node_keys(key, n, u, v))
        positive = W > 0
        if positive.all():
            # same (node, i, j) row-major order as the pruning branch
            u = ((u * m)[:, None, None] + _DIGITS[m][None, :, None]).repeat(m, axis=2).ravel()
            v = ((v * m)[:, None, None] + _DIGITS[m][None, None, :]).repeat(m, axis=1).ravel()
            mass = (mass[:, None, None] * W).ravel()
        else:
            node, i, j = np.nonzero(positive)
            u = u[node] * m + i
            v = v[node] * m + j
            mass = mass[node] * W[node, i, j]
        if u.size > max_live:
            raise SimulationError(
                f"memory bound exceeded: {u.size} live nodes at depth {n + 1}")
        if u.size > LIVE_NODE_WARN and not warned:
            warnings.warn(f"{u.size} live nodes at depth {n + 1}", RuntimeWarning)
            warned = True
        if on_level is not None:
            on_level(n + 1, u, v, mass)
    return u, v, mass


def sample_cascade(model: WeightModel, depth: int, seed: int,
                   max_live: int = HARD_LIVE_LIMIT) -> CascadeSample:
    _check_address_space(model.m, depth)
    key = rng.stream_key(seed)
    u, v, mass = _grow(model, key, depth, max_live=max_live)
    return CascadeSample(model.m, depth, u, v, mass, bool(mass.size), seed, model.name, int(key))


def path_weight_product(model: WeightModel, key: int, depth: int, u: int, v: int) -> float:
    """Recompute Q(u, v) from the keyed draws along the path to (u, v)."""
    m = model.m
    digits_u = [(u // m ** (depth - 1 - k)) % m for k in range(depth)]
    digits_v = [(v // m ** (depth - 1 - k)) % m for k in range(depth)]
    prod = 1.0
    pu = pv = 0
    for n in range(depth):
        W = draw_matrices(model, rng.node_keys(np.uint64(key), n, [pu], [pv]))[0]
        prod *= W[digits_u[n], digits_v[n]]
        pu, pv = pu * m + digits_u[n], pv * m + digits_v[n]
    return prod


def _column_sums(sample: CascadeSample):
    size = sample.m ** sample.depth
    if size > MAX_PROJECTED_CELLS:
        raise SimulationError("projection grid too large")
    masses = np.bincount(sample.u, weights=sample.mass, minlength=size)
    counts = np.bincount(sample.u, minlength=size)
    return masses, counts


def project(sample: CascadeSample) -> ProjectedMasses:
    masses, counts = _column_sums(sample)
    return ProjectedMasses(sample.m, sample.depth, masses, counts)


def log_partition_sums(pm: ProjectedMasses, q_grid) -> np.ndarray:
    """log S_n(q); -inf for an extinct sample."""
    q = np.asarray(q_grid, dtype=float)
    pos = pm.masses[pm.masses > 0]
    if pos.size == 0:
        return np.full(q.shape, -np.inf)
    return logsumexp(np.multiply.outer(q, np.log(pos)), axis=-1)


def partition_sums(pm: ProjectedMasses, q_grid) -> np.ndarray:
    """S_n(q) = sum over positive projected masses of mass^q."""
    return np.exp(log_partition_sums(pm, q_grid))


def coarse_spectrum(pm: ProjectedMasses, bins=20) -> dict:
    pos = pm.masses[pm.masses > 0]
    if pos.size == 0:
        raise SimulationError("extinct sample")
    alpha = np.log(pos) / (-pm.depth * math.log(pm.m))
    counts, edges = np.histogram(alpha, bins=bins)
    with np.errstate(divide="ignore"):
        est = np.where(counts > 0, np.log(counts) / (pm.depth * math.log(pm.m)), np.nan)
    return {"edges": edges, "counts": counts, "centers": 0.5 * (edges[1:] + edges[:-1]),
            "estimate": est, "alpha": alpha}


# -------------------------------------------------------------- estimators

def depth_plan(model: WeightModel, depths, max_live: int = LIVE_NODE_BUDGET) -> list[int]:
    """Depths reachable within the live-node budget (expected growth E(N)^n)."""
    depths = sorted(set(int(d) for d in depths))
    growth = model.marginals.EN_total
    keep = []
    for d in depths:
        if model.m ** d > rng.MAX_ADDRESS:
            continue
        if growth > 1 and d * math.log(growth) > math.log(max_live):
            continue
        keep.append(d)
    if len(keep) < len(depths):
        warnings.warn(f"depths capped by live-node budget: using {keep}", RuntimeWarning)
    return keep


def _replica_stats(args):
    model, seed, replica, depths, q_grid, max_attempts = args
    depths = list(depths)
    top = max(depths)
    for attempt in range(max_attempts):
        key = rng.stream_key(seed, replica, attempt)
        logS = np.full((len(depths), len(q_grid)), -np.inf)
        logN = np.full((len(depths), len(q_grid)), -np.inf)
        where = {d: k for k, d in enumerate(depths)}

        def record(n, u, v, mass):
            if n in where and u.size:
                size = model.m ** n
                pm = ProjectedMasses(model.m, n, np.bincount(u, weights=mass, minlength=size),
                                     np.bincount(u, minlength=size))
                logS[where[n]] = log_partition_sums(pm, q_grid)
                c = pm.counts[pm.counts > 0].astype(float)
                logN[where[n]] = logsumexp(np.multiply.outer(q_grid, np.log(c)), axis=-1)

        u, _, _ = _grow(model, key, top, record)
        if u.size:
            return logS, logN, attempt + 1
    raise SimulationError(f"no surviving cascade in {max_attempts} attempts")


def _slopes(depths: np.ndarray, y: np.ndarray, method: str) -> np.ndarray:
    """Slope of y (rows: depths) against depth for every column."""
    if method == "regression":
        x = depths - depths.mean()
        return (x @ (y - y.mean(axis=0))) / (x @ x)
    if method == "successive":
        return (np.diff(y, axis=0) / np.diff(depths)[:, None]).mean(axis=0)
    raise ValueError(f"unknown estimator {method!r}")


def _jackknife(stat, logs: np.ndarray) -> np.ndarray:
    R = logs.shape[0]
    if R < 2:
        return np.full(logs.shape[-1], np.nan)
    loo = np.array([stat(np.delete(logs, r, axis=0)) for r in range(R)])
    return np.sqrt((R - 1) / R * ((loo - loo.mean(axis=0)) ** 2).sum(axis=0))


@dataclass
class SimulationRun:
    depths: list[int]
    q_grid: np.ndarray
    log_S: np.ndarray      # (replicas, depths, q)
    log_N: np.ndarray      # (replicas, depths, q)
    attempts: list[int]
    seed: int
    model_id: str
    meta: dict = field(default_factory=dict)


def run_replicas(model: WeightModel, depths, q_grid, replicas: int, seed: int,
                 max_live: int = LIVE_NODE_BUDGET, jobs: int = 1,
                 max_attempts: int = SURVIVAL_ATTEMPTS) -> SimulationRun:
    """Simulate ``replicas`` surviving cascades and record log partition
    sums of projected masses and of fibre counts at every depth."""
    if replicas < 1:
        raise ValueError("replicas must be >= 1")
    plan = depth_plan(model, depths, max_live)
    if len(plan) < 3:
        raise SimulationError(f"need at least 3 usable depths, got {plan}")
    q_grid = np.asarray(q_grid, dtype=float)
    if np.any(q_grid < 0):
        raise ValueError("q grid must be nonnegative")
    tasks = [(model, seed, r, tuple(plan), q_grid, max_attempts) for r in range(replicas)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_replica_stats, tasks))
    else:
        results = [_replica_stats(t) for t in tasks]
    log_S = np.array([r[0] for r in results])
    log_N = np.array([r[1] for r in results])
    attempts = [r[2] for r in results]
    return SimulationRun(plan, q_grid, log_S, log_N, attempts, seed, model.name,
                         {"requested_depths": sorted(set(int(d) for d in depths)),
                          "max_live": max_live})


def tau_from_run(run: SimulationRun, m: int, method: str = "regression") -> SpectrumCurve:
    d = np.array(run.depths, dtype=float)
    R = run.log_S.shape[0]

    def stat(logs):
        mean = logsumexp(logs, axis=0) - math.log(logs.shape[0])
        return _slopes(d, -mean / math.log(m), method)

    est = stat(run.log_S)
    se = _jackknife(stat, run.log_S)
    return SpectrumCurve(run.q_grid, est, ["empirical"] * est.size, "empirical-tau",
                         run.model_id, stderr=se,
                         meta={"depths": run.depths, "replicas": R, "attempts": run.attempts,
                               "estimator": method})


def pressure_from_run(run: SimulationRun, method: str = "regression") -> SpectrumCurve:
    d = np.array(run.depths, dtype=float)

    def stat(logs):
        mean = logsumexp(logs, axis=0) - math.log(logs.shape[0])
        return _slopes(d, mean, method)

    est = stat(run.log_N)
    se = _jackknife(stat, run.log_N)
    return SpectrumCurve(run.q_grid, est, ["empirical"] * est.size, "branching-pressure",
                         run.model_id, stderr=se,
                         meta={"depths": run.depths, "replicas": run.log_N.shape[0],
                               "estimator": method})


def empirical_tau(model: WeightModel, depths, q_grid, replicas: int, seed: int,
                  method: str = "regression", max_live: int = LIVE_NODE_BUDGET,
                  jobs: int = 1) -> SpectrumCurve:
    run = run_replicas(model, depths, q_grid, replicas, seed, max_live, jobs)
    return tau_from_run(run, model.m, method)


def branching_pressure(model: WeightModel, depths, q_grid, replicas: int, seed: int,
                       method: str = "regression", max_live: int = LIVE_NODE_BUDGET,
                       jobs: int = 1) -> SpectrumCurve:
    run = run_replicas(model, depths, q_grid, replicas, seed, max_live, jobs)
    return pressure_from_run(run, method)


# ------------------------------------------------------ environment runs

ENV_TAG = 0x656E76  # separates environment draws from tree draws


def env_martingale(model: WeightModel, env_p_prime, depth: int, env_seed: int,
                   seed: int) -> dict:
    """Mandelbrot martingale along a random environment word.

    X_n(x) = sum_v prod_k V_{x_k, v_k}, with tree draws shared with
    sample_cascade(model, depth, seed).
    """
    env = np.asarray(env_p_prime, dtype=float)
    marg = model.marginals
    m = model.m
    if env.shape != (m,) or np.any(env < 0) or abs(env.sum() - 1) > 1e-9:
        raise ValueError("environment must be a probability vector of length m")
    _check_address_space(m, depth)
    ekey = rng.stream_key(env_seed, ENV_TAG)
    letter_keys = rng.node_keys(ekey, 0, np.zeros(depth, np.int64), np.arange(depth))
    letters = np.searchsorted(_cumulative(env), rng.uniform(letter_keys, 0))
    letters = np.minimum(letters, m - 1)
    if np.any(~marg.active[letters]):
        raise ModelError("environment hits an inactive row")
    key = rng.stream_key(seed)
    v = np.zeros(1, dtype=np.int64)
    mass = np.ones(1)
    prefix = 0
    traj = np.zeros(depth)
    for n in range(depth):
        x = int(letters[n])
        if v.size:
            V = draw_rows(model, rng.node_keys(key, n, np.full(v.size, prefix), v), x)
            node, j = np.nonzero(V > 0)
            v = v[node] * m + j
            mass = mass[node] * V[node, j]
        prefix = prefix * m + x
        traj[n] = mass.sum()
    rows = np.nonzero(env > 0)[0]
    crit = float(sum(env[i] * derivative(model, "T_i", 1.0, row=int(i)) for i in rows))
    return {"word": letters.tolist(), "trajectory": traj, "criterion": crit,
            "extinct": bool(v.size == 0)}


# ------------------------------------------------------- exact oracle

def atom_table(model: WeightModel):
    """(probabilities, matrices) of a finite model's law of W."""
    if model.family == "discrete":
        return model.atom_probs, model.atom_mats
    if model.family != "branching":
        raise ModelError("exact enumeration needs a finite (discrete or branching) model")
    m = model.m
    marg = model.marginals
    supports = []
    for i in range(m):
        if marg.active[i]:
            supports.append([(k, pr) for k, pr in enumerate(model.n_law[i]) if pr > 0])
        else:
            supports.append([(0, 1.0)])
    probs, mats = [], []
    for combo in product(*supports):
        mat = np.zeros((m, m))
        pr = 1.0
        for i, (k, pk) in enumerate(combo):
            pr *= pk
            if marg.active[i]:
                mat[i, :k] = marg.p[i] / marg.EN[i]
        probs.append(pr)
        mats.append(mat)
    return np.array(probs), np.array(mats)


def _positive_power(values: np.ndarray, q: float) -> np.ndarray:
    pos = values > 0
    return np.where(pos, np.power(np.where(pos, values, 1.0), q), 0.0)


def _merge(values: np.ndarray, probs: np.ndarray):
    uniq, inv = np.unique(values, return_inverse=True)
    return uniq, np.bincount(inv, weights=probs)


def exact_enumeration(model: WeightModel, depth: int, q: float) -> dict:
    """Exact E[sum_{u,v} mu_n^q] and E[sum_u (pi mu_n)^q] for finite models."""
    if not 1 <= depth <= 3:
        raise ValueError("exact enumeration supports depth 1..3")
    probs, mats = atom_table(model)
    m = model.m
    one_level = float(probs @ _positive_power(mats, q).sum(axis=(1, 2)))
    e2d = 1.0
    for _ in range(depth):
        e2d *= one_level          # independent subtrees: product over levels

    budget = [0]
    laws: dict[tuple, tuple] = {}

    def law(word: tuple):
        """Law of the fibre mass Z(word) = sum_v Q(word, v)."""
        if word in laws:
            return laws[word]
        i = word[0]
        child = law(word[1:]) if len(word) > 1 else (np.array([1.0]), np.array([1.0]))
        vals_all, probs_all = [], []
        for pa, mat in zip(probs, mats):
            vals, pr = np.array([0.0]), np.array([pa])
            for w in mat[i]:
                if w <= 0:
                    continue
                vals = (vals[:, None] + w * child[0][None, :]).ravel()
                pr = (pr[:, None] * child[1][None, :]).ravel()
                budget[0] += vals.size
                if budget[0] > ENUMERATION_LIMIT:
                    raise SimulationError("enumeration too large")
                vals, pr = _merge(vals, pr)
            vals_all.append(vals)
            probs_all.append(pr)
        out = _merge(np.concatenate(vals_all), np.concatenate(probs_all))
        laws[word] = out
        return out

    eproj = 0.0
    for word in product(range(m), repeat=depth):
        vals, pr = law(word)
        eproj += float(pr @ _positive_power(vals, q))
    return {"E_2d": e2d, "E_proj": eproj}
