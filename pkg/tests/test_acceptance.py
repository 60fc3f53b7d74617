"""Acceptance suite: one test and one PASS/FAIL line per criterion.

Each test collects its sub-checks, records the wall time against the
criterion's budget and fails if any sub-check or the budget fails.  The
lines are printed in the terminal summary (see ``acceptance_lines``).
"""

import math
import time

import numpy as np
import pytest

from cascade_spectra import criteria as cr, simulate as sm, spectra as sp, transitions as tr
from cascade_spectra import export
from cascade_spectra.model import load_model
from cascade_spectra.presets import load_preset, preset_info, preset_names

from conftest import LN2, random_branching_doc, random_discrete_doc

acceptance_lines: list[str] = []


class Criterion:
    def __init__(self, number: int, title: str, budget: float):
        self.number, self.title, self.budget = number, title, budget
        self.checks: list[tuple[str, bool, str]] = []

    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def check(self, name: str, ok, detail: str = "") -> None:
        self.checks.append((name, bool(ok), detail))

    def __exit__(self, exc_type, exc, tb):
        elapsed = time.perf_counter() - self.start
        if exc_type is not None:
            self.checks.append(("completed", False, f"{exc_type.__name__}: {exc}"))
        self.checks.append(("runtime", elapsed < self.budget, f"{elapsed:.2f}s < {self.budget:g}s"))
        ok = all(c[1] for c in self.checks)
        acceptance_lines.append(f"[{'PASS' if ok else 'FAIL'}] criterion {self.number}: "
                                f"{self.title} ({elapsed:.2f}s)")
        for name, passed, detail in self.checks:
            acceptance_lines.append(f"    {'ok  ' if passed else 'FAIL'} {name}: {detail}")
        if exc_type is None:
            failed = [c[0] for c in self.checks if not c[1]]
            assert not failed, f"criterion {self.number} failed: {failed}"
        return False


def within(value, target, tol):
    return abs(value - target) <= tol, f"{value:.6g} vs {target:.6g} (tol {tol:g})"


# ------------------------------------------------------------------ 1

def test_criterion_1_identities():
    grid = np.linspace(0.0, 4.0, 64)
    models = [load_preset(n) for n in preset_names()]
    with Criterion(1, "identity suite on every preset", 1.0) as c:
        for model in models:
            marg = model.marginals
            rows = np.nonzero(marg.active)[0]
            t1 = abs(float(sp.T(model, 1.0)))
            tau1 = abs(sp.tau(model, 1.0)[0])
            lhs = model.m ** -sp.T(model, grid)
            rhs = sum(marg.p[i] ** grid * model.m ** -sp.T_row(model, int(i), grid)
                      for i in rows)
            psi = float(np.max(np.abs(lhs - rhs) / np.maximum(1.0, lhs)))
            dimrel = abs(float(sp.derivative(model, "T", 1.0))
                         - sum(marg.p[i] * float(sp.derivative(model, "T_i", 1.0, row=int(i))) for i in rows)
                         - sp.dim_nu(model))
            worst = max(t1, tau1, psi, dimrel)
            c.check(model.name, worst < 1e-9,
                    f"|T(1)|={t1:.1e} |tau(1)|={tau1:.1e} psi={psi:.1e} dimrel={dimrel:.1e}")


# ------------------------------------------------------------------ 2

def test_criterion_2_critical_exponents():
    with Criterion(2, "reported critical exponents and regimes", 5.0) as c:
        ex = sp.critical_exponents(load_preset("ex42"), 4.0)
        c.check("ex42 q_c", *within(ex.q_c, 1.229, 0.005))
        c.check("ex42 q_c_tilde = q_c", ex.q_c_tilde == ex.q_c, f"{ex.q_c_tilde:.6g}")

        rep = tr.classify_transitions(load_preset("fig5"), 4.0)
        c.check("fig5 q_c", *within(rep.q_c, 2.176, 0.01))
        first = [t.q for t in rep.transitions if t.order == tr.FIRST]
        c.check("fig5 one first-order transition in (1, q_c)",
                len(first) == 1 and 1 < first[0] < rep.q_c, f"first-order at {first}")

        rep = tr.classify_transitions(load_preset("fig6"), 4.0)
        c.check("fig6 q_c", *within(rep.q_c, 2.665, 0.01))
        c.check("fig6 q_c_tilde", *within(rep.q_c_tilde, 3.059, 0.01))
        first = [t.q for t in rep.transitions if t.order == tr.FIRST and 1 <= t.q < rep.q_c_tilde]
        c.check("fig6 no first-order transition on [1, q_c_tilde)", not first, f"{first}")

        for beta in (0.5, 1.0, math.sqrt(2 * LN2), 1.3):
            model = load_model({"m": 2, "family": "lognormal", "beta": beta})
            got = tr.regime_from_report(tr.classify_transitions(model, 8.0))
            want = {"q_0": 2 * LN2 / beta ** 2, "q_c": 2 * math.sqrt(LN2) / beta}
            regime = tr.lognormal_regime(2, beta)["regime"]
            ok = (got["regime"] == regime and abs(got["q_0"] - want["q_0"]) < 1e-6
                  and abs(got["q_c"] - want["q_c"]) < 1e-6)
            c.check(f"lognormal beta={beta:.6g}", ok,
                    f"regime {got['regime']} (want {regime}), q_0={got['q_0']:.8g} "
                    f"(want {want['q_0']:.8g}), q_c={got['q_c']:.8g} (want {want['q_c']:.8g})")


# ------------------------------------------------------------------ 3

def _small_random_models():
    docs = [random_discrete_doc(11, m=2, atoms=3), random_branching_doc(12, m=2),
            random_discrete_doc(13, m=2, atoms=2), random_branching_doc(14, m=2),
            random_discrete_doc(15, m=2, atoms=3)]
    return [load_model(d) for d in docs]


def test_criterion_3_exact_oracle():
    oracle = load_model({"m": 2, "family": "branching", "p": [0.5, 0.5],
                         "N_law": [[0.0, 0.5, 0.5], [0.0, 1.0, 0.0]]})
    with Criterion(3, "exact enumeration oracle", 30.0) as c:
        e = sm.exact_enumeration(oracle, 1, 2.0)["E_proj"]
        c.check("E_proj(n=1, q=2) = 19/36", abs(e - 19 / 36) <= 1e-12, f"{e!r}")
        worst = 0.0
        for n in (1, 2, 3):
            for q in (0.5, 1.0, 2.0, 3.0):
                e2d = sm.exact_enumeration(oracle, n, q)["E_2d"]
                worst = max(worst, abs(e2d - 2.0 ** (-n * float(sp.T(oracle, q)))))
        c.check("E_2d = 2^{-nT(q)}", worst <= 1e-12, f"max error {worst:.1e}")

        for k, model in enumerate(_small_random_models()):
            ex = sp.critical_exponents(model, 8.0)
            bad = []
            for n in (1, 2, 3):
                for q in (0.5, 1.0, 1.5, 2.0, 3.0):
                    ep = sm.exact_enumeration(model, n, q)["E_proj"]
                    if q > 1:
                        bound = max(2.0 ** (-n * float(sp.tau_nu(model, q))), 2.0 ** (-n * float(sp.T(model, q))))
                        if ep < bound - 1e-12:
                            bad.append((n, q, ep, bound))
                    else:
                        bound = 2.0 ** (-n * sp.tau(model, q, ex)[0])
                        if ep > bound + 1e-12:
                            bad.append((n, q, ep, bound))
            c.check(f"bounds on random model {k}", not bad, f"violations {bad}" if bad else "15 cases")


# ------------------------------------------------------------------ 4

def test_criterion_4_monte_carlo():
    q = np.array([0.0, 0.5, 1.0, 2.0])
    with Criterion(4, "Monte Carlo spectra and pressure", 60.0) as c:
        for name in ("ex42", "lognormal-b"):
            model = load_preset(name)
            ex = sp.critical_exponents(model, 8.0)
            run = sm.run_replicas(model, range(8, 15), q, replicas=50, seed=7)
            tau_hat = sm.tau_from_run(run, model.m)
            p_hat = sm.pressure_from_run(run)
            depths = f"depths {run.depths[0]}..{run.depths[-1]}"
            t05 = sp.tau(model, 0.5, ex)[0]
            c.check(f"{name} tau(0.5)", *within(tau_hat.values[1], t05, 0.1))
            # annealed target min(tau_nu, T) at q = 2
            t2 = min(float(sp.tau_nu(model, 2.0)), float(sp.T(model, 2.0)))
            ok, detail = within(tau_hat.values[3], t2, 0.1)
            value, label = sp.tau(model, 2.0, ex)
            c.check(f"{name} tau(2) vs min(tau_nu, T)", ok,
                    f"{detail}; {depths}; tau(2)={value:.4g} [{label}], "
                    f"gap {abs(tau_hat.values[3] - value):.3g}")
            for k in (0, 2, 3):
                c.check(f"{name} P({q[k]:g})", *within(p_hat.values[k], float(sp.pressure(model, q[k])), 0.1))


# ------------------------------------------------------------------ 5

def test_criterion_5_properties(tmp_path):
    with Criterion(5, "property suite", 30.0) as c:
        rng = np.random.default_rng(5)
        names = ["ex42", "ex43", "fig5", "fig6", "lognormal-b", "ex41"]
        worst, count = -np.inf, 0
        for k in range(100):
            model = load_preset(names[k % len(names)])
            s = sm.sample_cascade(model, 7, seed=int(rng.integers(2 ** 31)))
            if not s.survived:
                continue
            lo, hi = np.sort(rng.uniform(0.05, 4.0, 2))
            logS = sm.log_partition_sums(sm.project(s), [lo, hi])
            worst = max(worst, logS[1] - hi / lo * logS[0])
            count += 1
        c.check("subadditivity S(q) <= S(q')^{q/q'}", worst <= 1e-9, f"{count} samples, max excess {worst:.2e}")

        for name in preset_names():
            model = load_preset(name)
            ex = sp.critical_exponents(model, preset_info(name)["q_max"])
            upper = min(ex.q_c_tilde, preset_info(name)["q_max"])
            x = np.linspace(0.0, upper, 128, endpoint=upper < ex.q_c_tilde)
            y = sp.tau_curve(model, x, ex).values
            dip = float(np.min(y[1:-1] - 0.5 * (y[:-2] + y[2:])))
            c.check(f"concavity {name}", dip >= -1e-7, f"min midpoint gap {dip:.2e}")

        q = np.linspace(0.0, 4.0, 401)
        f = -0.5 + 1.5 * q - 0.3 * q ** 2
        alpha = np.linspace(1.5 - 2.4 - 0.5, 2.0, 801)
        twice = sp.legendre(sp.legendre(sp.SpectrumCurve(q, f, ["f"] * q.size, "f"), alpha), q)
        err = float(np.max(np.abs(twice.values - f)[5:-5]))
        c.check("Legendre idempotence", err <= 2 * 0.6 * 0.01 ** 2, f"max error {err:.2e}")

        gaps = []
        for name in preset_names():
            rep = tr.classify_transitions(load_preset(name), preset_info(name)["q_max"])
            gaps += [(name, t.q, t.left_derivative - t.right_derivative)
                     for t in rep.transitions if t.order == tr.FIRST]
        c.check("first-order derivative gaps positive", gaps and all(g > 0 for *_, g in gaps),
                ", ".join(f"{n}@{q:.4g}: {g:.3g}" for n, q, g in gaps))

        model = load_preset("ex42")
        for sub in ("a", "b"):
            d = tmp_path / sub
            d.mkdir()
            export.write_sample(d / "sample.csv", sm.sample_cascade(model, 10, seed=7))
            est = sm.empirical_tau(model, range(6, 10), [0.5, 2.0], replicas=5, seed=7)
            export.write_curve(d / "tau.csv", est)
        same = all((tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
                   for f in ("sample.csv", "tau.csv"))
        c.check("determinism byte-equality", same, "sample and estimator exports")


# ------------------------------------------------------------------ 6

def test_criterion_6_classification():
    with Criterion(6, "classification suite", 5.0) as c:
        edge = math.sqrt(2 * LN2)
        betas = np.unique(np.concatenate([np.linspace(0.05, 1.6, 32), [edge]]))
        regimes = [cr.classify_projection(load_model({"m": 2, "family": "lognormal", "beta": float(b)})).regime
                   for b in betas]
        expected = ["AC" if b < edge else "singular" for b in betas]
        c.check("lognormal AC below sqrt(2 ln 2), singular at/above", regimes == expected,
                f"{len(betas)} betas; boundary {edge:.6f} -> {regimes[list(betas).index(edge)]}")
        rep = cr.classify_projection(load_preset("ex42"))
        c.check("ex42 singular", rep.regime == "singular", f"rate {rep.conditional_rate:.5f}")
        rep = cr.classify_projection(load_preset("lebesgue"))
        d = rep.density_Ls
        ok = rep.regime == "AC" and d == {"lo": 1.0, "hi": 2.0, "lo_closed": False, "hi_closed": True}
        c.check("Lebesgue AC with density in L^s for s in (1, 2]", ok, f"{rep.regime} {d}")
