import math

import numpy as np
import pytest
from hypothesis import settings

from cascade_spectra.model import load_model
from cascade_spectra.presets import load_preset, preset_names

settings.register_profile("default", max_examples=25, deadline=None)
settings.load_profile("default")

PRESETS = preset_names()
LN2 = math.log(2.0)


def random_branching_doc(seed: int, m: int | None = None) -> dict:
    """Valid branching model: every row active with E(N_i) > 0, some N >= 2."""
    rng = np.random.default_rng(seed)
    m = m or int(rng.integers(2, 4))
    p = rng.dirichlet(np.ones(m))
    p = np.maximum(p, 0.05)
    p /= p.sum()
    law = rng.dirichlet(np.ones(m + 1), size=m)
    law[:, 0] *= 0.5          # keep zero-count mass moderate
    law[0, 0] = 0.0           # row 0 never empty
    law[0, -1] += 0.2         # and sometimes full, so P(N <= 1) < 1
    law /= law.sum(axis=1, keepdims=True)
    return {"m": m, "family": "branching", "name": f"rand-branching-{seed}",
            "p": p.tolist(), "N_law": law.tolist()}


def random_discrete_doc(seed: int, m: int | None = None, atoms: int | None = None) -> dict:
    """Finite law with sparse nonnegative matrices, normalised to E sum W = 1."""
    rng = np.random.default_rng(seed)
    m = m or int(rng.integers(2, 4))
    k = atoms or int(rng.integers(1, 4))
    probs = rng.dirichlet(np.ones(k))
    mats = rng.uniform(0.1, 1.0, size=(k, m, m)) * (rng.uniform(size=(k, m, m)) < 0.7)
    mats[:, 0, 0] = rng.uniform(0.1, 1.0, size=k)
    mats[:, 0, 1] = rng.uniform(0.1, 1.0, size=k)
    mats /= float(np.einsum("a,aij->", probs, mats))
    return {"m": m, "family": "discrete", "name": f"rand-discrete-{seed}",
            "atoms": [{"probability": float(pr), "matrix": mat.tolist()}
                      for pr, mat in zip(probs, mats)]}


def random_finite_model(seed: int):
    """Random nondegenerate finite model (T'(1) > 0), deterministic in seed."""
    from cascade_spectra.spectra import derivative
    for k in range(100):
        s = seed + 7919 * k
        model = load_model(random_branching_doc(s) if s % 2 else random_discrete_doc(s))
        if derivative(model, "T", 1.0) > 0.05:
            return model
    raise RuntimeError("no nondegenerate model found")


@pytest.fixture(scope="session")
def presets():
    return {name: load_preset(name) for name in PRESETS}


@pytest.fixture(scope="session")
def ex42():
    return load_preset("ex42")


@pytest.fixture(scope="session")
def lebesgue():
    return load_preset("lebesgue")


@pytest.fixture(scope="session")
def lognormal_b():
    return load_preset("lognormal-b")


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "acceptance_lines", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
