"""Command-line front end.

Every command writes its artifacts plus a ``manifest.json`` into ``--out-dir``.
The manifest holds the full configuration and the model document, so
``cascade-spectra replay manifest.json`` regenerates the same files.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import criteria, export, presets, simulate, spectra, transitions
from .model import ModelError, WeightModel, load_model
from .svg import LineChart

COMMANDS = ("spectra", "transitions", "classify", "simulate", "pressure", "enumerate", "figures")
JOBS_ENV = "CASCADE_SPECTRA_JOBS"


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    command: str
    model: str | dict | None = None
    q_min: float = 0.0
    q_max: float = 4.0
    q_steps: int = 81
    depths: str = "8..14"
    replicas: int = 50
    seed: int | None = None
    out_dir: str = "."
    plot: bool = False
    jobs: int = 1
    method: str = "regression"
    env: list[float] | None = None
    depth: int = 2
    preset: str | None = None

    def validate(self) -> None:
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command {self.command!r}")
        if self.q_min < 0:
            raise ConfigError("q_min must be >= 0")
        if self.q_steps < 8:
            raise ConfigError("q_steps must be >= 8")
        if self.q_max <= self.q_min:
            raise ConfigError("q_max must exceed q_min")
        if self.command in ("simulate", "pressure") and self.seed is None:
            raise ConfigError(f"--seed is required for {self.command}")
        if self.command != "figures" and self.model is None:
            raise ConfigError("--model is required")
        if self.jobs < 1:
            raise ConfigError("jobs must be >= 1")

    def grid(self) -> np.ndarray:
        return np.linspace(self.q_min, self.q_max, self.q_steps)


def parse_depths(text: str) -> list[int]:
    text = text.strip()
    try:
        if ".." in text:
            lo, hi = text.split("..")
            out = list(range(int(lo), int(hi) + 1))
        else:
            out = [int(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad depth list {text!r}") from exc
    if not out or min(out) < 1:
        raise ConfigError(f"bad depth list {text!r}")
    return out


def resolve_model(source: str | dict) -> WeightModel:
    """A model document, a path to one, or the name of a built-in preset."""
    if isinstance(source, dict):
        return load_model(source)
    path = Path(source)
    if path.is_file():
        return load_model(path)
    if source in presets.preset_names():
        return presets.load_preset(source)
    raise ModelError(f"model file not found and no preset named {source!r}")


# ------------------------------------------------------------- commands

def _plot_spectra(path: Path, model: WeightModel, grid, curves: dict, ex, title: str) -> None:
    chart = LineChart(title, xlabel="q", ylabel="exponent")
    for label, c in curves.items():
        chart.add(label, c.grid, c.values)
    if math.isfinite(ex.q_c) and ex.q_c <= grid[-1]:
        chart.mark(ex.q_c, f"q_c={ex.q_c:.3f}")
    if math.isfinite(ex.q_c_tilde) and ex.q_c_tilde != ex.q_c and ex.q_c_tilde <= grid[-1]:
        chart.mark(ex.q_c_tilde, f"q~_c={ex.q_c_tilde:.3f}")
    chart.save(path)


def _spectra_bundle(model: WeightModel, grid, out: Path, stem: str, q_max_exp: float):
    ex = spectra.critical_exponents(model, q_max=max(q_max_exp, float(grid[-1])))
    curves = {"T": spectra.curve(model, "T", grid),
              "tau_nu": spectra.curve(model, "tau_nu", grid),
              "tau": spectra.tau_curve(model, grid, ex)}
    files = []
    for key, c in curves.items():
        f = out / f"{stem}{key}.csv"
        export.write_curve(f, c)
        files.append(f.name)
    return ex, curves, files


def cmd_spectra(cfg: RunConfig, model: WeightModel, out: Path) -> dict:
    grid = cfg.grid()
    ex, curves, files = _spectra_bundle(model, grid, out, "", cfg.q_max)
    tau = curves["tau"]
    ok = np.isfinite(tau.values) & (np.array(tau.branch_labels) != spectra.UNDEFINED)
    slopes = np.gradient(tau.values[ok], tau.grid[ok]) if ok.sum() > 1 else np.zeros(1)
    # a linear tau has a one-point Legendre support
    alpha = np.linspace(slopes.min(), slopes.max(), cfg.q_steps) if np.ptp(slopes) > 1e-9 \
        else np.array([slopes.mean()])
    leg = spectra.legendre(spectra.SpectrumCurve(tau.grid[ok], tau.values[ok],
                                                 [""] * int(ok.sum()), "tau"), alpha)
    export.write_curve(out / "tau_legendre.csv", leg)
    files.append("tau_legendre.csv")
    report = {"model": model.name, "critical_exponents": ex,
              "dimensions": None, "notes": []}
    try:
        report["dimensions"] = spectra.dims(model)
    except ModelError as exc:
        report["notes"].append(str(exc))
    export.write_json(out / "spectra.json", report)
    files.append("spectra.json")
    if cfg.plot:
        _plot_spectra(out / "spectra.svg", model, grid, curves, ex, f"{model.name}: T, tau_nu, tau")
        files.append("spectra.svg")
    return {"files": files, "summary": {"q_c": ex.q_c, "q_c_tilde": ex.q_c_tilde}}


def cmd_transitions(cfg: RunConfig, model: WeightModel, out: Path) -> dict:
    report = transitions.classify_transitions(model, q_max=cfg.q_max)
    data = report.to_dict()
    if model.family == "lognormal":
        data["regime"] = transitions.regime_from_report(report)
    export.write_json(out / "transitions.json", data)
    files = ["transitions.json"]
    if cfg.plot:
        grid = cfg.grid()
        ex = spectra.critical_exponents(model, q_max=cfg.q_max)
        chart = LineChart(f"{model.name}: phase transitions", ylabel="exponent")
        chart.add("T", grid, spectra.T(model, grid))
        chart.add("tau_nu", grid, spectra.tau_nu(model, grid))
        chart.add("tau", grid, spectra.tau_curve(model, grid, ex).values)
        for t in report.transitions:
            chart.mark(t.q, f"{t.order} {t.q:.3f}")
        chart.save(out / "transitions.svg")
        files.append("transitions.svg")
    return {"files": files,
            "summary": {"transitions": [(t.q, t.order) for t in report.transitions]}}


def cmd_classify(cfg: RunConfig, model: WeightModel, out: Path) -> dict:
    report = criteria.classify_projection(model).to_dict()
    if cfg.env is not None:
        report["environment"] = criteria.ui_criterion(model, cfg.env)
    export.write_json(out / "classification.json", report)
    return {"files": ["classification.json"],
            "summary": {"regime": report["regime"], "rate": report["conditional_rate"]}}


def _empirical_csv(path: Path, curve) -> None:
    lines = ["q,value,branch,stderr"]
    for q, v, se in zip(curve.grid, curve.values, curve.stderr):
        lines.append(f"{export._num(q)},{export._num(v)},empirical,{export._num(se)}")
    path.write_text("\n".join(lines) + "\n")


def cmd_simulate(cfg: RunConfig, model: WeightModel, out: Path) -> dict:
    grid = cfg.grid()
    run = simulate.run_replicas(model, parse_depths(cfg.depths), grid, cfg.replicas,
                                cfg.seed, jobs=cfg.jobs)
    est = simulate.tau_from_run(run, model.m, cfg.method)
    _empirical_csv(out / "empirical_tau.csv", est)
    ex = spectra.critical_exponents(model, q_max=max(8.0, cfg.q_max))
    ref = spectra.tau_curve(model, grid, ex)
    export.write_curve(out / "tau.csv", ref)
    sample = simulate.sample_cascade(model, run.depths[0], cfg.seed)
    export.write_projected(out / "projected.csv", simulate.project(sample))
    report = {"model": model.name, "depths": run.depths, "replicas": cfg.replicas,
              "attempts": run.attempts, "estimator": cfg.method,
              "q": grid, "tau_hat": est.values, "stderr": est.stderr,
              "tau": ref.values, "branch": ref.branch_labels,
              "annealed": np.minimum(spectra.T(model, grid), spectra.tau_nu(model, grid)),
              "projected_depth": run.depths[0], "sample_survived": sample.survived}
    export.write_json(out / "simulate.json", report)
    files = ["empirical_tau.csv", "tau.csv", "projected.csv", "simulate.json"]
    if cfg.plot:
        chart = LineChart(f"{model.name}: empirical tau", ylabel="tau")
        chart.add("tau", grid, ref.values)
        chart.add("empirical", grid, est.values)
        chart.save(out / "simulate.svg")
        files.append("simulate.svg")
    return {"files": files, "summary": {"depths": run.depths}}


def cmd_pressure(cfg: RunConfig, model: WeightModel, out: Path) -> dict:
    grid = cfg.grid()
    run = simulate.run_replicas(model, parse_depths(cfg.depths), grid, cfg.replicas,
                                cfg.seed, jobs=cfg.jobs)
    est = simulate.pressure_from_run(run, cfg.method)
    _empirical_csv(out / "empirical_pressure.csv", est)
    exact = spectra.pressure(model, grid)
    export.write_curve(out / "pressure.csv", spectra.SpectrumCurve(
        grid, exact, ["analytic"] * grid.size, "pressure", model.name))
    export.write_json(out / "pressure.json",
                      {"model": model.name, "depths": run.depths, "q": grid,
                       "P_hat": est.values, "stderr": est.stderr, "P": exact})
    files = ["empirical_pressure.csv", "pressure.csv", "pressure.json"]
    if cfg.plot:
        chart = LineChart(f"{model.name}: branching pressure", ylabel="P(q)")
        chart.add("P", grid, exact)
        chart.add("empirical", grid, est.values)
        chart.save(out / "pressure.svg")
        files.append("pressure.svg")
    return {"files": files, "summary": {"depths": run.depths}}


def cmd_enumerate(cfg: RunConfig, model: WeightModel, out: Path) -> dict:
    rows = []
    for q in cfg.grid():
        res = simulate.exact_enumeration(model, cfg.depth, float(q))
        rows.append({"q": float(q), **res,
                     "m_pow_minus_nT": float(model.m ** (-cfg.depth * spectra.T(model, q)))})
    export.write_json(out / "enumeration.json", {"model": model.name, "depth": cfg.depth,
                                                  "rows": rows})
    return {"files": ["enumeration.json"], "summary": {"rows": len(rows)}}


def cmd_figures(cfg: RunConfig, model: WeightModel | None, out: Path) -> dict:
    fmap = presets.figure_map()
    wanted = cfg.preset or "all"
    if wanted == "all":
        figures = fmap
    elif wanted in fmap:
        figures = {wanted: fmap[wanted]}
    elif wanted in presets.preset_names():
        figures = {wanted: [wanted]}
    else:
        raise ConfigError(f"unknown figure or preset {wanted!r}")
    files, summary = [], {}
    for fig, names in figures.items():
        for name in names:
            info = presets.preset_info(name)
            mdl = presets.load_preset(name)
            q_hi = info["q_max"]
            grid = np.linspace(0.0, q_hi, max(cfg.q_steps, 201))
            stem = f"{fig}_{name}_" if fig != name else f"{name}_"
            ex, curves, written = _spectra_bundle(mdl, grid, out, stem, q_hi)
            title = f"{info['description'] or name}; q_c={_fmt(ex.q_c)}"
            if ex.q_c_tilde != ex.q_c:
                title += f", q~_c={_fmt(ex.q_c_tilde)}"
            _plot_spectra(out / f"{stem}spectra.svg", mdl, grid, curves, ex, title)
            written.append(f"{stem}spectra.svg")
            files.extend(written)
            summary[f"{fig}/{name}"] = {"q_c": ex.q_c, "q_c_tilde": ex.q_c_tilde,
                                        "tau_prime_0_case": ex.tau_prime_0_case}
    export.write_json(out / "figures.json", summary)
    files.append("figures.json")
    return {"files": files, "summary": summary}


def _fmt(x: float) -> str:
    return "inf" if math.isinf(x) else f"{x:.4f}"


HANDLERS = {"spectra": cmd_spectra, "transitions": cmd_transitions, "classify": cmd_classify,
            "simulate": cmd_simulate, "pressure": cmd_pressure, "enumerate": cmd_enumerate,
            "figures": cmd_figures}


def run(cfg: RunConfig) -> dict:
    """Execute one command and write its manifest; returns the manifest."""
    cfg.validate()
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    model = resolve_model(cfg.model) if cfg.model is not None else None
    result = HANDLERS[cfg.command](cfg, model, out)
    config = dataclasses.asdict(cfg)
    config.pop("out_dir")
    config.pop("jobs")            # does not affect outputs
    if model is not None:
        config["model"] = model.to_document()
    manifest = {"command": cfg.command, "config": config, "seed": cfg.seed,
                "outputs": sorted(result["files"]), "summary": result["summary"]}
    export.write_json(out / "manifest.json", manifest)
    return manifest


def replay(manifest_path: str | Path, out_dir: str | Path) -> dict:
    data = json.loads(Path(manifest_path).read_text())
    cfg = RunConfig(**data["config"], out_dir=str(out_dir), jobs=_default_jobs())
    return run(cfg)


# ---------------------------------------------------------------- argv

class _JsonErrorParser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _default_jobs() -> int:
    try:
        return max(1, int(os.environ.get(JOBS_ENV, "1")))
    except ValueError:
        return 1


def build_parser() -> argparse.ArgumentParser:
    parser = _JsonErrorParser(prog="cascade-spectra",
                              description="L^q spectra of projected random cascades")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_JsonErrorParser)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--model", help="model JSON file or preset name")
        p.add_argument("--preset", help="preset or figure name (figures command)")
        p.add_argument("--q-min", type=float, default=0.0)
        p.add_argument("--q-max", type=float, default=4.0)
        p.add_argument("--q-steps", type=int, default=None)
        p.add_argument("--depths", default="8..14")
        p.add_argument("--depth", type=int, default=2, help="enumeration depth (1..3)")
        p.add_argument("--replicas", type=int, default=50)
        p.add_argument("--seed", type=int)
        p.add_argument("--out-dir", default=".")
        p.add_argument("--plot", action="store_true")
        p.add_argument("--jobs", type=int, default=None)
        p.add_argument("--method", choices=("regression", "successive"), default="regression")
        p.add_argument("--env", help="comma-separated environment vector (classify)")
    rp = sub.add_parser("replay")
    rp.add_argument("manifest")
    rp.add_argument("--out-dir", default=".")
    return parser


def config_from_args(ns: argparse.Namespace) -> RunConfig:
    model = ns.model
    if model is None and ns.preset and ns.command != "figures":
        model = ns.preset
    steps = ns.q_steps
    if steps is None:
        steps = 9 if ns.command in ("simulate", "pressure", "enumerate") else 81
    env = [float(t) for t in ns.env.split(",")] if ns.env else None
    return RunConfig(command=ns.command, model=model, q_min=ns.q_min, q_max=ns.q_max,
                     q_steps=steps, depths=ns.depths, replicas=ns.replicas, seed=ns.seed,
                     out_dir=ns.out_dir, plot=ns.plot,
                     jobs=ns.jobs if ns.jobs is not None else _default_jobs(),
                     method=ns.method, env=env, depth=ns.depth, preset=ns.preset)


def main(argv: list[str] | None = None) -> int:
    try:
        ns = build_parser().parse_args(argv)
        if ns.command == "replay":
            manifest = replay(ns.manifest, ns.out_dir)
        else:
            manifest = run(config_from_args(ns))
    except (ConfigError, ModelError, simulate.SimulationError, ValueError, OSError) as exc:
        err = {"error": {"type": type(exc).__name__, "message": str(exc)}}
        print(json.dumps(err), file=sys.stderr)
        return 2 if isinstance(exc, (ConfigError, ModelError)) else 1
    print(json.dumps(export.jsonable(manifest["summary"])))
    return 0


if __name__ == "__main__":
    sys.exit(main())
