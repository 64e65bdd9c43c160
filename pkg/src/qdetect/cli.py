"""
Command-line entry point.

    qdetect <subcommand> --config FILE [--out DIR] [--seed N] [--threads N]

Subcommands: ``sca-scan``, ``optimize``, ``simulate``, ``detect`` and
``crossover``. Every CSV starts with ``#`` comment lines holding the fully
resolved config, followed by a fixed header row; numbers are written with
12 significant digits. A JSON sidecar with the same stem echoes the config
alongside summary values.

Exit codes: 0 success, 2 configuration or usage error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import __version__
from .config import ConfigError, ExperimentConfig, load_config
from .detection import HypothesisPair, compare_schemes
from .filters import ControlTrajectory, make_spin_lock, outcome_probability
from .optimize import (
    ControlFamily,
    ObjectiveConfig,
    cpmg_family,
    crossover_scan,
    eigen_family,
    fit_crossover,
    gradient_optimize,
    grid_search_time,
    ramsey_family,
    spin_lock_family,
)
from .scenario import SensingScenario, objective
from .simulator import simulate_ensemble
from .spectra import White

logger = logging.getLogger("qdetect")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

# default number of detection times for families rebuilt at every time
DEFAULT_POINTS = 20


class PrerequisiteError(ConfigError):
    """An input produced by another subcommand is missing or inconsistent."""


# ---------------------------------------------------------------- output

def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, str):
        return v
    return "{:.12g}".format(float(v))


def write_csv(path: Path, columns: Sequence[str], rows: Iterable[Sequence], cfg: ExperimentConfig,
              command: str) -> None:
    lines = [f"# qdetect {command}"]
    lines += ["# " + line if line else "#" for line in cfg.to_ini().splitlines()]
    lines.append(",".join(columns))
    lines += [",".join(_fmt(v) for v in row) for row in rows]
    path.write_text("\n".join(lines) + "\n")


def read_csv(path: Path) -> tuple[list[str], np.ndarray]:
    body = [ln for ln in path.read_text().splitlines() if ln and not ln.startswith("#")]
    header = body[0].split(",")
    data = np.array([[float(x) for x in ln.split(",")] for ln in body[1:]], dtype=float)
    return header, data.reshape(-1, len(header))


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return _jsonable(v.tolist())
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if np.isfinite(v) else None
    return v


def write_json(path: Path, cfg: ExperimentConfig, command: str, results: dict) -> None:
    doc = {"command": command, "version": __version__, "config": cfg.to_dict(), "results": results}
    path.write_text(json.dumps(_jsonable(doc), indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------- helpers

def _objective_config(cfg: ExperimentConfig, scenario: SensingScenario | None = None) -> ObjectiveConfig:
    return ObjectiveConfig(scenario or cfg.scenario(), cfg["grid"]["dt"], cfg["control"]["omega_max"])


def _gradient_start(cfg: ExperimentConfig, grid) -> ControlTrajectory:
    """Spin-lock at the band center plus a seeded perturbation of 5% of it."""
    omega0 = cfg["control"]["omega0"]
    rng = np.random.default_rng(cfg["optimizer"]["seed"])
    start = make_spin_lock(omega0, grid)
    return start.with_omega(start.omega + 0.05 * omega0 * rng.standard_normal(grid.n_steps))


def _family(cfg: ExperimentConfig, scheme: str, ocfg: ObjectiveConfig) -> ControlFamily:
    c = cfg["control"]
    if scheme == "spin_lock":
        return spin_lock_family(c["omega0"])
    if scheme == "cpmg":
        if c["tau_cpmg"] is None:
            raise ConfigError("[control] cpmg needs tau_cpmg (or a positive omega0)")
        return cpmg_family(c["tau_cpmg"])
    if scheme == "ramsey":
        return ramsey_family()
    if scheme == "eigen_opt":
        if not isinstance(ocfg.scenario.background, White):
            logger.warning("eigen-optimal control assumes a white background")
        return eigen_family(ocfg.scenario)
    if scheme == "gradient_opt":
        opt = cfg.optimizer()

        def build(grid):
            return gradient_optimize(ocfg, grid.t, _gradient_start(cfg, grid), opt).control

        return ControlFamily("gradient_opt", build)
    raise ConfigError(f"[control] unknown scheme {scheme!r}")


def _step_range(cfg: ExperimentConfig, prefix_stable: bool) -> np.ndarray:
    g = cfg["grid"]
    dt = g["dt"]
    lo = max(int(round(g["t_min"] / dt)), 1)
    hi = int(round(g["t_max"] / dt))
    if hi < lo:
        raise ConfigError(f"[grid] empty time range [{g['t_min']}, {g['t_max']}]")
    if prefix_stable and g["n_points"] == 0:
        return np.arange(lo, hi + 1)
    n = g["n_points"] or DEFAULT_POINTS
    return np.unique(np.rint(np.linspace(lo, hi, n)).astype(int))


def _map(fn, items, threads: int):
    """Ordered map, fanned out over ``threads`` workers."""
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------- subcommands

def cmd_sca_scan(cfg: ExperimentConfig, out: Path, threads: int) -> dict:
    ocfg = _objective_config(cfg)
    sc = ocfg.scenario
    scheme = cfg["control"]["scheme"]
    family = _family(cfg, scheme, ocfg)
    steps = _step_range(cfg, family.prefix_stable)
    dt = ocfg.dt
    if family.prefix_stable:
        full = family.build(ocfg.grid(steps[-1] * dt))
        chi_eta, chi_s = sc.chi_profiles(full)
        chi_eta, chi_s = chi_eta[steps - 1], chi_s[steps - 1]
    else:
        pairs = _map(lambda n: sc.chi(family.build(ocfg.grid(n * dt))), steps, threads)
        chi_eta, chi_s = (np.array(x) for x in zip(*pairs))
    obj = objective(chi_eta, chi_s)
    rows = zip(steps * dt, chi_eta, chi_s, outcome_probability(chi_eta),
               outcome_probability(chi_eta + chi_s), obj)
    write_csv(out / "sca_scan.csv", ("t", "chi_eta", "chi_s", "p0_eta", "p0_sig", "objective"),
              rows, cfg, "sca-scan")
    best = int(np.argmax(obj))
    results = {"scheme": scheme, "t_opt": steps[best] * dt, "objective_max": obj[best]}

    sweep = cfg["control"]["omega_sweep"]
    if sweep:
        hi = int(round(cfg["grid"]["t_max"] / dt))
        lo = max(int(round(cfg["grid"]["t_min"] / dt)), 1)
        cand = np.arange(lo, hi + 1) * dt

        def point(omega):
            t_opt, ctrl, o_opt = grid_search_time(ocfg, spin_lock_family(omega), cand)
            ce, cs = sc.chi(ctrl)
            return (omega, t_opt, ce, cs, o_opt)

        sweep_rows = _map(point, sweep, threads)
        write_csv(out / "sca_sweep.csv", ("omega", "t_opt", "chi_eta", "chi_s", "objective"),
                  sweep_rows, cfg, "sca-scan")
        peak = max(sweep_rows, key=lambda r: r[4])
        results["sweep_peak_omega"] = peak[0]
        results["sweep_peak_objective"] = peak[4]
    write_json(out / "sca_scan.json", cfg, "sca-scan", results)
    return results


def cmd_optimize(cfg: ExperimentConfig, out: Path, threads: int) -> dict:
    ocfg = _objective_config(cfg)
    sc = ocfg.scenario
    scheme = cfg["control"]["scheme"]
    dt = ocfg.dt
    trace = None
    converged = None
    if scheme == "gradient_opt":
        opt = cfg.optimizer()
        steps = _step_range(cfg, False)

        def run(n):
            grid = ocfg.grid(n * dt)
            return gradient_optimize(ocfg, grid.t, _gradient_start(cfg, grid), opt)

        runs = _map(run, steps, threads)
        scan = [(r.t_opt, r.objective) for r in runs]
        best = max(runs, key=lambda r: r.objective)  # first maximum is the smaller time
        ctrl, t_opt, o_opt = best.control, best.t_opt, best.objective
        trace, converged = best.trace, best.converged
    else:
        family = _family(cfg, scheme, ocfg)
        steps = _step_range(cfg, family.prefix_stable)
        t_opt, ctrl, o_opt = grid_search_time(ocfg, family, steps * dt)
        if family.prefix_stable:
            chi_eta, chi_s = sc.chi_profiles(family.build(ocfg.grid(steps[-1] * dt)))
            scan = list(zip(steps * dt, objective(chi_eta[steps - 1], chi_s[steps - 1])))
        else:
            scan = _map(lambda n: (n * dt, sc.report(family.build(ocfg.grid(n * dt))).objective),
                        steps, threads)
    report = sc.report(ctrl)
    write_csv(out / "optimize_scan.csv", ("t", "objective"), scan, cfg, "optimize")
    write_csv(out / "optimize_control.csv", ("k", "t_k", "omega_k"),
              zip(range(ctrl.n_steps), ctrl.grid.times, ctrl.omega), cfg, "optimize")
    write_csv(out / "optimize_pulses.csv", ("k", "t_k", "angle"),
              ((k, k * dt, a) for k, a in ctrl.pulse_jumps), cfg, "optimize")
    if trace is not None:
        write_csv(out / "optimize_trace.csv", ("iteration", "objective"),
                  zip(range(1, len(trace) + 1), trace), cfg, "optimize")
    results = {
        "scheme": scheme,
        "t_opt": t_opt,
        "objective": o_opt,
        "chi_eta": report.chi_eta,
        "chi_s": report.chi_s,
        "p0_eta": report.p0_eta,
        "p0_sig": report.p0_sig,
        "converged": converged,
        "n_iter": None if trace is None else len(trace),
    }
    write_json(out / "optimize.json", cfg, "optimize", results)
    return results


def _simulate_scheme(cfg: ExperimentConfig, ocfg: ObjectiveConfig, scheme: str) -> dict:
    s = cfg["simulation"]
    sc = ocfg.scenario
    grid = ocfg.grid(s["t_max"])
    ctrl = _family(cfg, scheme, ocfg).build(grid)
    times = np.linspace(grid.t / s["n_times"], grid.t, s["n_times"])
    steps = np.rint(times / grid.dt).astype(int)
    chi_eta, chi_s = sc.chi_profiles(ctrl)
    out = {"times": steps * grid.dt}
    for label, present in (("noise", False), ("signal", True)):
        res = simulate_ensemble(sc, ctrl, s["n_real"], s["seed"], present, times, s["batch_size"])
        chi = chi_eta[steps - 1] + (chi_s[steps - 1] if present else 0.0)
        out[label] = (res.p_mean, res.p_stderr, outcome_probability(chi))
    return out


def cmd_simulate(cfg: ExperimentConfig, out: Path, threads: int) -> dict:
    ocfg = _objective_config(cfg)
    schemes = cfg["simulation"]["schemes"]
    runs = _map(lambda name: _simulate_scheme(cfg, ocfg, name), schemes, threads)
    results = {}
    for name, run in zip(schemes, runs):
        for label in ("noise", "signal"):
            mean, err, sca = run[label]
            write_csv(out / f"simulate_{name}_{label}.csv", ("t", "P_mean", "P_stderr", "P_sca"),
                      zip(run["times"], mean, err, sca), cfg, "simulate")
        dp = run["noise"][0] - run["signal"][0]
        results[name] = {"t_max_gap": run["times"][int(np.argmax(dp))], "max_gap": float(dp.max())}
    results["seed"] = cfg["simulation"]["seed"]
    results["n_real"] = cfg["simulation"]["n_real"]
    write_json(out / "simulate.json", cfg, "simulate", results)
    return results


def _mc_pair(cfg: ExperimentConfig, out: Path, scheme: str) -> HypothesisPair:
    paths = {label: out / f"simulate_{scheme}_{label}.csv" for label in ("noise", "signal")}
    for p in paths.values():
        if not p.exists():
            raise PrerequisiteError(
                f"missing simulation output {p}; run 'qdetect simulate' with schemes including "
                f"{scheme} and the same --out directory first"
            )
    meta = out / "simulate.json"
    if meta.exists():
        echoed = json.loads(meta.read_text())["config"]["scenario"]
        if echoed != _jsonable(cfg["scenario"]):
            raise PrerequisiteError(f"{meta} was produced for a different [scenario] block; re-run simulate")
    (_, noise), (_, signal) = read_csv(paths["noise"]), read_csv(paths["signal"])
    gap = noise[:, 1] - signal[:, 1]
    i = int(np.argmax(gap))
    p_eta = float(np.clip(noise[i, 1], 0.0, 1.0))
    p_sig = float(np.clip(min(signal[i, 1], noise[i, 1]), 0.0, 1.0))
    return HypothesisPair(p_eta, p_sig, float(noise[i, 0]))


def _sca_pair(cfg: ExperimentConfig, ocfg: ObjectiveConfig, scheme: str) -> HypothesisPair:
    family = _family(cfg, scheme, ocfg)
    steps = _step_range(cfg, family.prefix_stable)
    t_opt, ctrl, _ = grid_search_time(ocfg, family, steps * ocfg.dt)
    rep = ocfg.scenario.report(ctrl)
    return HypothesisPair(rep.p0_eta, rep.p0_sig, t_opt)


def cmd_detect(cfg: ExperimentConfig, out: Path, threads: int) -> dict:
    d = cfg["detection"]
    ocfg = _objective_config(cfg)
    if d["source"] == "mc":
        pairs = {name: _mc_pair(cfg, out, name) for name in d["schemes"]}
    else:
        found = _map(lambda name: _sca_pair(cfg, ocfg, name), d["schemes"], threads)
        pairs = dict(zip(d["schemes"], found))
    comp = compare_schemes(pairs, d["n_list"])
    for name, curve in comp.curves.items():
        write_csv(out / f"detect_{name}.csv", curve.columns, curve.as_tuples(), cfg, "detect")
    write_csv(out / "detect_ranking.csv", ("n", "scheme", "mean_error", "rank"), comp.table(), cfg, "detect")
    results = {
        "source": d["source"],
        "pairs": {name: {"t": p.t, "p_eta": p.p_eta, "p_sig": p.p_sig} for name, p in pairs.items()},
        "ranking": dict(zip(map(str, comp.n_list), comp.ranking)),
    }
    write_json(out / "detect.json", cfg, "detect", results)
    return results


def cmd_crossover(cfg: ExperimentConfig, out: Path, threads: int) -> dict:
    x = cfg["crossover"]
    sc = cfg.scenario()
    if x["optimize"]:
        opt = cfg.optimizer()
    else:
        opt = None
    dt = cfg["grid"]["dt"]
    scans = _map(lambda w: crossover_scan([w], x["sigma_t_list"], sc, dt, x["t_max"], opt),
                 x["omega0_list"], threads)
    rows = [r for s in scans for r in s.rows]
    cross = {w: s.cross[w] for w, s in zip(x["omega0_list"], scans)}
    write_csv(out / "crossover.csv", scans[0].columns, rows, cfg, "crossover")
    write_csv(out / "crossover_summary.csv", ("omega0", "sigma_cross", "inv_sigma_cross"),
              ((w, np.nan if s is None else s, np.nan if s is None else 1 / s) for w, s in cross.items()),
              cfg, "crossover")
    results = {"sigma_cross": {str(w): s for w, s in cross.items()},
               "open_ended": [w for w, s in cross.items() if s is None]}
    found = {w: s for w, s in cross.items() if s is not None}
    if len(found) >= 2:
        fit = fit_crossover(found)
        results["fit"] = fit
        write_csv(out / "crossover_fit.csv", ("slope", "intercept", "r_squared"),
                  [(fit["slope"], fit["intercept"], fit["r_squared"])], cfg, "crossover")
    write_json(out / "crossover.json", cfg, "crossover", results)
    return results


COMMANDS = {
    "sca-scan": cmd_sca_scan,
    "optimize": cmd_optimize,
    "simulate": cmd_simulate,
    "detect": cmd_detect,
    "crossover": cmd_crossover,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qdetect", description="Control design and detection statistics "
                                     "for qubit-based detection of stochastic signals.")
    parser.add_argument("--version", action="version", version=f"qdetect {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="INI experiment file")
        p.add_argument("--out", default=".", help="output directory (default: current)")
        p.add_argument("--seed", type=int, default=None, help="override simulation and optimizer seeds")
        p.add_argument("--threads", type=int, default=1, help="worker threads for independent scan points")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.threads < 1:
            raise ConfigError("--threads must be at least 1")
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg = cfg.with_seed(args.seed)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        results = COMMANDS[args.command](cfg, out, args.threads)
    except ConfigError as exc:
        print(f"qdetect {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ArithmeticError, np.linalg.LinAlgError, RuntimeError) as exc:
        print(f"qdetect {args.command}: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        print(f"qdetect {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    logger.info("%s: %s", args.command, results)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
