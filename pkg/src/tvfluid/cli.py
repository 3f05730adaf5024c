"""Command-line scenario runner.

Subcommands::

    tvfluid run <config>               time-step a scenario, write budget.csv and snapshots
    tvfluid mms <config>               manufactured-solution convergence study
    tvfluid galerkin-compare <config>  finite differences against the spectral reference
    tvfluid validate-material <config> check the material functions against their bounds

Exit codes: 0 success, 1 configuration error, 2 positivity lost, 3 solver
non-convergence, 4 a study or validation did not meet its thresholds.
The environment variable TVS_OUT_DIR overrides ``output.dir``.
"""

import argparse
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import audit
from . import galerkin_ref as gal
from . import solver as slv
from .config import dump_config, load_config
from .constitutive import Regime, validate_bounds
from .errors import (
    BlowupDetected,
    CflViolation,
    ConfigError,
    IncompatibleScenario,
    NonPositiveTemperature,
    NotPositiveDefinite,
    OutOfRange,
    PoissonNoConvergence,
    PositivityLost,
    QuadratureFailure,
)
from .grid import write_pgm, write_snapshot
from .mms import ManufacturedCase, convergence_study
from .scenarios import lowmode_fields, make_initial

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_POSITIVITY = 2
EXIT_NONCONVERGENCE = 3
EXIT_THRESHOLD = 4

log = logging.getLogger("tvfluid")


def output_dir(cfg):
    out = Path(os.environ.get("TVS_OUT_DIR") or cfg["output.dir"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _fmt(x):
    return "%.17g" % x


def books_stress_diffusion_work(model, config):
    """True when the heat equation ignores the stress-diffusion work (direct P1 path)."""
    return model.regime is Regime.P1 and slv.temperature_path(model, config) == "theta"


class BudgetWriter:
    """budget.csv rows plus the running quantities of the run summary."""

    def __init__(self, path, model, epsilon, book_work):
        self.fh = open(path, "w", encoding="ascii", newline="\n")
        self.fh.write(",".join(audit.BUDGET_COLUMNS) + "\n")
        self.model, self.epsilon, self.book_work = model, epsilon, book_work
        self.rows = 0
        self.E0 = None
        self.work = 0.0
        self._power = None
        self.min_production = math.inf
        self.min_theta = math.inf
        self.min_detF = math.inf
        self.sup = {}
        self.time_integral = {"L2_gradv_sq": 0.0, "P_entropy": 0.0}
        self._last = None

    def on_step(self, state, dt):
        if self.book_work:
            p = audit.stress_diffusion_power(self.model, state, self.epsilon)
            self.work += 0.5 * dt * (self._power + p)
            self._power = p

    def write(self, state):
        rec = audit.budget_record(self.model, state)
        if self.E0 is None:
            self.E0 = rec.E_total
            if self.book_work:
                self._power = audit.stress_diffusion_power(self.model, state, self.epsilon)
        prod = audit.entropy_production(self.model, state)
        self.min_production = min(self.min_production, float(np.min(prod)))
        self.min_theta = min(self.min_theta, rec.min_theta)
        self.min_detF = min(self.min_detF, rec.min_detF)
        norms = rec.norms
        for name in ("L2_v", "L1_theta", "L1_logtheta", "L1_fB", "L2_F", "L4_F", "L2_B"):
            self.sup[name] = max(self.sup.get(name, 0.0), getattr(norms, name))
        if self._last is not None:
            t0, g0, p0 = self._last
            dt = rec.t - t0
            self.time_integral["L2_gradv_sq"] += 0.5 * dt * (g0 + norms.L2_gradv**2)
            self.time_integral["P_entropy"] += 0.5 * dt * (p0 + rec.P_entropy)
        self._last = (rec.t, norms.L2_gradv**2, rec.P_entropy)
        self.fh.write(",".join(_fmt(x) for x in rec.row()) + "\n")
        self.rows += 1
        self.last_record = rec
        return rec

    def close(self):
        self.fh.close()


def _write_snapshots(out, index, state, pgm):
    snap = out / "snapshots"
    snap.mkdir(exist_ok=True)
    stem = f"{index:06d}"
    write_snapshot(snap / f"theta_{stem}.tvs", "theta", state.t, state.theta)
    write_snapshot(snap / f"v_{stem}.tvs", "v", state.t, state.v)
    write_snapshot(snap / f"F_{stem}.tvs", "F", state.t, state.F)
    write_snapshot(snap / f"p_{stem}.tvs", "p", state.t, state.p)
    if pgm:
        write_pgm(snap / f"theta_{stem}.pgm", state.theta)


def simulate(cfg, out):
    """Run the scenario described by ``cfg`` writing into ``out``; returns the summary."""
    grid = cfg.grid()
    model = cfg.model()
    scfg = cfg.solver_config()
    slv.temperature_path(model, scfg)  # reject impossible paths before any work
    state = make_initial(cfg["init.preset"], grid, **cfg.init_params())
    state.theta = slv.init_theta_cutoff(state.theta, scfg.r)

    stride = cfg["output.stride"]
    snapshots, pgm = cfg["output.snapshots"], cfg["output.pgm"]
    max_steps = cfg["solver.max_steps"]
    budget = BudgetWriter(out / "budget.csv", model, scfg.epsilon, books_stress_diffusion_work(model, scfg))
    summary = {"status": "running", "steps": 0}
    try:
        budget.write(state)
        if snapshots:
            _write_snapshots(out, 0, state, pgm)
        steps = 0
        T = scfg.T
        while state.t < T * (1.0 - 1e-13) and (max_steps is None or steps < max_steps):
            dt = min(slv.choose_dt(model, scfg, state), T - state.t)
            state = slv.step(model, scfg, state, None, dt)
            steps += 1
            budget.on_step(state, dt)
            if steps % stride == 0:
                budget.write(state)
                if snapshots:
                    _write_snapshots(out, steps, state, pgm)
        if steps % stride != 0:
            budget.write(state)
            if snapshots:
                _write_snapshots(out, steps, state, pgm)
        summary["status"] = "ok"
        summary["steps"] = steps
    except Exception as exc:
        summary["status"] = f"failed: {exc}"
        raise
    finally:
        budget.close()
        rec = getattr(budget, "last_record", None)
        if budget.E0 is not None and rec is not None:
            summary.update(
                t_final=rec.t,
                E_initial=budget.E0,
                E_final=rec.E_total,
                stress_diffusion_work=budget.work,
                energy_drift_rel=audit.energy_drift(budget.E0, rec.E_total, budget.work),
                min_theta=budget.min_theta,
                min_detF=budget.min_detF,
                min_entropy_production=budget.min_production,
                positivity=audit.positivity_check(state, scfg.r, model.regime).passed,
                sup_norms=budget.sup,
                time_integrals=budget.time_integral,
                budget_rows=budget.rows,
            )
        summary["config"] = dump_config(cfg)
        with open(out / "summary.json", "w", encoding="ascii") as fh:
            json.dump(summary, fh, indent=2, sort_keys=True)
            fh.write("\n")
    return summary


def run_scenario(config_path):
    cfg = load_config(config_path)
    out = output_dir(cfg)
    summary = simulate(cfg, out)
    log.info("run finished: %d steps, t = %.6g, relative energy drift %.3e, min theta %.6g",
             summary["steps"], summary["t_final"], summary["energy_drift_rel"], summary["min_theta"])
    return EXIT_OK


def run_mms(config_path):
    cfg = load_config(config_path)
    out = output_dir(cfg)
    if cfg["grid.bc"] != "periodic":
        raise ConfigError("manufactured solutions need a periodic grid", key="grid.bc",
                          line=cfg.lines.get("grid.bc"))
    model = cfg.model()
    case = ManufacturedCase(cfg["mms.a_v"], cfg["mms.a_theta"], cfg["mms.a_F"], cfg["mms.k"], model.regime)
    path = cfg["solver.temperature_path"]
    report = convergence_study(model, case, cfg["mms.grids"], cfg["mms.T"], cfg["solver.epsilon"],
                               None if path == "auto" else path)
    lines = report.csv_lines()
    (out / "mms.csv").write_text("\n".join(lines) + "\n", encoding="ascii")
    for line in lines:
        print(line)
    lo, hi, flo = cfg["mms.order_min"], cfg["mms.order_max"], cfg["mms.order_F_min"]
    ok = report.within("v", lo, hi) and report.within("theta", lo, hi) and report.within("F", flo)
    log.info("mms orders %s", "within thresholds" if ok else "OUTSIDE thresholds")
    return EXIT_OK if ok else EXIT_THRESHOLD


def galerkin_compare(cfg):
    """Run both discretisations on the lowmode data; returns the discrepancy list."""
    if cfg["grid.bc"] != "periodic":
        raise IncompatibleScenario("the Galerkin reference lives on the periodic torus")
    if cfg["init.preset"] != "lowmode":
        raise IncompatibleScenario(
            f"initial data '{cfg['init.preset']}' cannot be represented by the Galerkin basis; use lowmode")
    fd_model, gal_model = cfg.model(), cfg.model("galerkin.")
    grid = cfg.grid()
    scfg = cfg.solver_config()
    eps = scfg.epsilon
    amp = cfg["init.amplitude"] if cfg.is_set("init.amplitude") else 0.2
    label = f"lowmode(amplitude={amp!r})"
    T = cfg["galerkin.T"]
    times = list(np.linspace(0.0, T, cfg["galerkin.outputs"] + 1)[1:])

    if gal_model != fd_model:
        # checked again by compare_to_fd; fail before spending time on runs
        raise IncompatibleScenario("the Galerkin and finite-difference material models differ")
    basis = gal.GalerkinBasis(cfg["galerkin.n_flow"], cfg["galerkin.m_temp"])
    fields = lowmode_fields(amp)
    coeffs = gal.project_fields(basis, fields["v"], fields["F"], fields["theta"])
    dt = cfg["galerkin.dt"] or gal.rk4_dt(gal_model, basis)
    ctraj = [coeffs]
    for t in times:
        steps = max(1, math.ceil((t - ctraj[-1].t) / dt - 1e-9))
        seg = gal.integrate_rk4(gal_model, basis, ctraj[-1], (t - ctraj[-1].t) / steps, t, eps)
        ctraj.append(seg[-1])

    state = make_initial("lowmode", grid, amplitude=amp)
    states = [state]
    for t in times:
        state = slv.run(fd_model, slv.with_end_time(scfg, t), state)
        states.append(state)
    g_tr = gal.galerkin_trajectory(gal_model, basis, ctraj, grid, eps, label)
    f_tr = gal.fd_trajectory(fd_model, states, eps, label)
    return gal.compare_to_fd(g_tr, f_tr)


def run_galerkin_compare(config_path):
    cfg = load_config(config_path)
    out = output_dir(cfg)
    disc = galerkin_compare(cfg)
    lines = ["t,disc_v,disc_F,disc_theta"] + [f"{_fmt(d.t)},{_fmt(d.v)},{_fmt(d.F)},{_fmt(d.theta)}" for d in disc]
    (out / "galerkin.csv").write_text("\n".join(lines) + "\n", encoding="ascii")
    for line in lines:
        print(line)
    limit = cfg["galerkin.max_discrepancy"]
    ok = all(max(d.v, d.F, d.theta) <= limit for d in disc)
    log.info("Galerkin discrepancy %s %.3g", "within" if ok else "ABOVE", limit)
    return EXIT_OK if ok else EXIT_THRESHOLD


def run_validate_material(config_path):
    cfg = load_config(config_path)
    model = cfg.model()
    report = validate_bounds(model, cfg["validate.sample_max"], cfg["validate.n_samples"])
    print(f"regime {model.regime.value}")
    for line in report.lines():
        print(line)
    return EXIT_OK if report.passed else EXIT_THRESHOLD


COMMANDS = {
    "run": run_scenario,
    "mms": run_mms,
    "galerkin-compare": run_galerkin_compare,
    "validate-material": run_validate_material,
}


def build_parser():
    parser = argparse.ArgumentParser(prog="tvfluid", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-q", "--quiet", action="store_true", help="only report errors")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("config", help="path to a key = value scenario file")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s: %(message)s", stream=sys.stderr)
    try:
        return COMMANDS[args.command](args.config)
    except (ConfigError, IncompatibleScenario, CflViolation) as exc:
        log.error("%s", exc)
        return EXIT_CONFIG
    except (PositivityLost, NonPositiveTemperature, NotPositiveDefinite) as exc:
        log.error("%s", exc)
        return EXIT_POSITIVITY
    except (PoissonNoConvergence, BlowupDetected, QuadratureFailure, OutOfRange) as exc:
        log.error("%s", exc)
        return EXIT_NONCONVERGENCE
    except ValueError as exc:
        # remaining validation errors raised while building model or scenario objects
        log.error("%s", exc)
        return EXIT_CONFIG
