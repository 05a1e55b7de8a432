"""Command-line entry point: ``microgrid-dobc <command> [options]``.

Exit status is 0 on success, 1 when a run fails (divergence, failed fit) and
2 for configuration or input errors.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .config import ConfigError, RunConfig, load_config
from .control import NoiseSpec, simulate
from .dobc import TABLE1_LAMBDAS, design_q, q_summary
from .lti import SimulationDiverged, TransferFunction, bode, compose_feedback, poles, routh_hurwitz_stable
from .metrics import compute_indices, render_report
from .scenarios import (
    LFC_NOISE,
    UncertaintyBudget,
    avr_report,
    generate_table3_grid,
    lfc_report,
    make_scenario,
    run_paper_case,
    worst_case_scan,
)
from .sysid import DatasetError, IdDataset, IdentificationError, critical_integral_gain, fit_second_order, verify_stability

log = logging.getLogger("microgrid_dobc")

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG = 0, 1, 2


class UsageError(Exception):
    """Bad command-line input; maps to exit status 2."""


def _write(path: Path, text: str) -> Path:
    with open(path, "w", newline="\n") as fh:
        fh.write(text)
    return path


def _manifest(out: Path, command: str, cfg: RunConfig | None, extra: dict | None = None) -> Path:
    data = {"tool": "microgrid-dobc", "version": __version__, "command": command}
    if cfg is not None:
        data["config"] = cfg.as_dict()
    if extra:
        data.update(extra)
    return _write(out / "manifest.json", json.dumps(data, indent=2, sort_keys=True) + "\n")


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _config(args) -> RunConfig:
    return load_config(
        args.config,
        profile=getattr(args, "profile", None),
        case=getattr(args, "case", None),
        seed=args.seed,
        dt=args.dt,
        horizon=args.horizon,
    )


def _case_noise(cfg: RunConfig) -> NoiseSpec:
    spec = cfg.scenario.get("noise") or {}
    return replace(LFC_NOISE, **{**spec, "seed": cfg.seed})


def _run(cfg: RunConfig, dobc: bool | None = None, workers: int = 1):
    """Run the configured experiment; returns ``(trace, report)``."""
    loop = cfg.closed_loop(dobc=dobc)
    if cfg.case:
        return run_paper_case(
            cfg.case,
            loop,
            t_step=cfg.t_step,
            horizon=cfg.horizon,
            noise=_case_noise(cfg),
            workers=workers,
        )
    tr = simulate(loop, cfg.horizon)
    t0 = tr.meta["onset"] or 0.0
    if cfg.loop == "lfc":
        return tr, lfc_report(tr, t0)
    if cfg.loop == "avr":
        return tr, avr_report(tr, t0)
    return tr, compute_indices(tr["error"], tr.dt, t0, response=tr["y"], peak_label="MO")


# --- simulate ---------------------------------------------------------------


def cmd_simulate(args) -> int:
    cfg = _config(args)
    out = _outdir(args)
    dobc = False if args.baseline else None
    tr, report = _run(cfg, dobc=dobc, workers=args.workers)
    label = "baseline" if args.baseline or not cfg.observer.get("enabled", True) else "dobc"
    text, table = render_report({label: report}, title=cfg.case or cfg.loop)
    _write(out / "trace.csv", tr.to_csv())
    _write(out / "report.csv", table)
    _write(out / "report.txt", text)
    _manifest(out, "simulate", cfg, {"controller_mode": label, "trace_meta": _jsonable(tr.meta)})
    print(text)
    return EXIT_OK


def _jsonable(meta: dict) -> dict:
    return {k: (list(v) if isinstance(v, tuple) else v) for k, v in meta.items()}


# --- sweep ------------------------------------------------------------------

GRID_COLUMNS = ("test", "pv_zeta_l", "pv_zeta_u", "load_zeta_l", "load_zeta_u")


def read_grid(path, pv_forecast: float, load_forecast: float, **kw):
    """Scenario grid from a CSV with columns ``test,pv_zeta_l,pv_zeta_u,load_zeta_l,load_zeta_u``."""
    try:
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
    except OSError as exc:
        raise UsageError(f"cannot read grid file {path}: {exc.strerror}") from None
    grid = []
    for lineno, row in enumerate(rows, start=2):
        try:
            vals = [float(row[c]) for c in GRID_COLUMNS[1:]]
            grid.append(
                make_scenario(
                    row["test"],
                    UncertaintyBudget(vals[0], vals[1], pv_forecast),
                    UncertaintyBudget(vals[2], vals[3], load_forecast),
                    **kw,
                )
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise UsageError(f"{path}:{lineno}: bad grid row ({exc})") from None
    if not grid:
        raise UsageError(f"grid file {path} has no scenarios")
    return grid


def sweep_csv(result) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([*GRID_COLUMNS, "dP_pv", "dP_load", "df_max", "diverged", "worst"])
    for i, e in enumerate(result.entries):
        s = e.scenario
        w.writerow([
            s.name,
            repr(s.pv_budget.zeta_l), repr(s.pv_budget.zeta_u),
            repr(s.load_budget.zeta_l), repr(s.load_budget.zeta_u),
            repr(s.pv_step), repr(s.load_step),
            repr(e.df_max), str(e.diverged).lower(), str(i == result.argmax).lower(),
        ])
    return buf.getvalue()


def cmd_sweep(args) -> int:
    cfg = _config(args)
    if cfg.loop != "lfc":
        raise ConfigError("loop", "the budget sweep needs the lfc loop")
    out = _outdir(args)
    kw = {"t_step": cfg.t_step, "horizon": cfg.horizon}
    if args.grid:
        grid = read_grid(args.grid, args.pv_forecast, args.load_forecast, **kw)
    else:
        grid = generate_table3_grid(args.pv_forecast, args.load_forecast, **kw)
    result = worst_case_scan(grid, cfg.closed_loop(dobc=False if args.baseline else None), workers=args.workers)
    _write(out / "sweep.csv", sweep_csv(result))
    if result.worst is not None:
        from . import plotting

        plotting.plot_sweep([e.scenario.name for e in result.entries],
                            [0.0 if e.diverged else e.df_max for e in result.entries],
                            result.argmax, out / "sweep.png")
    if result.worst is None:
        summary = "all scenarios diverged\n"
    else:
        summary = f"argmax: {result.worst.scenario.name} df_max={result.worst.df_max:.6g} Hz\n"
    n_div = sum(e.diverged for e in result.entries)
    if n_div:
        summary += f"diverged: {n_div} of {len(result.entries)}\n"
    _write(out / "summary.txt", summary)
    _manifest(out, "sweep", cfg, {"pv_forecast": args.pv_forecast, "load_forecast": args.load_forecast,
                                  "grid_file": args.grid, "baseline": args.baseline})
    print(summary, end="")
    return EXIT_RUNTIME if result.worst is None else EXIT_OK


# --- bode -------------------------------------------------------------------


def _omega_grid(args) -> np.ndarray:
    if args.omega is not None:
        if not args.omega > 0:
            raise UsageError("--omega must be positive")
        return np.array([args.omega])
    lo, hi, n = args.omega_min, args.omega_max, args.points
    if not (lo > 0 and hi > lo and n >= 2):
        raise UsageError(f"improper frequency range [{lo}, {hi}] with {n} points")
    return np.logspace(np.log10(lo), np.log10(hi), n)


def bode_csv(points, label_col: tuple[str, str] | None = None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    head = ["omega", "gain_db", "phase_deg"]
    w.writerow(([label_col[0]] if label_col else []) + head)
    for p in points:
        row = [repr(float(p.omega)), repr(float(p.gain_db)), repr(float(p.phase_deg))]
        w.writerow(([label_col[1]] if label_col else []) + row)
    return buf.getvalue()


def cmd_bode(args) -> int:
    omega = _omega_grid(args)
    out = _outdir(args)
    if args.plant:
        cfg = _config(args)
        model = cfg.plant_model()
        tf = {"lfc": lambda: model.control_to_frequency(), "avr": lambda: model.open_loop(),
              "generic": lambda: model.nominal()}[cfg.loop]()
        _write(out / "bode.csv", bode_csv(bode(tf, omega)))
        _manifest(out, "bode", cfg, {"omega": omega.tolist()})
        print(f"wrote {len(omega)} points for the {cfg.loop} nominal plant")
        return EXIT_OK

    lambdas = args.lambdas or list(TABLE1_LAMBDAS)
    if any(not lam > 0 for lam in lambdas):
        raise UsageError("lambda values must be positive")
    if args.order < 1:
        raise UsageError("--order must be at least 1")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["lambda", "omega", "gain_db", "phase_deg"])
    summary = io.StringIO()
    sw = csv.writer(summary, lineterminator="\n")
    sw.writerow(["lambda", f"gain_db@{args.probe:g}", f"phase_deg@{args.probe:g}", "cutoff_rad_s"])
    for lam in lambdas:
        for p in bode(design_q(lam, args.order).tf, omega):
            w.writerow([repr(lam), repr(float(p.omega)), repr(float(p.gain_db)), repr(float(p.phase_deg))])
        g, ph, wc = q_summary(lam, args.order, args.probe)
        sw.writerow([repr(lam), repr(g), repr(ph), repr(wc)])
    _write(out / "bode.csv", buf.getvalue())
    _write(out / "q_summary.csv", summary.getvalue())
    _manifest(out, "bode", None, {"lambdas": lambdas, "order": args.order, "probe": args.probe,
                                  "omega": omega.tolist()})
    print(summary.getvalue(), end="")
    return EXIT_OK


# --- sysid ------------------------------------------------------------------


def cmd_sysid(args) -> int:
    out = _outdir(args)
    data = IdDataset.from_csv(args.dataset)
    try:
        result = fit_second_order(data, filter_bandwidth=args.filter_bandwidth, input_hold=not args.foh_input)
    except IdentificationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    profile = {"loop": "generic", **result.to_profile()}
    lines = [
        _model_line(result.model),
        f"fit_percent: {result.fit_percent:.4f}",
        f"reliable: {str(result.reliable).lower()}",
        f"open_loop_stable: {str(result.stable).lower()}",
        "poles: " + ", ".join(_fmt_complex(p) for p in result.poles),
        f"filter_bandwidth: {result.filter_bandwidth:.6g}",
        f"critical_ki: {critical_integral_gain(result):.6g}",
    ]
    if args.ki is not None:
        ok, cl = verify_stability(result, args.ki)
        lines.append(f"closed_loop_ki: {args.ki:g}")
        lines.append(f"routh_hurwitz_stable: {str(ok).lower()}")
        lines.append("closed_loop_poles: " + ", ".join(_fmt_complex(p) for p in cl))
        profile["controller"] = {"kp": 0.0, "ki": args.ki, "kd": 0.0}
    text = "\n".join(lines) + "\n"
    _write(out / "profile.yaml", yaml.safe_dump(profile, sort_keys=True))
    _write(out / "sysid_report.txt", text)
    _manifest(out, "sysid", None, {"dataset": str(args.dataset), "ki": args.ki,
                                   "filter_bandwidth": result.filter_bandwidth})
    print(text, end="")
    if not result.reliable:
        log.warning("fit %.2f%% is below the reliability threshold", result.fit_percent)
    return EXIT_OK


def _model_line(tf: TransferFunction) -> str:
    def poly(coeffs):
        return " + ".join(f"{c:.6g}*s^{i}" if i else f"{c:.6g}" for i, c in enumerate(coeffs))

    num, den = map(poly, tf.time_constant_form())
    return f"model: ({num}) / ({den})"


def _fmt_complex(z) -> str:
    z = complex(z)
    if abs(z.imag) < 1e-12 * max(1.0, abs(z.real)):
        return f"{z.real:.6g}"
    return f"{z.real:.6g}{z.imag:+.6g}j"


# --- report -----------------------------------------------------------------

REPORT_CASES = ("lfc-b", "lfc-c", "lfc-d", "avr-a", "avr-b")


def cmd_report(args) -> int:
    from . import plotting

    out = _outdir(args)
    cases = args.cases or list(REPORT_CASES)
    done = []
    for case in cases:
        cfg = load_config(args.config, profile=args.profile, case=case, seed=args.seed, dt=args.dt,
                          horizon=args.horizon)
        base_label = "integral" if cfg.loop == "lfc" else "pid"
        runs = {}
        for label, dobc in ((base_label, False), ("dobc", True)):
            try:
                runs[label] = _run(cfg, dobc=dobc, workers=args.workers)
            except SimulationDiverged as exc:
                log.warning("%s %s diverged: %s", case, label, exc)
        if not runs:
            print(f"error: every run of {case} diverged", file=sys.stderr)
            return EXIT_RUNTIME
        text, table = render_report({k: v[1] for k, v in runs.items()}, title=case)
        _write(out / f"{case}_report.csv", table)
        _write(out / f"{case}_report.txt", text)
        traces = {k: v[0] for k, v in runs.items()}
        for label, tr in traces.items():
            _write(out / f"{case}_{label}_trace.csv", tr.to_csv())
        if cfg.loop == "lfc":
            plotting.plot_comparison(traces, "df", out / f"{case}_df.png", "df [Hz]", case)
            if "dobc" in traces:
                plotting.plot_estimate(traces["dobc"], "d_l", out / f"{case}_dhat.png", case)
        else:
            plotting.plot_comparison(traces, "v_t", out / f"{case}_vt.png", "v_t [pu]", case)
        print(text)
        done.append(case)
    lambdas = list(TABLE1_LAMBDAS)
    plotting.plot_q_bode(lambdas, 4, out / "q_bode.png")
    summary = io.StringIO()
    sw = csv.writer(summary, lineterminator="\n")
    sw.writerow(["lambda", "gain_db@0.1", "phase_deg@0.1", "cutoff_rad_s"])
    for lam in lambdas:
        sw.writerow([repr(lam), *(repr(v) for v in q_summary(lam, 4, 0.1))])
    _write(out / "q_summary.csv", summary.getvalue())
    hw = load_config(None, profile="paper-hardware-b")
    plant = hw.plant_model().nominal()
    ki = float(hw.controller.get("ki", 0.01))
    integ = TransferFunction([ki], [0.0, 1.0])
    closed = compose_feedback(integ * plant, TransferFunction.gain(1.0))
    plotting.plot_pole_map({"plant": plant, f"closed loop, ki={ki:g}": closed}, out / "pole_map.png")
    _write(out / "hardware_stability.txt",
           f"ki: {ki:g}\nrouth_hurwitz_stable: {str(routh_hurwitz_stable(closed.den)).lower()}\n"
           "closed_loop_poles: " + ", ".join(_fmt_complex(p) for p in poles(closed)) + "\n")
    _manifest(out, "report", None, {"cases": done, "seed": args.seed, "profile": args.profile,
                                    "config_file": args.config})
    return EXIT_OK


# --- parser -----------------------------------------------------------------


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML run configuration (a manifest.json also works)")
    common.add_argument("--profile", help="named parameter profile (default paper-appendix-a)")
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--dt", type=float, default=None, help="integration step [s]")
    common.add_argument("--horizon", type=float, default=None, help="simulated time [s]")
    common.add_argument("--workers", type=int, default=1)
    common.add_argument("--out", default="out", help="output directory")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="microgrid-dobc", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", parents=[common], help="run one experiment")
    s.add_argument("--case", help="scripted case id (lfc-a..d, avr-a..b)")
    s.add_argument("--baseline", action="store_true", help="disable the disturbance observer")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("sweep", parents=[common], help="worst-case scan over the budget grid")
    s.add_argument("--grid", help="CSV grid file (default: the built-in 16 scenarios)")
    s.add_argument("--pv-forecast", type=float, default=1.0 / 6.0)
    s.add_argument("--load-forecast", type=float, default=1.0 / 3.0)
    s.add_argument("--baseline", action="store_true")
    s.set_defaults(func=cmd_sweep, case=None)

    s = sub.add_parser("bode", parents=[common], help="Q-filter or plant frequency response")
    s.add_argument("--lambdas", type=_floats, help="comma-separated lambda values")
    s.add_argument("--order", type=int, default=4)
    s.add_argument("--probe", type=float, default=0.1, help="summary frequency [rad/s]")
    s.add_argument("--omega", type=float, help="evaluate a single frequency")
    s.add_argument("--omega-min", type=float, default=1e-2)
    s.add_argument("--omega-max", type=float, default=1e4)
    s.add_argument("--points", type=int, default=200)
    s.add_argument("--plant", action="store_true", help="use the configured nominal plant instead of Q")
    s.set_defaults(func=cmd_bode, case=None)

    s = sub.add_parser("sysid", parents=[common], help="fit a second-order model to logged data")
    s.add_argument("dataset", help="CSV with columns time,u,y")
    s.add_argument("--ki", type=float, help="check an integral gain with Routh-Hurwitz")
    s.add_argument("--filter-bandwidth", type=float)
    s.add_argument("--foh-input", action="store_true", help="treat u as piecewise linear")
    s.set_defaults(func=cmd_sysid, case=None)

    s = sub.add_parser("report", parents=[common], help="tables and figures for the scripted cases")
    s.add_argument("--case", dest="cases", action="append", help="repeatable; default lfc-b..d, avr-a..b")
    s.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    if args.workers < 1:
        print("error: --workers must be at least 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except (ConfigError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DatasetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SimulationDiverged, IdentificationError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
