"""Command line entry point: ``gflsim <command> [--config PATH] [--output DIR]``.

Exit codes: 0 success, 1 usage or configuration error, 2 infeasible design,
failed validation or DC-link collapse.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import acceptance, analysis, design, load, sim
from .config import ConfigError, RunConfig, bundled_config, load_config
from .params import ParameterBundle, ParameterError, derive_timescales, validate_params
from .plant import SingularStateError

EXIT_OK, EXIT_USAGE, EXIT_FAIL = 0, 1, 2

TRACE_COLUMNS = ("t_s,id_A,iq_A,Vdc_V,Pm_W,id_star_A,md,mq,m_norm,saturated,"
                 "Pinv_W,Pnet_W,PL_W")
FEAS_COLUMNS = "rho_P_MW_s,kd_SP,kd_ramp,kd_volt,kd_bw"


class UsageError(Exception):
    pass


def _load(path: str | None, seed: int | None) -> RunConfig:
    cfg = bundled_config("baseline") if path is None else load_config(path)
    if seed is not None:
        cfg.seed = seed
    validate_params(cfg.system, cfg.gains, cfg.constraints)
    return cfg


def _outdir(args, cfg: RunConfig) -> Path:
    out = Path(args.output if args.output is not None else cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _finite(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _finite(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_finite(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return _finite(obj.item())
    return obj


def _write_json(path: Path, data) -> None:
    path.write_text(json.dumps(_finite(data), indent=2, sort_keys=True) + "\n")


def _write_csv(path: Path, header: str, columns) -> None:
    data = np.column_stack([np.asarray(c, dtype=float) for c in columns])
    np.savetxt(path, data, delimiter=",", header=header, comments="", fmt="%.10g")


# commands -----------------------------------------------------------------

def cmd_design(cfg: RunConfig, out: Path, args) -> int:
    kw = {}
    if cfg.explicit_gains:
        kw = {"k_d": cfg.gains.k_d, "K_pp": cfg.gains.K_pp, "k_q": cfg.gains.k_q}
    try:
        res = design.sequential_design(cfg.system, cfg.constraints, cfg.kd_fraction,
                                       cfg.Kpp_fraction, cfg.gains.P_star, **kw)
    except design.InfeasibleHardware as exc:
        _write_json(out / "design.json", {"feasible": False, "step": 1,
                                          "binding": "H_min <= 0", "message": str(exc)})
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except design.InfeasibleDesign as exc:
        report = {"feasible": False, "step": exc.step, "binding": exc.binding,
                  "message": str(exc),
                  "bounds": asdict(exc.bounds) if exc.bounds is not None else None}
        _write_json(out / "design.json", report)
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_FAIL
    _write_json(out / "design.json", {"feasible": True, **asdict(res)})
    g, ts = res.gains, res.timescales
    print(f"k_d = {g.k_d:.4g} Ohm, K_pp = {g.K_pp * 1e3:.4g} mA/W, mu = {ts.mu * 1e3:.4g} ms, "
          f"tau_eff = {ts.tau_eff * 1e3:.4g} ms, ratio = {ts.ratio:.4g}")
    return EXIT_OK


def _write_trace(path: Path, tr: sim.SimTrace) -> None:
    _write_csv(path, TRACE_COLUMNS,
               (tr.t, tr.i_d, tr.i_q, tr.V_dc, tr.P_m, tr.i_d_star, tr.m_d, tr.m_q,
                tr.m_norm, tr.saturated, tr.P_inv, tr.P_net, tr.P_L))


def _metrics(cfg: RunConfig, sc: sim.Scenario, tr: sim.SimTrace) -> dict:
    cert = load.certify_bounds(sc.load) if isinstance(sc.load, load.LoadModel) else None
    reduced = None
    ts = derive_timescales(sc.params, sc.gains, sc.constraints)
    if sc.dt <= ts.tau_eff / 20:
        reduced = sim.simulate_reduced(sc)
    window = None
    if sc.setpoint_step is not None:
        t_step = sc.setpoint_step[0]
        window = (t_step + sim.transient_window(ts.mu, sc.transient_multiplier),
                  t_step + 5 * ts.tau_eff)
    try:
        rep = analysis.metrics_report(tr, cert, reduced, window)
    except analysis.FitQualityError:
        rep = analysis.metrics_report(tr, cert, reduced, None)
    return json.loads(analysis.report_to_json(rep))


def cmd_simulate(cfg: RunConfig, out: Path, args) -> int:
    sc = cfg.scenario()
    try:
        tr = sim.simulate_full(sc)
    except SingularStateError as exc:
        if getattr(exc, "trace", None) is not None:
            _write_trace(out / "trace.csv", exc.trace)
        _write_json(out / "metrics.json", {"error": str(exc)})
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    _write_trace(out / "trace.csv", tr)
    metrics = _metrics(cfg, sc, tr)
    _write_json(out / "metrics.json", metrics)
    print(f"{len(tr)} samples, mean P_inv = {metrics['mean_P_inv']:.1f} W, "
          f"mean P_net = {metrics['mean_P_net']:.1f} W, saturated samples = "
          f"{int(np.sum(tr.saturated))}")
    return EXIT_OK


def _curve(cfg: RunConfig) -> design.FeasibilityCurve:
    grid = np.linspace(cfg.rho_min, cfg.rho_max, cfg.points)
    return design.feasibility_sweep(cfg.system, cfg.constraints, grid, cfg.gains.K_pp)


def _curve_summary(cfg: RunConfig, c: design.FeasibilityCurve) -> dict:
    return {"source": cfg.source, "K_pp": cfg.gains.K_pp, "kd_SP": float(c.kd_SP_curve[0]),
            "kd_volt": float(c.kd_volt_line[0]), "kd_bw": float(c.kd_bw_line[0]),
            "H_min": design.modulation_margin(cfg.system),
            "rho_P_crit": c.rho_P_crit, "rho_P_close": c.rho_P_close}


def _write_curve(path: Path, c: design.FeasibilityCurve) -> None:
    _write_csv(path, FEAS_COLUMNS, (c.rho_P_grid / 1e6, c.kd_SP_curve, c.kd_ramp_curve,
                                    c.kd_volt_line, c.kd_bw_line))


def cmd_feasibility(cfg: RunConfig, out: Path, args) -> int:
    if design.modulation_margin(cfg.system) <= 0:
        _write_json(out / "feasibility.json", {"feasible": False, "binding": "H_min <= 0"})
        print("infeasible: no modulation headroom", file=sys.stderr)
        return EXIT_FAIL
    curve = _curve(cfg)
    _write_curve(out / "feasibility.csv", curve)
    summary = {"primary": _curve_summary(cfg, curve)}
    if args.overlay is not None:
        other = _load(args.overlay, None)
        # the overlay is drawn on the primary grid so the curves share an axis
        other.rho_min, other.rho_max, other.points = cfg.rho_min, cfg.rho_max, cfg.points
        oc = _curve(other)
        _write_curve(out / "feasibility_overlay.csv", oc)
        summary["overlay"] = _curve_summary(other, oc)
    _write_json(out / "feasibility.json", summary)
    p = summary["primary"]
    print(f"rho_P_crit = {p['rho_P_crit'] / 1e6:.3f} MW/s, "
          f"closure = {p['rho_P_close'] / 1e6:.3f} MW/s")
    return EXIT_OK


def cmd_loadgen(cfg: RunConfig, out: Path, args) -> int:
    model = cfg.load_model()
    tr = load.generate_load_trace(model, cfg.horizon, cfg.dt)
    _write_csv(out / "load.csv", "t_s,P_L_W,P_AI_W", (tr.times, tr.P_L, tr.P_AI))
    _write_csv(out / "arrivals.csv", "t_s,b_W", (tr.arrival_times, tr.batch_sizes))
    cert = load.certify_bounds(model)
    print(f"{len(tr.arrival_times)} arrivals, mean P_L = {np.mean(tr.P_L):.1f} W, "
          f"Delta_P = {cert.Delta_P:.1f} W, rho_P = {cert.rho_P:.4g} W/s")
    return EXIT_OK


def cmd_validate(cfg: RunConfig, out: Path, args) -> int:
    base = ParameterBundle(cfg.system, cfg.gains, cfg.constraints)
    hv_cfg = bundled_config("high_voltage")
    hv = ParameterBundle(hv_cfg.system, hv_cfg.gains, hv_cfg.constraints)
    results = acceptance.run_all(base, hv, cfg.load_model(), cfg.tolerance_scale,
                                 jobs=args.jobs, echo=print)
    report = acceptance.results_to_dict(results)
    _write_json(out / "validation.json", report)
    return EXIT_OK if report["all_passed"] else EXIT_FAIL


COMMANDS = {"design": cmd_design, "simulate": cmd_simulate, "feasibility": cmd_feasibility,
            "loadgen": cmd_loadgen, "validate": cmd_validate}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gflsim", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {"design": "run the sequential gain design and write design.json",
             "simulate": "simulate the closed loop, write trace.csv and metrics.json",
             "feasibility": "sweep the gain bounds over rho_P, write feasibility.csv",
             "loadgen": "generate a load trace, write load.csv and arrivals.csv",
             "validate": "run the acceptance suite, write validation.json"}
    for name, text in helps.items():
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", help="JSON config (default: bundled baseline)")
        p.add_argument("--output", help="output directory (default: config output_dir)")
        p.add_argument("--seed", type=int, help="load seed, overrides the config")
        p.add_argument("--jobs", type=int, default=1, help="worker threads for seed sweeps")
        if name == "feasibility":
            p.add_argument("--overlay", help="second config swept on the same grid")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    try:
        if args.seed is not None and args.seed < 0:
            raise UsageError("--seed must be non-negative")
        if args.jobs < 1:
            raise UsageError("--jobs must be at least 1")
        cfg = _load(args.config, args.seed)
        out = _outdir(args, cfg)
        return COMMANDS[args.command](cfg, out, args)
    except (ConfigError, ParameterError, UsageError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
