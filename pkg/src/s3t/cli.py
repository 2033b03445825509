"""Command-line interface.

Subcommands: ``calibrate`` (threshold from an analytic target), ``detect``
(offline scan of a CSV sample), ``monitor`` (online scan of a CSV stream),
``simulate`` (Monte Carlo experiments) and ``river-cov`` (tail-up covariance
of a stream network). Exit codes: 0 success or alarm, 2 input error,
3 end of stream without alarm, 4 numeric saturation.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .calibration import arl as analytic_arl
from .calibration import find_threshold, significance_level
from .config import RunConfig, build_model_spec, detection_targets, load_config
from .detectors import BaselineParams, Monitor, offline_detect
from .errors import ConfigError, SaturationError
from .simulate import (
    BaselineParams as _BP,  # noqa: F401  (re-exported name kept local)
    SignalParams,
    calibrate_threshold_sim,
    estimate_arl,
    estimate_edd,
    estimate_sl,
)
from .stream_network import TailUpParams, read_network, tailup_covariance
from .temporal import TemporalModel

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NO_ALARM = 3
EXIT_SATURATION = 4


def _json_dump(payload: dict, output: str | None) -> None:
    text = json.dumps(payload, indent=2)
    if output:
        Path(output).write_text(text + "\n")
    else:
        print(text)


def _stamp(cfg: RunConfig, extra: dict) -> dict:
    out = dict(extra)
    out["version"] = __version__
    out["config"] = cfg.echo()
    return out


def _maybe_plot(args, default_from_output=False):
    if getattr(args, "no_plot", False):
        return None
    if getattr(args, "plot", None):
        return args.plot
    if default_from_output and getattr(args, "output", None):
        return str(Path(args.output).with_suffix(".png"))
    return None


def _apply_overrides(cfg: RunConfig, args) -> None:
    pairs = [
        ("seed", "experiment", "seed"),
        ("b", "detection", "b"),
        ("alpha", "detection", "alpha"),
        ("arl", "detection", "arl"),
        ("n", "detection", "n"),
        ("omega", "detection", "omega"),
        ("method", "detection", "method"),
        ("p", "model", "p"),
        ("kind", "experiment", "kind"),
        ("reps", "experiment", "reps"),
        ("gamma", "experiment", "gamma"),
        ("mu", "experiment", "mu"),
        ("input", "io", "input"),
        ("output", "io", "output"),
        ("format", "io", "format"),
    ]
    for flag, section, key in pairs:
        val = getattr(args, flag, None)
        if val is not None:
            cfg.set(section, key, val)


def _write_matrix_csv(path_or_stdout, matrix: np.ndarray, header: list[str]) -> None:
    rows = [header] + [[repr(float(v)) for v in row] for row in matrix]
    if path_or_stdout:
        with open(path_or_stdout, "w", newline="") as fh:
            csv.writer(fh).writerows(rows)
    else:
        csv.writer(sys.stdout).writerows(rows)


def cmd_calibrate(args) -> int:
    cfg = load_config(args.config)
    _apply_overrides(cfg, args)
    spec = build_model_spec(cfg)
    targets = detection_targets(cfg)
    if "b" in targets:
        raise ConfigError("calibrate needs a target: set detection.alpha or detection.arl")
    if "alpha" in targets:
        n = int(cfg.require("detection", "n"))
        b = find_threshold(spec, alpha=float(targets["alpha"]), N=n)
        result = significance_level(b, n, spec)
    else:
        omega = int(cfg.require("detection", "omega"))
        b = find_threshold(spec, arl_target=float(targets["arl"]), omega=omega)
        result = analytic_arl(b, omega, spec)
    payload = _stamp(
        cfg,
        {
            "b": b,
            "achieved": result.achieved,
            "per_tau_contributions": result.per_tau_contributions,
        },
    )
    _json_dump(payload, cfg.get("io", "output"))
    plot = _maybe_plot(args, default_from_output=True)
    if plot and len(result.per_tau_contributions) > 1:
        from .plots import save_per_tau_contributions

        save_per_tau_contributions(plot, result.per_tau_contributions, b, result.achieved)
    return EXIT_OK


def _load_series(path: str | None, p: int) -> np.ndarray:
    fh = open(path) if path else sys.stdin
    try:
        rows = []
        for ln, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            try:
                vals = [float(v) for v in parts]
            except ValueError:
                if ln == 1:  # header row
                    continue
                raise ConfigError(f"non-numeric data at line {ln}")
            if len(vals) != p:
                raise ConfigError(f"row {ln} has {len(vals)} columns, expected {p}")
            rows.append(vals)
    finally:
        if path:
            fh.close()
    if not rows:
        raise ConfigError("input contains no data rows")
    return np.asarray(rows)


def cmd_detect(args) -> int:
    cfg = load_config(args.config)
    _apply_overrides(cfg, args)
    spec = build_model_spec(cfg)
    targets = detection_targets(cfg)
    if "alpha" in targets:
        n_cal = int(cfg.require("detection", "n"))
        b = find_threshold(spec, alpha=float(targets["alpha"]), N=n_cal)
    elif "arl" in targets:
        raise ConfigError("offline detection calibrates via detection.alpha, not detection.arl")
    else:
        b = float(targets["b"])
    series = _load_series(cfg.get("io", "input"), spec.p)
    decision = offline_detect(series, spec, b, keep_grid=True)
    payload = _stamp(
        cfg,
        {
            "detected": decision.detected,
            "max_stat": decision.max_stat,
            "tau_hat": decision.tau_hat,
            "theta_hat": decision.theta_hat,
            "b": b,
            "change_index": decision.change_index,
            "n_samples": int(series.shape[0]),
        },
    )
    _json_dump(payload, cfg.get("io", "output"))
    plot = _maybe_plot(args, default_from_output=True)
    if plot:
        from .plots import save_detection_heatmap

        save_detection_heatmap(
            plot, decision.per_cell_stats, spec.theta_grid, b,
            decision.tau_hat, decision.theta_hat,
        )
    return EXIT_OK


def cmd_monitor(args) -> int:
    cfg = load_config(args.config)
    _apply_overrides(cfg, args)
    spec = build_model_spec(cfg)
    omega = int(cfg.require("detection", "omega"))
    targets = detection_targets(cfg)
    if "arl" in targets:
        b = find_threshold(spec, arl_target=float(targets["arl"]), omega=omega)
    elif "alpha" in targets:
        raise ConfigError("online monitoring calibrates via detection.arl, not detection.alpha")
    else:
        b = float(targets["b"])
    method = str(cfg.get("detection", "method"))
    baseline = BaselineParams(mcusum_k=float(cfg.get("detection", "mcusum_k")))
    monitor = Monitor(spec, omega, b, method=method, baseline=baseline)
    out_path = cfg.get("io", "output")
    out = open(out_path, "w") if out_path else sys.stdout

    in_path = cfg.get("io", "input")
    fh = open(in_path) if in_path else sys.stdin
    records = []
    alarm_record = None
    try:
        for ln, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            try:
                vals = [float(v) for v in parts]
            except ValueError:
                if ln == 1:
                    continue
                raise ConfigError(f"non-numeric data at line {ln}")
            if len(vals) != spec.p + 1:
                raise ConfigError(
                    f"stream row {ln} has {len(vals)} columns, expected t plus {spec.p} values"
                )
            record = monitor.step(np.asarray(vals[1:]))
            if record is not None:
                record["b"] = b
                records.append(record)
                out.write(json.dumps(record) + "\n")
                if monitor.alarmed:
                    alarm_record = {
                        "alarm": True, "t": monitor.alarm_time,
                        "stat": record["stat"], "theta": record["theta"],
                        "method": method, "b": b, "version": __version__,
                    }
                    out.write(json.dumps(alarm_record) + "\n")
                    break
    finally:
        if in_path:
            fh.close()
        if out_path:
            out.close()

    plot = _maybe_plot(args)
    if plot and records:
        from .plots import save_monitor_trace

        save_monitor_trace(
            plot,
            [r["t"] for r in records],
            [r["stat"] for r in records],
            b,
            monitor.alarm_time,
        )
    if alarm_record is not None:
        return EXIT_OK
    if monitor.t < omega:
        print(
            f"warning: stream ended during warm-up ({monitor.t} < omega = {omega}); "
            "no statistic was evaluated",
            file=sys.stderr,
        )
    return EXIT_NO_ALARM


def _simulate_arl_sweep(cfg: RunConfig, spec, args) -> dict:
    omega = int(cfg.require("detection", "omega"))
    b_min = float(cfg.require("experiment", "b_min"))
    b_max = float(cfg.require("experiment", "b_max"))
    b_step = float(cfg.require("experiment", "b_step"))
    reps = int(cfg.get("experiment", "reps"))
    seed = int(cfg.get("experiment", "seed"))
    threads = int(args.threads or 1)
    bs = np.arange(b_min, b_max + 1e-12, b_step)
    rows = []
    for b in bs:
        ana = analytic_arl(float(b), omega, spec).achieved
        horizon = int(cfg.get("experiment", "max_horizon") or max(4 * int(ana), 10 * omega))
        rep = estimate_arl(float(b), omega, spec, reps, horizon, seed, threads=threads)
        rows.append(
            {
                "b": float(b), "analytic_arl": ana, "simulated_arl": rep.estimate,
                "std_error": rep.std_error, "n_censored": rep.n_censored,
            }
        )
    out_csv = cfg.get("io", "output")
    if out_csv and str(cfg.get("io", "format")) == "csv":
        with open(out_csv, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
            writer.writeheader()
            writer.writerows(rows)
    plot = _maybe_plot(args, default_from_output=True)
    if plot:
        from .plots import save_arl_curve

        save_arl_curve(
            plot, [r["b"] for r in rows],
            [r["analytic_arl"] for r in rows],
            [r["simulated_arl"] for r in rows],
            [r["std_error"] for r in rows],
        )
    return {"kind": "arl-sweep", "rows": rows}


def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    _apply_overrides(cfg, args)
    spec = build_model_spec(cfg)
    kind = str(cfg.get("experiment", "kind"))
    reps = int(cfg.get("experiment", "reps"))
    seed = int(cfg.get("experiment", "seed"))
    threads = int(args.threads or 1)

    if kind == "arl-sweep":
        payload = _stamp(cfg, _simulate_arl_sweep(cfg, spec, args))
        if str(cfg.get("io", "format")) != "csv":
            _json_dump(payload, cfg.get("io", "output"))
        return EXIT_OK

    if kind == "sl":
        b = float(cfg.require("detection", "b"))
        n = int(cfg.require("detection", "n"))
        report = estimate_sl(b, n, spec, reps, seed, threads=threads)
    elif kind == "arl":
        b = float(cfg.require("detection", "b"))
        omega = int(cfg.require("detection", "omega"))
        horizon = int(cfg.get("experiment", "max_horizon") or 20 * omega)
        report = estimate_arl(
            b, omega, spec, reps, horizon, seed,
            method=str(cfg.get("detection", "method")),
            baseline=BaselineParams(mcusum_k=float(cfg.get("detection", "mcusum_k"))),
            threads=threads,
        )
    elif kind == "edd":
        omega = int(cfg.require("detection", "omega"))
        method = str(cfg.get("detection", "method"))
        baseline = BaselineParams(mcusum_k=float(cfg.get("detection", "mcusum_k")))
        if cfg.has("detection", "b"):
            b = float(cfg.get("detection", "b"))
        else:
            arl_target = float(cfg.require("detection", "arl"))
            b, _ = calibrate_threshold_sim(
                method, arl_target, omega, spec, min(reps, 2000), seed,
                baseline=baseline, threads=threads,
            )
        signal = SignalParams(
            gamma=float(cfg.get("experiment", "gamma")),
            mu=float(cfg.get("experiment", "mu")),
            temporal=TemporalModel(
                spec.temporal.kind,
                theta=float(cfg.get("experiment", "theta_true")),
                eta=spec.temporal.eta,
            ),
            lam=spec.lam,
        )
        horizon = int(cfg.get("experiment", "max_horizon") or 2000)
        report = estimate_edd(
            method, b, omega, spec, signal, reps, seed,
            max_horizon=horizon, baseline=baseline, threads=threads,
        )
        report.config["b"] = b
    else:
        raise ConfigError(f"experiment.kind must be sl, arl, edd or arl-sweep, got {kind!r}")

    if args.per_rep_csv and report.per_rep is not None:
        with open(args.per_rep_csv, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["rep", "value"])
            writer.writerows(enumerate(report.per_rep.tolist()))
    for w in report.warnings:
        print(f"warning: {w}", file=sys.stderr)
    payload = _stamp(cfg, report.to_dict())
    _json_dump(payload, cfg.get("io", "output"))
    plot = _maybe_plot(args, default_from_output=True)
    if plot and report.per_rep is not None and kind in ("arl", "edd"):
        from .plots import save_delay_histogram

        save_delay_histogram(plot, report.per_rep, title=f"{kind}: mean {report.estimate:.2f}")
    return EXIT_OK


def cmd_river_cov(args) -> int:
    cfg = load_config(args.config)
    _apply_overrides(cfg, args)
    for flag, key in (("segments", "segments"), ("locations", "locations"),
                      ("zeta1", "zeta1"), ("zeta2", "zeta2"), ("nugget", "nugget")):
        val = getattr(args, flag, None)
        if val is not None:
            cfg.set("model", key, val)
    net = read_network(cfg.require("model", "segments"), cfg.require("model", "locations"))
    params = TailUpParams(
        zeta1=float(cfg.require("model", "zeta1")),
        zeta2=float(cfg.require("model", "zeta2")),
        nugget=float(cfg.get("model", "nugget")),
    )
    cov = tailup_covariance(net, params)
    header = [f"loc{loc.id}" for loc in net.locations]
    _write_matrix_csv(cfg.get("io", "output"), cov, header)
    plot = _maybe_plot(args, default_from_output=True)
    if plot:
        from .plots import save_covariance_matrix

        save_covariance_matrix(plot, cov)
    return EXIT_OK


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="s3t",
        description="Spatio-temporal score surveillance: detection, monitoring "
        "and analytic threshold calibration.",
    )
    parser.add_argument("--version", action="version", version=f"s3t {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser):
        p.add_argument("--config", help="INI config file; flags override its values")
        p.add_argument("--seed", type=int, help="experiment seed")
        p.add_argument("--threads", type=int, default=1, help="worker thread cap")
        p.add_argument("--output", help="output path (default stdout)")
        p.add_argument("--format", choices=["json", "csv"], help="output format")
        p.add_argument("--plot", help="write a PNG figure to this path")
        p.add_argument("--no-plot", action="store_true", help="suppress figures")

    cal = sub.add_parser("calibrate", help="invert the analytic false-alarm target")
    common(cal)
    cal.add_argument("--alpha", type=float, help="offline significance-level target")
    cal.add_argument("--arl", type=float, help="online average-run-length target")
    cal.add_argument("--n", type=int, help="offline sample size N")
    cal.add_argument("--omega", type=int, help="online window length")
    cal.add_argument("--p", type=int, help="observation dimension")
    cal.set_defaults(handler=cmd_calibrate)

    det = sub.add_parser("detect", help="offline detection on a CSV sample")
    common(det)
    det.add_argument("--input", help="CSV with one p-column row per sample")
    det.add_argument("--b", type=float, help="detection threshold")
    det.add_argument("--alpha", type=float, help="significance target (calibrates b)")
    det.add_argument("--n", type=int, help="horizon used when calibrating from alpha")
    det.add_argument("--p", type=int)
    det.set_defaults(handler=cmd_detect)

    mon = sub.add_parser("monitor", help="online monitoring of a CSV stream")
    common(mon)
    mon.add_argument("--input", help="CSV stream t,v1..vp (default stdin)")
    mon.add_argument("--b", type=float)
    mon.add_argument("--arl", type=float, help="ARL target (calibrates b)")
    mon.add_argument("--omega", type=int, help="window length")
    mon.add_argument("--method", choices=["s3t", "quadratic-score", "mcusum", "hotelling-t2"])
    mon.add_argument("--p", type=int)
    mon.set_defaults(handler=cmd_monitor)

    sim = sub.add_parser("simulate", help="Monte Carlo experiments")
    common(sim)
    sim.add_argument("--kind", choices=["sl", "arl", "edd", "arl-sweep"])
    sim.add_argument("--reps", type=int)
    sim.add_argument("--b", type=float)
    sim.add_argument("--alpha", type=float)
    sim.add_argument("--arl", type=float)
    sim.add_argument("--n", type=int)
    sim.add_argument("--omega", type=int)
    sim.add_argument("--method", choices=["s3t", "quadratic-score", "mcusum", "hotelling-t2"])
    sim.add_argument("--gamma", type=float)
    sim.add_argument("--mu", type=float)
    sim.add_argument("--p", type=int)
    sim.add_argument("--per-rep-csv", help="write per-replication values to this CSV")
    sim.set_defaults(handler=cmd_simulate)

    riv = sub.add_parser("river-cov", help="tail-up covariance of a stream network")
    common(riv)
    riv.add_argument("--segments", help="segments.csv")
    riv.add_argument("--locations", help="locations.csv")
    riv.add_argument("--zeta1", type=float)
    riv.add_argument("--zeta2", type=float)
    riv.add_argument("--nugget", type=float)
    riv.set_defaults(handler=cmd_river_cov)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except SaturationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SATURATION
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
