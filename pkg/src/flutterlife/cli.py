"""Command-line pipeline: ``flutterlife <stage> --config cfg.json --out runs/``.

Each stage writes only to ``<out>/run-<config hash>/<stage>/`` and reads the
artifacts of earlier stages from sibling directories.  Exit status: 0 success,
1 usage/config error, 2 data error, 3 numerical failure; failures print one
``error:`` line on stderr.
"""

import argparse
import csv
import glob
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from datetime import datetime
from pathlib import Path
from types import SimpleNamespace

import numpy as np

from . import plotting
from .bayes_id import FrequencyBand, identify_mode
from .config import config_hash, load_config
from .derivatives import (TheodorsenDerivatives, fit_derivatives, read_derivative_csv)
from .errors import (ConfigError, DataError, DomainError, FlutterLifeError, IdentificationSkipped,
                     NoFlutterInRange, NumericalFailure)
from .flutter import BridgeModel, branch_table, det_residual, modal_integrals, solve_flutter
from .ingest import (filter_segments, load_acceleration_csv, load_wind_csv, scaled_fft,
                     split_hourly, write_acceleration_csv, write_wind_csv)
from .lifecycle import fit_gumbel_return_periods, lifecycle_curve
from .surrogate import VARIABLES, SurrogateModel, doe_grid, evaluate_doe, fit_surrogate, predict
from .synth import CampaignMode, simulate_campaign
from .trend import (DeteriorationModel, FluctuationModel, correlation_check, detrended,
                    fit_deterioration, monthly_average)

log = logging.getLogger("flutterlife")

STAGES = ("simulate", "identify", "trend", "flutter", "surrogate", "lifecycle", "report")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def read_json(path):
    with open(path) as fh:
        return json.load(fh)


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


class Run:
    """Stage directories of one content-addressed run."""

    def __init__(self, cfg, out):
        self.cfg = cfg
        self.root = Path(out) / f"run-{config_hash(cfg)}"

    def stage_dir(self, stage):
        d = self.root / stage
        d.mkdir(parents=True, exist_ok=True)
        return d

    def artifact(self, stage, name):
        p = self.root / stage / name
        if not p.exists():
            raise ConfigError(f"missing artifact {stage}/{name}; run the '{stage}' stage first")
        return p


# --- stages ---------------------------------------------------------------------


def stage_simulate(run, threads):
    cfg = run.cfg.simulate
    if not cfg.modes:
        raise ConfigError("simulate.modes is empty")
    modes = [CampaignMode(m.a, m.b, m.zeta, np.asarray(m.phi, float), m.S, m.f_fluctuation,
                          m.zeta_cov, m.role) for m in cfg.modes]
    start = datetime.fromisoformat(cfg.start)
    camp = simulate_campaign(modes, cfg.sigma2, cfg.months, cfg.segments_per_month, cfg.fs,
                             run.cfg.seed, start=start)
    out = run.stage_dir("simulate")
    seg_dir = out / "segments"
    seg_dir.mkdir(exist_ok=True)

    def write(seg):
        name = seg.start_time.strftime("seg-%Y%m%dT%H%M.csv.gz")
        write_acceleration_csv(seg_dir / name, seg, fmt="%.12g")

    with ThreadPoolExecutor(max(1, threads)) as pool:
        list(pool.map(write, camp.segments))
    write_wind_csv(out / "wind.csv", camp.winds)
    write_csv(out / "truth.csv", ["month", "mode", "f", "zeta"], camp.truth)
    write_json(out / "manifest.json", {"segments": len(camp.segments), "months": cfg.months,
                                       "fs_hz": cfg.fs, "modes": len(modes)})
    return f"{len(camp.segments)} segments"


def _load_segments(run):
    paths = run.cfg.paths
    if paths.acceleration_dir:
        if not paths.wind_file:
            raise ConfigError("paths.wind_file is required with paths.acceleration_dir")
        files = sorted(glob.glob(str(Path(paths.acceleration_dir) / "*.csv"))
                       + glob.glob(str(Path(paths.acceleration_dir) / "*.csv.gz")))
        wind_file = paths.wind_file
    else:
        wind_file = run.artifact("simulate", "wind.csv")
        files = sorted(glob.glob(str(run.root / "simulate" / "segments" / "*.csv.gz")))
    if not files:
        raise DataError("no acceleration files found")
    segments = []
    for f in files:
        segments.extend(split_hourly(load_acceleration_csv(f)))
    return segments, load_wind_csv(wind_file)


def _identify_one(seg, bands):
    fft = scaled_fft(seg)
    records = []
    for band in bands:
        base = {"timestamp": seg.start_time.isoformat(),
                "band": {"name": band.name, "f_lo": band.f_lo, "f_hi": band.f_hi}}
        try:
            est = identify_mode(fft, band)
            rec = est.to_record()
        except IdentificationSkipped as exc:
            rec = {**base, "status": "skipped", "reason": str(exc)}
        except NumericalFailure as exc:
            rec = {**base, "status": "failed", "reason": str(exc)}
        records.append(rec)
    return records


def stage_identify(run, threads):
    cfg = run.cfg
    segments, winds = _load_segments(run)
    kept = filter_segments(segments, winds, tuple(cfg.filter.speed_range),
                           tuple(cfg.filter.hour_range), cfg.filter.tz)
    bands = [FrequencyBand(b.f_lo, b.f_hi, b.name) for b in cfg.bands]
    nyq = 0.5 / segments[0].dt
    for b in bands:
        if b.f_hi >= nyq:
            raise ConfigError(f"band {b.name} extends beyond the Nyquist frequency {nyq:g} Hz")
    with ThreadPoolExecutor(max(1, threads)) as pool:
        results = list(pool.map(lambda s: _identify_one(s, bands), kept))
    out = run.stage_dir("identify")
    counts = {"segments_total": len(segments), "segments_kept": len(kept)}
    with open(out / "estimates.jsonl", "w") as fh:
        for recs in results:
            for rec in recs:
                counts[rec["status"]] = counts.get(rec["status"], 0) + 1
                fh.write(json.dumps(rec, sort_keys=True, default=_json_default) + "\n")
    write_json(out / "summary.json", counts)
    return ", ".join(f"{k}={v}" for k, v in sorted(counts.items()))


def _read_estimates(path):
    by_band = {}
    with open(path) as fh:
        for line in fh:
            rec = json.loads(line)
            if rec["status"] not in ("ok", "flagged"):
                continue
            est = SimpleNamespace(
                segment_time=datetime.fromisoformat(rec["timestamp"]),
                flagged=rec["status"] == "flagged",
                mpv=SimpleNamespace(f=rec["f"], zeta=rec["zeta"]))
            by_band.setdefault(rec["band"]["name"], []).append(est)
    return by_band


def stage_trend(run, threads):
    cfg = run.cfg
    by_band = _read_estimates(run.artifact("identify", "estimates.jsonl"))
    out = run.stage_dir("trend")
    result, rows = {}, []
    for band in cfg.bands:
        ests = by_band.get(band.name, [])
        entry = {"role": band.role}
        for prop, attr, kind, fams in (("frequency", "f", "frequency", cfg.trend.frequency_families),
                                       ("damping", "zeta", "damping", cfg.trend.damping_families)):
            series = monthly_average(ests, attr)
            rows.extend((band.name, prop, int(t), float(v), int(c))
                        for t, v, c in zip(series.t, series.value, series.count))
            try:
                model = fit_deterioration(series, kind, fams, cfg.trend.min_segments_per_month,
                                          force=cfg.trend.force.get(f"{band.name}.{prop}"))
            except DataError as exc:
                if band.role:
                    raise DataError(f"band {band.name} {prop}: {exc}") from None
                entry[prop] = {"error": str(exc)}
                continue
            samples = detrended(series.at_least(cfg.trend.min_segments_per_month), model.a, model.b)
            entry[prop] = {**model.to_dict(), "samples": samples.tolist(),
                           "start_month": list(series.start_month)}
        ok = [e for e in ests if not e.flagged]
        try:
            r, indep = correlation_check([e.mpv.f for e in ok], [e.mpv.zeta for e in ok])
            entry["correlation"] = {"r": r, "independent": indep, "pairs": len(ok)}
        except DataError as exc:
            entry["correlation"] = {"error": str(exc)}
        result[band.name] = entry
    write_json(out / "trend.json", result)
    write_csv(out / "monthly.csv", ["band", "property", "month_index", "value", "count"], rows)
    return f"{len(result)} bands"


def _derivatives(cfg):
    d = cfg.derivatives
    if d.source == "theodorsen":
        return TheodorsenDerivatives()
    if not cfg.paths.derivative_file:
        raise ConfigError("paths.derivative_file is required when derivatives.source is 'csv'")
    meas = read_derivative_csv(cfg.paths.derivative_file)
    return fit_derivatives(meas, d.orders, d.exclusions, d.allow_extrapolation)


def _bridge(cfg):
    b = cfg.bridge
    return BridgeModel(b.B, b.span, b.m0, b.I0, b.rho)


def stage_flutter(run, threads):
    cfg = run.cfg
    derivs = _derivatives(cfg)
    bridge = _bridge(cfg)
    p = cfg.flutter.design_point
    args = (p.f_v1, p.f_t1, p.zeta_v1, p.zeta_t1)
    sol = solve_flutter(bridge, derivs, *args, ur_range=tuple(cfg.flutter.ur_range),
                        n_k=cfg.flutter.n_k, corrected=cfg.flutter.corrected)
    out = run.stage_dir("flutter")
    mi = modal_integrals(bridge)
    write_json(out / "solution.json", {
        "solution": sol.to_dict(), "design_point": p.model_dump(), "bridge": bridge.to_dict(),
        "modal_integrals": vars(mi), "residual": det_residual(sol, bridge, derivs, *args,
                                                              corrected=cfg.flutter.corrected),
        "corrected": cfg.flutter.corrected})
    if hasattr(derivs, "to_dict"):
        write_json(out / "derivatives.json", derivs.to_dict())
    rows = branch_table(bridge, derivs, *args, ur_range=tuple(cfg.flutter.ur_range),
                        n_k=cfg.flutter.n_k, corrected=cfg.flutter.corrected)
    write_csv(out / "branches.csv", ["ur", "K", "kind", "chi"], rows)
    return f"U_cr={sol.U_cr:.4f} m/s at U_r={sol.ur:.3f}"


def stage_surrogate(run, threads):
    cfg = run.cfg
    derivs = _derivatives(cfg)
    bridge = _bridge(cfg)
    mi = modal_integrals(bridge)
    box = {k: tuple(v) for k, v in cfg.doe.box.items()}
    pts = doe_grid(box, cfg.doe.levels)

    def solver(*x):
        return solve_flutter(bridge, derivs, *x, ur_range=tuple(cfg.flutter.ur_range),
                             n_k=cfg.flutter.n_k, corrected=cfg.flutter.corrected, integrals=mi)

    U = evaluate_doe(solver, pts, workers=threads)
    model = fit_surrogate(pts, U, box=box, seed=cfg.seed)
    out = run.stage_dir("surrogate")
    model.save(out / "surrogate.json")
    pred, _ = predict(model, *pts.T)
    write_csv(out / "doe.csv", [*VARIABLES, "U_cr", "U_pred"],
              [(*x, u, up) for x, u, up in zip(pts, U, pred)])
    return f"R2={model.r_squared:.5f}, excluded={model.n_excluded}"


def _role_models(trend):
    models = {}
    for entry in trend.values():
        role = entry.get("role")
        if not role:
            continue
        for prop, var in (("frequency", f"f_{role}"), ("damping", f"zeta_{role}")):
            if "error" in entry.get(prop, {"error": ""}):
                raise DataError(f"no {prop} model for mode {role}")
            models[var] = DeteriorationModel.from_dict(entry[prop])
    missing = [v for v in VARIABLES if v not in models]
    if missing:
        raise ConfigError(f"bands with roles v1 and t1 are required (missing {', '.join(missing)})")
    return models


def stage_lifecycle(run, threads):
    cfg = run.cfg
    surrogate = SurrogateModel.load(run.artifact("surrogate", "surrogate.json"))
    trend = read_json(run.artifact("trend", "trend.json"))
    models = _role_models(trend)
    wind = fit_gumbel_return_periods(cfg.gumbel.points)
    years = range(cfg.lifecycle.horizon + 1)
    freq = {k: models[k] for k in ("f_v1", "f_t1")}
    damp = {k: models[k] for k in ("zeta_v1", "zeta_t1")}
    out = run.stage_dir("lifecycle")
    summary = {"wind": wind.to_dict(), "scenarios": {}}

    def one(scenario):
        return scenario, lifecycle_curve(freq, damp, surrogate, wind, years, scenario,
                                         n_points=cfg.lifecycle.grid_points)

    with ThreadPoolExecutor(max(1, threads)) as pool:
        curves = list(pool.map(one, cfg.lifecycle.scenarios))
    for scenario, curve in curves:
        rows = [r.row() for r in curve]
        write_csv(out / f"pf-{scenario}.csv", list(rows[0]),
                  [list(r.values()) for r in rows])
        write_csv(out / f"vr-{scenario}.csv", ["x", "year0", f"year{curve[-1].year}"],
                  _pdf_rows(curve[0].vr_pdf, curve[-1].vr_pdf))
        summary["scenarios"][scenario] = {
            "p_f_first": curve[0].p_f, "p_f_last": curve[-1].p_f,
            "p_f_max": max(r.p_f for r in curve),
            "extrapolated_years": sum(r.extrapolation for r in curve)}
    write_json(out / "summary.json", summary)
    return ", ".join(f"{s}: P_f {v['p_f_first']:.3e}->{v['p_f_last']:.3e}"
                     for s, v in summary["scenarios"].items())


def _pdf_rows(first, last):
    x = np.union1d(first.x, last.x)
    d0 = np.interp(x, first.x, first.density, left=0, right=0)
    d1 = np.interp(x, last.x, last.density, left=0, right=0)
    step = max(1, x.size // 800)
    return [(a, b, c) for a, b, c in zip(x[::step], d0[::step], d1[::step])]


def _read_table(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def stage_report(run, threads):
    out = run.stage_dir("report")
    made, summary = [], []
    lc = run.root / "lifecycle"
    if (lc / "summary.json").exists():
        curves, pdfs = {}, {}
        for scenario in run.cfg.lifecycle.scenarios:
            rows = _read_table(lc / f"pf-{scenario}.csv")
            curves[scenario] = ([int(r["year"]) for r in rows], [float(r["p_f"]) for r in rows])
            summary.extend(("lifecycle", scenario, r["year"], "p_f", r["p_f"]) for r in rows[:: 10])
            vr = _read_table(lc / f"vr-{scenario}.csv")
            x = [float(r["x"]) for r in vr]
            for col in list(vr[0])[1:]:
                pdfs[f"{scenario}, {col}"] = (x, [float(r[col]) for r in vr])
        plotting.plot_failure_curves(curves, out / "pf_curve.svg")
        plotting.plot_critical_speed(pdfs, out / "critical_speed_pdf.svg")
        made += ["pf_curve.svg", "critical_speed_pdf.svg"]
    tr = run.root / "trend"
    if (tr / "trend.json").exists():
        trend = read_json(tr / "trend.json")
        monthly = _read_table(tr / "monthly.csv")
        for band, entry in trend.items():
            for prop in ("frequency", "damping"):
                m = entry.get(prop, {})
                if "error" in m or not m:
                    continue
                rows = [r for r in monthly if r["band"] == band and r["property"] == prop]
                t = np.array([int(r["month_index"]) for r in rows])
                v = np.array([float(r["value"]) for r in rows])
                ylabel = "frequency (Hz)" if prop == "frequency" else "damping ratio"
                name = f"trend-{band}-{prop}.svg"
                plotting.plot_trend(t, v, m["a"], m["b"], out / name, ylabel=ylabel)
                fl = FluctuationModel.from_dict(m["fluctuation"])
                name2 = f"fluctuation-{band}-{prop}.svg"
                plotting.plot_fluctuation(m["samples"], fl, out / name2, xlabel=ylabel)
                made += [name, name2]
                summary.append(("trend", band, prop, "a", repr(m["a"])))
                summary.append(("trend", band, prop, "b", repr(m["b"])))
                summary.append(("trend", band, prop, f"ks_p[{fl.family}]", repr(fl.ks_p)))
    if not made:
        raise ConfigError("nothing to report; run the trend and/or lifecycle stages first")
    write_csv(out / "summary.csv", ["stage", "key1", "key2", "quantity", "value"], summary)
    return f"{len(made)} figures"


HANDLERS = {
    "simulate": stage_simulate,
    "identify": stage_identify,
    "trend": stage_trend,
    "flutter": stage_flutter,
    "surrogate": stage_surrogate,
    "lifecycle": stage_lifecycle,
    "report": stage_report,
}

HELP = {
    "simulate": "generate a synthetic monitoring campaign (acceleration + wind)",
    "identify": "Bayesian FFT identification per (segment, band)",
    "trend": "monthly series, deterioration trends and fluctuation distributions",
    "flutter": "critical wind speed at the configured design point",
    "surrogate": "DOE over modal properties and linear surrogate fit",
    "lifecycle": "time-variant failure probability per damping scenario",
    "report": "SVG figures and a summary table from stage artifacts",
}


def build_parser():
    common = _Parser(add_help=False)
    common.add_argument("--config", required=True, help="pipeline JSON configuration")
    common.add_argument("--out", default="runs", help="output root directory (default: runs)")
    common.add_argument("--seed", type=int, default=None, help="override the config seed")
    common.add_argument("--threads", type=int, default=1, help="worker threads (default: 1)")
    common.add_argument("-v", "--verbose", action="store_true", help="log progress")
    parser = _Parser(prog="flutterlife",
                     description="Life-cycle flutter reliability pipeline (one stage per call).")
    sub = parser.add_subparsers(dest="stage", required=True, metavar="STAGE")
    for stage in STAGES:
        sub.add_parser(stage, parents=[common], help=HELP[stage], description=HELP[stage])
    return parser


def exit_code(exc):
    if isinstance(exc, (UsageError, ConfigError)):
        return 1
    if isinstance(exc, (DataError, DomainError, NoFlutterInRange, IdentificationSkipped)):
        return 2
    return 3


def main(argv=None):
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    stage = argv[0] if argv and argv[0] in STAGES else None
    try:
        args = parser.parse_args(argv)
        stage = args.stage
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        if args.threads < 1:
            raise UsageError("--threads must be at least 1")
        cfg = load_config(args.config, seed=args.seed)
        run = Run(cfg, args.out)
        message = HANDLERS[stage](run, args.threads)
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    except (UsageError, FlutterLifeError) as exc:
        code = exit_code(exc)
        reason = " ".join(str(exc).split())
        print(f"error: stage={stage or '-'} code={code} reason={reason}", file=sys.stderr)
        return code
    print(f"ok: stage={stage} run={run.root} {message}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
