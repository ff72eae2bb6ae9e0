"""Command-line front end: ``therminv {simulate,sensitivity,aem,estimate,validate}``.

Exit codes: 0 success, 2 configuration or input error, 3 numerical failure.
Wall-clock dependent values (timestamps, timings) only appear in the ``meta``
block of JSON reports, so all other outputs are reproducible byte for byte.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import json
import logging
import sys
import time
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .errors import (AemBuildError, ConfigurationError, DomainError, EvaluationError,
                     IngestionError, SolverError, ThermInvError, UnidentifiableError)

log = logging.getLogger("therminv")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3
_CONFIG_ERRORS = (ConfigurationError, DomainError, IngestionError, FileNotFoundError)
_NUMERIC_ERRORS = (SolverError, EvaluationError, AemBuildError, UnidentifiableError,
                   ArithmeticError)


# ---------------------------------------------------------------------------
# helpers

def _meta(args, **extra):
    doc = {"created": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
           "version": __version__, "command": args.command,
           "config": str(args.config) if args.config else "paper-defaults"}
    doc.update(extra)
    return doc


def _write_json(path, doc):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def _write_rows(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])


def _sensor_rows(ids, times, values):
    for k, sid in enumerate(ids):
        for t, v in zip(times, values[k]):
            yield (float(t), sid, float(v))


def _seed(args, section):
    seed = args.seed if args.seed is not None else section.get("seed")
    if seed is None:
        raise ConfigurationError("a seed is required: pass --seed or set it in the config")
    seed = int(seed)
    if not 0 <= seed < 2 ** 64:
        raise ConfigurationError("seed must be an unsigned 64-bit integer")
    return seed


def _lumped_sensors(rc, times=None):
    from .aem import LumpedSensors
    return LumpedSensors(rc.layers, rc.geometry, rc.schedule, rc.T_ini, rc.sensors,
                         rc.times if times is None else times, rc.scales,
                         controls=rc.controls)


def _complete_sensors(rc, strict=False):
    from .aem import CompleteSensors
    return CompleteSensors(rc.layers, rc.geometry, rc.schedule, rc.T_ini, rc.sensors, rc.times,
                           mesh=rc.mesh_2d(), dt=rc.mesh2d.get("dt"),
                           output_interval=rc.mesh2d.get("output_interval", 60.0))


def _solve_complete(rc, h_t, h_l, strict=False, horizon=None):
    from .solver2d import solve_complete
    return solve_complete(rc.layers, rc.geometry, rc.schedule, h_t, h_l, rc.T_ini,
                          mesh=rc.mesh_2d(), dt=rc.mesh2d.get("dt"),
                          horizon=rc.horizon if horizon is None else horizon, T0=rc.scales.T0,
                          output_interval=rc.mesh2d.get("output_interval", 60.0),
                          strict=strict)


def _diag_summary(ratio, jint, dev):
    finite = ratio[np.isfinite(ratio)]
    return {"flux_ratio_mean": float(finite.mean()) if finite.size else None,
            "flux_ratio_min": float(finite.min()) if finite.size else None,
            "interface_flux_peak_Wm2": float(np.max(np.abs(jint))),
            "alu_deviation_peak_C": float(np.max(np.abs(dev)))}


def _figure(args, fn, *a, **kw):
    if not args.figures:
        return
    from . import plotting
    out = getattr(plotting, fn)(*a, **kw)
    if out is not None:
        log.info("wrote %s", out)


# ---------------------------------------------------------------------------
# commands

def cmd_simulate(args, rc):
    out = args.out
    h_l = rc.h_l_factor * rc.R_l
    if args.model == "lumped":
        from .solver1d import sample_series, solve_lumped
        cfg = rc.dimensionless()
        taus = rc.times / rc.scales.t0
        field = solve_lumped(cfg, mesh=rc.mesh1d(cfg), controls=rc.controls, output_times=taus)
        field.to_csv(out / "field.csv")
        T = np.array([rc.scales.T0 * sample_series(field, c, taus) for c in rc.chi.values()])
        _write_rows(out / "diagnostics.csv", ["t_s", "sensor_id", "T_C"],
                    _sensor_rows(list(rc.sensors), rc.times, T))
        _figure(args, "plot_field", out / "field.png", field.mesh.chi * rc.geometry.L0x,
                rc.times / 3600,
                rc.scales.T0 * field.values, xlabel="x [m]")
        report = {"model": "lumped", "h_t": rc.h_t, "R_l": rc.R_l, "mode": rc.mode}
    else:
        from .solver2d import write_diagnostics_csv
        field = _solve_complete(rc, rc.h_t, h_l, strict=args.strict)
        every = max(1, int(round((rc.times[1] - rc.times[0]) / (field.times[1] - field.times[0]))))
        field.to_csv(out / "field.csv", every=every)
        xs = list(rc.sensors.values())
        x_range = (min(x for x in xs if x > 0), max(xs)) if any(x > 0 for x in xs) else (0, 0)
        ratio, jint, dev = write_diagnostics_csv(out / "diagnostics.csv", field, rc.schedule,
                                                 x_range=x_range,
                                                 x_interface=rc.geometry.interface_position)
        y_mid = 0.5 * rc.geometry.L0y
        T = np.array([field.sample_at_times(x, y_mid, rc.times) for x in xs])
        _write_rows(out / "sensors.csv", ["t_s", "sensor_id", "T_C"],
                    _sensor_rows(list(rc.sensors), rc.times, T))
        th = field.times / 3600
        _figure(args, "plot_series", out / "diagnostics.png", th,
                {"flux ratio": ratio}, "x-flux share")
        _figure(args, "plot_series", out / "alu_deviation.png", th,
                {"aluminum - chamber": dev}, "dT [degC]")
        report = {"model": "complete", "h_t": rc.h_t, "h_l": h_l, "dt_s": field.dt,
                  **_diag_summary(ratio, jint, dev)}
    _figure(args, "plot_series", out / "sensors.png", rc.times / 3600,
            dict(zip(rc.sensors, T)), "T [degC]")
    report["meta"] = _meta(args)
    _write_json(out / "report.json", report)
    return EXIT_OK


def cmd_sensitivity(args, rc):
    from .sensitivity import (correlation_table, fisher_matrix, solve_sensitivities,
                              write_fisher_json)
    out = args.out
    cfg = rc.dimensionless()
    taus = rc.times / rc.scales.t0
    _, sens = solve_sensitivities(cfg, mesh=rc.mesh1d(cfg), controls=rc.controls,
                                  output_times=taus)
    sens.to_csv(out / "sensitivity.csv")
    chis = list(rc.chi.values())
    F = fisher_matrix(sens, chis, rc.sigma_s, T0=rc.scales.T0)
    write_fisher_json(out / "fisher.json", F, sensors=rc.sensors, sigma_s=rc.sigma_s,
                      h_t=rc.h_t, R_l=rc.R_l)
    try:
        table = correlation_table(sens, chis)
    except DomainError as exc:
        # constant sensitivities (e.g. a constant schedule) have no correlation
        log.warning("correlation table undefined: %s", exc)
        table = {}
    ids = list(rc.sensors)
    _write_rows(out / "correlation.csv", ["pair", *ids, "all"],
                ([pair, *vals] for pair, vals in table.items()))
    from .solver1d import sample_series
    if args.figures:
        for name in ("theta", "psi", "phi"):
            f = getattr(sens, name)
            _figure(args, "plot_series", out / f"{name}.png", rc.times / 3600,
                    {sid: sample_series(f, c) for sid, c in rc.chi.items()}, name)
    return EXIT_OK


def cmd_aem(args, rc):
    from .aem import build_aem
    seed = _seed(args, rc.aem)
    lum = _lumped_sensors(rc)
    com = _complete_sensors(rc)
    aem = build_aem(rc.aem_prior, int(rc.aem["n_samples"]), lum, com, list(rc.sensors),
                    rc.times, seed)
    aem.to_csv(args.out / "aem.csv")
    _figure(args, "plot_series", args.out / "aem.png", rc.times / 3600,
            {**{f"e {s}": aem.e[k] for k, s in enumerate(aem.sensor_ids)},
             **{f"s_e {s}": aem.s_e[k] for k, s in enumerate(aem.sensor_ids)}}, "[degC]")
    k = int(np.argmax(np.abs(aem.e).max(axis=1)))
    _write_json(args.out / "report.json", {
        "n_samples": aem.n_samples, "n_skipped": aem.n_skipped, "seed": seed,
        "peak_abs_e_C": {s: float(np.abs(aem.e[i]).max()) for i, s in enumerate(aem.sensor_ids)},
        "peak_s_e_C": {s: float(aem.s_e[i].max()) for i, s in enumerate(aem.sensor_ids)},
        "largest_error_sensor": aem.sensor_ids[k], "meta": _meta(args)})
    return EXIT_OK


def _load_data(args, rc):
    """Dataset CSV (``t_s,sensor_id,T_C,sigma_C``) or a directory of repeats."""
    from .measurement import (SensorDataset, build_dataset, position_uncertainty,
                              read_manifest, read_repeats)
    path = Path(args.data)
    if path.is_dir():
        manifest = path / "sensors.csv"
        positions = read_manifest(manifest) if manifest.exists() else rc.sensors
        if (path / "dataset.csv").exists():
            return SensorDataset.from_csv(path / "dataset.csv", positions, rc.geometry.L0x)
        files = sorted(path.glob("repeat_*.csv"))
        if not files:
            raise IngestionError(f"{path}: no dataset.csv and no repeat_*.csv files")
        reps = read_repeats(files, positions)
        from .solver1d import solve_lumped
        cfg = rc.dimensionless()
        prior_field = solve_lumped(cfg, mesh=rc.mesh1d(cfg), controls=rc.controls,
                                   output_times=reps.times / rc.scales.t0)
        pos = {sid: position_uncertainty(prior_field, x / rc.geometry.L0x, rc.position_delta,
                                         rc.scales.T0, rc.geometry.L0x)
               for sid, x in positions.items()}
        return build_dataset(reps, rc.geometry.L0x, rc.sigma_s, pos)
    if not path.exists():
        raise IngestionError(f"data not found: {path}")
    return SensorDataset.from_csv(path, rc.sensors, rc.geometry.L0x)


def cmd_estimate(args, rc):
    from .aem import AemModel
    from .inference import chain_stats, residuals, run_mcmc, write_summary_json
    from .thermo_model import parameters_to_dimensionless
    if not args.data:
        raise ConfigurationError("estimate needs --data")
    seed = _seed(args, rc.mcmc)
    data = _load_data(args, rc)
    aem = None
    if args.aem:
        aem = AemModel.from_csv(args.aem)
        if aem.sensor_ids != [s.sensor_id for s in data.sensors] or \
                aem.times.shape != np.shape(data.times) or np.any(aem.times != data.times):
            raise DomainError("AEM sensors/times do not match the data")
    elif rc.aem.get("enabled"):
        raise ConfigurationError("aem.enabled is true: pass --aem (built with `therminv aem`)")
    cfg = rc.dimensionless()
    p0 = rc.mcmc.get("p0")
    chain = run_mcmc(data, cfg, rc.prior, w=tuple(rc.mcmc["walk"]),
                     n_states=int(rc.mcmc["n_states"]), seed=seed, aem=aem,
                     p0=None if p0 is None else tuple(p0), burn_in=int(rc.mcmc["burn_in"]),
                     mesh=rc.mesh1d(cfg), controls=rc.controls, dirichlet=rc.dirichlet)
    stats = chain_stats(chain, bins=int(rc.mcmc.get("bins", 50)), prior=rc.prior)
    out = args.out
    chain.to_csv(out / "chain.csv")
    p = parameters_to_dimensionless(stats.mean[0], stats.mean[1], cfg)
    r = residuals(p, data, cfg, mesh=rc.mesh1d(cfg), controls=rc.controls, aem=aem)
    ids = [s.sensor_id for s in data.sensors]
    with open(out / "residuals.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t_s", "sensor_id", "residual_C", "sigma_C"])
        for k, s in enumerate(data.sensors):
            for t, v, sg in zip(s.times, r[k], s.sigma):
                w.writerow([repr(float(t)), s.sensor_id, repr(float(v)), repr(float(sg))])
    data.to_csv(out / "dataset.csv")
    write_summary_json(out / "summary.json", chain, stats, meta=_meta(args), aem=bool(aem),
                       mode=rc.mode, residual_mean_C=float(r.mean()),
                       residual_max_abs_C=float(np.abs(r).max()))
    _figure(args, "plot_chain", out / "chain.png", chain, stats)
    _figure(args, "plot_series", out / "residuals.png", np.asarray(data.times) / 3600,
            dict(zip(ids, r)), "residual [degC]")
    return EXIT_OK


def _read_params(path, rc):
    if path is None:
        return rc.h_t, rc.R_l, rc.h_l_factor * rc.R_l
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"{path}: not valid JSON ({exc})") from None

    def val(k):
        v = doc.get(k)
        v = v.get("mean") if isinstance(v, dict) else v
        if v is None:
            raise ConfigurationError(f"{path}: missing {k}")
        return float(v)
    h_t, R_l = val("h_t"), val("R_l")
    h_l = float(doc["h_l"]) if "h_l" in doc else rc.h_l_factor * R_l
    return h_t, R_l, h_l


def _time_lumped(lum, h_t, R_l, repeats=5):
    ts = []
    for _ in range(repeats):
        t = time.perf_counter()
        T = lum(h_t, R_l)
        ts.append(time.perf_counter() - t)
    return T, float(np.median(ts))


def cmd_validate(args, rc):
    from .solver2d import write_diagnostics_csv
    h_t, R_l, h_l = _read_params(args.params, rc)
    out = args.out
    lum = _lumped_sensors(rc)
    T1, t1 = _time_lumped(lum, h_t, R_l)
    # warm-up compiles the 2D kernel so the timing measures one solve
    _solve_complete(rc, h_t, h_l, horizon=rc.mesh2d.get("output_interval", 60.0))
    t = time.perf_counter()
    field = _solve_complete(rc, h_t, h_l, strict=args.strict)
    t2 = time.perf_counter() - t
    y_mid = 0.5 * rc.geometry.L0y
    T2 = np.array([field.sample_at_times(x, y_mid, rc.times) for x in rc.sensors.values()])
    ids = list(rc.sensors)
    with open(out / "residuals.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t_s", "sensor_id", "T_lumped_C", "T_complete_C", "diff_C"])
        for k, sid in enumerate(ids):
            for t_, a, b in zip(rc.times, T1[k], T2[k]):
                w.writerow([repr(float(t_)), sid, repr(float(a)), repr(float(b)),
                            repr(float(a - b))])
    xs = [x for x in rc.sensors.values() if x > 0]
    x_range = (min(xs), max(xs)) if xs else (0.0, 0.0)
    ratio, jint, dev = write_diagnostics_csv(out / "diagnostics.csv", field, rc.schedule,
                                             x_range=x_range,
                                             x_interface=rc.geometry.interface_position)
    report = {
        "h_t": h_t, "R_l": R_l, "h_l": h_l,
        "max_abs_diff_C": {sid: float(np.abs(T1[k] - T2[k]).max()) for k, sid in enumerate(ids)},
        **_diag_summary(ratio, jint, dev),
        "meta": _meta(args, timing={"lumped_solve_s": t1, "complete_solve_s": t2,
                                    "ratio_complete_to_lumped": t2 / t1,
                                    "complete_dt_s": field.dt}),
    }
    _write_json(out / "report.json", report)
    _figure(args, "plot_series", out / "validate.png", rc.times / 3600,
            {f"{sid} lumped - complete": T1[k] - T2[k] for k, sid in enumerate(ids)},
            "dT [degC]")
    print(f"2D/1D per-solve time ratio: {t2 / t1:.1f} ({t2:.3f} s / {t1:.4f} s)")
    return EXIT_OK


COMMANDS = {"simulate": cmd_simulate, "sensitivity": cmd_sensitivity, "aem": cmd_aem,
            "estimate": cmd_estimate, "validate": cmd_validate}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="YAML run config (default: reference values)")
    common.add_argument("--out", type=Path, required=True, help="output directory")
    common.add_argument("--seed", type=int, help="overrides the config seed")
    common.add_argument("--strict", action="store_true",
                        help="treat 2D consistency warnings as errors")
    common.add_argument("--figures", action="store_true",
                        help="also render PNG figures (needs matplotlib)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="therminv", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"therminv {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    s = sub.add_parser("simulate", parents=[common], help="run a forward model")
    s.add_argument("--model", choices=("lumped", "complete"), default="lumped")
    sub.add_parser("sensitivity", parents=[common],
                   help="sensitivity functions, Fisher information, correlations")
    sub.add_parser("aem", parents=[common], help="build the approximation error model")
    s = sub.add_parser("estimate", parents=[common], help="Metropolis-Hastings estimation")
    s.add_argument("--data", type=Path, help="dataset CSV or directory of repeats")
    s.add_argument("--aem", type=Path, help="AEM CSV from `therminv aem`")
    s = sub.add_parser("validate", parents=[common], help="lumped vs complete comparison")
    s.add_argument("--params", type=Path, help="JSON with h_t, R_l (and optionally h_l)")
    sub.add_parser("init-config", help="print the reference config")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.command == "init-config":
        from .config import paper_defaults_text
        sys.stdout.write(paper_defaults_text())
        return EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    from .config import load_config
    try:
        rc = load_config(args.config)
        args.out.mkdir(parents=True, exist_ok=True)
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            return COMMANDS[args.command](args, rc)
    except _CONFIG_ERRORS as exc:
        print(f"therminv: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except _NUMERIC_ERRORS as exc:
        print(f"therminv: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ThermInvError as exc:
        print(f"therminv: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
