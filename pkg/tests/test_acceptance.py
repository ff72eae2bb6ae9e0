"""Acceptance criteria 1-10; each test prints one PASS/FAIL line."""

import dataclasses
import json
import time

import numpy as np
import pytest

from conftest import slab_config
from oracles import robin_slab
from therminv.aem import AemPrior, CompleteSensors, LumpedSensors, build_aem
from therminv.cli import main
from therminv.inference import (PriorSpec, chain_stats, residuals, run_mcmc)
from therminv.measurement import (POSITION_DELTA, RepeatSet, best_estimate, build_dataset,
                                  position_uncertainty, random_uncertainty,
                                  synthesize_observations, total_uncertainty)
from therminv.sensitivity import correlation_table, solve_sensitivities
from therminv.solver1d import Field1D, Mesh1D, SolverControls, sample_series, solve_lumped
from therminv.solver2d import aluminum_deviation, flux_ratio, interface_flux, solve_complete
from therminv.thermo_model import (Geometry, ParameterPoint, paper_config, paper_layers,
                                   paper_schedule, parameters_to_dimensionless)

pytestmark = pytest.mark.acceptance

SENSORS = {"x1": 0.0, "x2": 0.04}
ESTIMATED = (11.5, 0.38)  # estimated-scale coefficients, W m-2 K-1


def batch_se(x, n_batches=50):
    """Standard error of the mean of a correlated series by batch means."""
    x = np.asarray(x, dtype=float)
    m = x.size // n_batches
    means = x[: m * n_batches].reshape(n_batches, m).mean(axis=1)
    return means.std(ddof=1) / np.sqrt(n_batches)


def test_c01_forward_oracle(criterion):
    cfg = slab_config(fo=0.5, bi=5.0)
    taus = np.linspace(0, 1, 201)
    t = time.perf_counter()
    f = solve_lumped(cfg, mesh=Mesh1D(101, 0.5), output_times=taus)
    elapsed = time.perf_counter() - t
    exact = robin_slab(f.mesh.chi, taus, 0.5, 5.0, 1.0, 1.5).T
    late = 0.5 * taus > 0.05
    err = np.max(np.abs(f.values[:, late] - exact[:, late])) / 0.5
    ok = err < 5e-3 and elapsed < 1.0
    criterion(1, "slab vs series", ok, f"max error {100 * err:.3f}% of step, {elapsed:.3f} s")
    assert ok


def test_c02_spatial_order(criterion):
    cfg = slab_config(fo=0.5, bi=5.0)
    tight = SolverControls(1e-11, 1e-11)
    out = [0.25, 0.5]
    ns = [11, 21, 41, 81]
    n_ref = 4 * (ns[-1] - 1) + 1
    ref = solve_lumped(cfg, mesh=Mesh1D(n_ref, 0.5), controls=tight, output_times=out)
    errs = []
    for n in ns:
        f = solve_lumped(cfg, mesh=Mesh1D(n, 0.5), controls=tight, output_times=out)
        errs.append(np.max(np.abs(f.values - ref.values[:: (n_ref - 1) // (n - 1)])))
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    ok = bool(np.all(np.abs(orders - 2.0) <= 0.3))
    criterion(2, "spatial order", ok, "orders " + ", ".join(f"{o:.3f}" for o in orders))
    assert ok


def test_c03_gradient_check(criterion):
    cfg = paper_config()
    p = cfg.parameters
    ctl = SolverControls(1e-9, 1e-9)
    eps = 1e-3
    t = time.perf_counter()
    _, sens = solve_sensitivities(cfg, controls=ctl)

    def central(make, v):
        hi, lo = make(v * (1 + eps)), make(v * (1 - eps))
        return (solve_lumped(*hi, controls=ctl).values
                - solve_lumped(*lo, controls=ctl).values) / (2 * eps * v)

    fd = {"theta": central(lambda v: (cfg, ParameterPoint(v, p.bi_l)), p.bi_t),
          "psi": central(lambda v: (cfg, ParameterPoint(p.bi_t, v)), p.bi_l),
          "phi": central(lambda v: (dataclasses.replace(cfg, fo1=v), p), cfg.fo1)}
    elapsed = time.perf_counter() - t
    errs = {}
    for name, num in fd.items():
        an = getattr(sens, name).values
        mask = np.abs(an) > 0.01 * np.abs(an).max()
        errs[name] = np.max(np.abs(an[mask] - num[mask]) / np.abs(an[mask]))
    ok = max(errs.values()) < 0.02 and elapsed < 5.0
    detail = ", ".join(f"{k} {100 * v:.2f}%" for k, v in errs.items())
    criterion(3, "sensitivity gradient check", ok, f"{detail}, {elapsed:.2f} s")
    assert ok


def test_c04_correlation_table(criterion):
    _, sens = solve_sensitivities(paper_config())
    x1, x2, both = correlation_table(sens, [0.0, 0.25])["theta-psi"]
    ok = abs(x1) > 0.9 and abs(x2) > 0.9 and abs(both - 0.29) <= 0.15
    criterion(4, "correlation table", ok,
              f"corr(theta,psi) x1 {x1:.3f}, x2 {x2:.3f}, both sensors {both:.3f}")
    assert ok


def test_c05_flux_anisotropy(criterion):
    g = Geometry()
    s = paper_schedule()
    f = solve_complete(paper_layers(), g, s, *ESTIMATED, 20.0)
    ratio = flux_ratio(f, (0.04, 0.04))
    share = np.nanmean(ratio)
    jint = np.max(np.abs(interface_flux(f)))
    dev = np.max(np.abs(aluminum_deviation(f, s)))
    checks = [share >= 0.95, 1.0 <= jint <= 3.0, 0.75 <= dev <= 3.0]
    ok = all(checks)
    criterion(5, "2D flux anisotropy", ok,
              f"x-flux share {share:.3f} (>=0.95 {'ok' if checks[0] else 'no'}), "
              f"interface flux peak {jint:.3f} W/m2 ([1,3] {'ok' if checks[1] else 'no'}), "
              f"aluminum deviation peak {dev:.3f} C ([0.75,3] {'ok' if checks[2] else 'no'})")
    assert ok


@pytest.fixture(scope="module")
def validate_report(tmp_path_factory):
    d = tmp_path_factory.mktemp("validate")
    params = d / "params.json"
    params.write_text(json.dumps({"h_t": ESTIMATED[0], "R_l": ESTIMATED[1]}))
    t = time.perf_counter()
    code = main(["validate", "--params", str(params), "--out", str(d / "out")])
    elapsed = time.perf_counter() - t
    assert code == 0
    return json.loads((d / "out" / "report.json").read_text()), elapsed


def test_c06_lumped_vs_complete(criterion, validate_report):
    report, elapsed = validate_report
    diffs = report["max_abs_diff_C"]
    ok = max(diffs.values()) <= 0.5 and elapsed <= 600
    criterion(6, "1D vs 2D discrepancy", ok,
              ", ".join(f"{k} {v:.3f} C" for k, v in diffs.items()) + f", run {elapsed:.1f} s")
    assert ok


def test_c07_mcmc_correctness(criterion):
    mu, sd = np.array([15.0, 0.4]), np.array([2.0, 0.05])

    def gauss(h, r):
        return -0.5 * (((h - mu[0]) / sd[0]) ** 2 + ((r - mu[1]) / sd[1]) ** 2)

    n = 100_000
    ch = run_mcmc(None, None, w=(0.1, 0.1), n_states=n, seed=21, p0=tuple(mu),
                  log_likelihood_fn=gauss, burn_in=1000)
    s = ch.states[1000:]
    mean_ok, std_ok = [], []
    for k in range(2):
        se_mean = batch_se(s[:, k])
        z = (s[:, k] - s[:, k].mean()) ** 2
        se_std = batch_se(z) / (2 * sd[k])  # delta method on the variance
        mean_ok.append(abs(s[:, k].mean() - mu[k]) <= 3 * se_mean)
        std_ok.append(abs(s[:, k].std() - sd[k]) <= 3 * se_std)
    a = all(mean_ok) and all(std_ok)

    flat = run_mcmc(None, None, w=(0.1, 0.1), n_states=n, seed=22, p0=(20.5, 0.5),
                    log_likelihood_fn=lambda h, r: 0.0, burn_in=1000)
    h = flat.states[1000:, 0]
    b = abs(h.mean() - 20.5) <= 3 * batch_se(h)

    again = run_mcmc(None, None, w=(0.1, 0.1), n_states=n, seed=21, p0=tuple(mu),
                     log_likelihood_fn=gauss, burn_in=1000)
    c = np.array_equal(ch.states, again.states) and np.array_equal(ch.log_post, again.log_post)
    ok = a and b and c
    criterion(7, "MCMC correctness", ok,
              f"gaussian mean {s.mean(axis=0).round(4).tolist()} std {s.std(axis=0).round(4).tolist()} "
              f"({'ok' if a else 'no'}), flat h_t mean {h.mean():.3f} ({'ok' if b else 'no'}), "
              f"reproducible {c}")
    assert ok


@pytest.mark.slow
def test_c08_synthetic_round_trip(criterion):
    g, layers, s = Geometry(), paper_layers(), paper_schedule()
    times = np.arange(0, 72001, 600.0)
    cfg = paper_config()
    t0 = time.perf_counter()
    truth = solve_complete(layers, g, s, *ESTIMATED, 20.0, horizon=72000.0,
                           output_interval=60.0)
    data = build_dataset(synthesize_observations(truth, SENSORS, times, 0.3, seed=7), g.L0x)
    sigma_bar = float(np.mean(data.stacked()[1]))
    aem = build_aem(AemPrior(), 200, LumpedSensors(layers, g, s, 20.0, SENSORS, times),
                    CompleteSensors(layers, g, s, 20.0, SENSORS, times), list(SENSORS),
                    times, seed=11)
    runs = {}
    for name, model in (("on", aem), ("off", None)):
        ch = run_mcmc(data, cfg, PriorSpec(), w=(2e-3, 2e-3), n_states=10_000, seed=3,
                      aem=model, p0=(8.0, 0.5), burn_in=2000)
        st = chain_stats(ch)
        r = residuals(parameters_to_dimensionless(*st.mean, cfg), data, cfg, aem=model)
        runs[name] = (st, r)
    elapsed = time.perf_counter() - t0

    st, r = runs["on"]
    covered = abs(st.mean[0] - ESTIMATED[0]) <= 3 * st.std[0]
    bounded = abs(r.mean()) < sigma_bar and np.abs(r).max() < 3 * sigma_bar
    improves = abs(r.mean()) <= abs(runs["off"][1].mean())
    fast = elapsed <= 1800
    ok = covered and bounded and improves and fast
    off = runs["off"]
    criterion(8, "synthetic round trip", ok,
              f"h_t {st.mean[0]:.2f} +- {st.std[0]:.2f} (truth {ESTIMATED[0]}, "
              f"{'ok' if covered else 'no'}); residual mean {r.mean():.3f}, max "
              f"{np.abs(r).max():.3f} vs sigma {sigma_bar:.3f} ({'ok' if bounded else 'no'}); "
              f"AEM off h_t {off[0].mean[0]:.2f} +- {off[0].std[0]:.2f}, residual mean "
              f"{off[1].mean():.3f} (AEM |mean| <= off {'ok' if improves else 'no'}); "
              f"{elapsed:.0f} s")
    assert ok


def test_c09_uncertainty_pipeline(criterion):
    rs = RepeatSet({"s": 0.0}, [0.0], {"s": [[19.9], [20.0], [20.1]]})
    rand = random_uncertainty(rs)["s"][0]
    best = best_estimate(RepeatSet({"s": 0.0}, [0.0], {"s": [[19.8], [20.0], [20.5]]}))["s"][0]
    tot = total_uncertainty(0.3, 0.0, 0.2)
    mesh = Mesh1D()
    lin = Field1D(mesh, [0.0], 1.0 + 0.32 * mesh.chi[:, None])
    pos = position_uncertainty(lin, 0.25, 0.005)[0]
    rel = [abs(rand / (np.sqrt(0.02 / 3) / np.sqrt(3)) - 1), abs(best / 20.1 - 1),
           abs(tot / np.sqrt(0.13) - 1), abs(pos / 0.2 - 1)]
    formulas = max(rel) <= 1e-12

    cfg = paper_config()
    f = solve_lumped(cfg, output_times=np.arange(0, 72001, 60.0) / cfg.t0)
    peaks = {sid: float(position_uncertainty(f, x / 0.16, POSITION_DELTA).max())
             for sid, x in SENSORS.items()}
    peak = max(peaks.values())
    ok = formulas and abs(peak - 0.2) <= 0.05
    criterion(9, "uncertainty pipeline", ok,
              f"formulas max rel err {max(rel):.1e}; sigma_chi peak {peak:.3f} C "
              f"({', '.join(f'{k} {v:.3f}' for k, v in peaks.items())})")
    assert ok


def test_c10_performance_ratio(criterion, validate_report):
    report, _ = validate_report
    timing = report["meta"]["timing"]
    ratio = timing["ratio_complete_to_lumped"]
    ok = ratio > 10
    criterion(10, "2D/1D solve time ratio", ok,
              f"{ratio:.1f} ({timing['complete_solve_s']:.2f} s / {timing['lumped_solve_s']:.4f} s)")
    assert ok
