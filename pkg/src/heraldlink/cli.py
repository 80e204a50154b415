"""Command line front end.

Subcommands:

  budget    closed-form link budget, one CSV row per scenario
  lock      stabilization-loop run, residual-phase trajectory CSV
  simulate  Monte Carlo herald tally plus analyzer fringe scan
  hom       two-source bunching correlation versus intensity ratio
  fit       deterministic calibration fits on the bundled record
  campaign  per-scenario herald, fringe, and concurrence statistics
  compare   diff outputs against the bundled reference record

Scenarios come from --scenario (a file, see the scenario module) or
--preset (a bundled name); budget, campaign, and compare default to the
six distance presets.  --seed overrides the scenario seed, otherwise
the file or preset value applies (plain scenarios default to seed 0).
Output goes to --out, else the directory named by the
HERALDLINK_OUTPUT_DIR environment variable, else ./heraldlink-out.
Every run writes its CSV tables plus one summary.json recording the
resolved configuration and seed of every number emitted; identical
scenarios and seeds reproduce every output byte for byte.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from dataclasses import replace

import numpy as np

from . import __version__, analysis, reference, report
from .budget import herald_stats, plob_crossing, scaling_fit
from .errors import HeraldLinkError
from .phaselock import (DualBandParams, InterferometerGeometry, envelope_fit,
                        envelope_peak_to_peak, simulate_lock,
                        single_band_residual, thermal_drift,
                        visibility_from_phase)
from .presets import list_presets
from .protocol import (_LOCK_BAND, _ArrayRecords, _lock_geometry,
                       collect_heralded, herald_tally, run_campaign,
                       run_fringe_scan)
from .scenario import ScenarioFile, from_preset, parse_scenario

ENV_OUTPUT_DIR = "HERALDLINK_OUTPUT_DIR"
DEFAULT_OUTPUT_DIR = "heraldlink-out"
DISTANCE_PRESETS = ("0km", "20km", "120km", "220km", "320km", "420km")
_LABEL_TO_KM = {"0km": 0.0, "20km": 20.0, "120km": 120.0, "220km": 220.0,
                "320km": 320.0, "420km": 420.0}

# synthetic envelope-scan recipe shared by `fit` and `compare`: path
# imbalance grid, relative amplitude noise, and the generating band
# offset (its spatial beat is 0.142 per cm)
ENVELOPE_SCAN_POINTS = 201
ENVELOPE_SCAN_SPAN_M = 0.5
ENVELOPE_SCAN_NOISE = 0.01
ENVELOPE_SCAN_DELTA_NU_HZ = 678.0e6


def _outdir(args) -> str:
    return args.out or os.environ.get(ENV_OUTPUT_DIR) or DEFAULT_OUTPUT_DIR


def _path(args, name: str) -> str:
    return os.path.join(_outdir(args), name)


def _resolve_scenarios(args, parser, defaults=()) -> list:
    if getattr(args, "scenario", None) and getattr(args, "preset", None):
        parser.error("give either --scenario or --preset, not both")
    if getattr(args, "scenario", None):
        files = [parse_scenario(args.scenario)]
    elif getattr(args, "preset", None):
        files = [from_preset(args.preset)]
    elif defaults:
        files = [from_preset(name) for name in defaults]
    else:
        parser.error("name a scenario with --scenario <file> or --preset "
                     f"<name>; bundled presets: {', '.join(list_presets())}")
    if getattr(args, "seed", None) is not None:
        files = [replace(sf, scenario=replace(sf.scenario, seed=args.seed))
                 for sf in files]
    return files


def _scenario_block(sf: ScenarioFile) -> dict:
    return {
        "label": sf.scenario.label,
        "preset": sf.preset_name,
        "file": sf.path or None,
        "seed": sf.scenario.seed,
        "config": sf.echo()["scenario"],
    }


def _summary(args, command: str, scenario_files, outputs, results) -> str:
    tree = {
        "command": command,
        "package_version": __version__,
        "scenarios": [_scenario_block(sf) for sf in scenario_files],
        "outputs": sorted(os.path.basename(p) for p in outputs),
        "results": results,
    }
    return report.write_summary(_path(args, "summary.json"), tree)


# -- budget -------------------------------------------------------------

def cmd_budget(args, parser) -> int:
    files = _resolve_scenarios(args, parser, defaults=DISTANCE_PRESETS)
    scenarios = [sf.scenario for sf in files]
    csv_path = report.write_budget_csv(_path(args, "budget.csv"), scenarios)
    rows = [report.budget_row(s) for s in scenarios]
    results = {"rows": {s.label or f"row{i}": r
                        for i, (s, r) in enumerate(zip(scenarios, rows))}}
    fiber = [(r["eta"], r["p_ent"]) for r in rows if r["loss_db"] > 0]
    if len(fiber) >= 2:
        fit = scaling_fit(fiber)
        scaling = {"slope": fit.slope, "intercept": fit.intercept}
        try:
            scaling["plob_crossing_eta"] = plob_crossing(fit)
        except HeraldLinkError:
            scaling["plob_crossing_eta"] = None
        results["scaling"] = scaling
    summary_path = _summary(args, "budget", files, [csv_path], results)
    for s, r in zip(scenarios, rows):
        print(f"{s.label or s.link.distance_km}: loss {r['loss_db']:.1f} dB  "
              f"p_ent {r['p_ent']:.3e}  snr ({r['snr_d1']:.1f}, {r['snr_d2']:.1f})")
    if "scaling" in results:
        sc = results["scaling"]
        eta = sc["plob_crossing_eta"]
        crossing = f"{eta:.3e}" if eta else "none"
        print(f"scaling slope {sc['slope']:.3f}, capacity-bound crossing at "
              f"eta {crossing}")
    print(f"wrote {csv_path} and {summary_path}")
    return 0


# -- lock ---------------------------------------------------------------

def cmd_lock(args, parser) -> int:
    sf = _resolve_scenarios(args, parser)[0]
    sc = sf.scenario
    if sc.lock is None:
        raise HeraldLinkError(
            f"scenario {sc.label or sf.path!r} has no [lock] configuration")
    traj = simulate_lock(sc.lock, _LOCK_BAND, _lock_geometry(sc.link.distance_km),
                         sc.lock_duration_s, seed=sc.seed)
    csv_path = report.write_trajectory_csv(_path(args, "trajectory.csv"), traj)
    rms_deg = math.degrees(traj.residual_rms)
    v_p = visibility_from_phase(traj)
    results = {
        "duration_s": sc.lock_duration_s,
        "n_samples": int(traj.t.size),
        "residual_rms_rad": traj.residual_rms,
        "residual_rms_deg": rms_deg,
        "v_p": v_p,
        "relock_count": traj.relock_count,
        "locked_fraction": float(np.mean(traj.locked)),
    }
    summary_path = _summary(args, "lock", [sf], [csv_path], results)
    print(f"{sc.label}: residual rms {rms_deg:.2f} deg over "
          f"{results['locked_fraction']:.1%} locked samples, "
          f"V_P {v_p:.4f}, {traj.relock_count} relocks")
    print(f"wrote {csv_path} and {summary_path}")
    return 0


# -- simulate -----------------------------------------------------------

def cmd_simulate(args, parser) -> int:
    sf = _resolve_scenarios(args, parser)[0]
    sc = sf.scenario
    n_trials = args.trials if args.trials else 1_000_000
    tally = herald_tally(sc, n_trials)
    stats = herald_stats(sc.link)
    se = math.sqrt(max(tally.p_ent * (1.0 - tally.p_ent), 1e-300) / n_trials)
    fringe = run_fringe_scan(sc)
    csv_path = report.write_fringe_csv(_path(args, "fringe.csv"), fringe)
    outputs = [csv_path]
    fits = {}
    for det in fringe.detectors:
        fit = fringe.visibility(det)
        fits[det] = {"visibility": fit.visibility,
                     "visibility_sigma": fit.visibility_sigma,
                     "phase": fit.phase}
    if args.records:
        cols = collect_heralded(sc, min(sc.n_trials_per_theta, 20000))
        outputs.append(report.stream_trial_records(
            _path(args, "records.jsonl"), _ArrayRecords(cols)))
    results = {
        "n_trials": n_trials,
        "tally": {k: getattr(tally, k) for k in
                  ("click_d1", "click_d2", "signal_d1", "signal_d2",
                   "noise_d1", "noise_d2", "excl_d1", "excl_d2", "double")},
        "p_ent_mc": tally.p_ent,
        "p_ent_mc_se": se,
        "p_ent_analytic": stats.p_ent,
        "p_ent_z": (tally.p_ent - stats.p_ent) / se if se > 0 else 0.0,
        "snr_mc": {"D1": tally.snr("D1"), "D2": tally.snr("D2")},
        "fringe": fits,
    }
    summary_path = _summary(args, "simulate", [sf], outputs, results)
    print(f"{sc.label}: p_ent {tally.p_ent:.4e} (analytic {stats.p_ent:.4e}, "
          f"{results['p_ent_z']:+.2f} se) over {n_trials} trials")
    for det, f in fits.items():
        print(f"  {det} fringe visibility {f['visibility']:.4f} "
              f"+/- {f['visibility_sigma']:.4f}")
    print(f"wrote {', '.join(os.path.basename(p) for p in outputs)} "
          f"and {summary_path}")
    return 0


# -- hom ----------------------------------------------------------------

def cmd_hom(args, parser) -> int:
    from .protocol import hom_experiment
    sf = _resolve_scenarios(args, parser)[0]
    sc = sf.scenario
    zetas = [round(float(z), 6) for z in np.geomspace(0.25, 4.0, 13)]
    rows = [(z, hom_experiment(sc, z)) for z in zetas]
    csv_path = report.write_csv(_path(args, "hom.csv"), ("zeta", "g2_hom"), rows)
    g2_balanced = hom_experiment(sc, 1.0)
    inversion = analysis.hom_indistinguishability(2.0, 2.0, g2_balanced, 1.0)
    results = {
        "eta_wo": sc.eta_wo,
        "g2_hom_balanced": g2_balanced,
        "eta_inverted": inversion.eta,
        "curve": [{"zeta": z, "g2_hom": g} for z, g in rows],
    }
    summary_path = _summary(args, "hom", [sf], [csv_path], results)
    print(f"overlap eta_wo {sc.eta_wo}: g2_hom(zeta=1) = {g2_balanced:.5f}, "
          f"inversion returns eta {inversion.eta:.4f}")
    print(f"wrote {csv_path} and {summary_path}")
    return 0


# -- fit ----------------------------------------------------------------

def synth_envelope_scan(seed: int):
    """The documented synthetic peak-to-peak scan: an air delay line swept
    over half a meter under the bundled band offset, one percent noise."""
    band = DualBandParams(nu0_hz=195e12, delta_nu_hz=ENVELOPE_SCAN_DELTA_NU_HZ,
                          n0=1.0, delta_n=0.0)
    rng = np.random.default_rng(seed)
    dl = np.linspace(0.0, ENVELOPE_SCAN_SPAN_M, ENVELOPE_SCAN_POINTS)
    p2p = envelope_peak_to_peak(band, dl)
    p2p = p2p * (1.0 + ENVELOPE_SCAN_NOISE * rng.standard_normal(dl.size))
    return list(zip(dl, p2p))


def drift_coefficients() -> tuple:
    """Single-band residual-phase drift in rad/K for the two bench paths."""
    b = reference.DRIFT_BENCH
    g = InterferometerGeometry(l1_m=1.0, l2_m=1.0,
                               k_ro=b["k_ro_minus_k_lo"],
                               k_wo=b["k_wo_minus_k_lo"], k_lo=0.0)
    per_k = lambda length: thermal_drift(length, 1.0, b["expansion_per_k"])
    readout = single_band_residual(g, per_k(b["l_ro_m"]), 0.0)
    writeout = single_band_residual(g, 0.0, per_k(b["l_wo_m"]))
    return readout, writeout


def fit_reference_kappa() -> tuple:
    """One-constant fit of the herald-SNR visibility factor over the
    bundled cells; returns (kappa, worst absolute cell deviation)."""
    pairs = [(ref.value, reference.V_SNR[det][km])
             for det, km, ref in reference.snr_cells()]
    kappa = analysis.fit_kappa(pairs)
    dev = max(abs(analysis.v_snr(snr, kappa) - v) for snr, v in pairs)
    return kappa, dev


def cmd_fit(args, parser) -> int:
    seed = args.seed if args.seed is not None else 0
    kappa, kappa_dev = fit_reference_kappa()
    env = envelope_fit(synth_envelope_scan(seed))
    readout, writeout = drift_coefficients()
    rows = [
        ("kappa", kappa),
        ("kappa_worst_cell_dev", kappa_dev),
        ("envelope_delta_k_per_cm", env.delta_k / 100.0),
        ("envelope_delta_nu_hz", env.delta_nu_hz),
        ("drift_readout_rad_per_k", readout),
        ("drift_writeout_100km_rad_per_k", writeout),
    ]
    csv_path = report.write_csv(_path(args, "fit.csv"), ("quantity", "value"),
                                rows)
    results = {name: value for name, value in rows}
    results["envelope"] = {"amplitude": env.amplitude, "phase": env.phase,
                           "rms_residual": env.rms_residual, "seed": seed}
    summary_path = _summary(args, "fit", [], [csv_path], results)
    for name, value in rows:
        print(f"{name} = {value:.6g}")
    print(f"wrote {csv_path} and {summary_path}")
    return 0


# -- campaign -----------------------------------------------------------

def cmd_campaign(args, parser) -> int:
    files = _resolve_scenarios(args, parser, defaults=DISTANCE_PRESETS)
    if args.trials:
        files = [replace(sf, scenario=replace(sf.scenario,
                                              n_trials_per_theta=args.trials))
                 for sf in files]
    rows = run_campaign([sf.scenario for sf in files])
    csv_path = report.write_campaign_csv(_path(args, "campaign.csv"), rows)
    results = {"rows": [dict(zip(report.CAMPAIGN_COLUMNS,
                                 report.campaign_row_values(r)))
                        for r in rows]}
    summary_path = _summary(args, "campaign", files, [csv_path], results)
    for r in rows:
        print(f"{r.label}: p_ent {r.p_ent:.3e}  "
              f"V ({r.v_d1:.3f}, {r.v_d2:.3f})  "
              f"C ({r.c_d1:.4f}+/-{r.c_d1_sigma:.4f}, "
              f"{r.c_d2:.4f}+/-{r.c_d2_sigma:.4f})")
    print(f"wrote {csv_path} and {summary_path}")
    return 0


# -- compare ------------------------------------------------------------

class _Checks:
    def __init__(self, scale: float):
        self.scale = scale
        self.rows = []

    def add(self, table, cell, expected, tol, actual):
        tol = tol * self.scale
        if actual is None or not math.isfinite(actual):
            status = "fail"
        else:
            status = "pass" if abs(actual - expected) <= tol else "fail"
        self.rows.append({"table": table, "cell": cell, "expected": expected,
                          "tolerance": tol, "actual": actual,
                          "status": status})

    @property
    def n_failed(self) -> int:
        return sum(r["status"] == "fail" for r in self.rows)


def _compare_deterministic(checks: _Checks, seed: int):
    R = reference

    v_h = analysis.v_high_order(0.06, 0.25)
    checks.add("factors", "v_high_order(0.06,0.25)", R.V_HIGH_ORDER,
               1e-3 * R.V_HIGH_ORDER, v_h)

    kappa, _ = fit_reference_kappa()
    checks.add("snr-visibility", "kappa", 0.24, 0.005, kappa)
    for det, km, ref in R.snr_cells():
        checks.add("snr-visibility", f"{det}@{km:g}km", R.V_SNR[det][km],
                   R.V_SNR_ABS_TOL, analysis.v_snr(ref.value, kappa))

    for det, km, ref in R.v_theory_cells():
        budget = analysis.visibility_budget(
            snr=R.SNR[det][km].value, kappa=kappa,
            dt_s=R.MISMATCH_NS[km] * 1e-9, tau_s=analysis.DEFAULT_TAU_S,
            eta_wo=0.9475, eta_ro=0.9195, chi=0.06, eta_r=0.25,
            v_p=R.V_PHASE[km].value)
        checks.add("visibility", f"v_theory {det}@{km:g}km", ref.value,
                   ref.sigma, budget.v_theory)

    env = envelope_fit(synth_envelope_scan(seed))
    checks.add("envelope", "delta_k_per_cm", R.ENVELOPE_DELTA_K_PER_CM,
               0.02 * R.ENVELOPE_DELTA_K_PER_CM, env.delta_k / 100.0)
    checks.add("envelope", "delta_nu_hz", R.ENVELOPE_DELTA_NU.value,
               R.ENVELOPE_DELTA_NU.sigma, env.delta_nu_hz)

    readout, writeout = drift_coefficients()
    checks.add("drift", "readout_rad_per_k", R.DRIFT_READOUT_RAD_PER_K,
               5e-5, readout)
    checks.add("drift", "writeout_100km_rad_per_k",
               R.DRIFT_WRITEOUT_100KM_RAD_PER_K, 0.01, writeout)

    points = [(10.0 ** (-R.FIBER_LOSS_DB[km] / 10.0),
               R.ENTANGLING_PROBABILITY[km]) for km in R.FIBER_DISTANCES_KM]
    fit = scaling_fit(points)
    checks.add("scaling", "slope", R.SCALING_SLOPE.value,
               R.SCALING_SLOPE.sigma, fit.slope)
    lo, hi = R.PLOB_CROSSING_LOG10_WINDOW
    try:
        crossing = math.log10(plob_crossing(fit))
    except HeraldLinkError:
        crossing = None
    checks.add("scaling", "plob_crossing_log10", 0.5 * (lo + hi),
               0.5 * (hi - lo), crossing)


def _compare_presets(checks: _Checks):
    R = reference
    for name in DISTANCE_PRESETS:
        sc = from_preset(name).scenario
        km = sc.link.distance_km
        stats = herald_stats(sc.link)
        checks.add("herald", f"p_ent@{name}", R.ENTANGLING_PROBABILITY[km],
                   R.ENTANGLING_PROBABILITY_REL_TOL
                   * R.ENTANGLING_PROBABILITY[km], stats.p_ent)
        traj = simulate_lock(sc.lock, _LOCK_BAND, _lock_geometry(km),
                             sc.lock_duration_s, seed=sc.seed)
        ref = R.V_PHASE[km]
        checks.add("lock", f"v_p@{name}", ref.value, ref.sigma,
                   visibility_from_phase(traj))
        checks.add("lock", f"residual_rms_deg@{name}", 7.0, 2.0,
                   math.degrees(traj.residual_rms))


def _compare_campaign_csv(checks: _Checks, path: str):
    import csv as csvmod
    R = reference
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csvmod.DictReader(fh))
    for row in rows:
        km = _LABEL_TO_KM.get(row.get("label", ""))
        if km is None:
            continue
        p_ref = R.ENTANGLING_PROBABILITY[km]
        checks.add("campaign", f"p_ent@{row['label']}", p_ref,
                   R.ENTANGLING_PROBABILITY_REL_TOL * p_ref,
                   float(row["p_ent"]))
        if km not in R.CONCURRENCE_CHECK_KM:
            continue
        for det, col in (("D1", "c_d1"), ("D2", "c_d2")):
            ref = R.CONCURRENCE[det][km]
            mc_sigma = float(row[col + "_sigma"])
            tol = 2.0 * math.hypot(ref.sigma, mc_sigma)
            checks.add("campaign", f"concurrence {det}@{row['label']}",
                       ref.value, tol, float(row[col]))


def cmd_compare(args, parser) -> int:
    seed = args.seed if args.seed is not None else 0
    checks = _Checks(args.tolerance_scale)
    _compare_deterministic(checks, seed)
    _compare_presets(checks)
    campaign_csv = _path(args, "campaign.csv")
    campaign_found = os.path.exists(campaign_csv)
    if campaign_found:
        _compare_campaign_csv(checks, campaign_csv)
    csv_path = report.write_csv(
        _path(args, "compare.csv"), report.COMPARE_COLUMNS,
        [[r[c] for c in report.COMPARE_COLUMNS] for r in checks.rows])
    results = {
        "n_checks": len(checks.rows),
        "n_failed": checks.n_failed,
        "tolerance_scale": args.tolerance_scale,
        "campaign_csv_checked": campaign_found,
        "rows": checks.rows,
    }
    summary_path = _summary(args, "compare", [], [csv_path], results)
    for r in checks.rows:
        if r["status"] == "fail":
            actual = r["actual"]
            shown = f"{actual:.6g}" if actual is not None else "missing"
            print(f"FAIL {r['table']}/{r['cell']}: expected "
                  f"{r['expected']:.6g} +/- {r['tolerance']:.2g}, got {shown}")
    print(f"{len(checks.rows) - checks.n_failed}/{len(checks.rows)} "
          f"checks passed"
          + ("" if campaign_found else " (no campaign.csv in the output "
             "directory, Monte Carlo cells skipped)"))
    print(f"wrote {csv_path} and {summary_path}")
    return 1 if checks.n_failed else 0


# -- parser -------------------------------------------------------------

def _add_scenario_flags(p, trials=False):
    p.add_argument("--scenario", metavar="FILE", help="scenario file")
    p.add_argument("--preset", metavar="NAME",
                   help=f"bundled preset: {', '.join(list_presets())}")
    p.add_argument("--seed", type=lambda s: int(s, 0), default=None,
                   help="override the scenario seed")
    if trials:
        p.add_argument("--trials", type=int, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="heraldlink",
        description="Heralded two-memory entanglement over fiber: link "
                    "budgets, Monte Carlo trials, stabilization, analysis.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_text, scenario=True, trials=False):
        p = sub.add_parser(name, help=help_text)
        if scenario:
            _add_scenario_flags(p, trials=trials)
        p.add_argument("--out", metavar="DIR",
                       help="output directory (default: "
                            f"${ENV_OUTPUT_DIR} or {DEFAULT_OUTPUT_DIR})")
        p.set_defaults(func=func)
        return p

    add("budget", cmd_budget,
        "closed-form herald budget (defaults to the six distance presets)",
        trials=False)
    add("lock", cmd_lock, "simulate the phase stabilization loop")
    p = add("simulate", cmd_simulate,
            "Monte Carlo herald tally and fringe scan", trials=True)
    p.add_argument("--records", action="store_true",
                   help="also stream heralded trial records (JSON lines)")
    add("hom", cmd_hom, "two-source bunching correlation scan")
    p = add("fit", cmd_fit,
            "calibration fits over the bundled record", scenario=False)
    p.add_argument("--seed", type=lambda s: int(s, 0), default=None,
                   help="noise seed for the synthetic envelope scan")
    add("campaign", cmd_campaign,
        "full statistics per scenario (defaults to the six distance "
        "presets); --trials sets heralded trials per analyzer phase",
        trials=True)
    p = add("compare", cmd_compare,
            "check outputs against the bundled reference record",
            scenario=False)
    p.add_argument("--seed", type=lambda s: int(s, 0), default=None,
                   help="noise seed for the synthetic envelope scan")
    p.add_argument("--tolerance-scale", type=float, default=1.0,
                   help="multiply every tolerance by this factor")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args, parser)
    except HeraldLinkError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
