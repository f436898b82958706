//! End-to-end scenarios: simulate, build the enlargement data, evaluate the
//! drift, correct, and test the martingale property.
//!
//! Every statistical scenario has a negative control: with `no_correction`
//! the drift is not subtracted and the suite is expected to fail.

use crate::checks::{elementary_integral_suite, gluing_suite, infimum_gluing, union_integral_suite, CheckOutcome};
use crate::config::{ScenarioConfig, ScenarioKind};
use crate::drifts::{
    bridge_drift, emery_after_drift, honest_drift, progressive_drift, supremum_drift,
    future_inf_decomposition, h_complement, AzemaData, SupBracket,
};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::paths::{
    bes3_path, bracket_estimate, bridge_last_crossing, bridge_supremum, brownian_path, future_infimum, path_rng, Bes3Method, EnlargementData, GridPath, InfimumResolution,
    ScaleFunction, Stream, TimeGrid,
};
use crate::report::{Report, ReportRow, Verdict};
use crate::verify::{
    calibration_bins, correct_jointly, level_suite, CalibrationBin, martingale_suite, Correction, GeneratedPaths, InfoClass, MartingaleTestReport,
    PathRecord, TestFunctional,
};

/// Result of one scenario run.
#[derive(Debug, Clone)]
pub struct ScenarioOutcome {
    pub report: Report,
    pub pass: bool,
    /// One-line human-readable verdict.
    pub summary: String,
}

/// Starting point of the Bessel paths.
pub const BES3_START: f64 = 1.0;

pub fn run(cfg: &ScenarioConfig) -> Result<ScenarioOutcome> {
    match cfg.scenario {
        ScenarioKind::Bridge => bridge(cfg),
        ScenarioKind::Supremum => supremum(cfg),
        ScenarioKind::EmeryAfter => emery_after(cfg),
        ScenarioKind::EmeryBefore => emery_before(cfg),
        ScenarioKind::Honest => honest(cfg),
        ScenarioKind::Pitman => pitman(cfg),
        ScenarioKind::GlueDemo => glue_demo(cfg),
        ScenarioKind::ElemintCheck => elemint_check(cfg),
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn indicator(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

/// Grid times nearest to `fractions * horizon`, kept when inside `[0, hi]`.
fn checkpoints(grid: TimeGrid, fractions: &[f64], hi: f64) -> Vec<f64> {
    let mut out: Vec<f64> = fractions
        .iter()
        .map(|f| grid.time(((f * grid.horizon()) / grid.dt()).round() as usize))
        .filter(|&t| t <= hi + 1e-9 * grid.dt())
        .collect();
    out.dedup();
    out
}

/// `1` and `sign(W_s - c)` for `c` in {-0.5, 0, 0.5}.
fn base_family() -> Vec<TestFunctional> {
    let mut fam = vec![TestFunctional::constant()];
    for (id, c) in [("sign(W_s+0.5)", -0.5), ("sign(W_s)", 0.0), ("sign(W_s-0.5)", 0.5)] {
        fam.push(TestFunctional::new(id, InfoClass::Base, move |i| sign(i.observed.value(i.s_index) - c)));
    }
    fam
}

fn family_with(extra: Vec<TestFunctional>) -> Vec<TestFunctional> {
    let mut fam = base_family();
    fam.extend(extra);
    fam
}

fn finish(cfg: &ScenarioConfig, mut subs: Vec<(String, MartingaleTestReport)>) -> ScenarioOutcome {
    let per_entry = {
        let mut refs: Vec<&mut MartingaleTestReport> = subs.iter_mut().map(|(_, r)| r).collect();
        correct_jointly(&mut refs, cfg.threshold, Correction::Bonferroni)
    };
    let mut report = Report::new();
    for (label, suite) in &subs {
        report.push_suite(label, suite);
    }
    let pass = subs.iter().all(|(_, s)| s.pass);
    let entries: usize = subs.iter().map(|(_, s)| s.entries.len()).sum();
    let max_z = subs.iter().map(|(_, s)| s.max_abs_z()).fold(0.0, f64::max);
    let control = if cfg.no_correction { " without drift correction" } else { "" };
    let summary = format!(
        "{}{control}: {} ({entries} entries, {} paths, max |z| = {max_z:.3}, per-entry threshold {per_entry:.3})",
        cfg.scenario,
        if pass { "PASS" } else { "FAIL" },
        cfg.n_paths,
    );
    ScenarioOutcome { report, pass, summary }
}

fn corrected_or_not(
    cfg: &ScenarioConfig,
    drift: &crate::drifts::DriftSeries,
    m: &GridPath,
) -> Result<GridPath> {
    if cfg.no_correction {
        drift.uncorrected(m)
    } else {
        drift.corrected(m)
    }
}

/// Upper end of the windows of the scenarios on `[0, 1]`.
fn upper(cfg: &ScenarioConfig) -> f64 {
    0.9f64.min(1.0 - cfg.delta)
}

fn bridge(cfg: &ScenarioConfig) -> Result<ScenarioOutcome> {
    let grid = cfg.grid();
    let hi = 1.0 - cfg.delta;
    let source = GeneratedPaths::new(grid, cfg.n_paths, |i| {
        let w = brownian_path(grid, cfg.seed, i);
        let w1 = w.terminal();
        let drift = bridge_drift(&w, w1, hi)?;
        let candidate = corrected_or_not(cfg, &drift, &w)?;
        Ok(PathRecord { candidate, observed: w, data: EnlargementData { terminal: Some(w1), ..Default::default() } })
    });
    let fam = family_with(vec![TestFunctional::new("sign(W_1-W_s)", InfoClass::Enlarged, |i| {
        sign(i.data.terminal.unwrap_or(f64::NAN) - i.observed.value(i.s_index))
    })]);
    let cps = checkpoints(grid, &[0.2, 0.4, 0.6, 0.8], hi);
    let suite = martingale_suite(&source, &fam, &cps, cfg.threshold, Correction::None)?;
    Ok(finish(cfg, vec![("bridge".into(), suite)]))
}

fn supremum(cfg: &ScenarioConfig) -> Result<ScenarioOutcome> {
    let grid = cfg.grid();
    let horizon = grid.horizon();
    let source = GeneratedPaths::new(grid, cfg.n_paths, |i| {
        let w = brownian_path(grid, cfg.seed, i);
        // Records of the continuous path: grid maxima alone bias U - W low.
        let mut rng = path_rng(cfg.seed, Stream::FirstPassage, i);
        let (u, next) = bridge_supremum(&w, &mut rng);
        let m_incs: Vec<f64> = (0..grid.steps()).map(|k| (u.value(k) - w.value(k)) * w.increment(k)).collect();
        let m = GridPath::from_increments(grid, 0.0, &m_incs)?;
        let drift = supremum_drift(&u, &w, &next, SupBracket::Instance, cfg.delta, (0.0, horizon))?;
        let candidate = corrected_or_not(cfg, &drift, &m)?;
        Ok(PathRecord {
            candidate,
            observed: w,
            data: EnlargementData { running_sup: Some(u), next_sup_times: Some(next), ..Default::default() },
        })
    });
    let fam = family_with(vec![
        TestFunctional::new("1{T_s-s<=0.1}", InfoClass::Enlarged, |i| {
            let next = i.data.next_sup_times.as_ref().map_or(f64::NAN, |n| n[i.s_index]);
            indicator(next - i.s <= 0.1)
        }),
        TestFunctional::new("min(1,(U_s-W_s)^2/(T_s-s))", InfoClass::Enlarged, |i| {
            let next = i.data.next_sup_times.as_ref().map_or(f64::NAN, |n| n[i.s_index]);
            let u = i.data.running_sup.as_ref().map_or(f64::NAN, |u| u.value(i.s_index));
            let y = u - i.observed.value(i.s_index);
            (y * y / (next - i.s)).min(1.0)
        }),
        TestFunctional::new("tanh(U_T-U_s)", InfoClass::Enlarged, |i| {
            let u = i.data.running_sup.as_ref().expect("running supremum is recorded");
            (u.terminal() - u.value(i.s_index)).tanh()
        }),
    ]);
    let cps = checkpoints(grid, &[0.2, 0.4, 0.6, 0.8], horizon);
    let suite = martingale_suite(&source, &fam, &cps, cfg.threshold, Correction::None)?;
    Ok(finish(cfg, vec![("supremum".into(), suite)]))
}

/// Brownian path with `W_1` and Emery's time `ξ`, the last crossing of
/// `W_1 / 2` by the continuous path.
fn emery_path(cfg: &ScenarioConfig, grid: TimeGrid, i: usize) -> (GridPath, f64, f64) {
    let w = brownian_path(grid, cfg.seed, i);
    let w1 = w.terminal();
    let mut rng = path_rng(cfg.seed, Stream::Crossing, i);
    let xi = bridge_last_crossing(&w, 0.5 * w1, 1.0, &mut rng);
    (w, w1, xi)
}

fn emery_after(cfg: &ScenarioConfig) -> Result<ScenarioOutcome> {
    let grid = cfg.grid();
    let hi = upper(cfg);
    let source = GeneratedPaths::new(grid, cfg.n_paths, |i| {
        let (w, w1, xi) = emery_path(cfg, grid, i);
        let drift = emery_after_drift(&w, w1, xi + cfg.delta, hi)?;
        let candidate = corrected_or_not(cfg, &drift, &w)?;
        Ok(PathRecord {
            candidate,
            observed: w,
            data: EnlargementData { terminal: Some(w1), xi: Some(xi), ..Default::default() },
        })
    });
    let fam = family_with(vec![
        TestFunctional::new("1{xi<=s}", InfoClass::Enlarged, |i| indicator(i.data.xi.unwrap_or(f64::NAN) <= i.s)),
        TestFunctional::new("1{xi<=s}sign(W_1)", InfoClass::Enlarged, |i| {
            indicator(i.data.xi.unwrap_or(f64::NAN) <= i.s) * sign(i.data.terminal.unwrap_or(f64::NAN))
        }),
    ]);
    let cps = checkpoints(grid, &[0.3, 0.5, 0.7, 0.9], hi);
    let suite = martingale_suite(&source, &fam, &cps, cfg.threshold, Correction::None)?;
    Ok(finish(cfg, vec![("emery-after".into(), suite)]))
}

fn emery_before(cfg: &ScenarioConfig) -> Result<ScenarioOutcome> {
    let grid = cfg.grid();
    let hi = upper(cfg);
    let source = GeneratedPaths::new(grid, cfg.n_paths, |i| {
        let (w, w1, xi) = emery_path(cfg, grid, i);
        let az = AzemaData::emery(&w)?;
        let drift = progressive_drift(&az, xi, cfg.delta, hi)?;
        let candidate = corrected_or_not(cfg, &drift, &w)?;
        Ok(PathRecord {
            candidate,
            observed: w,
            data: EnlargementData { terminal: Some(w1), xi: Some(xi), ..Default::default() },
        })
    });
    let fam = family_with(vec![
        TestFunctional::new("1{xi<=s}", InfoClass::Enlarged, |i| indicator(i.data.xi.unwrap_or(f64::NAN) <= i.s)),
        TestFunctional::new("1{xi>s}sign(W_s)", InfoClass::Enlarged, |i| {
            indicator(i.data.xi.unwrap_or(f64::NAN) > i.s) * sign(i.observed.value(i.s_index))
        }),
    ]);
    let cps = checkpoints(grid, &[0.2, 0.4, 0.6, 0.8], hi);
    let suite = martingale_suite(&source, &fam, &cps, cfg.threshold, Correction::None)?;
    Ok(finish(cfg, vec![("emery-before".into(), suite)]))
}

/// The base-filtration suite on plain Brownian paths, where no drift exists:
/// the null calibration of the test itself.
pub fn null_suite(grid: TimeGrid, n_paths: usize, seed: u64, threshold: f64) -> Result<MartingaleTestReport> {
    let source = GeneratedPaths::new(grid, n_paths, |i| {
        let w = brownian_path(grid, seed, i);
        Ok(PathRecord { candidate: w.clone(), observed: w, data: EnlargementData::default() })
    });
    let cps = checkpoints(grid, &[0.2, 0.4, 0.6, 0.8], grid.horizon());
    martingale_suite(&source, &base_family(), &cps, threshold, Correction::Bonferroni)
}

/// Binned check of Emery's Azéma supermartingale at time `t`: the empirical
/// frequency of `t < ξ` against `1 - h(|W_t| / sqrt(1 - t))`, in `n_bins`
/// equal-count bins of the state `|W_t| / sqrt(1 - t)`.
pub fn emery_calibration(cfg: &ScenarioConfig, t: f64, n_bins: usize) -> Result<Vec<CalibrationBin>> {
    let grid = cfg.grid();
    let k = grid.index_of(t).ok_or_else(|| Error::Precondition(format!("{t} is not a grid time")))?;
    let samples: Vec<(f64, bool, f64)> = (0..cfg.n_paths)
        .into_par_iter()
        .map(|i| {
            let (w, _, xi) = emery_path(cfg, grid, i);
            let y = w.value(k).abs() / (1.0 - t).sqrt();
            (y, t < xi, h_complement(y))
        })
        .collect();
    calibration_bins(&samples, n_bins)
}

/// Mean absolute gap between observed and predicted frequencies.
pub fn calibration_error(bins: &[CalibrationBin]) -> f64 {
    bins.iter().map(|b| (b.observed - b.predicted).abs()).sum::<f64>() / bins.len() as f64
}

#[derive(Clone, Copy, PartialEq)]
enum Side {
    Before,
    After,
}

fn honest(cfg: &ScenarioConfig) -> Result<ScenarioOutcome> {
    let grid = cfg.grid();
    let hi = upper(cfg);
    let never = (f64::INFINITY, f64::INFINITY);
    let cps = checkpoints(grid, &[0.2, 0.4, 0.6, 0.8], hi);
    let mut subs = Vec::new();
    for side in [Side::Before, Side::After] {
        let source = GeneratedPaths::new(grid, cfg.n_paths, |i| {
            let w = brownian_path(grid, cfg.seed, i);
            let mut rng = path_rng(cfg.seed, Stream::Crossing, i);
            let g = bridge_last_crossing(&w, 0.0, 1.0, &mut rng);
            let az = AzemaData::last_zero(&w)?;
            let drift = match side {
                Side::Before => honest_drift(&az, (cfg.delta, g.min(hi)), never)?,
                Side::After => honest_drift(&az, never, (g + cfg.delta, hi))?,
            };
            let candidate = corrected_or_not(cfg, &drift, &w)?;
            Ok(PathRecord {
                candidate,
                observed: w,
                data: EnlargementData { last_zero: Some(g), ..Default::default() },
            })
        });
        let (label, extra) = match side {
            Side::Before => (
                "honest/before",
                TestFunctional::new("1{g>s}sign(W_s)", InfoClass::Enlarged, |i| {
                    indicator(i.data.last_zero.unwrap_or(f64::NAN) > i.s) * sign(i.observed.value(i.s_index))
                }),
            ),
            Side::After => (
                "honest/after",
                TestFunctional::new("1{g<=s}sign(W_s)", InfoClass::Enlarged, |i| {
                    indicator(i.data.last_zero.unwrap_or(f64::NAN) <= i.s) * sign(i.observed.value(i.s_index))
                }),
            ),
        };
        let fam = family_with(vec![
            TestFunctional::new("1{g<=s}", InfoClass::Enlarged, |i| {
                indicator(i.data.last_zero.unwrap_or(f64::NAN) <= i.s)
            }),
            extra,
        ]);
        subs.push((label.to_string(), martingale_suite(&source, &fam, &cps, cfg.threshold, Correction::None)?));
    }
    Ok(finish(cfg, subs))
}

/// Level at which the scale-function candidate of the Bessel scenario is
/// stopped.
pub const LOCALIZATION_LEVEL: f64 = 0.25;

/// A Bessel path from [`BES3_START`] with its future infimum, including the
/// exact bridge minima between grid points and the exact post-horizon tail.
pub fn bessel_with_infimum(grid: TimeGrid, seed: u64, i: usize) -> Result<(GridPath, GridPath)> {
    let r = bes3_path(grid, BES3_START, seed, i, Bes3Method::PitmanConstruction)?;
    let mut rng = path_rng(seed, Stream::InfimumBridge, i);
    let inf = future_infimum(&r, &ScaleFunction::Bes3, &mut rng, InfimumResolution::BridgeRefined)?;
    Ok((r, inf))
}

fn pitman(cfg: &ScenarioConfig) -> Result<ScenarioOutcome> {
    let grid = cfg.grid();
    let horizon = grid.horizon();
    // 2I - R; without correction the 2I term is dropped, leaving -R.
    let transform = GeneratedPaths::new(grid, cfg.n_paths, |i| {
        let (r, inf) = bessel_with_infimum(grid, cfg.seed, i)?;
        let candidate = if cfg.no_correction { r.map(|v| -v) } else { inf.zip_with(&r, |a, b| 2.0 * a - b)? };
        Ok(PathRecord {
            candidate,
            observed: r,
            data: EnlargementData { future_inf: Some(inf), ..Default::default() },
        })
    });
    // Halved so the functional stays within [-1, 1]; z-scores are unaffected.
    let fam = vec![
        TestFunctional::constant(),
        TestFunctional::new("min(I_s,2)", InfoClass::Enlarged, |i| {
            i.data.future_inf.as_ref().map_or(f64::NAN, |inf| inf.value(i.s_index).min(2.0)) / 2.0
        }),
    ];
    let level_times: Vec<f64> = (0..=10).map(|k| k as f64 / 10.0).collect();
    let levels = level_suite(&transform, &checkpoints(grid, &level_times, horizon), cfg.threshold, Correction::None)?;
    let cps = checkpoints(grid, &[0.2, 0.4, 0.6, 0.8, 1.0], horizon);
    let suite = martingale_suite(&transform, &fam, &cps, cfg.threshold, Correction::None)?;
    // e(R) is only a local martingale, so it is stopped when R first drops to
    // LOCALIZATION_LEVEL; the stopped process is bounded.
    let scaled = GeneratedPaths::new(grid, cfg.n_paths, |i| {
        let (r, inf) = bessel_with_infimum(grid, cfg.seed, i)?;
        let er = r.map(|v| ScaleFunction::Bes3.eval(v));
        let bracket = bracket_estimate(&er, &er)?;
        let (drift, _) = future_inf_decomposition(&r, &inf, &ScaleFunction::Bes3, &bracket)?;
        let stop = r.values().iter().position(|&v| v <= LOCALIZATION_LEVEL).unwrap_or(grid.len());
        let candidate = corrected_or_not(cfg, &drift.stopped(stop), &er)?;
        Ok(PathRecord {
            candidate,
            observed: r,
            data: EnlargementData { future_inf: Some(inf), ..Default::default() },
        })
    });
    let scale_suite = martingale_suite(&scaled, &fam, &cps, cfg.threshold, Correction::None)?;
    Ok(finish(
        cfg,
        vec![("pitman/level".into(), levels), ("pitman".into(), suite), ("pitman/scale".into(), scale_suite)],
    ))
}

fn check_row(scenario: &str, o: &CheckOutcome, horizon: f64) -> ReportRow {
    ReportRow {
        scenario: scenario.to_string(),
        s: 0.0,
        t: horizon,
        functional: o.name.to_string(),
        mean: o.max_error,
        stderr: f64::NAN,
        z: f64::NAN,
        n_paths: o.cases as u64,
        verdict: if o.pass() { Verdict::Pass } else { Verdict::Fail },
    }
}

fn deterministic_outcome(cfg: &ScenarioConfig, checks: &[CheckOutcome], mut extra: Vec<ReportRow>) -> ScenarioOutcome {
    let mut report = Report::new();
    let horizon = cfg.horizon;
    report.rows.extend(checks.iter().map(|o| check_row(cfg.scenario.name(), o, horizon)));
    report.rows.append(&mut extra);
    let pass = report.rows.iter().all(|r| r.verdict != Verdict::Fail);
    let worst = checks.iter().map(|o| o.max_error).fold(0.0, f64::max);
    let summary = format!(
        "{}: {} ({} checks, max relative error {worst:.3e})",
        cfg.scenario,
        if pass { "PASS" } else { "FAIL" },
        report.rows.len()
    );
    ScenarioOutcome { report, pass, summary }
}

fn elemint_check(cfg: &ScenarioConfig) -> Result<ScenarioOutcome> {
    let mut checks = elementary_integral_suite(cfg.seed, 1000)?;
    checks.push(union_integral_suite(cfg.seed, 500)?);
    Ok(deterministic_outcome(cfg, &checks, Vec::new()))
}

/// Ladder resolution used when comparing the glued compensator with the
/// future infimum.
pub const LADDER_EPS_STEPS: usize = 5;

fn glue_demo(cfg: &ScenarioConfig) -> Result<ScenarioOutcome> {
    let grid = cfg.grid();
    let cases = cfg.n_paths.min(200);
    let checks = vec![gluing_suite(cfg.seed, cases, grid.steps())?];
    let bessel = infimum_gluing(grid, BES3_START, cfg.n_paths.min(100), cfg.seed, LADDER_EPS_STEPS, 0.05)?;
    let n = bessel.len() as f64;
    let rebuild = bessel.iter().map(|b| b.reconstruction_error).fold(0.0, f64::max);
    let mean_rel = bessel.iter().map(|b| b.relative_error).sum::<f64>() / n;
    let sd_rel = (bessel.iter().map(|b| (b.relative_error - mean_rel).powi(2)).sum::<f64>() / (n - 1.0).max(1.0)).sqrt();
    let row = |functional: &str, mean: f64, stderr: f64, verdict: Verdict| ReportRow {
        scenario: cfg.scenario.name().to_string(),
        s: 0.0,
        t: grid.horizon(),
        functional: functional.to_string(),
        mean,
        stderr,
        z: f64::NAN,
        n_paths: bessel.len() as u64,
        verdict,
    };
    let extra = vec![
        row("bessel-reconstruction", rebuild, f64::NAN, if rebuild <= 1e-12 { Verdict::Pass } else { Verdict::Fail }),
        row("ladder-vs-future-infimum", mean_rel, sd_rel / n.sqrt(), Verdict::Info),
    ];
    Ok(deterministic_outcome(cfg, &checks, extra))
}
