//! Monte Carlo tests of the martingale property of a candidate process `X` in
//! an enlarged filtration: `E[(X_t - X_s) H_s] = 0` for bounded `H_s`
//! measurable at time `s`.
//!
//! Paths are processed in fixed-size chunks whose partial sums are merged in
//! chunk order, so results do not depend on the number of threads.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::erf::{erfc, erfc_inv};

use crate::error::{Error, Result};
use crate::paths::{EnlargementData, GridPath, TimeGrid};

/// Smallest sample on which a statistic is reported.
pub const MIN_PATHS: usize = 100;

const CHUNK: usize = 256;

/// What a test functional is allowed to look at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InfoClass {
    /// Only the observed path up to `s`.
    Base,
    /// Also the random variables generating the enlargement.
    Enlarged,
}

/// Inputs of a functional evaluated at time `s`.
pub struct FunctionalInput<'a> {
    pub observed: &'a GridPath,
    pub s_index: usize,
    pub s: f64,
    pub data: &'a EnlargementData,
}

type Eval = dyn Fn(&FunctionalInput<'_>) -> f64 + Send + Sync;

/// A bounded (`|H| <= 1`) functional `H_s`.
#[derive(Clone)]
pub struct TestFunctional {
    id: String,
    class: InfoClass,
    eval: Arc<Eval>,
}

impl fmt::Debug for TestFunctional {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TestFunctional").field("id", &self.id).field("class", &self.class).finish()
    }
}

impl TestFunctional {
    pub fn new(
        id: impl Into<String>,
        class: InfoClass,
        eval: impl Fn(&FunctionalInput<'_>) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self { id: id.into(), class, eval: Arc::new(eval) }
    }

    pub fn constant() -> Self {
        Self::new("1", InfoClass::Base, |_| 1.0)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn class(&self) -> InfoClass {
        self.class
    }

    pub fn evaluate(&self, input: &FunctionalInput<'_>) -> Result<f64> {
        let v = (self.eval)(input);
        if !(v.abs() <= 1.0 + 1e-12) {
            return Err(Error::Precondition(format!(
                "functional `{}` returned {v} at s = {}, outside [-1, 1]",
                self.id, input.s
            )));
        }
        Ok(v)
    }
}

/// One simulated path as seen by the tests.
#[derive(Debug, Clone)]
pub struct PathRecord {
    /// The process whose martingale property is tested.
    pub candidate: GridPath,
    /// The underlying observed process the functionals read.
    pub observed: GridPath,
    pub data: EnlargementData,
}

/// Indexed collection of path records, possibly generated on demand.
pub trait PathSource: Sync {
    fn len(&self) -> usize;
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
    fn grid(&self) -> TimeGrid;
    fn visit(&self, index: usize, f: &mut dyn FnMut(&PathRecord) -> Result<()>) -> Result<()>;
}

impl PathSource for [PathRecord] {
    fn len(&self) -> usize {
        <[PathRecord]>::len(self)
    }

    fn grid(&self) -> TimeGrid {
        self[0].candidate.grid()
    }

    fn visit(&self, index: usize, f: &mut dyn FnMut(&PathRecord) -> Result<()>) -> Result<()> {
        f(&self[index])
    }
}

/// Paths produced by a generator, one at a time, so large ensembles never sit
/// in memory.
pub struct GeneratedPaths<F> {
    grid: TimeGrid,
    n: usize,
    generate: F,
}

impl<F> GeneratedPaths<F>
where
    F: Fn(usize) -> Result<PathRecord> + Sync,
{
    pub fn new(grid: TimeGrid, n: usize, generate: F) -> Self {
        Self { grid, n, generate }
    }
}

impl<F> PathSource for GeneratedPaths<F>
where
    F: Fn(usize) -> Result<PathRecord> + Sync,
{
    fn len(&self) -> usize {
        self.n
    }

    fn grid(&self) -> TimeGrid {
        self.grid
    }

    fn visit(&self, index: usize, f: &mut dyn FnMut(&PathRecord) -> Result<()>) -> Result<()> {
        f(&(self.generate)(index)?)
    }
}

/// Running mean and sum of squared deviations, mergeable across chunks.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Accumulator {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Accumulator {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn merge(&mut self, other: &Accumulator) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *other;
            return;
        }
        let n = self.n + other.n;
        let d = other.mean - self.mean;
        self.mean += d * other.n as f64 / n as f64;
        self.m2 += other.m2 + d * d * (self.n as f64) * (other.n as f64) / n as f64;
        self.n = n;
    }

    pub fn count(&self) -> usize {
        self.n as usize
    }

    pub fn stat(&self) -> Result<IncrementStat> {
        let n = self.n as usize;
        if n < MIN_PATHS {
            return Err(Error::InsufficientSample { needed: MIN_PATHS, got: n });
        }
        if !(self.mean.is_finite() && self.m2.is_finite()) {
            return Err(Error::NonFinite(format!("sample mean {:e} and sum of squares {:e} over {n} paths", self.mean, self.m2)));
        }
        let var = self.m2 / (n as f64 - 1.0);
        let stderr = (var / n as f64).sqrt();
        let z = if stderr > 0.0 {
            self.mean / stderr
        } else if self.mean == 0.0 {
            0.0
        } else {
            f64::INFINITY.copysign(self.mean)
        };
        Ok(IncrementStat { mean: self.mean, stderr, z, n_paths: n })
    }
}

/// Sample mean of a statistic with its standard error and z-score.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IncrementStat {
    pub mean: f64,
    pub stderr: f64,
    pub z: f64,
    pub n_paths: usize,
}

/// Multiple-testing adjustment of the per-entry threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Correction {
    None,
    #[default]
    Bonferroni,
}

/// Per-entry two-sided z threshold that keeps the family-wise error of `m`
/// tests at the two-sided level of `nominal_z`.
pub fn bonferroni_threshold(nominal_z: f64, m: usize) -> f64 {
    if m <= 1 {
        return nominal_z;
    }
    let alpha = erfc(nominal_z / std::f64::consts::SQRT_2);
    std::f64::consts::SQRT_2 * erfc_inv(alpha / m as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteEntry {
    pub s: f64,
    pub t: f64,
    pub functional: String,
    pub class: InfoClass,
    pub stat: IncrementStat,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MartingaleTestReport {
    pub entries: Vec<SuiteEntry>,
    pub nominal_threshold: f64,
    pub per_entry_threshold: f64,
    pub correction: Correction,
    pub pass: bool,
    /// Set when there was nothing to test.
    pub vacuous: bool,
}

impl MartingaleTestReport {
    pub fn max_abs_z(&self) -> f64 {
        self.entries.iter().map(|e| e.stat.z.abs()).fold(0.0, f64::max)
    }

    /// Re-judges every entry against a new per-entry threshold, as when
    /// several suites share one family-wise correction.
    pub fn rethreshold(&mut self, per_entry: f64) {
        self.per_entry_threshold = per_entry;
        for e in &mut self.entries {
            e.pass = e.stat.z.abs() <= per_entry;
        }
        self.pass = self.entries.iter().all(|e| e.pass);
    }
}

/// Applies one family-wise correction across several suites.
pub fn correct_jointly(suites: &mut [&mut MartingaleTestReport], nominal: f64, correction: Correction) -> f64 {
    let m: usize = suites.iter().map(|s| s.entries.len()).sum();
    let per_entry = match correction {
        Correction::None => nominal,
        Correction::Bonferroni => bonferroni_threshold(nominal, m),
    };
    for s in suites.iter_mut() {
        s.nominal_threshold = nominal;
        s.correction = correction;
        s.rethreshold(per_entry);
    }
    per_entry
}

fn checkpoint_indices(grid: TimeGrid, checkpoints: &[f64]) -> Result<Vec<usize>> {
    let mut idx = checkpoints
        .iter()
        .map(|&t| {
            grid.index_of(t).ok_or_else(|| Error::Precondition(format!("checkpoint {t} is not a grid time")))
        })
        .collect::<Result<Vec<_>>>()?;
    idx.sort_unstable();
    idx.dedup();
    Ok(idx)
}

/// Runs `per_path` over every path in chunks and merges the per-entry
/// accumulators in chunk order.
fn accumulate<S: PathSource + ?Sized>(
    source: &S,
    entries: usize,
    per_path: &(dyn Fn(&PathRecord, &mut [Accumulator]) -> Result<()> + Sync),
) -> Result<Vec<Accumulator>> {
    let n = source.len();
    let chunks = n.div_ceil(CHUNK);
    let partial = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut acc = vec![Accumulator::default(); entries];
            for i in c * CHUNK..((c + 1) * CHUNK).min(n) {
                source.visit(i, &mut |rec| per_path(rec, &mut acc))?;
            }
            Ok(acc)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut total = vec![Accumulator::default(); entries];
    for acc in &partial {
        for (t, a) in total.iter_mut().zip(acc) {
            t.merge(a);
        }
    }
    Ok(total)
}

/// Mean of `(X_t - X_s) H_s` across paths, with its standard error.
pub fn conditional_increment_stat<S: PathSource + ?Sized>(
    source: &S,
    functional: &TestFunctional,
    s: f64,
    t: f64,
) -> Result<IncrementStat> {
    if !(s < t) {
        return Err(Error::Precondition(format!("need s < t, got s = {s}, t = {t}")));
    }
    let report = martingale_suite(source, std::slice::from_ref(functional), &[s, t], f64::INFINITY, Correction::None)?;
    Ok(report.entries[0].stat)
}

/// Tests `E[(X_t - X_s) H_s] = 0` for every checkpoint pair `s < t` and every
/// functional. The suite passes when every `|z|` is within the per-entry
/// threshold.
pub fn martingale_suite<S: PathSource + ?Sized>(
    source: &S,
    family: &[TestFunctional],
    checkpoints: &[f64],
    threshold: f64,
    correction: Correction,
) -> Result<MartingaleTestReport> {
    let grid = source.grid();
    let idx = checkpoint_indices(grid, checkpoints)?;
    let pairs: Vec<(usize, usize)> =
        (0..idx.len()).flat_map(|a| (a + 1..idx.len()).map(move |b| (a, b))).collect();
    let m = pairs.len() * family.len();
    if m == 0 {
        return Ok(MartingaleTestReport {
            entries: Vec::new(),
            nominal_threshold: threshold,
            per_entry_threshold: threshold,
            correction,
            pass: true,
            vacuous: true,
        });
    }
    if source.len() < MIN_PATHS {
        return Err(Error::InsufficientSample { needed: MIN_PATHS, got: source.len() });
    }
    let per_entry = match correction {
        Correction::None => threshold,
        Correction::Bonferroni => bonferroni_threshold(threshold, m),
    };

    let totals = accumulate(source, m, &|rec, acc| {
        let x = &rec.candidate;
        let mut h = vec![0.0; family.len()];
        let mut e = 0;
        let mut current_s = usize::MAX;
        for &(a, b) in &pairs {
            if a != current_s {
                current_s = a;
                let input =
                    FunctionalInput { observed: &rec.observed, s_index: idx[a], s: grid.time(idx[a]), data: &rec.data };
                for (slot, f) in h.iter_mut().zip(family) {
                    *slot = f.evaluate(&input)?;
                }
            }
            let inc = x.value(idx[b]) - x.value(idx[a]);
            for hv in &h {
                acc[e].push(inc * hv);
                e += 1;
            }
        }
        Ok(())
    })?;

    let mut entries = Vec::with_capacity(m);
    let mut e = 0;
    for &(a, b) in &pairs {
        for f in family {
            let stat = totals[e].stat()?;
            entries.push(SuiteEntry {
                s: grid.time(idx[a]),
                t: grid.time(idx[b]),
                functional: f.id().to_string(),
                class: f.class(),
                stat,
                pass: stat.z.abs() <= per_entry,
            });
            e += 1;
        }
    }
    let pass = entries.iter().all(|e| e.pass);
    Ok(MartingaleTestReport {
        entries,
        nominal_threshold: threshold,
        per_entry_threshold: per_entry,
        correction,
        pass,
        vacuous: false,
    })
}

/// Tests `E[X_t] = 0` at each checkpoint, one entry per time with functional
/// id `level` and `s = t`.
pub fn level_suite<S: PathSource + ?Sized>(
    source: &S,
    checkpoints: &[f64],
    threshold: f64,
    correction: Correction,
) -> Result<MartingaleTestReport> {
    let grid = source.grid();
    let idx = checkpoint_indices(grid, checkpoints)?;
    if source.len() < MIN_PATHS {
        return Err(Error::InsufficientSample { needed: MIN_PATHS, got: source.len() });
    }
    let per_entry = match correction {
        Correction::None => threshold,
        Correction::Bonferroni => bonferroni_threshold(threshold, idx.len()),
    };
    let totals = accumulate(source, idx.len(), &|rec, acc| {
        for (a, &k) in acc.iter_mut().zip(&idx) {
            a.push(rec.candidate.value(k));
        }
        Ok(())
    })?;
    let entries = idx
        .iter()
        .zip(&totals)
        .map(|(&k, acc)| {
            let stat = acc.stat()?;
            Ok(SuiteEntry {
                s: grid.time(k),
                t: grid.time(k),
                functional: "level".into(),
                class: InfoClass::Base,
                stat,
                pass: stat.z.abs() <= per_entry,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let pass = entries.iter().all(|e| e.pass);
    Ok(MartingaleTestReport {
        vacuous: entries.is_empty(),
        entries,
        nominal_threshold: threshold,
        per_entry_threshold: per_entry,
        correction,
        pass,
    })
}

/// One observation for [`drift_regression`]: the state at `t`, the realized
/// rate `(X_{t+h} - X_t)/h`, and the drift rate predicted at `t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegressionSample {
    pub state: f64,
    pub observed_rate: f64,
    pub predicted_rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegressionBin {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
    pub observed: f64,
    pub stderr: f64,
    pub predicted: f64,
    /// `None` for bins with fewer than two samples.
    pub z: Option<f64>,
}

/// Compares binned realized rates with the predicted drift rates over
/// equal-width state bins.
pub fn drift_regression(samples: &[RegressionSample], n_bins: usize) -> Result<Vec<RegressionBin>> {
    if samples.is_empty() || n_bins == 0 {
        return Err(Error::Precondition("need samples and at least one bin".into()));
    }
    let lo = samples.iter().map(|s| s.state).fold(f64::INFINITY, f64::min);
    let hi = samples.iter().map(|s| s.state).fold(f64::NEG_INFINITY, f64::max);
    let width = if hi > lo { (hi - lo) / n_bins as f64 } else { 1.0 };
    let mut obs = vec![Accumulator::default(); n_bins];
    let mut pred = vec![0.0; n_bins];
    for s in samples {
        let b = (((s.state - lo) / width) as usize).min(n_bins - 1);
        obs[b].push(s.observed_rate);
        pred[b] += s.predicted_rate;
    }
    Ok((0..n_bins)
        .map(|b| {
            let n = obs[b].count();
            let predicted = if n > 0 { pred[b] / n as f64 } else { f64::NAN };
            let (observed, stderr, z) = if n >= 2 {
                let se = (obs[b].m2 / (n as f64 - 1.0) / n as f64).sqrt();
                let diff = obs[b].mean - predicted;
                let z = if se > 0.0 { diff / se } else if diff == 0.0 { 0.0 } else { f64::INFINITY };
                (obs[b].mean, se, Some(z))
            } else {
                (if n == 1 { obs[b].mean } else { f64::NAN }, f64::NAN, None)
            };
            RegressionBin {
                lo: lo + b as f64 * width,
                hi: lo + (b + 1) as f64 * width,
                n,
                observed,
                stderr,
                predicted,
                z,
            }
        })
        .collect())
}

/// Least-squares slope of the realized rate on the state, with its standard
/// error.
pub fn regression_slope(samples: &[RegressionSample]) -> Result<(f64, f64)> {
    let n = samples.len();
    if n < 3 {
        return Err(Error::InsufficientSample { needed: 3, got: n });
    }
    let nf = n as f64;
    let mx = samples.iter().map(|s| s.state).sum::<f64>() / nf;
    let my = samples.iter().map(|s| s.observed_rate).sum::<f64>() / nf;
    let sxx: f64 = samples.iter().map(|s| (s.state - mx).powi(2)).sum();
    let sxy: f64 = samples.iter().map(|s| (s.state - mx) * (s.observed_rate - my)).sum();
    if sxx == 0.0 {
        return Err(Error::Precondition("states do not vary".into()));
    }
    let slope = sxy / sxx;
    let rss: f64 = samples.iter().map(|s| (s.observed_rate - my - slope * (s.state - mx)).powi(2)).sum();
    Ok((slope, (rss / (nf - 2.0) / sxx).sqrt()))
}

/// Equal-count bin comparing the frequency of an event with its predicted
/// probability.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationBin {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
    pub observed: f64,
    pub predicted: f64,
}

/// Sorts `(state, outcome, predicted probability)` triples by state and
/// splits them into `n_bins` bins of (nearly) equal size.
pub fn calibration_bins(samples: &[(f64, bool, f64)], n_bins: usize) -> Result<Vec<CalibrationBin>> {
    if n_bins == 0 || samples.len() < n_bins {
        return Err(Error::InsufficientSample { needed: n_bins.max(1), got: samples.len() });
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let n = sorted.len();
    Ok((0..n_bins)
        .map(|b| {
            let part = &sorted[b * n / n_bins..(b + 1) * n / n_bins];
            let m = part.len() as f64;
            CalibrationBin {
                lo: part[0].0,
                hi: part[part.len() - 1].0,
                n: part.len(),
                observed: part.iter().filter(|s| s.1).count() as f64 / m,
                predicted: part.iter().map(|s| s.2).sum::<f64>() / m,
            }
        })
        .collect())
}
