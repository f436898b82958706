//! Uniform time grids, simulated paths and the pathwise random times used to
//! enlarge a filtration: running supremum, future infimum, last level
//! crossings and next record times.
//!
//! Randomness is counter-based: every path draws from its own ChaCha8 stream
//! keyed by `(seed, purpose, path index)`, so a path's values do not depend on
//! the number of paths simulated or on thread scheduling.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Open01, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Relative tolerance used when matching times against grid points.
const GRID_TOL: f64 = 1e-9;

/// Uniform grid `0 = t_0 < t_1 < ... < t_n` with step `dt`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    dt: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(dt: f64, steps: usize) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::config("dt", format!("must be positive and finite, got {dt}")));
        }
        Ok(Self { dt, steps })
    }

    /// Grid on `[0, horizon]`; `dt` must divide `horizon`.
    pub fn from_horizon(horizon: f64, dt: f64) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::config("horizon", format!("must be positive and finite, got {horizon}")));
        }
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::config("dt", format!("must be positive and finite, got {dt}")));
        }
        let ratio = horizon / dt;
        let steps = ratio.round();
        if steps < 1.0 || (ratio - steps).abs() > GRID_TOL * steps.max(1.0) {
            return Err(Error::config("dt", format!("{dt} does not divide the horizon {horizon}")));
        }
        Self::new(dt, steps as usize)
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Number of steps `n`.
    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Number of grid points `n + 1`.
    pub fn len(&self) -> usize {
        self.steps + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn horizon(&self) -> f64 {
        self.time(self.steps)
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.len()).map(|k| self.time(k)).collect()
    }

    /// Index of the grid point equal to `t` (up to rounding), if any.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let ratio = t / self.dt;
        let k = ratio.round();
        if k < 0.0 || k > self.steps as f64 || (ratio - k).abs() > GRID_TOL * k.max(1.0) {
            return None;
        }
        Some(k as usize)
    }

    /// Number of whole steps in a duration that must be a multiple of `dt`.
    pub fn steps_in(&self, duration: f64) -> Option<usize> {
        let ratio = duration / self.dt;
        let k = ratio.round();
        if k < 0.0 || (ratio - k).abs() > GRID_TOL * k.max(1.0) {
            return None;
        }
        Some(k as usize)
    }
}

/// Values of a process at the points of a [`TimeGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct GridPath {
    grid: TimeGrid,
    values: Vec<f64>,
}

impl GridPath {
    pub fn new(grid: TimeGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} values for a grid of {} points",
                values.len(),
                grid.len()
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn constant(grid: TimeGrid, value: f64) -> Self {
        Self { grid, values: vec![value; grid.len()] }
    }

    /// Builds a path from its initial value and per-step increments.
    pub fn from_increments(grid: TimeGrid, start: f64, increments: &[f64]) -> Result<Self> {
        if increments.len() != grid.steps() {
            return Err(Error::GridMismatch(format!(
                "{} increments for a grid of {} steps",
                increments.len(),
                grid.steps()
            )));
        }
        let mut values = Vec::with_capacity(grid.len());
        let mut x = start;
        values.push(x);
        for d in increments {
            x += d;
            values.push(x);
        }
        Ok(Self { grid, values })
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn value(&self, k: usize) -> f64 {
        self.values[k]
    }

    pub fn initial(&self) -> f64 {
        self.values[0]
    }

    pub fn terminal(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    /// Value at a time that must be a grid point.
    pub fn at_time(&self, t: f64) -> Option<f64> {
        self.grid.index_of(t).map(|k| self.values[k])
    }

    /// Increment over step `k`, i.e. from `t_k` to `t_{k+1}`.
    pub fn increment(&self, k: usize) -> f64 {
        self.values[k + 1] - self.values[k]
    }

    pub fn increments(&self) -> impl Iterator<Item = f64> + '_ {
        self.values.windows(2).map(|w| w[1] - w[0])
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { grid: self.grid, values: self.values.iter().map(|&v| f(v)).collect() }
    }

    /// Pointwise combination of two paths on the same grid.
    pub fn zip_with(&self, other: &GridPath, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        ensure_same_grid(&self.grid, &other.grid)?;
        let values = self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect();
        Ok(Self { grid: self.grid, values })
    }
}

pub(crate) fn ensure_same_grid(a: &TimeGrid, b: &TimeGrid) -> Result<()> {
    if a == b {
        Ok(())
    } else {
        Err(Error::GridMismatch(format!(
            "grid (dt = {}, n = {}) vs grid (dt = {}, n = {})",
            a.dt, a.steps, b.dt, b.steps
        )))
    }
}

/// Independent sub-streams of a seed. Each purpose gets its own key so that,
/// for example, adding a tail draw never shifts the Brownian increments.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Brownian = 1,
    Bes3 = 2,
    InfimumTail = 3,
    InfimumBridge = 4,
    FirstPassage = 5,
    Crossing = 6,
}

/// Random number generator for one path of one stream.
pub fn path_rng(seed: u64, stream: Stream, path: usize) -> ChaCha8Rng {
    let key = seed ^ (stream as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    let mut rng = ChaCha8Rng::seed_from_u64(key);
    rng.set_stream(path as u64);
    rng
}

fn open01(rng: &mut impl Rng) -> f64 {
    Open01.sample(rng)
}

/// A set of simulated paths sharing one grid.
#[derive(Debug, Clone)]
pub struct PathEnsemble {
    pub grid: TimeGrid,
    pub seed: u64,
    pub paths: Vec<GridPath>,
}

/// Standard Brownian path number `index` of `seed`, started at 0.
pub fn brownian_path(grid: TimeGrid, seed: u64, index: usize) -> GridPath {
    let mut rng = path_rng(seed, Stream::Brownian, index);
    let sd = grid.dt().sqrt();
    let increments: Vec<f64> =
        (0..grid.steps()).map(|_| sd * rng.sample::<f64, _>(StandardNormal)).collect();
    GridPath::from_increments(grid, 0.0, &increments).expect("increment count matches grid")
}

pub fn simulate_brownian(grid: TimeGrid, n_paths: usize, seed: u64) -> Result<PathEnsemble> {
    if n_paths == 0 {
        return Err(Error::config("n_paths", "must be at least 1"));
    }
    let paths = (0..n_paths).into_par_iter().map(|i| brownian_path(grid, seed, i)).collect();
    Ok(PathEnsemble { grid, seed, paths })
}

/// How three-dimensional Bessel paths are generated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Bes3Method {
    /// `R = 2J - B` where `B` is Brownian and `J` its running maximum, started
    /// so that `R_0 = r0`. Step maxima are drawn from the exact Brownian bridge
    /// law, so grid values are exact in law.
    #[default]
    PitmanConstruction,
    /// Euler scheme for `dR = dt / R + dW`, reflected at 0. A path that still
    /// reaches a non-positive value is reported as degenerate.
    EulerSde,
}

/// Maximum of a Brownian bridge from `a` to `b` over a step of length `dt`,
/// given a uniform draw `u` in (0, 1).
pub fn bridge_maximum(a: f64, b: f64, dt: f64, u: f64) -> f64 {
    0.5 * (a + b + ((b - a).powi(2) - 2.0 * dt * u.ln()).sqrt())
}

/// Minimum of a three-dimensional Bessel bridge from `a > 0` to `b > 0` over a
/// step of length `dt`, given a uniform draw `u` in (0, 1). The bridge is a
/// Brownian bridge conditioned to stay positive, which gives the closed-form
/// survival function `P(min > m) = (1 - exp(-2(a-m)(b-m)/dt)) / (1 - exp(-2ab/dt))`.
pub fn bes3_bridge_minimum(a: f64, b: f64, dt: f64, u: f64) -> f64 {
    let p0 = -(-2.0 * a * b / dt).exp_m1();
    let c = -0.5 * dt * (-(1.0 - u) * p0).ln_1p();
    let m = 0.5 * ((a + b) - ((a - b).powi(2) + 4.0 * c).sqrt());
    m.clamp(f64::MIN_POSITIVE, a.min(b))
}

/// Pitman's transform `R = 2J - B`. `beta` is the Brownian path, `j0` the
/// initial value of `J` (at least `beta[0]`), and `step_max`, if given, the
/// maximum of `beta` within each step. Without it `J` only sees grid values.
pub fn pitman_transform(beta: &[f64], j0: f64, step_max: Option<&[f64]>) -> Result<Vec<f64>> {
    if beta.is_empty() {
        return Err(Error::Precondition("empty Brownian path".into()));
    }
    if !(j0 >= beta[0]) {
        return Err(Error::Precondition(format!("J_0 = {j0} is below B_0 = {}", beta[0])));
    }
    if let Some(m) = step_max {
        if m.len() + 1 != beta.len() {
            return Err(Error::GridMismatch("step maxima do not match the path".into()));
        }
    }
    let mut j = j0;
    let mut out = Vec::with_capacity(beta.len());
    out.push(2.0 * j - beta[0]);
    for k in 1..beta.len() {
        j = j.max(beta[k]);
        if let Some(m) = step_max {
            j = j.max(m[k - 1]);
        }
        out.push(2.0 * j - beta[k]);
    }
    Ok(out)
}

/// Three-dimensional Bessel path number `index` of `seed`, started at `r0`.
pub fn bes3_path(grid: TimeGrid, r0: f64, seed: u64, index: usize, method: Bes3Method) -> Result<GridPath> {
    if !(r0.is_finite() && r0 > 0.0) {
        return Err(Error::Domain(format!("BES3 start must be positive, got {r0}")));
    }
    let mut rng = path_rng(seed, Stream::Bes3, index);
    let dt = grid.dt();
    let sd = dt.sqrt();
    let values = match method {
        Bes3Method::PitmanConstruction => {
            // J_0 is the future infimum of R, uniform on (0, r0).
            let j0 = r0 * open01(&mut rng);
            let mut beta = Vec::with_capacity(grid.len());
            let mut maxima = Vec::with_capacity(grid.steps());
            let mut b = 2.0 * j0 - r0;
            beta.push(b);
            for _ in 0..grid.steps() {
                let next = b + sd * rng.sample::<f64, _>(StandardNormal);
                maxima.push(bridge_maximum(b, next, dt, open01(&mut rng)));
                beta.push(next);
                b = next;
            }
            pitman_transform(&beta, j0, Some(&maxima))?
        }
        Bes3Method::EulerSde => {
            let mut values = Vec::with_capacity(grid.len());
            let mut r = r0;
            values.push(r);
            for step in 0..grid.steps() {
                let mut next = r + dt / r + sd * rng.sample::<f64, _>(StandardNormal);
                if next < 0.0 {
                    next = -next;
                }
                if !(next.is_finite() && next > 0.0) {
                    return Err(Error::Degenerate {
                        path: index,
                        step,
                        reason: format!("Euler BES3 value {next} is not positive"),
                    });
                }
                values.push(next);
                r = next;
            }
            values
        }
    };
    GridPath::new(grid, values)
}

pub fn simulate_bes3(grid: TimeGrid, r0: f64, n_paths: usize, seed: u64, method: Bes3Method) -> Result<PathEnsemble> {
    if n_paths == 0 {
        return Err(Error::config("n_paths", "must be at least 1"));
    }
    let paths = (0..n_paths)
        .into_par_iter()
        .map(|i| bes3_path(grid, r0, seed, i, method))
        .collect::<Result<Vec<_>>>()?;
    Ok(PathEnsemble { grid, seed, paths })
}

pub fn running_supremum(path: &GridPath) -> GridPath {
    let mut m = f64::NEG_INFINITY;
    let values = path
        .values()
        .iter()
        .map(|&v| {
            m = m.max(v);
            m
        })
        .collect();
    GridPath { grid: path.grid(), values }
}

/// Scale function of a transient diffusion: increasing, `e(0+) = -inf`,
/// `e(inf) = 0`, with `e(Z)` a local martingale.
#[derive(Debug, Clone, Copy)]
pub enum ScaleFunction {
    /// `e(z) = -1/z`, the scale function of the three-dimensional Bessel process.
    Bes3,
    Custom { e: fn(f64) -> f64, inverse: fn(f64) -> f64 },
}

impl ScaleFunction {
    pub fn eval(&self, z: f64) -> f64 {
        match self {
            ScaleFunction::Bes3 => -1.0 / z,
            ScaleFunction::Custom { e, .. } => e(z),
        }
    }

    pub fn inverse(&self, y: f64) -> f64 {
        match self {
            ScaleFunction::Bes3 => -1.0 / y,
            ScaleFunction::Custom { inverse, .. } => inverse(y),
        }
    }

    /// Draws the infimum of the process after a time at which it equals
    /// `terminal`, from a uniform `u` in (0, 1). The infimum `a` has
    /// distribution function `e(terminal) / e(a)` on `(0, terminal]`.
    pub fn sample_tail_infimum(&self, terminal: f64, u: f64) -> f64 {
        self.inverse(self.eval(terminal) / u)
    }
}

/// How the infimum between grid points is accounted for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InfimumResolution {
    /// Minimum over grid values only.
    #[default]
    Grid,
    /// Each step also contributes an exact draw of the bridge minimum between
    /// its endpoints. Only available for the Bessel scale function, whose
    /// bridges are Brownian bridges conditioned to stay positive.
    BridgeRefined,
}

/// Future infimum `I_t = inf_{s >= t} Z_s` with a fixed post-horizon infimum
/// `tail`. The result is nondecreasing and never exceeds the path.
pub fn future_infimum_with_tail(path: &GridPath, tail: f64) -> Result<GridPath> {
    future_infimum_inner(path, tail, None)
}

fn future_infimum_inner(path: &GridPath, tail: f64, step_min: Option<&[f64]>) -> Result<GridPath> {
    let v = path.values();
    let mut out = vec![0.0; v.len()];
    let mut m = tail.min(v[v.len() - 1]);
    out[v.len() - 1] = m;
    for k in (0..v.len() - 1).rev() {
        m = m.min(v[k]);
        if let Some(sm) = step_min {
            m = m.min(sm[k]);
        }
        out[k] = m;
    }
    GridPath::new(path.grid(), out)
}

/// Future infimum of a positive transient diffusion path with scale function
/// `scale`. The unobserved infimum after the horizon is drawn from its exact
/// conditional law using `rng`.
pub fn future_infimum(
    path: &GridPath,
    scale: &ScaleFunction,
    rng: &mut impl Rng,
    resolution: InfimumResolution,
) -> Result<GridPath> {
    if let Some(k) = path.values().iter().position(|&v| !(v > 0.0 && v.is_finite())) {
        return Err(Error::Domain(format!("path value {} at index {k} is not positive", path.value(k))));
    }
    let tail = scale.sample_tail_infimum(path.terminal(), open01(rng));
    match resolution {
        InfimumResolution::Grid => future_infimum_inner(path, tail, None),
        InfimumResolution::BridgeRefined => {
            if !matches!(scale, ScaleFunction::Bes3) {
                return Err(Error::Precondition(
                    "bridge-refined infimum is only available for the Bessel scale".into(),
                ));
            }
            let dt = path.grid().dt();
            let step_min: Vec<f64> = path
                .values()
                .windows(2)
                .map(|w| bes3_bridge_minimum(w[0], w[1], dt, open01(rng)))
                .collect();
            future_infimum_inner(path, tail, Some(&step_min))
        }
    }
}

/// Last time in `[0, horizon]` at which the linearly interpolated path crosses
/// `level` (a sign change of `path - level`, or an exact hit at a grid point).
/// Returns 0 if there is none.
pub fn last_level_crossing(path: &GridPath, level: f64, horizon: f64) -> f64 {
    let grid = path.grid();
    let last = ((horizon / grid.dt()) * (1.0 + GRID_TOL)).floor().min(grid.steps() as f64);
    if last < 0.0 {
        return 0.0;
    }
    let last = last as usize;
    let d = |k: usize| path.value(k) - level;
    for k in (1..=last).rev() {
        let dk = d(k);
        if dk == 0.0 {
            return grid.time(k);
        }
        let dp = d(k - 1);
        if dp * dk < 0.0 {
            return grid.time(k - 1) + grid.dt() * dp / (dp - dk);
        }
    }
    0.0
}

/// Last crossing of `level` by the continuous Brownian path through the grid
/// values, up to `horizon`. Besides sign changes, a step whose endpoints lie
/// on the same side crosses with the bridge probability
/// `exp(-2 (a - level)(b - level) / dt)`; such a crossing is placed at the
/// step midpoint. Steps are examined from the horizon backwards, one uniform
/// draw from `rng` per same-side step. Returns 0 if there is no crossing.
pub fn bridge_last_crossing(path: &GridPath, level: f64, horizon: f64, rng: &mut impl Rng) -> f64 {
    let grid = path.grid();
    let dt = grid.dt();
    let last = ((horizon / dt) * (1.0 + GRID_TOL)).floor().min(grid.steps() as f64);
    if last < 0.0 {
        return 0.0;
    }
    let d = |k: usize| path.value(k) - level;
    for k in (1..=last as usize).rev() {
        let (dp, dk) = (d(k - 1), d(k));
        if dk == 0.0 {
            return grid.time(k);
        }
        if dp * dk < 0.0 {
            return grid.time(k - 1) + dt * dp / (dp - dk);
        }
        let u: f64 = open01(rng);
        if u < (-2.0 * dp * dk / dt).exp() {
            return grid.time(k - 1) + 0.5 * dt;
        }
    }
    0.0
}

/// Last zero of the path in `[0, horizon]`, 0 if it never vanishes.
pub fn last_zero(path: &GridPath, horizon: f64) -> f64 {
    last_level_crossing(path, 0.0, horizon)
}

/// For every grid index `k`, the first grid time after `t_k` at which the
/// running supremum `sup` strictly increases; `+inf` if it does not increase
/// again on the grid.
pub fn next_sup_increases(sup: &GridPath) -> Vec<f64> {
    let v = sup.values();
    let grid = sup.grid();
    let mut out = vec![f64::INFINITY; v.len()];
    let mut next = f64::INFINITY;
    for k in (0..v.len() - 1).rev() {
        if v[k + 1] > v[k] {
            next = grid.time(k + 1);
        }
        out[k] = next;
    }
    out
}

/// Single-index form of [`next_sup_increases`].
pub fn next_sup_increase(sup: &GridPath, k: usize) -> f64 {
    let v = sup.values();
    (k + 1..v.len()).find(|&j| v[j] > v[k]).map_or(f64::INFINITY, |j| sup.grid().time(j))
}

/// Running supremum of the continuous Brownian path through the grid values of
/// `path`, with the next record time after every grid time.
///
/// Step maxima come from the exact bridge law, so `sup` is exact in law. A
/// record inside a step is placed at the step midpoint; records after the
/// horizon use the exact first-passage law. All draws come from `rng`.
pub fn bridge_supremum(path: &GridPath, rng: &mut impl Rng) -> (GridPath, Vec<f64>) {
    let grid = path.grid();
    let dt = grid.dt();
    let steps = grid.steps();
    let maxima: Vec<f64> =
        (0..steps).map(|k| bridge_maximum(path.value(k), path.value(k + 1), dt, open01(rng))).collect();
    let mut sup = Vec::with_capacity(grid.len());
    sup.push(path.value(0));
    for (k, &m) in maxima.iter().enumerate() {
        sup.push(sup[k].max(m));
    }
    let beyond = grid.horizon() + sample_first_passage(sup[steps] - path.value(steps), rng);
    let mut next = vec![beyond; grid.len()];
    // The first step exceeding the level reached at t_k; the scan restarts only
    // after a record, so the total work is linear.
    let mut j = 0;
    for k in 0..steps {
        j = j.max(k);
        while j < steps && maxima[j] <= sup[k] {
            j += 1;
        }
        if j < steps {
            next[k] = grid.time(j) + 0.5 * dt;
        }
    }
    (GridPath::new(grid, sup).expect("one value per grid point"), next)
}

/// Time for a Brownian motion to first rise by `gap >= 0`, drawn from its exact
/// law `gap^2 / N^2` with `N` standard normal.
pub fn sample_first_passage(gap: f64, rng: &mut impl Rng) -> f64 {
    let n: f64 = rng.sample(StandardNormal);
    gap * gap / (n * n)
}

/// Realized covariation `sum (dA)(dB)`, started at 0.
pub fn bracket_estimate(a: &GridPath, b: &GridPath) -> Result<GridPath> {
    ensure_same_grid(&a.grid(), &b.grid())?;
    let increments: Vec<f64> = a.increments().zip(b.increments()).map(|(x, y)| x * y).collect();
    GridPath::from_increments(a.grid(), 0.0, &increments)
}

/// Path-level random variables that generate an enlarged filtration. Only the
/// fields relevant to a scenario are populated.
#[derive(Debug, Clone, Default)]
pub struct EnlargementData {
    /// Terminal value of the driving Brownian motion.
    pub terminal: Option<f64>,
    pub running_sup: Option<GridPath>,
    pub future_inf: Option<GridPath>,
    /// Last crossing of half the terminal value.
    pub xi: Option<f64>,
    /// Last zero before the horizon.
    pub last_zero: Option<f64>,
    /// Next record time of the running supremum, per grid index.
    pub next_sup_times: Option<Vec<f64>>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn bridge_last_zero_is_exact_on_a_coarse_grid() {
        // The last zero before 1 is arcsine distributed: P(g <= 1/2) = 1/2.
        let grid = TimeGrid::from_horizon(1.0, 0.05).unwrap();
        let n = 20_000;
        let mut below = 0;
        for i in 0..n {
            let w = brownian_path(grid, 5, i);
            let mut rng = path_rng(5, Stream::Crossing, i);
            let g = bridge_last_crossing(&w, 0.0, 1.0, &mut rng);
            assert!(g >= last_zero(&w, 1.0));
            below += usize::from(g <= 0.5);
        }
        assert!((below as f64 / n as f64 - 0.5).abs() < 0.015);
    }

    #[test]
    fn bridge_supremum_is_exact_on_a_coarse_grid() {
        let grid = TimeGrid::from_horizon(1.0, 0.1).unwrap();
        let n = 20_000;
        let mut total = 0.0;
        for i in 0..n {
            let w = brownian_path(grid, 3, i);
            let mut rng = path_rng(3, Stream::FirstPassage, i);
            let (sup, next) = bridge_supremum(&w, &mut rng);
            let discrete = running_supremum(&w);
            for k in 0..grid.len() {
                assert!(sup.value(k) >= discrete.value(k));
                assert!(next[k] > grid.time(k));
            }
            total += sup.terminal();
        }
        // E sup_{[0,1]} W = sqrt(2/pi); the standard error is about 0.004.
        assert!((total / n as f64 - (2.0 / std::f64::consts::PI).sqrt()).abs() < 0.02);
    }

    fn grid(n: usize) -> TimeGrid {
        TimeGrid::new(1.0 / n as f64, n).unwrap()
    }

    fn path(values: &[f64]) -> GridPath {
        GridPath::new(grid(values.len() - 1), values.to_vec()).unwrap()
    }

    #[test]
    fn grid_requires_divisible_horizon() {
        assert_eq!(TimeGrid::from_horizon(1.0, 1e-3).unwrap().steps(), 1000);
        assert!(TimeGrid::from_horizon(1.0, 0.3).is_err());
        assert!(TimeGrid::from_horizon(1.0, 0.0).is_err());
        assert!(TimeGrid::from_horizon(-1.0, 0.1).is_err());
    }

    #[test]
    fn last_crossing_interpolates() {
        let t = last_level_crossing(&path(&[0.0, 0.8, 0.2, 1.0]), 0.5, 1.0);
        assert!((t - 19.0 / 24.0).abs() < 1e-12);
    }

    #[test]
    fn last_crossing_exact_grid_hit() {
        let t = last_level_crossing(&path(&[0.0, 0.5, 0.7, 0.9]), 0.5, 1.0);
        assert!((t - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn last_crossing_sentinel() {
        assert_eq!(last_level_crossing(&path(&[1.0, 2.0, 3.0]), 0.5, 1.0), 0.0);
    }

    #[test]
    fn last_zero_uses_last_sign_change() {
        let t = last_zero(&path(&[0.0, 1.0, -1.0, 2.0]), 1.0);
        assert!((t - 7.0 / 9.0).abs() < 1e-12);
    }

    #[test]
    fn last_zero_of_flat_path() {
        let t = last_zero(&path(&[0.0, 0.0, 0.0, 1.0]), 1.0);
        assert!((t - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn last_zero_respects_horizon() {
        let t = last_zero(&path(&[1.0, -1.0, 1.0, -1.0]), 0.5);
        assert!((t - 0.5 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn bracket_of_squares() {
        let p = path(&[0.0, 1.0, 3.0]);
        assert_eq!(bracket_estimate(&p, &p).unwrap().values(), &[0.0, 1.0, 5.0]);
    }

    #[test]
    fn bracket_rejects_mismatched_grids() {
        assert!(matches!(
            bracket_estimate(&path(&[0.0, 1.0]), &path(&[0.0, 1.0, 2.0])),
            Err(Error::GridMismatch(_))
        ));
    }

    #[test]
    fn future_infimum_with_fixed_tail() {
        let i = future_infimum_with_tail(&path(&[3.0, 2.0, 5.0]), 4.0).unwrap();
        assert_eq!(i.values(), &[2.0, 2.0, 4.0]);
    }

    #[test]
    fn future_infimum_rejects_nonpositive_paths() {
        let mut rng = path_rng(1, Stream::InfimumTail, 0);
        let r = future_infimum(&path(&[1.0, 0.0]), &ScaleFunction::Bes3, &mut rng, InfimumResolution::Grid);
        assert!(matches!(r, Err(Error::Domain(_))));
    }

    fn ks_uniform(mut xs: Vec<f64>) -> f64 {
        xs.sort_by(f64::total_cmp);
        let n = xs.len() as f64;
        xs.iter()
            .enumerate()
            .map(|(i, &x)| (x - i as f64 / n).abs().max(((i + 1) as f64 / n - x).abs()))
            .fold(0.0, f64::max)
    }

    #[test]
    fn bessel_tail_infimum_is_uniform() {
        let mut rng = path_rng(11, Stream::InfimumTail, 0);
        let z = 2.5;
        let xs: Vec<f64> =
            (0..100_000).map(|_| ScaleFunction::Bes3.sample_tail_infimum(z, open01(&mut rng)) / z).collect();
        assert!(xs.iter().all(|&x| x > 0.0 && x <= 1.0));
        assert!(ks_uniform(xs) < 1.63 / (100_000f64).sqrt());
    }

    #[test]
    fn custom_scale_tail_matches_its_distribution_function() {
        // e(z) = -1/z^2 is the scale function of a five-dimensional Bessel
        // process; P(tail <= a) = e(Z)/e(a) = (a/Z)^2.
        let scale = ScaleFunction::Custom { e: |z| -1.0 / (z * z), inverse: |y| (-1.0 / y).sqrt() };
        let mut rng = path_rng(12, Stream::InfimumTail, 0);
        let z = 1.7;
        let xs: Vec<f64> =
            (0..50_000).map(|_| (scale.sample_tail_infimum(z, open01(&mut rng)) / z).powi(2)).collect();
        assert!(ks_uniform(xs) < 1.63 / (50_000f64).sqrt());
    }

    #[test]
    fn pitman_with_flat_brownian_path_is_constant() {
        let beta = vec![0.4; 50];
        let r = pitman_transform(&beta, 0.7, None).unwrap();
        assert!(r.iter().all(|&x| (x - 1.0).abs() < 1e-15));
    }

    #[test]
    fn bridge_refined_initial_infimum_is_uniform() {
        // For BES3 from r0 the overall infimum is uniform on (0, r0); a coarse
        // grid makes the grid-only minimum visibly biased upwards.
        let g = TimeGrid::from_horizon(1.0, 0.02).unwrap();
        let n = 20_000;
        let i0 = |res| -> Vec<f64> {
            (0..n)
                .into_par_iter()
                .map(|i| {
                    let p = bes3_path(g, 1.0, 5, i, Bes3Method::PitmanConstruction).unwrap();
                    let mut rng = path_rng(5, Stream::InfimumBridge, i);
                    future_infimum(&p, &ScaleFunction::Bes3, &mut rng, res).unwrap().initial()
                })
                .collect()
        };
        let crit = 1.63 / (n as f64).sqrt();
        assert!(ks_uniform(i0(InfimumResolution::BridgeRefined)) < crit);
        assert!(ks_uniform(i0(InfimumResolution::Grid)) > crit);
    }

    #[test]
    fn euler_and_pitman_agree_on_terminal_mean() {
        let g = TimeGrid::from_horizon(1.0, 1e-3).unwrap();
        let stats = |m| {
            let e = simulate_bes3(g, 1.0, 4000, 3, m).unwrap();
            let xs: Vec<f64> = e.paths.iter().map(|p| p.terminal()).collect();
            let n = xs.len() as f64;
            let mean = xs.iter().sum::<f64>() / n;
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
            (mean, var / n)
        };
        let (m1, v1) = stats(Bes3Method::PitmanConstruction);
        let (m2, v2) = stats(Bes3Method::EulerSde);
        assert!((m1 - m2).abs() < 3.0 * (v1 + v2).sqrt(), "{m1} vs {m2}");
    }

    #[test]
    fn simulation_is_prefix_stable() {
        let g = grid(100);
        let small = simulate_brownian(g, 5, 9).unwrap();
        let large = simulate_brownian(g, 12, 9).unwrap();
        assert_eq!(small.paths[..], large.paths[..5]);
        assert_ne!(large.paths[0], large.paths[1]);
    }

    #[test]
    fn brownian_increment_variance() {
        let g = TimeGrid::from_horizon(1.0, 0.01).unwrap();
        let e = simulate_brownian(g, 2000, 4).unwrap();
        let n = (2000 * 100) as f64;
        let var: f64 = e.paths.iter().flat_map(|p| p.increments().collect::<Vec<_>>()).map(|d| d * d).sum::<f64>() / n;
        // Standard error of the mean of dW^2 is sqrt(2) dt / sqrt(n).
        assert!((var - 0.01).abs() < 4.0 * 2f64.sqrt() * 0.01 / n.sqrt());
    }

    #[test]
    fn next_record_times() {
        let sup = running_supremum(&path(&[0.0, 1.0, 0.5, 1.0, 2.0]));
        assert_eq!(sup.values(), &[0.0, 1.0, 1.0, 1.0, 2.0]);
        let all = next_sup_increases(&sup);
        assert_eq!(all, vec![0.25, 1.0, 1.0, 1.0, f64::INFINITY]);
        for k in 0..5 {
            assert_eq!(all[k], next_sup_increase(&sup, k));
        }
    }

    proptest! {
        #[test]
        fn running_supremum_dominates(values in prop::collection::vec(-10.0f64..10.0, 2..60)) {
            let p = path(&values);
            let s = running_supremum(&p);
            for k in 0..values.len() {
                prop_assert!(s.value(k) >= p.value(k));
                if k > 0 { prop_assert!(s.value(k) >= s.value(k - 1)); }
            }
        }

        #[test]
        fn future_infimum_is_below_and_nondecreasing(
            values in prop::collection::vec(0.01f64..10.0, 2..60), tail in 0.001f64..20.0
        ) {
            let p = path(&values);
            let i = future_infimum_with_tail(&p, tail).unwrap();
            for k in 0..values.len() {
                prop_assert!(i.value(k) <= p.value(k));
                if k > 0 { prop_assert!(i.value(k) >= i.value(k - 1)); }
            }
        }

        #[test]
        fn bessel_bridge_minimum_in_range(a in 1e-4f64..5.0, b in 1e-4f64..5.0, u in 1e-9f64..1.0) {
            let m = bes3_bridge_minimum(a, b, 1e-3, u);
            prop_assert!(m > 0.0 && m <= a.min(b));
        }

        #[test]
        fn last_crossing_is_a_crossing(values in prop::collection::vec(-3.0f64..3.0, 2..40), level in -1.0f64..1.0) {
            let p = path(&values);
            let t = last_level_crossing(&p, level, 1.0);
            prop_assert!((0.0..=1.0).contains(&t));
            // No sign change strictly after the reported time.
            let g = p.grid();
            for k in 0..values.len() - 1 {
                if g.time(k) > t + 1e-12 {
                    let (a, b) = (values[k] - level, values[k + 1] - level);
                    prop_assert!(a * b > 0.0);
                }
            }
        }
    }
}
