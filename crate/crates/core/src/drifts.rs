//! Drift formulas for martingales under enlarged filtrations, discretized as
//! per-step drift increments on a grid.
//!
//! Every drift is evaluated at the left end of each step, so a corrected
//! process `sum (dM - drift)` only uses information available at the start of
//! the step. Windows are likewise predictable: step `(t_k, t_{k+1}]` belongs to
//! a window `[lo, hi)` when `lo <= t_k < hi`.

use std::f64::consts::{FRAC_2_SQRT_PI, PI, SQRT_2};

use statrs::function::erf::{erf, erfc};

use crate::error::{Error, Result};
use crate::paths::{ensure_same_grid, GridPath, ScaleFunction, TimeGrid};

const WINDOW_TOL: f64 = 1e-9;

/// Per-step drift increments together with the steps on which they apply.
#[derive(Debug, Clone, PartialEq)]
pub struct DriftSeries {
    grid: TimeGrid,
    increments: Vec<f64>,
    active: Vec<bool>,
}

impl DriftSeries {
    pub fn new(grid: TimeGrid, increments: Vec<f64>, active: Vec<bool>) -> Result<Self> {
        if increments.len() != grid.steps() || active.len() != grid.steps() {
            return Err(Error::GridMismatch("drift series does not match the grid".into()));
        }
        Ok(Self { grid, increments, active })
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    /// Drift over each step; zero on inactive steps.
    pub fn increments(&self) -> &[f64] {
        &self.increments
    }

    pub fn active(&self) -> &[bool] {
        &self.active
    }

    /// Accumulated drift, started at 0.
    pub fn cumulative(&self) -> GridPath {
        GridPath::from_increments(self.grid, 0.0, &self.increments).expect("increment count matches grid")
    }

    /// `sum_{active steps} (dM - drift)`, started at 0.
    pub fn corrected(&self, m: &GridPath) -> Result<GridPath> {
        self.integrate(m, true)
    }

    /// `sum_{active steps} dM`, started at 0: the same process without the
    /// drift correction.
    pub fn uncorrected(&self, m: &GridPath) -> Result<GridPath> {
        self.integrate(m, false)
    }

    fn integrate(&self, m: &GridPath, correct: bool) -> Result<GridPath> {
        ensure_same_grid(&self.grid, &m.grid())?;
        let incs: Vec<f64> = (0..self.grid.steps())
            .map(|k| {
                if !self.active[k] {
                    0.0
                } else if correct {
                    m.increment(k) - self.increments[k]
                } else {
                    m.increment(k)
                }
            })
            .collect();
        GridPath::from_increments(self.grid, 0.0, &incs)
    }

    /// The series stopped at grid index `k`: steps from `k` on become inactive.
    pub fn stopped(mut self, k: usize) -> Self {
        for j in k.min(self.increments.len())..self.increments.len() {
            self.active[j] = false;
            self.increments[j] = 0.0;
        }
        self
    }

    /// Total variation `sum |drift|` over the active steps.
    pub fn total_variation(&self) -> f64 {
        self.increments.iter().map(|d| d.abs()).sum()
    }
}

/// Steps whose left end lies in one of the windows `[lo, hi)`.
pub fn step_mask(grid: TimeGrid, windows: &[(f64, f64)]) -> Vec<bool> {
    let tol = WINDOW_TOL * grid.dt();
    (0..grid.steps())
        .map(|k| {
            let t = grid.time(k);
            windows.iter().any(|&(lo, hi)| t >= lo - tol && t < hi - tol)
        })
        .collect()
}

fn series_from_rates(
    grid: TimeGrid,
    active: Vec<bool>,
    mut rate: impl FnMut(usize) -> Result<f64>,
) -> Result<DriftSeries> {
    let dt = grid.dt();
    let mut increments = vec![0.0; grid.steps()];
    for k in 0..grid.steps() {
        if active[k] {
            let r = rate(k)?;
            if !r.is_finite() {
                return Err(Error::Singularity { t: grid.time(k), reason: format!("drift rate {r}") });
            }
            increments[k] = r * dt;
        }
    }
    DriftSeries::new(grid, increments, active)
}

/// Drift rate of a Brownian motion in its initial enlargement with `W_1`.
pub fn bridge_rate(t: f64, w: f64, w1: f64) -> f64 {
    (w1 - w) / (1.0 - t)
}

/// Brownian bridge drift `(W_1 - W_t) / (1 - t)` on the steps starting in
/// `[0, hi)`; `hi` must stay below 1.
pub fn bridge_drift(w: &GridPath, w1: f64, hi: f64) -> Result<DriftSeries> {
    let grid = w.grid();
    if hi > 1.0 {
        return Err(Error::Singularity { t: 1.0, reason: "bridge drift window reaches t = 1".into() });
    }
    let active = step_mask(grid, &[(0.0, hi)]);
    series_from_rates(grid, active, |k| {
        let t = grid.time(k);
        if t >= 1.0 {
            return Err(Error::Singularity { t, reason: "bridge drift at t >= 1".into() });
        }
        Ok(bridge_rate(t, w.value(k), w1))
    })
}

/// Azéma supermartingale `Z_t = P[τ > t | F_t]` of a random time, with the
/// ingredients of its drift formulas for a fixed martingale `M`.
#[derive(Debug, Clone)]
pub struct AzemaData {
    pub z: GridPath,
    /// `d<N, M>/dt`, where `N` is the martingale part of `Z`.
    pub bracket_density: GridPath,
    /// The accumulated process `B^M`; zero when `M` does not jump at the
    /// random time.
    pub b_m: GridPath,
    /// `<M, Ã - A>` for honest times, accumulated; zero when the time avoids
    /// stopping times.
    pub dual_gap: GridPath,
}

impl AzemaData {
    /// Instance with continuous ingredients only.
    pub fn continuous(z: GridPath, bracket_density: GridPath) -> Result<Self> {
        ensure_same_grid(&z.grid(), &bracket_density.grid())?;
        let zero = GridPath::constant(z.grid(), 0.0);
        Ok(Self { z, bracket_density, b_m: zero.clone(), dual_gap: zero })
    }

    /// Emery's random time: the last time in `[0, 1]` at which `W` crosses
    /// `W_1 / 2`. Here `Z = 1 - h(|W| / sqrt(1 - t))` and `M = W`.
    pub fn emery(w: &GridPath) -> Result<Self> {
        let grid = w.grid();
        let (z, dn) = per_point(w, |t, x| {
            let s = (1.0 - t).sqrt();
            let y = x.abs() / s;
            (h_complement(y), -h_prime(y) * x.signum() / s)
        });
        Self::continuous(GridPath::new(grid, z)?, GridPath::new(grid, dn)?)
    }

    /// Last zero of `W` before 1, an honest time:
    /// `Z = 2 (1 - Φ(|W| / sqrt(1 - t)))` and `M = W`.
    pub fn last_zero(w: &GridPath) -> Result<Self> {
        let grid = w.grid();
        let (z, dn) = per_point(w, |t, x| {
            let s = (1.0 - t).sqrt();
            let y = x.abs() / s;
            (erfc(y / SQRT_2), -2.0 * normal_density(y) * x.signum() / s)
        });
        Self::continuous(GridPath::new(grid, z)?, GridPath::new(grid, dn)?)
    }
}

/// Evaluates `(Z, d<N,W>/dt)` at every grid time before 1. At `t >= 1` the
/// random time has already occurred, so `Z = 0` there.
fn per_point(w: &GridPath, f: impl Fn(f64, f64) -> (f64, f64)) -> (Vec<f64>, Vec<f64>) {
    let grid = w.grid();
    (0..grid.len())
        .map(|k| {
            let t = grid.time(k);
            if t < 1.0 {
                f(t, w.value(k))
            } else {
                (0.0, 0.0)
            }
        })
        .unzip()
}

fn normal_density(y: f64) -> f64 {
    (-0.5 * y * y).exp() / (2.0 * PI).sqrt()
}

fn check_range(az: &AzemaData, grid: &TimeGrid) -> Result<()> {
    ensure_same_grid(grid, &az.z.grid())?;
    ensure_same_grid(grid, &az.b_m.grid())?;
    ensure_same_grid(grid, &az.dual_gap.grid())
}

/// Progressive-enlargement drift before a random time `tau`:
/// `1_{(0, tau]} (d<N, M> + dB^M) / Z_-`, on the steps starting in
/// `[lo, min(hi, tau))`.
pub fn progressive_drift(az: &AzemaData, tau: f64, lo: f64, hi: f64) -> Result<DriftSeries> {
    let grid = az.z.grid();
    check_range(az, &grid)?;
    let dt = grid.dt();
    let active = step_mask(grid, &[(lo, hi.min(tau))]);
    series_from_rates(grid, active, |k| {
        let z = az.z.value(k);
        if z <= 0.0 {
            return Err(Error::Singularity { t: grid.time(k), reason: "Z_- vanishes before the random time".into() });
        }
        Ok((az.bracket_density.value(k) + az.b_m.increment(k) / dt) / z)
    })
}

/// Drift rates before and after an honest time for given `Z_-` and
/// `d<N, M>/dt`.
pub fn honest_rates(z: f64, bracket_density: f64) -> (f64, f64) {
    (bracket_density / z, -bracket_density / (1.0 - z))
}

/// Honest-time drift: the progressive formula on `before`, and
/// `-(d<M, N> + d<M, Ã - A>) / (1 - Z_-)` on `after`. Both windows are
/// `[lo, hi)` in step start times; the caller keeps `before` below the honest
/// time and `after` above it.
pub fn honest_drift(az: &AzemaData, before: (f64, f64), after: (f64, f64)) -> Result<DriftSeries> {
    let grid = az.z.grid();
    check_range(az, &grid)?;
    let dt = grid.dt();
    let pre = step_mask(grid, &[before]);
    let post = step_mask(grid, &[after]);
    let active: Vec<bool> = pre.iter().zip(&post).map(|(a, b)| *a || *b).collect();
    series_from_rates(grid, active, |k| {
        let t = grid.time(k);
        let z = az.z.value(k);
        if pre[k] {
            if z <= 0.0 {
                return Err(Error::Singularity { t, reason: "Z_- vanishes before the honest time".into() });
            }
            Ok((az.bracket_density.value(k) + az.b_m.increment(k) / dt) / z)
        } else {
            if z >= 1.0 {
                return Err(Error::Singularity { t, reason: "1 - Z_- vanishes after the honest time".into() });
            }
            Ok(-(az.bracket_density.value(k) + az.dual_gap.increment(k) / dt) / (1.0 - z))
        }
    })
}

/// How `d<M, X>` enters the supremum drift.
#[derive(Debug, Clone, Copy)]
pub enum SupBracket<'a> {
    /// `d<M, X>/dt` at every grid point.
    Density(&'a GridPath),
    /// Accumulated realized covariation `sum dM dX`.
    Realized(&'a GridPath),
    /// `M = ∫ (U - X) dX`, whose bracket density `U - X` cancels the `1/(U - X)`
    /// factor exactly.
    Instance,
}

/// Drift rate of `M` in the initial enlargement with the whole running
/// supremum, given `y = U - X`, `tau = T - t` (time to the next record) and
/// `b = d<M, X>/dt`.
pub fn supremum_rate(y: f64, tau: f64, b: f64) -> f64 {
    -(b / y) * (1.0 - y * y / tau)
}

/// [`supremum_rate`] for `M = ∫ (U - X) dX`, finite also at `y = 0`.
pub fn supremum_instance_rate(y: f64, tau: f64) -> f64 {
    -(1.0 - y * y / tau)
}

/// Drift of `M` in the initial enlargement of the Brownian filtration with the
/// running supremum `U` of `X`. `next_record[k]` is the next record time after
/// `t_k`. Steps starting within `delta` of their next record are left out, as
/// are steps outside `[lo, hi)`.
pub fn supremum_drift(
    u: &GridPath,
    x: &GridPath,
    next_record: &[f64],
    bracket: SupBracket<'_>,
    delta: f64,
    window: (f64, f64),
) -> Result<DriftSeries> {
    let grid = x.grid();
    ensure_same_grid(&grid, &u.grid())?;
    if next_record.len() != grid.len() {
        return Err(Error::GridMismatch("record times do not match the grid".into()));
    }
    let dt = grid.dt();
    let in_window = step_mask(grid, &[window]);
    let active: Vec<bool> =
        (0..grid.steps()).map(|k| in_window[k] && next_record[k] - grid.time(k) > delta).collect();
    series_from_rates(grid, active, |k| {
        let t = grid.time(k);
        let y = u.value(k) - x.value(k);
        let tau = next_record[k] - t;
        let b = match bracket {
            SupBracket::Instance => return Ok(supremum_instance_rate(y, tau)),
            SupBracket::Density(p) => p.value(k),
            SupBracket::Realized(p) => p.increment(k) / dt,
        };
        if y == 0.0 {
            if b == 0.0 {
                return Ok(0.0);
            }
            return Err(Error::Singularity { t, reason: "U = X with a nonzero bracket".into() });
        }
        Ok(supremum_rate(y, tau, b))
    })
}

/// `h(y) = sqrt(2/π) ∫_0^y s² e^{-s²/2} ds`, in closed form.
pub fn h_func(y: f64) -> f64 {
    erf(y / SQRT_2) - FRAC_2_SQRT_PI / SQRT_2 * y * (-0.5 * y * y).exp()
}

/// `1 - h(y)` without cancellation for large `y`.
pub fn h_complement(y: f64) -> f64 {
    erfc(y / SQRT_2) + FRAC_2_SQRT_PI / SQRT_2 * y * (-0.5 * y * y).exp()
}

/// Derivative of [`h_func`].
pub fn h_prime(y: f64) -> f64 {
    FRAC_2_SQRT_PI / SQRT_2 * y * y * (-0.5 * y * y).exp()
}

/// Azéma supermartingale of Emery's random time at `(t, W_t)`, `t < 1`.
pub fn emery_z(t: f64, w: f64) -> Result<f64> {
    if !(t < 1.0) {
        return Err(Error::Domain(format!("Emery's Z is defined for t < 1, got {t}")));
    }
    Ok(h_complement(w.abs() / (1.0 - t).sqrt()))
}

/// Drift rate of `W` after Emery's random time:
/// `W_1 / ((1 - t)(e^x - 1)) - (W_t - W_1)/(1 - t)` with
/// `x = (2 W_t W_1 - W_1²) / (2(1 - t))`.
pub fn emery_after_rate(t: f64, w: f64, w1: f64) -> Result<f64> {
    if !(t < 1.0) {
        return Err(Error::Singularity { t, reason: "Emery drift at t >= 1".into() });
    }
    let x = (2.0 * w * w1 - w1 * w1) / (2.0 * (1.0 - t));
    let denom = x.exp_m1();
    if denom == 0.0 {
        return Err(Error::Singularity { t, reason: "W_t sits on W_1 / 2".into() });
    }
    Ok(w1 / ((1.0 - t) * denom) - (w - w1) / (1.0 - t))
}

/// Emery after-time drift on the steps starting in `[lo, hi)`, where the
/// caller takes `lo` after the random time.
pub fn emery_after_drift(w: &GridPath, w1: f64, lo: f64, hi: f64) -> Result<DriftSeries> {
    let grid = w.grid();
    let active = step_mask(grid, &[(lo, hi)]);
    series_from_rates(grid, active, |k| emery_after_rate(grid.time(k), w.value(k), w1))
}

/// Decomposition of `e(Z)` for a transient diffusion `Z` with scale function
/// `e` and future infimum `I`: the drift `2 de(I) + d<e(Z)>/e(Z)` on every
/// step, and the local martingale `1/e(Z) - 2/e(I)`. `bracket` is the
/// accumulated `<e(Z)>`.
pub fn future_inf_decomposition(
    z: &GridPath,
    i: &GridPath,
    scale: &ScaleFunction,
    bracket: &GridPath,
) -> Result<(DriftSeries, GridPath)> {
    let grid = z.grid();
    ensure_same_grid(&grid, &i.grid())?;
    ensure_same_grid(&grid, &bracket.grid())?;
    if let Some(k) = (0..grid.len()).find(|&k| !(z.value(k) > 0.0 && i.value(k) > 0.0)) {
        return Err(Error::Domain(format!("Z or its future infimum is not positive at index {k}")));
    }
    let ez = z.map(|v| scale.eval(v));
    let ei = i.map(|v| scale.eval(v));
    let increments: Vec<f64> =
        (0..grid.steps()).map(|k| 2.0 * ei.increment(k) + bracket.increment(k) / ez.value(k)).collect();
    let drift = DriftSeries::new(grid, increments, vec![true; grid.steps()])?;
    let local_martingale = ez.zip_with(&ei, |a, b| 1.0 / a - 2.0 / b)?;
    Ok((drift, local_martingale))
}
