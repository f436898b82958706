//! Elementary stochastic integrals of left step functions against càdlàg
//! functions, evaluated exactly (no discretization).
//!
//! For `h = sum_i d_i 1_{(x_i, x_{i+1}]}` and a càdlàg `f` on `(a, b]`,
//! `(h·f)(t) = sum_i d_i (f(t ∧ x_{i+1}) - f(t ∧ x_i))`.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Left step function `sum_i levels[i] 1_{(breaks[i], breaks[i+1]]}` on the
/// domain `(breaks[0], breaks[last]]`. The last break may be `+inf`.
#[derive(Debug, Clone, PartialEq)]
pub struct LeftStepFunction {
    breaks: Vec<f64>,
    levels: Vec<f64>,
}

impl LeftStepFunction {
    pub fn new(breaks: Vec<f64>, levels: Vec<f64>) -> Result<Self> {
        if breaks.len() < 2 || breaks.len() != levels.len() + 1 {
            return Err(Error::Precondition(format!(
                "{} breakpoints for {} levels",
                breaks.len(),
                levels.len()
            )));
        }
        if !breaks[0].is_finite() || breaks[..breaks.len() - 1].iter().any(|x| !x.is_finite()) {
            return Err(Error::Precondition("only the last breakpoint may be infinite".into()));
        }
        if breaks.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Precondition("breakpoints must be strictly increasing".into()));
        }
        if levels.iter().any(|d| !d.is_finite()) {
            return Err(Error::Precondition("levels must be finite".into()));
        }
        Ok(Self { breaks, levels })
    }

    pub fn constant(a: f64, b: f64, level: f64) -> Result<Self> {
        Self::new(vec![a, b], vec![level])
    }

    /// `1_{(lo, hi]}` on the domain `(a, b]`.
    pub fn indicator(a: f64, b: f64, lo: f64, hi: f64) -> Result<Self> {
        let mut breaks = vec![a];
        let mut levels = Vec::new();
        let lo = lo.clamp(a, b);
        let hi = hi.clamp(lo, b);
        for (x, level) in [(lo, 0.0), (hi, 1.0), (b, 0.0)] {
            if x > *breaks.last().unwrap() {
                breaks.push(x);
                levels.push(level);
            }
        }
        if levels.is_empty() {
            return Err(Error::Precondition("empty domain".into()));
        }
        Self::new(breaks, levels)
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.breaks[0], self.breaks[self.breaks.len() - 1])
    }

    pub fn breaks(&self) -> &[f64] {
        &self.breaks
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn eval(&self, t: f64) -> f64 {
        let (a, b) = self.domain();
        if t <= a || t > b {
            return 0.0;
        }
        // First break >= t closes the interval containing t.
        let i = self.breaks.partition_point(|&x| x < t);
        self.levels[i - 1]
    }

    /// Same function on a partition that also contains `points`.
    pub fn refine(&self, points: &[f64]) -> Self {
        let (a, b) = self.domain();
        let mut breaks = self.breaks.clone();
        breaks.extend(points.iter().copied().filter(|&x| x > a && x < b));
        breaks.sort_by(f64::total_cmp);
        breaks.dedup();
        let levels = breaks.windows(2).map(|w| self.eval(representative(w[0], w[1]))).collect();
        Self { breaks, levels }
    }

    fn on_common_partition(&self, other: &Self) -> Result<(Self, Self)> {
        if self.domain() != other.domain() {
            return Err(Error::Precondition(format!(
                "step functions on different domains {:?} and {:?}",
                self.domain(),
                other.domain()
            )));
        }
        Ok((self.refine(&other.breaks), other.refine(&self.breaks)))
    }

    pub fn product(&self, other: &Self) -> Result<Self> {
        let (x, y) = self.on_common_partition(other)?;
        let levels = x.levels.iter().zip(&y.levels).map(|(p, q)| p * q).collect();
        Ok(Self { breaks: x.breaks, levels })
    }

    /// `alpha * self + beta * other`.
    pub fn combine(&self, alpha: f64, other: &Self, beta: f64) -> Result<Self> {
        let (x, y) = self.on_common_partition(other)?;
        let levels = x.levels.iter().zip(&y.levels).map(|(p, q)| alpha * p + beta * q).collect();
        Ok(Self { breaks: x.breaks, levels })
    }
}

/// A point strictly inside `(lo, hi)`, also when `hi` is infinite.
fn representative(lo: f64, hi: f64) -> f64 {
    if hi.is_finite() {
        0.5 * (lo + hi)
    } else {
        lo + 1.0
    }
}

/// A right-continuous function with left limits on `(a, b]`. Values before `a`
/// are `f(a)`, the right limit at `a`; values after `b` are `f(b)`.
pub trait Cadlag: Send + Sync + fmt::Debug {
    fn domain(&self) -> (f64, f64);
    fn eval(&self, t: f64) -> f64;
    fn left_limit(&self, t: f64) -> f64;
    /// Points where the function may jump or change its formula.
    fn knots(&self) -> Vec<f64>;
}

/// Shared handle to a càdlàg function.
#[derive(Clone, Debug)]
pub struct CadlagFunction(Arc<dyn Cadlag>);

impl CadlagFunction {
    pub fn new(f: impl Cadlag + 'static) -> Self {
        Self(Arc::new(f))
    }

    pub fn domain(&self) -> (f64, f64) {
        self.0.domain()
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.0.eval(t)
    }

    pub fn left_limit(&self, t: f64) -> f64 {
        self.0.left_limit(t)
    }

    /// `f(t) - f(t-)`.
    pub fn jump(&self, t: f64) -> f64 {
        self.eval(t) - self.left_limit(t)
    }

    pub fn knots(&self) -> Vec<f64> {
        self.0.knots()
    }

    /// `sum_i c_i f_i` on a common domain.
    pub fn linear_combination(terms: Vec<(f64, CadlagFunction)>) -> Result<Self> {
        let domain = terms.first().ok_or_else(|| Error::Precondition("no terms".into()))?.1.domain();
        if terms.iter().any(|(_, f)| f.domain() != domain) {
            return Err(Error::Precondition("terms live on different domains".into()));
        }
        Ok(Self::new(Linear { domain, terms }))
    }
}

/// Piecewise polynomial: on `[knots[i], knots[i+1])` the value is
/// `sum_k coeffs[i][k] (t - knots[i])^k`. Jumps may occur at interior knots.
#[derive(Debug, Clone)]
pub struct PiecewisePolynomial {
    knots: Vec<f64>,
    coeffs: Vec<Vec<f64>>,
}

impl PiecewisePolynomial {
    pub fn new(knots: Vec<f64>, coeffs: Vec<Vec<f64>>) -> Result<Self> {
        if knots.len() < 2 || knots.len() != coeffs.len() + 1 {
            return Err(Error::Precondition("need one polynomial per knot interval".into()));
        }
        if knots.windows(2).any(|w| !(w[0] < w[1])) || !knots[0].is_finite() {
            return Err(Error::Precondition("knots must be strictly increasing".into()));
        }
        Ok(Self { knots, coeffs })
    }

    fn piece(&self, i: usize, t: f64) -> f64 {
        let x = t - self.knots[i];
        self.coeffs[i].iter().rev().fold(0.0, |acc, c| acc * x + c)
    }

    fn clamp(&self, t: f64) -> f64 {
        t.clamp(self.knots[0], self.knots[self.knots.len() - 1])
    }
}

impl Cadlag for PiecewisePolynomial {
    fn domain(&self) -> (f64, f64) {
        (self.knots[0], self.knots[self.knots.len() - 1])
    }

    fn eval(&self, t: f64) -> f64 {
        let t = self.clamp(t);
        let i = self.knots.partition_point(|&x| x <= t).clamp(1, self.coeffs.len());
        self.piece(i - 1, t)
    }

    fn left_limit(&self, t: f64) -> f64 {
        let t = self.clamp(t);
        if t <= self.knots[0] {
            return self.eval(t);
        }
        let i = self.knots.partition_point(|&x| x < t).clamp(1, self.coeffs.len());
        self.piece(i - 1, t)
    }

    fn knots(&self) -> Vec<f64> {
        self.knots.iter().copied().filter(|x| x.is_finite()).collect()
    }
}

/// A [`GridPath`](crate::paths::GridPath) read as a càdlàg step function: the
/// value `v_k` holds on `[t_k, t_{k+1})`.
#[derive(Debug, Clone)]
pub struct GridStep {
    times: Vec<f64>,
    values: Vec<f64>,
}

impl GridStep {
    pub fn new(path: &crate::paths::GridPath) -> Self {
        Self { times: path.grid().times(), values: path.values().to_vec() }
    }
}

impl Cadlag for GridStep {
    fn domain(&self) -> (f64, f64) {
        (self.times[0], self.times[self.times.len() - 1])
    }

    fn eval(&self, t: f64) -> f64 {
        let i = self.times.partition_point(|&x| x <= t).max(1);
        self.values[i - 1]
    }

    fn left_limit(&self, t: f64) -> f64 {
        let i = self.times.partition_point(|&x| x < t).max(1);
        self.values[i - 1]
    }

    fn knots(&self) -> Vec<f64> {
        self.times.clone()
    }
}

#[derive(Debug)]
struct Stopped {
    f: CadlagFunction,
    c: f64,
}

impl Cadlag for Stopped {
    fn domain(&self) -> (f64, f64) {
        self.f.domain()
    }

    fn eval(&self, t: f64) -> f64 {
        self.f.eval(t.min(self.c))
    }

    fn left_limit(&self, t: f64) -> f64 {
        stopped_left_limit(&self.f, self.c, t)
    }

    fn knots(&self) -> Vec<f64> {
        let mut k = self.f.knots();
        if self.c.is_finite() {
            k.push(self.c);
        }
        k
    }
}

/// Left limit at `t` of `f` stopped at `c`.
fn stopped_left_limit(f: &CadlagFunction, c: f64, t: f64) -> f64 {
    if t <= c {
        f.left_limit(t)
    } else {
        f.eval(c)
    }
}

#[derive(Debug)]
struct Integral {
    h: LeftStepFunction,
    f: CadlagFunction,
}

impl Cadlag for Integral {
    fn domain(&self) -> (f64, f64) {
        self.h.domain()
    }

    fn eval(&self, t: f64) -> f64 {
        let x = &self.h.breaks;
        self.h
            .levels
            .iter()
            .enumerate()
            .filter(|(_, d)| **d != 0.0)
            .map(|(i, d)| d * (self.f.eval(t.min(x[i + 1])) - self.f.eval(t.min(x[i]))))
            .sum()
    }

    fn left_limit(&self, t: f64) -> f64 {
        let x = &self.h.breaks;
        self.h
            .levels
            .iter()
            .enumerate()
            .filter(|(_, d)| **d != 0.0)
            .map(|(i, d)| d * (stopped_left_limit(&self.f, x[i + 1], t) - stopped_left_limit(&self.f, x[i], t)))
            .sum()
    }

    fn knots(&self) -> Vec<f64> {
        let mut k = self.f.knots();
        k.extend(self.h.breaks.iter().copied().filter(|x| x.is_finite()));
        k
    }
}

#[derive(Debug)]
struct Linear {
    domain: (f64, f64),
    terms: Vec<(f64, CadlagFunction)>,
}

impl Cadlag for Linear {
    fn domain(&self) -> (f64, f64) {
        self.domain
    }

    fn eval(&self, t: f64) -> f64 {
        self.terms.iter().map(|(c, f)| c * f.eval(t)).sum()
    }

    fn left_limit(&self, t: f64) -> f64 {
        self.terms.iter().map(|(c, f)| c * f.left_limit(t)).sum()
    }

    fn knots(&self) -> Vec<f64> {
        self.terms.iter().flat_map(|(_, f)| f.knots()).collect()
    }
}

/// `f^c(t) = f(t ∧ c)`. For `c <= a` this is the constant `f(a)`.
pub fn stop(f: &CadlagFunction, c: f64) -> CadlagFunction {
    CadlagFunction::new(Stopped { f: f.clone(), c })
}

/// The elementary integral `h·f`.
pub fn elem_integral(h: &LeftStepFunction, f: &CadlagFunction) -> Result<CadlagFunction> {
    if h.domain() != f.domain() {
        return Err(Error::Precondition(format!(
            "integrand domain {:?} differs from integrator domain {:?}",
            h.domain(),
            f.domain()
        )));
    }
    Ok(CadlagFunction::new(Integral { h: h.clone(), f: f.clone() }))
}

/// `Δ_t(h·f) = h(t) 1_{a < t <= b} Δ_t f`.
pub fn jump_of_integral(h: &LeftStepFunction, f: &CadlagFunction, t: f64) -> f64 {
    let (a, b) = h.domain();
    if t <= a || t > b {
        return 0.0;
    }
    h.eval(t) * f.jump(t)
}

/// Points at which two càdlàg functions are compared: every knot, points just
/// around each knot, midpoints between knots, plus `extra`.
pub fn probe_points(fs: &[&CadlagFunction], extra: &[f64]) -> Vec<f64> {
    let (a, b) = fs[0].domain();
    let mut knots: Vec<f64> = fs
        .iter()
        .flat_map(|f| f.knots())
        .chain(extra.iter().copied())
        .chain([a, b])
        .filter(|x| x.is_finite())
        .collect();
    knots.sort_by(f64::total_cmp);
    knots.dedup();
    let mut pts = knots.clone();
    for w in knots.windows(2) {
        pts.push(0.5 * (w[0] + w[1]));
        let eps = 1e-9 * (w[1] - w[0]);
        pts.push(w[0] + eps);
        pts.push(w[1] - eps);
    }
    if let Some(&last) = knots.last() {
        pts.push(last + 1.0);
    }
    pts
}

fn relative_gap(x: f64, y: f64) -> f64 {
    (x - y).abs() / 1f64.max(x.abs()).max(y.abs())
}

/// Largest relative discrepancy between `f` and `g`, in values and left
/// limits, over [`probe_points`].
pub fn max_relative_difference(f: &CadlagFunction, g: &CadlagFunction, extra: &[f64]) -> f64 {
    probe_points(&[f, g], extra)
        .into_iter()
        .map(|t| relative_gap(f.eval(t), g.eval(t)).max(relative_gap(f.left_limit(t), g.left_limit(t))))
        .fold(0.0, f64::max)
}

/// Relative tolerance of the exact identities checked in this module.
pub const IDENTITY_TOL: f64 = 1e-12;

/// Whether `g·(h·f)` and `(gh)·f` agree to [`IDENTITY_TOL`].
pub fn check_composition(g: &LeftStepFunction, h: &LeftStepFunction, f: &CadlagFunction) -> Result<bool> {
    let inner = elem_integral(h, f)?;
    let lhs = elem_integral(g, &inner)?;
    let rhs = elem_integral(&g.product(h)?, f)?;
    Ok(max_relative_difference(&lhs, &rhs, &[]) <= IDENTITY_TOL)
}

/// Finite family of left-open intervals `(a_i, b_i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LeftIntervalSet {
    intervals: Vec<(f64, f64)>,
}

impl LeftIntervalSet {
    pub fn new(intervals: Vec<(f64, f64)>) -> Result<Self> {
        if let Some(&(a, b)) = intervals.iter().find(|(a, b)| !(a < b) || !a.is_finite()) {
            return Err(Error::Precondition(format!("({a}, {b}] is not a nonempty interval")));
        }
        Ok(Self { intervals })
    }

    pub fn intervals(&self) -> &[(f64, f64)] {
        &self.intervals
    }

    /// Connected components of the union, sorted.
    pub fn components(&self) -> Vec<(f64, f64)> {
        let mut sorted = self.intervals.clone();
        sorted.sort_by(|x, y| x.0.total_cmp(&y.0));
        let mut out: Vec<(f64, f64)> = Vec::new();
        for (a, b) in sorted {
            match out.last_mut() {
                Some(last) if a <= last.1 => last.1 = last.1.max(b),
                _ => out.push((a, b)),
            }
        }
        out
    }

    pub fn contains(&self, t: f64) -> bool {
        self.intervals.iter().any(|&(a, b)| a < t && t <= b)
    }

    /// Checks that `(lo, hi]` lies in the union; otherwise reports the first
    /// uncovered point, or a point arbitrarily close above it.
    pub fn check_covers(&self, lo: f64, hi: f64) -> Result<()> {
        let mut reach = lo;
        for (a, b) in self.components() {
            if b <= reach {
                continue;
            }
            if a > reach {
                return Err(Error::Uncovered { point: a.min(hi) });
            }
            reach = b;
            if reach >= hi {
                return Ok(());
            }
        }
        if reach >= hi {
            Ok(())
        } else {
            Err(Error::Uncovered { point: reach })
        }
    }
}

/// Classification of a right endpoint `b_i` relative to the other intervals.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EndpointType {
    /// Some interval contains `b_i` in its interior.
    First,
    /// Not first, and `b_i` is the left endpoint of some interval.
    Second,
    Third,
}

pub fn classify_endpoints(set: &LeftIntervalSet) -> Vec<EndpointType> {
    let iv = &set.intervals;
    iv.iter()
        .map(|&(_, b)| {
            if iv.iter().any(|&(aj, bj)| aj < b && b < bj) {
                EndpointType::First
            } else if iv.iter().any(|&(aj, _)| aj == b) {
                EndpointType::Second
            } else {
                EndpointType::Third
            }
        })
        .collect()
}

/// Indicator of `(lo, hi] ∩ (first `count` intervals)` as a step function on
/// `domain`.
pub fn union_indicator(
    set: &LeftIntervalSet,
    count: usize,
    domain: (f64, f64),
    window: (f64, f64),
) -> Result<LeftStepFunction> {
    let (a, b) = domain;
    let mut h = LeftStepFunction::constant(a, b, 0.0)?;
    let part = LeftIntervalSet { intervals: set.intervals[..count].to_vec() };
    for (lo, hi) in part.components() {
        let lo = lo.max(window.0);
        let hi = hi.min(window.1);
        if lo < hi {
            h = h.combine(1.0, &LeftStepFunction::indicator(a, b, lo, hi)?, 1.0)?;
        }
    }
    Ok(h)
}

/// `1_{(lo, hi]} 1_{∪ B} · f`, built from the partial unions `B_1 ∪ ... ∪ B_n`.
/// The window must be covered by the union, in which case the result is
/// `f^{hi} - f(lo)` from `lo` on.
pub fn union_integral(set: &LeftIntervalSet, f: &CadlagFunction, window: (f64, f64)) -> Result<CadlagFunction> {
    let (lo, hi) = window;
    let (a, b) = f.domain();
    if !(a <= lo && lo < hi && hi <= b) {
        return Err(Error::Precondition(format!("window ({lo}, {hi}] is not inside ({a}, {b}]")));
    }
    set.check_covers(lo, hi)?;
    let mut integral = elem_integral(&LeftStepFunction::constant(a, b, 0.0)?, f)?;
    for n in 1..=set.intervals.len() {
        integral = elem_integral(&union_indicator(set, n, (a, b), window)?, f)?;
    }
    Ok(integral)
}
