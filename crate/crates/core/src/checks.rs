//! Randomized deterministic suites for the exact identities of the
//! elementary integral and of the gluing construction, plus the comparison
//! of the glued boundary compensator with the future infimum on Bessel
//! paths.
//!
//! Every suite is a pure function of its seed.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::elemint::{
    elem_integral, jump_of_integral, max_relative_difference, stop, union_integral, CadlagFunction, LeftIntervalSet,
    LeftStepFunction, PiecewisePolynomial, IDENTITY_TOL,
};
use crate::error::Result;
use crate::gluing::{excursion_pieces, glue, ladder_sum, Piece, PieceSystem};
use crate::paths::{bes3_path, future_infimum, path_rng, Bes3Method, GridPath, InfimumResolution, ScaleFunction, Stream, TimeGrid};

/// Outcome of one randomized identity suite.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub cases: usize,
    /// Largest relative discrepancy seen.
    pub max_error: f64,
    /// Cases violating a structural (non-numeric) requirement.
    pub failures: usize,
    pub tolerance: f64,
}

impl CheckOutcome {
    pub fn pass(&self) -> bool {
        self.max_error <= self.tolerance && self.failures == 0
    }
}

const DOMAIN: (f64, f64) = (0.0, 4.0);

/// Random point, snapped to a coarse lattice half of the time so that
/// breakpoints of different functions coincide.
fn point(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    let x = rng.random_range(lo..hi);
    if rng.random_bool(0.5) {
        let snapped = (x * 4.0).round() / 4.0;
        if snapped > lo && snapped < hi {
            return snapped;
        }
    }
    x
}

fn sorted_points(rng: &mut impl Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    let mut v: Vec<f64> = (0..n).map(|_| point(rng, lo, hi)).collect();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

pub fn random_step(rng: &mut impl Rng, (a, b): (f64, f64)) -> LeftStepFunction {
    let n = rng.random_range(0..6);
    let mut breaks = vec![a];
    breaks.extend(sorted_points(rng, n, a, b));
    breaks.push(b);
    let levels = (0..breaks.len() - 1).map(|_| rng.random_range(-3.0..3.0)).collect();
    LeftStepFunction::new(breaks, levels).expect("valid random step function")
}

/// Piecewise polynomial of degree at most 3 with a jump at every interior
/// knot; `forced` knots are always included.
pub fn random_cadlag(rng: &mut impl Rng, (a, b): (f64, f64), forced: &[f64]) -> CadlagFunction {
    let n = rng.random_range(0..5);
    let mut knots = vec![a];
    let mut inner = sorted_points(rng, n, a, b);
    inner.extend(forced.iter().copied().filter(|&x| x > a && x < b));
    inner.sort_by(f64::total_cmp);
    inner.dedup();
    knots.extend(inner);
    knots.push(b);
    let coeffs = (0..knots.len() - 1)
        .map(|_| {
            let deg = rng.random_range(0..4);
            (0..=deg).map(|_| rng.random_range(-2.0..2.0)).collect()
        })
        .collect();
    CadlagFunction::new(PiecewisePolynomial::new(knots, coeffs).expect("valid random polynomial"))
}

fn rel(x: f64, y: f64) -> f64 {
    (x - y).abs() / 1f64.max(x.abs()).max(y.abs())
}

/// The five properties of the elementary integral on `cases` random
/// `(h, g, f, c)`: representation independence, bilinearity, composition,
/// commutation with stopping, and the jump formula.
pub fn elementary_integral_suite(seed: u64, cases: usize) -> Result<Vec<CheckOutcome>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut errs = [0.0f64; 5];
    for _ in 0..cases {
        let h = random_step(&mut rng, DOMAIN);
        let g = random_step(&mut rng, DOMAIN);
        let mut jumps_at: Vec<f64> = h.breaks().to_vec();
        jumps_at.extend_from_slice(g.breaks());
        let forced = rng.random_range(0..jumps_at.len());
        let f = random_cadlag(&mut rng, DOMAIN, &jumps_at[..forced]);
        let f2 = random_cadlag(&mut rng, DOMAIN, &[]);
        let c = point(&mut rng, DOMAIN.0 - 0.5, DOMAIN.1 + 0.5);
        let (alpha, beta) = (rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
        let hf = elem_integral(&h, &f)?;

        let extra = sorted_points(&mut rng, 4, DOMAIN.0, DOMAIN.1);
        let refined = elem_integral(&h.refine(&extra), &f)?;
        errs[0] = errs[0].max(max_relative_difference(&hf, &refined, &[]));

        let lhs = elem_integral(&h.combine(alpha, &g, beta)?, &f)?;
        let rhs = CadlagFunction::linear_combination(vec![(alpha, hf.clone()), (beta, elem_integral(&g, &f)?)])?;
        errs[1] = errs[1].max(max_relative_difference(&lhs, &rhs, &[]));
        let lhs = elem_integral(&h, &CadlagFunction::linear_combination(vec![(alpha, f.clone()), (beta, f2.clone())])?)?;
        let rhs = CadlagFunction::linear_combination(vec![(alpha, hf.clone()), (beta, elem_integral(&h, &f2)?)])?;
        errs[1] = errs[1].max(max_relative_difference(&lhs, &rhs, &[]));

        let lhs = elem_integral(&g, &hf)?;
        let rhs = elem_integral(&g.product(&h)?, &f)?;
        errs[2] = errs[2].max(max_relative_difference(&lhs, &rhs, &[]));

        let lhs = stop(&hf, c);
        let rhs = elem_integral(&h, &stop(&f, c))?;
        errs[3] = errs[3].max(max_relative_difference(&lhs, &rhs, &[c]));

        let mut probes = f.knots();
        probes.extend_from_slice(h.breaks());
        probes.extend([c, DOMAIN.0 - 1.0, DOMAIN.1 + 1.0]);
        for t in probes {
            errs[4] = errs[4].max(rel(jump_of_integral(&h, &f, t), hf.jump(t)));
        }
    }
    let names = ["representation", "bilinearity", "composition", "stopping", "jumps"];
    Ok(names
        .iter()
        .zip(errs)
        .map(|(&name, max_error)| CheckOutcome { name, cases, max_error, failures: 0, tolerance: IDENTITY_TOL })
        .collect())
}

/// A finite covering of `(lo, hi]` built as a chain of overlapping or
/// abutting intervals, padded with unrelated intervals and shuffled.
pub fn random_covering(rng: &mut impl Rng, (lo, hi): (f64, f64), domain: (f64, f64)) -> (LeftIntervalSet, Vec<f64>) {
    let mut intervals = Vec::new();
    let mut junctions = Vec::new();
    let mut reach = rng.random_range(domain.0..lo);
    let mut left = reach;
    while reach < hi {
        let start = if rng.random_bool(0.4) {
            junctions.push(reach);
            reach
        } else {
            rng.random_range(left..reach.max(left + 1e-3)).min(reach)
        };
        let end = (reach + rng.random_range(0.2..2.0)).min(domain.1);
        let end = if rng.random_bool(0.3) { (end * 8.0).ceil() / 8.0 } else { end }.min(domain.1);
        if end <= reach {
            break;
        }
        intervals.push((start, end));
        left = start;
        reach = end;
    }
    for _ in 0..rng.random_range(0..4) {
        let a = rng.random_range(domain.0..domain.1 - 0.5);
        intervals.push((a, a + rng.random_range(0.1..0.5)));
    }
    intervals.shuffle(rng);
    (LeftIntervalSet::new(intervals).expect("nonempty intervals"), junctions)
}

/// Union integrals over random coverings (with abutting junctions and jumps
/// of `f` placed at the junctions) against `1_{(lo, hi]}·f`.
pub fn union_integral_suite(seed: u64, cases: usize) -> Result<CheckOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let domain = (0.0, 10.0);
    let mut max_error = 0.0f64;
    for _ in 0..cases {
        let window = (rng.random_range(0.5..2.0), rng.random_range(6.0..9.5));
        let (set, junctions) = random_covering(&mut rng, window, domain);
        let f = random_cadlag(&mut rng, domain, &junctions);
        let got = union_integral(&set, &f, window)?;
        let want = elem_integral(&LeftStepFunction::indicator(domain.0, domain.1, window.0, window.1)?, &f)?;
        let ends: Vec<f64> = set.intervals().iter().flat_map(|&(a, b)| [a, b]).collect();
        max_error = max_error.max(max_relative_difference(&got, &want, &ends));
    }
    Ok(CheckOutcome { name: "union", cases, max_error, failures: 0, tolerance: IDENTITY_TOL })
}

/// `A = ∪_s (s, d_s]` by direct enumeration of `s`. Pieces have grid
/// endpoints, so a grid point is covered only together with its step, and an
/// interior point of covered step `j` reaches every index from `j` to `d`.
pub fn brute_force_a_mask(covered: &[bool]) -> Vec<bool> {
    let n = covered.len();
    let first_uncovered = |from: usize| (from..n).find(|&j| !covered[j]).unwrap_or(n - 1);
    let mut a = vec![false; n];
    for s in 0..n {
        if covered[s] {
            a[s..=first_uncovered(s)].iter_mut().for_each(|m| *m = true);
        }
    }
    a
}

/// `A_ε` by direct enumeration: `j - g_j > m` with `g_j` the last uncovered
/// index before `j`.
pub fn brute_force_eps_mask(covered: &[bool], m: usize) -> Vec<bool> {
    (0..covered.len())
        .map(|j| j > 0 && j - (0..j).rev().find(|&i| !covered[i]).unwrap_or(0) > m)
        .collect()
}

/// A random system of pieces on `steps` steps: a random walk `Š`, pieces
/// with random lengths, `S = Š + D` with `D` a random walk on the covered
/// indices and 0 elsewhere, a shared drift, and random jump flags.
pub fn random_piece_system(rng: &mut impl Rng, steps: usize) -> Result<PieceSystem> {
    let grid = TimeGrid::new(1.0 / steps as f64, steps)?;
    let n = grid.len();
    let walk = |rng: &mut dyn rand::RngCore, sd: f64| -> Vec<f64> {
        let mut v = vec![0.0; n];
        for k in 1..n {
            v[k] = v[k - 1] + sd * (rng.random::<f64>() - 0.5);
        }
        v
    };
    let s_check = walk(rng, 0.1);
    let chi_inc: Vec<f64> = (0..steps).map(|_| rng.random_range(-0.01..0.01)).collect();

    let mut pieces = Vec::new();
    let mut covered = vec![false; n];
    for _ in 0..rng.random_range(1..30) {
        let start = rng.random_range(0..steps);
        let len = rng.random_range(1..=(steps / 8).max(1));
        let end = (start + len).min(steps);
        let mut incs = vec![0.0; steps];
        incs[start..end].copy_from_slice(&chi_inc[start..end]);
        pieces.push(Piece::new(start, end, GridPath::from_increments(grid, 0.0, &incs)?)?);
        covered[start + 1..=end].iter_mut().for_each(|c| *c = true);
    }

    let mut d = vec![0.0; n];
    if covered[1] {
        d[0] = rng.random_range(-0.5..0.5);
    }
    for j in 1..n {
        if covered[j] {
            d[j] = d[j - 1] + rng.random_range(-0.2..0.2);
        }
    }
    let s: Vec<f64> = s_check.iter().zip(&d).map(|(a, b)| a + b).collect();
    let jumps: Vec<bool> = (0..n).map(|_| rng.random_bool(0.2)).collect();
    PieceSystem::new(GridPath::new(grid, s)?, GridPath::new(grid, s_check)?, pieces)?.with_jump_steps(jumps)
}

/// Glues random piece systems and checks exact reconstruction of `S`,
/// monotone compensators supported off `A`, the masks against brute force
/// and the ladder-sum identity.
pub fn gluing_suite(seed: u64, cases: usize, steps: usize) -> Result<CheckOutcome> {
    let eps_steps = [1usize, 3, 10];
    let outcomes = (0..cases)
        .into_par_iter()
        .map(|i| -> Result<(f64, bool)> {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let sys = random_piece_system(&mut rng, steps)?;
            let dt = sys.grid().dt();
            let eps: Vec<f64> = eps_steps.iter().map(|&m| m as f64 * dt).collect();
            let dec = glue(&sys, &eps)?;

            let scale = sys.s().values().iter().fold(1f64, |m, v| m.max(v.abs()));
            let rebuilt = dec.reconstruct(&sys);
            let err = rebuilt.values().iter().zip(sys.s().values()).map(|(a, b)| (a - b).abs() / scale).fold(0.0, f64::max);

            let mut ok = dec.sets.a_mask == brute_force_a_mask(sys.covered());
            for v in [&dec.v_plus, &dec.v_minus] {
                for (k, dv) in v.increments().enumerate() {
                    ok &= dv >= 0.0 && (dv == 0.0 || !dec.sets.a_mask[k + 1]);
                }
            }
            let xp = GridPath::new(sys.grid(), sys.difference().iter().map(|v| v.max(0.0)).collect())?;
            for (level, lad) in dec.sets.levels.iter().zip(&dec.ladder) {
                ok &= level.mask == brute_force_eps_mask(sys.covered(), level.eps_steps);
                let sum = ladder_sum(&xp, &level.rungs);
                ok &= sum.values().iter().zip(lad.v_plus.values()).all(|(a, b)| (a - b).abs() <= 1e-12 * scale);
            }
            Ok((err, ok))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CheckOutcome {
        name: "gluing",
        cases,
        max_error: outcomes.iter().map(|o| o.0).fold(0.0, f64::max),
        failures: outcomes.iter().filter(|o| !o.1).count(),
        tolerance: 1e-12,
    })
}

/// Per-path result of gluing `S = e(R)` to `Š = e(I)` for a Bessel path `R`
/// and its future infimum `I`, with `e(z) = -1/z`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InfimumGluing {
    /// Finite-ε compensator `V^+_T` from the ε-ladder.
    pub v_plus: f64,
    /// `e(I_T) - e(I_0)`.
    pub target: f64,
    /// `|v_plus - target| / max(target, floor)`.
    pub relative_error: f64,
    /// `l^∪_T`, twice the discrete Tanaka residual on `A`.
    pub l_union: f64,
    pub reconstruction_error: f64,
}

/// Glues the excursions of `e(R) - e(I)` away from 0 (pieces `(u, D_u]`) on
/// `n_paths` Bessel paths from `r0`, and compares the ladder compensator at
/// `eps_steps` steps with `e(I_T) - e(I_0)`.
pub fn infimum_gluing(
    grid: TimeGrid,
    r0: f64,
    n_paths: usize,
    seed: u64,
    eps_steps: usize,
    floor: f64,
) -> Result<Vec<InfimumGluing>> {
    let scale = ScaleFunction::Bes3;
    (0..n_paths)
        .into_par_iter()
        .map(|i| {
            let r = bes3_path(grid, r0, seed, i, Bes3Method::PitmanConstruction)?;
            let mut rng = path_rng(seed, Stream::InfimumTail, i);
            let inf = future_infimum(&r, &scale, &mut rng, InfimumResolution::Grid)?;
            let s = r.map(|z| scale.eval(z));
            let s_check = inf.map(|z| scale.eval(z));
            let pieces = excursion_pieces(&s, &s_check, |j| {
                let ds = s.value(j) - s.value(j - 1);
                ds * ds / s.value(j - 1)
            })?;
            let sys = PieceSystem::new(s.clone(), s_check.clone(), pieces)?;
            let dec = glue(&sys, &[eps_steps as f64 * grid.dt()])?;
            let v_plus = dec.ladder[0].v_plus.terminal();
            let target = s_check.terminal() - s_check.initial();
            let rebuilt = dec.reconstruct(&sys);
            let reconstruction_error =
                rebuilt.values().iter().zip(s.values()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            Ok(InfimumGluing {
                v_plus,
                target,
                relative_error: (v_plus - target).abs() / target.max(floor),
                l_union: dec.l_union.terminal(),
                reconstruction_error,
            })
        })
        .collect()
}
