//! Gluing local semimartingale decompositions, given on random left intervals
//! ("pieces"), into a global decomposition on a time grid.
//!
//! Grid conventions: grid index `j >= 1` stands for the step `(t_{j-1}, t_j]`,
//! and a piece `(T, U]` with grid endpoints covers the indices `T < j <= U`.
//! Index 0 is never covered. By default the grid values are samples of
//! continuous paths, so no increment counts as a jump; synthetic càdlàg inputs
//! flag their jump steps with [`PieceSystem::with_jump_steps`].

use crate::error::{Error, Result};
use crate::paths::{ensure_same_grid, GridPath, TimeGrid};

/// Absolute tolerance, relative to the scale of the data, under which two
/// values are treated as equal.
const COINCIDE_TOL: f64 = 1e-12;

fn coincide(a: f64, b: f64) -> bool {
    (a - b).abs() <= COINCIDE_TOL * 1f64.max(a.abs()).max(b.abs())
}

/// A random left interval `(start, end]` (as grid indices) together with the
/// drift `chi` of the integral of the process over it.
#[derive(Debug, Clone)]
pub struct Piece {
    start: usize,
    end: usize,
    chi: GridPath,
}

impl Piece {
    /// `chi` must be constant outside the piece.
    pub fn new(start: usize, end: usize, chi: GridPath) -> Result<Self> {
        if start >= end || end > chi.grid().steps() {
            return Err(Error::Precondition(format!(
                "piece ({start}, {end}] is empty or leaves the grid of {} steps",
                chi.grid().steps()
            )));
        }
        let v = chi.values();
        for j in 1..v.len() {
            if !(start < j && j <= end) && !coincide(v[j], v[j - 1]) {
                return Err(Error::Data { index: j, reason: "piece drift moves outside its interval".into() });
            }
        }
        Ok(Self { start, end, chi })
    }

    /// Piece with a zero drift.
    pub fn without_drift(grid: TimeGrid, start: usize, end: usize) -> Result<Self> {
        Self::new(start, end, GridPath::constant(grid, 0.0))
    }

    pub fn start(&self) -> usize {
        self.start
    }

    pub fn end(&self) -> usize {
        self.end
    }

    pub fn chi(&self) -> &GridPath {
        &self.chi
    }

    pub fn covers(&self, j: usize) -> bool {
        self.start < j && j <= self.end
    }
}

/// A process `S`, a reference process `Š` and pieces whose union contains
/// every grid index `j >= 1` with `S_j != Š_j`.
#[derive(Debug, Clone)]
pub struct PieceSystem {
    s: GridPath,
    s_check: GridPath,
    pieces: Vec<Piece>,
    jump_steps: Vec<bool>,
    covered: Vec<bool>,
}

impl PieceSystem {
    pub fn new(s: GridPath, s_check: GridPath, pieces: Vec<Piece>) -> Result<Self> {
        let grid = s.grid();
        ensure_same_grid(&grid, &s_check.grid())?;
        for p in &pieces {
            ensure_same_grid(&grid, &p.chi.grid())?;
        }
        let mut covered = vec![false; grid.len()];
        for p in &pieces {
            covered[p.start + 1..=p.end].iter_mut().for_each(|c| *c = true);
        }
        for j in 1..grid.len() {
            if !covered[j] && !coincide(s.value(j), s_check.value(j)) {
                return Err(Error::Data {
                    index: j,
                    reason: format!("S = {} differs from Š = {} outside every piece", s.value(j), s_check.value(j)),
                });
            }
        }
        Ok(Self { s, s_check, pieces, jump_steps: vec![false; grid.len()], covered })
    }

    /// Marks the steps whose increments are jumps; `mask[j]` refers to step
    /// `(t_{j-1}, t_j]` and `mask[0]` is ignored.
    pub fn with_jump_steps(mut self, mask: Vec<bool>) -> Result<Self> {
        if mask.len() != self.s.grid().len() {
            return Err(Error::GridMismatch("jump mask does not match the grid".into()));
        }
        self.jump_steps = mask;
        self.jump_steps[0] = false;
        Ok(self)
    }

    /// Treats every grid increment as a jump (a piecewise constant càdlàg path).
    pub fn with_all_jumps(mut self) -> Self {
        self.jump_steps.iter_mut().skip(1).for_each(|j| *j = true);
        self
    }

    pub fn grid(&self) -> TimeGrid {
        self.s.grid()
    }

    pub fn s(&self) -> &GridPath {
        &self.s
    }

    pub fn s_check(&self) -> &GridPath {
        &self.s_check
    }

    pub fn pieces(&self) -> &[Piece] {
        &self.pieces
    }

    pub fn covered(&self) -> &[bool] {
        &self.covered
    }

    pub fn jump_steps(&self) -> &[bool] {
        &self.jump_steps
    }

    /// `S - Š` at every grid point.
    pub fn difference(&self) -> Vec<f64> {
        self.s.values().iter().zip(self.s_check.values()).map(|(a, b)| a - b).collect()
    }
}

fn first_uncovered_from(covered: &[bool], r: usize) -> Option<usize> {
    (r..covered.len()).find(|&j| !covered[j])
}

/// `d_R`: the first grid time at or after grid index `r` outside every piece,
/// `+inf` if the pieces cover everything up to the horizon.
pub fn compute_d(system: &PieceSystem, r: usize) -> Result<f64> {
    if r >= system.covered.len() {
        return Err(Error::Precondition(format!("grid index {r} is past the horizon")));
    }
    Ok(first_uncovered_from(&system.covered, r).map_or(f64::INFINITY, |j| system.grid().time(j)))
}

/// One rung `(R_n, d_{R_n}]` of the ε-ladder, as grid indices; `end` is `None`
/// when `d_{R_n}` lies beyond the horizon.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rung {
    pub start: usize,
    pub end: Option<usize>,
}

impl Rung {
    pub fn contains(&self, j: usize) -> bool {
        self.start < j && self.end.is_none_or(|e| j <= e)
    }
}

/// The set `A_ε = {s : s - g_s > ε}` for one ε.
#[derive(Debug, Clone)]
pub struct EpsLevel {
    pub eps: f64,
    /// ε in grid steps.
    pub eps_steps: usize,
    /// `g` as a grid index: the last uncovered index strictly before `j`.
    pub last_uncovered: Vec<usize>,
    pub mask: Vec<bool>,
    pub rungs: Vec<Rung>,
}

/// The predictable sets of the gluing construction on the grid.
#[derive(Debug, Clone)]
pub struct GluingSets {
    /// `A = ∪_s (s, d_s]`.
    pub a_mask: Vec<bool>,
    /// `C = A \ ∪B`.
    pub c_mask: Vec<bool>,
    /// `1_C Δ(S - Š)` per grid index (not accumulated).
    pub c_jumps: Vec<f64>,
    pub levels: Vec<EpsLevel>,
}

/// Builds `A`, `C`, the thin process on `C`, and for each ε (a positive
/// multiple of `dt`) the set `A_ε` with its ladder of rungs.
pub fn build_sets(system: &PieceSystem, eps_list: &[f64]) -> Result<GluingSets> {
    let grid = system.grid();
    let covered = &system.covered;
    let n = covered.len();
    let d = system.difference();

    let mut a_mask = vec![false; n];
    let mut c_mask = vec![false; n];
    let mut c_jumps = vec![0.0; n];
    for j in 1..n {
        a_mask[j] = covered[j] || covered[j - 1];
        c_mask[j] = a_mask[j] && !covered[j];
        if c_mask[j] && system.jump_steps[j] {
            c_jumps[j] = d[j] - d[j - 1];
        }
    }

    let mut last_uncovered = vec![0usize; n];
    let mut last = 0;
    for j in 1..n {
        last_uncovered[j] = last;
        if !covered[j] {
            last = j;
        }
    }

    let mut levels = Vec::with_capacity(eps_list.len());
    for &eps in eps_list {
        let m = grid
            .steps_in(eps)
            .filter(|&m| m >= 1)
            .ok_or_else(|| Error::Precondition(format!("ε = {eps} is not a positive multiple of dt")))?;
        let mask: Vec<bool> = (0..n).map(|j| j > 0 && j - last_uncovered[j] > m).collect();
        let mut rungs = Vec::new();
        let mut j = 1;
        while j < n {
            if mask[j] {
                let start = j - 1;
                let mut k = j;
                while k + 1 < n && mask[k + 1] {
                    k += 1;
                }
                let end = first_uncovered_from(covered, start);
                if end.is_some_and(|e| e != k) || (end.is_none() && k != n - 1) {
                    return Err(Error::Consistency(format!("rung starting at index {start} does not end at d_R")));
                }
                if let Some(prev) = rungs.last().and_then(|r: &Rung| r.end) {
                    if start < prev + m {
                        return Err(Error::Consistency(format!("rung at index {start} starts within ε of d_R")));
                    }
                }
                rungs.push(Rung { start, end });
                j = k + 1;
            } else {
                j += 1;
            }
        }
        levels.push(EpsLevel { eps, eps_steps: m, last_uncovered: last_uncovered.clone(), mask, rungs });
    }
    Ok(GluingSets { a_mask, c_mask, c_jumps, levels })
}

/// Merges the piece drifts into the single drift `χ^∪` on the union. Pieces
/// that overlap must agree on every common step.
pub fn assemble_chi_union(system: &PieceSystem) -> Result<GridPath> {
    let grid = system.grid();
    let mut increments: Vec<Option<f64>> = vec![None; grid.steps()];
    for p in &system.pieces {
        for j in p.start + 1..=p.end {
            let inc = p.chi.value(j) - p.chi.value(j - 1);
            match increments[j - 1] {
                Some(prev) if !coincide(prev, inc) => {
                    return Err(Error::Data {
                        index: j,
                        reason: format!("overlapping pieces disagree on the drift increment ({prev} vs {inc})"),
                    });
                }
                Some(_) => {}
                None => increments[j - 1] = Some(inc),
            }
        }
    }
    let incs: Vec<f64> = increments.into_iter().map(|x| x.unwrap_or(0.0)).collect();
    GridPath::from_increments(grid, 0.0, &incs)
}

/// The jump process `A_t = sum_{s <= t, s in A, s a sign-crossing jump} |S - Š|_s`.
pub fn jump_compensation(system: &PieceSystem, a_mask: &[bool]) -> Result<GridPath> {
    if a_mask.len() != system.grid().len() {
        return Err(Error::GridMismatch("A mask does not match the grid".into()));
    }
    let d = system.difference();
    let incs: Vec<f64> = (1..d.len())
        .map(|j| {
            if !(a_mask[j] && system.jump_steps[j]) {
                0.0
            } else if d[j - 1] > 0.0 {
                (-d[j]).max(0.0)
            } else {
                d[j].max(0.0)
            }
        })
        .collect();
    GridPath::from_increments(system.grid(), 0.0, &incs)
}

/// `∫ 1_mask dX`, accumulated from 0.
fn masked_integral(x: &[f64], mask: &[bool], grid: TimeGrid) -> GridPath {
    let incs: Vec<f64> = (1..x.len()).map(|j| if mask[j] { x[j] - x[j - 1] } else { 0.0 }).collect();
    GridPath::from_increments(grid, 0.0, &incs).expect("increment count matches grid")
}

/// `X - X_0 - 1_mask·X`, accumulated from the increments off the mask.
fn off_mask_variation(x: &[f64], mask: &[bool], grid: TimeGrid) -> GridPath {
    let inverted: Vec<bool> = mask.iter().map(|m| !m).collect();
    masked_integral(x, &inverted, grid)
}

/// `sum_n (X^{R_n} - X^{d_{R_{n-1}}})` with `d_{R_{-1}} = 0` and a final term
/// `X - X^{d_{R_last}}`. Equals `X - X_0 - 1_{A_ε}·X`.
pub fn ladder_sum(x: &GridPath, rungs: &[Rung]) -> GridPath {
    let v = x.values();
    let stopped = |t: usize, c: Option<usize>| v[c.map_or(t, |c| t.min(c))];
    let values = (0..v.len())
        .map(|t| {
            let mut prev_end = Some(0);
            let mut total = 0.0;
            for r in rungs {
                total += stopped(t, Some(r.start)) - stopped(t, prev_end);
                prev_end = r.end;
            }
            if prev_end.is_some() {
                total += stopped(t, None) - stopped(t, prev_end);
            }
            total
        })
        .collect();
    GridPath::new(x.grid(), values).expect("one value per grid point")
}

/// The stabilized ladder `sum_n X_{R_n} 1{R_n <= t}`.
pub fn record_sum(x: &GridPath, rungs: &[Rung]) -> GridPath {
    let v = x.values();
    let mut incs = vec![0.0; v.len() - 1];
    for r in rungs {
        if r.start > 0 {
            incs[r.start - 1] += v[r.start];
        }
    }
    let start = rungs.first().filter(|r| r.start == 0).map_or(0.0, |_| v[0]);
    GridPath::from_increments(x.grid(), start, &incs).expect("increment count matches grid")
}

/// Finite-ε approximation of `V^±`.
#[derive(Debug, Clone)]
pub struct LadderLevel {
    pub eps: f64,
    /// `X - X_0 - 1_{A_ε}·X` for `X = (S - Š)^+`.
    pub v_plus: GridPath,
    /// Same for `(S - Š)^-`.
    pub v_minus: GridPath,
}

/// Global decomposition `S = S_0 - Š_0 + 1_A·(S - Š) + V^+ - V^- + Š`.
#[derive(Debug, Clone)]
pub struct GluedDecomposition {
    pub sets: GluingSets,
    pub chi_union: GridPath,
    /// The jump process `A`.
    pub jump_process: GridPath,
    /// `1_A·(S - Š)`.
    pub a_integral: GridPath,
    pub v_plus: GridPath,
    pub v_minus: GridPath,
    /// Local-time term `l^∪` of the Tanaka formula restricted to `A`.
    pub l_union: GridPath,
    pub ladder: Vec<LadderLevel>,
    /// Non-fatal findings such as an exploding jump process.
    pub diagnostics: Vec<String>,
}

impl GluedDecomposition {
    pub fn reconstruct(&self, system: &PieceSystem) -> GridPath {
        let s0 = system.s.initial() - system.s_check.initial();
        let values = (0..system.grid().len())
            .map(|k| {
                s0 + self.a_integral.value(k) + self.v_plus.value(k) - self.v_minus.value(k)
                    + system.s_check.value(k)
            })
            .collect();
        GridPath::new(system.grid(), values).expect("one value per grid point")
    }
}

/// Jump process values above this are reported as a diagnostic.
pub const DEFAULT_JUMP_CEILING: f64 = 1e12;

pub fn glue(system: &PieceSystem, eps_list: &[f64]) -> Result<GluedDecomposition> {
    glue_with_ceiling(system, eps_list, DEFAULT_JUMP_CEILING)
}

pub fn glue_with_ceiling(system: &PieceSystem, eps_list: &[f64], ceiling: f64) -> Result<GluedDecomposition> {
    let grid = system.grid();
    let sets = build_sets(system, eps_list)?;
    let chi_union = assemble_chi_union(system)?;
    let jump_process = jump_compensation(system, &sets.a_mask)?;

    let d = system.difference();
    let xp: Vec<f64> = d.iter().map(|v| v.max(0.0)).collect();
    let xm: Vec<f64> = d.iter().map(|v| (-v).max(0.0)).collect();
    let scale = d.iter().fold(1f64, |m, v| m.max(v.abs()));

    let a_integral = masked_integral(&d, &sets.a_mask, grid);
    let v_plus = off_mask_variation(&xp, &sets.a_mask, grid);
    let v_minus = off_mask_variation(&xm, &sets.a_mask, grid);
    for (name, v) in [("V+", &v_plus), ("V-", &v_minus)] {
        if let Some(k) = v.increments().position(|dv| dv < -COINCIDE_TOL * scale) {
            return Err(Error::Consistency(format!(
                "{name} decreases on step {} (S and Š differ at an uncovered point next to time 0?)",
                k + 1
            )));
        }
    }

    // Tanaka residual on A, through X = (S - Š)^+ and through X' = (S - Š)^-.
    let jump = jump_process.values();
    let mut plus_route = vec![0.0; grid.steps()];
    let mut minus_route = vec![0.0; grid.steps()];
    for j in 1..d.len() {
        if !sets.a_mask[j] {
            continue;
        }
        let dd = d[j] - d[j - 1];
        let da = jump[j] - jump[j - 1];
        let positive = if d[j - 1] > 0.0 { dd } else { 0.0 };
        let nonpositive = if d[j - 1] > 0.0 { 0.0 } else { dd };
        plus_route[j - 1] = 2.0 * ((xp[j] - xp[j - 1]) - positive - da);
        minus_route[j - 1] = 2.0 * ((xm[j] - xm[j - 1]) + nonpositive - da);
    }
    let l_union = GridPath::from_increments(grid, 0.0, &plus_route)?;
    let l_minus = GridPath::from_increments(grid, 0.0, &minus_route)?;
    for k in 0..grid.len() {
        if !coincide(l_union.value(k) / scale, l_minus.value(k) / scale) {
            return Err(Error::Consistency(format!("local-time routes disagree at index {k}")));
        }
    }
    if let Some(k) = plus_route.iter().position(|&x| x < -COINCIDE_TOL * scale) {
        return Err(Error::Consistency(format!("local-time term decreases on step {}", k + 1)));
    }

    let mut diagnostics = Vec::new();
    if jump_process.terminal() > ceiling || !jump_process.terminal().is_finite() {
        diagnostics.push(format!(
            "jump process reaches {} (ceiling {ceiling}); C may not be the jump process of a special semimartingale",
            jump_process.terminal()
        ));
    }

    let ladder = sets
        .levels
        .iter()
        .map(|level| LadderLevel {
            eps: level.eps,
            v_plus: off_mask_variation(&xp, &level.mask, grid),
            v_minus: off_mask_variation(&xm, &level.mask, grid),
        })
        .collect();

    Ok(GluedDecomposition {
        sets,
        chi_union,
        jump_process,
        a_integral,
        v_plus,
        v_minus,
        l_union,
        ladder,
        diagnostics,
    })
}

/// Pieces for a system in which `S - Š` is nonzero exactly on excursions away
/// from 0: each maximal run of indices `i..=k` (`i >= 1`) with `S != Š` becomes
/// the piece `(i - 1, k]`, so the touch points stay uncovered. The drift of
/// each piece accumulates `chi_increment(j)` over its steps `j`.
pub fn excursion_pieces(
    s: &GridPath,
    s_check: &GridPath,
    chi_increment: impl Fn(usize) -> f64,
) -> Result<Vec<Piece>> {
    let grid = s.grid();
    ensure_same_grid(&grid, &s_check.grid())?;
    let n = grid.len();
    let off = |j: usize| !coincide(s.value(j), s_check.value(j));
    let mut pieces = Vec::new();
    let mut j = 1;
    while j < n {
        if off(j) {
            let start = j - 1;
            let mut k = j;
            while k + 1 < n && off(k + 1) {
                k += 1;
            }
            let mut incs = vec![0.0; grid.steps()];
            for (i, inc) in incs.iter_mut().enumerate().take(k).skip(start) {
                *inc = chi_increment(i + 1);
            }
            pieces.push(Piece::new(start, k, GridPath::from_increments(grid, 0.0, &incs)?)?);
            j = k + 1;
        } else {
            j += 1;
        }
    }
    Ok(pieces)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize) -> TimeGrid {
        TimeGrid::new(1.0, n).unwrap()
    }

    fn path(values: &[f64]) -> GridPath {
        GridPath::new(grid(values.len() - 1), values.to_vec()).unwrap()
    }

    #[test]
    fn d_of_overlapping_pieces() {
        let g = grid(6);
        let pieces = vec![Piece::without_drift(g, 0, 2).unwrap(), Piece::without_drift(g, 1, 3).unwrap()];
        let sys = PieceSystem::new(GridPath::constant(g, 0.0), GridPath::constant(g, 0.0), pieces).unwrap();
        assert_eq!(compute_d(&sys, 0).unwrap(), 0.0);
        assert_eq!(compute_d(&sys, 1).unwrap(), 4.0);
        assert_eq!(compute_d(&sys, 5).unwrap(), 5.0);
    }

    #[test]
    fn d_is_infinite_when_covered_to_horizon() {
        let g = grid(4);
        let sys =
            PieceSystem::new(GridPath::constant(g, 0.0), GridPath::constant(g, 0.0), vec![Piece::without_drift(g, 0, 4).unwrap()])
                .unwrap();
        assert_eq!(compute_d(&sys, 1).unwrap(), f64::INFINITY);
    }

    #[test]
    fn full_cover_gives_a_equal_to_everything() {
        let g = grid(5);
        let sys =
            PieceSystem::new(path(&[0.0, 1.0, -1.0, 2.0, 0.5, 1.0]), GridPath::constant(g, 0.0), vec![Piece::without_drift(g, 0, 5).unwrap()])
                .unwrap();
        let sets = build_sets(&sys, &[1.0]).unwrap();
        assert!(sets.a_mask[1..].iter().all(|&a| a));
        assert!(sets.c_mask.iter().all(|&c| !c));
        assert_eq!(sets.levels[0].rungs, vec![Rung { start: 1, end: None }]);
    }

    #[test]
    fn uncovered_difference_is_rejected() {
        let g = grid(3);
        let r = PieceSystem::new(path(&[0.0, 1.0, 1.0, 0.0]), GridPath::constant(g, 0.0), vec![Piece::without_drift(g, 0, 1).unwrap()]);
        assert!(matches!(r, Err(Error::Data { index: 2, .. })));
    }

    #[test]
    fn return_to_reference_off_piece() {
        // S = (0, 1, 2, 0, 0), Š = 0, one piece (0, 2]: the drop at index 3 is
        // in C; it is a jump when the path is read as càdlàg.
        let g = grid(4);
        let s = path(&[0.0, 1.0, 2.0, 0.0, 0.0]);
        let chi = GridPath::from_increments(g, 0.0, &[1.0, 1.0, 0.0, 0.0]).unwrap();
        let sys = PieceSystem::new(s.clone(), GridPath::constant(g, 0.0), vec![Piece::new(0, 2, chi).unwrap()])
            .unwrap()
            .with_all_jumps();
        let glued = glue(&sys, &[1.0]).unwrap();
        assert_eq!(glued.sets.a_mask, vec![false, true, true, true, false]);
        assert_eq!(glued.sets.c_jumps, vec![0.0, 0.0, 0.0, -2.0, 0.0]);
        assert_eq!(glued.reconstruct(&sys), s);
        assert!(glued.v_plus.values().iter().all(|&v| v == 0.0));
        assert_eq!(glued.chi_union.values(), &[0.0, 1.0, 2.0, 2.0, 2.0]);
    }

    #[test]
    fn disagreeing_overlap_is_a_data_error() {
        let g = grid(4);
        let a = Piece::new(0, 3, GridPath::from_increments(g, 0.0, &[1.0, 1.0, 1.0, 0.0]).unwrap()).unwrap();
        let b = Piece::new(1, 4, GridPath::from_increments(g, 0.0, &[0.0, 1.0, 2.0, 1.0]).unwrap()).unwrap();
        let sys = PieceSystem::new(GridPath::constant(g, 0.0), GridPath::constant(g, 0.0), vec![a, b]).unwrap();
        assert!(matches!(assemble_chi_union(&sys), Err(Error::Data { index: 3, .. })));
    }

    #[test]
    fn single_down_crossing_jump() {
        let g = grid(3);
        let s = path(&[0.0, 0.5, -0.4, -0.4]);
        let sys = PieceSystem::new(s, GridPath::constant(g, 0.0), vec![Piece::without_drift(g, 0, 3).unwrap()])
            .unwrap()
            .with_all_jumps();
        let a = jump_compensation(&sys, &build_sets(&sys, &[1.0]).unwrap().a_mask).unwrap();
        assert_eq!(a.values(), &[0.0, 0.5, 0.9, 0.9]);
    }

    #[test]
    fn no_sign_change_means_no_jump_compensation() {
        let g = grid(3);
        let sys = PieceSystem::new(path(&[2.0, 3.0, 1.5, 4.0]), GridPath::constant(g, 1.0), vec![Piece::without_drift(g, 0, 3).unwrap()])
            .unwrap()
            .with_all_jumps();
        let a = jump_compensation(&sys, &build_sets(&sys, &[1.0]).unwrap().a_mask).unwrap();
        assert!(a.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn nonzero_start_next_to_uncovered_point_is_inconsistent() {
        let g = grid(3);
        let sys = PieceSystem::new(path(&[1.0, 0.0, 1.0, 0.0]), GridPath::constant(g, 0.0), vec![Piece::without_drift(g, 1, 2).unwrap()])
            .unwrap();
        assert!(matches!(glue(&sys, &[1.0]), Err(Error::Consistency(_))));
    }

    #[test]
    fn eps_must_be_a_positive_grid_multiple() {
        let g = grid(3);
        let sys = PieceSystem::new(GridPath::constant(g, 0.0), GridPath::constant(g, 0.0), vec![]).unwrap();
        assert!(build_sets(&sys, &[0.5]).is_err());
        assert!(build_sets(&sys, &[0.0]).is_err());
    }

    #[test]
    fn excursion_ladder_on_touching_path() {
        // X >= 0 touching zero at indices 3 and 7.
        let x = path(&[0.5, 0.8, 0.3, 0.0, 0.4, 0.9, 0.2, 0.0, 0.1, 0.6]);
        let zero = GridPath::constant(x.grid(), 0.0);
        let pieces = excursion_pieces(&x, &zero, |_| 0.0).unwrap();
        let spans: Vec<(usize, usize)> = pieces.iter().map(|p| (p.start(), p.end())).collect();
        assert_eq!(spans, vec![(0, 2), (3, 6), (7, 9)]);
        let sys = PieceSystem::new(x.clone(), zero, pieces).unwrap();
        let glued = glue(&sys, &[1.0, 2.0]).unwrap();
        assert!(glued.v_plus.values().iter().all(|&v| v == 0.0));
        // Leaving zero at indices 3 and 7 feeds the local-time term.
        assert!((glued.l_union.terminal() - 2.0 * (0.4 + 0.1)).abs() < 1e-15);
        // ε = 1: A_ε skips the first step of each excursion.
        let level = &glued.sets.levels[0];
        assert_eq!(level.rungs, vec![Rung { start: 1, end: Some(3) }, Rung { start: 4, end: Some(7) }, Rung { start: 8, end: None }]);
        let v = &glued.ladder[0].v_plus;
        assert!((v.terminal() - (0.8 - 0.5 + 0.4 + 0.1)).abs() < 1e-15);
        assert_eq!(ladder_sum(&x, &level.rungs), *v);
        assert_eq!(record_sum(&x, &level.rungs).terminal(), 0.8 + 0.4 + 0.1);
    }
}
