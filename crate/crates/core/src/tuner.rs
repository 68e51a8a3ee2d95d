//! Sensitivity of the largest singular value of `E = I - P_1 L` to individual
//! learning gains, and steepest-descent adjustment of selected gain blocks.
//!
//! For a simple `sigma_max` with singular vectors `u`, `v`,
//! `d sigma_max / d L[i][j] = -(P_1^T u)[i] * v[j]`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, IlcError, Result};
use crate::io;
use crate::law::IlcLaw;
use crate::lifted::LiftedMatrix;

/// Singular values closer than this are treated as repeated.
pub const SIMPLE_GAP_TOL: f64 = 1e-9;

/// Recomputing `E` from the updated gains can land an ulp above the value the
/// line search saw; this much relative slack still counts as on target.
pub const TARGET_RTOL: f64 = 1e-12;

const JITTER: f64 = 1e-10;
const MAX_JITTERS: usize = 3;

/// Half-open rectangle `[row_start, row_end) x [col_start, col_end)` of the
/// learning matrix, in post-deletion coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Block {
    pub row_start: usize,
    pub row_end: usize,
    pub col_start: usize,
    pub col_end: usize,
}

impl Block {
    pub fn new(row_start: usize, row_end: usize, col_start: usize, col_end: usize) -> Self {
        Self { row_start, row_end, col_start, col_end }
    }

    pub fn upper_left(rows: usize, cols: usize) -> Self {
        Self::new(0, rows, 0, cols)
    }

    /// `rows x cols` block in the upper-right corner of an `ncols`-wide matrix.
    pub fn upper_right(rows: usize, cols: usize, ncols: usize) -> Self {
        Self::new(0, rows, ncols - cols, ncols)
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        (self.row_start..self.row_end).contains(&i) && (self.col_start..self.col_end).contains(&j)
    }

    pub fn len(&self) -> usize {
        (self.row_end - self.row_start) * (self.col_end - self.col_start)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Corner {
    UpperLeft,
    UpperRight,
    LowerLeft,
    LowerRight,
}

/// A `rows x cols` block anchored at a corner, resolved against the matrix
/// size only when the law is known.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CornerBlock {
    pub corner: Corner,
    pub rows: usize,
    pub cols: usize,
}

impl CornerBlock {
    pub fn resolve(&self, nrows: usize, ncols: usize) -> Result<Block> {
        if self.rows == 0 || self.cols == 0 || self.rows > nrows || self.cols > ncols {
            return invalid(format!(
                "{}x{} block does not fit a {nrows}x{ncols} learning matrix",
                self.rows, self.cols
            ));
        }
        let (r0, c0) = match self.corner {
            Corner::UpperLeft => (0, 0),
            Corner::UpperRight => (0, ncols - self.cols),
            Corner::LowerLeft => (nrows - self.rows, 0),
            Corner::LowerRight => (nrows - self.rows, ncols - self.cols),
        };
        Ok(Block::new(r0, r0 + self.rows, c0, c0 + self.cols))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LineSearch {
    /// Minimize `sigma_max` along the ray, stopping early at the target crossing.
    #[default]
    Exact,
    /// Shrink the step until `sigma_max` decreases at all.
    Backtracking,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TuneSpec {
    pub blocks: Vec<Block>,
    pub target_sigma: f64,
    /// Initial step length in the gain space. Defaults to `1e-2 * sigma_max`.
    pub step_init: Option<f64>,
    pub shrink: f64,
    pub max_iters: usize,
    pub grad_tol: f64,
    pub line_search: LineSearch,
    /// Seed for the jitter applied at repeated singular values.
    pub seed: u64,
}

impl TuneSpec {
    pub fn new(blocks: Vec<Block>, target_sigma: f64) -> Self {
        Self {
            blocks,
            target_sigma,
            step_init: None,
            shrink: 0.5,
            max_iters: 5000,
            grad_tol: 1e-10,
            line_search: LineSearch::Exact,
            seed: 0,
        }
    }

    fn validate(&self, rows: usize, cols: usize) -> Result<()> {
        if !(self.target_sigma > 0.0 && self.target_sigma < 1.0) {
            return invalid(format!("target sigma {} must lie in (0, 1)", self.target_sigma));
        }
        if !(self.shrink > 0.0 && self.shrink < 1.0) {
            return invalid(format!("shrink factor {} must lie in (0, 1)", self.shrink));
        }
        if let Some(s) = self.step_init {
            if !(s > 0.0) {
                return invalid("initial step must be positive");
            }
        }
        if self.blocks.is_empty() {
            return invalid("at least one gain block is required");
        }
        for b in &self.blocks {
            if b.row_start >= b.row_end || b.col_start >= b.col_end || b.row_end > rows || b.col_end > cols {
                return invalid(format!("block {b:?} is empty or outside the {rows}x{cols} learning matrix"));
            }
        }
        Ok(())
    }

    fn mask(&self, rows: usize, cols: usize) -> Vec<(usize, usize)> {
        let mut cells = Vec::new();
        for i in 0..rows {
            for j in 0..cols {
                if self.blocks.iter().any(|b| b.contains(i, j)) {
                    cells.push((i, j));
                }
            }
        }
        cells
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TuneStep {
    pub iter: usize,
    pub sigma_max: f64,
    pub step: f64,
    pub grad_norm: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopReason {
    TargetReached,
    SmallGradient,
    Stalled,
    MaxIterations,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TuneTrace {
    pub initial_sigma: f64,
    pub steps: Vec<TuneStep>,
    pub stop: StopReason,
    pub jitters: usize,
}

impl TuneTrace {
    pub fn converged(&self) -> bool {
        self.stop == StopReason::TargetReached
    }

    pub fn iterations(&self) -> usize {
        self.steps.len()
    }

    pub fn final_sigma(&self) -> f64 {
        self.steps.last().map_or(self.initial_sigma, |s| s.sigma_max)
    }

    /// Columns `iter, sigma_max, step, grad_norm`; row 0 is the starting point.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("iter,sigma_max,step,grad_norm\n");
        io::write_row(&mut out, [0.0, self.initial_sigma, 0.0, 0.0]);
        for s in &self.steps {
            io::write_row(&mut out, [s.iter as f64, s.sigma_max, s.step, s.grad_norm]);
        }
        out
    }
}

struct Triplet {
    sigma: f64,
    gap: f64,
    u: DVector<f64>,
    v: DVector<f64>,
}

fn top_triplet(e: &DMatrix<f64>) -> Triplet {
    let svd = e.clone().svd(true, true);
    let s = &svd.singular_values;
    let (mut first, mut second) = (0usize, None::<usize>);
    for k in 1..s.len() {
        if s[k] > s[first] {
            second = Some(first);
            first = k;
        } else if second.is_none_or(|j| s[k] > s[j]) {
            second = Some(k);
        }
    }
    // The values-only SVD is more accurate than the one that also forms the
    // vectors (about 1e-9 relative apart on small rank-deficient E), and it is
    // what the line search and the reports use; take sigma and the gap from it.
    let mut exact: Vec<f64> = e.clone().singular_values().iter().copied().collect();
    exact.sort_by(|a, b| b.total_cmp(a));
    let sigma = exact[0];
    let gap = if second.is_some() { sigma - exact[1] } else { f64::INFINITY };
    let u = svd.u.as_ref().expect("left vectors requested").column(first).into_owned();
    let v = svd.v_t.as_ref().expect("right vectors requested").row(first).transpose();
    Triplet { sigma, gap, u, v }
}

fn sigma_max(e: &DMatrix<f64>) -> f64 {
    e.clone().singular_values().iter().copied().fold(0.0, f64::max)
}

fn error_matrix(p1: &DMatrix<f64>, l: &DMatrix<f64>) -> DMatrix<f64> {
    DMatrix::identity(p1.nrows(), p1.nrows()) - p1 * l
}

fn check_shapes(p1: &DMatrix<f64>, l: &DMatrix<f64>) -> Result<()> {
    if p1.ncols() != l.nrows() || p1.nrows() != l.ncols() {
        return Err(IlcError::DimensionMismatch(format!(
            "P_1 is {}x{} and L is {}x{}; need P_1 L square",
            p1.nrows(),
            p1.ncols(),
            l.nrows(),
            l.ncols()
        )));
    }
    if p1.nrows() == 0 {
        return invalid("empty iteration matrix");
    }
    Ok(())
}

/// `S[i][j] = d sigma_max(I - P_1 L) / d L[i][j]`.
pub fn sigma_sensitivity(p1: &DMatrix<f64>, l: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_shapes(p1, l)?;
    let t = top_triplet(&error_matrix(p1, l));
    if t.gap < SIMPLE_GAP_TOL {
        return Err(IlcError::NonsmoothPoint { gap: t.gap });
    }
    let w = p1.transpose() * &t.u;
    Ok(-(w * t.v.transpose()))
}

/// Steepest descent on `sigma_max(I - P_1 L)` over the entries of `L` inside
/// `spec.blocks`. Entries outside the blocks are never touched.
///
/// Not reaching the target is not an error: the best law found is returned and
/// the trace records why the search stopped.
pub fn steepest_descent_tune(p1: &LiftedMatrix, law: &IlcLaw, spec: &TuneSpec) -> Result<(IlcLaw, TuneTrace)> {
    let p1 = p1.data();
    let mut l = law.matrix().clone();
    check_shapes(p1, &l)?;
    spec.validate(l.nrows(), l.ncols())?;
    let cells = spec.mask(l.nrows(), l.ncols());
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let mut e = error_matrix(p1, &l);
    let mut trip = top_triplet(&e);
    let mut trace = TuneTrace {
        initial_sigma: trip.sigma,
        steps: Vec::new(),
        stop: StopReason::MaxIterations,
        jitters: 0,
    };
    if !trip.sigma.is_finite() {
        return invalid("initial iteration matrix is not finite");
    }

    loop {
        if trip.sigma <= spec.target_sigma * (1.0 + TARGET_RTOL) {
            trace.stop = StopReason::TargetReached;
            break;
        }
        if trace.steps.len() >= spec.max_iters {
            trace.stop = StopReason::MaxIterations;
            break;
        }
        // Jitter may nudge sigma up slightly; steps must beat the last accepted law.
        let accepted = (l.clone(), trip.sigma);
        let mut tries = 0;
        while trip.gap < SIMPLE_GAP_TOL * trip.sigma.max(1.0) && tries < MAX_JITTERS {
            for &(i, j) in &cells {
                l[(i, j)] += JITTER * rng.random_range(-1.0..1.0);
            }
            e = error_matrix(p1, &l);
            trip = top_triplet(&e);
            tries += 1;
            trace.jitters += 1;
        }

        // Masked gradient, as (cell, value) pairs.
        let w = p1.transpose() * &trip.u;
        let grad: Vec<f64> = cells.iter().map(|&(i, j)| -w[i] * trip.v[j]).collect();
        let grad_norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if grad_norm < spec.grad_tol {
            l = accepted.0;
            trace.stop = StopReason::SmallGradient;
            break;
        }

        // Moving L by -t * grad / |grad| changes E by t * dir.
        let mut dir = DMatrix::zeros(e.nrows(), e.ncols());
        for (&(i, j), &g) in cells.iter().zip(&grad) {
            let c = g / grad_norm;
            for r in 0..p1.nrows() {
                dir[(r, j)] += p1[(r, i)] * c;
            }
        }
        let phi = |t: f64| sigma_max(&(&e + &dir * t));

        let sigma0 = trip.sigma;
        let t_init = spec.step_init.map_or(1e-2 * sigma0, |s| s * grad_norm);
        let step = match spec.line_search {
            LineSearch::Exact => exact_step(&phi, sigma0, t_init, spec.target_sigma),
            LineSearch::Backtracking => backtrack_step(&phi, sigma0, t_init, spec.shrink),
        };
        let Some(t) = step else {
            l = accepted.0;
            trace.stop = StopReason::Stalled;
            break;
        };

        for (&(i, j), &g) in cells.iter().zip(&grad) {
            l[(i, j)] -= t * g / grad_norm;
        }
        e = error_matrix(p1, &l);
        let next = top_triplet(&e);
        if !(next.sigma < accepted.1) {
            // Rounding in the recomputed E (or the jitter) undid the decrease.
            l = accepted.0;
            trace.stop = StopReason::Stalled;
            break;
        }
        trip = next;
        trace.steps.push(TuneStep {
            iter: trace.steps.len() + 1,
            sigma_max: trip.sigma,
            step: t,
            grad_norm,
        });
    }

    Ok((law.with_matrix(l, true), trace))
}

fn backtrack_step(phi: &impl Fn(f64) -> f64, sigma0: f64, t_init: f64, shrink: f64) -> Option<f64> {
    let mut t = t_init;
    while t > 1e-20 * t_init {
        if phi(t) < sigma0 {
            return Some(t);
        }
        t *= shrink;
    }
    None
}

/// Line minimization of a convex function of `t >= 0`; stops at the first
/// point where it reaches `target` if the minimum lies below it.
fn exact_step(phi: &impl Fn(f64) -> f64, sigma0: f64, t_init: f64, target: f64) -> Option<f64> {
    let mut t = t_init;
    let mut f = phi(t);
    while f >= sigma0 {
        t *= 0.5;
        if t < 1e-16 * t_init.max(1.0) {
            return None;
        }
        f = phi(t);
    }

    // Bracket [lo, hi] around the minimizer, with phi(mid) <= both ends.
    let (mut lo, mut mid, mut fmid) = (0.0, t, f);
    let mut hi = 2.0 * t;
    let mut fhi = phi(hi);
    let mut doublings = 0;
    while fhi < fmid && fmid > target && doublings < 200 {
        lo = mid;
        mid = hi;
        fmid = fhi;
        hi *= 2.0;
        fhi = phi(hi);
        doublings += 1;
    }

    let (mut best, mut fbest) = (mid, fmid);
    if fbest > target {
        let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
        let mut x1 = hi - inv_phi * (hi - lo);
        let mut x2 = lo + inv_phi * (hi - lo);
        let mut f1 = phi(x1);
        let mut f2 = phi(x2);
        for _ in 0..200 {
            if hi - lo <= 1e-10 * hi {
                break;
            }
            if f1 <= f2 {
                hi = x2;
                x2 = x1;
                f2 = f1;
                x1 = hi - inv_phi * (hi - lo);
                f1 = phi(x1);
            } else {
                lo = x1;
                x1 = x2;
                f1 = f2;
                x2 = lo + inv_phi * (hi - lo);
                f2 = phi(x2);
            }
            if f1.min(f2) < target {
                break;
            }
        }
        for (x, fx) in [(x1, f1), (x2, f2)] {
            if fx < fbest {
                best = x;
                fbest = fx;
            }
        }
    }

    if fbest <= target {
        // phi is convex with phi(0) > target >= phi(best): one crossing in (0, best].
        let (mut a, mut b) = (0.0, best);
        for _ in 0..100 {
            if b - a <= 1e-14 * b {
                break;
            }
            let m = 0.5 * (a + b);
            if phi(m) > target {
                a = m;
            } else {
                b = m;
            }
        }
        best = b;
    }
    Some(best)
}

/// Smallest corner-anchored rectangles covering the `count` entries of `s`
/// with the largest magnitude, in the order upper-left, upper-right,
/// lower-left, lower-right.
pub fn block_recommendation(s: &DMatrix<f64>, count: usize) -> Vec<Block> {
    let (rows, cols) = s.shape();
    let mut cells: Vec<(usize, usize)> = (0..rows).flat_map(|i| (0..cols).map(move |j| (i, j))).collect();
    cells.sort_by(|&a, &b| s[b].abs().total_cmp(&s[a].abs()).then(a.cmp(&b)));
    cells.truncate(count);

    // (top, left) -> bounding extents
    let mut corners: [Option<(usize, usize, usize, usize)>; 4] = [None; 4];
    for (i, j) in cells {
        let top = 2 * i < rows;
        let left = 2 * j < cols;
        let k = match (top, left) {
            (true, true) => 0,
            (true, false) => 1,
            (false, true) => 2,
            (false, false) => 3,
        };
        let ext = corners[k].get_or_insert((i, i, j, j));
        ext.0 = ext.0.min(i);
        ext.1 = ext.1.max(i);
        ext.2 = ext.2.min(j);
        ext.3 = ext.3.max(j);
    }
    corners
        .iter()
        .enumerate()
        .filter_map(|(k, ext)| {
            let (imin, imax, jmin, jmax) = (*ext)?;
            let (r0, r1) = if k < 2 { (0, imax + 1) } else { (imin, rows) };
            let (c0, c1) = if k % 2 == 0 { (0, jmax + 1) } else { (jmin, cols) };
            Some(Block::new(r0, r1, c0, c1))
        })
        .collect()
}
