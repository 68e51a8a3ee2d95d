//! Least-squares FIR fit to the inverse steady-state frequency response and
//! its placement into a learning gain matrix.
//!
//! The filter is `F(z) = a_1 z^(m-1) + ... + a_m z^0 + ... + a_n z^-(n-m)`:
//! `m - 1` taps look forward in time and `n - m` look back. Its coefficients
//! minimize `J = sum_j |1 - G(e^{i w_j T}) F(e^{i w_j T})|^2` over a frequency
//! grid, which reduces to the normal equations `A x = b` with
//! `A[p][q] = sum_j M_j^2 cos((p - q) w_j T)` and
//! `b[p] = sum_j M_j cos((m - p) w_j T + theta_j)` (1-based `p`, `q`).

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{invalid, IlcError, Result};
use crate::io;
use crate::lifted::{LiftedMatrix, MatrixKind};
use crate::lti::{freq_response, DiscreteStateSpace, FreqSample};

/// Above this condition estimate the Cholesky solve is replaced by a
/// column-pivoted QR least-squares solve.
pub const CHOLESKY_CONDITION_LIMIT: f64 = 1e12;

#[derive(Clone, Debug, PartialEq)]
pub struct FirFilter {
    coeffs: Vec<f64>,
    lead: usize,
    sample_period: f64,
}

impl FirFilter {
    /// `m` is the 1-based index of the `z^0` coefficient.
    pub fn new(coeffs: Vec<f64>, m: usize, sample_period: f64) -> Result<Self> {
        if coeffs.is_empty() {
            return invalid("FIR filter needs at least one coefficient");
        }
        if m == 0 || m > coeffs.len() {
            return invalid(format!("m = {m} must lie in 1..={}", coeffs.len()));
        }
        if !(sample_period > 0.0) {
            return invalid("sample period must be positive");
        }
        Ok(Self { coeffs, lead: m - 1, sample_period })
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn n(&self) -> usize {
        self.coeffs.len()
    }

    pub fn m(&self) -> usize {
        self.lead + 1
    }

    /// Number of forward-in-time taps, `m - 1`.
    pub fn lead(&self) -> usize {
        self.lead
    }

    pub fn sample_period(&self) -> f64 {
        self.sample_period
    }

    pub fn response(&self, omega: f64) -> Complex64 {
        let wt = omega * self.sample_period;
        let m = self.m() as f64;
        self.coeffs
            .iter()
            .enumerate()
            .map(|(p, &a)| Complex64::from_polar(a, (m - (p + 1) as f64) * wt))
            .sum()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        io::write_comment_block(
            &mut out,
            &format!("m = {}\nsample_period = {}", self.m(), io::fmt_g17(self.sample_period)),
        );
        out.push_str("index,coefficient\n");
        for (p, &a) in self.coeffs.iter().enumerate() {
            out.push_str(&format!("{},{}\n", p + 1, io::fmt_g17(a)));
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let m: usize = io::metadata(text, "m")
            .ok_or_else(|| IlcError::Parse("missing '# m = ...' header".into()))?
            .parse()
            .map_err(|e| IlcError::Parse(format!("m: {e}")))?;
        let t: f64 = io::metadata(text, "sample_period")
            .ok_or_else(|| IlcError::Parse("missing '# sample_period = ...' header".into()))?
            .parse()
            .map_err(|e| IlcError::Parse(format!("sample_period: {e}")))?;
        let mut coeffs = Vec::new();
        for (lineno, line) in io::data_lines(text).filter(|(_, l)| !l.starts_with("index")) {
            let row = io::parse_row(lineno, line)?;
            if row.len() != 2 || row[0] as usize != coeffs.len() + 1 {
                return Err(IlcError::Parse(format!("line {lineno}: expected '<index>,<coefficient>' in order")));
            }
            coeffs.push(row[1]);
        }
        Self::new(coeffs, m, t)
    }
}

/// Sampled frequency response together with the sample period it belongs to.
#[derive(Clone, Debug, PartialEq)]
pub struct FrequencyData {
    pub sample_period: f64,
    pub samples: Vec<FreqSample>,
}

/// Uniform grid in `omega T`, in degrees.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FreqGrid {
    pub step_deg: f64,
    pub include_nyquist: bool,
}

impl Default for FreqGrid {
    fn default() -> Self {
        Self { step_deg: 1.0, include_nyquist: false }
    }
}

impl FreqGrid {
    pub fn omegas(&self, sample_period: f64) -> Vec<f64> {
        let count = (180.0 / self.step_deg).round() as usize;
        let last = if self.include_nyquist { count } else { count - 1 };
        (0..=last)
            .map(|k| (k as f64 * self.step_deg).min(180.0).to_radians() / sample_period)
            .collect()
    }
}

pub fn sample_response(ss: &DiscreteStateSpace, grid: &FreqGrid) -> Result<FrequencyData> {
    if !(grid.step_deg > 0.0 && grid.step_deg <= 180.0) {
        return invalid(format!("grid step {} deg must lie in (0, 180]", grid.step_deg));
    }
    let samples = grid
        .omegas(ss.sample_period())
        .into_iter()
        .map(|w| freq_response(ss, w))
        .collect::<Result<Vec<_>>>()?;
    Ok(FrequencyData { sample_period: ss.sample_period(), samples })
}

/// Default split of `n` taps: `m = ceil(n/2) + 1`, clamped to `n`.
pub fn default_m(n: usize) -> usize {
    (n.div_ceil(2) + 1).min(n).max(1)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FitSolver {
    Cholesky,
    PivotedQr,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitReport {
    pub cost: f64,
    /// `|1 - G F|` at each grid sample.
    pub residuals: Vec<f64>,
    pub condition: f64,
    pub solver: FitSolver,
}

impl FitReport {
    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().copied().fold(0.0, f64::max)
    }
}

/// Normal-equation matrix and right-hand side for `n` taps with `z^0` at
/// index `m`.
pub fn normal_equations(data: &FrequencyData, m: usize, n: usize) -> (DMatrix<f64>, DVector<f64>) {
    let t = data.sample_period;
    // A is Toeplitz: A[p][q] = c[|p - q|].
    let mut c = vec![0.0; n];
    let mut b = DVector::zeros(n);
    for s in &data.samples {
        let wt = s.omega * t;
        let mag2 = s.magnitude * s.magnitude;
        for (d, cd) in c.iter_mut().enumerate() {
            *cd += mag2 * (d as f64 * wt).cos();
        }
        for p in 0..n {
            let shift = m as f64 - (p + 1) as f64;
            b[p] += s.magnitude * (shift * wt + s.phase).cos();
        }
    }
    let a = DMatrix::from_fn(n, n, |p, q| c[p.abs_diff(q)]);
    (a, b)
}

pub fn design_fir(data: &FrequencyData, m: usize, n: usize) -> Result<(FirFilter, FitReport)> {
    if n == 0 || m == 0 || m > n {
        return invalid(format!("need n >= 1 and 1 <= m <= n, got m = {m}, n = {n}"));
    }
    if data.samples.is_empty() {
        return invalid("frequency grid is empty");
    }
    let (a, b) = normal_equations(data, m, n);
    let eig = a.clone().symmetric_eigenvalues();
    let lmax = eig.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lmin = eig.iter().copied().fold(f64::INFINITY, f64::min);
    let condition = if lmin > 0.0 { lmax / lmin } else { f64::INFINITY };
    let rank_floor = f64::EPSILON * n as f64 * lmax;
    if !(lmax > 0.0) || lmin <= rank_floor {
        return Err(IlcError::IllConditionedFit { condition });
    }

    let (coeffs, solver) = match (condition <= CHOLESKY_CONDITION_LIMIT)
        .then(|| a.clone().cholesky())
        .flatten()
    {
        Some(chol) => (chol.solve(&b), FitSolver::Cholesky),
        None => {
            let x = a
                .col_piv_qr()
                .solve(&b)
                .ok_or(IlcError::IllConditionedFit { condition })?;
            (x, FitSolver::PivotedQr)
        }
    };

    let filter = FirFilter::new(coeffs.as_slice().to_vec(), m, data.sample_period)?;
    let residuals: Vec<f64> = data
        .samples
        .iter()
        .map(|s| (Complex64::new(1.0, 0.0) - s.response() * filter.response(s.omega)).norm())
        .collect();
    let cost = residuals.iter().map(|r| r * r).sum();
    Ok((filter, FitReport { cost, residuals, condition, solver }))
}

/// Places the taps in an `N x N` learning matrix with `a_m` on the first
/// sub-diagonal: `F[i][j] = a_{m + (i-1) - j}` (1-based) where that index
/// exists, zero otherwise.
pub fn fir_to_learning_matrix(f: &FirFilter, steps: usize) -> LiftedMatrix {
    let m = f.m() as isize;
    let n = f.n() as isize;
    let data = DMatrix::from_fn(steps, steps, |i, j| {
        // 1-based tap index with 0-based i, j.
        let idx = m + i as isize - j as isize - 1;
        if (1..=n).contains(&idx) {
            f.coeffs[(idx - 1) as usize]
        } else {
            0.0
        }
    });
    LiftedMatrix::new(data, MatrixKind::Learning, f.sample_period)
}

/// Designs a `2N - 1` tap filter that fills every entry of the `N x N`
/// learning matrix and returns both.
pub fn design_full_matrix(data: &FrequencyData, steps: usize) -> Result<(FirFilter, FitReport, LiftedMatrix)> {
    if steps < 1 {
        return invalid("trajectory length must be at least 1");
    }
    let n = 2 * steps - 1;
    // The (1, N) entry needs tap index m + 0 - N = 1.
    let m = steps + 1;
    let m = m.min(n);
    let (filter, report) = design_fir(data, m, n)?;
    let matrix = fir_to_learning_matrix(&filter, steps);
    Ok((filter, report, matrix))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn synthetic(t: f64, g: impl Fn(f64) -> Complex64) -> FrequencyData {
        let samples = FreqGrid::default()
            .omegas(t)
            .into_iter()
            .map(|w| {
                let r = g(w * t);
                FreqSample { omega: w, magnitude: r.norm(), phase: r.arg() }
            })
            .collect();
        FrequencyData { sample_period: t, samples }
    }

    #[test]
    fn grid_default_is_0_to_179_degrees() {
        let w = FreqGrid::default().omegas(0.01);
        assert_eq!(w.len(), 180);
        assert_eq!(w[0], 0.0);
        assert!((w[179] * 0.01 - 179f64.to_radians()).abs() < 1e-15);
        let with_nyq = FreqGrid { include_nyquist: true, ..Default::default() }.omegas(0.01);
        assert_eq!(with_nyq.len(), 181);
        assert!((with_nyq[180] * 0.01 - PI).abs() < 1e-15);
    }

    #[test]
    fn pure_delay_is_inverted_exactly() {
        let data = synthetic(0.01, |wt| Complex64::from_polar(1.0, -wt));
        let (f, rep) = design_fir(&data, 2, 3).unwrap();
        let want = [1.0, 0.0, 0.0];
        for (a, w) in f.coeffs().iter().zip(want) {
            assert!((a - w).abs() < 1e-10, "{:?}", f.coeffs());
        }
        assert!(rep.cost < 1e-18);
    }

    #[test]
    fn identity_plant() {
        let data = synthetic(0.02, |_| Complex64::new(1.0, 0.0));
        let (f, rep) = design_fir(&data, 1, 1).unwrap();
        assert!((f.coeffs()[0] - 1.0).abs() < 1e-14);
        assert!(rep.cost < 1e-24);
    }

    #[test]
    fn cost_equals_sum_of_squared_residuals() {
        let data = synthetic(0.01, |wt| Complex64::from_polar(1.0 / (1.0 + wt), -1.7 * wt));
        let (_, rep) = design_fir(&data, 3, 6).unwrap();
        let s: f64 = rep.residuals.iter().map(|r| r * r).sum();
        assert!((s - rep.cost).abs() <= 1e-10 * rep.cost.max(1e-300));
    }

    #[test]
    fn rank_deficient_fit_rejected() {
        // A single DC sample gives a rank-one Gram matrix.
        let data = FrequencyData {
            sample_period: 0.01,
            samples: vec![FreqSample { omega: 0.0, magnitude: 1.0, phase: 0.0 }],
        };
        assert!(matches!(design_fir(&data, 1, 3), Err(IlcError::IllConditionedFit { .. })));
        assert!(design_fir(&data, 0, 3).is_err());
        assert!(design_fir(&data, 4, 3).is_err());
    }

    #[test]
    fn single_tap_on_first_subdiagonal() {
        let f = FirFilter::new(vec![1.0], 1, 0.1).unwrap();
        let l = fir_to_learning_matrix(&f, 3);
        let want = DMatrix::from_row_slice(3, 3, &[0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        assert_eq!(l.data(), &want);
    }

    #[test]
    fn full_fill_placement() {
        let f = FirFilter::new(vec![1.0, 2.0, 3.0], 3, 0.1).unwrap();
        let l = fir_to_learning_matrix(&f, 2);
        assert_eq!(l.data(), &DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 3.0, 2.0]));
    }

    #[test]
    fn middle_row_filled_with_corner_triangles() {
        let coeffs: Vec<f64> = (1..=51).map(|k| k as f64).collect();
        let f = FirFilter::new(coeffs, 27, 0.02).unwrap();
        let l = fir_to_learning_matrix(&f, 51);
        let d = l.data();
        // Row 26 (1-based) carries every tap once.
        let mut row: Vec<f64> = d.row(25).iter().copied().collect();
        row.sort_by(f64::total_cmp);
        assert_eq!(row, (1..=51).map(|k| k as f64).collect::<Vec<_>>());
        assert_eq!(d[(0, 50)], 0.0);
        assert_eq!(d[(50, 0)], 0.0);
        assert!(d.row(0).iter().any(|&v| v == 0.0));
    }

    #[test]
    fn csv_round_trip() {
        let f = FirFilter::new(vec![0.1, -3.25, 7.0, 1e-9], 2, 0.01).unwrap();
        assert_eq!(FirFilter::from_csv(&f.to_csv()).unwrap(), f);
    }

    #[test]
    fn default_split() {
        assert_eq!(default_m(12), 7);
        assert_eq!(default_m(51), 27);
        assert_eq!(default_m(101), 52);
        assert_eq!(default_m(1), 1);
    }
}
