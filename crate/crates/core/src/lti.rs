//! Continuous plants, zero-order-hold discretization, pulse responses and
//! discrete steady-state frequency response.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, RowDVector};
use num_complex::Complex64;

use crate::error::{invalid, IlcError, Result};

/// Strictly proper SISO transfer function `num(s) / den(s)`.
///
/// Coefficients are stored in ascending powers of `s`.
#[derive(Clone, Debug, PartialEq)]
pub struct ContinuousSiso {
    num: Vec<f64>,
    den: Vec<f64>,
}

impl ContinuousSiso {
    pub fn new(num: Vec<f64>, den: Vec<f64>) -> Result<Self> {
        if num.iter().chain(den.iter()).any(|c| !c.is_finite()) {
            return invalid("transfer function coefficients must be finite");
        }
        let num = trim_high(num);
        let den = trim_high(den);
        if den.is_empty() {
            return invalid("denominator polynomial is identically zero");
        }
        let num = if num.is_empty() { vec![0.0] } else { num };
        if num.len() >= den.len() {
            return Err(IlcError::UnsupportedSystem(format!(
                "numerator degree {} is not below denominator degree {}",
                num.len() - 1,
                den.len() - 1
            )));
        }
        Ok(Self { num, den })
    }

    /// The third-order benchmark `(a/(s+a)) * (w0^2/(s^2 + 2 xi w0 s + w0^2))`.
    pub fn benchmark(a: f64, omega0: f64, xi: f64) -> Result<Self> {
        for (name, v) in [("a", a), ("omega0", omega0), ("xi", xi)] {
            if !(v > 0.0 && v.is_finite()) {
                return invalid(format!("{name} must be positive and finite, got {v}"));
            }
        }
        let den = poly_mul(&[a, 1.0], &[omega0 * omega0, 2.0 * xi * omega0, 1.0]);
        Self::new(vec![a * omega0 * omega0], den)
    }

    pub fn num(&self) -> &[f64] {
        &self.num
    }

    pub fn den(&self) -> &[f64] {
        &self.den
    }

    /// Number of poles.
    pub fn order(&self) -> usize {
        self.den.len() - 1
    }

    /// Pole excess, counting a zero numerator as degree 0.
    pub fn relative_degree(&self) -> usize {
        self.order() - (self.num.len() - 1)
    }

    pub fn eval(&self, s: Complex64) -> Complex64 {
        poly_eval(&self.num, s) / poly_eval(&self.den, s)
    }

    pub fn dc_gain(&self) -> f64 {
        self.num[0] / self.den[0]
    }

    /// Controllable canonical realization `(A_c, B_c, C_c)`.
    pub fn controllable_canonical(&self) -> (DMatrix<f64>, DVector<f64>, RowDVector<f64>) {
        let n = self.order();
        let lead = self.den[n];
        let mut a = DMatrix::zeros(n, n);
        for i in 0..n.saturating_sub(1) {
            a[(i, i + 1)] = 1.0;
        }
        for j in 0..n {
            a[(n - 1, j)] = -self.den[j] / lead;
        }
        let mut b = DVector::zeros(n);
        b[n - 1] = 1.0;
        let mut c = RowDVector::zeros(n);
        for (j, &coef) in self.num.iter().enumerate() {
            c[j] = coef / lead;
        }
        (a, b, c)
    }
}

/// Builds the benchmark plant; see [`ContinuousSiso::benchmark`].
pub fn build_benchmark(a: f64, omega0: f64, xi: f64) -> Result<ContinuousSiso> {
    ContinuousSiso::benchmark(a, omega0, xi)
}

fn trim_high(mut p: Vec<f64>) -> Vec<f64> {
    while p.last() == Some(&0.0) {
        p.pop();
    }
    p
}

pub(crate) fn poly_mul(p: &[f64], q: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; p.len() + q.len() - 1];
    for (i, &a) in p.iter().enumerate() {
        for (j, &b) in q.iter().enumerate() {
            out[i + j] += a * b;
        }
    }
    out
}

fn poly_eval(p: &[f64], s: Complex64) -> Complex64 {
    p.iter().rev().fold(Complex64::new(0.0, 0.0), |acc, &c| acc * s + c)
}

/// Discrete SISO state-space model `x(k+1) = A x(k) + B u(k)`, `y(k) = C x(k)`.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteStateSpace {
    a: DMatrix<f64>,
    b: DVector<f64>,
    c: RowDVector<f64>,
    sample_period: f64,
}

impl DiscreteStateSpace {
    pub fn new(
        a: DMatrix<f64>,
        b: DVector<f64>,
        c: RowDVector<f64>,
        sample_period: f64,
    ) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n || b.len() != n || c.len() != n {
            return Err(IlcError::DimensionMismatch(format!(
                "A is {}x{}, B has {} rows, C has {} columns",
                a.nrows(),
                a.ncols(),
                b.len(),
                c.len()
            )));
        }
        if !(sample_period > 0.0 && sample_period.is_finite()) {
            return invalid(format!("sample period must be positive, got {sample_period}"));
        }
        Ok(Self { a, b, c, sample_period })
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DVector<f64> {
        &self.b
    }

    pub fn c(&self) -> &RowDVector<f64> {
        &self.c
    }

    pub fn sample_period(&self) -> f64 {
        self.sample_period
    }

    pub fn order(&self) -> usize {
        self.a.nrows()
    }

    pub fn nyquist(&self) -> f64 {
        PI / self.sample_period
    }

    /// Propagates the state equation for inputs `u(0..N-1)` and returns
    /// the outputs `y(1..N)`.
    pub fn simulate(&self, u: &[f64], x0: Option<&DVector<f64>>) -> Vec<f64> {
        let mut x = match x0 {
            Some(x0) => x0.clone(),
            None => DVector::zeros(self.order()),
        };
        let mut y = Vec::with_capacity(u.len());
        for &uk in u {
            x = &self.a * &x + &self.b * uk;
            y.push((&self.c * &x)[0]);
        }
        y
    }
}

/// Exact zero-order-hold equivalent of `sys` with sample period `sample_period`.
///
/// Both `A = exp(A_c T)` and `B = int_0^T exp(A_c s) ds B_c` come out of a single
/// exponential of the augmented matrix `[[A_c, B_c], [0, 0]] T`.
pub fn zoh_discretize(sys: &ContinuousSiso, sample_period: f64) -> Result<DiscreteStateSpace> {
    if !(sample_period > 0.0 && sample_period.is_finite()) {
        return invalid(format!("sample period must be positive, got {sample_period}"));
    }
    let (ac, bc, cc) = sys.controllable_canonical();
    let n = ac.nrows();
    let mut aug = DMatrix::zeros(n + 1, n + 1);
    aug.view_mut((0, 0), (n, n)).copy_from(&(ac * sample_period));
    aug.view_mut((0, n), (n, 1)).copy_from(&(bc * sample_period));
    let phi = aug.exp();
    let a = phi.view((0, 0), (n, n)).into_owned();
    let b = phi.view((0, n), (n, 1)).column(0).into_owned();
    DiscreteStateSpace::new(a, b, cc, sample_period)
}

/// Unit-pulse response samples `h(k) = C A^(k-1) B`, `k = 1..N`.
#[derive(Clone, Debug, PartialEq)]
pub struct MarkovSequence {
    h: Vec<f64>,
    sample_period: f64,
}

impl MarkovSequence {
    pub fn new(h: Vec<f64>, sample_period: f64) -> Result<Self> {
        if h.is_empty() {
            return invalid("Markov sequence must have at least one sample");
        }
        if !(sample_period > 0.0) {
            return invalid(format!("sample period must be positive, got {sample_period}"));
        }
        Ok(Self { h, sample_period })
    }

    pub fn values(&self) -> &[f64] {
        &self.h
    }

    pub fn len(&self) -> usize {
        self.h.len()
    }

    pub fn is_empty(&self) -> bool {
        self.h.is_empty()
    }

    pub fn sample_period(&self) -> f64 {
        self.sample_period
    }
}

pub fn markov_parameters(ss: &DiscreteStateSpace, count: usize) -> Result<MarkovSequence> {
    if count == 0 {
        return invalid("need at least one Markov parameter");
    }
    let mut h = Vec::with_capacity(count);
    let mut x = ss.b.clone();
    for _ in 0..count {
        h.push((&ss.c * &x)[0]);
        x = &ss.a * &x;
    }
    MarkovSequence::new(h, ss.sample_period)
}

/// Magnitude and phase of `G(e^{i omega T})` at one frequency.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FreqSample {
    pub omega: f64,
    pub magnitude: f64,
    /// Principal value in (-pi, pi].
    pub phase: f64,
}

impl FreqSample {
    pub fn response(&self) -> Complex64 {
        Complex64::from_polar(self.magnitude, self.phase)
    }
}

pub fn freq_response(ss: &DiscreteStateSpace, omega: f64) -> Result<FreqSample> {
    let nyquist = ss.nyquist();
    if !(omega >= 0.0 && omega <= nyquist * (1.0 + 1e-12)) {
        return Err(IlcError::FrequencyOutOfRange { omega, nyquist });
    }
    let n = ss.order();
    let z = Complex64::from_polar(1.0, omega * ss.sample_period);
    let m = DMatrix::from_fn(n, n, |i, j| {
        let d = if i == j { z } else { Complex64::new(0.0, 0.0) };
        d - ss.a[(i, j)]
    });
    let b = ss.b.map(|v| Complex64::new(v, 0.0));
    let x = m.lu().solve(&b).ok_or(IlcError::SingularEvaluation { omega })?;
    let g: Complex64 = ss.c.iter().zip(x.iter()).map(|(&c, &xi)| xi * c).sum();
    if !(g.re.is_finite() && g.im.is_finite()) {
        return Err(IlcError::SingularEvaluation { omega });
    }
    let mut phase = g.arg();
    if phase <= -PI {
        phase += 2.0 * PI;
    }
    Ok(FreqSample { omega, magnitude: g.norm(), phase })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn benchmark_expands_to_cubic() {
        let g = build_benchmark(8.8, 37.0, 0.5).unwrap();
        let den = g.den();
        assert_eq!(den.len(), 4);
        for (got, want) in den.iter().zip([12047.2, 1694.6, 45.8, 1.0]) {
            assert!((got - want).abs() < 1e-9 * want.abs().max(1.0), "{got} vs {want}");
        }
        assert!((g.num()[0] - 12047.2).abs() < 1e-9);
        assert_eq!(g.relative_degree(), 3);
    }

    #[test]
    fn unit_benchmark() {
        let g = build_benchmark(1.0, 1.0, 1.0).unwrap();
        assert_eq!(g.den(), &[1.0, 3.0, 3.0, 1.0]);
        assert_eq!(g.num(), &[1.0]);
    }

    #[test]
    fn benchmark_has_unit_dc_gain() {
        for (a, w, xi) in [(8.8, 37.0, 0.5), (0.3, 120.0, 0.05), (44.0, 1.5, 3.0)] {
            let g = build_benchmark(a, w, xi).unwrap();
            assert!((g.dc_gain() - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn benchmark_rejects_nonpositive() {
        assert!(matches!(build_benchmark(0.0, 37.0, 0.5), Err(IlcError::InvalidParameter(_))));
        assert!(matches!(build_benchmark(8.8, -1.0, 0.5), Err(IlcError::InvalidParameter(_))));
        assert!(matches!(build_benchmark(8.8, 37.0, f64::NAN), Err(IlcError::InvalidParameter(_))));
    }

    #[test]
    fn improper_system_rejected() {
        let err = ContinuousSiso::new(vec![1.0, 1.0], vec![1.0, 1.0]).unwrap_err();
        assert!(matches!(err, IlcError::UnsupportedSystem(_)));
    }

    #[test]
    fn integrator_zoh() {
        let g = ContinuousSiso::new(vec![1.0], vec![0.0, 1.0]).unwrap();
        let ss = zoh_discretize(&g, 0.01).unwrap();
        assert!((ss.a()[(0, 0)] - 1.0).abs() < 1e-15);
        assert!((ss.b()[0] * ss.c()[0] - 0.01).abs() < 1e-15);
    }

    #[test]
    fn first_order_small_period() {
        let g = ContinuousSiso::new(vec![1.0], vec![1.0, 1.0]).unwrap();
        let t = 1e-6;
        let ss = zoh_discretize(&g, t).unwrap();
        assert!((ss.a()[(0, 0)] - 1.0).abs() < 2e-6);
        let cb = ss.c()[0] * ss.b()[0];
        assert!((cb / t - 1.0).abs() < 1e-5);
    }

    #[test]
    fn zoh_rejects_bad_period() {
        let g = build_benchmark(8.8, 37.0, 0.5).unwrap();
        assert!(zoh_discretize(&g, 0.0).is_err());
        assert!(zoh_discretize(&g, -0.1).is_err());
    }

    #[test]
    fn markov_of_nilpotent() {
        let ss = DiscreteStateSpace::new(
            DMatrix::zeros(2, 2),
            DVector::from_vec(vec![1.0, 2.0]),
            RowDVector::from_vec(vec![3.0, 0.5]),
            0.1,
        )
        .unwrap();
        let h = markov_parameters(&ss, 4).unwrap();
        assert_eq!(h.values(), &[4.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn markov_geometric() {
        let ss = DiscreteStateSpace::new(
            DMatrix::from_element(1, 1, 0.5),
            DVector::from_element(1, 1.0),
            RowDVector::from_element(1, 1.0),
            1.0,
        )
        .unwrap();
        let h = markov_parameters(&ss, 4).unwrap();
        assert_eq!(h.values(), &[1.0, 0.5, 0.25, 0.125]);
        assert!(markov_parameters(&ss, 0).is_err());
    }

    #[test]
    fn first_order_dc_response() {
        let g = ContinuousSiso::new(vec![1.0], vec![1.0, 1.0]).unwrap();
        let ss = zoh_discretize(&g, 0.05).unwrap();
        let f = freq_response(&ss, 0.0).unwrap();
        assert!((f.magnitude - 1.0).abs() < 1e-12);
        assert!(f.phase.abs() < 1e-12);
    }

    #[test]
    fn dc_response_is_pulse_sum() {
        let g = build_benchmark(8.8, 37.0, 0.5).unwrap();
        let ss = zoh_discretize(&g, 0.01).unwrap();
        let h = markov_parameters(&ss, 5000).unwrap();
        let sum: f64 = h.values().iter().sum();
        let f = freq_response(&ss, 0.0).unwrap();
        assert!((f.magnitude - sum).abs() < 1e-6);
    }

    #[test]
    fn frequency_range_checked() {
        let g = build_benchmark(8.8, 37.0, 0.5).unwrap();
        let ss = zoh_discretize(&g, 0.01).unwrap();
        assert!(freq_response(&ss, ss.nyquist()).is_ok());
        assert!(matches!(
            freq_response(&ss, ss.nyquist() * 1.01),
            Err(IlcError::FrequencyOutOfRange { .. })
        ));
        assert!(freq_response(&ss, -1.0).is_err());
    }

    #[test]
    fn integrator_singular_at_dc() {
        let g = ContinuousSiso::new(vec![1.0], vec![0.0, 1.0]).unwrap();
        let ss = zoh_discretize(&g, 0.01).unwrap();
        assert!(matches!(freq_response(&ss, 0.0), Err(IlcError::SingularEvaluation { .. })));
    }

    #[test]
    fn phase_is_principal_value() {
        let g = build_benchmark(8.8, 37.0, 0.5).unwrap();
        let ss = zoh_discretize(&g, 0.01).unwrap();
        for k in 0..=180 {
            let w = ss.nyquist() * k as f64 / 180.0;
            let f = freq_response(&ss, w).unwrap();
            assert!(f.phase > -PI && f.phase <= PI);
            assert!(f.magnitude >= 0.0);
        }
    }
}
