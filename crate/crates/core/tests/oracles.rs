//! Cross-checks against independent computations: direct ODE integration,
//! least-squares sinusoid fits, an FFT library, and a stacked real
//! least-squares problem for the FIR fit.

use std::f64::consts::PI;

use freqilc_core::analysis::BenchmarkParams;
use freqilc_core::fir::{design_fir, sample_response, FreqGrid};
use freqilc_core::law::circulant_spectrum;
use freqilc_core::lifted::{circulant_matrix, toeplitz_matrix};
use freqilc_core::lti::{freq_response, markov_parameters, zoh_discretize, ContinuousSiso};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rustfft::FftPlanner;

/// Companion-form ODE for `num(s)/den(s)` (ascending coefficients, monic
/// after normalization) driven by a constant input, advanced by RK4.
struct Ode {
    num: Vec<f64>,
    den: Vec<f64>,
}

impl Ode {
    fn new(sys: &ContinuousSiso) -> Self {
        let lead = *sys.den().last().unwrap();
        Self {
            num: sys.num().iter().map(|c| c / lead).collect(),
            den: sys.den().iter().map(|c| c / lead).collect(),
        }
    }

    fn order(&self) -> usize {
        self.den.len() - 1
    }

    fn deriv(&self, w: &[f64], u: f64) -> Vec<f64> {
        let n = self.order();
        let mut d = vec![0.0; n];
        d[..n - 1].copy_from_slice(&w[1..n]);
        d[n - 1] = u - (0..n).map(|i| self.den[i] * w[i]).sum::<f64>();
        d
    }

    fn output(&self, w: &[f64]) -> f64 {
        self.num.iter().zip(w).map(|(a, b)| a * b).sum()
    }

    fn step(&self, w: &mut [f64], u: f64, h: f64) {
        let add = |w: &[f64], k: &[f64], s: f64| -> Vec<f64> { w.iter().zip(k).map(|(a, b)| a + s * b).collect() };
        let k1 = self.deriv(w, u);
        let k2 = self.deriv(&add(w, &k1, h / 2.0), u);
        let k3 = self.deriv(&add(w, &k2, h / 2.0), u);
        let k4 = self.deriv(&add(w, &k3, h), u);
        for i in 0..w.len() {
            w[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }

    /// Output at `kT`, `k = 1..=u.len()`, for a zero-order-held input.
    fn simulate(&self, u: &[f64], t: f64, substeps: usize) -> Vec<f64> {
        let mut w = vec![0.0; self.order()];
        let h = t / substeps as f64;
        u.iter()
            .map(|&uk| {
                for _ in 0..substeps {
                    self.step(&mut w, uk, h);
                }
                self.output(&w)
            })
            .collect()
    }
}

fn benchmark() -> ContinuousSiso {
    BenchmarkParams::default().plant().unwrap()
}

#[test]
fn markov_parameters_match_integrated_step_response() {
    let sys = benchmark();
    let t = 0.01;
    let ss = zoh_discretize(&sys, t).unwrap();
    let h = markov_parameters(&ss, 30).unwrap();
    let step = Ode::new(&sys).simulate(&[1.0; 30], t, 2000);
    // A unit step is the running sum of pulses, so h(k) = s(k) - s(k-1).
    let mut prev = 0.0;
    for (k, &s) in step.iter().enumerate() {
        let expect = s - prev;
        prev = s;
        assert!(
            (h.values()[k] - expect).abs() < 1e-10 * expect.abs().max(1e-3),
            "k = {}: {} vs {expect}",
            k + 1,
            h.values()[k]
        );
    }
}

#[test]
fn discrete_simulation_matches_ode_with_held_input() {
    let sys = ContinuousSiso::benchmark(3.0, 12.0, 0.3).unwrap();
    let t = 0.02;
    let ss = zoh_discretize(&sys, t).unwrap();
    let u: Vec<f64> = (0..60).map(|k| ((k * 7919) % 13) as f64 / 6.0 - 1.0).collect();
    let oracle = Ode::new(&sys).simulate(&u, t, 400);
    let y = ss.simulate(&u, None);
    for (a, b) in y.iter().zip(&oracle) {
        assert!((a - b).abs() < 1e-9, "{a} vs {b}");
    }
}

#[test]
fn lifted_product_matches_simulation() {
    let ss = zoh_discretize(&benchmark(), 0.01).unwrap();
    let n = 80;
    let p = toeplitz_matrix(&markov_parameters(&ss, n).unwrap());
    let u = DVector::from_fn(n, |k, _| (0.37 * k as f64).sin() + 0.1 * k as f64);
    let y = p.data() * &u;
    let sim = ss.simulate(u.as_slice(), None);
    for (a, b) in y.iter().zip(&sim) {
        assert!((a - b).abs() < 1e-12 * (1.0 + b.abs()), "{a} vs {b}");
    }
}

#[test]
fn frequency_response_matches_fitted_steady_state() {
    let t = 0.01;
    let ss = zoh_discretize(&benchmark(), t).unwrap();
    let len = 3000;
    for omega in [0.5, 10.0, 37.0, 150.0, 300.0] {
        let u: Vec<f64> = (0..len).map(|k| (omega * k as f64 * t).sin()).collect();
        let y = ss.simulate(&u, None);
        // y(k) ~ alpha sin(omega k T) + beta cos(omega k T) once transients die out.
        let rows = 400;
        let a = DMatrix::from_fn(rows, 2, |r, c| {
            let k = (len - rows + r + 1) as f64;
            if c == 0 {
                (omega * k * t).sin()
            } else {
                (omega * k * t).cos()
            }
        });
        let b = DVector::from_fn(rows, |r, _| y[len - rows + r]);
        let x = a.svd(true, true).solve(&b, 1e-14).unwrap();
        let mag = x[0].hypot(x[1]);
        let phase = x[1].atan2(x[0]);
        let g = freq_response(&ss, omega).unwrap();
        assert!((g.magnitude - mag).abs() < 1e-9 * mag.max(1e-3), "omega {omega}: {} vs {mag}", g.magnitude);
        let dphi = (g.phase - phase + PI).rem_euclid(2.0 * PI) - PI;
        assert!(dphi.abs() < 1e-8, "omega {omega}: {} vs {phase}", g.phase);
    }
}

#[test]
fn circulant_spectrum_matches_fft() {
    let ss = zoh_discretize(&benchmark(), 0.01).unwrap();
    for n in [1, 2, 7, 64, 101] {
        let h = markov_parameters(&ss, n).unwrap();
        let mut buf: Vec<rustfft::num_complex::Complex<f64>> =
            h.values().iter().map(|&v| rustfft::num_complex::Complex::new(v, 0.0)).collect();
        FftPlanner::new().plan_fft_forward(n).process(&mut buf);
        let ours = circulant_spectrum(h.values());
        for (a, b) in ours.iter().zip(&buf) {
            assert!((a.re - b.re).abs() < 1e-12 && (a.im - b.im).abs() < 1e-12, "n = {n}");
        }
    }
}

#[test]
fn circulant_eigenvectors_are_fourier_modes() {
    let ss = zoh_discretize(&benchmark(), 0.02).unwrap();
    let n = 16;
    let h = markov_parameters(&ss, n).unwrap();
    let c = circulant_matrix(&h);
    let lambda = circulant_spectrum(h.values());
    for q in 0..n {
        // Column j of a circulant scales e^{+i 2 pi q k / N} by the DFT at q.
        let v: Vec<Complex64> =
            (0..n).map(|k| Complex64::from_polar(1.0, 2.0 * PI * (q * k) as f64 / n as f64)).collect();
        for i in 0..n {
            let cv: Complex64 = (0..n).map(|j| v[j] * c.data()[(i, j)]).sum();
            assert!((cv - lambda[q] * v[i]).norm() < 1e-12);
        }
    }
}

#[test]
fn fir_fit_matches_stacked_real_least_squares() {
    let t = 0.01;
    let ss = zoh_discretize(&benchmark(), t).unwrap();
    let data = sample_response(&ss, &FreqGrid::default()).unwrap();
    let (m, n) = (7, 12);
    let (filter, _) = design_fir(&data, m, n).unwrap();

    // min sum |1 - G(w) sum_p a_p e^{i w T (m - p)}|^2 as a real problem.
    let k = data.samples.len();
    let mut a = DMatrix::zeros(2 * k, n);
    let mut b = DVector::zeros(2 * k);
    for (r, s) in data.samples.iter().enumerate() {
        for p in 0..n {
            let z = s.response() * Complex64::from_polar(1.0, s.omega * t * (m as f64 - (p + 1) as f64));
            a[(2 * r, p)] = z.re;
            a[(2 * r + 1, p)] = z.im;
        }
        b[2 * r] = 1.0;
    }
    let x = a.svd(true, true).solve(&b, 1e-14).unwrap();
    for (p, (&ours, &oracle)) in filter.coeffs().iter().zip(x.iter()).enumerate() {
        assert!((ours - oracle).abs() < 1e-8 * (1.0 + oracle.abs()), "tap {}: {ours} vs {oracle}", p + 1);
    }
}

#[test]
fn sigma_sensitivity_matches_central_differences() {
    use freqilc_core::law::singular_values_desc;
    use freqilc_core::tuner::sigma_sensitivity;

    let p1 = DMatrix::from_fn(6, 7, |i, j| ((i * 7 + j * 3) % 11) as f64 / 10.0 - 0.4 + if i == j { 1.0 } else { 0.0 });
    let l = DMatrix::from_fn(7, 6, |i, j| ((i * 5 + j * 2) % 9) as f64 / 20.0);
    let sigma = |l: &DMatrix<f64>| singular_values_desc(&(DMatrix::identity(6, 6) - &p1 * l))[0];
    let s = sigma_sensitivity(&p1, &l).unwrap();
    let h = 1e-6;
    for i in 0..7 {
        for j in 0..6 {
            let mut lp = l.clone();
            let mut lm = l.clone();
            lp[(i, j)] += h;
            lm[(i, j)] -= h;
            let fd = (sigma(&lp) - sigma(&lm)) / (2.0 * h);
            assert!((s[(i, j)] - fd).abs() < 1e-6 * (1.0 + fd.abs()), "({i},{j}): {} vs {fd}", s[(i, j)]);
        }
    }
}

#[test]
fn tracked_error_follows_iteration_matrix() {
    use freqilc_core::engine::{gen_raised_cos_sq, run_ilc, InitialInput};
    use freqilc_core::law::LawVariant;
    use freqilc_core::pipeline::{design_law, DesignOptions, Setup};

    let setup = Setup::new(BenchmarkParams::default(), 100.0, 41, 1).unwrap();
    let ss = setup.plant().unwrap();
    let ystar = gen_raised_cos_sq(2.0 * PI / 0.4, setup.sample_period, setup.steps).unwrap();
    for v in LawVariant::ALL {
        let d = design_law(&setup, v, &DesignOptions::default()).unwrap();
        let e_mat = d.iteration().unwrap().matrix;
        let rec = run_ilc(&ss, &d.law, &ystar, 4, InitialInput::Desired).unwrap();
        for w in rec.iterations.windows(2) {
            let prev = DVector::from_column_slice(&w[0].e);
            let next = DVector::from_column_slice(&w[1].e);
            let err = (&e_mat * prev - &next).amax();
            assert!(err < 1e-10 * (1.0 + next.amax()), "{v}: {err}");
        }
    }
}
