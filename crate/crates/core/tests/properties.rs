use freqilc_core::analysis::{robustness_sweep, BenchmarkParams, PlantParam};
use freqilc_core::engine::{run_ilc, InitialInput, Trajectory, TrajectoryKind};
use freqilc_core::law::{
    build_circulant_law, iteration_matrix, singular_values_desc, spectral_radius, IlcLaw, LawVariant,
};
use freqilc_core::lifted::{circulant_matrix, delete_leading, toeplitz_matrix, LiftedMatrix, MatrixKind};
use freqilc_core::lti::{markov_parameters, zoh_discretize, ContinuousSiso, MarkovSequence};
use freqilc_core::pipeline::{design_law, DesignOptions, Setup};
use freqilc_core::tuner::{steepest_descent_tune, Block, TuneSpec};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn markov() -> impl Strategy<Value = MarkovSequence> {
    prop::collection::vec(-2.0..2.0f64, 1..24).prop_map(|h| MarkovSequence::new(h, 0.01).unwrap())
}

fn plant_params() -> impl Strategy<Value = BenchmarkParams> {
    (1.0..20.0f64, 5.0..80.0f64, 0.1..1.5f64).prop_map(|(a, omega0, xi)| BenchmarkParams { a, omega0, xi })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn toeplitz_is_lower_triangular_and_constant_along_diagonals(h in markov()) {
        let p = toeplitz_matrix(&h);
        let n = h.len();
        for i in 0..n {
            for j in 0..n {
                let expect = if i >= j { h.values()[i - j] } else { 0.0 };
                prop_assert_eq!(p.data()[(i, j)], expect);
            }
        }
    }

    #[test]
    fn circulant_rows_are_rotations(h in markov()) {
        let c = circulant_matrix(&h);
        let n = h.len();
        for i in 0..n {
            for j in 0..n {
                prop_assert_eq!(c.data()[(i, j)], c.data()[((i + 1) % n, (j + 1) % n)]);
            }
            prop_assert_eq!(c.data()[(i, 0)], h.values()[i]);
        }
    }

    #[test]
    fn circulant_agrees_with_toeplitz_below_diagonal(h in markov()) {
        let c = circulant_matrix(&h);
        let p = toeplitz_matrix(&h);
        let n = h.len();
        for i in 0..n {
            for j in 0..=i {
                prop_assert_eq!(c.data()[(i, j)], p.data()[(i, j)]);
            }
        }
    }

    #[test]
    fn delete_leading_drops_exactly_the_leading_rows_and_cols(h in markov(), r in 0usize..4, c in 0usize..4) {
        let p = toeplitz_matrix(&h);
        let n = h.len();
        if r >= n || c >= n {
            prop_assert!(delete_leading(&p, r, c).is_err());
            return Ok(());
        }
        let d = delete_leading(&p, r, c).unwrap();
        prop_assert_eq!(d.data().shape(), (n - r, n - c));
        for i in 0..n - r {
            for j in 0..n - c {
                prop_assert_eq!(d.data()[(i, j)], p.data()[(i + r, j + c)]);
            }
        }
    }

    #[test]
    fn spectral_radius_never_exceeds_largest_singular_value(
        v in prop::collection::vec(-3.0..3.0f64, 1..=64),
    ) {
        let n = (v.len() as f64).sqrt() as usize;
        let m = DMatrix::from_column_slice(n, n, &v[..n * n]);
        let sigma = singular_values_desc(&m)[0];
        prop_assert!(spectral_radius(&m) <= sigma * (1.0 + 1e-9) + 1e-12);
    }

    #[test]
    fn discretization_preserves_dc_gain(p in plant_params(), rate in 20.0..500.0f64) {
        let sys = p.plant().unwrap();
        let ss = zoh_discretize(&sys, 1.0 / rate).unwrap();
        // Discrete DC gain C (I - A)^-1 B.
        let n = ss.order();
        let x = (DMatrix::identity(n, n) - ss.a()).lu().solve(ss.b()).unwrap();
        let discrete = (ss.c() * x)[0];
        let dc = sys.dc_gain();
        prop_assert!((discrete - dc).abs() < 1e-9 * dc.abs(), "{} vs {}", discrete, dc);
    }

    #[test]
    fn lifted_and_law_csv_round_trip(h in markov(), skip in 0usize..3) {
        let p = toeplitz_matrix(&h);
        let back = LiftedMatrix::from_csv(&p.to_csv()).unwrap();
        prop_assert_eq!(&back, &p);
        prop_assume!(skip < h.len());
        let gain = delete_leading(&LiftedMatrix::new(p.data().clone(), MatrixKind::Learning, 0.01), 0, skip).unwrap();
        let law = IlcLaw::new(gain, LawVariant::Circulant, skip).unwrap();
        prop_assert_eq!(IlcLaw::from_csv(&law.to_csv()).unwrap(), law);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn tuning_only_moves_masked_entries_and_never_raises_sigma(
        steps in 6usize..14,
        rows in 1usize..4,
        cols in 1usize..4,
        target in 0.3..0.95f64,
        seed in any::<u64>(),
    ) {
        let setup = Setup::new(BenchmarkParams::default(), 50.0, steps, 1).unwrap();
        let d = design_law(&setup, LawVariant::Circulant, &DesignOptions::default()).unwrap();
        let (r, c) = d.law.matrix().shape();
        let mut spec = TuneSpec::new(vec![Block::upper_left(rows, cols), Block::upper_right(rows, cols, c)], target);
        spec.seed = seed;
        spec.max_iters = 200;
        let (tuned, trace) = steepest_descent_tune(&d.p1().unwrap(), &d.law, &spec).unwrap();
        for i in 0..r {
            for j in 0..c {
                if !spec.blocks.iter().any(|b| b.contains(i, j)) {
                    prop_assert_eq!(tuned.matrix()[(i, j)], d.law.matrix()[(i, j)]);
                }
            }
        }
        let mut prev = trace.initial_sigma;
        for s in &trace.steps {
            prop_assert!(s.sigma_max < prev);
            prev = s.sigma_max;
        }
        let sigma = iteration_matrix(&d.p, &tuned).unwrap().sigma_max();
        prop_assert!((sigma - trace.final_sigma()).abs() < 1e-9);
    }

    #[test]
    fn tracked_error_contracts_by_at_most_sigma(
        steps in 5usize..30,
        shape in prop::collection::vec(-1.0..1.0f64, 30),
    ) {
        let setup = Setup::new(BenchmarkParams::default(), 100.0, steps, 1).unwrap();
        let ss = setup.plant().unwrap();
        let h = markov_parameters(&ss, steps).unwrap();
        let law = build_circulant_law(&circulant_matrix(&h), 1).unwrap();
        let e = iteration_matrix(&toeplitz_matrix(&h), &law).unwrap();
        let ystar = Trajectory::new(shape[..steps].to_vec(), TrajectoryKind::Custom, setup.sample_period).unwrap();
        let rec = run_ilc(&ss, &law, &ystar, 3, InitialInput::Zero).unwrap();
        let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        for w in rec.iterations.windows(2) {
            prop_assert!(norm(&w[1].e) <= e.sigma_max() * norm(&w[0].e) * (1.0 + 1e-9) + 1e-12);
        }
    }

    #[test]
    fn sweep_radius_is_bounded_by_sigma(p in prop::sample::select(PlantParam::ALL.to_vec())) {
        let setup = Setup::new(BenchmarkParams::default(), 100.0, 15, 1).unwrap();
        let d = design_law(&setup, LawVariant::FirBanded, &DesignOptions::default()).unwrap();
        let grid = [40.0, 75.0, 100.0, 150.0, 220.0];
        let c = robustness_sweep(&setup.params, &d.law, p, &grid, setup.sample_period).unwrap();
        for (s, r) in c.sigma_max.iter().zip(&c.rho) {
            prop_assert!(*r <= s * (1.0 + 1e-9) + 1e-12);
        }
    }
}

#[test]
fn benchmark_constructor_matches_explicit_polynomials() {
    let sys = ContinuousSiso::benchmark(8.8, 37.0, 0.5).unwrap();
    let explicit = ContinuousSiso::new(
        vec![8.8 * 37.0 * 37.0],
        vec![8.8 * 37.0 * 37.0, 37.0 * 37.0 + 8.8 * 37.0, 8.8 + 37.0, 1.0],
    )
    .unwrap();
    assert!((sys.dc_gain() - explicit.dc_gain()).abs() < 1e-12);
    for w in [0.1, 5.0, 37.0, 200.0] {
        let s = num_complex::Complex64::new(0.0, w);
        assert!((sys.eval(s) - explicit.eval(s)).norm() < 1e-12 * sys.eval(s).norm());
    }
}
