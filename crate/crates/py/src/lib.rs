//! Python bindings: plant setup, law design and tuning, learning runs and
//! robustness sweeps. Matrices cross the boundary as lists of rows.

use freqilc_core::analysis::{percent_grid, robustness_sweep, BenchmarkParams, PlantParam};
use freqilc_core::engine::{run_ilc, InitialInput, Trajectory, TrajectoryKind};
use freqilc_core::fir::{design_fir as core_design_fir, sample_response, FreqGrid};
use freqilc_core::law::{IlcLaw, LawVariant};
use freqilc_core::lti::{freq_response, markov_parameters, DiscreteStateSpace};
use freqilc_core::pipeline::{design_law, DesignOptions, DesignedLaw, Setup};
use freqilc_core::tuner::{Corner, CornerBlock, LineSearch, TuneSpec};
use freqilc_core::IlcError;
use nalgebra::DMatrix;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn py_err(e: IlcError) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn parse<T: std::str::FromStr>(s: &str, what: &str) -> PyResult<T> {
    s.parse().map_err(|_| PyValueError::new_err(format!("unknown {what} '{s}'")))
}

fn corner(s: &str) -> PyResult<Corner> {
    Ok(match s {
        "upper_left" => Corner::UpperLeft,
        "upper_right" => Corner::UpperRight,
        "lower_left" => Corner::LowerLeft,
        "lower_right" => Corner::LowerRight,
        _ => return Err(PyValueError::new_err(format!("unknown corner '{s}'"))),
    })
}

fn plant_param(s: &str) -> PyResult<PlantParam> {
    PlantParam::ALL
        .into_iter()
        .find(|p| p.as_str() == s)
        .ok_or_else(|| PyValueError::new_err(format!("unknown plant parameter '{s}'")))
}

/// The sampled benchmark plant.
#[pyclass(name = "Plant", frozen)]
struct PyPlant {
    setup: Setup,
    ss: DiscreteStateSpace,
}

#[pymethods]
impl PyPlant {
    #[new]
    #[pyo3(signature = (sample_rate=100.0, steps=101, skip=1, a=8.8, omega0=37.0, xi=0.5))]
    fn new(sample_rate: f64, steps: usize, skip: usize, a: f64, omega0: f64, xi: f64) -> PyResult<Self> {
        let setup = Setup::new(BenchmarkParams { a, omega0, xi }, sample_rate, steps, skip).map_err(py_err)?;
        let ss = setup.plant().map_err(py_err)?;
        Ok(Self { setup, ss })
    }

    #[getter]
    fn sample_period(&self) -> f64 {
        self.setup.sample_period
    }

    #[getter]
    fn steps(&self) -> usize {
        self.setup.steps
    }

    fn markov(&self, count: usize) -> PyResult<Vec<f64>> {
        Ok(markov_parameters(&self.ss, count).map_err(py_err)?.values().to_vec())
    }

    /// `y(1..N)` from rest for the held input `u(0..N-1)`.
    fn simulate(&self, u: Vec<f64>) -> Vec<f64> {
        self.ss.simulate(&u, None)
    }

    /// `(magnitude, phase)` at `omega` rad/s.
    fn freq_response(&self, omega: f64) -> PyResult<(f64, f64)> {
        let g = freq_response(&self.ss, omega).map_err(py_err)?;
        Ok((g.magnitude, g.phase))
    }

    fn toeplitz(&self) -> PyResult<Vec<Vec<f64>>> {
        Ok(rows(self.setup.toeplitz(self.setup.steps).map_err(py_err)?.data()))
    }

    /// Designs a law: `fir_banded`, `fir_full`, `circulant` or `circulant_extended`.
    #[pyo3(signature = (variant, fir_m=None, fir_n=None, extension_factor=10, full_size=false))]
    fn design(
        &self,
        variant: &str,
        fir_m: Option<usize>,
        fir_n: Option<usize>,
        extension_factor: usize,
        full_size: bool,
    ) -> PyResult<PyLaw> {
        let opts = DesignOptions { fir_m, fir_n, grid: FreqGrid::default(), extension_factor, full_size };
        let d = design_law(&self.setup, parse::<LawVariant>(variant, "law variant")?, &opts).map_err(py_err)?;
        Ok(PyLaw { inner: d, setup: self.setup })
    }

    /// Least-squares FIR inverse with `n` taps, `m` of them non-causal.
    /// Returns `(coeffs, max |1 - G F| over the grid)`.
    fn design_fir(&self, m: usize, n: usize) -> PyResult<(Vec<f64>, f64)> {
        let data = sample_response(&self.ss, &FreqGrid::default()).map_err(py_err)?;
        let (f, report) = core_design_fir(&data, m, n).map_err(py_err)?;
        Ok((f.coeffs().to_vec(), report.max_residual()))
    }

    fn __repr__(&self) -> String {
        let p = self.setup.params;
        format!(
            "Plant(a={}, omega0={}, xi={}, sample_rate={}, steps={}, skip={})",
            p.a,
            p.omega0,
            p.xi,
            1.0 / self.setup.sample_period,
            self.setup.steps,
            self.setup.skip
        )
    }
}

/// A learning law together with the lifted plant it was designed for.
#[pyclass(name = "Law", frozen)]
struct PyLaw {
    inner: DesignedLaw,
    setup: Setup,
}

#[pymethods]
impl PyLaw {
    #[getter]
    fn variant(&self) -> &'static str {
        self.inner.law.variant().as_str()
    }

    #[getter]
    fn skip(&self) -> usize {
        self.inner.law.skip_steps()
    }

    #[getter]
    fn tuned(&self) -> bool {
        self.inner.law.is_tuned()
    }

    fn matrix(&self) -> Vec<Vec<f64>> {
        rows(self.inner.law.matrix())
    }

    fn iteration_matrix(&self) -> PyResult<Vec<Vec<f64>>> {
        Ok(rows(&self.inner.iteration().map_err(py_err)?.matrix))
    }

    /// Singular values of `I - P1 L`, largest first.
    fn sigma(&self) -> PyResult<Vec<f64>> {
        Ok(self.inner.iteration().map_err(py_err)?.sigma)
    }

    /// Spectral radius of `I - P1 L`.
    fn rho(&self) -> PyResult<f64> {
        Ok(self.inner.iteration().map_err(py_err)?.rho)
    }

    /// Steepest descent on the given corner blocks, each `(corner, rows, cols)`.
    /// Returns `(tuned_law, trace)` where `trace` is a dict.
    #[pyo3(signature = (target, blocks, seed=0, max_iters=5000, line_search="exact"))]
    fn tune<'py>(
        &self,
        py: Python<'py>,
        target: f64,
        blocks: Vec<(String, usize, usize)>,
        seed: u64,
        max_iters: usize,
        line_search: &str,
    ) -> PyResult<(PyLaw, Bound<'py, PyDict>)> {
        let (r, c) = self.inner.law.matrix().shape();
        let resolved = blocks
            .iter()
            .map(|(k, rows, cols)| {
                CornerBlock { corner: corner(k)?, rows: *rows, cols: *cols }.resolve(r, c).map_err(py_err)
            })
            .collect::<PyResult<Vec<_>>>()?;
        let mut spec = TuneSpec::new(resolved, target);
        spec.seed = seed;
        spec.max_iters = max_iters;
        spec.line_search = match line_search {
            "exact" => LineSearch::Exact,
            "backtracking" => LineSearch::Backtracking,
            _ => return Err(PyValueError::new_err(format!("unknown line search '{line_search}'"))),
        };
        let (d, trace) = self.inner.tune(&spec).map_err(py_err)?;
        let info = PyDict::new(py);
        info.set_item("initial_sigma", trace.initial_sigma)?;
        info.set_item("final_sigma", trace.final_sigma())?;
        info.set_item("iterations", trace.iterations())?;
        info.set_item("stop", format!("{:?}", trace.stop))?;
        info.set_item("sigma", trace.steps.iter().map(|s| s.sigma_max).collect::<Vec<_>>())?;
        Ok((PyLaw { inner: d, setup: self.setup }, info))
    }

    /// Runs the learning loop on the nominal plant. `trajectory` is a list of
    /// `y*(1..N)` samples or the name `quintic`. Returns a dict with the RMS
    /// per iteration and the final input and error.
    #[pyo3(signature = (trajectory, iterations=10, initial_input="desired"))]
    fn simulate<'py>(
        &self,
        py: Python<'py>,
        trajectory: &Bound<'py, PyAny>,
        iterations: usize,
        initial_input: &str,
    ) -> PyResult<Bound<'py, PyDict>> {
        let dt = self.setup.sample_period;
        let n = self.setup.steps;
        let ystar = if let Ok(name) = trajectory.extract::<String>() {
            if name != "quintic" {
                return Err(PyValueError::new_err(format!("unknown trajectory '{name}'")));
            }
            let samples = (1..=n).map(|k| TrajectoryKind::Quintic.eval(k as f64 * dt).unwrap()).collect();
            Trajectory::new(samples, TrajectoryKind::Quintic, dt)
        } else {
            Trajectory::new(trajectory.extract::<Vec<f64>>()?, TrajectoryKind::Custom, dt)
        }
        .map_err(py_err)?;
        let u0 = match initial_input {
            "desired" => InitialInput::Desired,
            "zero" => InitialInput::Zero,
            _ => return Err(PyValueError::new_err(format!("unknown initial input '{initial_input}'"))),
        };
        let plant = self.setup.plant().map_err(py_err)?;
        let rec = run_ilc(&plant, &self.inner.law, &ystar, iterations, u0).map_err(py_err)?;
        let last = rec.iterations.last().expect("initial run is recorded");
        let out = PyDict::new(py);
        out.set_item("rms", rec.rms())?;
        out.set_item("u", last.u.clone())?;
        out.set_item("y", last.y.clone())?;
        out.set_item("e", last.e.clone())?;
        Ok(out)
    }

    /// Scales one plant parameter over `start..=stop` percent and returns
    /// `{percent, sigma_max, rho}` lists.
    #[pyo3(signature = (param, start=1.0, stop=300.0, step=1.0))]
    fn robustness_sweep<'py>(
        &self,
        py: Python<'py>,
        param: &str,
        start: f64,
        stop: f64,
        step: f64,
    ) -> PyResult<Bound<'py, PyDict>> {
        let grid = percent_grid(start, stop, step).map_err(py_err)?;
        let curve = robustness_sweep(
            &self.setup.params,
            &self.inner.law,
            plant_param(param)?,
            &grid,
            self.setup.sample_period,
        )
        .map_err(py_err)?;
        let out = PyDict::new(py);
        out.set_item("percent", curve.grid)?;
        out.set_item("sigma_max", curve.sigma_max)?;
        out.set_item("rho", curve.rho)?;
        Ok(out)
    }

    fn to_csv(&self) -> String {
        self.inner.law.to_csv()
    }

    /// Replaces the gain with one read back from `to_csv` output.
    fn with_csv(&self, text: &str) -> PyResult<PyLaw> {
        let law = IlcLaw::from_csv(text).map_err(py_err)?;
        if law.matrix().shape() != self.inner.law.matrix().shape() {
            return Err(PyValueError::new_err("law shape does not match this plant"));
        }
        Ok(PyLaw { inner: DesignedLaw { law, ..self.inner.clone() }, setup: self.setup })
    }

    fn __repr__(&self) -> String {
        let (r, c) = self.inner.law.matrix().shape();
        format!("Law({}, {r}x{c}, skip={}, tuned={})", self.variant(), self.skip(), self.tuned())
    }
}

#[pymodule]
fn freqilc(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyPlant>()?;
    m.add_class::<PyLaw>()?;
    m.add(
        "VARIANTS",
        LawVariant::ALL.iter().map(|v| v.as_str()).collect::<Vec<_>>(),
    )?;
    Ok(())
}
