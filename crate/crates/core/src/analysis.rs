//! Convergence reports for iteration matrices, steady-state deviation of
//! lifted matrices, and robustness of a fixed law to plant parameter error.

use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, IlcError, Result};
use crate::io;
use crate::law::{iteration_error_matrix, singular_values_desc, spectral_radius, IlcLaw, IterationMatrix};
use crate::lifted::toeplitz_matrix;
use crate::lti::{freq_response, markov_parameters, zoh_discretize, ContinuousSiso, DiscreteStateSpace};

#[derive(Clone, Debug, PartialEq)]
pub struct StabilityReport {
    /// Descending.
    pub sigma: Vec<f64>,
    pub rho: f64,
    /// `sigma_max < 1`: the Euclidean error norm decreases every iteration.
    pub monotonic_ok: bool,
    /// `rho < 1`: the error converges to zero.
    pub convergent_ok: bool,
}

impl StabilityReport {
    pub fn sigma_max(&self) -> f64 {
        self.sigma.first().copied().unwrap_or(0.0)
    }

    pub fn first_six(&self) -> &[f64] {
        &self.sigma[..self.sigma.len().min(6)]
    }

    pub fn last_six(&self) -> &[f64] {
        &self.sigma[self.sigma.len().saturating_sub(6)..]
    }

    /// Two-row text table of the six largest and six smallest singular values.
    pub fn table(&self, label: &str) -> String {
        let n = self.sigma.len();
        let mut out = format!("{label}\n");
        let row = |out: &mut String, start: usize, vals: &[f64]| {
            let orders: Vec<String> = (0..vals.len()).map(|i| format!("s{}", start + i + 1)).collect();
            let _ = writeln!(out, "{:<8}{}", "order", pad(&orders));
            let vals: Vec<String> = vals.iter().map(|&v| fmt_table(v)).collect();
            let _ = writeln!(out, "{:<8}{}", "sigma", pad(&vals));
        };
        row(&mut out, 0, self.first_six());
        if n > 6 {
            row(&mut out, n - self.last_six().len(), self.last_six());
        }
        let _ = writeln!(out, "rho = {}  (monotonic: {}, convergent: {})", fmt_table(self.rho), self.monotonic_ok, self.convergent_ok);
        out
    }

    /// Columns `index, sigma`; `rho` goes in a comment line above them.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        io::write_comment_block(&mut out, &format!("rho = {}", io::fmt_g17(self.rho)));
        out.push_str("index,sigma\n");
        for (i, s) in self.sigma.iter().enumerate() {
            io::write_row(&mut out, [(i + 1) as f64, *s]);
        }
        out
    }
}

fn pad(cells: &[String]) -> String {
    cells.iter().map(|c| format!("{c:>12}")).collect()
}

/// Four decimals, switching to scientific notation for small magnitudes.
pub fn fmt_table(v: f64) -> String {
    if v == 0.0 || (1e-3..1e5).contains(&v.abs()) {
        format!("{v:.4}")
    } else {
        format!("{v:.4e}")
    }
}

pub fn stability_report(e: &IterationMatrix) -> StabilityReport {
    StabilityReport {
        sigma: e.sigma.clone(),
        rho: e.rho,
        monotonic_ok: e.sigma_max() < 1.0,
        convergent_ok: e.rho < 1.0,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Sin,
    Cos,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DeviationPoint {
    pub omega: f64,
    pub rms: f64,
    pub max_abs: f64,
}

/// Drives `m` with `sin(omega k T)` (or cosine), `k = 0..ncols-1`, and
/// compares row `r` of the product with the steady-state response at time
/// `r + 1`. Statistics cover the first `eval_len` rows (all rows if `None`).
pub fn freq_deviation_sweep(
    m: &DMatrix<f64>,
    ss: &DiscreteStateSpace,
    omegas: &[f64],
    phase: Phase,
    eval_len: Option<usize>,
) -> Result<Vec<DeviationPoint>> {
    let rows = eval_len.unwrap_or(m.nrows());
    if rows == 0 || rows > m.nrows() {
        return invalid(format!("evaluation length {rows} outside 1..={}", m.nrows()));
    }
    let dt = ss.sample_period();
    let wave = |x: f64| match phase {
        Phase::Sin => x.sin(),
        Phase::Cos => x.cos(),
    };
    omegas
        .iter()
        .map(|&omega| {
            let g = freq_response(ss, omega)?;
            let u = DVector::from_fn(m.ncols(), |k, _| wave(omega * k as f64 * dt));
            let y = m.rows(0, rows) * u;
            let dev = y
                .iter()
                .enumerate()
                .map(|(r, &v)| v - g.magnitude * wave(omega * (r + 1) as f64 * dt + g.phase));
            let (sq, max_abs) = dev.fold((0.0, 0.0f64), |(s, mx), d| (s + d * d, mx.max(d.abs())));
            Ok(DeviationPoint { omega, rms: (sq / rows as f64).sqrt(), max_abs })
        })
        .collect()
}

pub fn deviation_csv(label: &str, phase: Phase, points: &[DeviationPoint]) -> String {
    let mut out = String::new();
    io::write_comment_block(&mut out, &format!("matrix = {label}\nphase = {phase:?}"));
    out.push_str("omega,rms,max_abs\n");
    for p in points {
        io::write_row(&mut out, [p.omega, p.rms, p.max_abs]);
    }
    out
}

/// Parameters of `a omega0^2 / ((s + a)(s^2 + 2 xi omega0 s + omega0^2))`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkParams {
    pub a: f64,
    pub omega0: f64,
    pub xi: f64,
}

impl Default for BenchmarkParams {
    fn default() -> Self {
        Self { a: 8.8, omega0: 37.0, xi: 0.5 }
    }
}

impl BenchmarkParams {
    pub fn plant(&self) -> Result<ContinuousSiso> {
        ContinuousSiso::benchmark(self.a, self.omega0, self.xi)
    }

    pub fn scaled(&self, param: PlantParam, percent: f64) -> Self {
        let f = percent / 100.0;
        let mut p = *self;
        match param {
            PlantParam::A => p.a *= f,
            PlantParam::Omega0 => p.omega0 *= f,
            PlantParam::Xi => p.xi *= f,
        }
        p
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlantParam {
    A,
    Omega0,
    Xi,
}

impl PlantParam {
    pub const ALL: [PlantParam; 3] = [PlantParam::A, PlantParam::Omega0, PlantParam::Xi];

    pub fn as_str(self) -> &'static str {
        match self {
            PlantParam::A => "a",
            PlantParam::Omega0 => "omega0",
            PlantParam::Xi => "xi",
        }
    }
}

impl fmt::Display for PlantParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PlantParam {
    type Err = IlcError;

    fn from_str(s: &str) -> Result<Self> {
        PlantParam::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| IlcError::Parse(format!("unknown plant parameter '{s}'")))
    }
}

/// Point where a metric crosses 1 between two grid points.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Crossing {
    pub percent: f64,
    /// `true` if the metric drops below 1 as the percentage increases.
    pub entering: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RobustnessCurve {
    pub param: PlantParam,
    pub grid: Vec<f64>,
    pub sigma_max: Vec<f64>,
    pub rho: Vec<f64>,
    pub sigma_crossings: Vec<Crossing>,
    pub rho_crossings: Vec<Crossing>,
}

impl RobustnessCurve {
    /// Columns `param, percent, sigma_max, rho`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("param,percent,sigma_max,rho\n");
        for ((p, s), r) in self.grid.iter().zip(&self.sigma_max).zip(&self.rho) {
            out.push_str(self.param.as_str());
            out.push(',');
            io::write_row(&mut out, [*p, *s, *r]);
        }
        out
    }
}

/// Describes the sub-unity region as e.g. `< 159%` or `> 47% and < 119%`.
pub fn describe_region(crossings: &[Crossing], below_one_at_start: bool) -> String {
    if crossings.is_empty() {
        return if below_one_at_start { "whole grid".into() } else { "none".into() };
    }
    crossings
        .iter()
        .map(|c| format!("{} {:.1}%", if c.entering { ">" } else { "<" }, c.percent))
        .collect::<Vec<_>>()
        .join(" and ")
}

/// `(sigma_max, rho)` of `I - P_1 L` for the benchmark at the given parameters.
pub fn iteration_metrics(params: &BenchmarkParams, law: &IlcLaw, sample_period: f64) -> Result<(f64, f64)> {
    let ss = zoh_discretize(&params.plant()?, sample_period)?;
    let p = toeplitz_matrix(&markov_parameters(&ss, law.steps())?);
    let e = iteration_error_matrix(&p, law)?;
    let sigma = singular_values_desc(&e)[0];
    Ok((sigma, spectral_radius(&e)))
}

/// Bisection stops once the bracket is narrower than this, in percent.
pub const CROSSING_RESOLUTION: f64 = 1e-3;

/// Evaluates `sigma_max` and `rho` of the fixed law against the benchmark with
/// one parameter scaled to each grid percentage, and refines every crossing
/// of 1 by bisection.
pub fn robustness_sweep(
    nominal: &BenchmarkParams,
    law: &IlcLaw,
    param: PlantParam,
    grid: &[f64],
    sample_period: f64,
) -> Result<RobustnessCurve> {
    if grid.is_empty() {
        return invalid("robustness grid is empty");
    }
    if grid.iter().any(|p| !(*p > 0.0 && p.is_finite())) || grid.windows(2).any(|w| w[1] <= w[0]) {
        return invalid("robustness grid must be positive and strictly increasing");
    }
    let eval = |pct: f64| iteration_metrics(&nominal.scaled(param, pct), law, sample_period);
    let values = grid.par_iter().map(|&p| eval(p)).collect::<Result<Vec<_>>>()?;
    let (sigma_max, rho): (Vec<f64>, Vec<f64>) = values.into_iter().unzip();

    let crossings = |vals: &[f64], pick: fn((f64, f64)) -> f64| -> Result<Vec<Crossing>> {
        let mut out = Vec::new();
        for i in 0..vals.len().saturating_sub(1) {
            let (below_lo, below_hi) = (vals[i] < 1.0, vals[i + 1] < 1.0);
            if below_lo == below_hi {
                continue;
            }
            let (mut lo, mut hi) = (grid[i], grid[i + 1]);
            while hi - lo > CROSSING_RESOLUTION {
                let mid = 0.5 * (lo + hi);
                if (pick(eval(mid)?) < 1.0) == below_lo {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            out.push(Crossing { percent: 0.5 * (lo + hi), entering: below_hi });
        }
        Ok(out)
    };
    let sigma_crossings = crossings(&sigma_max, |m| m.0)?;
    let rho_crossings = crossings(&rho, |m| m.1)?;
    Ok(RobustnessCurve { param, grid: grid.to_vec(), sigma_max, rho, sigma_crossings, rho_crossings })
}

/// Percentages `start, start+step, ..., <= stop`.
pub fn percent_grid(start: f64, stop: f64, step: f64) -> Result<Vec<f64>> {
    if !(start > 0.0 && step > 0.0 && stop >= start) {
        return invalid(format!("bad percent grid {start}..{stop} step {step}"));
    }
    let n = ((stop - start) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| start + i as f64 * step).collect())
}

/// One row per law: the sub-unity region for each parameter, for each metric.
pub fn thresholds_csv(curves: &[(String, Vec<RobustnessCurve>)]) -> String {
    let mut out = String::from("law,metric,param,crossings,region\n");
    for (law, cs) in curves {
        for metric in ["sigma_max", "rho"] {
            for c in cs {
                let (cross, vals) = if metric == "rho" {
                    (&c.rho_crossings, &c.rho)
                } else {
                    (&c.sigma_crossings, &c.sigma_max)
                };
                let pts: Vec<String> = cross.iter().map(|x| io::fmt_g17(x.percent)).collect();
                let _ = writeln!(
                    out,
                    "{law},{metric},{},{},{}",
                    c.param,
                    pts.join(";"),
                    describe_region(cross, vals.first().is_some_and(|v| *v < 1.0))
                );
            }
        }
    }
    out
}
