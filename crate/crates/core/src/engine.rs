//! The learning loop `u_{j+1} = u_j + L e_j`, desired trajectories, and run
//! records.

use std::f64::consts::PI;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, IlcError, Result};
use crate::io;
use crate::law::IlcLaw;
use crate::lti::DiscreteStateSpace;

/// Abort a run once the tracked RMS exceeds this multiple of the initial RMS.
pub const DIVERGENCE_FACTOR: f64 = 1e12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TrajectoryKind {
    /// `pi (5 t^3 + 7.5 t^4 + 3 t^5)`
    Quintic,
    /// `pi (1 - cos(omega t))^2`
    RaisedCosSq { omega: f64 },
    Sine { omega: f64 },
    Custom,
}

impl TrajectoryKind {
    /// Value of the generating function at continuous time `t`; `None` for
    /// sampled data.
    pub fn eval(&self, t: f64) -> Option<f64> {
        match *self {
            TrajectoryKind::Quintic => Some(PI * t.powi(3) * (5.0 + t * (7.5 + 3.0 * t))),
            TrajectoryKind::RaisedCosSq { omega } => Some(PI * (1.0 - (omega * t).cos()).powi(2)),
            TrajectoryKind::Sine { omega } => Some((omega * t).sin()),
            TrajectoryKind::Custom => None,
        }
    }
}

/// Desired output `y*(kT)`, `k = 1..N`.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    samples: Vec<f64>,
    kind: TrajectoryKind,
    sample_period: f64,
}

impl Trajectory {
    pub fn new(samples: Vec<f64>, kind: TrajectoryKind, sample_period: f64) -> Result<Self> {
        if samples.is_empty() {
            return invalid("trajectory needs at least one sample");
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return invalid("trajectory samples must be finite");
        }
        if !(sample_period > 0.0 && sample_period.is_finite()) {
            return invalid(format!("sample period must be positive, got {sample_period}"));
        }
        Ok(Self { samples, kind, sample_period })
    }

    fn generate(kind: TrajectoryKind, sample_period: f64, steps: usize) -> Result<Self> {
        let samples = (1..=steps)
            .map(|k| kind.eval(k as f64 * sample_period).expect("analytic kind"))
            .collect();
        Self::new(samples, kind, sample_period)
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn kind(&self) -> TrajectoryKind {
        self.kind
    }

    pub fn sample_period(&self) -> f64 {
        self.sample_period
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

pub fn gen_quintic(sample_period: f64, steps: usize) -> Result<Trajectory> {
    Trajectory::generate(TrajectoryKind::Quintic, sample_period, steps)
}

pub fn gen_raised_cos_sq(omega: f64, sample_period: f64, steps: usize) -> Result<Trajectory> {
    Trajectory::generate(TrajectoryKind::RaisedCosSq { omega }, sample_period, steps)
}

pub fn gen_sine(omega: f64, sample_period: f64, steps: usize) -> Result<Trajectory> {
    Trajectory::generate(TrajectoryKind::Sine { omega }, sample_period, steps)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialInput {
    /// First run applies the desired trajectory samples as the input.
    #[default]
    Desired,
    Zero,
}

#[derive(Clone, Debug, PartialEq)]
pub struct IterationRecord {
    /// `u(0..N-1)`
    pub u: Vec<f64>,
    /// `y(1..N)`
    pub y: Vec<f64>,
    /// `y* - y` on the tracked steps `k = skip+1..N`.
    pub e: Vec<f64>,
    pub rms: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct IlcRunRecord {
    pub ystar: Trajectory,
    pub skip: usize,
    /// Index 0 is the initial run.
    pub iterations: Vec<IterationRecord>,
}

impl IlcRunRecord {
    /// Number of learning updates applied.
    pub fn learning_iterations(&self) -> usize {
        self.iterations.len() - 1
    }

    pub fn rms(&self) -> Vec<f64> {
        self.iterations.iter().map(|r| r.rms).collect()
    }

    /// Columns `iter, k, t, ystar, y, u, e`. `u` is the input applied over
    /// the step ending at `k`; `e` covers skipped steps too.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("iter,k,t,ystar,y,u,e\n");
        let dt = self.ystar.sample_period();
        for (j, rec) in self.iterations.iter().enumerate() {
            for (idx, (&ys, &y)) in self.ystar.samples().iter().zip(&rec.y).enumerate() {
                let k = idx + 1;
                io::write_row(&mut out, [j as f64, k as f64, k as f64 * dt, ys, y, rec.u[idx], ys - y]);
            }
        }
        out
    }

    /// Columns `iter, rms, wiggle`.
    pub fn summary_csv(&self, window: usize) -> String {
        let mut out = String::from("iter,rms,wiggle\n");
        for (j, rec) in self.iterations.iter().enumerate() {
            io::write_row(&mut out, [j as f64, rec.rms, wiggle(rec, window)]);
        }
        out
    }
}

fn wiggle(rec: &IterationRecord, window: usize) -> f64 {
    rec.e.iter().take(window).fold(0.0, |m, v| m.max(v.abs()))
}

/// Largest `|y* - y|` over the first `window` tracked steps of `iteration`.
pub fn wiggle_metric(record: &IlcRunRecord, iteration: usize, window: usize) -> Result<f64> {
    let rec = record.iterations.get(iteration).ok_or_else(|| {
        IlcError::InvalidParameter(format!(
            "iteration {iteration} not recorded (run has {})",
            record.iterations.len()
        ))
    })?;
    Ok(wiggle(rec, window))
}

/// Runs the initial trial and `iters` learning updates. The plant starts
/// from rest on every trial.
pub fn run_ilc(
    plant: &DiscreteStateSpace,
    law: &IlcLaw,
    ystar: &Trajectory,
    iters: usize,
    u0: InitialInput,
) -> Result<IlcRunRecord> {
    let n = ystar.len();
    let skip = law.skip_steps();
    if law.steps() != n {
        return Err(IlcError::DimensionMismatch(format!(
            "law acts on {} input steps but the trajectory has {n} samples",
            law.steps()
        )));
    }
    let tracked = n - skip;
    let l = law.matrix();

    let mut u = match u0 {
        InitialInput::Desired => ystar.samples().to_vec(),
        InitialInput::Zero => vec![0.0; n],
    };
    let mut iterations = Vec::with_capacity(iters + 1);
    let mut rms0 = None;
    for j in 0..=iters {
        let y = plant.simulate(&u, None);
        let e: Vec<f64> = (skip..n).map(|k| ystar.samples()[k] - y[k]).collect();
        let rms = (e.iter().map(|v| v * v).sum::<f64>() / tracked as f64).sqrt();
        let base = *rms0.get_or_insert(rms);
        if !rms.is_finite() || (base > 0.0 && rms > DIVERGENCE_FACTOR * base) {
            return Err(IlcError::Diverged { iteration: j });
        }
        let next = if j < iters {
            let du = l * DVector::from_column_slice(&e);
            Some(u.iter().zip(du.iter()).map(|(a, b)| a + b).collect::<Vec<f64>>())
        } else {
            None
        };
        iterations.push(IterationRecord { u, y, e, rms });
        match next {
            Some(v) => u = v,
            None => break,
        }
    }
    Ok(IlcRunRecord { ystar: ystar.clone(), skip, iterations })
}
