//! End-to-end construction of a learning law for the benchmark plant: sample,
//! discretize, design, and pair the law with the lifted plant it acts on.

use crate::analysis::BenchmarkParams;
use crate::config::ExperimentConfig;
use crate::error::{invalid, Result};
use crate::fir::{default_m, design_fir, design_full_matrix, fir_to_learning_matrix, sample_response, FirFilter, FitReport, FreqGrid};
use crate::law::{
    build_circulant_law, build_extended_circulant_law, build_fir_law, iteration_matrix, FirLayout, IlcLaw,
    IterationMatrix, LawVariant,
};
use crate::lifted::{circulant_matrix, delete_leading, extended_circulant, toeplitz_matrix, LiftedMatrix};
use crate::lti::{markov_parameters, zoh_discretize, DiscreteStateSpace};
use crate::tuner::{steepest_descent_tune, TuneSpec, TuneTrace};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Setup {
    pub params: BenchmarkParams,
    pub sample_period: f64,
    pub steps: usize,
    pub skip: usize,
}

impl Setup {
    pub fn new(params: BenchmarkParams, sample_rate: f64, steps: usize, skip: usize) -> Result<Self> {
        if !(sample_rate > 0.0 && sample_rate.is_finite()) {
            return invalid(format!("sample rate must be positive, got {sample_rate}"));
        }
        if skip >= steps {
            return invalid(format!("skip = {skip} leaves nothing to learn with N = {steps}"));
        }
        Ok(Self { params, sample_period: 1.0 / sample_rate, steps, skip })
    }

    pub fn from_config(cfg: &ExperimentConfig) -> Result<Self> {
        Self::new(cfg.plant, cfg.sample_rate, cfg.steps, cfg.skip)
    }

    pub fn plant(&self) -> Result<DiscreteStateSpace> {
        zoh_discretize(&self.params.plant()?, self.sample_period)
    }

    pub fn toeplitz(&self, steps: usize) -> Result<LiftedMatrix> {
        Ok(toeplitz_matrix(&markov_parameters(&self.plant()?, steps)?))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DesignOptions {
    pub fir_m: Option<usize>,
    pub fir_n: Option<usize>,
    pub grid: FreqGrid,
    pub extension_factor: usize,
    pub full_size: bool,
}

impl Default for DesignOptions {
    fn default() -> Self {
        Self { fir_m: None, fir_n: None, grid: FreqGrid::default(), extension_factor: 10, full_size: false }
    }
}

impl DesignOptions {
    pub fn from_config(cfg: &ExperimentConfig) -> Self {
        Self {
            fir_m: cfg.fir.m,
            fir_n: cfg.fir.n,
            grid: cfg.fir.grid(),
            extension_factor: cfg.circulant.extension_factor,
            full_size: cfg.circulant.full_size,
        }
    }
}

/// A law together with the square lifted plant `P` it was designed for.
#[derive(Clone, Debug, PartialEq)]
pub struct DesignedLaw {
    pub law: IlcLaw,
    pub p: LiftedMatrix,
    pub fir: Option<(FirFilter, FitReport)>,
}

impl DesignedLaw {
    /// `P` with the skipped leading rows removed.
    pub fn p1(&self) -> Result<LiftedMatrix> {
        delete_leading(&self.p, self.law.skip_steps(), 0)
    }

    pub fn iteration(&self) -> Result<IterationMatrix> {
        iteration_matrix(&self.p, &self.law)
    }

    pub fn tune(&self, spec: &TuneSpec) -> Result<(DesignedLaw, TuneTrace)> {
        let (law, trace) = steepest_descent_tune(&self.p1()?, &self.law, spec)?;
        Ok((DesignedLaw { law, p: self.p.clone(), fir: self.fir.clone() }, trace))
    }
}

pub fn design_law(setup: &Setup, variant: LawVariant, opts: &DesignOptions) -> Result<DesignedLaw> {
    let ss = setup.plant()?;
    let n_steps = setup.steps;
    match variant {
        LawVariant::FirBanded => {
            let data = sample_response(&ss, &opts.grid)?;
            let n = opts.fir_n.unwrap_or(n_steps);
            let m = opts.fir_m.unwrap_or_else(|| default_m(n));
            let (filter, report) = design_fir(&data, m, n)?;
            let f = fir_to_learning_matrix(&filter, n_steps);
            Ok(DesignedLaw {
                law: build_fir_law(&f, FirLayout::Banded, setup.skip)?,
                p: setup.toeplitz(n_steps)?,
                fir: Some((filter, report)),
            })
        }
        LawVariant::FirFull => {
            let data = sample_response(&ss, &opts.grid)?;
            let (filter, report, f) = design_full_matrix(&data, n_steps)?;
            Ok(DesignedLaw {
                law: build_fir_law(&f, FirLayout::Full, setup.skip)?,
                p: setup.toeplitz(n_steps)?,
                fir: Some((filter, report)),
            })
        }
        LawVariant::Circulant => {
            let h = markov_parameters(&ss, n_steps)?;
            Ok(DesignedLaw {
                law: build_circulant_law(&circulant_matrix(&h), setup.skip)?,
                p: toeplitz_matrix(&h),
                fir: None,
            })
        }
        LawVariant::CirculantExtended => {
            let pec = extended_circulant(&ss, n_steps, opts.extension_factor)?;
            if opts.full_size {
                let big = n_steps * opts.extension_factor;
                Ok(DesignedLaw {
                    law: build_circulant_law(&pec, setup.skip)?,
                    p: setup.toeplitz(big)?,
                    fir: None,
                })
            } else {
                Ok(DesignedLaw {
                    law: build_extended_circulant_law(&pec, n_steps, setup.skip)?,
                    p: setup.toeplitz(n_steps)?,
                    fir: None,
                })
            }
        }
    }
}
