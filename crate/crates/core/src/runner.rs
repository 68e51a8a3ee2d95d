//! The design / tune / simulate / sweep commands. Each writes plain CSV
//! artifacts, every one headed by the resolved configuration as `#` lines.

use std::fs;
use std::path::{Path, PathBuf};

use crate::analysis::{
    deviation_csv, freq_deviation_sweep, percent_grid, robustness_sweep, stability_report, thresholds_csv,
    DeviationPoint, Phase, RobustnessCurve, StabilityReport,
};
use crate::config::ExperimentConfig;
use crate::engine::{run_ilc, IlcRunRecord, Trajectory};
use crate::error::{invalid, Result};
use crate::io;
use crate::law::LawVariant;
use crate::lifted::{circulant_matrix, extended_circulant};
use crate::lti::markov_parameters;
use crate::pipeline::{design_law, DesignOptions, DesignedLaw, Setup};
use crate::tuner::TuneTrace;

/// Label of the iteration matrix a law produces, for report headers.
pub fn iteration_label(variant: LawVariant, full_size: bool) -> &'static str {
    match (variant, full_size) {
        (LawVariant::FirBanded, _) => "I - P1*F1",
        (LawVariant::FirFull, _) => "I - P1*Ff1",
        (LawVariant::Circulant, _) => "I - P1*inv(Pc)1",
        (LawVariant::CirculantExtended, true) => "I - Pe1*inv(Pec)1",
        (LawVariant::CirculantExtended, false) => "I - P1*inv(Pec)1",
    }
}

pub struct ArtifactWriter {
    dir: PathBuf,
    header: String,
}

impl ArtifactWriter {
    pub fn new(dir: &Path, cfg: &ExperimentConfig) -> Result<Self> {
        fs::create_dir_all(dir)?;
        let mut header = String::new();
        io::write_comment_block(&mut header, &cfg.to_toml());
        Ok(Self { dir: dir.to_path_buf(), header })
    }

    pub fn write(&self, name: &str, body: &str) -> Result<PathBuf> {
        let path = self.dir.join(name);
        fs::write(&path, format!("{}{body}", self.header))?;
        Ok(path)
    }
}

#[derive(Clone, Debug)]
pub struct LawReport {
    pub variant: LawVariant,
    pub label: &'static str,
    pub report: StabilityReport,
    pub trace: Option<TuneTrace>,
}

impl LawReport {
    pub fn table(&self) -> String {
        self.report.table(self.label)
    }
}

fn designed(cfg: &ExperimentConfig, variant: LawVariant) -> Result<DesignedLaw> {
    design_law(&Setup::from_config(cfg)?, variant, &DesignOptions::from_config(cfg))
}

fn tuned(cfg: &ExperimentConfig, variant: LawVariant) -> Result<(DesignedLaw, TuneTrace)> {
    let Some(tune) = &cfg.tune else {
        return invalid("this command needs a [tune] section");
    };
    let d = designed(cfg, variant)?;
    let (r, c) = d.law.matrix().shape();
    d.tune(&tune.spec(variant, r, c, cfg.seed)?)
}

fn report_for(d: &DesignedLaw, cfg: &ExperimentConfig, trace: Option<TuneTrace>) -> Result<LawReport> {
    let variant = d.law.variant();
    Ok(LawReport {
        variant,
        label: iteration_label(variant, cfg.circulant.full_size),
        report: stability_report(&d.iteration()?),
        trace,
    })
}

/// Builds each configured law and writes the law matrix, the FIR taps, and
/// the singular values of its iteration matrix.
pub fn cmd_design(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<LawReport>> {
    let w = ArtifactWriter::new(out, cfg)?;
    cfg.approaches
        .iter()
        .map(|&v| {
            let d = designed(cfg, v)?;
            w.write(&format!("{v}_law.csv"), &d.law.to_csv())?;
            if let Some((f, _)) = &d.fir {
                w.write(&format!("{v}_fir.csv"), &f.to_csv())?;
            }
            let r = report_for(&d, cfg, None)?;
            w.write(&format!("{v}_sigma.csv"), &r.report.to_csv())?;
            Ok(r)
        })
        .collect()
}

/// Designs and tunes each configured law; writes the tuned law, the
/// descent trace and the resulting singular values.
pub fn cmd_tune(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<LawReport>> {
    let w = ArtifactWriter::new(out, cfg)?;
    cfg.approaches
        .iter()
        .map(|&v| {
            let (d, trace) = tuned(cfg, v)?;
            w.write(&format!("{v}_tuned_law.csv"), &d.law.to_csv())?;
            w.write(&format!("{v}_trace.csv"), &trace.to_csv())?;
            let r = report_for(&d, cfg, Some(trace))?;
            w.write(&format!("{v}_tuned_sigma.csv"), &r.report.to_csv())?;
            Ok(r)
        })
        .collect()
}

pub fn trajectory(cfg: &ExperimentConfig) -> Result<Trajectory> {
    let Some(tc) = &cfg.trajectory else {
        return invalid("this command needs a [trajectory] section");
    };
    let kind = tc.kind()?;
    let dt = cfg.sample_period();
    let samples = (1..=cfg.steps).map(|k| kind.eval(k as f64 * dt).expect("analytic shape")).collect();
    Trajectory::new(samples, kind, dt)
}

/// Runs the learning loop with each configured law on the nominal plant.
pub fn cmd_simulate(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<(LawVariant, IlcRunRecord)>> {
    let w = ArtifactWriter::new(out, cfg)?;
    let ystar = trajectory(cfg)?;
    let plant = Setup::from_config(cfg)?.plant()?;
    cfg.approaches
        .iter()
        .map(|&v| {
            let d = if cfg.run.tuned { tuned(cfg, v)?.0 } else { designed(cfg, v)? };
            let rec = run_ilc(&plant, &d.law, &ystar, cfg.run.iterations, cfg.run.initial_input)?;
            w.write(&format!("{v}_run.csv"), &rec.to_csv())?;
            w.write(&format!("{v}_summary.csv"), &rec.summary_csv(cfg.run.wiggle_window))?;
            Ok((v, rec))
        })
        .collect()
}

#[derive(Clone, Debug, Default)]
pub struct SweepOutput {
    pub robustness: Vec<(LawVariant, Vec<RobustnessCurve>)>,
    /// `(matrix label, phase, points)`
    pub deviation: Vec<(String, Phase, Vec<DeviationPoint>)>,
}

/// Robustness sweeps over plant parameters and/or steady-state deviation
/// sweeps of the lifted plant matrices, as configured.
pub fn cmd_sweep(cfg: &ExperimentConfig, out: &Path) -> Result<SweepOutput> {
    let w = ArtifactWriter::new(out, cfg)?;
    let mut result = SweepOutput::default();
    if cfg.sweep.is_none() && cfg.deviation.is_none() {
        return invalid("sweep needs a [sweep] or [deviation] section");
    }
    if let Some(s) = &cfg.sweep {
        let grid = percent_grid(s.start, s.stop, s.step)?;
        for &v in &cfg.approaches {
            let d = if s.tuned { tuned(cfg, v)?.0 } else { designed(cfg, v)? };
            let mut curves = Vec::new();
            for &p in &s.params {
                let c = robustness_sweep(&cfg.plant, &d.law, p, &grid, cfg.sample_period())?;
                w.write(&format!("{v}_{p}_sweep.csv"), &c.to_csv())?;
                curves.push(c);
            }
            result.robustness.push((v, curves));
        }
        let named: Vec<(String, Vec<RobustnessCurve>)> =
            result.robustness.iter().map(|(v, c)| (v.to_string(), c.clone())).collect();
        w.write("thresholds.csv", &thresholds_csv(&named))?;
    }
    if let Some(dc) = &cfg.deviation {
        let setup = Setup::from_config(cfg)?;
        let ss = setup.plant()?;
        let n = cfg.steps;
        let h = markov_parameters(&ss, n)?;
        let p = crate::lifted::toeplitz_matrix(&h);
        let pc = circulant_matrix(&h);
        let pec = extended_circulant(&ss, n, cfg.circulant.extension_factor)?;
        let omegas = dc.omegas();
        for &phase in &dc.phases {
            for (label, m) in [("p", p.data()), ("pc", pc.data()), ("pec", pec.data())] {
                let pts = freq_deviation_sweep(m, &ss, &omegas, phase, Some(n))?;
                let phase_name = match phase {
                    Phase::Sin => "sin",
                    Phase::Cos => "cos",
                };
                w.write(&format!("deviation_{label}_{phase_name}.csv"), &deviation_csv(label, phase, &pts))?;
                result.deviation.push((label.to_string(), phase, pts));
            }
        }
    }
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: &str = r#"
name = "small"
sample_rate = 50.0
steps = 11
approaches = ["fir_banded", "circulant"]

[tune]
target = 0.9
[tune.blocks]
fir_banded = [{ corner = "upper_left", rows = 2, cols = 2 }]
circulant = [{ corner = "upper_left", rows = 2, cols = 2 }]

[trajectory]
shape = "quintic"

[run]
iterations = 2
"#;

    #[test]
    fn artifacts_carry_config_header() {
        let dir = std::env::temp_dir().join(format!("freqilc-runner-{}", std::process::id()));
        let cfg = ExperimentConfig::from_toml_str(SMALL).unwrap();
        let reports = cmd_design(&cfg, &dir).unwrap();
        assert_eq!(reports.len(), 2);
        assert_eq!(reports[0].label, "I - P1*F1");
        let text = fs::read_to_string(dir.join("fir_banded_law.csv")).unwrap();
        assert!(text.starts_with("# name = \"small\"\n"));
        let law = crate::law::IlcLaw::from_csv(&text).unwrap();
        assert_eq!(law.matrix().shape(), (11, 10));
        let runs = cmd_simulate(&cfg, &dir).unwrap();
        assert_eq!(runs[1].1.iterations.len(), 3);
        fs::remove_dir_all(&dir).unwrap();
    }
}
