//! Learning laws built from the FIR fit or the inverse circulant matrix, and
//! the error-iteration matrix `E = I - P_1 L_1` they induce.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{invalid, IlcError, Result};
use crate::io;
use crate::lifted::{delete_leading, LiftedMatrix, MatrixKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LawVariant {
    FirBanded,
    FirFull,
    Circulant,
    CirculantExtended,
}

impl LawVariant {
    pub const ALL: [LawVariant; 4] = [
        LawVariant::FirBanded,
        LawVariant::FirFull,
        LawVariant::Circulant,
        LawVariant::CirculantExtended,
    ];

    pub fn is_fir(self) -> bool {
        matches!(self, LawVariant::FirBanded | LawVariant::FirFull)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            LawVariant::FirBanded => "fir_banded",
            LawVariant::FirFull => "fir_full",
            LawVariant::Circulant => "circulant",
            LawVariant::CirculantExtended => "circulant_extended",
        }
    }
}

impl fmt::Display for LawVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LawVariant {
    type Err = IlcError;

    fn from_str(s: &str) -> Result<Self> {
        LawVariant::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| IlcError::Parse(format!("unknown law variant '{s}'")))
    }
}

/// Learning gain matrix `L` (`N` rows, `N - skip` columns) for the update
/// `u_{j+1} = u_j + L e_j`.
#[derive(Clone, Debug, PartialEq)]
pub struct IlcLaw {
    gain: LiftedMatrix,
    variant: LawVariant,
    skip_steps: usize,
    tuned: bool,
}

impl IlcLaw {
    pub fn new(gain: LiftedMatrix, variant: LawVariant, skip_steps: usize) -> Result<Self> {
        if gain.ncols() + skip_steps != gain.nrows() {
            return Err(IlcError::DimensionMismatch(format!(
                "learning matrix is {}x{} but skip = {skip_steps} requires {} columns",
                gain.nrows(),
                gain.ncols(),
                gain.nrows().saturating_sub(skip_steps)
            )));
        }
        Ok(Self { gain, variant, skip_steps, tuned: false })
    }

    pub fn gain(&self) -> &LiftedMatrix {
        &self.gain
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        self.gain.data()
    }

    pub fn variant(&self) -> LawVariant {
        self.variant
    }

    pub fn skip_steps(&self) -> usize {
        self.skip_steps
    }

    pub fn is_tuned(&self) -> bool {
        self.tuned
    }

    /// Trajectory length `N` (number of input samples).
    pub fn steps(&self) -> usize {
        self.gain.nrows()
    }

    pub fn sample_period(&self) -> f64 {
        self.gain.sample_period()
    }

    pub(crate) fn with_matrix(&self, data: DMatrix<f64>, tuned: bool) -> Self {
        Self {
            gain: self.gain.with_data(data),
            variant: self.variant,
            skip_steps: self.skip_steps,
            tuned: self.tuned || tuned,
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        io::write_comment_block(
            &mut out,
            &format!("variant = {}\nskip_steps = {}\ntuned = {}", self.variant, self.skip_steps, self.tuned),
        );
        out.push_str(&self.gain.to_csv());
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let get = |key: &str| {
            io::metadata(text, key).ok_or_else(|| IlcError::Parse(format!("missing '# {key} = ...' header")))
        };
        let variant: LawVariant = get("variant")?.parse()?;
        let skip: usize = get("skip_steps")?
            .parse()
            .map_err(|e| IlcError::Parse(format!("skip_steps: {e}")))?;
        let tuned: bool = get("tuned")?
            .parse()
            .map_err(|e| IlcError::Parse(format!("tuned: {e}")))?;
        let mut law = Self::new(LiftedMatrix::from_csv(text)?, variant, skip)?;
        law.tuned = tuned;
        Ok(law)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FirLayout {
    /// `n`-tap filter, corners truncated.
    Banded,
    /// `2N - 1` taps filling every entry.
    Full,
}

/// Deletes the first `skip` columns of an FIR learning matrix.
pub fn build_fir_law(f: &LiftedMatrix, layout: FirLayout, skip: usize) -> Result<IlcLaw> {
    if skip >= f.ncols() {
        return invalid(format!("skip = {skip} must be below N = {}", f.ncols()));
    }
    let variant = match layout {
        FirLayout::Banded => LawVariant::FirBanded,
        FirLayout::Full => LawVariant::FirFull,
    };
    IlcLaw::new(delete_leading(f, 0, skip)?, variant, skip)
}

/// Below this fraction of the largest DFT magnitude a circulant is treated as
/// singular.
const CIRCULANT_SINGULAR_RTOL: f64 = 1e-12;

/// DFT of the first column; these are the eigenvalues of a circulant matrix.
pub fn circulant_spectrum(first_column: &[f64]) -> Vec<Complex64> {
    let n = first_column.len();
    (0..n)
        .map(|q| {
            first_column
                .iter()
                .enumerate()
                .map(|(k, &h)| {
                    let ang = -2.0 * std::f64::consts::PI * ((q * k) % n) as f64 / n as f64;
                    Complex64::from_polar(h, ang)
                })
                .sum()
        })
        .collect()
}

fn invert_circulant(pc: &LiftedMatrix) -> Result<DMatrix<f64>> {
    if pc.nrows() != pc.ncols() {
        return Err(IlcError::DimensionMismatch("circulant matrix must be square".into()));
    }
    let col: Vec<f64> = pc.data().column(0).iter().copied().collect();
    let mags: Vec<f64> = circulant_spectrum(&col).iter().map(|z| z.norm()).collect();
    let max = mags.iter().copied().fold(0.0, f64::max);
    let bad: Vec<usize> = mags
        .iter()
        .enumerate()
        .filter(|(_, &m)| !(m > CIRCULANT_SINGULAR_RTOL * max))
        .map(|(q, _)| q)
        .collect();
    if !bad.is_empty() {
        return Err(IlcError::SingularCirculant { indices: bad });
    }
    pc.data()
        .clone()
        .lu()
        .try_inverse()
        .ok_or(IlcError::SingularMatrix)
}

/// Inverts `P_c` (or a full-size `P_ec`) and deletes the first `skip` columns.
pub fn build_circulant_law(pc: &LiftedMatrix, skip: usize) -> Result<IlcLaw> {
    let variant = match pc.kind() {
        MatrixKind::Circulant => LawVariant::Circulant,
        MatrixKind::ExtendedCirculant => LawVariant::CirculantExtended,
        other => return invalid(format!("expected a circulant matrix, got {other}")),
    };
    if skip >= pc.ncols() {
        return invalid(format!("skip = {skip} must be below N = {}", pc.ncols()));
    }
    let inv = LiftedMatrix::new(invert_circulant(pc)?, MatrixKind::Learning, pc.sample_period());
    IlcLaw::new(delete_leading(&inv, 0, skip)?, variant, skip)
}

/// Inverts the extended circulant `P_ec`, keeps the leading `steps x steps`
/// block of the inverse, then deletes the first `skip` columns.
pub fn build_extended_circulant_law(pec: &LiftedMatrix, steps: usize, skip: usize) -> Result<IlcLaw> {
    if pec.kind() != MatrixKind::ExtendedCirculant && pec.kind() != MatrixKind::Circulant {
        return invalid(format!("expected an extended circulant matrix, got {}", pec.kind()));
    }
    if steps == 0 || steps > pec.nrows() {
        return invalid(format!("block size {steps} must lie in 1..={}", pec.nrows()));
    }
    if skip >= steps {
        return invalid(format!("skip = {skip} must be below N = {steps}"));
    }
    let inv = invert_circulant(pec)?;
    let block = inv.view((0, 0), (steps, steps)).into_owned();
    let block = LiftedMatrix::new(block, MatrixKind::Learning, pec.sample_period());
    IlcLaw::new(delete_leading(&block, 0, skip)?, LawVariant::CirculantExtended, skip)
}

/// `E = I - P_1 L` with its singular values (descending) and spectral radius.
#[derive(Clone, Debug, PartialEq)]
pub struct IterationMatrix {
    pub matrix: DMatrix<f64>,
    pub sigma: Vec<f64>,
    pub rho: f64,
}

impl IterationMatrix {
    pub fn from_matrix(matrix: DMatrix<f64>) -> Self {
        let sigma = singular_values_desc(&matrix);
        let rho = spectral_radius(&matrix);
        Self { matrix, sigma, rho }
    }

    pub fn sigma_max(&self) -> f64 {
        self.sigma.first().copied().unwrap_or(0.0)
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }
}

pub fn singular_values_desc(m: &DMatrix<f64>) -> Vec<f64> {
    if m.is_empty() {
        return Vec::new();
    }
    let mut s: Vec<f64> = m.clone().singular_values().iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// `I - P_1 L` where `P_1` is `p` with the law's skipped leading rows removed.
pub fn iteration_error_matrix(p: &LiftedMatrix, law: &IlcLaw) -> Result<DMatrix<f64>> {
    let skip = law.skip_steps();
    if p.nrows() != p.ncols() || p.ncols() != law.steps() {
        return Err(IlcError::DimensionMismatch(format!(
            "P is {}x{} but the law expects N = {}",
            p.nrows(),
            p.ncols(),
            law.steps()
        )));
    }
    if skip >= p.nrows() {
        return invalid(format!(
            "skip = {skip} leaves an empty iteration matrix for N = {}",
            p.nrows()
        ));
    }
    let p1 = delete_leading(p, skip, 0)?;
    let dim = p1.nrows();
    Ok(DMatrix::identity(dim, dim) - p1.data() * law.matrix())
}

pub fn iteration_matrix(p: &LiftedMatrix, law: &IlcLaw) -> Result<IterationMatrix> {
    Ok(IterationMatrix::from_matrix(iteration_error_matrix(p, law)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fir::{fir_to_learning_matrix, FirFilter};
    use crate::lifted::{circulant_matrix, toeplitz_matrix};
    use crate::lti::MarkovSequence;

    fn seq(v: &[f64]) -> MarkovSequence {
        MarkovSequence::new(v.to_vec(), 0.01).unwrap()
    }

    #[test]
    fn fir_law_shapes() {
        let f = FirFilter::new((1..=11).map(|k| k as f64).collect(), 6, 0.01).unwrap();
        let fm = fir_to_learning_matrix(&f, 101);
        let l0 = build_fir_law(&fm, FirLayout::Banded, 0).unwrap();
        assert_eq!(l0.matrix(), fm.data());
        let l1 = build_fir_law(&fm, FirLayout::Banded, 1).unwrap();
        assert_eq!((l1.matrix().nrows(), l1.matrix().ncols()), (101, 100));
        let p = toeplitz_matrix(&seq(&vec![0.5; 101]));
        let e = iteration_error_matrix(&p, &l1).unwrap();
        assert_eq!(e.shape(), (100, 100));
        assert!(build_fir_law(&fm, FirLayout::Banded, 101).is_err());
    }

    #[test]
    fn pulse_circulant_law_is_identity() {
        let mut h = vec![0.0; 5];
        h[0] = 1.0;
        let law = build_circulant_law(&circulant_matrix(&seq(&h)), 1).unwrap();
        let want = DMatrix::<f64>::identity(5, 5).columns(1, 4).into_owned();
        assert_eq!(law.matrix(), &want);
        assert_eq!(law.variant(), LawVariant::Circulant);
    }

    #[test]
    fn singular_circulant_reports_indices() {
        // A constant column only has DC content.
        let err = build_circulant_law(&circulant_matrix(&seq(&[1.0, 1.0, 1.0, 1.0])), 0).unwrap_err();
        match err {
            IlcError::SingularCirculant { indices } => assert_eq!(indices, vec![1, 2, 3]),
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn exact_inverse_gives_zero_iteration_matrix() {
        let p = toeplitz_matrix(&seq(&[2.0, 0.3, -0.1, 0.05]));
        let inv = p.data().clone().try_inverse().unwrap();
        let law = IlcLaw::new(LiftedMatrix::new(inv, MatrixKind::Learning, 0.01), LawVariant::FirFull, 0).unwrap();
        let e = iteration_matrix(&p, &law).unwrap();
        assert!(e.sigma.iter().all(|&s| s < 1e-14));
        assert!(e.rho < 1e-14);
    }

    #[test]
    fn rho_bounded_by_sigma_max() {
        let m = DMatrix::from_row_slice(3, 3, &[0.2, 1.5, 0.0, -0.3, 0.1, 0.7, 0.0, 0.4, -0.9]);
        let it = IterationMatrix::from_matrix(m);
        assert!(it.rho <= it.sigma_max() + 1e-12);
        assert!(it.sigma.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn law_csv_round_trip() {
        let law = build_circulant_law(&circulant_matrix(&seq(&[1.0, 0.4, 0.1])), 1).unwrap();
        let back = IlcLaw::from_csv(&law.to_csv()).unwrap();
        assert_eq!(back, law);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let law = build_circulant_law(&circulant_matrix(&seq(&[1.0, 0.4, 0.1])), 1).unwrap();
        let p = toeplitz_matrix(&seq(&[1.0, 0.4, 0.1, 0.0]));
        assert!(matches!(iteration_matrix(&p, &law), Err(IlcError::DimensionMismatch(_))));
    }
}
