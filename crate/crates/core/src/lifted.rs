//! Lifted (whole-trajectory) matrices: the lower-triangular Toeplitz matrix of
//! Markov parameters, the observability stack, the circulant and extended
//! circulant matrices, and leading row/column deletion.
//!
//! Documentation uses 1-based time indices; storage is 0-based.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;

use crate::error::{invalid, IlcError, Result};
use crate::io;
use crate::lti::{markov_parameters, DiscreteStateSpace, MarkovSequence};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MatrixKind {
    Toeplitz,
    Circulant,
    ExtendedCirculant,
    Learning,
    Iteration,
}

impl fmt::Display for MatrixKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MatrixKind::Toeplitz => "toeplitz",
            MatrixKind::Circulant => "circulant",
            MatrixKind::ExtendedCirculant => "extended_circulant",
            MatrixKind::Learning => "learning",
            MatrixKind::Iteration => "iteration",
        })
    }
}

impl FromStr for MatrixKind {
    type Err = IlcError;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "toeplitz" => MatrixKind::Toeplitz,
            "circulant" => MatrixKind::Circulant,
            "extended_circulant" => MatrixKind::ExtendedCirculant,
            "learning" => MatrixKind::Learning,
            "iteration" => MatrixKind::Iteration,
            other => return Err(IlcError::Parse(format!("unknown matrix kind '{other}'"))),
        })
    }
}

/// Dense lifted matrix tagged with its structure and deletion history.
#[derive(Clone, Debug, PartialEq)]
pub struct LiftedMatrix {
    data: DMatrix<f64>,
    kind: MatrixKind,
    rows_deleted: usize,
    cols_deleted: usize,
    sample_period: f64,
}

impl LiftedMatrix {
    pub fn new(data: DMatrix<f64>, kind: MatrixKind, sample_period: f64) -> Self {
        Self { data, kind, rows_deleted: 0, cols_deleted: 0, sample_period }
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn into_data(self) -> DMatrix<f64> {
        self.data
    }

    pub fn kind(&self) -> MatrixKind {
        self.kind
    }

    pub fn nrows(&self) -> usize {
        self.data.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.data.ncols()
    }

    pub fn rows_deleted(&self) -> usize {
        self.rows_deleted
    }

    pub fn cols_deleted(&self) -> usize {
        self.cols_deleted
    }

    pub fn sample_period(&self) -> f64 {
        self.sample_period
    }

    pub(crate) fn with_data(&self, data: DMatrix<f64>) -> Self {
        Self { data, ..self.clone() }
    }

    /// Row-major CSV with `# key = value` metadata lines.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        io::write_comment_block(
            &mut out,
            &format!(
                "kind = {}\nrows_deleted = {}\ncols_deleted = {}\nsample_period = {}",
                self.kind,
                self.rows_deleted,
                self.cols_deleted,
                io::fmt_g17(self.sample_period)
            ),
        );
        out.push_str(&io::matrix_to_csv(&self.data));
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let meta = |key: &str| {
            io::metadata(text, key)
                .ok_or_else(|| IlcError::Parse(format!("missing '# {key} = ...' header")))
        };
        let parse_usize = |key: &str| -> Result<usize> {
            meta(key)?.parse().map_err(|e| IlcError::Parse(format!("{key}: {e}")))
        };
        let kind: MatrixKind = meta("kind")?.parse()?;
        let sample_period: f64 = meta("sample_period")?
            .parse()
            .map_err(|e| IlcError::Parse(format!("sample_period: {e}")))?;
        Ok(Self {
            data: io::matrix_from_csv(text)?,
            kind,
            rows_deleted: parse_usize("rows_deleted")?,
            cols_deleted: parse_usize("cols_deleted")?,
            sample_period,
        })
    }
}

/// Stack of `C A^k`, `k = 1..N`, one row per time step.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservabilityVector {
    rows: DMatrix<f64>,
}

impl ObservabilityVector {
    pub fn rows(&self) -> &DMatrix<f64> {
        &self.rows
    }
}

/// `P[i][j] = h(i - j + 1)` for `i >= j`, zero above the diagonal.
pub fn toeplitz_matrix(h: &MarkovSequence) -> LiftedMatrix {
    let v = h.values();
    let n = v.len();
    let data = DMatrix::from_fn(n, n, |i, j| if i >= j { v[i - j] } else { 0.0 });
    LiftedMatrix::new(data, MatrixKind::Toeplitz, h.sample_period())
}

pub fn observability_vector(ss: &DiscreteStateSpace, steps: usize) -> Result<ObservabilityVector> {
    if steps == 0 {
        return invalid("observability stack needs at least one row");
    }
    let n = ss.order();
    let mut rows = DMatrix::zeros(steps, n);
    let mut row = ss.c() * ss.a();
    for k in 0..steps {
        rows.row_mut(k).copy_from(&row);
        row = &row * ss.a();
    }
    Ok(ObservabilityVector { rows })
}

/// Column `j` is `h` rotated down by `j`: `P_c[i][j] = h(((i - j) mod N) + 1)`.
pub fn circulant_matrix(h: &MarkovSequence) -> LiftedMatrix {
    LiftedMatrix::new(circulant_data(h.values()), MatrixKind::Circulant, h.sample_period())
}

fn circulant_data(v: &[f64]) -> DMatrix<f64> {
    let n = v.len();
    DMatrix::from_fn(n, n, |i, j| v[(i + n - j) % n])
}

/// Circulant matrix of the first `steps * factor` Markov parameters.
pub fn extended_circulant(ss: &DiscreteStateSpace, steps: usize, factor: usize) -> Result<LiftedMatrix> {
    if factor == 0 {
        return invalid("extension factor must be at least 1");
    }
    let h = markov_parameters(ss, steps * factor)?;
    Ok(LiftedMatrix::new(
        circulant_data(h.values()),
        MatrixKind::ExtendedCirculant,
        ss.sample_period(),
    ))
}

/// Removes the first `rows` rows and first `cols` columns.
pub fn delete_leading(m: &LiftedMatrix, rows: usize, cols: usize) -> Result<LiftedMatrix> {
    if rows >= m.nrows() || cols >= m.ncols() {
        return invalid(format!(
            "cannot delete {rows} rows and {cols} columns from a {}x{} matrix",
            m.nrows(),
            m.ncols()
        ));
    }
    let data = m
        .data
        .view((rows, cols), (m.nrows() - rows, m.ncols() - cols))
        .into_owned();
    Ok(LiftedMatrix {
        data,
        kind: m.kind,
        rows_deleted: m.rows_deleted + rows,
        cols_deleted: m.cols_deleted + cols,
        sample_period: m.sample_period,
    })
}
