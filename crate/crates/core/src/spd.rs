use crate::error::{Error, Result};
use nalgebra::DMatrix;
use serde::{Serialize, Serializer};

/// Symmetric positive-definite matrix with its lower Cholesky factor.
#[derive(Debug, Clone)]
pub struct SpdMatrix {
    entries: DMatrix<f64>,
    chol: DMatrix<f64>,
}

impl SpdMatrix {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if !m.is_square() || m.nrows() == 0 {
            return Err(Error::NotSpd(format!("shape {}x{}", m.nrows(), m.ncols())));
        }
        let scale = m.amax().max(1.0);
        let asym = (&m - m.transpose()).amax();
        if asym > 1e-12 * scale {
            return Err(Error::NotSpd(format!("asymmetry {asym:.3e}")));
        }
        let sym = (&m + m.transpose()) * 0.5;
        Self::from_symmetric(sym)
    }

    fn from_symmetric(sym: DMatrix<f64>) -> Result<Self> {
        let chol = sym.clone().cholesky().ok_or_else(|| Error::NotSpd("Cholesky pivot not positive".into()))?;
        let l = chol.l();
        if l.diagonal().iter().any(|&x| !(x > 0.0) || !x.is_finite()) {
            return Err(Error::NotSpd("Cholesky pivot not positive".into()));
        }
        Ok(SpdMatrix { entries: sym, chol: l })
    }

    /// Builds `L L^T` from a lower-triangular factor with positive diagonal.
    pub fn from_factor(l: DMatrix<f64>) -> Result<Self> {
        let m = &l * l.transpose();
        Self::from_symmetric((&m + m.transpose()) * 0.5)
    }

    pub fn identity(n: usize) -> Self {
        SpdMatrix { entries: DMatrix::identity(n, n), chol: DMatrix::identity(n, n) }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn factor(&self) -> &DMatrix<f64> {
        &self.chol
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn log_det(&self) -> f64 {
        2.0 * self.chol.diagonal().iter().map(|x| x.ln()).sum::<f64>()
    }

    pub fn det(&self) -> f64 {
        self.log_det().exp()
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        let n = self.dim();
        let linv = self.chol.clone().solve_lower_triangular(&DMatrix::identity(n, n)).expect("nonsingular factor");
        let inv = linv.transpose() * linv;
        (&inv + inv.transpose()) * 0.5
    }
}

impl Serialize for SpdMatrix {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let rows: Vec<Vec<f64>> = (0..self.dim()).map(|r| self.entries.row(r).iter().copied().collect()).collect();
        rows.serialize(s)
    }
}
