//! Sparsifying dictionaries for `vec(H)`.
//!
//! `vec` is column-major, so entry `m·N_BS + n` of a channel vector is
//! `H[n, m]` and a separable column is `ψ_UE ⊗ ψ_BS`. Dictionaries keep that
//! factorization in [`Block`]s instead of materializing `N_BS·N_UE × K`
//! matrices.

mod baselines;
mod eigen;
mod io;
mod nlos;

pub use baselines::{dft_codebook, dft_dictionary, polar_codebook, spherical_dictionary};
pub use eigen::{
    compensation_matrix, dpss, eigen_dictionary, eigen_dictionary_with, sinc_autocorrelation,
    spherical_compensation, Compensation, EigenFactors,
};
pub use io::{
    encode_binary, export_binary, export_csv, import_binary, import_csv, parse_binary, parse_csv, read_sidecar,
    write_sidecar, DictionaryHeader,
};
pub use nlos::{combined_dictionary, nlos_steering_dictionary};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Coord;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DictionaryKind {
    Eigen,
    Dft,
    Spherical,
    NlosSteering,
    Combined,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DictionaryMeta {
    /// Source coordinates the dictionary was built around.
    pub coordinates: Vec<Coord>,
    /// Normalized or physical frequency parameters (e.g. DPSS bandwidths).
    pub frequencies: Vec<f64>,
}

/// A group of consecutive dictionary columns.
#[derive(Debug, Clone, PartialEq)]
pub enum Block {
    /// All pairs: column `ku·K_bs + kb` is `ue[:, ku] ⊗ bs[:, kb]`.
    Kron { ue: DMatrix<Complex64>, bs: DMatrix<Complex64> },
    /// Column `l` is `ue[:, l] ⊗ bs[:, l]`.
    Paired { ue: DMatrix<Complex64>, bs: DMatrix<Complex64> },
    Dense(DMatrix<Complex64>),
}

impl Block {
    pub fn ncols(&self) -> usize {
        match self {
            Block::Kron { ue, bs } => ue.ncols() * bs.ncols(),
            Block::Paired { ue, .. } => ue.ncols(),
            Block::Dense(m) => m.ncols(),
        }
    }

    pub fn nrows(&self) -> usize {
        match self {
            Block::Kron { ue, bs } | Block::Paired { ue, bs } => ue.nrows() * bs.nrows(),
            Block::Dense(m) => m.nrows(),
        }
    }

    fn column(&self, k: usize) -> DVector<Complex64> {
        match self {
            Block::Kron { ue, bs } => {
                let kb = bs.ncols();
                kron_columns(&ue.column(k / kb).into_owned(), &bs.column(k % kb).into_owned())
            }
            Block::Paired { ue, bs } => kron_columns(&ue.column(k).into_owned(), &bs.column(k).into_owned()),
            Block::Dense(m) => m.column(k).into_owned(),
        }
    }

    /// `ψ_kᴴ h` for every column, with `h` reshaped to `N_BS × N_UE`.
    fn correlate(&self, h: &DMatrix<Complex64>, out: &mut Vec<Complex64>) {
        match self {
            Block::Kron { ue, bs } => {
                // C = BSᴴ H conj(UE); column index ku·K_bs + kb ↔ C[kb, ku].
                let c = bs.adjoint() * h * ue.map(|v| v.conj());
                out.extend(c.iter().copied());
            }
            Block::Paired { ue, bs } => {
                let t = bs.adjoint() * h;
                for l in 0..ue.ncols() {
                    let mut acc = Complex64::default();
                    for m in 0..ue.nrows() {
                        acc += t[(l, m)] * ue[(m, l)].conj();
                    }
                    out.push(acc);
                }
            }
            Block::Dense(d) => {
                let hv = DVector::from_column_slice(h.as_slice());
                out.extend((d.adjoint() * hv).iter().copied());
            }
        }
    }

    fn column_norms(&self, out: &mut Vec<f64>) {
        match self {
            Block::Kron { ue, bs } => {
                let nb: Vec<f64> = bs.column_iter().map(|c| c.norm()).collect();
                for u in ue.column_iter() {
                    let nu = u.norm();
                    out.extend(nb.iter().map(|b| nu * b));
                }
            }
            Block::Paired { ue, bs } => {
                out.extend(ue.column_iter().zip(bs.column_iter()).map(|(u, b)| u.norm() * b.norm()));
            }
            Block::Dense(d) => out.extend(d.column_iter().map(|c| c.norm())),
        }
    }
}

/// `a ⊗ b`.
pub fn kron_columns(a: &DVector<Complex64>, b: &DVector<Complex64>) -> DVector<Complex64> {
    crate::geometry::kron_vec(a, b)
}

/// Dense Kronecker product of two matrices.
pub fn kron_matrix(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    a.kronecker(b)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dictionary {
    pub kind: DictionaryKind,
    pub oversampling: Option<f64>,
    pub meta: DictionaryMeta,
    pub n_bs: usize,
    pub n_ue: usize,
    pub blocks: Vec<Block>,
}

impl Dictionary {
    pub fn new(
        kind: DictionaryKind,
        n_bs: usize,
        n_ue: usize,
        blocks: Vec<Block>,
        oversampling: Option<f64>,
        meta: DictionaryMeta,
    ) -> Result<Self> {
        for b in &blocks {
            if let Block::Kron { ue, bs } | Block::Paired { ue, bs } = b {
                if ue.nrows() != n_ue || bs.nrows() != n_bs {
                    return Err(Error::Dimension {
                        expected: n_bs * n_ue,
                        got: ue.nrows() * bs.nrows(),
                        context: "dictionary factor rows",
                    });
                }
                if matches!(b, Block::Paired { .. }) && ue.ncols() != bs.ncols() {
                    return Err(Error::Dimension {
                        expected: ue.ncols(),
                        got: bs.ncols(),
                        context: "paired factor columns",
                    });
                }
            }
            if b.nrows() != n_bs * n_ue {
                return Err(Error::Dimension {
                    expected: n_bs * n_ue,
                    got: b.nrows(),
                    context: "dictionary rows",
                });
            }
        }
        Ok(Self {
            kind,
            oversampling,
            meta,
            n_bs,
            n_ue,
            blocks,
        })
    }

    pub fn nrows(&self) -> usize {
        self.n_bs * self.n_ue
    }

    pub fn ncols(&self) -> usize {
        self.blocks.iter().map(Block::ncols).sum()
    }

    fn locate(&self, mut k: usize) -> Result<(&Block, usize)> {
        for b in &self.blocks {
            if k < b.ncols() {
                return Ok((b, k));
            }
            k -= b.ncols();
        }
        Err(Error::Argument(format!("column index out of range for {} columns", self.ncols())))
    }

    pub fn column(&self, k: usize) -> Result<DVector<Complex64>> {
        let (b, local) = self.locate(k)?;
        Ok(b.column(local))
    }

    /// The full `N_BS·N_UE × K` matrix. Avoid for large oversampled dictionaries.
    pub fn to_dense(&self) -> DMatrix<Complex64> {
        let mut out = DMatrix::zeros(self.nrows(), self.ncols());
        let mut offset = 0;
        for b in &self.blocks {
            match b {
                Block::Kron { ue, bs } => out.columns_mut(offset, b.ncols()).copy_from(&ue.kronecker(bs)),
                Block::Dense(d) => out.columns_mut(offset, b.ncols()).copy_from(d),
                Block::Paired { .. } => {
                    for k in 0..b.ncols() {
                        out.set_column(offset + k, &b.column(k));
                    }
                }
            }
            offset += b.ncols();
        }
        out
    }

    /// `Σ_k c_k ψ_k` for sparse coefficients.
    pub fn synthesize(&self, coefficients: &[(usize, Complex64)]) -> Result<DVector<Complex64>> {
        let mut h = DVector::zeros(self.nrows());
        for &(k, c) in coefficients {
            h.axpy(c, &self.column(k)?, Complex64::new(1.0, 0.0));
        }
        Ok(h)
    }

    /// `Ψᴴ h`.
    pub fn correlate(&self, h: &DVector<Complex64>) -> Result<Vec<Complex64>> {
        if h.len() != self.nrows() {
            return Err(Error::Dimension {
                expected: self.nrows(),
                got: h.len(),
                context: "vector vs dictionary rows",
            });
        }
        let hm = DMatrix::from_column_slice(self.n_bs, self.n_ue, h.as_slice());
        let mut out = Vec::with_capacity(self.ncols());
        for b in &self.blocks {
            b.correlate(&hm, &mut out);
        }
        Ok(out)
    }

    pub fn column_norms(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.ncols());
        for b in &self.blocks {
            b.column_norms(&mut out);
        }
        out
    }

    /// Indices of the `k` columns with the largest `|ψᴴh|/‖ψ‖`, best first.
    pub fn top_columns(&self, h: &DVector<Complex64>, k: usize) -> Result<Vec<usize>> {
        let corr = self.correlate(h)?;
        let norms = self.column_norms();
        let mut idx: Vec<(usize, f64)> = corr
            .iter()
            .zip(&norms)
            .enumerate()
            .map(|(i, (c, n))| (i, if *n > 0.0 { c.norm() / n } else { 0.0 }))
            .collect();
        idx.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        Ok(idx.into_iter().take(k).map(|(i, _)| i).collect())
    }

    /// Fraction of `‖h‖²` captured by projecting onto the top-`k` columns.
    pub fn top_k_energy(&self, h: &DVector<Complex64>, k: usize) -> Result<f64> {
        let total = h.norm_squared();
        if total == 0.0 {
            return Err(Error::Domain("energy fraction of a zero vector".into()));
        }
        let support = self.top_columns(h, k)?;
        let mut a = DMatrix::zeros(self.nrows(), support.len());
        for (j, &s) in support.iter().enumerate() {
            a.set_column(j, &self.column(s)?);
        }
        let proj = projection(&a, h);
        Ok(proj.norm_squared() / total)
    }
}

/// Orthogonal projection of `h` onto the column span of `a`.
pub(crate) fn projection(a: &DMatrix<Complex64>, h: &DVector<Complex64>) -> DVector<Complex64> {
    if a.ncols() == 0 {
        return DVector::zeros(h.len());
    }
    let svd = a.clone().svd(true, false);
    let u = svd.u.expect("requested U");
    let tol = svd.singular_values.max() * 1e-12 * a.nrows().max(a.ncols()) as f64;
    let mut out = DVector::zeros(h.len());
    for (j, s) in svd.singular_values.iter().enumerate() {
        if *s > tol {
            let uj = u.column(j);
            let c = uj.dotc(h);
            out.axpy(c, &uj.into_owned(), Complex64::new(1.0, 0.0));
        }
    }
    out
}
