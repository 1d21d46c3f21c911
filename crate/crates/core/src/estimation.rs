//! Sparse channel recovery: OMP on `ΦΨ`, then `Ĥ = unvec(Ψ ĉ)`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::channel::ChannelMatrix;
use crate::dictionary::Dictionary;
use crate::error::{Error, Result};
use crate::metrics::nmse_db;
use crate::omp::{omp, OmpOptions};
use crate::training::{MeasurementModel, SensingOperator, TrainingConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct EstimationResult {
    /// Nonzero coefficients `(column, value)` in selection order.
    pub coefficients: Vec<(usize, Complex64)>,
    pub support: Vec<usize>,
    pub channel_estimate: ChannelMatrix,
    /// Present when the true channel was supplied.
    pub nmse_db: Option<f64>,
    pub residual_history: Vec<f64>,
    pub rank_deficient: bool,
    /// NMSE after each OMP iteration, when requested with a truth.
    pub nmse_by_iteration: Vec<f64>,
}

fn unvec(dict: &Dictionary, h: &DVector<Complex64>) -> DMatrix<Complex64> {
    DMatrix::from_column_slice(dict.n_bs, dict.n_ue, h.as_slice())
}

/// Runs OMP against an already-built `ΦΨ`.
pub fn estimate_with_operator(
    y: &DVector<Complex64>,
    operator: &SensingOperator,
    dictionary: &Dictionary,
    opts: OmpOptions,
    truth: Option<&ChannelMatrix>,
) -> Result<EstimationResult> {
    let run = omp(y, operator, opts);
    let coefficients: Vec<(usize, Complex64)> = run.support.iter().copied().zip(run.coefficients.iter().copied()).collect();
    let entries = unvec(dictionary, &dictionary.synthesize(&coefficients)?);
    let nmse = truth.map(|t| nmse_db(&entries, &t.entries)).transpose()?;
    let mut by_iter = Vec::new();
    if let Some(t) = truth {
        for (i, snap) in run.snapshots.iter().enumerate() {
            let c: Vec<(usize, Complex64)> = run.support[..=i].iter().copied().zip(snap.iter().copied()).collect();
            by_iter.push(nmse_db(&unvec(dictionary, &dictionary.synthesize(&c)?), &t.entries)?);
        }
    }
    Ok(EstimationResult {
        coefficients,
        support: run.support,
        channel_estimate: ChannelMatrix::from_entries(entries),
        nmse_db: nmse,
        residual_history: run.residual_history,
        rank_deficient: run.rank_deficient,
        nmse_by_iteration: by_iter,
    })
}

pub fn estimate_channel(
    y: &DVector<Complex64>,
    model: &MeasurementModel,
    dictionary: &Dictionary,
    training: &TrainingConfig,
    truth: Option<&ChannelMatrix>,
) -> Result<EstimationResult> {
    if y.len() != model.rows() {
        return Err(Error::Dimension {
            expected: model.rows(),
            got: y.len(),
            context: "measurement vs model rows",
        });
    }
    let op = SensingOperator::new(model, dictionary)?;
    estimate_with_operator(y, &op, dictionary, OmpOptions::new(training.omp_iterations, training.residual_tol), truth)
}
