//! Hybrid-array pilot training: per-slot analog combiners and precoders, the
//! stacked measurement matrix `Φ`, and `ΦΨ` kept in factored form.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use std::f64::consts::TAU;

use crate::channel::{complex_gaussian, ChannelMatrix};
use crate::config::{SnrMode, SystemConfig, TrainingParams};
use crate::dictionary::{Block, Dictionary};
use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingConfig {
    pub tau: usize,
    /// `τ / (N_UE·N_BS)`.
    pub compression_ratio: f64,
    pub omp_iterations: usize,
    /// OMP stops once `‖r‖ ≤ residual_tol·‖y‖`.
    pub residual_tol: f64,
    pub rng_seed: u64,
    pub snr_mode: SnrMode,
    /// `τ·N_RF` samples collected at baseband.
    pub baseband_samples: usize,
}

impl TrainingConfig {
    pub fn new(config: &SystemConfig, tau: usize, omp_iterations: usize, rng_seed: u64, snr_mode: SnrMode) -> Result<Self> {
        if tau == 0 {
            return Err(Error::Argument("pilot length tau must be at least 1".into()));
        }
        Ok(Self {
            tau,
            compression_ratio: tau as f64 / (config.n_bs * config.n_ue) as f64,
            omp_iterations,
            residual_tol: 1e-6,
            rng_seed,
            snr_mode,
            baseband_samples: tau * config.n_rf_bs,
        })
    }

    /// `τ = ⌊μ·N_UE·N_BS⌉`, at least one.
    pub fn from_ratio(config: &SystemConfig, ratio: f64, omp_iterations: usize, rng_seed: u64, snr_mode: SnrMode) -> Result<Self> {
        if !(ratio > 0.0 && ratio.is_finite()) {
            return Err(Error::Argument(format!("compression ratio must be positive, got {ratio}")));
        }
        let tau = ((ratio * (config.n_bs * config.n_ue) as f64).round() as usize).max(1);
        Self::new(config, tau, omp_iterations, rng_seed, snr_mode)
    }

    pub fn from_params(config: &SystemConfig, params: &TrainingParams, rng_seed: u64) -> Result<Self> {
        let mut t = match (params.tau, params.compression_ratio) {
            (Some(tau), _) => Self::new(config, tau as usize, params.omp_iterations, rng_seed, params.snr_mode)?,
            (None, Some(mu)) => Self::from_ratio(config, mu, params.omp_iterations, rng_seed, params.snr_mode)?,
            (None, None) => Self::from_ratio(config, 0.3, params.omp_iterations, rng_seed, params.snr_mode)?,
        };
        t.residual_tol = params.residual_tol;
        Ok(t)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementModel {
    /// `τ·N_RF × N_BS·N_UE`; row block `t` is `f_tᵀ ⊗ W_t`.
    pub phi: DMatrix<Complex64>,
    /// `W_t`, `N_RF × N_BS`, entries `e^{jθ}/√N_BS`.
    pub combiners: Vec<DMatrix<Complex64>>,
    /// `f_t`, including `√P_pilot`.
    pub precoders: Vec<DVector<Complex64>>,
    pub noise_power_watts: f64,
}

impl MeasurementModel {
    pub fn rows(&self) -> usize {
        self.phi.nrows()
    }

    pub fn rf_chains(&self) -> usize {
        self.combiners.first().map_or(0, |w| w.nrows())
    }
}

fn random_phases<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize, scale: f64) -> DMatrix<Complex64> {
    DMatrix::from_fn(rows, cols, |_, _| Complex64::from_polar(scale, rng.random_range(0.0..TAU)))
}

/// Random-phase hybrid combiners (baseband stage is identity) and
/// random-phase unit-norm precoders scaled to the pilot power.
pub fn build_measurement(config: &SystemConfig, training: &TrainingConfig) -> Result<MeasurementModel> {
    config.validate()?;
    let mut rng = rng_from_seed(training.rng_seed);
    let (n_bs, n_ue, n_s) = (config.n_bs, config.n_ue, config.n_rf_bs);
    let amp = config.pilot_power_watts().sqrt() / (n_ue as f64).sqrt();
    let mut combiners = Vec::with_capacity(training.tau);
    let mut precoders = Vec::with_capacity(training.tau);
    let mut phi = DMatrix::zeros(training.tau * n_s, n_bs * n_ue);
    for t in 0..training.tau {
        let w = random_phases(&mut rng, n_s, n_bs, 1.0 / (n_bs as f64).sqrt());
        let f = DVector::from_fn(n_ue, |_, _| Complex64::from_polar(amp, rng.random_range(0.0..TAU)));
        for s in 0..n_s {
            for m in 0..n_ue {
                for n in 0..n_bs {
                    phi[(t * n_s + s, m * n_bs + n)] = f[m] * w[(s, n)];
                }
            }
        }
        combiners.push(w);
        precoders.push(f);
    }
    Ok(MeasurementModel {
        phi,
        combiners,
        precoders,
        noise_power_watts: config.noise_power_watts(),
    })
}

/// `y_t = W_t H f_t + W_t n_t`. Noise is drawn only when `rng` is given.
pub fn simulate_training<R: Rng + ?Sized>(
    channel: &ChannelMatrix,
    model: &MeasurementModel,
    rng: Option<&mut R>,
) -> Result<DVector<Complex64>> {
    let h = &channel.entries;
    let n_s = model.rf_chains();
    if let (Some(w), Some(f)) = (model.combiners.first(), model.precoders.first()) {
        if h.nrows() != w.ncols() || h.ncols() != f.len() {
            return Err(Error::Dimension {
                expected: w.ncols() * f.len(),
                got: h.len(),
                context: "channel vs measurement model",
            });
        }
    }
    let mut y = DVector::zeros(model.rows());
    let mut rng = rng;
    for (t, (w, f)) in model.combiners.iter().zip(&model.precoders).enumerate() {
        let mut rx = h * f;
        if let Some(r) = rng.as_deref_mut() {
            for v in rx.iter_mut() {
                *v += complex_gaussian(r, model.noise_power_watts);
            }
        }
        let slot = w * rx;
        y.rows_mut(t * n_s, n_s).copy_from(&slot);
    }
    Ok(y)
}

/// Anything OMP can search over: a matrix with columns it can correlate against.
pub trait SensingMatrix {
    fn nrows(&self) -> usize;
    fn ncols(&self) -> usize;
    fn column(&self, k: usize) -> DVector<Complex64>;
    /// `Aᴴ r`.
    fn correlate(&self, r: &DVector<Complex64>) -> Vec<Complex64>;
    fn column_norms(&self) -> Vec<f64>;
}

impl SensingMatrix for DMatrix<Complex64> {
    fn nrows(&self) -> usize {
        self.nrows()
    }
    fn ncols(&self) -> usize {
        self.ncols()
    }
    fn column(&self, k: usize) -> DVector<Complex64> {
        self.column(k).into_owned()
    }
    fn correlate(&self, r: &DVector<Complex64>) -> Vec<Complex64> {
        self.ad_mul(r).iter().copied().collect()
    }
    fn column_norms(&self) -> Vec<f64> {
        self.column_iter().map(|c| c.norm()).collect()
    }
}

#[derive(Debug, Clone)]
enum SensedBlock {
    /// Column `ku·K_bs + kb`, row `r`: `ue[r, ku]·bs[r, kb]`.
    Kron { ue: DMatrix<Complex64>, bs: DMatrix<Complex64> },
    /// Column `l`, row `r`: `ue[r, l]·bs[r, l]`.
    Paired { ue: DMatrix<Complex64>, bs: DMatrix<Complex64> },
    Dense(DMatrix<Complex64>),
}

impl SensedBlock {
    fn ncols(&self) -> usize {
        match self {
            Self::Kron { ue, bs } => ue.ncols() * bs.ncols(),
            Self::Paired { ue, .. } => ue.ncols(),
            Self::Dense(d) => d.ncols(),
        }
    }
}

/// `ΦΨ` with Kronecker-structured dictionary blocks kept factored.
#[derive(Debug, Clone)]
pub struct SensingOperator {
    rows: usize,
    blocks: Vec<SensedBlock>,
}

impl SensingOperator {
    pub fn new(model: &MeasurementModel, dict: &Dictionary) -> Result<Self> {
        if model.phi.ncols() != dict.nrows() {
            return Err(Error::Dimension {
                expected: model.phi.ncols(),
                got: dict.nrows(),
                context: "dictionary rows vs measurement columns",
            });
        }
        let n_s = model.rf_chains();
        let rows = model.rows();
        // Row r = t·N_RF + s sees precoder f_t and combiner row W_t[s, :].
        let ue_side = |ue: &DMatrix<Complex64>| {
            let mut out = DMatrix::zeros(rows, ue.ncols());
            for (t, f) in model.precoders.iter().enumerate() {
                let proj = ue.tr_mul(f);
                for s in 0..n_s {
                    out.row_mut(t * n_s + s).copy_from(&proj.transpose());
                }
            }
            out
        };
        let bs_side = |bs: &DMatrix<Complex64>| {
            let mut out = DMatrix::zeros(rows, bs.ncols());
            for (t, w) in model.combiners.iter().enumerate() {
                out.rows_mut(t * n_s, n_s).copy_from(&(w * bs));
            }
            out
        };
        let blocks = dict
            .blocks
            .iter()
            .map(|b| match b {
                Block::Kron { ue, bs } => SensedBlock::Kron { ue: ue_side(ue), bs: bs_side(bs) },
                Block::Paired { ue, bs } => SensedBlock::Paired { ue: ue_side(ue), bs: bs_side(bs) },
                Block::Dense(d) => SensedBlock::Dense(&model.phi * d),
            })
            .collect();
        Ok(Self { rows, blocks })
    }

    fn locate(&self, mut k: usize) -> (&SensedBlock, usize) {
        for b in &self.blocks {
            if k < b.ncols() {
                return (b, k);
            }
            k -= b.ncols();
        }
        panic!("column {k} out of range");
    }
}

impl SensingMatrix for SensingOperator {
    fn nrows(&self) -> usize {
        self.rows
    }

    fn ncols(&self) -> usize {
        self.blocks.iter().map(SensedBlock::ncols).sum()
    }

    fn column(&self, k: usize) -> DVector<Complex64> {
        match self.locate(k) {
            (SensedBlock::Kron { ue, bs }, local) => {
                let (ku, kb) = (local / bs.ncols(), local % bs.ncols());
                ue.column(ku).component_mul(&bs.column(kb))
            }
            (SensedBlock::Paired { ue, bs }, l) => ue.column(l).component_mul(&bs.column(l)),
            (SensedBlock::Dense(d), l) => d.column(l).into_owned(),
        }
    }

    fn correlate(&self, r: &DVector<Complex64>) -> Vec<Complex64> {
        let mut out = Vec::with_capacity(self.ncols());
        for b in &self.blocks {
            match b {
                SensedBlock::Kron { ue, bs } => {
                    // M = UEᴴ · diag(r) · conj(BS); entry (ku, kb).
                    let mut scaled = bs.map(|v| v.conj());
                    for (mut row, rv) in scaled.row_iter_mut().zip(r.iter()) {
                        row *= *rv;
                    }
                    let m = ue.ad_mul(&scaled);
                    for ku in 0..m.nrows() {
                        out.extend(m.row(ku).iter().copied());
                    }
                }
                SensedBlock::Paired { ue, bs } => {
                    for l in 0..ue.ncols() {
                        let mut acc = Complex64::default();
                        for i in 0..r.len() {
                            acc += (ue[(i, l)] * bs[(i, l)]).conj() * r[i];
                        }
                        out.push(acc);
                    }
                }
                SensedBlock::Dense(d) => out.extend(d.ad_mul(r).iter().copied()),
            }
        }
        out
    }

    fn column_norms(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.ncols());
        for b in &self.blocks {
            match b {
                SensedBlock::Kron { ue, bs } => {
                    let m = ue.map(|v| v.norm_sqr()).tr_mul(&bs.map(|v| v.norm_sqr()));
                    for ku in 0..m.nrows() {
                        out.extend(m.row(ku).iter().map(|v| v.sqrt()));
                    }
                }
                SensedBlock::Paired { ue, bs } => {
                    for l in 0..ue.ncols() {
                        out.push(ue.column(l).component_mul(&bs.column(l)).norm());
                    }
                }
                SensedBlock::Dense(d) => out.extend(d.column_iter().map(|c| c.norm())),
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{channel, sample_scene};
    use crate::dictionary::{dft_dictionary, eigen_dictionary, nlos_steering_dictionary, combined_dictionary};
    use crate::geometry::Region;
    use crate::rng::substream;

    fn cfg(n_bs: usize, n_ue: usize) -> SystemConfig {
        SystemConfig::new(28e9, n_bs, n_ue)
    }

    #[test]
    fn single_slot_single_chain() {
        let c = cfg(16, 2);
        let t = TrainingConfig::new(&c, 1, 5, 1, SnrMode::Noiseless).unwrap();
        let m = build_measurement(&c, &t).unwrap();
        assert_eq!(m.phi.nrows(), 1);
        let amp = 1.0 / 4.0;
        assert!(m.combiners[0].iter().all(|v| (v.norm() - amp).abs() < 1e-15));
        let p: f64 = m.precoders[0].norm_squared();
        assert!((p - c.pilot_power_watts()).abs() < 1e-12 * p);
    }

    #[test]
    fn phi_matches_slot_model() {
        let c = cfg(16, 4);
        let t = TrainingConfig::new(&c, 7, 5, 3, SnrMode::Noiseless).unwrap();
        let m = build_measurement(&c, &t).unwrap();
        let h = channel(&sample_scene(2, &Region::default(), 3, &c).unwrap(), &c).unwrap();
        let y = simulate_training::<crate::rng::SimRng>(&h, &m, None).unwrap();
        let direct = &m.phi * h.vectorize();
        assert!((y - &direct).norm() < 1e-12 * direct.norm());
    }

    #[test]
    fn ratio_rounding() {
        let c = cfg(256, 4);
        let t = TrainingConfig::from_ratio(&c, 0.3, 30, 0, SnrMode::Thermal).unwrap();
        assert_eq!(t.tau, 307);
        assert_eq!(t.baseband_samples, 307);
        assert!(TrainingConfig::new(&c, 0, 1, 0, SnrMode::Thermal).is_err());
    }

    #[test]
    fn noise_power_matches_trace() {
        // E‖W n‖² = σ² tr(W Wᴴ) = σ² τ N_RF (rows of W have unit norm).
        let c = cfg(8, 2);
        let t = TrainingConfig::new(&c, 4, 1, 5, SnrMode::Thermal).unwrap();
        let m = build_measurement(&c, &t).unwrap();
        let zero = ChannelMatrix::from_entries(DMatrix::zeros(8, 2));
        let mut rng = substream(11, 0);
        let trials = 1000;
        let mut acc = 0.0;
        for _ in 0..trials {
            acc += simulate_training(&zero, &m, Some(&mut rng)).unwrap().norm_squared();
        }
        let expect = m.noise_power_watts * 4.0;
        assert!((acc / trials as f64 / expect - 1.0).abs() < 0.05);
    }

    #[test]
    fn operator_matches_dense_product() {
        let c = cfg(16, 4);
        let t = TrainingConfig::new(&c, 9, 5, 3, SnrMode::Noiseless).unwrap();
        let m = build_measurement(&c, &t).unwrap();
        let ue = crate::geometry::Coord::new(0.5, 6.0);
        let (e, _) = eigen_dictionary(&c, &ue).unwrap();
        let g = nlos_steering_dictionary(&[crate::geometry::Coord::new(-1.0, 4.0)], &ue, &c).unwrap();
        for dict in [combined_dictionary(&e, Some(&g)).unwrap(), dft_dictionary(&c, 2).unwrap()] {
            let op = SensingOperator::new(&m, &dict).unwrap();
            let dense = &m.phi * dict.to_dense();
            assert_eq!(op.ncols(), dense.ncols());
            let mut rng = substream(4, 4);
            let r = DVector::from_fn(op.nrows(), |_, _| complex_gaussian(&mut rng, 1.0));
            let corr = op.correlate(&r);
            let expect = dense.ad_mul(&r);
            let scale = expect.norm();
            for (a, b) in corr.iter().zip(expect.iter()) {
                assert!((a - b).norm() < 1e-12 * scale);
            }
            for (k, n) in op.column_norms().iter().enumerate() {
                assert!((n - dense.column(k).norm()).abs() < 1e-12 * n.max(1e-30));
            }
            assert!((op.column(3) - dense.column(3)).norm() < 1e-12 * dense.column(3).norm());
        }
    }
}
