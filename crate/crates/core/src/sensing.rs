//! Power-sensor sensing slot: object wave, reference interference and the
//! hologram recovered from the measured power pattern.

use std::f64::consts::TAU;

use nalgebra::DVector;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::channel::Scene;
use crate::config::SystemConfig;
use crate::error::{Error, Result};
use crate::geometry::spatial_response;

/// Local-oscillator reference `A·e^{jξ_n}` injected at every BS element.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceWave {
    pub amplitude: f64,
    pub phases: Vec<f64>,
    pub values: DVector<Complex64>,
}

impl ReferenceWave {
    pub fn from_phases(amplitude: f64, phases: Vec<f64>) -> Self {
        let values = DVector::from_iterator(
            phases.len(),
            phases.iter().map(|&p| Complex64::from_polar(amplitude, p)),
        );
        Self {
            amplitude,
            phases,
            values,
        }
    }

    /// Phases i.i.d. uniform on `[0, 2π)`.
    pub fn random<R: Rng + ?Sized>(amplitude: f64, n: usize, rng: &mut R) -> Self {
        let phases = (0..n).map(|_| rng.random_range(0.0..TAU)).collect();
        Self::from_phases(amplitude, phases)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Margin between the reference amplitude and the largest expected object wave.
pub const REFERENCE_MARGIN: f64 = 1e3;

/// Reference amplitude `A` at [`REFERENCE_MARGIN`] times an upper estimate of
/// `|e_obj|` for sources no closer than `y_low`.
pub fn default_reference_amplitude(config: &SystemConfig, y_low: f64) -> f64 {
    // LoS term ≤ √N_UE / y_low; doubled to leave room for the scattered paths.
    REFERENCE_MARGIN * 2.0 * (config.n_ue as f64).sqrt() / y_low
}

/// The sensing-stage state: measured powers and the working hologram.
#[derive(Debug, Clone, PartialEq)]
pub struct SensingRecord {
    pub power: Vec<f64>,
    /// Current real hologram iterate.
    pub hologram: DVector<f64>,
    /// `hologram ⊙ e_ref`.
    pub coherent_hologram: DVector<Complex64>,
    pub sensing_noise_power: f64,
}

impl SensingRecord {
    /// Replaces the hologram and refreshes the coherent copy.
    pub fn with_hologram(&self, hologram: DVector<f64>, reference: &ReferenceWave) -> Result<Self> {
        check_len(reference.len(), hologram.len(), "hologram vs reference")?;
        let coherent_hologram = coherent(&hologram, reference);
        Ok(Self {
            power: self.power.clone(),
            hologram,
            coherent_hologram,
            sensing_noise_power: self.sensing_noise_power,
        })
    }

    pub fn len(&self) -> usize {
        self.hologram.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hologram.is_empty()
    }
}

fn check_len(expected: usize, got: usize, context: &'static str) -> Result<()> {
    if expected != got {
        return Err(Error::Dimension {
            expected,
            got,
            context,
        });
    }
    Ok(())
}

fn coherent(hologram: &DVector<f64>, reference: &ReferenceWave) -> DVector<Complex64> {
    hologram.zip_map(&reference.values, |h, r| r * h)
}

/// Object wave received at every BS element during the sensing slot.
///
/// `sensing_signal` defaults to the all-ones vector.
pub fn object_wave(
    scene: &Scene,
    config: &SystemConfig,
    sensing_signal: Option<&DVector<Complex64>>,
) -> Result<DVector<Complex64>> {
    let n_ue = scene.ue_elements.len();
    let ones;
    let s = match sensing_signal {
        Some(s) => {
            check_len(n_ue, s.len(), "sensing signal vs UE elements")?;
            s
        }
        None => {
            ones = DVector::from_element(n_ue, Complex64::new(1.0, 0.0));
            &ones
        }
    };
    let k = config.wavenumber;
    let los_scale = 1.0 / (n_ue as f64).sqrt();

    // Effective scatterer gains α_ℓ Σ_m g(r_S, r_UE^m) s[m].
    let mut effective = Vec::with_capacity(scene.scatterers.len());
    for (sc, alpha) in scene.scatterers.iter().zip(&scene.gains) {
        let mut acc = Complex64::default();
        for (ue, sm) in scene.ue_elements.iter().zip(s.iter()) {
            acc += spatial_response(sc, ue, k)? * sm;
        }
        effective.push(alpha * acc);
    }

    let mut out = DVector::zeros(scene.bs_elements.len());
    for (slot, bs) in out.iter_mut().zip(&scene.bs_elements) {
        let mut acc = Complex64::default();
        for (ue, sm) in scene.ue_elements.iter().zip(s.iter()) {
            acc += spatial_response(ue, bs, k)? * sm;
        }
        acc *= los_scale;
        for (sc, eff) in scene.scatterers.iter().zip(&effective) {
            acc += spatial_response(sc, bs, k)? * eff;
        }
        *slot = acc;
    }
    Ok(out)
}

/// Noiseless power pattern `|e_ref + e_obj|²`.
pub fn measure_power(reference: &ReferenceWave, obj: &DVector<Complex64>) -> Result<Vec<f64>> {
    check_len(reference.len(), obj.len(), "object wave vs reference")?;
    Ok(reference
        .values
        .iter()
        .zip(obj.iter())
        .map(|(r, o)| (r + o).norm_sqr())
        .collect())
}

/// Power pattern with additive Gaussian sensor noise of standard deviation
/// `noise_std`, clipped at zero.
pub fn measure_power_noisy<R: Rng + ?Sized>(
    reference: &ReferenceWave,
    obj: &DVector<Complex64>,
    noise_std: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let mut p = measure_power(reference, obj)?;
    if noise_std > 0.0 {
        let normal = Normal::new(0.0, noise_std)
            .map_err(|e| Error::Argument(format!("power noise: {e}")))?;
        for v in p.iter_mut() {
            *v = (*v + normal.sample(rng)).max(0.0);
        }
    }
    Ok(p)
}

/// Hologram `p − A²` and its coherent version `(p − A²)·e_ref`.
pub fn build_hologram(power: &[f64], reference: &ReferenceWave) -> Result<SensingRecord> {
    check_len(reference.len(), power.len(), "power vs reference")?;
    let a2 = reference.amplitude * reference.amplitude;
    let hologram = DVector::from_iterator(power.len(), power.iter().map(|p| p - a2));
    let coherent_hologram = coherent(&hologram, reference);
    Ok(SensingRecord {
        power: power.to_vec(),
        hologram,
        coherent_hologram,
        sensing_noise_power: 0.0,
    })
}
