//! Near-field multipath channel synthesis.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::config::SystemConfig;
use crate::error::{Error, Result};
use crate::geometry::{steering_vector, ula_positions, ula_positions_at, Coord, Region};
use crate::rng::rng_from_seed;

/// Ground truth for one trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub ue_elements: Vec<Coord>,
    pub ue_centroid: Coord,
    pub bs_elements: Vec<Coord>,
    pub scatterers: Vec<Coord>,
    pub gains: Vec<Complex64>,
    pub region: Region,
}

impl Scene {
    /// Builds a scene with arrays laid out from `config`: the BS centered at the
    /// origin and the UE parallel to the x-axis around `ue_centroid`.
    pub fn new(
        config: &SystemConfig,
        region: Region,
        ue_centroid: Coord,
        scatterers: Vec<Coord>,
        gains: Vec<Complex64>,
    ) -> Result<Self> {
        let scene = Self {
            ue_elements: ula_positions_at(config.n_ue, config.antenna_spacing_m, ue_centroid),
            ue_centroid,
            bs_elements: ula_positions(config.n_bs, config.antenna_spacing_m),
            scatterers,
            gains,
            region,
        };
        scene.validate()?;
        Ok(scene)
    }

    pub fn validate(&self) -> Result<()> {
        if self.gains.len() != self.scatterers.len() {
            return Err(Error::Dimension {
                expected: self.scatterers.len(),
                got: self.gains.len(),
                context: "scene gains vs scatterers",
            });
        }
        if self.bs_elements.iter().any(|e| e.y_m != 0.0) {
            return Err(Error::Argument("BS elements must lie on y = 0".into()));
        }
        if !self.region.contains(&self.ue_centroid) {
            return Err(Error::Argument(format!(
                "UE centroid {:?} outside region",
                self.ue_centroid
            )));
        }
        if let Some(s) = self.scatterers.iter().find(|s| !self.region.contains(s)) {
            return Err(Error::Argument(format!("scatterer {s:?} outside region")));
        }
        if self.gains.iter().any(|g| !(g.re.is_finite() && g.im.is_finite())) {
            return Err(Error::Argument("path gains must be finite".into()));
        }
        Ok(())
    }

    pub fn path_count(&self) -> usize {
        self.scatterers.len()
    }

    /// Source locations in sensing order: UE centroid first, then scatterers.
    pub fn sources(&self) -> Vec<Coord> {
        std::iter::once(self.ue_centroid)
            .chain(self.scatterers.iter().copied())
            .collect()
    }
}

/// `N_BS × N_UE` uplink channel, optionally with its LoS/NLoS parts.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelMatrix {
    pub entries: DMatrix<Complex64>,
    pub parts: Option<(DMatrix<Complex64>, DMatrix<Complex64>)>,
}

impl ChannelMatrix {
    pub fn from_entries(entries: DMatrix<Complex64>) -> Self {
        Self {
            entries,
            parts: None,
        }
    }

    /// Column-major vectorization (UE index outer, BS index inner).
    pub fn vectorize(&self) -> nalgebra::DVector<Complex64> {
        nalgebra::DVector::from_column_slice(self.entries.as_slice())
    }

    pub fn frobenius_norm_sq(&self) -> f64 {
        self.entries.iter().map(|v| v.norm_sqr()).sum()
    }
}

/// Column `m` is the BS steering vector toward UE element `m`.
pub fn los_channel(scene: &Scene, config: &SystemConfig) -> Result<DMatrix<Complex64>> {
    let mut h = DMatrix::zeros(scene.bs_elements.len(), scene.ue_elements.len());
    for (m, ue) in scene.ue_elements.iter().enumerate() {
        let col = steering_vector(ue, &scene.bs_elements, config.wavenumber)?;
        h.set_column(m, &col);
    }
    Ok(h)
}

/// `Σ_ℓ α_ℓ g_BS(r_ℓ) g_UE(r_ℓ)ᵀ`.
pub fn nlos_channel(scene: &Scene, config: &SystemConfig) -> Result<DMatrix<Complex64>> {
    let mut h = DMatrix::zeros(scene.bs_elements.len(), scene.ue_elements.len());
    for (s, alpha) in scene.scatterers.iter().zip(&scene.gains) {
        let g_bs = steering_vector(s, &scene.bs_elements, config.wavenumber)?;
        let g_ue = steering_vector(s, &scene.ue_elements, config.wavenumber)?;
        h += (g_bs * g_ue.transpose()) * *alpha;
    }
    Ok(h)
}

/// Full channel `H = H_LoS + H_NLoS`, keeping both parts.
pub fn channel(scene: &Scene, config: &SystemConfig) -> Result<ChannelMatrix> {
    let los = los_channel(scene, config)?;
    let nlos = nlos_channel(scene, config)?;
    Ok(ChannelMatrix {
        entries: &los + &nlos,
        parts: Some((los, nlos)),
    })
}

pub fn uniform_in_region<R: Rng + ?Sized>(rng: &mut R, region: &Region) -> Coord {
    Coord::new(
        rng.random_range(region.x_low..=region.x_high),
        rng.random_range(region.y_low..=region.y_high),
    )
}

/// `CN(0, variance)` draw.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> Complex64 {
    let normal = Normal::new(0.0, (variance / 2.0).sqrt()).expect("finite variance");
    Complex64::new(normal.sample(rng), normal.sample(rng))
}

/// Random scene: UE centroid and `paths` scatterers uniform in `region`,
/// gains `CN(0, 1/paths)`.
pub fn sample_scene(seed: u64, region: &Region, paths: usize, config: &SystemConfig) -> Result<Scene> {
    region.validate()?;
    let mut rng = rng_from_seed(seed);
    let ue = uniform_in_region(&mut rng, region);
    let scatterers: Vec<Coord> = (0..paths).map(|_| uniform_in_region(&mut rng, region)).collect();
    let gains = (0..paths)
        .map(|_| complex_gaussian(&mut rng, 1.0 / paths as f64))
        .collect();
    Scene::new(config, *region, ue, scatterers, gains)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;

    fn cfg() -> SystemConfig {
        SystemConfig::new(28e9, 32, 4)
    }

    #[test]
    fn additivity_and_los_magnitudes() {
        let c = cfg();
        let scene = sample_scene(11, &Region::default(), 5, &c).unwrap();
        let h = channel(&scene, &c).unwrap();
        let (los, nlos) = h.parts.clone().unwrap();
        assert_eq!(h.entries, &los + &nlos);
        for (m, ue) in scene.ue_elements.iter().enumerate() {
            for (n, bs) in scene.bs_elements.iter().enumerate() {
                let d = ue.distance(bs);
                assert!((los[(n, m)].norm() * d - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn single_ue_element_is_steering_vector() {
        let c = SystemConfig::new(28e9, 16, 1);
        let scene = Scene::new(&c, Region::default(), Coord::new(1.0, 4.0), vec![], vec![]).unwrap();
        let h = los_channel(&scene, &c).unwrap();
        let g = steering_vector(&scene.ue_centroid, &scene.bs_elements, c.wavenumber).unwrap();
        assert_eq!(h.column(0).clone_owned(), g);
    }

    #[test]
    fn doubling_distances_halves_magnitudes() {
        // Scale every coordinate, including the arrays, by two.
        let c = cfg();
        let scene = sample_scene(5, &Region::default(), 0, &c).unwrap();
        let h = los_channel(&scene, &c).unwrap();
        let mut scaled = scene.clone();
        for p in scaled.ue_elements.iter_mut().chain(scaled.bs_elements.iter_mut()) {
            p.x_m *= 2.0;
            p.y_m *= 2.0;
        }
        let h2 = los_channel(&scaled, &c).unwrap();
        for (a, b) in h.iter().zip(h2.iter()) {
            assert!((b.norm() - 0.5 * a.norm()).abs() < 1e-14);
        }
    }

    #[test]
    fn nlos_edge_cases() {
        let c = cfg();
        let empty = sample_scene(1, &Region::default(), 0, &c).unwrap();
        assert!(empty.scatterers.is_empty());
        assert!(nlos_channel(&empty, &c).unwrap().iter().all(|v| *v == Complex64::default()));

        let one = sample_scene(2, &Region::default(), 1, &c).unwrap();
        let h = nlos_channel(&one, &c).unwrap();
        let sv = h.map(|v| v).svd(false, false).singular_values;
        assert!(sv[1] < 1e-12 * sv[0], "rank-1 expected, got {sv:?}");
    }

    #[test]
    fn seeded_scene_is_deterministic() {
        let c = cfg();
        let a = sample_scene(99, &Region::default(), 5, &c).unwrap();
        let b = sample_scene(99, &Region::default(), 5, &c).unwrap();
        assert_eq!(a, b);
        let other = sample_scene(100, &Region::default(), 5, &c).unwrap();
        assert_ne!(a, other);
    }

    #[test]
    fn nlos_energy_matches_monte_carlo_of_closed_form() {
        // E‖H_NLoS‖² = Σ_ℓ (1/L) ‖g_BS(r_ℓ)‖² ‖g_UE(r_ℓ)‖² for independent CN gains.
        let c = SystemConfig::new(28e9, 8, 2);
        let base = sample_scene(3, &Region::default(), 5, &c).unwrap();
        let l = base.path_count();
        let closed: f64 = base
            .scatterers
            .iter()
            .map(|s| {
                let a: f64 = base.bs_elements.iter().map(|e| 1.0 / s.distance(e).powi(2)).sum();
                let b: f64 = base.ue_elements.iter().map(|e| 1.0 / s.distance(e).powi(2)).sum();
                a * b / l as f64
            })
            .sum();
        let draws = 10_000;
        let mut rng = substream(17, 0);
        let mut acc = 0.0;
        let mut acc_sq = 0.0;
        for _ in 0..draws {
            let mut scene = base.clone();
            for g in scene.gains.iter_mut() {
                *g = complex_gaussian(&mut rng, 1.0 / l as f64);
            }
            let e: f64 = nlos_channel(&scene, &c).unwrap().iter().map(|v| v.norm_sqr()).sum();
            acc += e;
            acc_sq += e * e;
        }
        let mean = acc / draws as f64;
        let sd = (acc_sq / draws as f64 - mean * mean).sqrt() / (draws as f64).sqrt();
        assert!(mean.is_finite());
        assert!((mean - closed).abs() < 4.0 * sd, "mean {mean} closed {closed} sd {sd}");
    }

    #[test]
    fn uniform_sampling_moments() {
        let region = Region::default();
        let mut rng = substream(1234, 0);
        let n = 10_000;
        let (mut sx, mut sy) = (0.0, 0.0);
        for _ in 0..n {
            let p = uniform_in_region(&mut rng, &region);
            assert!(region.contains(&p));
            sx += p.x_m;
            sy += p.y_m;
        }
        let c = region.center();
        let sd_x = (region.x_high - region.x_low) / 12f64.sqrt() / (n as f64).sqrt();
        let sd_y = (region.y_high - region.y_low) / 12f64.sqrt() / (n as f64).sqrt();
        assert!((sx / n as f64 - c.x_m).abs() < 3.0 * sd_x);
        assert!((sy / n as f64 - c.y_m).abs() < 3.0 * sd_y);
    }
}
