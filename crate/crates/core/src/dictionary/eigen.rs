//! DPSS eigen-dictionary built around an estimated UE location.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use super::{Block, Dictionary, DictionaryKind, DictionaryMeta};
use crate::config::SystemConfig;
use crate::error::{Error, Result};
use crate::geometry::{ula_positions, ula_positions_at, Coord};

/// How the quadratic (near-field) phase is removed before the DPSS basis applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Compensation {
    /// Exact spherical phase toward the estimated location.
    #[default]
    Exact,
    /// `e^{jκx²/(2ŷ)}`; accurate only for a UE near broadside.
    Paraxial,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigenFactors {
    pub u_matrix: DMatrix<Complex64>,
    pub v_matrix: DMatrix<Complex64>,
    pub eigenvalues_bs: Vec<f64>,
    pub eigenvalues_ue: Vec<f64>,
    pub d_bs: DVector<Complex64>,
    pub d_ue: DVector<Complex64>,
    /// `W` in cycles per meter.
    pub frequency_bs: f64,
    pub frequency_ue: f64,
}

/// Diagonal of `D = diag(e^{jκx_n²/(2ŷ)})`.
pub fn compensation_matrix(element_x: &[f64], y_hat: f64, wavenumber: f64) -> Result<DVector<Complex64>> {
    if !(y_hat > 0.0 && y_hat.is_finite()) {
        return Err(Error::Argument(format!("compensation needs y_hat > 0, got {y_hat}")));
    }
    Ok(DVector::from_iterator(
        element_x.len(),
        element_x
            .iter()
            .map(|x| Complex64::from_polar(1.0, wavenumber * x * x / (2.0 * y_hat))),
    ))
}

/// Diagonal `e^{jκ‖point − element‖}`.
pub fn spherical_compensation(elements: &[Coord], point: &Coord, wavenumber: f64) -> Result<DVector<Complex64>> {
    if !point.is_finite() {
        return Err(Error::Argument(format!("non-finite compensation point {point:?}")));
    }
    Ok(DVector::from_iterator(
        elements.len(),
        elements
            .iter()
            .map(|e| Complex64::from_polar(1.0, wavenumber * point.distance(e))),
    ))
}

/// Toeplitz matrix `sin(2πWΔx)/(πΔx)` with `2W` on the diagonal.
pub fn sinc_autocorrelation(element_x: &[f64], w: f64) -> Result<DMatrix<f64>> {
    if !(w >= 0.0 && w.is_finite()) {
        return Err(Error::Argument(format!("sinc bandwidth must be non-negative, got {w}")));
    }
    if element_x.len() > 1 {
        let spacing = (element_x[1] - element_x[0]).abs();
        if w * spacing >= 0.5 {
            return Err(Error::Argument(format!(
                "bandwidth {w} exceeds the Nyquist limit {} of the element spacing",
                0.5 / spacing
            )));
        }
    }
    let n = element_x.len();
    Ok(DMatrix::from_fn(n, n, |i, j| {
        let dx = element_x[j] - element_x[i];
        if dx == 0.0 {
            2.0 * w
        } else {
            (2.0 * PI * w * dx).sin() / (PI * dx)
        }
    }))
}

/// Discrete prolate spheroidal sequences of length `n` and normalized
/// half-bandwidth `w` (cycles per sample), columns ordered by decreasing
/// concentration.
///
/// Uses the tridiagonal matrix that commutes with the sinc kernel: its
/// eigenvalues stay well separated even when the sinc eigenvalues
/// underflow, as they do for the small bandwidths seen here.
pub fn dpss(n: usize, w: f64) -> Result<DMatrix<f64>> {
    if n == 0 {
        return Err(Error::Argument("dpss length must be positive".into()));
    }
    if !(0.0..0.5).contains(&w) {
        return Err(Error::Argument(format!("normalized bandwidth {w} outside [0, 0.5)")));
    }
    let c = (2.0 * PI * w).cos();
    let half = (n as f64 - 1.0) / 2.0;
    let t = DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            (half - i as f64).powi(2) * c
        } else if j == i + 1 {
            0.5 * j as f64 * (n - j) as f64
        } else if i == j + 1 {
            0.5 * i as f64 * (n - i) as f64
        } else {
            0.0
        }
    });
    let eig = SymmetricEigen::try_new(t, f64::EPSILON, 0)
        .ok_or_else(|| Error::Eigen(format!("tridiagonal EVD did not converge (n = {n})")))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut out = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let mut v = eig.eigenvectors.column(src).into_owned();
        fix_sign(&mut v);
        out.set_column(dst, &v);
    }
    Ok(out)
}

fn fix_sign(v: &mut DVector<f64>) {
    let peak = v.amax();
    if let Some(first) = v.iter().find(|x| x.abs() > 1e-8 * peak).copied() {
        if first < 0.0 {
            v.neg_mut();
        }
    }
}

/// Rayleigh quotients `uᵀRu`, clamped to be non-increasing so values lost
/// below working precision keep the descending order.
fn rayleigh_descending(r: &DMatrix<f64>, u: &DMatrix<f64>) -> Vec<f64> {
    let mut prev = f64::INFINITY;
    u.column_iter()
        .map(|c| {
            let v = c.dot(&(r * c)).max(0.0).min(prev);
            prev = v;
            v
        })
        .collect()
}

pub fn eigen_dictionary(config: &SystemConfig, ue_estimate: &Coord) -> Result<(Dictionary, EigenFactors)> {
    eigen_dictionary_with(config, ue_estimate, Compensation::Exact)
}

/// `Ψ_E = (D_UE⁻¹V) ⊗ (D_BS⁻¹U)` with DPSS bases `U`, `V` whose bandwidths
/// `κL/(4πŷ)` use the aperture of the opposite array.
pub fn eigen_dictionary_with(
    config: &SystemConfig,
    ue_estimate: &Coord,
    compensation: Compensation,
) -> Result<(Dictionary, EigenFactors)> {
    let y_hat = ue_estimate.y_m;
    if !(y_hat > 0.0 && ue_estimate.is_finite()) {
        return Err(Error::Argument(format!("UE estimate {ue_estimate:?} must have y > 0")));
    }
    let k = config.wavenumber;
    let d = config.antenna_spacing_m;
    let bs = ula_positions(config.n_bs, d);
    let ue = ula_positions_at(config.n_ue, d, *ue_estimate);

    let (d_bs, d_ue) = match compensation {
        Compensation::Exact => (
            spherical_compensation(&bs, ue_estimate, k)?,
            spherical_compensation(&ue, &Coord::new(0.0, 0.0), k)?,
        ),
        Compensation::Paraxial => {
            let xs = |v: &[Coord]| v.iter().map(|c| c.x_m).collect::<Vec<_>>();
            (
                compensation_matrix(&xs(&bs), y_hat, k)?,
                compensation_matrix(&xs(&ue), y_hat, k)?,
            )
        }
    };

    let w_bs = k * config.ue_aperture() / (4.0 * PI * y_hat);
    let w_ue = k * config.bs_aperture() / (4.0 * PI * y_hat);
    let local = |n: usize| ula_positions(n, d).iter().map(|c| c.x_m).collect::<Vec<_>>();

    let u = dpss(config.n_bs, (w_bs * d).min(0.499))?;
    let v = dpss(config.n_ue, (w_ue * d).min(0.499))?;
    let eigenvalues_bs = rayleigh_descending(&sinc_autocorrelation(&local(config.n_bs), w_bs.min(0.499 / d))?, &u);
    let eigenvalues_ue = rayleigh_descending(&sinc_autocorrelation(&local(config.n_ue), w_ue.min(0.499 / d))?, &v);

    let u_c = u.map(|x| Complex64::new(x, 0.0));
    let v_c = v.map(|x| Complex64::new(x, 0.0));
    let bs_factor = DMatrix::from_fn(config.n_bs, config.n_bs, |i, j| u_c[(i, j)] * d_bs[i].conj());
    let ue_factor = DMatrix::from_fn(config.n_ue, config.n_ue, |i, j| v_c[(i, j)] * d_ue[i].conj());

    let dict = Dictionary::new(
        DictionaryKind::Eigen,
        config.n_bs,
        config.n_ue,
        vec![Block::Kron { ue: ue_factor, bs: bs_factor }],
        None,
        DictionaryMeta {
            coordinates: vec![*ue_estimate],
            frequencies: vec![w_bs, w_ue],
        },
    )?;
    let factors = EigenFactors {
        u_matrix: u_c,
        v_matrix: v_c,
        eigenvalues_bs,
        eigenvalues_ue,
        d_bs,
        d_ue,
        frequency_bs: w_bs,
        frequency_ue: w_ue,
    };
    Ok((dict, factors))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{los_channel, Scene};
    use crate::geometry::Region;

    fn max_dev_from_identity(m: &DMatrix<Complex64>) -> f64 {
        let g = m.adjoint() * m;
        let mut worst: f64 = 0.0;
        for i in 0..g.nrows() {
            for j in 0..g.ncols() {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((g[(i, j)] - target).norm());
            }
        }
        worst
    }

    #[test]
    fn compensation_entries() {
        let d = compensation_matrix(&[0.0, 0.3, -1.2], 4.0, 500.0).unwrap();
        assert_eq!(d[0], Complex64::new(1.0, 0.0));
        for v in d.iter() {
            assert!((v.norm() - 1.0).abs() < 1e-15);
            assert!((v.inv() - v.conj()).norm() < 1e-15);
        }
        assert!(compensation_matrix(&[0.0], 0.0, 1.0).is_err());
    }

    #[test]
    fn sinc_matrix_structure() {
        let x: Vec<f64> = (0..6).map(|i| i as f64 * 0.1).collect();
        let r = sinc_autocorrelation(&x, 1.3).unwrap();
        for i in 0..6 {
            assert!((r[(i, i)] - 2.6).abs() < 1e-15);
            for j in 0..6 {
                assert!((r[(i, j)] - r[(j, i)]).abs() < 1e-15);
                if i + 1 < 6 && j + 1 < 6 {
                    assert!((r[(i, j)] - r[(i + 1, j + 1)]).abs() < 1e-14);
                }
            }
        }
        assert!(sinc_autocorrelation(&x, 5.0).is_err());
    }

    #[test]
    fn dpss_agrees_with_direct_sinc_evd() {
        // Second route: dense EVD of the sinc kernel where it is well conditioned.
        let (n, w) = (32, 0.1);
        let x: Vec<f64> = (0..n).map(|i| i as f64).collect();
        let r = sinc_autocorrelation(&x, w).unwrap();
        let direct = SymmetricEigen::new(r.clone());
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| direct.eigenvalues[b].total_cmp(&direct.eigenvalues[a]));
        let tri = dpss(n, w).unwrap();
        for (k, &src) in order.iter().take(6).enumerate() {
            let overlap = tri.column(k).dot(&direct.eigenvectors.column(src)).abs();
            assert!((overlap - 1.0).abs() < 1e-8, "mode {k}: overlap {overlap}");
        }
        let lam = rayleigh_descending(&r, &tri);
        assert!(lam.windows(2).all(|p| p[0] >= p[1]));
        assert!((lam[0] - direct.eigenvalues[order[0]]).abs() < 1e-10);
    }

    #[test]
    fn dpss_is_orthonormal_and_signed() {
        let u = dpss(256, 4e-4).unwrap();
        let g = u.transpose() * &u;
        assert!((g - DMatrix::identity(256, 256)).amax() < 1e-10);
        for c in u.column_iter() {
            let first = c.iter().find(|x| x.abs() > 1e-8 * c.amax()).unwrap();
            assert!(*first > 0.0);
        }
    }

    #[test]
    fn eigen_dictionary_is_unitary_and_square() {
        let c = SystemConfig::new(28e9, 256, 4);
        let (dict, f) = eigen_dictionary(&c, &Coord::new(1.0, 9.0)).unwrap();
        assert_eq!(dict.ncols(), 1024);
        assert!(max_dev_from_identity(&dict.to_dense()) < 1e-9);
        assert!(f.d_bs.iter().chain(f.d_ue.iter()).all(|v| (v.norm() - 1.0).abs() < 1e-12));
        assert!(f.eigenvalues_bs.windows(2).all(|p| p[0] >= p[1]));
        assert!(max_dev_from_identity(&f.u_matrix) < 1e-10);
        assert!(max_dev_from_identity(&f.v_matrix) < 1e-10);
    }

    #[test]
    fn compensation_leaves_gram_unchanged() {
        let c = SystemConfig::new(28e9, 32, 4);
        let (_, f) = eigen_dictionary(&c, &Coord::new(0.0, 5.0)).unwrap();
        let recomp = DMatrix::from_fn(32, 32, |i, j| f.d_bs[i].conj() * (f.d_bs[i] * f.u_matrix[(i, j)]));
        let a = f.u_matrix.adjoint() * &f.u_matrix;
        let b = recomp.adjoint() * &recomp;
        assert!((a - b).map(|v| v.norm()).max() < 1e-12);
    }

    #[test]
    fn los_energy_concentrates_in_leading_coefficients() {
        let c = SystemConfig::new(28e9, 256, 4);
        for ue in [Coord::new(0.0, 10.0), Coord::new(-3.0, 6.0), Coord::new(4.5, 20.0)] {
            let scene = Scene::new(&c, Region::default(), ue, vec![], vec![]).unwrap();
            let h = DVector::from_column_slice(los_channel(&scene, &c).unwrap().as_slice());
            let (dict, _) = eigen_dictionary(&c, &ue).unwrap();
            let coeffs = dict.correlate(&h).unwrap();
            let mut e: Vec<f64> = coeffs.iter().map(|v| v.norm_sqr()).collect();
            e.sort_by(|a, b| b.total_cmp(a));
            let frac = e[..4].iter().sum::<f64>() / h.norm_squared();
            assert!(frac >= 0.95, "{ue:?}: {frac}");
        }
    }

    #[test]
    fn sinc_model_tracks_discrete_sum() {
        let c = SystemConfig::new(28e9, 256, 4);
        let y = 13.5;
        let bs: Vec<f64> = ula_positions(256, c.antenna_spacing_m).iter().map(|p| p.x_m).collect();
        let ue: Vec<f64> = ula_positions(4, c.antenna_spacing_m).iter().map(|p| p.x_m).collect();
        let w = c.wavenumber * c.ue_aperture() / (4.0 * PI * y);
        let discrete: Vec<f64> = bs
            .iter()
            .map(|xb| {
                let dx = xb - bs[0];
                ue.iter().map(|xu| Complex64::from_polar(1.0, c.wavenumber * xu * dx / y)).sum::<Complex64>().norm()
            })
            .collect();
        let model = sinc_autocorrelation(&bs, w).unwrap();
        let sinc: Vec<f64> = model.row(0).iter().map(|v| v.abs()).collect();
        assert!(pearson(&discrete, &sinc) > 0.99);
    }

    pub(crate) fn pearson(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len() as f64;
        let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
        let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
        let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
        cov / (va * vb).sqrt()
    }
}
