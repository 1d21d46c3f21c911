//! Far-field DFT and polar-domain (spherical-wave) baseline dictionaries.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;

use super::{Block, Dictionary, DictionaryKind, DictionaryMeta};
use crate::config::SystemConfig;
use crate::error::{Error, Result};
use crate::geometry::{spatial_response, ula_positions, Coord, Region};

/// Oversampled DFT codebook: column `k` is `e^{jκ x_n ν_k}/√N` with
/// `ν_k = −1 + 2k/count`.
pub fn dft_codebook(element_x: &[f64], wavenumber: f64, count: usize) -> DMatrix<Complex64> {
    let n = element_x.len();
    let scale = 1.0 / (n as f64).sqrt();
    DMatrix::from_fn(n, count, |i, k| {
        let nu = -1.0 + 2.0 * k as f64 / count as f64;
        Complex64::from_polar(scale, wavenumber * element_x[i] * nu)
    })
}

pub fn dft_dictionary(config: &SystemConfig, beta: usize) -> Result<Dictionary> {
    if beta == 0 {
        return Err(Error::Argument("DFT oversampling must be at least 1".into()));
    }
    let xs = |n: usize| {
        ula_positions(n, config.antenna_spacing_m)
            .iter()
            .map(|c| c.x_m)
            .collect::<Vec<_>>()
    };
    let k = config.wavenumber;
    Dictionary::new(
        DictionaryKind::Dft,
        config.n_bs,
        config.n_ue,
        vec![Block::Kron {
            ue: dft_codebook(&xs(config.n_ue), k, beta * config.n_ue),
            bs: dft_codebook(&xs(config.n_bs), k, beta * config.n_bs),
        }],
        Some(beta as f64),
        DictionaryMeta::default(),
    )
}

/// Polar-grid codebook for one array: `n_angles` broadside angles at bin
/// midpoints over `(−π/2, π/2)`, and at each angle `n_dist` reciprocal
/// distances uniform in `[cos²ϑ/r_max, cos²ϑ/y_L]`. Columns are unit norm.
pub fn polar_codebook(
    elements: &[Coord],
    region: &Region,
    n_angles: usize,
    n_dist: usize,
    wavenumber: f64,
) -> Result<DMatrix<Complex64>> {
    region.validate()?;
    if n_angles == 0 || n_dist == 0 {
        return Err(Error::Argument("polar grid needs at least one angle and distance".into()));
    }
    let r_max = region.x_low.abs().max(region.x_high.abs()).hypot(region.y_high);
    let mut out = DMatrix::zeros(elements.len(), n_angles * n_dist);
    let mut col = 0;
    for i in 0..n_angles {
        let theta = -PI / 2.0 + (i as f64 + 0.5) * PI / n_angles as f64;
        let c2 = theta.cos().powi(2);
        let (lo, hi) = (c2 / r_max, c2 / region.y_low);
        for j in 0..n_dist {
            let s = if n_dist == 1 {
                0.5 * (lo + hi)
            } else {
                lo + (hi - lo) * j as f64 / (n_dist - 1) as f64
            };
            let r = 1.0 / s;
            let p = Coord::new(r * theta.sin(), r * theta.cos());
            let mut norm = 0.0;
            for (e, el) in elements.iter().enumerate() {
                let g = spatial_response(&p, el, wavenumber)?;
                out[(e, col)] = g;
                norm += g.norm_sqr();
            }
            let inv = 1.0 / norm.sqrt();
            out.column_mut(col).iter_mut().for_each(|v| *v *= inv);
            col += 1;
        }
    }
    Ok(out)
}

/// Grid points per axis for an `n`-element array: `⌊β√n⌉`, at least one.
pub(crate) fn polar_points(beta: f64, n: usize) -> usize {
    ((beta * (n as f64).sqrt()).round() as usize).max(1)
}

pub fn spherical_dictionary(config: &SystemConfig, region: &Region, beta: f64) -> Result<Dictionary> {
    if !(beta >= 1.0 && beta.is_finite()) {
        return Err(Error::Argument(format!("spherical oversampling must be >= 1, got {beta}")));
    }
    let k = config.wavenumber;
    let side = |n: usize| {
        let p = polar_points(beta, n);
        polar_codebook(&ula_positions(n, config.antenna_spacing_m), region, p, p, k)
    };
    Dictionary::new(
        DictionaryKind::Spherical,
        config.n_bs,
        config.n_ue,
        vec![Block::Kron {
            ue: side(config.n_ue)?,
            bs: side(config.n_bs)?,
        }],
        Some(beta),
        DictionaryMeta::default(),
    )
}
