//! Steering dictionary for located scatterers and its union with `Ψ_E`.

use nalgebra::DMatrix;

use super::{Block, Dictionary, DictionaryKind, DictionaryMeta};
use crate::config::SystemConfig;
use crate::error::{Error, Result};
use crate::geometry::{steering_vector, ula_positions, ula_positions_at, Coord};

/// Column `ℓ` is `g_UE(r̂_ℓ) ⊗ g_BS(r̂_ℓ)`, unnormalized, so that
/// `vec(H_NLoS) = Ψ_G α` holds exactly for exact coordinates. The UE array is
/// laid out around `ue_centroid`.
pub fn nlos_steering_dictionary(coords: &[Coord], ue_centroid: &Coord, config: &SystemConfig) -> Result<Dictionary> {
    if coords.is_empty() {
        return Err(Error::Argument("steering dictionary needs at least one coordinate".into()));
    }
    let bs = ula_positions(config.n_bs, config.antenna_spacing_m);
    let ue = ula_positions_at(config.n_ue, config.antenna_spacing_m, *ue_centroid);
    let mut g_bs = DMatrix::zeros(config.n_bs, coords.len());
    let mut g_ue = DMatrix::zeros(config.n_ue, coords.len());
    for (l, c) in coords.iter().enumerate() {
        if !(c.y_m > 0.0) {
            return Err(Error::Argument(format!("scatterer {c:?} must have y > 0")));
        }
        g_bs.set_column(l, &steering_vector(c, &bs, config.wavenumber)?);
        g_ue.set_column(l, &steering_vector(c, &ue, config.wavenumber)?);
    }
    Dictionary::new(
        DictionaryKind::NlosSteering,
        config.n_bs,
        config.n_ue,
        vec![Block::Paired { ue: g_ue, bs: g_bs }],
        None,
        DictionaryMeta {
            coordinates: coords.to_vec(),
            frequencies: Vec::new(),
        },
    )
}

/// `[Ψ_G, Ψ_E]`; with no steering part the result is `Ψ_E` relabeled.
pub fn combined_dictionary(eigen: &Dictionary, nlos: Option<&Dictionary>) -> Result<Dictionary> {
    let mut blocks = Vec::new();
    let mut meta = eigen.meta.clone();
    if let Some(g) = nlos {
        if g.n_bs != eigen.n_bs || g.n_ue != eigen.n_ue {
            return Err(Error::Dimension {
                expected: eigen.nrows(),
                got: g.nrows(),
                context: "combined dictionary rows",
            });
        }
        blocks.extend(g.blocks.iter().cloned());
        meta.coordinates.extend(g.meta.coordinates.iter().copied());
    }
    blocks.extend(eigen.blocks.iter().cloned());
    Dictionary::new(DictionaryKind::Combined, eigen.n_bs, eigen.n_ue, blocks, None, meta)
}
