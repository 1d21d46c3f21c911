//! Successive multipath localization: reconstruct, pick the strongest peak,
//! fit its gain, cancel it from the hologram, repeat.

use nalgebra::DVector;
use num_complex::Complex64;

use crate::config::SystemConfig;
use crate::error::{Error, Result};
use crate::geometry::{steering_vector, ula_positions, ula_positions_at, Coord};
use crate::reconstruction::{
    detect_peak, reconstruction_map_direct, GridPeak, ReconstructionMap, ReconstructionPlan, SearchGrid,
};
use crate::sensing::{ReferenceWave, SensingRecord};

/// Paths stop being accepted after this many iterations when `L` is unknown.
pub const MAX_UNKNOWN_PATHS: usize = 32;

#[derive(Debug, Clone, PartialEq)]
pub struct LocalizationResult {
    /// Index 0 is the UE; the rest are scatterers in detection order.
    pub coordinates: Vec<Coord>,
    pub gains: Vec<Complex64>,
    pub peaks: Vec<GridPeak>,
    pub detected_count: usize,
    /// Set when the loop ended early because the map had no peak.
    pub warning: Option<String>,
}

/// How Θ is evaluated during localization.
#[derive(Debug)]
pub enum Reconstructor {
    Fft(ReconstructionPlan),
    Direct(SearchGrid),
}

impl Reconstructor {
    pub fn fft(grid: &SearchGrid, config: &SystemConfig) -> Result<Self> {
        Ok(Self::Fft(ReconstructionPlan::new(grid, config)?))
    }

    pub fn grid(&self) -> &SearchGrid {
        match self {
            Self::Fft(p) => p.grid(),
            Self::Direct(g) => g,
        }
    }

    pub fn map(&self, record: &SensingRecord, config: &SystemConfig) -> Result<ReconstructionMap> {
        match self {
            Self::Fft(p) => p.map(record),
            Self::Direct(g) => reconstruction_map_direct(record, g, config),
        }
    }
}

/// Radiation model used when fitting and cancelling a detected path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SourceShape {
    /// A point re-radiator (scatterers).
    #[default]
    Point,
    /// The UE's own array centered at the detected point, all elements
    /// driven by the all-ones sensing signal.
    UeArray,
}

fn source_response(coord: &Coord, shape: SourceShape, config: &SystemConfig) -> Result<DVector<Complex64>> {
    let bs = ula_positions(config.n_bs, config.antenna_spacing_m);
    match shape {
        SourceShape::Point => steering_vector(coord, &bs, config.wavenumber),
        SourceShape::UeArray => {
            let mut g = DVector::zeros(bs.len());
            for e in ula_positions_at(config.n_ue, config.antenna_spacing_m, *coord) {
                g += steering_vector(&e, &bs, config.wavenumber)?;
            }
            Ok(g / Complex64::new((config.n_ue as f64).sqrt(), 0.0))
        }
    }
}

fn reference_weighted_response(
    coord: &Coord,
    shape: SourceShape,
    reference: &ReferenceWave,
    config: &SystemConfig,
) -> Result<DVector<Complex64>> {
    if !(coord.y_m > 0.0) {
        return Err(Error::Domain(format!("coordinate {coord:?} must lie in front of the array")));
    }
    let g = source_response(coord, shape, config)?;
    if g.len() != reference.len() {
        return Err(Error::Dimension {
            expected: g.len(),
            got: reference.len(),
            context: "reference vs BS elements",
        });
    }
    Ok(reference.values.zip_map(&g, |r, gn| r.conj() * gn))
}

/// Complex gain `ᾱ` minimizing `‖ℏ − 2Re(ᾱ·e_ref*⊙g)‖²`.
pub fn estimate_path_gain(
    record: &SensingRecord,
    coord: &Coord,
    shape: SourceShape,
    reference: &ReferenceWave,
    config: &SystemConfig,
) -> Result<Complex64> {
    let z = reference_weighted_response(coord, shape, reference, config)?;
    if record.hologram.len() != z.len() {
        return Err(Error::Dimension {
            expected: z.len(),
            got: record.hologram.len(),
            context: "hologram vs BS elements",
        });
    }
    // 2Re(ᾱz) = a·u + b·v with u = 2Re z, v = −2Im z.
    let (mut uu, mut uv, mut vv, mut uh, mut vh) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (zn, h) in z.iter().zip(record.hologram.iter()) {
        let (u, v) = (2.0 * zn.re, -2.0 * zn.im);
        uu += u * u;
        uv += u * v;
        vv += v * v;
        uh += u * h;
        vh += v * h;
    }
    let det = uu * vv - uv * uv;
    if !(det > 1e-14 * (uu * vv)) || uu == 0.0 {
        return Err(Error::Domain(format!("degenerate response at {coord:?} for gain fit")));
    }
    Ok(Complex64::new((vv * uh - uv * vh) / det, (uu * vh - uv * uh) / det))
}

/// Removes `2Re(e_ref*·ᾱ·g)` from the hologram and refreshes the coherent copy.
pub fn cancel_path(
    record: &SensingRecord,
    coord: &Coord,
    shape: SourceShape,
    gain: Complex64,
    reference: &ReferenceWave,
    config: &SystemConfig,
) -> Result<SensingRecord> {
    if gain == Complex64::default() {
        return Ok(record.clone());
    }
    let z = reference_weighted_response(coord, shape, reference, config)?;
    let h = record.hologram.zip_map(&z, |h, zn| h - 2.0 * (gain * zn).re);
    record.with_hologram(h, reference)
}

/// Algorithm loop. With `paths = Some(L)` runs `L + 1` detections; with
/// `None` stops when a peak falls below `threshold_rel` of the first.
pub fn localize_multipath(
    record: &SensingRecord,
    reference: &ReferenceWave,
    reconstructor: &Reconstructor,
    paths: Option<usize>,
    threshold_rel: f64,
    config: &SystemConfig,
) -> Result<LocalizationResult> {
    let iterations = paths.map_or(MAX_UNKNOWN_PATHS, |l| l + 1);
    let mut current = record.clone();
    let mut out = LocalizationResult {
        coordinates: Vec::new(),
        gains: Vec::new(),
        peaks: Vec::new(),
        detected_count: 0,
        warning: None,
    };
    for it in 0..iterations {
        let map = reconstructor.map(&current, config)?;
        let peak = match detect_peak(&map) {
            Ok(p) => p,
            Err(Error::NoPeak) => {
                out.warning = Some(format!("no peak at iteration {it}; returning {} paths", out.detected_count));
                break;
            }
            Err(e) => return Err(e),
        };
        if paths.is_none() {
            if let Some(first) = out.peaks.first() {
                if peak.amplitude < threshold_rel * first.amplitude {
                    break;
                }
            }
        }
        // The strongest peak is the UE itself.
        let shape = if it == 0 { SourceShape::UeArray } else { SourceShape::Point };
        let gain = estimate_path_gain(&current, &peak.coord, shape, reference, config)?;
        current = cancel_path(&current, &peak.coord, shape, gain, reference, config)?;
        out.coordinates.push(peak.coord);
        out.gains.push(gain);
        out.peaks.push(peak);
        out.detected_count += 1;
    }
    Ok(out)
}
