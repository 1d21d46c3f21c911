//! Time-inversion back-projection of the coherent hologram onto a search grid.
//!
//! The direct form sums `ℏ̄[n]·e^{jκ‖r − r_BS^n‖}` for every grid point. When the
//! grid x-spacing equals the antenna spacing, each y-row is a linear
//! correlation of `ℏ̄` with a fixed kernel, so a row costs two FFTs.

use std::io::Write;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use crate::config::SystemConfig;
use crate::error::{Error, Result};
use crate::geometry::{ula_positions, Coord, Region};
use crate::sensing::SensingRecord;

#[derive(Debug, Clone, PartialEq)]
pub struct SearchGrid {
    pub x_values: Vec<f64>,
    pub y_values: Vec<f64>,
    /// `G_x + 2·N_BS`.
    pub extended_x_count: usize,
    /// Next power of two ≥ `N_BS + G_x′ − 1`.
    pub fft_length: usize,
    pub x_spacing: f64,
    pub region: Region,
}

impl SearchGrid {
    /// Grid with x-spacing equal to the antenna spacing and
    /// `G_x = ⌈2(x_H − x_L)/(N_BS λ)⌉·N_BS` columns.
    pub fn new(region: &Region, config: &SystemConfig, rows: usize) -> Result<Self> {
        let n = config.n_bs;
        let blocks = (2.0 * (region.x_high - region.x_low) / (n as f64 * config.wavelength_m)).ceil();
        let g_x = (blocks as usize).max(1) * n;
        let g_x = g_x.max(
            ((region.x_high - region.x_low) / config.antenna_spacing_m).ceil() as usize + 1,
        );
        Self::with_spacing(region, config, config.antenna_spacing_m, g_x, rows)
    }

    /// `g_x` columns spread evenly over `[x_L, x_H)`. Only usable with the FFT
    /// path if the resulting spacing happens to equal the antenna spacing.
    pub fn uniform(region: &Region, config: &SystemConfig, g_x: usize, rows: usize) -> Result<Self> {
        if g_x == 0 {
            return Err(Error::Argument("grid needs at least one column".into()));
        }
        let dx = (region.x_high - region.x_low) / g_x as f64;
        Self::with_spacing(region, config, dx, g_x, rows)
    }

    fn with_spacing(
        region: &Region,
        config: &SystemConfig,
        dx: f64,
        g_x: usize,
        rows: usize,
    ) -> Result<Self> {
        region.validate()?;
        if rows == 0 || g_x == 0 {
            return Err(Error::Argument(format!("empty grid {g_x} x {rows}")));
        }
        let dy = (region.y_high - region.y_low) / rows as f64;
        let extended_x_count = g_x + 2 * config.n_bs;
        Ok(Self {
            x_values: (0..g_x).map(|i| region.x_low + i as f64 * dx).collect(),
            y_values: (0..rows).map(|j| region.y_low + j as f64 * dy).collect(),
            extended_x_count,
            fft_length: (config.n_bs + extended_x_count - 1).next_power_of_two(),
            x_spacing: dx,
            region: *region,
        })
    }

    pub fn g_x(&self) -> usize {
        self.x_values.len()
    }

    pub fn g_y(&self) -> usize {
        self.y_values.len()
    }

    pub fn point(&self, i: usize, j: usize) -> Coord {
        Coord::new(self.x_values[i], self.y_values[j])
    }

    /// Index of the nearest grid point (clamped to the grid).
    pub fn nearest_index(&self, c: &Coord) -> (usize, usize) {
        let near = |vals: &[f64], v: f64| {
            let step = if vals.len() > 1 { vals[1] - vals[0] } else { 1.0 };
            ((v - vals[0]) / step).round().clamp(0.0, (vals.len() - 1) as f64) as usize
        };
        (near(&self.x_values, c.x_m), near(&self.y_values, c.y_m))
    }

    pub fn y_spacing(&self) -> f64 {
        if self.y_values.len() > 1 {
            self.y_values[1] - self.y_values[0]
        } else {
            self.region.y_high - self.region.y_low
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridPeak {
    pub i: usize,
    pub j: usize,
    pub coord: Coord,
    pub amplitude: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructionMap {
    /// `G_x × G_y` amplitudes `|Ẽ|`.
    pub theta: DMatrix<f64>,
    pub grid: SearchGrid,
    pub peaks: Vec<GridPeak>,
}

impl ReconstructionMap {
    /// Writes Θ row-major: one line per x index, header `x_m` followed by the y values.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["x_m".to_string()];
        header.extend(self.grid.y_values.iter().map(|y| format!("y={y}")));
        w.write_record(&header).map_err(|e| Error::Format(e.to_string()))?;
        for (i, x) in self.grid.x_values.iter().enumerate() {
            let mut row = vec![x.to_string()];
            row.extend(self.theta.row(i).iter().map(|v| v.to_string()));
            w.write_record(&row).map_err(|e| Error::Format(e.to_string()))?;
        }
        w.flush().map_err(|e| Error::Format(e.to_string()))
    }
}

/// Compensated back-projection `Σ_n ℏ̄[n]·e^{jκ‖target − r_BS^n‖}`.
pub fn time_inversion_direct(record: &SensingRecord, target: &Coord, config: &SystemConfig) -> Result<Complex64> {
    if !(target.y_m > 0.0) {
        return Err(Error::Domain(format!("target {target:?} must lie in front of the array")));
    }
    let bs = ula_positions(config.n_bs, config.antenna_spacing_m);
    check_record(record, config)?;
    Ok(back_project(&record.coherent_hologram, &bs, target, config.wavenumber))
}

fn back_project(h: &nalgebra::DVector<Complex64>, bs: &[Coord], target: &Coord, k: f64) -> Complex64 {
    h.iter()
        .zip(bs)
        .map(|(hn, e)| hn * Complex64::from_polar(1.0, k * target.distance(e)))
        .sum()
}

fn check_record(record: &SensingRecord, config: &SystemConfig) -> Result<()> {
    if record.coherent_hologram.len() != config.n_bs {
        return Err(Error::Dimension {
            expected: config.n_bs,
            got: record.coherent_hologram.len(),
            context: "coherent hologram vs BS elements",
        });
    }
    Ok(())
}

/// Θ by direct evaluation at every grid point (any grid spacing).
pub fn reconstruction_map_direct(
    record: &SensingRecord,
    grid: &SearchGrid,
    config: &SystemConfig,
) -> Result<ReconstructionMap> {
    check_record(record, config)?;
    let bs = ula_positions(config.n_bs, config.antenna_spacing_m);
    let k = config.wavenumber;
    let cols: Vec<Vec<f64>> = grid
        .y_values
        .par_iter()
        .map(|&y| {
            grid.x_values
                .iter()
                .map(|&x| back_project(&record.coherent_hologram, &bs, &Coord::new(x, y), k).norm())
                .collect()
        })
        .collect();
    Ok(ReconstructionMap {
        theta: DMatrix::from_fn(grid.g_x(), grid.g_y(), |i, j| cols[j][i]),
        grid: grid.clone(),
        peaks: Vec::new(),
    })
}

/// Precomputed FFT kernels for one grid; reuse across localization iterations.
pub struct ReconstructionPlan {
    grid: SearchGrid,
    n_bs: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    /// FFT of the reversed row kernel, one per y-row.
    kernels: Vec<Vec<Complex64>>,
}

impl std::fmt::Debug for ReconstructionPlan {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ReconstructionPlan")
            .field("g_x", &self.grid.g_x())
            .field("g_y", &self.grid.g_y())
            .field("fft_length", &self.grid.fft_length)
            .finish()
    }
}

impl ReconstructionPlan {
    pub fn new(grid: &SearchGrid, config: &SystemConfig) -> Result<Self> {
        let d = config.antenna_spacing_m;
        if (grid.x_spacing - d).abs() > 1e-12 * d {
            return Err(Error::Precondition(format!(
                "grid x-spacing {} differs from antenna spacing {d}; the row convolution identity needs them equal",
                grid.x_spacing
            )));
        }
        let n = config.n_bs;
        let g_x = grid.g_x();
        let m = n + g_x - 1;
        let len = grid.fft_length;
        if len < n + m - 1 {
            return Err(Error::Precondition(format!("fft length {len} too short for {n} + {m} - 1")));
        }
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(len);
        let inverse = planner.plan_fft_inverse(len);
        let k = config.wavenumber;
        let bs0 = ula_positions(n, d)[0].x_m;
        let c = bs0 - grid.x_values[0];
        let kernels = grid
            .y_values
            .par_iter()
            .map(|&y| {
                let mut buf = vec![Complex64::default(); len];
                // q[t] = K[t − (G_x − 1)], stored reversed: buf[s] = q[m − 1 − s].
                for (s, slot) in buf.iter_mut().take(m).enumerate() {
                    let t = m - 1 - s;
                    let kk = t as f64 - (g_x as f64 - 1.0);
                    let dx = c + kk * d;
                    *slot = Complex64::from_polar(1.0, k * dx.hypot(y));
                }
                forward.process(&mut buf);
                buf
            })
            .collect();
        Ok(Self {
            grid: grid.clone(),
            n_bs: n,
            forward,
            inverse,
            kernels,
        })
    }

    pub fn grid(&self) -> &SearchGrid {
        &self.grid
    }

    pub fn map(&self, record: &SensingRecord) -> Result<ReconstructionMap> {
        let n = self.n_bs;
        if record.coherent_hologram.len() != n {
            return Err(Error::Dimension {
                expected: n,
                got: record.coherent_hologram.len(),
                context: "coherent hologram vs plan",
            });
        }
        let len = self.grid.fft_length;
        let g_x = self.grid.g_x();
        let mut h = vec![Complex64::default(); len];
        h[..n].copy_from_slice(record.coherent_hologram.as_slice());
        self.forward.process(&mut h);
        let scale = 1.0 / len as f64;
        let cols: Vec<Vec<f64>> = self
            .kernels
            .par_iter()
            .map(|kern| {
                let mut buf: Vec<Complex64> = h.iter().zip(kern).map(|(a, b)| a * b).collect();
                self.inverse.process(&mut buf);
                buf[n - 1..n - 1 + g_x].iter().map(|v| v.norm() * scale).collect()
            })
            .collect();
        Ok(ReconstructionMap {
            theta: DMatrix::from_fn(g_x, self.grid.g_y(), |i, j| cols[j][i]),
            grid: self.grid.clone(),
            peaks: Vec::new(),
        })
    }
}

/// Θ via per-row FFT correlation. Builds a fresh plan; keep a
/// [`ReconstructionPlan`] when mapping repeatedly on the same grid.
pub fn reconstruction_map_fft(
    record: &SensingRecord,
    grid: &SearchGrid,
    config: &SystemConfig,
) -> Result<ReconstructionMap> {
    ReconstructionPlan::new(grid, config)?.map(record)
}

/// Global maximum of Θ²; ties go to the smallest `(i, j)`.
pub fn detect_peak(map: &ReconstructionMap) -> Result<GridPeak> {
    let theta = &map.theta;
    if theta.is_empty() {
        return Err(Error::NoPeak);
    }
    let mut best: Option<(usize, usize, f64)> = None;
    for i in 0..theta.nrows() {
        for j in 0..theta.ncols() {
            let v = theta[(i, j)];
            let p = v * v;
            if !p.is_finite() {
                continue;
            }
            if best.is_none_or(|(_, _, b)| p > b) {
                best = Some((i, j, p));
            }
        }
    }
    match best {
        Some((i, j, p)) if p > 0.0 => Ok(GridPeak {
            i,
            j,
            coord: map.grid.point(i, j),
            amplitude: p.sqrt(),
        }),
        _ => Err(Error::NoPeak),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;
    use crate::sensing::{build_hologram, ReferenceWave};
    use nalgebra::DVector;
    use rand::Rng;

    fn record_from(h: DVector<Complex64>) -> SensingRecord {
        SensingRecord {
            power: vec![0.0; h.len()],
            hologram: h.map(|v| v.re),
            coherent_hologram: h,
            sensing_noise_power: 0.0,
        }
    }

    #[test]
    fn grid_shape_matches_region() {
        let c = SystemConfig::new(28e9, 256, 4);
        let g = SearchGrid::new(&Region::default(), &c, 20).unwrap();
        assert_eq!(g.g_x(), 2048);
        assert_eq!(g.extended_x_count, 2048 + 512);
        assert_eq!(g.fft_length, 4096);
        assert!(g.fft_length >= 256 + g.extended_x_count - 1);
        assert!(*g.x_values.last().unwrap() >= 5.0);
        assert_eq!(g.y_values[0], 2.0);
    }

    #[test]
    fn zero_and_single_tap_records() {
        let c = SystemConfig::new(28e9, 16, 1);
        let rec = record_from(DVector::zeros(16));
        let t = Coord::new(0.3, 4.0);
        assert_eq!(time_inversion_direct(&rec, &t, &c).unwrap(), Complex64::default());
        let mut h = DVector::zeros(16);
        h[5] = Complex64::new(1.0, 0.0);
        let v = time_inversion_direct(&record_from(h), &t, &c).unwrap();
        assert!((v.norm() - 1.0).abs() < 1e-12);

        let grid = SearchGrid::new(&Region::default(), &c, 4).unwrap();
        let map = reconstruction_map_fft(&rec, &grid, &c).unwrap();
        assert!(map.theta.iter().all(|v| *v == 0.0));
        assert!(matches!(detect_peak(&map), Err(Error::NoPeak)));
    }

    #[test]
    fn direct_equals_conjugate_response_times_distance() {
        let c = SystemConfig::new(28e9, 32, 1);
        let mut rng = substream(2, 0);
        let h = DVector::from_fn(32, |_, _| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
        let rec = record_from(h.clone());
        let t = Coord::new(-1.2, 7.5);
        let bs = ula_positions(32, c.antenna_spacing_m);
        let mut expect = Complex64::default();
        for (n, e) in bs.iter().enumerate() {
            let g = crate::geometry::spatial_response(&t, e, c.wavenumber).unwrap();
            expect += h[n] * g.conj() * t.distance(e);
        }
        let got = time_inversion_direct(&rec, &t, &c).unwrap();
        assert!((got - expect).norm() < 1e-10 * expect.norm());
    }

    #[test]
    fn fft_matches_direct_small() {
        let c = SystemConfig::new(28e9, 32, 4);
        let region = Region { x_low: -0.5, x_high: 0.5, y_low: 2.0, y_high: 4.0 };
        let grid = SearchGrid::new(&region, &c, 5).unwrap();
        let mut rng = substream(3, 0);
        let reference = ReferenceWave::random(1.0, 32, &mut rng);
        let obj = DVector::from_fn(32, |_, _| Complex64::new(rng.random::<f64>(), rng.random::<f64>()) * 1e-3);
        let p = crate::sensing::measure_power(&reference, &obj).unwrap();
        let rec = build_hologram(&p, &reference).unwrap();
        let fast = reconstruction_map_fft(&rec, &grid, &c).unwrap();
        let slow = reconstruction_map_direct(&rec, &grid, &c).unwrap();
        let scale = slow.theta.max();
        for (a, b) in fast.theta.iter().zip(slow.theta.iter()) {
            assert!((a - b).abs() <= 1e-10 * scale, "{a} vs {b}");
        }
    }

    #[test]
    fn mismatched_spacing_is_rejected() {
        let c = SystemConfig::new(28e9, 32, 4);
        let grid = SearchGrid::uniform(&Region::default(), &c, 100, 5).unwrap();
        assert!(matches!(ReconstructionPlan::new(&grid, &c), Err(Error::Precondition(_))));
    }

    #[test]
    fn peak_ties_and_single_entry() {
        let c = SystemConfig::new(28e9, 8, 1);
        let grid = SearchGrid::uniform(&Region::default(), &c, 3, 3).unwrap();
        let mut theta = DMatrix::zeros(3, 3);
        theta[(2, 1)] = 0.5;
        let map = ReconstructionMap { theta: theta.clone(), grid: grid.clone(), peaks: vec![] };
        let p = detect_peak(&map).unwrap();
        assert_eq!((p.i, p.j), (2, 1));
        theta[(1, 2)] = 0.5;
        theta[(2, 0)] = 0.5;
        let map = ReconstructionMap { theta, grid, peaks: vec![] };
        let p = detect_peak(&map).unwrap();
        assert_eq!((p.i, p.j), (1, 2));
        assert_eq!(p.coord, map.grid.point(1, 2));
    }

    #[test]
    fn csv_dump_has_header_and_rows() {
        let c = SystemConfig::new(28e9, 8, 1);
        let grid = SearchGrid::uniform(&Region::default(), &c, 3, 2).unwrap();
        let map = ReconstructionMap { theta: DMatrix::from_element(3, 2, 1.5), grid, peaks: vec![] };
        let mut buf = Vec::new();
        map.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 4);
        assert!(lines[0].starts_with("x_m,y=2"));
        assert!(lines[1].ends_with("1.5,1.5"));
    }
}
