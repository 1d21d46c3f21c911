//! Experiment runners. Every trial draws from its own substream of the
//! scenario seed, so results do not depend on scheduling.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Instant;

use nalgebra::DVector;
use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;

use nfce::channel::{channel, sample_scene, ChannelMatrix, Scene};
use nfce::config::SnrMode;
use nfce::dictionary::{
    combined_dictionary, dft_dictionary, eigen_dictionary, nlos_steering_dictionary, spherical_dictionary, Dictionary,
};
use nfce::estimation::{estimate_with_operator, EstimationResult};
use nfce::localization::{localize_multipath, LocalizationResult, Reconstructor};
use nfce::metrics::{hungarian, matched_squared_errors, mean_nmse_db, nmse_ratio};
use nfce::omp::OmpOptions;
use nfce::reconstruction::{ReconstructionMap, SearchGrid};
use nfce::rng::{derive_seed, substream, SimRng};
use nfce::sensing::{build_hologram, default_reference_amplitude, measure_power_noisy, object_wave, ReferenceWave, SensingRecord};
use nfce::training::{build_measurement, simulate_training, MeasurementModel, SensingOperator, TrainingConfig};
use nfce::{Coord, SimulationConfig, SystemConfig};

use crate::error::Result;
use crate::results::ResultRecord;
use crate::spec::{ScenarioName, ScenarioSpec};

pub const DEFAULT_PATHS: usize = 5;
/// NMSE the pilot-length search must reach.
pub const MIN_SAMPLES_TARGET_DB: f64 = -15.0;
/// Iteration budget of the pilot-length search.
pub const MIN_SAMPLES_MAX_ITERATIONS: usize = 100;
/// Default compression-ratio axis of the pilot-length search.
pub const MIN_SAMPLES_MU: [f64; 13] = [0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4, 0.45, 0.5, 0.6, 0.8, 1.0];
pub const BENCH_REPETITIONS: usize = 5;
/// Scenes timed per benchmark point.
pub const BENCH_SCENES: usize = 3;

pub const DEMO_N_BS: usize = 512;
/// Demo sources, snapped to the nearest search-grid point before use.
pub const DEMO_UE: Coord = Coord::new(1.2, 7.0);
pub const DEMO_SCATTERERS: [Coord; 3] = [Coord::new(-3.0, 12.0), Coord::new(2.5, 18.0), Coord::new(-1.5, 4.5)];
/// Polar `(magnitude, phase)` of the demo scatterer gains.
pub const DEMO_GAINS: [(f64, f64); 3] = [(0.6, 0.3), (0.5, -1.2), (0.7, 2.0)];

// Substream indices within a trial.
const S_SCENE: u64 = 0;
const S_TRAINING: u64 = 1;
const S_NOISE: u64 = 2;
const S_PERTURB: u64 = 3;
const S_SENSING: u64 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    /// Report trial progress on stderr.
    pub progress: bool,
    /// Fill the `seconds` column; when off it is zero and output is
    /// byte-stable (benchmark metrics excepted).
    pub timing: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            progress: false,
            timing: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioOutput {
    pub records: Vec<ResultRecord>,
    /// Θ of the first localization pass (`loc-demo` only).
    pub theta: Option<ReconstructionMap>,
    /// Trials that returned an error, summed over parameter points.
    pub failed_trials: usize,
}

pub fn run_scenario(spec: &ScenarioSpec, sim: &SimulationConfig, opts: RunOptions) -> Result<ScenarioOutput> {
    spec.validate()?;
    let mut run = Runner {
        spec,
        sim,
        opts,
        out: ScenarioOutput {
            records: Vec::new(),
            theta: None,
            failed_trials: 0,
        },
    };
    match spec.name {
        ScenarioName::LocDemo => run.loc_demo()?,
        ScenarioName::LocCdf => run.loc_cdf()?,
        ScenarioName::LocRmseSweep => run.loc_rmse_sweep()?,
        ScenarioName::LocBench => run.loc_bench()?,
        ScenarioName::CeNmseVsPilots => run.ce_vs_pilots()?,
        ScenarioName::CeNmseVsIters => run.ce_vs_iters()?,
        ScenarioName::CeOversampling => run.ce_oversampling()?,
        ScenarioName::CeRobustness => run.ce_robustness()?,
        ScenarioName::CeMinSamples => run.ce_min_samples()?,
    }
    Ok(run.out)
}

/// Copy of the base system with a different carrier and/or BS size.
pub fn system_for(sim: &SimulationConfig, fc_hz: Option<f64>, n_bs: Option<usize>) -> Result<SystemConfig> {
    let base = &sim.system;
    let fc = fc_hz.unwrap_or(base.carrier_frequency_hz);
    let n = n_bs.unwrap_or(base.n_bs);
    let mut c = SystemConfig::new(fc, n, base.n_ue);
    if fc == base.carrier_frequency_hz {
        c.antenna_spacing_m = base.antenna_spacing_m;
    }
    c.n_rf_bs = base.n_rf_bs.min(n);
    c.n_rf_ue = base.n_rf_ue;
    c.noise_power_dbm = base.noise_power_dbm;
    c.pilot_power_dbm = base.pilot_power_dbm;
    c.validate()?;
    Ok(c)
}

/// Linear-interpolated quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    quantile(&v, 0.5)
}

/// Random-phase reference, power measurement and hologram for one scene.
pub fn sense_scene<R: Rng + ?Sized>(
    scene: &Scene,
    config: &SystemConfig,
    sim: &SimulationConfig,
    rng: &mut R,
) -> Result<(SensingRecord, ReferenceWave)> {
    let amp = sim
        .sensing
        .reference_amplitude
        .unwrap_or_else(|| default_reference_amplitude(config, sim.region.y_low));
    let reference = ReferenceWave::random(amp, config.n_bs, rng);
    let obj = object_wave(scene, config, None)?;
    let power = measure_power_noisy(&reference, &obj, sim.sensing.power_noise_std, rng)?;
    Ok((build_hologram(&power, &reference)?, reference))
}

pub fn localize_scene(
    scene: &Scene,
    config: &SystemConfig,
    sim: &SimulationConfig,
    reconstructor: &Reconstructor,
    trial_seed: u64,
) -> Result<LocalizationResult> {
    let mut rng = substream(trial_seed, S_SENSING);
    let (record, reference) = sense_scene(scene, config, sim, &mut rng)?;
    Ok(localize_multipath(
        &record,
        &reference,
        reconstructor,
        Some(scene.path_count()),
        sim.sensing.threshold_rel,
        config,
    )?)
}

/// Chebyshev distance in cells between each true source and its matched
/// detection; unmatched sources count as the larger grid dimension.
pub fn cell_errors(result: &LocalizationResult, truths: &[Coord], grid: &SearchGrid) -> Vec<usize> {
    let cost: Vec<Vec<f64>> = truths
        .iter()
        .map(|t| result.coordinates.iter().map(|e| t.distance(e).powi(2)).collect())
        .collect();
    let penalty = grid.g_x().max(grid.g_y());
    hungarian(&cost)
        .iter()
        .zip(truths)
        .map(|(a, t)| match a {
            Some(j) => {
                let (ti, tj) = grid.nearest_index(t);
                let p = &result.peaks[*j];
                ti.abs_diff(p.i).max(tj.abs_diff(p.j))
            }
            None => penalty,
        })
        .collect()
}

fn scene_for_trial(sim: &SimulationConfig, config: &SystemConfig, trial_seed: u64, paths: usize) -> Result<Scene> {
    Ok(sample_scene(derive_seed(trial_seed, S_SCENE), &sim.region, paths, config)?)
}

/// Moves `c` to the point at polar offset `(radius·ε, direction)`; with
/// `radius = √u` for uniform `u` this is uniform over the disk of radius ε.
fn perturb(c: &Coord, direction: f64, radius: f64, epsilon: f64) -> Coord {
    let r = radius * epsilon;
    let p = c.offset(r * direction.cos(), r * direction.sin());
    // Keep the point in front of the array.
    if p.y_m <= 0.1 {
        Coord::new(p.x_m, p.y_m.abs().max(0.1))
    } else {
        p
    }
}

fn proposed_dictionary(config: &SystemConfig, ue: &Coord, scatterers: &[Coord]) -> Result<Dictionary> {
    let (eigen, _) = eigen_dictionary(config, ue)?;
    let nlos = if scatterers.is_empty() {
        None
    } else {
        Some(nlos_steering_dictionary(scatterers, ue, config)?)
    };
    Ok(combined_dictionary(&eigen, nlos.as_ref())?)
}

struct Pilots {
    model: MeasurementModel,
    y: DVector<Complex64>,
}

fn pilots(config: &SystemConfig, sim: &SimulationConfig, tau: usize, h: &ChannelMatrix, trial_seed: u64) -> Result<Pilots> {
    let training = TrainingConfig::new(
        config,
        tau,
        sim.training.omp_iterations,
        derive_seed(trial_seed, S_TRAINING),
        sim.training.snr_mode,
    )?;
    let model = build_measurement(config, &training)?;
    let y = match sim.training.snr_mode {
        SnrMode::Thermal => simulate_training(h, &model, Some(&mut substream(trial_seed, S_NOISE)))?,
        SnrMode::Noiseless => simulate_training::<SimRng>(h, &model, None)?,
    };
    Ok(Pilots { model, y })
}

fn estimate(p: &Pilots, dict: &Dictionary, h: &ChannelMatrix, opts: OmpOptions) -> Result<EstimationResult> {
    let op = SensingOperator::new(&p.model, dict)?;
    Ok(estimate_with_operator(&p.y, &op, dict, opts, Some(h))?)
}

fn ratio_of(r: &EstimationResult, h: &ChannelMatrix) -> Result<f64> {
    Ok(nmse_ratio(&r.channel_estimate.entries, &h.entries)?)
}

/// Linear NMSE after each of the first `max_iter` iterations; an early
/// stop carries the last value forward.
fn ratio_curve(r: &EstimationResult, h: &ChannelMatrix, max_iter: usize) -> Result<Vec<f64>> {
    let last = ratio_of(r, h)?;
    Ok((0..max_iter)
        .map(|i| r.nmse_by_iteration.get(i).map_or(last, |db| 10f64.powf(db / 10.0)))
        .collect())
}

struct Runner<'a> {
    spec: &'a ScenarioSpec,
    sim: &'a SimulationConfig,
    opts: RunOptions,
    out: ScenarioOutput,
}

impl Runner<'_> {
    fn paths(&self) -> usize {
        self.spec.overrides.paths.map_or(DEFAULT_PATHS, |l| l as usize)
    }

    fn n_bs_list(&self) -> Vec<usize> {
        match &self.spec.overrides.n_bs {
            Some(v) => v.iter().map(|n| *n as usize).collect(),
            None => vec![self.sim.system.n_bs],
        }
    }

    fn fc(&self) -> Option<f64> {
        self.spec.overrides.fc_hz.as_ref().map(|v| v[0])
    }

    fn iterations(&self) -> usize {
        self.spec
            .overrides
            .iterations
            .as_ref()
            .map_or(self.sim.training.omp_iterations, |v| v[0] as usize)
    }

    fn omp_options(&self, iterations: usize) -> OmpOptions {
        OmpOptions::new(iterations, self.sim.training.residual_tol)
    }

    fn betas(&self, default: &[f64]) -> Vec<f64> {
        self.spec.overrides.beta.clone().unwrap_or_else(|| default.to_vec())
    }

    /// Pilot lengths from `tau`, else `mu`, else the given ratios; sorted, deduplicated.
    fn tau_axis(&self, config: &SystemConfig, default_mu: &[f64]) -> Vec<usize> {
        let total = (config.n_bs * config.n_ue) as f64;
        let mut taus: Vec<usize> = match (&self.spec.overrides.tau, &self.spec.overrides.mu) {
            (Some(t), _) => t.iter().map(|v| *v as usize).collect(),
            (None, Some(m)) => m.iter().map(|mu| ((mu * total).round() as usize).max(1)).collect(),
            (None, None) => default_mu.iter().map(|mu| ((mu * total).round() as usize).max(1)).collect(),
        };
        taus.sort_unstable();
        taus.dedup();
        taus
    }

    fn single_tau(&self, config: &SystemConfig) -> Result<usize> {
        let o = &self.spec.overrides;
        if let Some(t) = &o.tau {
            return Ok(t[0] as usize);
        }
        if let Some(m) = &o.mu {
            return Ok(TrainingConfig::from_ratio(config, m[0], 1, 0, SnrMode::Noiseless)?.tau);
        }
        Ok(TrainingConfig::from_params(config, &self.sim.training, 0)?.tau)
    }

    /// Runs `f` for every trial in parallel; errors are counted, not fatal.
    fn trials<T: Send>(&mut self, label: &str, f: impl Fn(u64) -> Result<T> + Sync) -> Vec<T> {
        let total = self.spec.trials;
        let done = AtomicUsize::new(0);
        let step = (total / 10).max(1);
        let progress = self.opts.progress;
        let seed = self.spec.seed;
        let results: Vec<Result<T>> = (0..total as u64)
            .into_par_iter()
            .map(|t| {
                let r = f(derive_seed(seed, t));
                let n = done.fetch_add(1, Ordering::Relaxed) + 1;
                if progress && (n % step == 0 || n == total) {
                    eprintln!("  {label}: {n}/{total}");
                }
                r
            })
            .collect();
        let mut ok = Vec::with_capacity(total);
        let mut failed = 0;
        for r in results {
            match r {
                Ok(v) => ok.push(v),
                Err(e) => {
                    failed += 1;
                    if progress {
                        eprintln!("  {label}: trial failed: {e}");
                    }
                }
            }
        }
        self.out.failed_trials += failed;
        ok
    }

    fn push(&mut self, param: impl Into<String>, value: f64, metric: impl Into<String>, result: f64, trials: usize, started: Instant) {
        self.out.records.push(ResultRecord {
            scenario: self.spec.name.to_string(),
            param: param.into(),
            value,
            metric: metric.into(),
            result,
            trials,
            seconds: if self.opts.timing { started.elapsed().as_secs_f64() } else { 0.0 },
        });
    }

    fn push_failures(&mut self, param: &str, value: f64, ok: usize, started: Instant) {
        let failed = self.spec.trials - ok;
        if failed > 0 {
            self.push(param, value, "failed_trials", failed as f64, self.spec.trials, started);
        }
    }

    fn loc_demo(&mut self) -> Result<()> {
        let n_bs = self.spec.overrides.n_bs.as_ref().map_or(DEMO_N_BS, |v| v[0] as usize);
        let config = system_for(self.sim, self.fc(), Some(n_bs))?;
        let grid = SearchGrid::new(&self.sim.region, &config, self.sim.sensing.grid_rows)?;
        let snap = |c: &Coord| {
            let (i, j) = grid.nearest_index(c);
            grid.point(i, j)
        };
        let gains = DEMO_GAINS.iter().map(|(m, p)| Complex64::from_polar(*m, *p)).collect();
        let scatterers = DEMO_SCATTERERS.iter().map(snap).collect();
        let scene = Scene::new(&config, self.sim.region, snap(&DEMO_UE), scatterers, gains)?;
        let recon = Reconstructor::fft(&grid, &config)?;
        let truths = scene.sources();
        let started = Instant::now();

        let sim = self.sim;
        let runs = self.trials("loc-demo", |ts| {
            let loc = localize_scene(&scene, &config, sim, &recon, ts)?;
            let errs = cell_errors(&loc, &truths, &grid);
            Ok((loc, errs))
        });
        let n = runs.len();
        if let Some((loc, errs)) = runs.first() {
            let mut rng = substream(derive_seed(self.spec.seed, 0), S_SENSING);
            let (record, _) = sense_scene(&scene, &config, sim, &mut rng)?;
            self.out.theta = Some(recon.map(&record, &config)?);

            let cost: Vec<Vec<f64>> = truths
                .iter()
                .map(|t| loc.coordinates.iter().map(|e| t.distance(e).powi(2)).collect())
                .collect();
            let assign = hungarian(&cost);
            for (k, t) in truths.iter().enumerate() {
                let v = k as f64;
                self.push("source", v, "true_x_m", t.x_m, 1, started);
                self.push("source", v, "true_y_m", t.y_m, 1, started);
                self.push("source", v, "cell_error", errs[k] as f64, 1, started);
                if let Some(j) = assign[k] {
                    self.push("source", v, "est_x_m", loc.coordinates[j].x_m, 1, started);
                    self.push("source", v, "est_y_m", loc.coordinates[j].y_m, 1, started);
                }
            }
            let means: Vec<f64> = runs
                .iter()
                .map(|(_, e)| e.iter().sum::<usize>() as f64 / e.len() as f64)
                .collect();
            let max = runs.iter().flat_map(|(_, e)| e.iter()).copied().max().unwrap_or(0);
            let within = means.iter().filter(|m| **m <= 2.0).count() as f64 / n as f64;
            self.push("n_bs", n_bs as f64, "mean_cell_error", means.iter().sum::<f64>() / n as f64, n, started);
            self.push("n_bs", n_bs as f64, "max_cell_error", max as f64, n, started);
            self.push("n_bs", n_bs as f64, "frac_mean_within_2_cells", within, n, started);
        }
        self.push_failures("n_bs", n_bs as f64, n, started);
        Ok(())
    }

    fn loc_cdf(&mut self) -> Result<()> {
        let paths = self.paths();
        for n_bs in self.n_bs_list() {
            let config = system_for(self.sim, self.fc(), Some(n_bs))?;
            let grid = SearchGrid::new(&self.sim.region, &config, self.sim.sensing.grid_rows)?;
            let recon = Reconstructor::fft(&grid, &config)?;
            let penalty = self.sim.region.diagonal();
            let started = Instant::now();
            let sim = self.sim;
            let runs = self.trials(&format!("loc-cdf n_bs={n_bs}"), |ts| {
                let scene = scene_for_trial(sim, &config, ts, paths)?;
                let loc = localize_scene(&scene, &config, sim, &recon, ts)?;
                Ok(matched_squared_errors(&loc.coordinates, &scene.sources(), penalty))
            });
            let n = runs.len();
            // Per-trial error: sum of matched distances over all sources.
            let mut errors: Vec<f64> = runs.iter().map(|(sq, _)| sq.iter().map(|v| v.sqrt()).sum()).collect();
            errors.sort_by(f64::total_cmp);
            let unmatched: usize = runs.iter().map(|(_, u)| u).sum();
            let v = n_bs as f64;
            if !errors.is_empty() {
                for q in [0.1, 0.25, 0.5, 0.75, 0.9, 0.95] {
                    self.push("n_bs", v, format!("error_q{:02}_m", (q * 100.0_f64).round()), quantile(&errors, q), n, started);
                }
                let all: Vec<f64> = runs.iter().flat_map(|(sq, _)| sq.iter().copied()).collect();
                let rmse = (all.iter().sum::<f64>() / all.len().max(1) as f64).sqrt();
                self.push("n_bs", v, "rmse_m", rmse, n, started);
            }
            self.push("n_bs", v, "unmatched_paths", unmatched as f64, n, started);
            self.push_failures("n_bs", v, n, started);
        }
        Ok(())
    }

    fn loc_rmse_sweep(&mut self) -> Result<()> {
        let paths = self.paths();
        let freqs = self.spec.overrides.fc_hz.clone().unwrap_or_else(|| vec![3.5e9, 28e9]);
        for n_bs in self.n_bs_list() {
            for &fc in &freqs {
                let config = system_for(self.sim, Some(fc), Some(n_bs))?;
                let grid = SearchGrid::new(&self.sim.region, &config, self.sim.sensing.grid_rows)?;
                let recon = Reconstructor::fft(&grid, &config)?;
                let penalty = self.sim.region.diagonal();
                let started = Instant::now();
                let sim = self.sim;
                let runs = self.trials(&format!("loc-rmse-sweep n_bs={n_bs} fc={fc:e}"), |ts| {
                    let scene = scene_for_trial(sim, &config, ts, paths)?;
                    let loc = localize_scene(&scene, &config, sim, &recon, ts)?;
                    Ok(matched_squared_errors(&loc.coordinates, &scene.sources(), penalty))
                });
                let n = runs.len();
                let param = format!("n_bs={n_bs};fc_hz");
                let per_trial: Vec<f64> = runs
                    .iter()
                    .map(|(sq, _)| (sq.iter().sum::<f64>() / sq.len().max(1) as f64).sqrt())
                    .collect();
                let all: Vec<f64> = runs.iter().flat_map(|(sq, _)| sq.iter().copied()).collect();
                if !all.is_empty() {
                    let rmse = (all.iter().sum::<f64>() / all.len() as f64).sqrt();
                    self.push(param.as_str(), fc, "rmse_m", rmse, n, started);
                    self.push(param.as_str(), fc, "median_trial_rmse_m", median(&per_trial), n, started);
                }
                let unmatched: usize = runs.iter().map(|(_, u)| u).sum();
                self.push(param.as_str(), fc, "unmatched_paths", unmatched as f64, n, started);
                self.push_failures(&param, fc, n, started);
            }
        }
        Ok(())
    }

    /// Runs sequentially so the timings are not disturbed by other trials.
    fn loc_bench(&mut self) -> Result<()> {
        let etas = self.spec.overrides.eta.clone().unwrap_or_else(|| vec![1.0, 2.0, 3.0]);
        let config = system_for(self.sim, self.fc(), self.spec.overrides.n_bs.as_ref().map(|v| v[0] as usize))?;
        let paths = self.paths();
        let penalty = self.sim.region.diagonal();
        let scenes = self.spec.trials.min(BENCH_SCENES);
        for eta in etas {
            let started = Instant::now();
            let e = eta as usize;
            let rows = self.sim.sensing.grid_rows * e;
            let fast = Reconstructor::fft(&SearchGrid::new(&self.sim.region, &config, rows)?, &config)?;
            let brute = Reconstructor::Direct(SearchGrid::uniform(&self.sim.region, &config, e * config.n_bs, rows)?);
            let mut times = [0.0f64; 2];
            let mut sq = [Vec::new(), Vec::new()];
            for s in 0..scenes {
                let ts = derive_seed(self.spec.seed, s as u64);
                let scene = scene_for_trial(self.sim, &config, ts, paths)?;
                let mut rng = substream(ts, S_SENSING);
                let (record, reference) = sense_scene(&scene, &config, self.sim, &mut rng)?;
                for (k, recon) in [&fast, &brute].into_iter().enumerate() {
                    let mut reps = Vec::with_capacity(BENCH_REPETITIONS);
                    let mut last = None;
                    for _ in 0..BENCH_REPETITIONS {
                        let t0 = Instant::now();
                        let loc = localize_multipath(
                            &record,
                            &reference,
                            recon,
                            Some(paths),
                            self.sim.sensing.threshold_rel,
                            &config,
                        )?;
                        reps.push(t0.elapsed().as_secs_f64());
                        last = Some(loc);
                    }
                    times[k] += median(&reps) / scenes as f64;
                    if let Some(loc) = last {
                        sq[k].extend(matched_squared_errors(&loc.coordinates, &scene.sources(), penalty).0);
                    }
                }
                if self.opts.progress {
                    eprintln!("  loc-bench eta={eta}: scene {}/{scenes}", s + 1);
                }
            }
            let rmse = |v: &[f64]| (v.iter().sum::<f64>() / v.len().max(1) as f64).sqrt();
            self.push("eta", eta, "proposed_seconds", times[0], scenes, started);
            self.push("eta", eta, "brute_force_seconds", times[1], scenes, started);
            self.push("eta", eta, "speedup", times[1] / times[0], scenes, started);
            self.push("eta", eta, "proposed_rmse_m", rmse(&sq[0]), scenes, started);
            self.push("eta", eta, "brute_force_rmse_m", rmse(&sq[1]), scenes, started);
        }
        Ok(())
    }

    fn ce_vs_pilots(&mut self) -> Result<()> {
        let config = system_for(self.sim, self.fc(), self.spec.overrides.n_bs.as_ref().map(|v| v[0] as usize))?;
        let beta = self.betas(&[1.0])[0];
        let taus = self.tau_axis(&config, &[0.05, 0.1, 0.15, 0.2, 0.3, 0.4, 0.5]);
        let iters = self.iterations();
        let opts = self.omp_options(iters);
        let paths = self.paths();
        let sph = spherical_dictionary(&config, &self.sim.region, beta)?;
        let dft = dft_dictionary(&config, beta as usize)?;
        let grid = SearchGrid::new(&self.sim.region, &config, self.sim.sensing.grid_rows)?;
        let recon = Reconstructor::fft(&grid, &config)?;
        let methods = ["proposed", "proposed_sensed", "spherical", "dft"];
        let started = Instant::now();
        let sim = self.sim;
        let runs = self.trials("ce-nmse-vs-pilots", |ts| {
            let scene = scene_for_trial(sim, &config, ts, paths)?;
            let h = channel(&scene, &config)?;
            let exact = proposed_dictionary(&config, &scene.ue_centroid, &scene.scatterers)?;
            let loc = localize_scene(&scene, &config, sim, &recon, ts)?;
            let sensed = proposed_dictionary(&config, &loc.coordinates[0], &loc.coordinates[1..])?;
            let mut per_tau = Vec::with_capacity(taus.len());
            for &tau in &taus {
                let p = pilots(&config, sim, tau, &h, ts)?;
                let mut row = Vec::with_capacity(methods.len());
                for d in [&exact, &sensed, &sph, &dft] {
                    row.push(ratio_of(&estimate(&p, d, &h, opts)?, &h)?);
                }
                per_tau.push(row);
            }
            Ok(per_tau)
        });
        let n = runs.len();
        for (ti, &tau) in taus.iter().enumerate() {
            for (mi, m) in methods.iter().enumerate() {
                let ratios: Vec<f64> = runs.iter().map(|r| r[ti][mi]).collect();
                if let Some(db) = mean_nmse_db(&ratios) {
                    self.push("tau", tau as f64, format!("nmse_db:{m}"), db, n, started);
                }
            }
            self.push_failures("tau", tau as f64, n, started);
        }
        Ok(())
    }

    fn ce_vs_iters(&mut self) -> Result<()> {
        let config = system_for(self.sim, self.fc(), self.spec.overrides.n_bs.as_ref().map(|v| v[0] as usize))?;
        let beta = self.betas(&[1.0])[0];
        let tau = self.single_tau(&config)?;
        let mut iters: Vec<usize> = match &self.spec.overrides.iterations {
            Some(v) => v.iter().map(|i| *i as usize).collect(),
            None => vec![1, 2, 5, 10, 15, 20, 25, 30, 40, 50],
        };
        iters.sort_unstable();
        iters.dedup();
        let max_iter = *iters.last().expect("validated non-empty");
        let mut opts = self.omp_options(max_iter);
        opts.snapshots = true;
        let paths = self.paths();
        let sph = spherical_dictionary(&config, &self.sim.region, beta)?;
        let dft = dft_dictionary(&config, beta as usize)?;
        let methods = ["proposed", "spherical", "dft"];
        let started = Instant::now();
        let sim = self.sim;
        let runs = self.trials("ce-nmse-vs-iters", |ts| {
            let scene = scene_for_trial(sim, &config, ts, paths)?;
            let h = channel(&scene, &config)?;
            let exact = proposed_dictionary(&config, &scene.ue_centroid, &scene.scatterers)?;
            let p = pilots(&config, sim, tau, &h, ts)?;
            [&exact, &sph, &dft]
                .into_iter()
                .map(|d| ratio_curve(&estimate(&p, d, &h, opts)?, &h, max_iter))
                .collect::<Result<Vec<_>>>()
        });
        let n = runs.len();
        for &i in &iters {
            for (mi, m) in methods.iter().enumerate() {
                let ratios: Vec<f64> = runs.iter().map(|r| r[mi][i - 1]).collect();
                if let Some(db) = mean_nmse_db(&ratios) {
                    self.push("iterations", i as f64, format!("nmse_db:{m}"), db, n, started);
                }
            }
            self.push_failures("iterations", i as f64, n, started);
        }
        Ok(())
    }

    fn ce_oversampling(&mut self) -> Result<()> {
        let config = system_for(self.sim, self.fc(), self.spec.overrides.n_bs.as_ref().map(|v| v[0] as usize))?;
        let betas = self.betas(&[1.0, 2.0]);
        let tau = self.single_tau(&config)?;
        let opts = self.omp_options(self.iterations());
        let paths = self.paths();
        let baselines: Vec<(Dictionary, Dictionary)> = betas
            .iter()
            .map(|b| Ok((spherical_dictionary(&config, &self.sim.region, *b)?, dft_dictionary(&config, *b as usize)?)))
            .collect::<Result<_>>()?;
        let started = Instant::now();
        let sim = self.sim;
        let runs = self.trials("ce-oversampling", |ts| {
            let scene = scene_for_trial(sim, &config, ts, paths)?;
            let h = channel(&scene, &config)?;
            let exact = proposed_dictionary(&config, &scene.ue_centroid, &scene.scatterers)?;
            let p = pilots(&config, sim, tau, &h, ts)?;
            let proposed = ratio_of(&estimate(&p, &exact, &h, opts)?, &h)?;
            let mut rows = Vec::with_capacity(baselines.len());
            for (sph, dft) in &baselines {
                rows.push([
                    proposed,
                    ratio_of(&estimate(&p, sph, &h, opts)?, &h)?,
                    ratio_of(&estimate(&p, dft, &h, opts)?, &h)?,
                ]);
            }
            Ok(rows)
        });
        let n = runs.len();
        for (bi, &beta) in betas.iter().enumerate() {
            for (mi, m) in ["proposed", "spherical", "dft"].iter().enumerate() {
                let ratios: Vec<f64> = runs.iter().map(|r| r[bi][mi]).collect();
                if let Some(db) = mean_nmse_db(&ratios) {
                    self.push("beta", beta, format!("nmse_db:{m}"), db, n, started);
                }
            }
            self.push_failures("beta", beta, n, started);
        }
        Ok(())
    }

    fn ce_robustness(&mut self) -> Result<()> {
        let config = system_for(self.sim, self.fc(), self.spec.overrides.n_bs.as_ref().map(|v| v[0] as usize))?;
        let eps = self.spec.overrides.epsilon.clone().unwrap_or_else(|| vec![0.0, 0.1, 0.5]);
        let tau = self.single_tau(&config)?;
        let mut iters: Vec<usize> = match &self.spec.overrides.iterations {
            Some(v) => v.iter().map(|i| *i as usize).collect(),
            None => vec![self.sim.training.omp_iterations],
        };
        iters.sort_unstable();
        iters.dedup();
        let max_iter = *iters.last().expect("validated non-empty");
        let mut opts = self.omp_options(max_iter);
        opts.snapshots = iters.len() > 1;
        let paths = self.paths();
        let started = Instant::now();
        let sim = self.sim;
        // Per trial: the exact-location ratio, then one curve per ε.
        let runs = self.trials("ce-robustness", |ts| {
            let scene = scene_for_trial(sim, &config, ts, paths)?;
            let h = channel(&scene, &config)?;
            let p = pilots(&config, sim, tau, &h, ts)?;
            let mut rng = substream(ts, S_PERTURB);
            // One offset per source, scaled by ε, so the ε levels are paired.
            let offsets: Vec<(f64, f64)> = (0..=scene.scatterers.len())
                .map(|_| (rng.random_range(0.0..std::f64::consts::TAU), rng.random::<f64>().sqrt()))
                .collect();
            let run = |e: f64| -> Result<Vec<f64>> {
                let ue = perturb(&scene.ue_centroid, offsets[0].0, offsets[0].1, e);
                let sc: Vec<Coord> = scene
                    .scatterers
                    .iter()
                    .zip(&offsets[1..])
                    .map(|(c, (d, r))| perturb(c, *d, *r, e))
                    .collect();
                let d = proposed_dictionary(&config, &ue, &sc)?;
                let r = estimate(&p, &d, &h, opts)?;
                if opts.snapshots {
                    ratio_curve(&r, &h, max_iter)
                } else {
                    Ok(vec![ratio_of(&r, &h)?])
                }
            };
            let exact = *run(0.0)?.last().expect("one value");
            let curves = eps.iter().map(|e| run(*e)).collect::<Result<Vec<_>>>()?;
            Ok((exact, curves))
        });
        let n = runs.len();
        for (ei, &e) in eps.iter().enumerate() {
            let finals: Vec<f64> = runs.iter().map(|(_, c)| *c[ei].last().expect("non-empty")).collect();
            if let Some(db) = mean_nmse_db(&finals) {
                self.push("epsilon", e, "nmse_db", db, n, started);
                let dbs: Vec<f64> = finals.iter().map(|r| nfce::metrics::ratio_to_db(*r)).collect();
                self.push("epsilon", e, "median_nmse_db", median(&dbs), n, started);
                let not_worse = runs
                    .iter()
                    .zip(&finals)
                    .filter(|((exact, _), f)| *exact <= **f)
                    .count();
                self.push("epsilon", e, "frac_exact_not_worse", not_worse as f64 / n as f64, n, started);
            }
            if opts.snapshots {
                let param = format!("epsilon={e};iterations");
                for &i in &iters {
                    let ratios: Vec<f64> = runs.iter().map(|(_, c)| c[ei][i - 1]).collect();
                    if let Some(db) = mean_nmse_db(&ratios) {
                        self.push(param.as_str(), i as f64, "nmse_db", db, n, started);
                    }
                }
            }
            self.push_failures("epsilon", e, n, started);
        }
        Ok(())
    }

    /// Smallest pilot length on the axis whose mean NMSE reaches the target
    /// at some iteration count up to the budget, scanned upward per dictionary.
    fn ce_min_samples(&mut self) -> Result<()> {
        let config = system_for(self.sim, self.fc(), self.spec.overrides.n_bs.as_ref().map(|v| v[0] as usize))?;
        let betas = self.betas(&[2.0]);
        let taus = self.tau_axis(&config, &MIN_SAMPLES_MU);
        let max_iter = self
            .spec
            .overrides
            .iterations
            .as_ref()
            .map_or(MIN_SAMPLES_MAX_ITERATIONS, |v| v.iter().copied().max().unwrap_or(1) as usize);
        let mut opts = self.omp_options(max_iter);
        opts.snapshots = true;
        let paths = self.paths();
        let sim = self.sim;
        for beta in betas {
            let started = Instant::now();
            let sph = spherical_dictionary(&config, &sim.region, beta)?;
            let dft = dft_dictionary(&config, beta as usize)?;
            let mut found = [None; 3];
            let methods = ["proposed", "spherical", "dft"];
            for (mi, m) in methods.iter().enumerate() {
                for &tau in &taus {
                    let runs = self.trials(&format!("ce-min-samples beta={beta} {m} tau={tau}"), |ts| {
                        let scene = scene_for_trial(sim, &config, ts, paths)?;
                        let h = channel(&scene, &config)?;
                        let p = pilots(&config, sim, tau, &h, ts)?;
                        let r = match mi {
                            0 => estimate(&p, &proposed_dictionary(&config, &scene.ue_centroid, &scene.scatterers)?, &h, opts)?,
                            1 => estimate(&p, &sph, &h, opts)?,
                            _ => estimate(&p, &dft, &h, opts)?,
                        };
                        ratio_curve(&r, &h, max_iter)
                    });
                    let n = runs.len();
                    let param = format!("beta={beta};tau");
                    self.push_failures(&param, tau as f64, n, started);
                    // Mean over trials at each iteration count, then the best count.
                    let best = (0..max_iter)
                        .filter_map(|i| mean_nmse_db(&runs.iter().map(|r| r[i]).collect::<Vec<_>>()).map(|db| (i + 1, db)))
                        .min_by(|a, b| a.1.total_cmp(&b.1));
                    let Some((best_iter, db)) = best else { continue };
                    self.push(param.as_str(), tau as f64, format!("best_nmse_db:{m}"), db, n, started);
                    self.push(param.as_str(), tau as f64, format!("best_iterations:{m}"), best_iter as f64, n, started);
                    if db <= MIN_SAMPLES_TARGET_DB {
                        found[mi] = Some(tau);
                        break;
                    }
                }
            }
            let trials = self.spec.trials;
            for (mi, m) in methods.iter().enumerate() {
                self.push("beta", beta, format!("reached:{m}"), found[mi].is_some() as u8 as f64, trials, started);
                if let Some(tau) = found[mi] {
                    self.push("beta", beta, format!("min_tau:{m}"), tau as f64, trials, started);
                    let samples = tau * config.n_rf_bs;
                    self.push("beta", beta, format!("min_baseband_samples:{m}"), samples as f64, trials, started);
                }
            }
            if let (Some(p), Some(d)) = (found[0], found[2]) {
                self.push("beta", beta, "reduction_vs_dft", 1.0 - p as f64 / d as f64, trials, started);
            }
        }
        Ok(())
    }
}
