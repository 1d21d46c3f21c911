use nalgebra::{DMatrix, DVector};
use nfce::channel::{channel, Scene};
use nfce::config::SnrMode;
use nfce::dictionary::{encode_binary, parse_binary};
use nfce::geometry::{spatial_response, steering_vector, ula_positions};
use nfce::omp::{omp, OmpOptions};
use nfce::reconstruction::{reconstruction_map_direct, ReconstructionPlan, SearchGrid};
use nfce::rng::substream;
use nfce::sensing::{build_hologram, measure_power, object_wave, ReferenceWave};
use nfce::training::{build_measurement, simulate_training, TrainingConfig};
use nfce::{Coord, Region, SystemConfig};
use num_complex::Complex64;
use proptest::prelude::*;
use rand::Rng;

fn coord() -> impl Strategy<Value = Coord> {
    (-5.0..5.0f64, 2.0..25.0f64).prop_map(|(x, y)| Coord::new(x, y))
}

fn complex() -> impl Strategy<Value = Complex64> {
    (-2.0..2.0f64, -2.0..2.0f64).prop_map(|(a, b)| Complex64::new(a, b))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn response_is_reciprocal_and_inverse_distance(a in coord(), b in coord(), k in 10.0..600.0f64) {
        prop_assume!(a.distance(&b) > 1e-3);
        let ab = spatial_response(&a, &b, k).unwrap();
        let ba = spatial_response(&b, &a, k).unwrap();
        prop_assert!((ab - ba).norm() < 1e-15);
        prop_assert!((ab.norm() * a.distance(&b) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn hologram_is_exact_without_noise(seed in any::<u64>(), ue in coord(), amp in 1.0..100.0f64) {
        let c = SystemConfig::new(28e9, 32, 2);
        let scene = Scene::new(&c, Region::default(), ue, vec![], vec![]).unwrap();
        let obj = object_wave(&scene, &c, None).unwrap();
        let r = ReferenceWave::random(amp, 32, &mut substream(seed, 0));
        let rec = build_hologram(&measure_power(&r, &obj).unwrap(), &r).unwrap();
        for n in 0..32 {
            let expected = 2.0 * (r.values[n].conj() * obj[n]).re + obj[n].norm_sqr();
            prop_assert!((rec.hologram[n] - expected).abs() < 1e-9 * amp * amp);
        }
    }

    #[test]
    fn measurements_are_linear_in_the_channel(seed in any::<u64>(), a in complex(), b in complex()) {
        let c = SystemConfig::new(28e9, 16, 2);
        let t = TrainingConfig::new(&c, 6, 4, seed, SnrMode::Noiseless).unwrap();
        let m = build_measurement(&c, &t).unwrap();
        let mut rng = substream(seed, 1);
        let mut draw = || {
            DMatrix::from_fn(16, 2, |_, _| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        };
        let (h1, h2) = (draw(), draw());
        let y = |h: DMatrix<Complex64>| {
            let ch = nfce::channel::ChannelMatrix::from_entries(h);
            simulate_training::<nfce::rng::SimRng>(&ch, &m, None).unwrap()
        };
        let lhs = y(&h1 * a + &h2 * b);
        let rhs = y(h1.clone()) * a + y(h2.clone()) * b;
        prop_assert!((&lhs - &rhs).norm() <= 1e-9 * (1.0 + lhs.norm()));
        // y = Φ vec(H) with column-major vec.
        let direct = &m.phi * DVector::from_column_slice(h1.as_slice());
        prop_assert!((direct - y(h1)).norm() < 1e-9);
    }

    #[test]
    fn omp_support_and_residuals(seed in any::<u64>(), iterations in 1usize..12) {
        let mut rng = substream(seed, 0);
        let a = DMatrix::from_fn(20, 40, |_, _| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
        let y = DVector::from_fn(20, |_, _| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
        let r = omp(&y, &a, OmpOptions::new(iterations, 0.0));
        let mut seen = r.support.clone();
        seen.sort_unstable();
        seen.dedup();
        prop_assert_eq!(seen.len(), r.support.len());
        prop_assert!(r.residual_history.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12)));
        prop_assert!(r.support.len() <= iterations);
    }

    #[test]
    fn binary_dictionary_round_trips(rows in 0usize..6, cols in 0usize..6, seed in any::<u64>()) {
        let mut rng = substream(seed, 0);
        let m = DMatrix::from_fn(rows, cols, |_, _| Complex64::new(rng.random(), rng.random()));
        prop_assert_eq!(parse_binary(&encode_binary(&m)).unwrap(), m);
    }
}

#[test]
fn fft_map_matches_direct_evaluation() {
    let region = Region::default();
    for n in [32usize, 64] {
        let c = SystemConfig::new(28e9, n, 1);
        let grid = SearchGrid::new(&region, &c, 6).unwrap();
        let plan = ReconstructionPlan::new(&grid, &c).unwrap();
        let mut rng = substream(3, n as u64);
        let r = ReferenceWave::random(10.0, n, &mut rng);
        let power: Vec<f64> = (0..n).map(|_| 100.0 + rng.random_range(-1.0..1.0)).collect();
        let rec = build_hologram(&power, &r).unwrap();
        let fast = plan.map(&rec).unwrap().theta;
        let slow = reconstruction_map_direct(&rec, &grid, &c).unwrap().theta;
        let scale = slow.max();
        assert!((fast - slow).amax() <= 1e-9 * scale);
    }
}

#[test]
fn reference_phases_are_circularly_uniform() {
    // The cross terms of ℏ̄ average out only if E[e^{2jξ}] = 0.
    let r = ReferenceWave::random(1.0, 20_000, &mut substream(11, 0));
    let n = r.len() as f64;
    let (c2, s2) = r.values.iter().fold((0.0, 0.0), |(c, s), v| {
        let xi = v.arg();
        (c + (2.0 * xi).cos(), s + (2.0 * xi).sin())
    });
    // Four standard errors of a mean of unit-variance-½ terms.
    let bound = 4.0 * (0.5 / n).sqrt();
    assert!((c2 / n).abs() < bound && (s2 / n).abs() < bound, "{} {}", c2 / n, s2 / n);
}

#[test]
fn los_channel_matches_closed_form() {
    let c = SystemConfig::new(28e9, 8, 2);
    let ue = Coord::new(0.3, 4.0);
    let scene = Scene::new(&c, Region::default(), ue, vec![], vec![]).unwrap();
    let h = channel(&scene, &c).unwrap().entries;
    let bs = ula_positions(8, c.antenna_spacing_m);
    for (m, e) in scene.ue_elements.iter().enumerate() {
        let g = steering_vector(e, &bs, c.wavenumber).unwrap();
        assert!((h.column(m) - g).norm() < 1e-12);
    }
}
