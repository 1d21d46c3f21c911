//! Planar geometry and the spherical-wave point response.
//!
//! All coordinates are in meters in the plane of the arrays. The BS array
//! lies on the x-axis, and the half-plane `y > 0` holds the UE and scatterers.

use nalgebra::DVector;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coord {
    pub x_m: f64,
    pub y_m: f64,
}

impl Coord {
    pub const fn new(x_m: f64, y_m: f64) -> Self {
        Self { x_m, y_m }
    }

    pub fn distance(&self, other: &Coord) -> f64 {
        (self.x_m - other.x_m).hypot(self.y_m - other.y_m)
    }

    pub fn norm(&self) -> f64 {
        self.x_m.hypot(self.y_m)
    }

    pub fn is_finite(&self) -> bool {
        self.x_m.is_finite() && self.y_m.is_finite()
    }

    pub fn offset(&self, dx: f64, dy: f64) -> Coord {
        Coord::new(self.x_m + dx, self.y_m + dy)
    }
}

/// Axis-aligned rectangle `[x_low, x_high] × [y_low, y_high]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Region {
    pub x_low: f64,
    pub x_high: f64,
    pub y_low: f64,
    pub y_high: f64,
}

impl Default for Region {
    fn default() -> Self {
        Self {
            x_low: -5.0,
            x_high: 5.0,
            y_low: 2.0,
            y_high: 25.0,
        }
    }
}

impl Region {
    pub fn validate(&self) -> Result<()> {
        let vals = [self.x_low, self.x_high, self.y_low, self.y_high];
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(Error::Argument("region bounds must be finite".into()));
        }
        if self.x_high <= self.x_low || self.y_high <= self.y_low {
            return Err(Error::Argument(format!(
                "degenerate region [{}, {}] x [{}, {}]",
                self.x_low, self.x_high, self.y_low, self.y_high
            )));
        }
        if self.y_low <= 0.0 {
            return Err(Error::Argument(format!(
                "region must lie in front of the array (y_low = {} <= 0)",
                self.y_low
            )));
        }
        Ok(())
    }

    pub fn contains(&self, c: &Coord) -> bool {
        c.x_m >= self.x_low && c.x_m <= self.x_high && c.y_m >= self.y_low && c.y_m <= self.y_high
    }

    pub fn center(&self) -> Coord {
        Coord::new(
            0.5 * (self.x_low + self.x_high),
            0.5 * (self.y_low + self.y_high),
        )
    }

    pub fn diagonal(&self) -> f64 {
        (self.x_high - self.x_low).hypot(self.y_high - self.y_low)
    }
}

/// Spherical-wave response `e^{-jκd}/d` between two points.
pub fn spatial_response(src: &Coord, dst: &Coord, wavenumber: f64) -> Result<Complex64> {
    let d = src.distance(dst);
    if d == 0.0 || !d.is_finite() {
        return Err(Error::Domain(format!(
            "spatial response undefined for distance {d} between {src:?} and {dst:?}"
        )));
    }
    Ok(Complex64::from_polar(1.0 / d, -wavenumber * d))
}

/// `n` points on the x-axis centered at the origin with uniform spacing.
pub fn ula_positions(n: usize, spacing_m: f64) -> Vec<Coord> {
    ula_positions_at(n, spacing_m, Coord::new(0.0, 0.0))
}

/// A ULA parallel to the x-axis centered at `center`.
pub fn ula_positions_at(n: usize, spacing_m: f64, center: Coord) -> Vec<Coord> {
    let mid = (n as f64 - 1.0) / 2.0;
    (0..n)
        .map(|i| center.offset((i as f64 - mid) * spacing_m, 0.0))
        .collect()
}

/// Near-field steering vector of `array` toward `target`.
pub fn steering_vector(target: &Coord, array: &[Coord], wavenumber: f64) -> Result<DVector<Complex64>> {
    let mut out = DVector::zeros(array.len());
    for (slot, element) in out.iter_mut().zip(array) {
        *slot = spatial_response(target, element, wavenumber)?;
    }
    Ok(out)
}

/// Kronecker product `a ⊗ b` of two vectors (index `i * b.len() + j`).
pub fn kron_vec(a: &DVector<Complex64>, b: &DVector<Complex64>) -> DVector<Complex64> {
    let mut out = DVector::zeros(a.len() * b.len());
    for (i, ai) in a.iter().enumerate() {
        for (j, bj) in b.iter().enumerate() {
            out[i * b.len() + j] = ai * bj;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn close(a: Complex64, b: Complex64, tol: f64) -> bool {
        (a - b).norm() <= tol
    }

    #[test]
    fn response_unit_distance_full_cycle() {
        let g = spatial_response(&Coord::new(0.0, 1.0), &Coord::new(0.0, 0.0), 2.0 * PI).unwrap();
        assert!(close(g, Complex64::new(1.0, 0.0), 1e-12));
        let g = spatial_response(&Coord::new(0.0, 2.0), &Coord::new(0.0, 0.0), PI).unwrap();
        assert!(close(g, Complex64::new(0.5, 0.0), 1e-12));
    }

    #[test]
    fn response_magnitude_345() {
        for k in [0.3, 1.0, 17.0, 586.0] {
            let g = spatial_response(&Coord::new(3.0, 4.0), &Coord::new(0.0, 0.0), k).unwrap();
            assert!((g.norm() - 0.2).abs() < 1e-15);
        }
    }

    #[test]
    fn coincident_points_are_a_domain_error() {
        let p = Coord::new(1.0, 2.0);
        assert!(matches!(spatial_response(&p, &p, 1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn ula_layouts() {
        let s = 0.25;
        let two = ula_positions(2, s);
        assert_eq!(two[0].x_m, -s / 2.0);
        assert_eq!(two[1].x_m, s / 2.0);
        let three = ula_positions(3, s);
        assert_eq!(
            three.iter().map(|c| c.x_m).collect::<Vec<_>>(),
            vec![-s, 0.0, s]
        );
        assert!(three.iter().all(|c| c.y_m == 0.0));
    }

    #[test]
    fn ula_aperture_at_28ghz() {
        let lambda = crate::SPEED_OF_LIGHT / 28e9;
        let pos = ula_positions(256, lambda / 2.0);
        let aperture = pos[255].x_m - pos[0].x_m;
        assert!((aperture - 255.0 * lambda / 2.0).abs() < 1e-12);
        assert!((aperture - 1.366).abs() < 1e-3);
    }

    #[test]
    fn steering_vector_symmetry_and_single_element() {
        let k = 2.0 * PI / 0.01;
        let arr = ula_positions(2, 0.5);
        let v = steering_vector(&Coord::new(0.0, 3.0), &arr, k).unwrap();
        assert!(close(v[0], v[1], 1e-14));

        let one = [Coord::new(0.3, 0.0)];
        let t = Coord::new(1.0, 2.0);
        let v = steering_vector(&t, &one, k).unwrap();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0], spatial_response(&t, &one[0], k).unwrap());
    }

    #[test]
    fn steering_vector_matches_element_loop() {
        let lambda = crate::SPEED_OF_LIGHT / 28e9;
        let k = 2.0 * PI / lambda;
        let arr = ula_positions(256, lambda / 2.0);
        let target = Coord::new(0.0, 10.0);
        let v = steering_vector(&target, &arr, k).unwrap();
        for (n, e) in arr.iter().enumerate() {
            let d = ((target.x_m - e.x_m).powi(2) + target.y_m.powi(2)).sqrt();
            let expect = Complex64::new((k * d).cos(), -(k * d).sin()) / d;
            // one ulp of d is ~1e-12 rad of phase at this wavenumber
            assert!(close(v[n], expect, 1e-12));
        }
    }

    #[test]
    fn region_validation() {
        assert!(Region::default().validate().is_ok());
        let bad = Region {
            y_low: -1.0,
            ..Region::default()
        };
        assert!(bad.validate().is_err());
        let flat = Region {
            x_high: -5.0,
            ..Region::default()
        };
        assert!(flat.validate().is_err());
    }
}
