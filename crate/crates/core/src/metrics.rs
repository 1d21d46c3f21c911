//! Channel NMSE and matched localization RMSE.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::geometry::Coord;

/// Lower bound reported for an exact estimate.
pub const NMSE_FLOOR_DB: f64 = -300.0;

/// `‖Ĥ − H‖²_F / ‖H‖²_F`.
pub fn nmse_ratio(estimate: &DMatrix<Complex64>, truth: &DMatrix<Complex64>) -> Result<f64> {
    if estimate.shape() != truth.shape() {
        return Err(Error::Dimension {
            expected: truth.len(),
            got: estimate.len(),
            context: "estimate vs truth shape",
        });
    }
    let t: f64 = truth.iter().map(|v| v.norm_sqr()).sum();
    if t == 0.0 {
        return Err(Error::Domain("NMSE undefined for a zero channel".into()));
    }
    let e: f64 = estimate.iter().zip(truth.iter()).map(|(a, b)| (a - b).norm_sqr()).sum();
    Ok(e / t)
}

pub fn ratio_to_db(ratio: f64) -> f64 {
    if ratio <= 0.0 {
        NMSE_FLOOR_DB
    } else {
        (10.0 * ratio.log10()).max(NMSE_FLOOR_DB)
    }
}

pub fn nmse_db(estimate: &DMatrix<Complex64>, truth: &DMatrix<Complex64>) -> Result<f64> {
    Ok(ratio_to_db(nmse_ratio(estimate, truth)?))
}

/// Averages linear ratios, then converts to dB.
pub fn mean_nmse_db(ratios: &[f64]) -> Option<f64> {
    if ratios.is_empty() {
        return None;
    }
    Some(ratio_to_db(ratios.iter().sum::<f64>() / ratios.len() as f64))
}

/// Minimum-cost assignment for an `n × m` cost matrix (rows to columns).
/// Returns, for each row, its assigned column (`None` when `n > m`).
pub fn hungarian(cost: &[Vec<f64>]) -> Vec<Option<usize>> {
    let n = cost.len();
    let m = cost.first().map_or(0, Vec::len);
    if n == 0 || m == 0 {
        return vec![None; n];
    }
    // Square up with zero-cost padding.
    let size = n.max(m);
    let at = |i: usize, j: usize| if i < n && j < m { cost[i][j] } else { 0.0 };
    let inf = f64::INFINITY;
    let mut u = vec![0.0; size + 1];
    let mut v = vec![0.0; size + 1];
    let mut p = vec![0usize; size + 1];
    let mut way = vec![0usize; size + 1];
    for i in 1..=size {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; size + 1];
        let mut used = vec![false; size + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=size {
                if !used[j] {
                    let cur = at(i0 - 1, j - 1) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=size {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut out = vec![None; n];
    for j in 1..=size {
        let i = p[j];
        if i >= 1 && i <= n && j <= m {
            out[i - 1] = Some(j - 1);
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RmseReport {
    pub rmse_m: f64,
    /// Paths on either side left without a partner.
    pub unmatched: usize,
    pub matched: usize,
}

/// Squared errors of one trial after optimal matching; each unmatched path
/// contributes `penalty_m²`.
pub fn matched_squared_errors(estimates: &[Coord], truths: &[Coord], penalty_m: f64) -> (Vec<f64>, usize) {
    let cost: Vec<Vec<f64>> = truths
        .iter()
        .map(|t| estimates.iter().map(|e| t.distance(e).powi(2)).collect())
        .collect();
    let assign = hungarian(&cost);
    let mut sq = Vec::with_capacity(truths.len().max(estimates.len()));
    let mut used = 0;
    for (i, a) in assign.iter().enumerate() {
        match a {
            Some(j) => {
                sq.push(cost[i][*j]);
                used += 1;
            }
            None => sq.push(penalty_m * penalty_m),
        }
    }
    let extra = estimates.len().saturating_sub(used);
    sq.extend(std::iter::repeat_n(penalty_m * penalty_m, extra));
    (sq, truths.len() - used + extra)
}

/// Root mean squared coordinate error over all paths of all trials.
pub fn localization_rmse(estimates: &[Vec<Coord>], truths: &[Vec<Coord>], penalty_m: f64) -> Result<RmseReport> {
    if estimates.len() != truths.len() {
        return Err(Error::Dimension {
            expected: truths.len(),
            got: estimates.len(),
            context: "trials of estimates vs truths",
        });
    }
    let mut all = Vec::new();
    let mut unmatched = 0;
    for (e, t) in estimates.iter().zip(truths) {
        let (sq, u) = matched_squared_errors(e, t, penalty_m);
        all.extend(sq);
        unmatched += u;
    }
    if all.is_empty() {
        return Err(Error::Domain("RMSE over zero paths".into()));
    }
    Ok(RmseReport {
        rmse_m: (all.iter().sum::<f64>() / all.len() as f64).sqrt(),
        matched: all.len() - unmatched,
        unmatched,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nmse_examples() {
        let h = DMatrix::from_fn(4, 2, |i, j| Complex64::new(i as f64 + 1.0, j as f64));
        assert_eq!(nmse_db(&h, &h).unwrap(), NMSE_FLOOR_DB);
        assert!(nmse_db(&DMatrix::zeros(4, 2), &h).unwrap().abs() < 1e-12);
        let est = &h * Complex64::new(1.1, 0.0);
        assert!((nmse_db(&est, &h).unwrap() + 20.0).abs() < 1e-9);
        assert!(nmse_db(&h, &DMatrix::zeros(4, 2)).is_err());
        assert!((mean_nmse_db(&[0.01, 0.03]).unwrap() - 10.0 * 0.02f64.log10()).abs() < 1e-12);
    }

    #[test]
    fn rmse_examples() {
        let t = vec![vec![Coord::new(1.0, 5.0)]];
        assert_eq!(localization_rmse(&t, &t, 25.0).unwrap().rmse_m, 0.0);
        let e = vec![vec![Coord::new(1.3, 5.4)]];
        assert!((localization_rmse(&e, &t, 25.0).unwrap().rmse_m - 0.5).abs() < 1e-12);
        let truths = vec![vec![Coord::new(0.0, 3.0)], vec![Coord::new(0.0, 3.0)]];
        let ests = vec![vec![Coord::new(0.0, 3.0)], vec![Coord::new(1.0, 3.0)]];
        assert!((localization_rmse(&ests, &truths, 25.0).unwrap().rmse_m - 0.5f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn matching_is_order_free_and_penalizes_missing() {
        let truths = vec![Coord::new(0.0, 3.0), Coord::new(4.0, 9.0)];
        let ests = vec![Coord::new(4.0, 9.0), Coord::new(0.0, 3.0)];
        let (sq, u) = matched_squared_errors(&ests, &truths, 10.0);
        assert_eq!(u, 0);
        assert!(sq.iter().all(|v| *v == 0.0));
        let (sq, u) = matched_squared_errors(&ests[..1], &truths, 10.0);
        assert_eq!(u, 1);
        assert_eq!(sq.iter().sum::<f64>(), 100.0);
        let (_, u) = matched_squared_errors(&[ests[0], ests[1], ests[1]], &truths, 10.0);
        assert_eq!(u, 1);
    }

    #[test]
    fn hungarian_beats_greedy() {
        // Greedy row-by-row would pick (0,0) then (1,1) for cost 1 + 10.
        let cost = vec![vec![1.0, 2.0], vec![2.0, 10.0]];
        let a = hungarian(&cost);
        assert_eq!(a, vec![Some(1), Some(0)]);
    }
}
