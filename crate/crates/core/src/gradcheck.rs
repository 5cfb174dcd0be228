//! Central finite-difference gradient checker.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Relative errors are measured against `max(|analytic|, |numeric|, FLOOR)`
/// so that coordinates with near-zero gradient are judged on absolute error.
pub const RELATIVE_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_relative_error: f64,
    /// Coordinate with the largest error, with its analytic and numeric values.
    pub worst: Option<(usize, f64, f64)>,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.checked > 0 && self.max_relative_error < self.tolerance
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_FLOOR)
}

/// Compares `analytic[i]` with `(f(x+h e_i) - f(x-h e_i)) / 2h` for every
/// `i` in `coords`.
pub fn grad_check<F>(mut f: F, params: &[f64], analytic: &[f64], coords: &[usize], h: f64, tol: f64) -> GradCheckReport
where
    F: FnMut(&[f64]) -> f64,
{
    assert_eq!(params.len(), analytic.len(), "gradient length mismatch");
    let mut x = params.to_vec();
    let mut report = GradCheckReport { checked: 0, max_relative_error: 0.0, worst: None, tolerance: tol };
    for &i in coords {
        let orig = x[i];
        x[i] = orig + h;
        let plus = f(&x);
        x[i] = orig - h;
        let minus = f(&x);
        x[i] = orig;
        let numeric = (plus - minus) / (2.0 * h);
        let err = relative_error(analytic[i], numeric);
        report.checked += 1;
        if err >= report.max_relative_error || report.worst.is_none() {
            report.max_relative_error = report.max_relative_error.max(err);
            report.worst = Some((i, analytic[i], numeric));
        }
    }
    report
}

/// Picks `per_tensor` distinct coordinates from each consecutive block of
/// the given sizes (all coordinates when a block is smaller).
pub fn sample_coords(block_sizes: &[usize], per_tensor: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    let mut offset = 0;
    for &size in block_sizes {
        let take = per_tensor.min(size);
        let mut picked: Vec<usize> = index::sample(&mut rng, size, take).into_vec();
        picked.sort_unstable();
        out.extend(picked.into_iter().map(|i| offset + i));
        offset += size;
    }
    out
}
