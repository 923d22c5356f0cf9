use nalgebra::SVD;

use super::FirFilter;
use crate::graph::ShiftOperator;
use crate::{Error, Matrix, Result, Vector};

pub const DESIGN_GRID_POINTS: usize = 500;

// Beyond this the fit is considered numerically unreliable.
const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Clone)]
pub struct LowpassDesign {
    pub filter: FirFilter,
    /// Fitting interval.
    pub interval: (f64, f64),
    /// Root-mean-square deviation from the ideal response on the grid.
    pub rms_error: f64,
}

/// Least-squares fit of the ideal low-pass `h(lambda) = [lambda < lambda_c]`
/// on a uniform grid over the shift's design interval.
///
/// The fit is solved in a Chebyshev basis on the interval and converted to
/// monomial taps afterwards; the monomial Vandermonde system is never formed.
pub fn design_lowpass_fir(shift: &ShiftOperator, order: usize, lambda_c: f64) -> Result<LowpassDesign> {
    if order == 0 {
        return Err(Error::arg("order", "FIR order must be at least 1"));
    }
    if order + 1 > DESIGN_GRID_POINTS {
        return Err(Error::arg("order", "order exceeds the design grid size"));
    }
    let (lo, hi) = shift.design_interval();
    if !(hi > lo) {
        return Err(Error::arg("shift", "degenerate spectral interval"));
    }
    let grid: Vec<f64> = (0..DESIGN_GRID_POINTS)
        .map(|i| lo + (hi - lo) * i as f64 / (DESIGN_GRID_POINTS - 1) as f64)
        .collect();
    let ideal = |l: f64| if l < lambda_c { 1.0 } else { 0.0 };

    // u = alpha lambda + beta maps [lo, hi] onto [-1, 1].
    let alpha = 2.0 / (hi - lo);
    let beta = -(hi + lo) / (hi - lo);
    let basis = Matrix::from_fn(grid.len(), order + 1, |r, c| chebyshev(c, alpha * grid[r] + beta));
    let target = Vector::from_iterator(grid.len(), grid.iter().map(|&l| ideal(l)));

    let svd = SVD::new(basis, true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let cond = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if cond > MAX_CONDITION {
        return Err(Error::IllConditioned(cond));
    }
    let coeffs = svd
        .solve(&target, 0.0)
        .map_err(|e| Error::arg("design", e.to_string()))?;

    let taps = chebyshev_to_monomial(coeffs.as_slice(), alpha, beta);
    let filter = FirFilter::new(taps)?;
    let sq: f64 = grid.iter().map(|&l| (filter.response(l) - ideal(l)).powi(2)).sum();
    Ok(LowpassDesign {
        filter,
        interval: (lo, hi),
        rms_error: (sq / grid.len() as f64).sqrt(),
    })
}

fn chebyshev(degree: usize, u: f64) -> f64 {
    let (mut prev, mut cur) = (1.0, u);
    match degree {
        0 => 1.0,
        _ => {
            for _ in 1..degree {
                let next = 2.0 * u * cur - prev;
                prev = cur;
                cur = next;
            }
            cur
        }
    }
}

/// Coefficients in `lambda` of `sum_j c_j T_j(alpha lambda + beta)`.
fn chebyshev_to_monomial(coeffs: &[f64], alpha: f64, beta: f64) -> Vec<f64> {
    let len = coeffs.len();
    let mut out = vec![0.0; len];
    let mut prev = vec![0.0; len];
    let mut cur = vec![0.0; len];
    prev[0] = 1.0;
    if len > 1 {
        cur[0] = beta;
        cur[1] = alpha;
    }
    for (j, &c) in coeffs.iter().enumerate() {
        let poly = if j == 0 { &prev } else { &cur };
        for (o, p) in out.iter_mut().zip(poly) {
            *o += c * p;
        }
        if j >= 1 && j + 1 < len {
            // T_{j+1} = 2 u T_j - T_{j-1}
            let mut next = vec![0.0; len];
            for d in 0..len {
                let mut v = 2.0 * beta * cur[d] - prev[d];
                if d > 0 {
                    v += 2.0 * alpha * cur[d - 1];
                }
                next[d] = v;
            }
            prev = std::mem::replace(&mut cur, next);
        }
    }
    out
}
