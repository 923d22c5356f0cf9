use rand::Rng;

use super::seeding::{trial_rng, Stream};
use crate::filters::{normalize_input, GraphFilter, ShiftSource};
use crate::graph::Spectrum;
use crate::{Result, Vector};

/// Unit-norm signal with equal-magnitude graph Fourier coefficients and
/// random signs: `x = U g`, `|g_i| = 1 / sqrt(N)`.
pub fn make_input(spectrum: &Spectrum, seed: u64) -> Vector {
    let n = spectrum.eigenvalues.len();
    let mut rng = trial_rng(seed, 0, 0, Stream::Input);
    let mag = 1.0 / (n as f64).sqrt();
    let g = Vector::from_fn(n, |_, _| if rng.random::<bool>() { mag } else { -mag });
    &spectrum.eigenvectors * g
}

/// [`make_input`] scaled so the filter's states stay inside the quantizer
/// range (see [`normalize_input`]).
pub fn make_scaled_input(
    spectrum: &Spectrum,
    seed: u64,
    source: ShiftSource<'_>,
    filter: &GraphFilter,
    range: f64,
    arma_steps: usize,
) -> Result<(Vector, f64)> {
    normalize_input(source, filter, &make_input(spectrum, seed), range, arma_steps)
}
