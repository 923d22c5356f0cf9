//! Brute-force and statistical references for the analytic machinery.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::seeding::{trial_rng, Stream};
use crate::design::SourceModel;
use crate::filters::{run_arma_on, run_fir_on, FeedbackPlan, GraphFilter, ShiftSource, StateQuantizer};
use crate::graph::ResModel;
use crate::quantizer::QuantizationResult;
use crate::{Error, Matrix, Result, Vector};

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub mean: f64,
    pub std_err: f64,
    pub trials: usize,
}

impl McEstimate {
    fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = if xs.len() > 1 {
            xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        McEstimate {
            mean,
            std_err: (var / n).sqrt(),
            trials: xs.len(),
        }
    }

    /// `|mean - value| / std_err` (0 when both agree exactly).
    pub fn z_score(&self, value: f64) -> f64 {
        let d = (self.mean - value).abs();
        if d == 0.0 {
            0.0
        } else {
            d / self.std_err
        }
    }
}

/// Replaces quantization by additive i.i.d. uniform noise of a prescribed
/// variance per stage, optionally only at one stage.
pub struct NoiseInjector {
    half_widths: Vec<f64>,
    only: Option<usize>,
    rng: ChaCha8Rng,
}

impl NoiseInjector {
    pub fn new(variances: &[f64], only: Option<usize>, rng: ChaCha8Rng) -> Self {
        NoiseInjector {
            half_widths: variances.iter().map(|v| (3.0 * v).sqrt()).collect(),
            only,
            rng,
        }
    }
}

impl StateQuantizer for NoiseInjector {
    fn quantize(&mut self, stage: usize, w: &Vector) -> QuantizationResult {
        let h = self.half_widths[stage];
        let active = self.only.is_none_or(|o| o == stage) && h > 0.0;
        let error = Vector::from_fn(w.len(), |_, _| if active { self.rng.random_range(-h..h) } else { 0.0 });
        QuantizationResult {
            quantized: w + &error,
            error,
            dither: None,
            overflow_count: 0,
        }
    }
}

/// Noise-only simulation setup for [`mc_zeta`].
pub struct NoiseOnlySpec<'a> {
    pub source: ShiftSource<'a>,
    pub filter: &'a GraphFilter,
    pub plan: &'a FeedbackPlan,
    /// Noise variance per stage (FIR step or ARMA branch).
    pub variances: Vec<f64>,
    /// Inject noise only at this stage.
    pub only_source: Option<usize>,
    /// ARMA steps before the output is read.
    pub arma_steps: usize,
}

/// Empirical output noise power `||y_q||^2 / N` with a zero input.
pub fn mc_zeta(spec: &NoiseOnlySpec<'_>, trials: usize, seed: u64) -> Result<McEstimate> {
    let n = spec.source.node_count();
    if spec.variances.len() != spec.filter.stages() {
        return Err(Error::DimensionMismatch {
            expected: spec.filter.stages(),
            got: spec.variances.len(),
        });
    }
    if trials == 0 {
        return Err(Error::arg("trials", "must be at least 1"));
    }
    let x = Vector::zeros(n);
    let samples: Vec<f64> = (0..trials as u64)
        .into_par_iter()
        .map(|t| {
            let mut topo = trial_rng(seed, 0, t, Stream::Topology);
            let mut q = NoiseInjector::new(&spec.variances, spec.only_source, trial_rng(seed, 0, t, Stream::Noise));
            let y = match spec.filter {
                GraphFilter::Fir(fir) => {
                    let seq = spec.source.draw(fir.order(), &mut topo);
                    run_fir_on(&seq, fir, &x, &mut q, spec.plan)?.0
                }
                GraphFilter::Arma(arma) => {
                    let seq = spec.source.draw(spec.arma_steps, &mut topo);
                    let (ys, _) = run_arma_on(&seq, arma, &x, &mut q, spec.plan)?;
                    ys.last().cloned().unwrap_or_else(|| Vector::zeros(n))
                }
            };
            Ok(y.norm_squared() / n as f64)
        })
        .collect::<Result<_>>()?;
    Ok(McEstimate::from_samples(&samples))
}

/// Entrywise sample mean and standard error of `f` over `trials` draws.
pub fn mc_matrix_mean<F>(trials: usize, seed: u64, f: F) -> (Matrix, Matrix)
where
    F: Fn(&mut ChaCha8Rng) -> Matrix + Sync,
{
    let samples: Vec<Matrix> = (0..trials as u64)
        .into_par_iter()
        .map(|t| f(&mut trial_rng(seed, 0, t, Stream::Topology)))
        .collect();
    let count = samples.len() as f64;
    let mut mean = samples[0].clone() * 0.0;
    for s in &samples {
        mean += s;
    }
    mean /= count;
    let mut var = mean.clone() * 0.0;
    for s in &samples {
        let d = s - &mean;
        var += d.component_mul(&d);
    }
    let se = if samples.len() > 1 {
        (var / ((count - 1.0) * count)).map(f64::sqrt)
    } else {
        var
    };
    (mean, se)
}

/// Monte Carlo estimate of `E[S_t M S_t]` with entrywise standard errors.
pub fn mc_expected_sms(model: &ResModel, m: &Matrix, trials: usize, seed: u64) -> (Matrix, Matrix) {
    mc_matrix_mean(trials, seed, |rng| {
        let s = model.sample_with_mask(rng).shift;
        s.matrix() * m * s.matrix()
    })
}

/// Largest edge count accepted by [`enumerate_expected_sms`].
pub const MAX_ENUMERATED_EDGES: usize = 20;

/// `E[S_t M S_t]` by summing over every survival mask.
pub fn enumerate_expected_sms(model: &ResModel, m: &Matrix) -> Result<Matrix> {
    let edges = model.graph().edge_count();
    if edges > MAX_ENUMERATED_EDGES {
        return Err(Error::arg(
            "model",
            format!("{edges} edges exceed the enumeration limit {MAX_ENUMERATED_EDGES}"),
        ));
    }
    let p = model.p();
    let n = model.node_count();
    let mut acc = Matrix::zeros(n, n);
    let mut mask = vec![false; edges];
    for bits in 0u64..(1u64 << edges) {
        let mut weight = 1.0;
        for (e, slot) in mask.iter_mut().enumerate() {
            *slot = bits >> e & 1 == 1;
            weight *= if *slot { p } else { 1.0 - p };
        }
        if weight == 0.0 {
            continue;
        }
        let s = model.shift_for_mask(&mask);
        acc += (s.matrix() * m * s.matrix()) * weight;
    }
    Ok(acc)
}

/// Noise power of `plan` evaluated with full matrices:
/// `sum_k sigma2_k / N * tr(G_k (M2_k - T_k D_k - D_k T_k + D_k^2))`.
pub fn matrix_objective(sources: &[SourceModel], plan: &FeedbackPlan) -> f64 {
    let n = plan.nodes();
    sources
        .iter()
        .enumerate()
        .map(|(k, s)| {
            let d = Matrix::from_diagonal(&plan.weights(k));
            let inner = &s.m2 - &s.t * &d - &d * &s.t + &d * &d;
            s.sigma2 / n as f64 * (&s.g * inner).trace()
        })
        .sum()
}

/// Gradient of [`matrix_objective`] with respect to every entry of `Theta`
/// (nodes x stages): `-2 sigma2_k / N [G_k (T_k - D_k)]_ii`.
pub fn matrix_gradient(sources: &[SourceModel], plan: &FeedbackPlan) -> Matrix {
    let n = plan.nodes();
    let mut grad = Matrix::zeros(n, sources.len());
    for (k, s) in sources.iter().enumerate() {
        let d = Matrix::from_diagonal(&plan.weights(k));
        let prod = &s.g * (&s.t - d);
        for i in 0..n {
            grad[(i, k)] = -2.0 * s.sigma2 / n as f64 * prod[(i, i)];
        }
    }
    grad
}

/// Central finite differences of `f` at `x`.
pub fn finite_difference_gradient(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + h;
            let up = f(&probe);
            probe[i] = x[i] - h;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Result of [`grid_search_alpha`].
#[derive(Debug, Clone, PartialEq)]
pub struct SearchResult {
    pub params: Vec<f64>,
    pub value: f64,
    pub evaluations: usize,
}

/// Minimizes `objective` inside the box `bounds`.
///
/// Each coordinate is first scanned over its whole interval at spacing
/// `step` (others held fixed), repeating until a full sweep changes
/// nothing. A compass search with halving steps then refines the point
/// down to `1e-12`.
pub fn grid_search_alpha(objective: impl Fn(&[f64]) -> f64, bounds: &[(f64, f64)], step: f64) -> SearchResult {
    let mut x: Vec<f64> = bounds.iter().map(|&(lo, hi)| 0.0_f64.clamp(lo, hi)).collect();
    let mut best = objective(&x);
    let mut evaluations = 1;

    for _sweep in 0..50 {
        let mut changed = false;
        for (i, &(lo, hi)) in bounds.iter().enumerate() {
            let points = ((hi - lo) / step).floor() as usize;
            let current = x[i];
            let mut arg = current;
            for j in 0..=points {
                x[i] = lo + j as f64 * step;
                let v = objective(&x);
                evaluations += 1;
                if v < best {
                    best = v;
                    arg = x[i];
                }
            }
            x[i] = arg;
            changed |= arg != current;
        }
        if !changed {
            break;
        }
    }

    let mut h = step;
    while h > 1e-12 {
        let mut improved = false;
        for (i, &(lo, hi)) in bounds.iter().enumerate() {
            for dir in [1.0, -1.0] {
                let old = x[i];
                x[i] = (old + dir * h).clamp(lo, hi);
                let v = objective(&x);
                evaluations += 1;
                if v < best {
                    best = v;
                    improved = true;
                } else {
                    x[i] = old;
                }
            }
        }
        if !improved {
            h /= 2.0;
        }
    }
    SearchResult {
        params: x,
        value: best,
        evaluations,
    }
}
