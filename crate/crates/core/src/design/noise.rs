use serde::{Deserialize, Serialize};

use super::gram::{expected_grams, fir_subfilter_gram};
use super::gramian::{observability_gramian, stochastic_gramian_with, Gramian, DEFAULT_GRAMIAN_TOL};
use super::kernel::kernel_tensor;
use crate::filters::{ArmaFilter, FeedbackMode, FeedbackPlan, FirFilter};
use crate::graph::{ResModel, ShiftOperator};
use crate::{Error, Matrix, Result};

/// Quadratic noise model of one noise source (an FIR step or an ARMA branch).
///
/// With diagonal feedback `D = diag(alpha)` the output noise power is
/// `zeta = sigma2 / N * tr(G (M2 - T D - D T + D^2))`, which expands to
/// `sigma2 / N * (tr(G M2) - 2 sum_i [G T]_ii alpha_i + sum_i G_ii alpha_i^2)`.
#[derive(Debug, Clone)]
pub struct SourceModel {
    /// Propagation Gram (FIR) or Gramian (ARMA).
    pub g: Matrix,
    /// Matrix the feedback tries to cancel: `S`, `psi S` or their means.
    pub t: Matrix,
    /// Second moment of `T`: `S^2`, `psi^2 S^2`, or expectations.
    pub m2: Matrix,
    pub sigma2: f64,
}

impl SourceModel {
    /// `tr(G M2)`.
    pub fn original_gain(&self) -> f64 {
        trace_of_product(&self.g, &self.m2)
    }

    fn gt_diag(&self) -> Vec<f64> {
        let n = self.g.nrows();
        (0..n).map(|i| self.g.row(i).dot(&self.t.column(i).transpose())).collect()
    }

    /// `2 sum_i [G T]_ii alpha_i - sum_i G_ii alpha_i^2`.
    pub fn reduction(&self, alpha: &[f64]) -> f64 {
        self.gt_diag()
            .iter()
            .zip(alpha)
            .enumerate()
            .map(|(i, (gt, a))| 2.0 * gt * a - self.g[(i, i)] * a * a)
            .sum()
    }

    /// Per-node minimizer `[G T]_ii / G_ii`; zero where `G_ii` vanishes.
    pub fn optimal_alpha(&self) -> Vec<f64> {
        let scale = self.g.diagonal().amax();
        self.gt_diag()
            .iter()
            .enumerate()
            .map(|(i, gt)| {
                let gii = self.g[(i, i)];
                if gii <= degenerate_floor(scale) {
                    0.0
                } else {
                    gt / gii
                }
            })
            .collect()
    }
}

fn degenerate_floor(scale: f64) -> f64 {
    1e-14 * scale.max(f64::MIN_POSITIVE)
}

fn trace_of_product(a: &Matrix, b: &Matrix) -> f64 {
    a.component_mul(&b.transpose()).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseModelKind {
    FirDeterministic,
    ArmaDeterministic,
    FirStochastic,
    ArmaStochastic,
}

/// Noise sources of one filter realization, in stage order.
#[derive(Debug, Clone)]
pub struct NoiseModel {
    pub kind: NoiseModelKind,
    pub nodes: usize,
    pub sources: Vec<SourceModel>,
    /// Per-branch Gramians for ARMA models.
    pub gramians: Vec<Gramian>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceNoise {
    /// Stage (FIR source `n_k`) or branch index, zero-based.
    pub index: usize,
    pub sigma2: f64,
    pub original_gain: f64,
    pub reduction: f64,
    pub zeta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoisePrediction {
    pub kind: NoiseModelKind,
    pub nodes: usize,
    pub mode: FeedbackMode,
    pub sources: Vec<SourceNoise>,
    /// Output noise power without feedback.
    pub zeta_off: f64,
    /// Total mitigation `I(Theta)` in noise-power units.
    pub mitigation: f64,
    pub zeta: f64,
}

fn broadcast(sigmas: &[f64], stages: usize) -> Result<Vec<f64>> {
    let v = match sigmas.len() {
        1 => vec![sigmas[0]; stages],
        l if l == stages => sigmas.to_vec(),
        l => return Err(Error::DimensionMismatch { expected: stages, got: l }),
    };
    if v.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
        return Err(Error::arg("sigmas", "noise variances must be finite and nonnegative"));
    }
    Ok(v)
}

impl NoiseModel {
    pub fn fir_deterministic(shift: &ShiftOperator, fir: &FirFilter, sigmas: &[f64]) -> Result<Self> {
        let sigmas = broadcast(sigmas, fir.order())?;
        let s = shift.matrix();
        let s2 = s * s;
        let sources = (1..=fir.order())
            .map(|k| {
                Ok(SourceModel {
                    g: fir_subfilter_gram(shift, fir, k)?,
                    t: s.clone(),
                    m2: s2.clone(),
                    sigma2: sigmas[k - 1],
                })
            })
            .collect::<Result<_>>()?;
        Ok(NoiseModel {
            kind: NoiseModelKind::FirDeterministic,
            nodes: shift.node_count(),
            sources,
            gramians: Vec::new(),
        })
    }

    pub fn fir_stochastic(model: &ResModel, fir: &FirFilter, sigmas: &[f64]) -> Result<Self> {
        let sigmas = broadcast(sigmas, fir.order())?;
        let kernel = kernel_tensor(model);
        let m2 = kernel.expected_square();
        let sources = expected_grams(&kernel, fir)
            .into_iter()
            .zip(sigmas)
            .map(|(g, sigma2)| SourceModel {
                g,
                t: kernel.mean().clone(),
                m2: m2.clone(),
                sigma2,
            })
            .collect();
        Ok(NoiseModel {
            kind: NoiseModelKind::FirStochastic,
            nodes: model.node_count(),
            sources,
            gramians: Vec::new(),
        })
    }

    pub fn arma_deterministic(shift: &ShiftOperator, arma: &ArmaFilter, sigmas: &[f64], tol: f64) -> Result<Self> {
        arma.check_stable(shift.rho())?;
        let sigmas = broadcast(sigmas, arma.branch_count())?;
        let s = shift.matrix();
        let s2 = s * s;
        let mut sources = Vec::new();
        let mut gramians = Vec::new();
        for (b, sigma2) in arma.branches().iter().zip(sigmas) {
            let w = observability_gramian(shift, b.psi, tol)?;
            sources.push(SourceModel {
                g: w.matrix.clone(),
                t: s * b.psi,
                m2: &s2 * (b.psi * b.psi),
                sigma2,
            });
            gramians.push(w);
        }
        Ok(NoiseModel {
            kind: NoiseModelKind::ArmaDeterministic,
            nodes: shift.node_count(),
            sources,
            gramians,
        })
    }

    pub fn arma_stochastic(model: &ResModel, arma: &ArmaFilter, sigmas: &[f64], tol: f64) -> Result<Self> {
        arma.check_stable(model.rho())?;
        let sigmas = broadcast(sigmas, arma.branch_count())?;
        let kernel = kernel_tensor(model);
        let m2 = kernel.expected_square();
        let mut sources = Vec::new();
        let mut gramians = Vec::new();
        for (b, sigma2) in arma.branches().iter().zip(sigmas) {
            let w = stochastic_gramian_with(&kernel, model.rho(), b.psi, tol)?;
            sources.push(SourceModel {
                g: w.matrix.clone(),
                t: kernel.mean() * b.psi,
                m2: &m2 * (b.psi * b.psi),
                sigma2,
            });
            gramians.push(w);
        }
        Ok(NoiseModel {
            kind: NoiseModelKind::ArmaStochastic,
            nodes: model.node_count(),
            sources,
            gramians,
        })
    }

    pub fn stages(&self) -> usize {
        self.sources.len()
    }

    fn scale(&self, src: &SourceModel) -> f64 {
        src.sigma2 / self.nodes as f64
    }

    pub fn predict(&self, plan: &FeedbackPlan) -> Result<NoisePrediction> {
        plan.check_dims(self.nodes, self.stages())?;
        let mut sources = Vec::with_capacity(self.stages());
        let (mut zeta_off, mut mitigation, mut zeta) = (0.0, 0.0, 0.0);
        for (k, src) in self.sources.iter().enumerate() {
            let gain = src.original_gain();
            let reduction = if plan.is_off() {
                0.0
            } else {
                src.reduction(plan.weights(k).as_slice())
            };
            let c = self.scale(src);
            let z = (c * (gain - reduction)).max(0.0);
            zeta_off += c * gain;
            mitigation += c * reduction;
            zeta += z;
            sources.push(SourceNoise {
                index: k,
                sigma2: src.sigma2,
                original_gain: gain,
                reduction,
                zeta: z,
            });
        }
        Ok(NoisePrediction {
            kind: self.kind,
            nodes: self.nodes,
            mode: plan.mode(),
            sources,
            zeta_off,
            mitigation,
            zeta,
        })
    }

    /// Total predicted noise power of `plan`.
    pub fn objective(&self, plan: &FeedbackPlan) -> Result<f64> {
        Ok(self.predict(plan)?.zeta)
    }

    /// Gradient of the total noise power with respect to the free weights
    /// of `plan` (same layout as [`FeedbackPlan::params`]).
    pub fn gradient(&self, plan: &FeedbackPlan) -> Result<Vec<f64>> {
        plan.check_dims(self.nodes, self.stages())?;
        let n = self.nodes;
        // d zeta / d theta_{ik} = c_k (2 G_ii theta_ik - 2 [G T]_ii)
        let mut full = Matrix::zeros(n, self.stages());
        for (k, src) in self.sources.iter().enumerate() {
            let c = self.scale(src);
            let gt = src.gt_diag();
            for i in 0..n {
                full[(i, k)] = c * 2.0 * (src.g[(i, i)] * plan.theta()[(i, k)] - gt[i]);
            }
        }
        Ok(match plan.mode() {
            FeedbackMode::Off => Vec::new(),
            FeedbackMode::PerStepDiag | FeedbackMode::PerBranchDiag => full.iter().copied().collect(),
            FeedbackMode::PerStepScalar => full.row_sum().iter().copied().collect(),
            FeedbackMode::StaticDiag => full.column_sum().iter().copied().collect(),
        })
    }

    /// Closed-form minimizer of the predicted noise power over the weights
    /// of `mode`, with the total mitigation it achieves.
    pub fn solve(&self, mode: FeedbackMode) -> Result<(FeedbackPlan, f64)> {
        let (n, stages) = (self.nodes, self.stages());
        let params: Vec<f64> = match mode {
            FeedbackMode::Off => Vec::new(),
            FeedbackMode::PerStepDiag | FeedbackMode::PerBranchDiag => {
                self.sources.iter().flat_map(|s| s.optimal_alpha()).collect()
            }
            FeedbackMode::PerStepScalar => self
                .sources
                .iter()
                .map(|s| {
                    let tr_g = s.g.trace();
                    if tr_g <= degenerate_floor(s.g.diagonal().amax()) {
                        0.0
                    } else {
                        s.gt_diag().iter().sum::<f64>() / tr_g
                    }
                })
                .collect(),
            FeedbackMode::StaticDiag => {
                let mut num = vec![0.0; n];
                let mut den = vec![0.0; n];
                for s in &self.sources {
                    for (i, gt) in s.gt_diag().iter().enumerate() {
                        num[i] += s.sigma2 * gt;
                        den[i] += s.sigma2 * s.g[(i, i)];
                    }
                }
                let scale = den.iter().copied().fold(0.0, f64::max);
                num.iter()
                    .zip(&den)
                    .map(|(a, b)| if *b <= degenerate_floor(scale) { 0.0 } else { a / b })
                    .collect()
            }
        };
        let plan = FeedbackPlan::from_params(mode, n, stages, &params)?;
        let mitigation = self.predict(&plan)?.mitigation;
        Ok((plan, mitigation))
    }
}

pub fn predict_zeta_fir_det(
    shift: &ShiftOperator,
    fir: &FirFilter,
    plan: &FeedbackPlan,
    sigmas: &[f64],
) -> Result<NoisePrediction> {
    NoiseModel::fir_deterministic(shift, fir, sigmas)?.predict(plan)
}

pub fn solve_alpha_fir_det(
    shift: &ShiftOperator,
    fir: &FirFilter,
    sigmas: &[f64],
    mode: FeedbackMode,
) -> Result<(FeedbackPlan, f64)> {
    NoiseModel::fir_deterministic(shift, fir, sigmas)?.solve(mode)
}

pub fn predict_zeta_arma_det(
    shift: &ShiftOperator,
    arma: &ArmaFilter,
    plan: &FeedbackPlan,
    sigmas: &[f64],
) -> Result<NoisePrediction> {
    NoiseModel::arma_deterministic(shift, arma, sigmas, DEFAULT_GRAMIAN_TOL)?.predict(plan)
}

pub fn solve_alpha_arma_det(shift: &ShiftOperator, arma: &ArmaFilter, sigmas: &[f64]) -> Result<(FeedbackPlan, f64)> {
    NoiseModel::arma_deterministic(shift, arma, sigmas, DEFAULT_GRAMIAN_TOL)?.solve(FeedbackMode::PerBranchDiag)
}

pub fn predict_zeta_fir_stoch(
    model: &ResModel,
    fir: &FirFilter,
    plan: &FeedbackPlan,
    sigmas: &[f64],
) -> Result<NoisePrediction> {
    NoiseModel::fir_stochastic(model, fir, sigmas)?.predict(plan)
}

pub fn solve_alpha_fir_stoch(model: &ResModel, fir: &FirFilter, sigmas: &[f64]) -> Result<(FeedbackPlan, f64)> {
    NoiseModel::fir_stochastic(model, fir, sigmas)?.solve(FeedbackMode::PerStepDiag)
}

pub fn predict_zeta_arma_stoch(
    model: &ResModel,
    arma: &ArmaFilter,
    plan: &FeedbackPlan,
    sigmas: &[f64],
) -> Result<NoisePrediction> {
    NoiseModel::arma_stochastic(model, arma, sigmas, DEFAULT_GRAMIAN_TOL)?.predict(plan)
}

pub fn solve_alpha_arma_stoch(model: &ResModel, arma: &ArmaFilter, sigmas: &[f64]) -> Result<(FeedbackPlan, f64)> {
    NoiseModel::arma_stochastic(model, arma, sigmas, DEFAULT_GRAMIAN_TOL)?.solve(FeedbackMode::PerBranchDiag)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filters::ArmaBranch;
    use crate::graph::{build_shift, Graph, ShiftKind};

    fn path3() -> ShiftOperator {
        build_shift(&Graph::new(3, [(0, 1, 1.0), (1, 2, 1.0)]).unwrap(), &ShiftKind::Adjacency).unwrap()
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12 * (1.0 + b.abs())
    }

    #[test]
    fn path3_fir() {
        let fir = FirFilter::new(vec![1.0, 1.0, 1.0]).unwrap();
        let off = predict_zeta_fir_det(&path3(), &fir, &FeedbackPlan::off(3, 2), &[1.0]).unwrap();
        assert!(close(off.sources[0].zeta, 4.0));
        assert!(close(off.sources[1].zeta, 4.0 / 3.0));
        assert_eq!(off.mitigation, 0.0);

        let (plan, _) = solve_alpha_fir_det(&path3(), &fir, &[1.0], FeedbackMode::PerStepDiag).unwrap();
        let a = plan.weights(0);
        assert!(close(a[0], 1.0) && close(a[1], 4.0 / 3.0) && close(a[2], 1.0));
        assert!(plan.weights(1).iter().all(|&v| v == 0.0));
        let fb = predict_zeta_fir_det(&path3(), &fir, &plan, &[1.0]).unwrap();
        assert!(close(fb.sources[0].zeta, 8.0 / 9.0));
        assert!(close(fb.sources[0].reduction, 28.0 / 3.0));
    }

    #[test]
    fn diagonal_shift_cancels_completely() {
        let s = ShiftOperator::from_matrix(Matrix::from_diagonal(&crate::Vector::from_vec(vec![0.3, -0.5, 0.9]))).unwrap();
        let fir = FirFilter::new(vec![0.2, 1.0, -0.7, 0.4]).unwrap();
        let (plan, _) = solve_alpha_fir_det(&s, &fir, &[1.0], FeedbackMode::PerStepDiag).unwrap();
        for k in 0..3 {
            assert!((plan.weights(k) - s.matrix().diagonal()).amax() < 1e-12);
        }
        assert!(predict_zeta_fir_det(&s, &fir, &plan, &[1.0]).unwrap().zeta < 1e-15);
    }

    #[test]
    fn exchange_arma() {
        let s = ShiftOperator::from_matrix(Matrix::from_row_slice(2, 2, &[0., 1., 1., 0.])).unwrap();
        let arma = ArmaFilter::new(vec![ArmaBranch { psi: 0.5, phi: 1.0 }]).unwrap();
        let p = predict_zeta_arma_det(&s, &arma, &FeedbackPlan::off(2, 1), &[1.0]).unwrap();
        assert!((p.zeta - 1.0 / 3.0).abs() < 1e-11);
        let (plan, red) = solve_alpha_arma_det(&s, &arma, &[1.0]).unwrap();
        assert!(plan.theta().amax() < 1e-15);
        assert!(red.abs() < 1e-15);
    }

    #[test]
    fn stochastic_single_edge_arma() {
        let model = ResModel::new(Graph::new(2, [(0, 1, 1.0)]).unwrap(), 0.5, ShiftKind::Adjacency).unwrap();
        let arma = ArmaFilter::new(vec![ArmaBranch { psi: 0.5, phi: 1.0 }]).unwrap();
        let p = predict_zeta_arma_stoch(&model, &arma, &FeedbackPlan::off(2, 1), &[1.0]).unwrap();
        assert!((p.zeta - 1.0 / 7.0).abs() < 1e-11);
    }

    #[test]
    fn zero_survival_gives_zero_weights() {
        let model = ResModel::new(Graph::new(3, [(0, 1, 1.0), (1, 2, 1.0)]).unwrap(), 0.0, ShiftKind::Adjacency).unwrap();
        let fir = FirFilter::new(vec![1.0, 0.5, 0.25]).unwrap();
        let (plan, red) = solve_alpha_fir_stoch(&model, &fir, &[1.0]).unwrap();
        assert_eq!(plan.theta().amax(), 0.0);
        assert_eq!(red, 0.0);
    }

    #[test]
    fn variants_are_stationary() {
        let g = Graph::new(4, [(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0), (0, 2, 1.0)]).unwrap();
        let s = build_shift(&g, &ShiftKind::Laplacian).unwrap();
        let fir = FirFilter::new(vec![0.4, -1.0, 0.6, 0.3]).unwrap();
        let m = NoiseModel::fir_deterministic(&s, &fir, &[1.0, 2.0, 0.5]).unwrap();
        for mode in [FeedbackMode::PerStepDiag, FeedbackMode::PerStepScalar, FeedbackMode::StaticDiag] {
            let (plan, red) = m.solve(mode).unwrap();
            assert!(red >= 0.0);
            assert!(m.gradient(&plan).unwrap().iter().all(|g| g.abs() < 1e-10), "{mode:?}");
        }
    }
}
