//! FIR and ARMA graph filters: exact execution, quantized execution with
//! error feedback, and least-squares low-pass design.

mod lowpass;
mod plan;
mod run;

use serde::{Deserialize, Serialize};

use crate::graph::ShiftOperator;
use crate::{Error, Result, Vector};

pub use lowpass::{design_lowpass_fir, LowpassDesign, DESIGN_GRID_POINTS};
pub use plan::{FeedbackMode, FeedbackPlan};
pub use run::{
    normalize_input, run_arma_exact_on, run_arma_on, run_arma_quantized, run_fir_exact_on, run_fir_on,
    run_fir_quantized, DitherQuantizer, ExecutionTrace, ShiftSequence, ShiftSource, StateQuantizer,
    INPUT_HEADROOM,
};

/// Polynomial graph filter `H(S) = sum_k taps[k] S^k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct FirFilter {
    taps: Vec<f64>,
}

impl TryFrom<Vec<f64>> for FirFilter {
    type Error = Error;
    fn try_from(taps: Vec<f64>) -> Result<Self> {
        FirFilter::new(taps)
    }
}

impl From<FirFilter> for Vec<f64> {
    fn from(f: FirFilter) -> Self {
        f.taps
    }
}

impl FirFilter {
    pub fn new(taps: Vec<f64>) -> Result<Self> {
        if taps.len() < 2 {
            return Err(Error::arg("taps", "an FIR filter needs order K >= 1"));
        }
        if taps.iter().any(|t| !t.is_finite()) {
            return Err(Error::arg("taps", "taps must be finite"));
        }
        Ok(FirFilter { taps })
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    pub fn order(&self) -> usize {
        self.taps.len() - 1
    }

    /// Frequency response `sum_k taps[k] lambda^k`.
    pub fn response(&self, lambda: f64) -> f64 {
        self.taps.iter().rev().fold(0.0, |acc, &t| acc * lambda + t)
    }

    pub fn scaled(&self, c: f64) -> FirFilter {
        FirFilter {
            taps: self.taps.iter().map(|t| t * c).collect(),
        }
    }
}

/// One rational branch `phi (I - psi S)^{-1}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArmaBranch {
    pub psi: f64,
    pub phi: f64,
}

/// Parallel ARMA filter `sum_k phi_k (I - psi_k S)^{-1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<ArmaBranch>", into = "Vec<ArmaBranch>")]
pub struct ArmaFilter {
    branches: Vec<ArmaBranch>,
}

impl TryFrom<Vec<ArmaBranch>> for ArmaFilter {
    type Error = Error;
    fn try_from(b: Vec<ArmaBranch>) -> Result<Self> {
        ArmaFilter::new(b)
    }
}

impl From<ArmaFilter> for Vec<ArmaBranch> {
    fn from(f: ArmaFilter) -> Self {
        f.branches
    }
}

impl ArmaFilter {
    pub fn new(branches: Vec<ArmaBranch>) -> Result<Self> {
        if branches.is_empty() {
            return Err(Error::arg("branches", "an ARMA filter needs at least one branch"));
        }
        if branches.iter().any(|b| !b.psi.is_finite() || !b.phi.is_finite()) {
            return Err(Error::arg("branches", "coefficients must be finite"));
        }
        Ok(ArmaFilter { branches })
    }

    pub fn branches(&self) -> &[ArmaBranch] {
        &self.branches
    }

    pub fn branch_count(&self) -> usize {
        self.branches.len()
    }

    /// Largest `|psi_k| rho` over branches.
    pub fn contraction(&self, rho: f64) -> f64 {
        self.branches
            .iter()
            .fold(0.0_f64, |acc, b| acc.max(b.psi.abs() * rho))
    }

    /// Rejects any branch with `|psi_k| rho >= 1`.
    pub fn check_stable(&self, rho: f64) -> Result<()> {
        let value = self.contraction(rho);
        if value >= 1.0 {
            return Err(Error::Unstable { value });
        }
        Ok(())
    }

    pub fn response(&self, lambda: f64) -> f64 {
        self.branches
            .iter()
            .map(|b| b.phi / (1.0 - b.psi * lambda))
            .sum()
    }

    /// Steps after which the slowest branch has decayed below `tol`:
    /// `ceil(log(tol) / log(max |psi_k| rho))`.
    pub fn settling_steps(&self, rho: f64, tol: f64) -> usize {
        let q = self.contraction(rho);
        if q <= 0.0 {
            return 1;
        }
        ((tol.ln() / q.ln()).ceil() as usize).max(1)
    }
}

/// `(I + c S)^{-1}` as the single branch `psi = -c`, `phi = 1`.
pub fn arma1(c: f64, shift: &ShiftOperator) -> Result<ArmaFilter> {
    let filter = ArmaFilter::new(vec![ArmaBranch { psi: -c, phi: 1.0 }])?;
    filter.check_stable(shift.rho())?;
    Ok(filter)
}

/// Either filter family, as used by the harness.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraphFilter {
    Fir(FirFilter),
    Arma(ArmaFilter),
}

impl GraphFilter {
    /// Number of independent quantization stages: FIR exchanges or ARMA
    /// branches.
    pub fn stages(&self) -> usize {
        match self {
            GraphFilter::Fir(f) => f.order(),
            GraphFilter::Arma(a) => a.branch_count(),
        }
    }
}

/// `y = sum_k phi_k S^k x` through the shift-and-accumulate recursion.
pub fn run_fir_exact(shift: &ShiftOperator, fir: &FirFilter, x: &Vector) -> Result<Vector> {
    check_len(shift.node_count(), x.len())?;
    let seq = ShiftSequence::fixed(shift, fir.order());
    Ok(run_fir_exact_on(&seq, fir, x))
}

/// Converged ARMA output and the number of iterations it took.
#[derive(Debug, Clone)]
pub struct ArmaSolution {
    pub output: Vector,
    pub iterations: usize,
}

/// Iterates every branch from a zero state until the output changes by less
/// than `tol` in the max norm.
pub fn run_arma_exact(
    shift: &ShiftOperator,
    arma: &ArmaFilter,
    x: &Vector,
    tol: f64,
    max_iter: usize,
) -> Result<ArmaSolution> {
    check_len(shift.node_count(), x.len())?;
    arma.check_stable(shift.rho())?;
    let s = shift.matrix();
    let mut states = vec![Vector::zeros(x.len()); arma.branch_count()];
    let mut prev = Vector::zeros(x.len());
    for it in 1..=max_iter {
        let mut y = Vector::zeros(x.len());
        for (w, b) in states.iter_mut().zip(arma.branches()) {
            *w = (s * &*w) * b.psi + x * b.phi;
            y += &*w;
        }
        let delta = (&y - &prev).amax();
        if delta < tol {
            return Ok(ArmaSolution {
                output: y,
                iterations: it,
            });
        }
        prev = y;
    }
    Err(Error::NoConvergence {
        what: "ARMA recursion",
        iterations: max_iter,
        residual: f64::NAN,
    })
}

pub(crate) fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { expected, got });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_shift, spectral_decompose, Graph, ShiftKind};
    use crate::Matrix;

    fn path3() -> ShiftOperator {
        let g = Graph::new(3, [(0, 1, 1.0), (1, 2, 1.0)]).unwrap();
        build_shift(&g, &ShiftKind::Adjacency).unwrap()
    }

    #[test]
    fn identity_and_single_shift() {
        let s = path3();
        let x = Vector::from_vec(vec![0.3, -1.0, 2.0]);
        let id = FirFilter::new(vec![1.0, 0.0, 0.0]).unwrap();
        assert_eq!(run_fir_exact(&s, &id, &x).unwrap(), x);
        let one = FirFilter::new(vec![0.0, 1.0]).unwrap();
        let e2 = Vector::from_vec(vec![0.0, 1.0, 0.0]);
        assert_eq!(run_fir_exact(&s, &one, &e2).unwrap(), Vector::from_vec(vec![1.0, 0.0, 1.0]));
    }

    #[test]
    fn fir_matches_spectral_evaluation() {
        let g = Graph::new(5, [(0, 1, 1.0), (1, 2, 0.5), (2, 3, 2.0), (3, 4, 1.0), (0, 4, 0.3)]).unwrap();
        let s = build_shift(&g, &ShiftKind::ScaledLaplacian).unwrap();
        let fir = FirFilter::new(vec![0.5, -1.0, 0.3, 2.0, -0.7, 0.1, 0.05]).unwrap();
        let x = Vector::from_vec(vec![1.0, -0.5, 0.2, 0.9, -1.3]);
        let spec = spectral_decompose(&s).unwrap();
        let want = spec.apply_response(|l| fir.response(l), &x);
        assert!((run_fir_exact(&s, &fir, &x).unwrap() - want).amax() < 1e-9);
    }

    #[test]
    fn arma1_matches_linear_solve() {
        let g = Graph::new(4, [(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0), (3, 0, 1.0), (0, 2, 1.0)]).unwrap();
        let s = build_shift(&g, &ShiftKind::ScaledLaplacian).unwrap();
        let arma = arma1(0.5, &s).unwrap();
        assert_eq!(arma.branches()[0], ArmaBranch { psi: -0.5, phi: 1.0 });
        let x = Vector::from_vec(vec![1.0, 2.0, -1.0, 0.5]);
        let sol = run_arma_exact(&s, &arma, &x, 1e-13, 500).unwrap();
        let a = Matrix::identity(4, 4) + s.matrix() * 0.5;
        let want = a.lu().solve(&x).unwrap();
        assert!((sol.output - want).amax() < 1e-9);
    }

    #[test]
    fn zero_feedback_arma_converges_in_one_step() {
        let s = path3();
        let arma = ArmaFilter::new(vec![
            ArmaBranch { psi: 0.0, phi: 2.0 },
            ArmaBranch { psi: 0.0, phi: -0.5 },
        ])
        .unwrap();
        let x = Vector::from_vec(vec![1.0, 2.0, 3.0]);
        let sol = run_arma_exact(&s, &arma, &x, 1e-12, 10).unwrap();
        assert_eq!(sol.output, &x * 1.5);
        assert_eq!(sol.iterations, 2);
        let id = arma1(0.0, &s).unwrap();
        assert_eq!(run_arma_exact(&s, &id, &x, 1e-12, 10).unwrap().output, x);
    }

    #[test]
    fn stability_guard() {
        let s = path3();
        assert!(matches!(arma1(0.8, &s), Err(Error::Unstable { .. })));
        let bad = ArmaFilter::new(vec![ArmaBranch { psi: 0.9, phi: 1.0 }]).unwrap();
        let x = Vector::zeros(3);
        assert!(run_arma_exact(&s, &bad, &x, 1e-9, 10).is_err());
    }

    #[test]
    fn arma_geometric_convergence() {
        let g = Graph::new(6, (0..6).map(|i| (i, (i + 1) % 6, 1.0))).unwrap();
        let s = build_shift(&g, &ShiftKind::Adjacency).unwrap();
        let arma = ArmaFilter::new(vec![ArmaBranch { psi: 0.3, phi: 1.0 }]).unwrap();
        let x = Vector::from_vec(vec![1.0, -2.0, 0.5, 0.0, 1.5, -1.0]);
        let exact = (Matrix::identity(6, 6) - s.matrix() * 0.3).lu().solve(&x).unwrap();
        let seq = ShiftSequence::fixed(&s, 30);
        let traj = run_arma_exact_on(&seq, &arma, &x);
        let q = arma.contraction(s.rho());
        let c = (&traj[0] - &exact).norm() / q;
        for (t, y) in traj.iter().enumerate() {
            let err = (y - &exact).norm();
            assert!(err <= c * q.powi(t as i32 + 1) * (1.0 + 1e-9) + 1e-14, "t = {t}");
        }
    }

    #[test]
    fn filter_specs_roundtrip_json() {
        let f = GraphFilter::Arma(ArmaFilter::new(vec![ArmaBranch { psi: -0.5, phi: 1.0 }]).unwrap());
        let s = serde_json::to_string(&f).unwrap();
        assert_eq!(serde_json::from_str::<GraphFilter>(&s).unwrap(), f);
        assert!(serde_json::from_str::<FirFilter>("[1.0]").is_err());
    }
}
