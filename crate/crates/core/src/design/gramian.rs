use serde::Serialize;

use super::kernel::{kernel_tensor, KernelTensor};
use crate::graph::{ResModel, ShiftOperator};
use crate::{Error, Matrix, Result};

pub const DEFAULT_GRAMIAN_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GramianKind {
    /// `W = psi^2 S W S + I`.
    Deterministic,
    /// `W = psi^2 E[S_t W S_t] + I`.
    Stochastic,
}

/// Accumulated noise energy of one ARMA branch.
#[derive(Debug, Clone)]
pub struct Gramian {
    pub matrix: Matrix,
    pub kind: GramianKind,
    /// `||W - (psi^2 T(W) + I)||_F` of the returned matrix.
    pub residual: f64,
    pub iterations: usize,
}

/// Iteration cap: ten times the nominal count `ceil(log(tol) / (2 log q))`,
/// `q = |psi| rho`.
pub fn iteration_cap(contraction: f64, tol: f64) -> usize {
    10 * nominal_iterations(contraction, tol).max(1)
}

fn nominal_iterations(q: f64, tol: f64) -> usize {
    if q <= 0.0 {
        return 1;
    }
    (tol.ln() / (2.0 * q.ln())).ceil().max(1.0) as usize
}

/// Geometric bound on the fixed-point iteration count: the update at
/// iteration `t` has Frobenius norm at most `sqrt(n) q^(2t)`.
pub fn iteration_bound(contraction: f64, tol: f64, n: usize) -> usize {
    if contraction <= 0.0 {
        return 2;
    }
    let t = ((tol / (n.max(1) as f64).sqrt()).ln() / (2.0 * contraction.ln())).ceil();
    t.max(0.0) as usize + 2
}

/// Fixed-point iteration `W <- psi^2 map(W) + I` from `W = I`.
fn fixed_point(
    n: usize,
    psi: f64,
    rho: f64,
    tol: f64,
    kind: GramianKind,
    map: impl Fn(&Matrix) -> Matrix,
) -> Result<Gramian> {
    let contraction = psi.abs() * rho;
    if contraction >= 1.0 {
        return Err(Error::Unstable { value: contraction });
    }
    if !(tol > 0.0) {
        return Err(Error::arg("tol", "tolerance must be positive"));
    }
    let eye = Matrix::identity(n, n);
    let step = |w: &Matrix| map(w) * (psi * psi) + &eye;
    let cap = iteration_cap(contraction, tol);
    let mut w = eye.clone();
    let mut delta = f64::INFINITY;
    for it in 1..=cap {
        let next = step(&w);
        delta = (&next - &w).norm();
        w = next;
        if delta < tol {
            let residual = (&w - step(&w)).norm();
            return Ok(Gramian {
                matrix: symmetrize(w),
                kind,
                residual,
                iterations: it,
            });
        }
    }
    Err(Error::NoConvergence {
        what: "Gramian fixed-point iteration",
        iterations: cap,
        residual: delta,
    })
}

fn symmetrize(w: Matrix) -> Matrix {
    (&w + w.transpose()) * 0.5
}

/// Solves `W = psi^2 S W S + I`.
pub fn observability_gramian(shift: &ShiftOperator, psi: f64, tol: f64) -> Result<Gramian> {
    let s = shift.matrix();
    fixed_point(
        shift.node_count(),
        psi,
        shift.rho(),
        tol,
        GramianKind::Deterministic,
        |w| s * w * s,
    )
}

/// Solves `W = psi^2 E[S_t W S_t] + I` over random edge sampling.
pub fn stochastic_gramian(model: &ResModel, psi: f64, tol: f64) -> Result<Gramian> {
    stochastic_gramian_with(&kernel_tensor(model), model.rho(), psi, tol)
}

pub(crate) fn stochastic_gramian_with(kernel: &KernelTensor, rho: f64, psi: f64, tol: f64) -> Result<Gramian> {
    fixed_point(
        kernel.node_count(),
        psi,
        rho,
        tol,
        GramianKind::Stochastic,
        |w| kernel.expected_sms(w),
    )
}
