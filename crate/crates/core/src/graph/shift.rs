use nalgebra::SymmetricEigen;

use super::res::EdgeTerm;
use super::Graph;
use crate::{Error, Matrix, Result, Vector};

/// Which symmetric matrix represents one hop of exchange on the graph.
#[derive(Debug, Clone, PartialEq)]
pub enum ShiftKind {
    Adjacency,
    /// `L = diag(A 1) - A`.
    Laplacian,
    /// `L / lambda_max(L)`, spectrum in `[0, 1]`.
    ScaledLaplacian,
    /// Any symmetric `n x n` matrix; not tied to the edge list.
    Custom(Matrix),
}

/// Tag describing how a [`ShiftOperator`] was built.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShiftClass {
    Adjacency,
    Laplacian,
    ScaledLaplacian,
    Custom,
}

/// Symmetric graph shift operator together with a spectral-radius bound.
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftOperator {
    matrix: Matrix,
    rho: f64,
    class: ShiftClass,
}

impl ShiftOperator {
    /// Wraps an arbitrary symmetric matrix; `rho` is computed from its
    /// eigenvalues.
    pub fn from_matrix(matrix: Matrix) -> Result<Self> {
        Self::with_class(matrix, ShiftClass::Custom)
    }

    pub(crate) fn with_class(matrix: Matrix, class: ShiftClass) -> Result<Self> {
        check_symmetric(&matrix)?;
        let spectrum = eigen(&matrix)?;
        let rho = spectrum
            .eigenvalues
            .iter()
            .fold(0.0_f64, |acc, l| acc.max(l.abs()));
        Ok(ShiftOperator { matrix, rho, class })
    }

    pub(crate) fn from_parts(matrix: Matrix, rho: f64, class: ShiftClass) -> Self {
        ShiftOperator { matrix, rho, class }
    }

    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn class(&self) -> ShiftClass {
        self.class
    }

    pub fn node_count(&self) -> usize {
        self.matrix.nrows()
    }

    /// Interval the filter designer fits the frequency response on.
    pub fn design_interval(&self) -> (f64, f64) {
        match self.class {
            ShiftClass::ScaledLaplacian => (0.0, 1.0),
            _ => (-self.rho, self.rho),
        }
    }
}

/// Eigen-decomposition `S = U diag(lambda) U^T`, eigenvalues ascending.
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub eigenvalues: Vector,
    pub eigenvectors: Matrix,
}

impl Spectrum {
    pub fn reconstruct(&self) -> Matrix {
        &self.eigenvectors * Matrix::from_diagonal(&self.eigenvalues) * self.eigenvectors.transpose()
    }

    /// `U diag(h(lambda)) U^T x`.
    pub fn apply_response(&self, h: impl Fn(f64) -> f64, x: &Vector) -> Vector {
        let coeffs = self.eigenvectors.tr_mul(x);
        let scaled = Vector::from_iterator(
            coeffs.len(),
            coeffs.iter().zip(self.eigenvalues.iter()).map(|(c, &l)| c * h(l)),
        );
        &self.eigenvectors * scaled
    }
}

pub fn build_shift(graph: &Graph, kind: &ShiftKind) -> Result<ShiftOperator> {
    let n = graph.node_count();
    match kind {
        ShiftKind::Custom(m) => {
            if m.nrows() != n || m.ncols() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: m.nrows().max(m.ncols()),
                });
            }
            ShiftOperator::with_class(m.clone(), ShiftClass::Custom)
        }
        _ => {
            let terms = edge_terms(graph, kind)?;
            let matrix = super::res::assemble(n, &terms, None);
            ShiftOperator::with_class(matrix, class_of(kind))
        }
    }
}

pub(crate) fn class_of(kind: &ShiftKind) -> ShiftClass {
    match kind {
        ShiftKind::Adjacency => ShiftClass::Adjacency,
        ShiftKind::Laplacian => ShiftClass::Laplacian,
        ShiftKind::ScaledLaplacian => ShiftClass::ScaledLaplacian,
        ShiftKind::Custom(_) => ShiftClass::Custom,
    }
}

/// Per-edge contribution to the shift for graph-derived kinds.
pub(crate) fn edge_terms(graph: &Graph, kind: &ShiftKind) -> Result<Vec<EdgeTerm>> {
    let laplacian = |scale: f64| -> Vec<EdgeTerm> {
        graph
            .edges()
            .iter()
            .map(|e| EdgeTerm {
                u: e.u,
                v: e.v,
                diag: e.w * scale,
                off: -e.w * scale,
            })
            .collect()
    };
    match kind {
        ShiftKind::Adjacency => Ok(graph
            .edges()
            .iter()
            .map(|e| EdgeTerm {
                u: e.u,
                v: e.v,
                diag: 0.0,
                off: e.w,
            })
            .collect()),
        ShiftKind::Laplacian => Ok(laplacian(1.0)),
        ShiftKind::ScaledLaplacian => {
            let l = super::res::assemble(graph.node_count(), &laplacian(1.0), None);
            let spectrum = eigen(&l)?;
            let lambda_max = spectrum.eigenvalues.max();
            if !(lambda_max > 0.0) {
                return Err(Error::InvalidGraph(
                    "scaled Laplacian needs a graph with at least one positive-weight edge".into(),
                ));
            }
            Ok(laplacian(1.0 / lambda_max))
        }
        ShiftKind::Custom(_) => Err(Error::Unsupported(
            "custom shift matrices have no per-edge decomposition".into(),
        )),
    }
}

/// Eigenvalues of a symmetric matrix, ascending.
pub fn symmetric_eigenvalues(m: &Matrix) -> Result<Vector> {
    Ok(eigen(m)?.eigenvalues)
}

pub fn spectral_decompose(shift: &ShiftOperator) -> Result<Spectrum> {
    eigen(shift.matrix())
}

pub(crate) fn eigen(m: &Matrix) -> Result<Spectrum> {
    let n = m.nrows();
    if n == 0 {
        return Ok(Spectrum {
            eigenvalues: Vector::zeros(0),
            eigenvectors: Matrix::zeros(0, 0),
        });
    }
    let max_iter = 1000 * n.max(10);
    let no_convergence = Error::NoConvergence {
        what: "symmetric eigensolver",
        iterations: max_iter,
        residual: f64::NAN,
    };
    // nalgebra can return NaN for matrices with exactly zero blocks (e.g.
    // isolated nodes); a diagonal shift changes nothing but avoids it.
    let scale = m.row_iter().map(|r| r.abs().sum()).fold(0.0, f64::max);
    let mut eig = None;
    for shift in [0.0, 1.0 + scale, 2.0 * (1.0 + scale)] {
        let shifted = m + Matrix::identity(n, n) * shift;
        let Some(mut e) = SymmetricEigen::try_new(shifted, f64::EPSILON, max_iter) else {
            continue;
        };
        if e.eigenvalues.iter().chain(e.eigenvectors.iter()).all(|v| v.is_finite()) {
            e.eigenvalues.add_scalar_mut(-shift);
            eig = Some(e);
            break;
        }
    }
    let eig = eig.ok_or(no_convergence)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let eigenvalues = Vector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut eigenvectors = Matrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        eigenvectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    Ok(Spectrum {
        eigenvalues,
        eigenvectors,
    })
}

fn check_symmetric(m: &Matrix) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::DimensionMismatch {
            expected: m.nrows(),
            got: m.ncols(),
        });
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::arg("shift", "matrix has non-finite entries"));
    }
    for i in 0..m.nrows() {
        for j in i + 1..m.ncols() {
            if m[(i, j)] != m[(j, i)] {
                return Err(Error::arg(
                    "shift",
                    format!("matrix is not symmetric at ({i}, {j})"),
                ));
            }
        }
    }
    Ok(())
}
