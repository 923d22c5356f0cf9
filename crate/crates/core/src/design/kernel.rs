use crate::graph::{mean_shift, EdgeTerm, ResModel};
use crate::Matrix;

/// Exact symmetry for symmetric inputs; rounding alone would break it.
pub(crate) fn symmetrized(m: Matrix) -> Matrix {
    (&m + m.transpose()) * 0.5
}

/// Largest node count for which [`kernel_tensor`] stores all `n^4` entries.
pub const DENSE_KERNEL_MAX_NODES: usize = 32;

/// Second-order statistics of a random shift `S_t = sum_e b_e E_e` with
/// independent `b_e ~ Bernoulli(p)`.
///
/// `Ker(i, j) = E[S_t[:, j] S_t[i, :]]`, so that
/// `E[S_t M S_t]_{ij} = tr(M Ker(i, j))`. Every entry is
/// `mean_{bj} mean_{ia} + (p - p^2) sum_e E_e[b, j] E_e[i, a]`: indicators
/// of distinct edges multiply to `p^2`, a shared indicator squares to `p`.
#[derive(Debug, Clone)]
pub struct KernelTensor {
    n: usize,
    p: f64,
    mean: Matrix,
    terms: Vec<EdgeTerm>,
    dense: Option<Vec<f64>>,
}

pub fn kernel_tensor(model: &ResModel) -> KernelTensor {
    let mut k = KernelTensor {
        n: model.node_count(),
        p: model.p(),
        mean: mean_shift(model),
        terms: model.terms().to_vec(),
        dense: None,
    };
    if k.n <= DENSE_KERNEL_MAX_NODES {
        k.materialize();
    }
    k
}

/// `E[S_t M S_t]`.
pub fn expected_sms(kernel: &KernelTensor, m: &Matrix) -> Matrix {
    kernel.expected_sms(m)
}

impl KernelTensor {
    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    /// `E[S_t]`.
    pub fn mean(&self) -> &Matrix {
        &self.mean
    }

    pub fn is_materialized(&self) -> bool {
        self.dense.is_some()
    }

    fn variance_weight(&self) -> f64 {
        self.p - self.p * self.p
    }

    fn index(&self, i: usize, j: usize, b: usize, a: usize) -> usize {
        ((i * self.n + j) * self.n + b) * self.n + a
    }

    /// Stores every `Ker(i, j)`; memory grows as `n^4`.
    pub fn materialize(&mut self) {
        if self.dense.is_some() {
            return;
        }
        let n = self.n;
        let mut dense = vec![0.0; n * n * n * n];
        for i in 0..n {
            for j in 0..n {
                for b in 0..n {
                    let mbj = self.mean[(b, j)];
                    for a in 0..n {
                        dense[self.index(i, j, b, a)] = mbj * self.mean[(i, a)];
                    }
                }
            }
        }
        let var = self.variance_weight();
        if var != 0.0 {
            for t in &self.terms {
                let support = [t.u, t.v];
                let entry = |x: usize, y: usize| if x == y { t.diag } else { t.off };
                for &i in &support {
                    for &j in &support {
                        for &b in &support {
                            for &a in &support {
                                let idx = self.index(i, j, b, a);
                                dense[idx] += var * entry(b, j) * entry(i, a);
                            }
                        }
                    }
                }
            }
        }
        self.dense = Some(dense);
    }

    /// `Ker(i, j)` as an `n x n` matrix indexed `[b, a]`.
    pub fn entry(&self, i: usize, j: usize) -> Matrix {
        if let Some(d) = &self.dense {
            return Matrix::from_fn(self.n, self.n, |b, a| d[self.index(i, j, b, a)]);
        }
        let mut k = Matrix::from_fn(self.n, self.n, |b, a| self.mean[(b, j)] * self.mean[(i, a)]);
        let var = self.variance_weight();
        for t in &self.terms {
            let support = [t.u, t.v];
            if !support.contains(&i) || !support.contains(&j) {
                continue;
            }
            let entry = |x: usize, y: usize| if x == y { t.diag } else { t.off };
            for &b in &support {
                for &a in &support {
                    k[(b, a)] += var * entry(b, j) * entry(i, a);
                }
            }
        }
        k
    }

    /// `E[S_t M S_t]`, through the stored tensor when available.
    pub fn expected_sms(&self, m: &Matrix) -> Matrix {
        assert_eq!(m.shape(), (self.n, self.n), "matrix must be n x n");
        match &self.dense {
            Some(_) => self.expected_sms_dense(m),
            None => self.expected_sms_factored(m),
        }
    }

    /// `[E[S_t M S_t]]_{ij} = tr(M Ker(i, j))` over the stored tensor.
    pub fn expected_sms_dense(&self, m: &Matrix) -> Matrix {
        let d = self.dense.as_ref().expect("kernel not materialized");
        let n = self.n;
        // Ker(i, j) is stored at offset b * n + a, which is where the
        // column-major storage of M keeps M[a, b].
        let ms = m.as_slice();
        symmetrized(Matrix::from_fn(n, n, |i, j| {
            let base = self.index(i, j, 0, 0);
            d[base..base + n * n]
                .iter()
                .zip(ms)
                .map(|(k, v)| k * v)
                .sum()
        }))
    }

    /// `mean M mean + (p - p^2) sum_e E_e M E_e`, each edge term touching only
    /// its 2 x 2 support.
    pub fn expected_sms_factored(&self, m: &Matrix) -> Matrix {
        let mut out = &self.mean * m * &self.mean;
        let var = self.variance_weight();
        if var == 0.0 {
            return symmetrized(out);
        }
        for t in &self.terms {
            let idx = [t.u, t.v];
            let e = [[t.diag, t.off], [t.off, t.diag]];
            let sub = [[m[(t.u, t.u)], m[(t.u, t.v)]], [m[(t.v, t.u)], m[(t.v, t.v)]]];
            for r in 0..2 {
                for c in 0..2 {
                    let mut acc = 0.0;
                    for x in 0..2 {
                        for y in 0..2 {
                            acc += e[r][x] * sub[x][y] * e[y][c];
                        }
                    }
                    out[(idx[r], idx[c])] += var * acc;
                }
            }
        }
        symmetrized(out)
    }

    /// `E[S_t^2]`.
    pub fn expected_square(&self) -> Matrix {
        self.expected_sms(&Matrix::identity(self.n, self.n))
    }
}
