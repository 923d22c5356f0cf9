use rand::Rng;

use super::shift::{class_of, edge_terms};
use super::{build_shift, Graph, ShiftKind, ShiftOperator};
use crate::{Error, Matrix, Result};

/// Contribution of one undirected edge to a graph-derived shift: `off` at
/// `(u, v)` and `(v, u)`, `diag` at `(u, u)` and `(v, v)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeTerm {
    pub u: usize,
    pub v: usize,
    pub diag: f64,
    pub off: f64,
}

/// Sums the terms of surviving edges (`mask = None` keeps all).
pub(crate) fn assemble(n: usize, terms: &[EdgeTerm], mask: Option<&[bool]>) -> Matrix {
    let mut m = Matrix::zeros(n, n);
    for (idx, t) in terms.iter().enumerate() {
        if mask.is_some_and(|mask| !mask[idx]) {
            continue;
        }
        m[(t.u, t.v)] += t.off;
        m[(t.v, t.u)] += t.off;
        m[(t.u, t.u)] += t.diag;
        m[(t.v, t.v)] += t.diag;
    }
    m
}

/// Random edge sampling: every edge of the base graph survives each
/// realization independently with probability `p`.
#[derive(Debug, Clone)]
pub struct ResModel {
    graph: Graph,
    p: f64,
    kind: ShiftKind,
    base: ShiftOperator,
    terms: Vec<EdgeTerm>,
}

/// One sampled shift with the survival mask that produced it (`None` when
/// no draw was needed).
#[derive(Debug, Clone)]
pub struct Realization {
    pub shift: ShiftOperator,
    pub mask: Option<Vec<bool>>,
}

impl ResModel {
    pub fn new(graph: Graph, p: f64, kind: ShiftKind) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::arg("p", format!("must lie in [0, 1], got {p}")));
        }
        if matches!(kind, ShiftKind::Custom(_)) {
            return Err(Error::Unsupported(
                "random edge sampling needs a graph-derived shift kind".into(),
            ));
        }
        let base = build_shift(&graph, &kind)?;
        let terms = edge_terms(&graph, &kind)?;
        Ok(ResModel {
            graph,
            p,
            kind,
            base,
            terms,
        })
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn kind(&self) -> &ShiftKind {
        &self.kind
    }

    /// Shift of the full graph; its `rho` bounds every realization.
    pub fn base(&self) -> &ShiftOperator {
        &self.base
    }

    pub fn rho(&self) -> f64 {
        self.base.rho()
    }

    pub fn node_count(&self) -> usize {
        self.graph.node_count()
    }

    pub fn terms(&self) -> &[EdgeTerm] {
        &self.terms
    }

    /// Same graph and kind with a different survival probability.
    pub fn with_p(&self, p: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::arg("p", format!("must lie in [0, 1], got {p}")));
        }
        Ok(ResModel { p, ..self.clone() })
    }

    /// Draws one mask bit per undirected edge. At `p = 0` or `p = 1` the
    /// outcome is certain and the random stream is left untouched.
    pub fn sample_with_mask<R: Rng + ?Sized>(&self, rng: &mut R) -> Realization {
        if self.p >= 1.0 {
            return Realization {
                shift: self.base.clone(),
                mask: None,
            };
        }
        let mask: Vec<bool> = if self.p <= 0.0 {
            vec![false; self.terms.len()]
        } else {
            self.terms.iter().map(|_| rng.random::<f64>() < self.p).collect()
        };
        let shift = self.shift_for_mask(&mask);
        Realization {
            shift,
            mask: Some(mask),
        }
    }

    /// Shift of the subgraph that keeps the edges flagged in `mask`.
    pub fn shift_for_mask(&self, mask: &[bool]) -> ShiftOperator {
        assert_eq!(mask.len(), self.terms.len(), "mask length must equal edge count");
        ShiftOperator::from_parts(
            assemble(self.node_count(), &self.terms, Some(mask)),
            self.base.rho(),
            class_of(&self.kind),
        )
    }
}

pub fn sample_res<R: Rng + ?Sized>(model: &ResModel, rng: &mut R) -> ShiftOperator {
    model.sample_with_mask(rng).shift
}

/// `E[S_t] = p S` for every graph-derived kind: each entry, degree terms
/// included, is linear in the independent edge indicators.
pub fn mean_shift(model: &ResModel) -> Matrix {
    model.base.matrix() * model.p
}
