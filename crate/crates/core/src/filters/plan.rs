use serde::{Deserialize, Serialize};

use crate::{Error, Matrix, Result, Vector};

/// Parametrization of the diagonal feedback weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeedbackMode {
    Off,
    /// One weight per node and FIR step.
    PerStepDiag,
    /// One weight per FIR step (or ARMA branch), shared by all nodes.
    PerStepScalar,
    /// One weight per node, shared by all steps/branches.
    StaticDiag,
    /// One weight per node and ARMA branch.
    PerBranchDiag,
}

impl FeedbackMode {
    pub fn name(self) -> &'static str {
        match self {
            FeedbackMode::Off => "off",
            FeedbackMode::PerStepDiag => "per_step_diag",
            FeedbackMode::PerStepScalar => "per_step_scalar",
            FeedbackMode::StaticDiag => "static_diag",
            FeedbackMode::PerBranchDiag => "per_branch_diag",
        }
    }

    /// Number of free weights for `nodes` nodes and `stages` stages.
    pub fn param_count(self, nodes: usize, stages: usize) -> usize {
        match self {
            FeedbackMode::Off => 0,
            FeedbackMode::PerStepDiag | FeedbackMode::PerBranchDiag => nodes * stages,
            FeedbackMode::PerStepScalar => stages,
            FeedbackMode::StaticDiag => nodes,
        }
    }
}

/// Diagonal feedback weights `Theta` (nodes x stages): column `k` holds the
/// diagonal of the matrix applied to the error of stage `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPlan", into = "RawPlan")]
pub struct FeedbackPlan {
    mode: FeedbackMode,
    theta: Matrix,
}

#[derive(Serialize, Deserialize)]
struct RawPlan {
    mode: FeedbackMode,
    nodes: usize,
    stages: usize,
    /// Row-major `nodes x stages`.
    theta: Vec<f64>,
}

impl TryFrom<RawPlan> for FeedbackPlan {
    type Error = Error;

    fn try_from(raw: RawPlan) -> Result<Self> {
        if raw.theta.len() != raw.nodes * raw.stages {
            return Err(Error::DimensionMismatch {
                expected: raw.nodes * raw.stages,
                got: raw.theta.len(),
            });
        }
        let theta = Matrix::from_row_slice(raw.nodes, raw.stages, &raw.theta);
        let plan = FeedbackPlan {
            mode: raw.mode,
            theta,
        };
        plan.check_shape_of_mode()?;
        Ok(plan)
    }
}

impl From<FeedbackPlan> for RawPlan {
    fn from(p: FeedbackPlan) -> Self {
        let (nodes, stages) = p.theta.shape();
        RawPlan {
            mode: p.mode,
            nodes,
            stages,
            theta: p.theta.transpose().iter().copied().collect(),
        }
    }
}

impl FeedbackPlan {
    pub fn off(nodes: usize, stages: usize) -> Self {
        FeedbackPlan {
            mode: FeedbackMode::Off,
            theta: Matrix::zeros(nodes, stages),
        }
    }

    /// Builds a plan of `mode` from its free weights, laid out as in
    /// [`FeedbackPlan::params`].
    pub fn from_params(mode: FeedbackMode, nodes: usize, stages: usize, params: &[f64]) -> Result<Self> {
        let expected = mode.param_count(nodes, stages);
        if params.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                got: params.len(),
            });
        }
        if params.iter().any(|v| !v.is_finite()) {
            return Err(Error::arg("theta", "feedback weights must be finite"));
        }
        let theta = match mode {
            FeedbackMode::Off => Matrix::zeros(nodes, stages),
            FeedbackMode::PerStepDiag | FeedbackMode::PerBranchDiag => {
                Matrix::from_column_slice(nodes, stages, params)
            }
            FeedbackMode::PerStepScalar => Matrix::from_fn(nodes, stages, |_, k| params[k]),
            FeedbackMode::StaticDiag => Matrix::from_fn(nodes, stages, |i, _| params[i]),
        };
        Ok(FeedbackPlan { mode, theta })
    }

    /// Free weights: stage-major for diagonal modes.
    pub fn params(&self) -> Vec<f64> {
        match self.mode {
            FeedbackMode::Off => Vec::new(),
            FeedbackMode::PerStepDiag | FeedbackMode::PerBranchDiag => self.theta.iter().copied().collect(),
            FeedbackMode::PerStepScalar => (0..self.stages()).map(|k| self.theta[(0, k)]).collect(),
            FeedbackMode::StaticDiag => (0..self.nodes()).map(|i| self.theta[(i, 0)]).collect(),
        }
    }

    pub fn mode(&self) -> FeedbackMode {
        self.mode
    }

    pub fn theta(&self) -> &Matrix {
        &self.theta
    }

    pub fn nodes(&self) -> usize {
        self.theta.nrows()
    }

    pub fn stages(&self) -> usize {
        self.theta.ncols()
    }

    pub fn is_off(&self) -> bool {
        self.mode == FeedbackMode::Off
    }

    /// Diagonal of the feedback matrix for stage `k`.
    pub fn weights(&self, k: usize) -> Vector {
        self.theta.column(k).into_owned()
    }

    pub fn check_dims(&self, nodes: usize, stages: usize) -> Result<()> {
        if self.nodes() != nodes {
            return Err(Error::DimensionMismatch {
                expected: nodes,
                got: self.nodes(),
            });
        }
        if self.stages() != stages {
            return Err(Error::DimensionMismatch {
                expected: stages,
                got: self.stages(),
            });
        }
        Ok(())
    }

    fn check_shape_of_mode(&self) -> Result<()> {
        let rebuilt = FeedbackPlan::from_params(self.mode, self.nodes(), self.stages(), &self.params())?;
        if rebuilt.theta != self.theta {
            return Err(Error::arg(
                "theta",
                format!("weights are not consistent with mode {}", self.mode.name()),
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn modes_expand_to_theta() {
        let p = FeedbackPlan::from_params(FeedbackMode::PerStepScalar, 3, 2, &[0.5, -1.0]).unwrap();
        assert_eq!(p.weights(1), Vector::from_vec(vec![-1.0; 3]));
        let p = FeedbackPlan::from_params(FeedbackMode::StaticDiag, 2, 3, &[0.1, 0.2]).unwrap();
        assert_eq!(p.theta()[(1, 2)], 0.2);
        assert_eq!(p.params(), vec![0.1, 0.2]);
        assert!(FeedbackPlan::from_params(FeedbackMode::PerStepDiag, 2, 2, &[1.0]).is_err());
        assert!(FeedbackPlan::off(3, 2).weights(0).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn json_is_row_major() {
        let p = FeedbackPlan::from_params(FeedbackMode::PerStepDiag, 2, 2, &[1.0, 2.0, 3.0, 4.0]).unwrap();
        let v: serde_json::Value = serde_json::to_value(&p).unwrap();
        assert_eq!(v["theta"], serde_json::json!([1.0, 3.0, 2.0, 4.0]));
        assert_eq!(v["mode"], "per_step_diag");
        let back: FeedbackPlan = serde_json::from_value(v).unwrap();
        assert_eq!(back, p);

        let bad = serde_json::json!({"mode": "static_diag", "nodes": 2, "stages": 2, "theta": [1.0, 2.0, 3.0, 4.0]});
        assert!(serde_json::from_value::<FeedbackPlan>(bad).is_err());
    }
}
