use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::filters::{arma1, design_lowpass_fir, ArmaFilter, FeedbackMode, FirFilter, GraphFilter};
use crate::graph::{
    build_shift, generate_sensor_graph, load_graph, spectral_decompose, Connectivity, Graph, ShiftKind, ShiftOperator,
    Spectrum,
};
use crate::quantizer::{Dither, QuantizerConfig};
use crate::{Error, Result};

pub const DEFAULT_SETTLE_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraphSource {
    /// Edge-list file; relative paths resolve against the scenario file.
    File(PathBuf),
    Generate {
        nodes: usize,
        connectivity: Connectivity,
        seed: u64,
    },
    Inline(Graph),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShiftSpec {
    Adjacency,
    Laplacian,
    #[default]
    ScaledLaplacian,
}

impl ShiftSpec {
    pub fn kind(self) -> ShiftKind {
        match self {
            ShiftSpec::Adjacency => ShiftKind::Adjacency,
            ShiftSpec::Laplacian => ShiftKind::Laplacian,
            ShiftSpec::ScaledLaplacian => ShiftKind::ScaledLaplacian,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterSpec {
    /// Least-squares fit of the ideal low-pass response with cutoff `cutoff`.
    Lowpass { order: usize, cutoff: f64 },
    /// One low-pass design per order.
    LowpassSweep { orders: Vec<usize>, cutoff: f64 },
    Fir { taps: FirFilter },
    Arma { branches: ArmaFilter },
    /// `(I + c S)^{-1}`.
    Arma1 { c: f64 },
}

/// How filters are combined with bit depths.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pairing {
    /// Every filter at every bit depth.
    #[default]
    Product,
    /// `filters[i]` runs at `bits[i]` only.
    Zip,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantizerGrid {
    pub bits: Vec<u32>,
    #[serde(default = "unit_range")]
    pub range: f64,
    #[serde(default)]
    pub dither: Dither,
    #[serde(default)]
    pub pairing: Pairing,
}

fn unit_range() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Topology {
    #[default]
    Deterministic,
    /// Random edge sampling at each survival probability in `p`.
    Res { p: Vec<f64> },
}

/// Experiment description, read from JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub id: String,
    pub graph: GraphSource,
    #[serde(default)]
    pub shift: ShiftSpec,
    pub filters: Vec<FilterSpec>,
    pub quantizer: QuantizerGrid,
    #[serde(default)]
    pub topology: Topology,
    #[serde(default = "default_feedback")]
    pub feedback: FeedbackMode,
    pub trials: usize,
    pub seed: u64,
    #[serde(default)]
    pub input_seed: u64,
    /// ARMA runs last `2 t` steps, `t = settling_steps(rho, settle_tol)`;
    /// the SNR is averaged over the last `t`.
    #[serde(default = "default_settle_tol")]
    pub settle_tol: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

fn default_feedback() -> FeedbackMode {
    FeedbackMode::PerStepDiag
}

fn default_settle_tol() -> f64 {
    DEFAULT_SETTLE_TOL
}

/// One point of the experiment grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub index: usize,
    pub filter: usize,
    /// `None` for a deterministic topology.
    pub p: Option<f64>,
    pub bits: u32,
}

/// A scenario with its graph, shift and filters built.
#[derive(Debug, Clone)]
pub struct ResolvedScenario {
    pub scenario: Scenario,
    pub graph: Graph,
    pub shift: ShiftOperator,
    pub spectrum: Spectrum,
    pub filters: Vec<(String, GraphFilter)>,
    pub cells: Vec<Cell>,
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Reads a scenario file, resolving a relative graph path against the
    /// file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut sc = Scenario::from_json(&text)?;
        if let GraphSource::File(f) = &mut sc.graph {
            if f.is_relative() {
                if let Some(dir) = path.parent() {
                    *f = dir.join(&*f);
                }
            }
        }
        Ok(sc)
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::arg("trials", "must be at least 1"));
        }
        if self.filters.is_empty() {
            return Err(Error::arg("filters", "at least one filter is required"));
        }
        if self.quantizer.bits.is_empty() {
            return Err(Error::arg("quantizer.bits", "at least one bit depth is required"));
        }
        for &b in &self.quantizer.bits {
            QuantizerConfig::new(b, self.quantizer.range, self.quantizer.dither)?;
        }
        if let Topology::Res { p } = &self.topology {
            if p.is_empty() {
                return Err(Error::arg("topology.p", "empty probability grid"));
            }
            if let Some(bad) = p.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                return Err(Error::arg("topology.p", format!("{bad} is outside [0, 1]")));
            }
        }
        if !(self.settle_tol > 0.0 && self.settle_tol < 1.0) {
            return Err(Error::arg("settle_tol", "must lie in (0, 1)"));
        }
        Ok(())
    }

    pub fn resolve(&self) -> Result<ResolvedScenario> {
        self.validate()?;
        let graph = match &self.graph {
            GraphSource::File(path) => load_graph(path)?,
            GraphSource::Generate {
                nodes,
                connectivity,
                seed,
            } => generate_sensor_graph(*nodes, *connectivity, *seed)?,
            GraphSource::Inline(g) => g.clone(),
        };
        let shift = build_shift(&graph, &self.shift.kind())?;
        let spectrum = spectral_decompose(&shift)?;

        let mut filters = Vec::new();
        for spec in &self.filters {
            match spec {
                FilterSpec::Lowpass { order, cutoff } => filters.push(lowpass(&shift, *order, *cutoff)?),
                FilterSpec::LowpassSweep { orders, cutoff } => {
                    for &order in orders {
                        filters.push(lowpass(&shift, order, *cutoff)?);
                    }
                }
                FilterSpec::Fir { taps } => filters.push((format!("fir_{}", taps.order()), GraphFilter::Fir(taps.clone()))),
                FilterSpec::Arma { branches } => {
                    branches.check_stable(shift.rho())?;
                    filters.push((
                        format!("arma_{}", branches.branch_count()),
                        GraphFilter::Arma(branches.clone()),
                    ))
                }
                FilterSpec::Arma1 { c } => filters.push((format!("arma1_c{c}"), GraphFilter::Arma(arma1(*c, &shift)?))),
            }
        }

        let bits = &self.quantizer.bits;
        let pairs: Vec<(usize, u32)> = match self.quantizer.pairing {
            Pairing::Product => (0..filters.len())
                .flat_map(|f| bits.iter().map(move |&b| (f, b)))
                .collect(),
            Pairing::Zip => {
                if bits.len() != filters.len() {
                    return Err(Error::arg(
                        "quantizer.bits",
                        format!("zip pairing needs {} bit depths, got {}", filters.len(), bits.len()),
                    ));
                }
                bits.iter().copied().enumerate().collect()
            }
        };
        let ps: Vec<Option<f64>> = match &self.topology {
            Topology::Deterministic => vec![None],
            Topology::Res { p } => p.iter().copied().map(Some).collect(),
        };
        let cells = pairs
            .iter()
            .flat_map(|&(filter, bits)| ps.iter().map(move |&p| (filter, p, bits)))
            .enumerate()
            .map(|(index, (filter, p, bits))| Cell { index, filter, p, bits })
            .collect();

        Ok(ResolvedScenario {
            scenario: self.clone(),
            graph,
            shift,
            spectrum,
            filters,
            cells,
        })
    }
}

fn lowpass(shift: &ShiftOperator, order: usize, cutoff: f64) -> Result<(String, GraphFilter)> {
    let d = design_lowpass_fir(shift, order, cutoff)?;
    Ok((format!("lowpass_fir_{order}"), GraphFilter::Fir(d.filter)))
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINI: &str = r#"{
        "id": "mini",
        "graph": {"generate": {"nodes": 8, "connectivity": {"edges": 14}, "seed": 2}},
        "filters": [{"lowpass_sweep": {"orders": [3, 4], "cutoff": 0.5}}, {"arma1": {"c": 0.5}}],
        "quantizer": {"bits": [8, 10, 12], "pairing": "zip"},
        "topology": {"res": {"p": [0.5, 1.0]}},
        "trials": 4,
        "seed": 9
    }"#;

    #[test]
    fn parses_and_expands_grid() {
        let sc = Scenario::from_json(MINI).unwrap();
        assert_eq!(sc.shift, ShiftSpec::ScaledLaplacian);
        assert_eq!(sc.feedback, FeedbackMode::PerStepDiag);
        let r = sc.resolve().unwrap();
        assert_eq!(r.filters.len(), 3);
        assert_eq!(r.cells.len(), 6);
        assert_eq!(r.cells[5], Cell { index: 5, filter: 2, p: Some(1.0), bits: 12 });
        let back = Scenario::from_json(&serde_json::to_string(&sc).unwrap()).unwrap();
        assert_eq!(back, sc);
    }

    #[test]
    fn rejects_bad_scenarios() {
        let mut sc = Scenario::from_json(MINI).unwrap();
        sc.trials = 0;
        assert!(sc.resolve().is_err());
        let mut sc = Scenario::from_json(MINI).unwrap();
        sc.quantizer.bits.pop();
        assert!(sc.resolve().is_err());
        let mut sc = Scenario::from_json(MINI).unwrap();
        sc.topology = Topology::Res { p: vec![1.5] };
        assert!(sc.resolve().is_err());
        assert!(Scenario::from_json(r#"{"id": "x"}"#).is_err());
    }
}
