//! Monte Carlo experiments, SNR metrics, validation oracles and result
//! tables.

mod experiment;
mod input;
mod metrics;
pub mod oracles;
mod results;
mod scenario;
mod seeding;
pub mod validate;

pub use experiment::{effective_mode, predict_scenario, CellPrediction, noise_model, run_experiment, run_resolved, upper_bound_snr};
pub use input::{make_input, make_scaled_input};
pub use metrics::{error_ratio, mean_to_variance_db, ratio_to_db, snr, SnrMode, SNR_CAP_DB};
pub use results::{emit_results, read_results, Format, ResultRow, ResultTable, CSV_HEADER};
pub use scenario::{
    Cell, FilterSpec, GraphSource, Pairing, QuantizerGrid, ResolvedScenario, Scenario, ShiftSpec, Topology,
    DEFAULT_SETTLE_TOL,
};
pub use seeding::{trial_rng, Stream};
