use rayon::prelude::*;
use serde::Serialize;

use super::input::make_scaled_input;
use super::metrics::{ratio_to_db, SNR_CAP_DB};
use super::results::{ResultRow, ResultTable};
use super::scenario::{Cell, ResolvedScenario, Scenario};
use super::seeding::{trial_rng, Stream};
use crate::design::{NoiseModel, NoisePrediction, DEFAULT_GRAMIAN_TOL};
use crate::filters::{
    run_arma_exact_on, run_arma_on, run_fir_exact_on, run_fir_on, DitherQuantizer, FeedbackMode, FeedbackPlan,
    GraphFilter, ShiftSequence, ShiftSource,
};
use crate::graph::ResModel;
use crate::quantizer::{QuantizerConfig, QuantizerSchedule};
use crate::{Error, Result, Vector};

/// Trials per work unit; sums are formed per chunk and then across chunks
/// in index order, so results do not depend on the thread count.
const CHUNK: u64 = 64;

fn ordered_sum<T, F, A>(trials: usize, f: F, add: A) -> Result<T>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync,
    A: Fn(T, T) -> T + Sync,
{
    let n = trials as u64;
    let chunks: Vec<T> = (0..n.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut acc = f(c * CHUNK)?;
            for t in c * CHUNK + 1..((c + 1) * CHUNK).min(n) {
                acc = add(acc, f(t)?);
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;
    Ok(chunks.into_iter().reduce(&add).expect("at least one trial"))
}

fn add_vecs(mut a: Vec<Vector>, b: Vec<Vector>) -> Vec<Vector> {
    for (x, y) in a.iter_mut().zip(b) {
        *x += y;
    }
    a
}

/// Run length and the first step of the steady-state window.
fn horizon(filter: &GraphFilter, rho: f64, settle_tol: f64) -> (usize, usize) {
    match filter {
        GraphFilter::Fir(f) => (f.order(), 0),
        GraphFilter::Arma(a) => {
            let t = a.settling_steps(rho, settle_tol);
            (2 * t, t)
        }
    }
}

fn exact_outputs(seq: &ShiftSequence<'_>, filter: &GraphFilter, x: &Vector) -> Vec<Vector> {
    match filter {
        GraphFilter::Fir(f) => vec![run_fir_exact_on(seq, f, x)],
        GraphFilter::Arma(a) => run_arma_exact_on(seq, a, x),
    }
}

/// Mean noiseless output at each step and the summed deviation
/// `sum_t sum_trials ||y_t - mean_t||^2` over the steps from `window`.
struct NoiselessMoments {
    mean: Vec<Vector>,
    deviation: f64,
}

struct Run<'a> {
    source: ShiftSource<'a>,
    filter: &'a GraphFilter,
    x: Vector,
    steps: usize,
    window: usize,
    trials: usize,
    seed: u64,
    cell: u64,
}

impl Run<'_> {
    fn draw(&self, trial: u64) -> ShiftSequence<'_> {
        let mut rng = trial_rng(self.seed, self.cell, trial, Stream::Topology);
        self.source.draw(self.steps, &mut rng)
    }

    fn exact(&self, trial: u64) -> Vec<Vector> {
        exact_outputs(&self.draw(trial), self.filter, &self.x)
    }

    /// Sums run on offsets from trial 0, so identical draws give an exact
    /// zero deviation.
    fn moments(&self) -> Result<NoiselessMoments> {
        let origin = self.exact(0);
        let offsets = |ys: Vec<Vector>| -> Vec<Vector> { ys.iter().zip(&origin).map(|(y, o)| y - o).collect() };
        let sum = ordered_sum(self.trials, |t| Ok(offsets(self.exact(t))), add_vecs)?;
        let shift: Vec<Vector> = sum.into_iter().map(|v| v / self.trials as f64).collect();
        let deviation = ordered_sum(
            self.trials,
            |t| {
                let d = offsets(self.exact(t));
                Ok(d[self.window..]
                    .iter()
                    .zip(&shift[self.window..])
                    .map(|(y, m)| (y - m).norm_squared())
                    .sum::<f64>())
            },
            |a, b| a + b,
        )?;
        let mean = origin.iter().zip(&shift).map(|(o, m)| o + m).collect();
        Ok(NoiselessMoments { mean, deviation })
    }

    fn upper_bound_db(&self, m: &NoiselessMoments) -> Result<f64> {
        let power: f64 = m.mean[self.window..].iter().map(|v| v.norm_squared()).sum();
        if power == 0.0 {
            return Err(Error::ZeroReference);
        }
        if self.trials < 2 || m.deviation == 0.0 {
            return Ok(SNR_CAP_DB);
        }
        let var = m.deviation / (self.trials - 1) as f64;
        Ok((10.0 * (power / var).log10()).min(SNR_CAP_DB))
    }
}

/// Ratio of the mean output power to the output variance over topology
/// draws, in dB. ARMA filters are measured over the steady-state window.
pub fn upper_bound_snr(
    model: &ResModel,
    filter: &GraphFilter,
    x: &Vector,
    trials: usize,
    seed: u64,
    settle_tol: f64,
) -> Result<f64> {
    let (steps, window) = horizon(filter, model.rho(), settle_tol);
    let run = Run {
        source: ShiftSource::Random(model),
        filter,
        x: x.clone(),
        steps,
        window,
        trials,
        seed,
        cell: 0,
    };
    run.upper_bound_db(&run.moments()?)
}

/// Per-trial sums, one entry per feedback mode.
#[derive(Clone)]
struct TrialStats {
    unbiased: Vec<f64>,
    biased: Vec<f64>,
    noise: Vec<f64>,
    /// `trajectory[step][mode]` unbiased ratio.
    trajectory: Vec<Vec<f64>>,
    overflow: Vec<usize>,
    entries: Vec<usize>,
}

impl TrialStats {
    fn add(mut self, o: TrialStats) -> TrialStats {
        let sum = |a: &mut Vec<f64>, b: &[f64]| a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        sum(&mut self.unbiased, &o.unbiased);
        sum(&mut self.biased, &o.biased);
        sum(&mut self.noise, &o.noise);
        for (a, b) in self.trajectory.iter_mut().zip(&o.trajectory) {
            sum(a, b);
        }
        self.overflow.iter_mut().zip(&o.overflow).for_each(|(x, y)| *x += y);
        self.entries.iter_mut().zip(&o.entries).for_each(|(x, y)| *x += y);
        self
    }
}

fn ratio(yq: &Vector, y: &Vector) -> Result<f64> {
    super::metrics::error_ratio(yq, y)
}

/// Feedback mode actually used for `filter` when the scenario asks for
/// `requested`: diagonal modes follow the filter family.
pub fn effective_mode(requested: FeedbackMode, filter: &GraphFilter) -> FeedbackMode {
    match (requested, filter) {
        (FeedbackMode::PerStepDiag, GraphFilter::Arma(_)) => FeedbackMode::PerBranchDiag,
        (FeedbackMode::PerBranchDiag, GraphFilter::Fir(_)) => FeedbackMode::PerStepDiag,
        (m, _) => m,
    }
}

/// Analytic noise model of `filter` on `source` with per-stage variances.
pub fn noise_model(source: ShiftSource<'_>, filter: &GraphFilter, variances: &[f64]) -> Result<NoiseModel> {
    match (source, filter) {
        (ShiftSource::Fixed(s), GraphFilter::Fir(f)) => NoiseModel::fir_deterministic(s, f, variances),
        (ShiftSource::Fixed(s), GraphFilter::Arma(a)) => {
            NoiseModel::arma_deterministic(s, a, variances, DEFAULT_GRAMIAN_TOL)
        }
        (ShiftSource::Random(m), GraphFilter::Fir(f)) => NoiseModel::fir_stochastic(m, f, variances),
        (ShiftSource::Random(m), GraphFilter::Arma(a)) => NoiseModel::arma_stochastic(m, a, variances, DEFAULT_GRAMIAN_TOL),
    }
}

pub fn run_experiment(scenario: &Scenario) -> Result<ResultTable> {
    run_resolved(&scenario.resolve()?)
}

pub fn run_resolved(r: &ResolvedScenario) -> Result<ResultTable> {
    let mut rows = Vec::new();
    for cell in &r.cells {
        rows.extend(run_cell(r, cell)?);
    }
    Ok(ResultTable { rows })
}

/// Analytic predictions for one grid cell.
#[derive(Debug, Clone, Serialize)]
pub struct CellPrediction {
    pub cell: usize,
    pub filter: String,
    pub p: Option<f64>,
    pub bits: u32,
    pub sigma2: f64,
    pub plan: FeedbackPlan,
    pub off: NoisePrediction,
    pub feedback: NoisePrediction,
    /// `10 log10(zeta_off / zeta)`.
    pub predicted_gain_db: f64,
}

/// Closed-form plans and noise predictions for every cell, without any
/// simulation.
pub fn predict_scenario(r: &ResolvedScenario) -> Result<Vec<CellPrediction>> {
    let sc = &r.scenario;
    r.cells
        .iter()
        .map(|cell| {
            let (label, filter) = &r.filters[cell.filter];
            let model = cell
                .p
                .map(|p| ResModel::new(r.graph.clone(), p, sc.shift.kind()))
                .transpose()?;
            let source = match &model {
                Some(m) => ShiftSource::Random(m),
                None => ShiftSource::Fixed(&r.shift),
            };
            let cfg = QuantizerConfig::new(cell.bits, sc.quantizer.range, sc.quantizer.dither)?;
            let variances = QuantizerSchedule::uniform(cfg).variances(filter.stages());
            let noise = noise_model(source, filter, &variances)?;
            let plan = if sc.feedback == FeedbackMode::Off {
                FeedbackPlan::off(noise.nodes, filter.stages())
            } else {
                noise.solve(effective_mode(sc.feedback, filter))?.0
            };
            let off = noise.predict(&FeedbackPlan::off(noise.nodes, filter.stages()))?;
            let feedback = noise.predict(&plan)?;
            let predicted_gain_db = if off.zeta == 0.0 {
                0.0
            } else if feedback.zeta > 0.0 {
                (10.0 * (off.zeta / feedback.zeta).log10()).min(SNR_CAP_DB)
            } else {
                SNR_CAP_DB
            };
            Ok(CellPrediction {
                cell: cell.index,
                filter: label.clone(),
                p: cell.p,
                bits: cell.bits,
                sigma2: variances[0],
                plan,
                off,
                feedback,
                predicted_gain_db,
            })
        })
        .collect()
}

fn run_cell(r: &ResolvedScenario, cell: &Cell) -> Result<Vec<ResultRow>> {
    let sc = &r.scenario;
    let (label, filter) = &r.filters[cell.filter];
    let model = cell
        .p
        .map(|p| ResModel::new(r.graph.clone(), p, sc.shift.kind()))
        .transpose()?;
    let source = match &model {
        Some(m) => ShiftSource::Random(m),
        None => ShiftSource::Fixed(&r.shift),
    };
    let schedule = QuantizerSchedule::uniform(QuantizerConfig::new(
        cell.bits,
        sc.quantizer.range,
        sc.quantizer.dither,
    )?);
    let (steps, window) = horizon(filter, source.rho(), sc.settle_tol);
    let (x, _) = make_scaled_input(&r.spectrum, sc.input_seed, source, filter, sc.quantizer.range, steps)?;

    let n = source.node_count();
    let stages = filter.stages();
    let noise = noise_model(source, filter, &schedule.variances(stages))?;
    let mut plans = vec![FeedbackPlan::off(n, stages)];
    if sc.feedback != FeedbackMode::Off {
        plans.push(noise.solve(effective_mode(sc.feedback, filter))?.0);
    }
    let predicted: Vec<f64> = plans
        .iter()
        .map(|p| noise.predict(p).map(|z| z.zeta))
        .collect::<Result<_>>()?;

    let run = Run {
        source,
        filter,
        x,
        steps,
        window,
        trials: sc.trials,
        seed: sc.seed,
        cell: cell.index as u64,
    };
    let moments = run.moments()?;
    let upper = run.upper_bound_db(&moments)?;
    let modes = plans.len();
    let traj_len = if matches!(filter, GraphFilter::Arma(_)) { steps } else { 0 };

    let stats = ordered_sum(
        sc.trials,
        |t| {
            let seq = run.draw(t);
            let ys = exact_outputs(&seq, filter, &run.x);
            let dither = trial_rng(sc.seed, cell.index as u64, t, Stream::Dither);
            let mut st = TrialStats {
                unbiased: vec![0.0; modes],
                biased: vec![0.0; modes],
                noise: vec![0.0; modes],
                trajectory: vec![vec![0.0; modes]; traj_len],
                overflow: vec![0; modes],
                entries: vec![0; modes],
            };
            for (m, plan) in plans.iter().enumerate() {
                // Every mode replays the same dither stream.
                let mut q = DitherQuantizer::new(&schedule, dither.clone());
                let (yqs, trace) = match filter {
                    GraphFilter::Fir(f) => {
                        let (y, tr) = run_fir_on(&seq, f, &run.x, &mut q, plan)?;
                        (vec![y], tr)
                    }
                    GraphFilter::Arma(a) => run_arma_on(&seq, a, &run.x, &mut q, plan)?,
                };
                st.overflow[m] = trace.overflow_count;
                st.entries[m] = trace.quantized_entries;
                for (step, (yq, y)) in yqs.iter().zip(&ys).enumerate() {
                    let u = ratio(yq, y)?;
                    if traj_len > 0 {
                        st.trajectory[step][m] = u;
                    }
                    if step >= window {
                        st.unbiased[m] += u;
                        st.biased[m] += ratio(yq, &moments.mean[step])?;
                        st.noise[m] += (yq - y).norm_squared() / n as f64;
                    }
                }
            }
            Ok(st)
        },
        TrialStats::add,
    )?;

    let outputs = if traj_len > 0 { steps } else { 1 };
    let count = (sc.trials * (outputs - window)) as f64;
    Ok(plans
        .iter()
        .enumerate()
        .map(|(m, plan)| ResultRow {
            scenario: sc.id.clone(),
            filter: label.clone(),
            p: cell.p.unwrap_or(1.0),
            bits: cell.bits,
            mode: plan.mode(),
            snr_unbiased: ratio_to_db(stats.unbiased[m] / count),
            snr_biased: ratio_to_db(stats.biased[m] / count),
            zeta_predicted: predicted[m],
            zeta_empirical: stats.noise[m] / count,
            overflow_rate: if stats.entries[m] == 0 {
                0.0
            } else {
                stats.overflow[m] as f64 / stats.entries[m] as f64
            },
            trials: sc.trials,
            seed: sc.seed,
            upper_bound_db: upper,
            snr_trajectory: stats
                .trajectory
                .iter()
                .map(|s| ratio_to_db(s[m] / sc.trials as f64))
                .collect(),
        })
        .collect())
}
