use rand::Rng;

use super::{check_len, ArmaFilter, FeedbackPlan, FirFilter, GraphFilter};
use crate::graph::{Realization, ResModel, ShiftOperator};
use crate::quantizer::{quantize, QuantizationResult, QuantizerSchedule};
use crate::{Matrix, Result, Vector};

/// Fraction of the quantizer range a dry run of the normalized input may use.
pub const INPUT_HEADROOM: f64 = 0.9;

/// Where the per-step shift comes from.
#[derive(Debug, Clone, Copy)]
pub enum ShiftSource<'a> {
    Fixed(&'a ShiftOperator),
    Random(&'a ResModel),
}

impl<'a> ShiftSource<'a> {
    pub fn node_count(&self) -> usize {
        match self {
            ShiftSource::Fixed(s) => s.node_count(),
            ShiftSource::Random(m) => m.node_count(),
        }
    }

    /// Bound on the spectral norm of every shift this source produces.
    pub fn rho(&self) -> f64 {
        match self {
            ShiftSource::Fixed(s) => s.rho(),
            ShiftSource::Random(m) => m.rho(),
        }
    }

    /// Draws `len` shifts in step order. A fixed source consumes no
    /// randomness.
    pub fn draw<R: Rng + ?Sized>(&self, len: usize, rng: &mut R) -> ShiftSequence<'a> {
        match *self {
            ShiftSource::Fixed(s) => ShiftSequence::fixed(s, len),
            ShiftSource::Random(m) => {
                ShiftSequence::Sampled((0..len).map(|_| m.sample_with_mask(rng)).collect())
            }
        }
    }
}

/// Shifts used at steps `0..len()`.
#[derive(Debug, Clone)]
pub enum ShiftSequence<'a> {
    Fixed(&'a ShiftOperator, usize),
    Sampled(Vec<Realization>),
}

impl<'a> ShiftSequence<'a> {
    pub fn fixed(shift: &'a ShiftOperator, len: usize) -> Self {
        ShiftSequence::Fixed(shift, len)
    }

    pub fn len(&self) -> usize {
        match self {
            ShiftSequence::Fixed(_, len) => *len,
            ShiftSequence::Sampled(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, step: usize) -> &Matrix {
        match self {
            ShiftSequence::Fixed(s, len) => {
                assert!(step < *len, "shift step {step} out of range");
                s.matrix()
            }
            ShiftSequence::Sampled(v) => v[step].shift.matrix(),
        }
    }

    pub fn masks(&self) -> Vec<Option<Vec<bool>>> {
        match self {
            ShiftSequence::Fixed(_, len) => vec![None; *len],
            ShiftSequence::Sampled(v) => v.iter().map(|r| r.mask.clone()).collect(),
        }
    }
}

/// Produces the value a node transmits and the error it stores locally.
pub trait StateQuantizer {
    fn quantize(&mut self, stage: usize, w: &Vector) -> QuantizationResult;
}

/// The real quantizer, stage ranges taken from the schedule.
pub struct DitherQuantizer<'a, R> {
    schedule: &'a QuantizerSchedule,
    rng: R,
}

impl<'a, R: Rng> DitherQuantizer<'a, R> {
    pub fn new(schedule: &'a QuantizerSchedule, rng: R) -> Self {
        DitherQuantizer { schedule, rng }
    }
}

impl<R: Rng> StateQuantizer for DitherQuantizer<'_, R> {
    fn quantize(&mut self, stage: usize, w: &Vector) -> QuantizationResult {
        quantize(w, &self.schedule.stage(stage), &mut self.rng)
    }
}

impl<Q: StateQuantizer + ?Sized> StateQuantizer for &mut Q {
    fn quantize(&mut self, stage: usize, w: &Vector) -> QuantizationResult {
        (**self).quantize(stage, w)
    }
}

/// Diagnostics of one quantized run. `states[t][b]` and `errors[t][b]` are
/// indexed by step, then branch (FIR runs have a single branch).
#[derive(Debug, Clone, Default)]
pub struct ExecutionTrace {
    /// States before quantization at each step.
    pub states: Vec<Vec<Vector>>,
    pub errors: Vec<Vec<Vector>>,
    pub overflow_count: usize,
    pub quantized_entries: usize,
    /// Survival masks of the sampled shifts (`None` for fixed shifts).
    pub masks: Vec<Option<Vec<bool>>>,
    /// Scale applied to the input before the run (1 when not normalized).
    pub input_scale: f64,
}

impl ExecutionTrace {
    fn new(masks: Vec<Option<Vec<bool>>>) -> Self {
        ExecutionTrace {
            masks,
            input_scale: 1.0,
            ..Default::default()
        }
    }

    pub fn overflow_rate(&self) -> f64 {
        if self.quantized_entries == 0 {
            0.0
        } else {
            self.overflow_count as f64 / self.quantized_entries as f64
        }
    }
}

// Fusion with error feedback: S q - D e, node i subtracting theta_i e_i.
fn fuse(shift: &Matrix, q: &QuantizationResult, plan: &FeedbackPlan, stage: usize) -> Vector {
    let mut next = shift * &q.quantized;
    if !plan.is_off() {
        let theta = plan.theta();
        for i in 0..next.len() {
            next[i] -= theta[(i, stage)] * q.error[i];
        }
    }
    next
}

pub fn run_fir_exact_on(shifts: &ShiftSequence<'_>, fir: &FirFilter, x: &Vector) -> Vector {
    let taps = fir.taps();
    let mut w = x.clone();
    let mut y = x * taps[0];
    for (k, &phi) in taps.iter().enumerate().skip(1) {
        w = shifts.get(k - 1) * &w;
        y.axpy(phi, &w, 1.0);
    }
    y
}

/// Quantized FIR recursion on a given shift sequence (length `K`): each
/// step quantizes the current state, fuses the quantized values through the
/// step's shift and subtracts the weighted local error.
pub fn run_fir_on<Q: StateQuantizer>(
    shifts: &ShiftSequence<'_>,
    fir: &FirFilter,
    x: &Vector,
    quantizer: &mut Q,
    plan: &FeedbackPlan,
) -> Result<(Vector, ExecutionTrace)> {
    let n = x.len();
    let order = fir.order();
    plan.check_dims(n, order)?;
    check_len(order, shifts.len())?;
    check_len(shifts.get(0).nrows(), n)?;

    let taps = fir.taps();
    let mut trace = ExecutionTrace::new(shifts.masks());
    let mut w = x.clone();
    let mut y = x * taps[0];
    for k in 1..=order {
        let q = quantizer.quantize(k - 1, &w);
        trace.overflow_count += q.overflow_count;
        trace.quantized_entries += n;
        let next = fuse(shifts.get(k - 1), &q, plan, k - 1);
        trace.states.push(vec![std::mem::replace(&mut w, next)]);
        trace.errors.push(vec![q.error]);
        y.axpy(taps[k], &w, 1.0);
    }
    Ok((y, trace))
}

/// Exact ARMA outputs `y_1, ..., y_T` from zero initial states.
pub fn run_arma_exact_on(shifts: &ShiftSequence<'_>, arma: &ArmaFilter, x: &Vector) -> Vec<Vector> {
    let mut states = vec![Vector::zeros(x.len()); arma.branch_count()];
    (0..shifts.len())
        .map(|t| {
            let s = shifts.get(t);
            let mut y = Vector::zeros(x.len());
            for (w, b) in states.iter_mut().zip(arma.branches()) {
                let mut next = s * &*w;
                next *= b.psi;
                next.axpy(b.phi, x, 1.0);
                *w = next;
                y += &*w;
            }
            y
        })
        .collect()
}

/// Quantized ARMA recursion; every branch shares the step's shift.
pub fn run_arma_on<Q: StateQuantizer>(
    shifts: &ShiftSequence<'_>,
    arma: &ArmaFilter,
    x: &Vector,
    quantizer: &mut Q,
    plan: &FeedbackPlan,
) -> Result<(Vec<Vector>, ExecutionTrace)> {
    let n = x.len();
    plan.check_dims(n, arma.branch_count())?;
    if !shifts.is_empty() {
        check_len(shifts.get(0).nrows(), n)?;
    }
    let mut trace = ExecutionTrace::new(shifts.masks());
    let mut states = vec![Vector::zeros(n); arma.branch_count()];
    let mut outputs = Vec::with_capacity(shifts.len());
    for t in 0..shifts.len() {
        let s = shifts.get(t);
        let mut y = Vector::zeros(n);
        let mut step_states = Vec::with_capacity(states.len());
        let mut step_errors = Vec::with_capacity(states.len());
        for (k, (w, b)) in states.iter_mut().zip(arma.branches()).enumerate() {
            let q = quantizer.quantize(k, w);
            trace.overflow_count += q.overflow_count;
            trace.quantized_entries += n;
            let mut next = s * &q.quantized;
            next *= b.psi;
            next.axpy(b.phi, x, 1.0);
            if !plan.is_off() {
                for i in 0..n {
                    next[i] -= plan.theta()[(i, k)] * q.error[i];
                }
            }
            step_states.push(std::mem::replace(w, next));
            step_errors.push(q.error);
            y += &*w;
        }
        trace.states.push(step_states);
        trace.errors.push(step_errors);
        outputs.push(y);
    }
    Ok((outputs, trace))
}

/// Draws the `K` shifts first, then runs the quantizer from the same stream.
pub fn run_fir_quantized<R: Rng>(
    source: ShiftSource<'_>,
    fir: &FirFilter,
    x: &Vector,
    schedule: &QuantizerSchedule,
    plan: &FeedbackPlan,
    rng: &mut R,
) -> Result<(Vector, ExecutionTrace)> {
    check_len(source.node_count(), x.len())?;
    let shifts = source.draw(fir.order(), rng);
    let mut q = DitherQuantizer::new(schedule, rng);
    run_fir_on(&shifts, fir, x, &mut q, plan)
}

/// Runs `t_max` ARMA steps, emitting the whole output sequence.
pub fn run_arma_quantized<R: Rng>(
    source: ShiftSource<'_>,
    arma: &ArmaFilter,
    x: &Vector,
    schedule: &QuantizerSchedule,
    plan: &FeedbackPlan,
    t_max: usize,
    rng: &mut R,
) -> Result<(Vec<Vector>, ExecutionTrace)> {
    check_len(source.node_count(), x.len())?;
    arma.check_stable(source.rho())?;
    let shifts = source.draw(t_max, rng);
    let mut q = DitherQuantizer::new(schedule, rng);
    run_arma_on(&shifts, arma, x, &mut q, plan)
}

/// Scales `x` so every transmitted state stays within `INPUT_HEADROOM * range`.
///
/// Fixed shifts use a dry exact run. Random shifts use the 2-norm bound
/// implied by `||S_t|| <= rho`. ARMA dry runs last `arma_steps` steps.
pub fn normalize_input(
    source: ShiftSource<'_>,
    filter: &GraphFilter,
    x: &Vector,
    range: f64,
    arma_steps: usize,
) -> Result<(Vector, f64)> {
    check_len(source.node_count(), x.len())?;
    let peak = match (source, filter) {
        (ShiftSource::Fixed(s), GraphFilter::Fir(fir)) => {
            let mut w = x.clone();
            let mut peak = w.amax();
            for _ in 1..fir.order() {
                w = s.matrix() * &w;
                peak = peak.max(w.amax());
            }
            peak
        }
        (ShiftSource::Fixed(s), GraphFilter::Arma(arma)) => {
            arma.check_stable(s.rho())?;
            let mut states = vec![Vector::zeros(x.len()); arma.branch_count()];
            let mut peak = 0.0_f64;
            for _ in 0..arma_steps {
                for (w, b) in states.iter_mut().zip(arma.branches()) {
                    *w = (s.matrix() * &*w) * b.psi + x * b.phi;
                    peak = peak.max(w.amax());
                }
            }
            peak
        }
        (ShiftSource::Random(m), GraphFilter::Fir(fir)) => {
            let norm = x.norm();
            (0..fir.order())
                .map(|k| norm * m.rho().powi(k as i32))
                .fold(0.0, f64::max)
        }
        (ShiftSource::Random(m), GraphFilter::Arma(arma)) => {
            arma.check_stable(m.rho())?;
            let norm = x.norm();
            arma.branches()
                .iter()
                .map(|b| b.phi.abs() * norm / (1.0 - b.psi.abs() * m.rho()))
                .fold(0.0, f64::max)
        }
    };
    let scale = if peak > 0.0 { INPUT_HEADROOM * range / peak } else { 1.0 };
    Ok((x * scale, scale))
}
