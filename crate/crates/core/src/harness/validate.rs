//! Oracle suites comparing the analytic machinery with brute force and
//! simulation. Used by `qefb validate` and the acceptance tests.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::oracles::{
    enumerate_expected_sms, finite_difference_gradient, grid_search_alpha, matrix_gradient, matrix_objective,
    mc_expected_sms, mc_zeta, NoiseOnlySpec,
};
use crate::design::{
    iteration_bound, kernel_tensor, observability_gramian, stochastic_gramian, NoiseModel, SourceModel,
    DEFAULT_GRAMIAN_TOL,
};
use crate::filters::{ArmaBranch, ArmaFilter, FeedbackMode, FeedbackPlan, FirFilter, GraphFilter, ShiftSource};
use crate::graph::{build_shift, generate_sensor_graph, symmetric_eigenvalues, Connectivity, Graph, ResModel, ShiftKind};
use crate::{Matrix, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Kernel,
    Gramian,
    Optimality,
    Prediction,
}

impl Suite {
    pub const ALL: [Suite; 4] = [Suite::Kernel, Suite::Gramian, Suite::Optimality, Suite::Prediction];
}

#[derive(Debug, Clone)]
pub struct ValidateOptions {
    /// Random instances per suite.
    pub instances: usize,
    /// Monte Carlo trials per estimate.
    pub trials: usize,
    pub seed: u64,
    /// Grid spacing of the optimality search.
    pub grid_step: f64,
}

impl ValidateOptions {
    pub fn full() -> Self {
        ValidateOptions {
            instances: 50,
            trials: 100_000,
            seed: 20240917,
            grid_step: 1e-3,
        }
    }

    pub fn quick() -> Self {
        ValidateOptions {
            instances: 8,
            trials: 20_000,
            seed: 20240917,
            grid_step: 1e-2,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteReport {
    pub suite: Suite,
    pub checks: Vec<Check>,
    pub seconds: f64,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

pub fn run_suite(suite: Suite, opts: &ValidateOptions) -> Result<SuiteReport> {
    let start = Instant::now();
    let checks = match suite {
        Suite::Kernel => kernel_checks(opts)?,
        Suite::Gramian => gramian_checks(opts)?,
        Suite::Optimality => optimality_checks(opts)?,
        Suite::Prediction => prediction_checks(opts)?,
    };
    Ok(SuiteReport {
        suite,
        checks,
        seconds: start.elapsed().as_secs_f64(),
    })
}

fn check(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Check {
    Check {
        name: name.into(),
        passed,
        detail: detail.into(),
    }
}

const KINDS: [ShiftKind; 3] = [ShiftKind::Adjacency, ShiftKind::Laplacian, ShiftKind::ScaledLaplacian];

/// Connected random graph with `n` nodes, `edges` edges and weights in
/// `[0.5, 1.5]`.
pub fn random_graph(rng: &mut ChaCha8Rng, n: usize, edges: usize) -> Result<Graph> {
    let g = generate_sensor_graph(n, Connectivity::Edges(edges), rng.random())?;
    let weighted: Vec<_> = g.edges().iter().map(|e| (e.u, e.v, rng.random_range(0.5..1.5))).collect();
    Graph::new(n, weighted)
}

/// Rescales the weights so the shift of `kind` has spectral radius `target`
/// (scaled Laplacians are left alone).
pub fn normalized(graph: &Graph, kind: &ShiftKind, target: f64) -> Result<Graph> {
    if *kind == ShiftKind::ScaledLaplacian {
        return Ok(graph.clone());
    }
    let rho = build_shift(graph, kind)?.rho();
    let c = target / rho;
    Graph::new(graph.node_count(), graph.edges().iter().map(|e| (e.u, e.v, e.w * c)))
}

fn random_symmetric(rng: &mut ChaCha8Rng, n: usize) -> Matrix {
    let a = Matrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    (&a + a.transpose()) * 0.5
}

fn edge_range(rng: &mut ChaCha8Rng, n: usize, max_edges: usize) -> usize {
    let hi = max_edges.min(n * (n - 1) / 2);
    rng.random_range(n - 1..=hi)
}

fn kernel_checks(opts: &ValidateOptions) -> Result<Vec<Check>> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut checks = Vec::new();

    let mut worst = 0.0_f64;
    let mut worst_full = 0.0_f64;
    for i in 0..opts.instances {
        let n = rng.random_range(3..=7);
        let m = edge_range(&mut rng, n, 12);
        let kind = KINDS[i % 3].clone();
        let g = normalized(&random_graph(&mut rng, n, m)?, &kind, rng.random_range(0.5..1.5))?;
        let p = rng.random_range(0.05..0.95);
        let model = ResModel::new(g, p, kind)?;
        let mm = random_symmetric(&mut rng, n);
        let exact = enumerate_expected_sms(&model, &mm)?;
        let mut kernel = kernel_tensor(&model);
        kernel.materialize();
        let dense = kernel.expected_sms_dense(&mm);
        let factored = kernel.expected_sms_factored(&mm);
        worst = worst.max((&dense - &exact).amax()).max((&factored - &exact).amax());

        let full = ResModel::new(model.graph().clone(), 1.0, model.kind().clone())?;
        let s = full.base().matrix();
        worst_full = worst_full.max((kernel_tensor(&full).expected_sms(&mm) - s * &mm * s).amax());
    }
    checks.push(check(
        "kernel equals enumeration over all edge masks",
        worst <= 1e-12,
        format!("{} instances, max abs deviation {worst:.3e}", opts.instances),
    ));
    checks.push(check(
        "kernel at p = 1 equals S M S",
        worst_full <= 1e-12,
        format!("max abs deviation {worst_full:.3e}"),
    ));

    // Monte Carlo on graphs too large to enumerate.
    let mut inside = 0usize;
    let mut total = 0usize;
    let mut worst_z = 0.0_f64;
    for (i, kind) in KINDS.iter().enumerate() {
        let n = 10 + 2 * i;
        let g = normalized(&random_graph(&mut rng, n, 3 * n)?, kind, 1.0)?;
        let model = ResModel::new(g, [0.3, 0.6, 0.85][i], kind.clone())?;
        let mm = random_symmetric(&mut rng, n);
        let analytic = kernel_tensor(&model).expected_sms(&mm);
        let (mean, se) = mc_expected_sms(&model, &mm, opts.trials, opts.seed.wrapping_add(i as u64));
        for r in 0..n {
            for c in r..n {
                total += 1;
                let d = (analytic[(r, c)] - mean[(r, c)]).abs();
                let z = if d <= 1e-12 { 0.0 } else { d / se[(r, c)] };
                worst_z = worst_z.max(z);
                if z <= 3.0 {
                    inside += 1;
                }
            }
        }
    }
    let frac = inside as f64 / total as f64;
    checks.push(check(
        "kernel matches Monte Carlo within 3 SE on >= 99% of entries",
        frac >= 0.99,
        format!("{inside}/{total} entries inside, worst z {worst_z:.2}, {} samples", opts.trials),
    ));
    Ok(checks)
}

fn spectral_norm(m: &Matrix) -> f64 {
    symmetric_eigenvalues(m).map_or(f64::NAN, |e| e.amax())
}

fn psd_floor(m: &Matrix) -> f64 {
    symmetric_eigenvalues(m).map_or(f64::NAN, |e| e.min())
}

/// `E[S_t W S_t]` by enumeration when the graph is small enough, else by
/// the kernel.
fn expected_sms_reference(model: &ResModel, w: &Matrix) -> Result<Matrix> {
    if model.graph().edge_count() <= 14 {
        enumerate_expected_sms(model, w)
    } else {
        Ok(kernel_tensor(model).expected_sms(w))
    }
}

fn gramian_checks(opts: &ValidateOptions) -> Result<Vec<Check>> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x6a09);
    let qs = [0.1, 0.3, 0.5, 0.7, 0.9, 0.95];
    let tol = DEFAULT_GRAMIAN_TOL;
    let (mut det_res, mut sto_res, mut floor, mut series, mut degenerate) = (0.0_f64, 0.0_f64, f64::MAX, 0.0_f64, 0.0_f64);
    let mut over_bound = Vec::new();
    for i in 0..opts.instances {
        let n = rng.random_range(3..=8);
        let m = edge_range(&mut rng, n, 12);
        let kind = KINDS[i % 3].clone();
        let g = random_graph(&mut rng, n, m)?;
        let q = qs[i % qs.len()];
        let p = rng.random_range(0.1..0.95);
        let model = ResModel::new(g, p, kind)?;
        let shift = model.base();
        let psi = if i % 2 == 0 { q / shift.rho() } else { -q / shift.rho() };
        let s = shift.matrix();
        let eye = Matrix::identity(n, n);
        let bound = iteration_bound(q, tol, n);

        let w0 = observability_gramian(shift, psi, tol)?;
        det_res = det_res.max((&w0.matrix - (s * &w0.matrix * s * (psi * psi) + &eye)).norm());
        floor = floor.min(psd_floor(&(&w0.matrix - &eye)));
        if w0.iterations > bound {
            over_bound.push(format!("det #{i}: {} > {bound}", w0.iterations));
        }

        // truncated series sum_t (psi S)^t (psi S)^t
        let ps = s * psi;
        let mut acc = Matrix::zeros(n, n);
        let mut power = eye.clone();
        for _ in 0..=bound + 10 {
            acc += power.transpose() * &power;
            power = &power * &ps;
        }
        series = series.max((&acc - &w0.matrix).norm());

        let wp = stochastic_gramian(&model, psi, tol)?;
        let reference = expected_sms_reference(&model, &wp.matrix)?;
        sto_res = sto_res.max((&wp.matrix - (reference * (psi * psi) + &eye)).norm());
        floor = floor.min(psd_floor(&(&wp.matrix - &eye)));
        if wp.iterations > bound {
            over_bound.push(format!("stochastic #{i}: {} > {bound}", wp.iterations));
        }

        let full = stochastic_gramian(&model.with_p(1.0)?, psi, tol)?;
        degenerate = degenerate.max((&full.matrix - &w0.matrix).amax());
    }
    Ok(vec![
        check(
            "deterministic residual <= 1e-10",
            det_res <= 1e-10,
            format!("max {det_res:.3e}"),
        ),
        check(
            "stochastic residual <= 1e-10 (expectation by enumeration)",
            sto_res <= 1e-10,
            format!("max {sto_res:.3e}"),
        ),
        check(
            "iteration counts within the geometric bound",
            over_bound.is_empty(),
            if over_bound.is_empty() {
                "all within".to_string()
            } else {
                over_bound.join("; ")
            },
        ),
        check("W - I is PSD", floor >= -1e-10, format!("min eigenvalue {floor:.3e}")),
        check(
            "W matches the truncated series",
            series <= 1e-10,
            format!("max Frobenius deviation {series:.3e}"),
        ),
        check(
            "stochastic Gramian at p = 1 equals the deterministic one",
            degenerate <= 1e-10,
            format!("max abs deviation {degenerate:.3e}"),
        ),
    ])
}

/// One randomized design problem.
pub struct Instance {
    pub label: String,
    pub model: NoiseModel,
    pub modes: Vec<FeedbackMode>,
}

/// Cycles through deterministic/stochastic FIR/ARMA with `N <= 8`,
/// `K <= 4`, `p` in {0.3, 0.6, 0.9} and `|psi rho| <= 0.9`.
pub fn random_instance(rng: &mut ChaCha8Rng, i: usize) -> Result<Instance> {
    let n = rng.random_range(3..=8);
    let m = edge_range(rng, n, 2 * n);
    let kind = KINDS[rng.random_range(0..3)].clone();
    let g = normalized(&random_graph(rng, n, m)?, &kind, rng.random_range(0.5..1.5))?;
    let p = [0.3, 0.6, 0.9][i % 3];
    let shift = build_shift(&g, &kind)?;
    let stages = rng.random_range(1..=4);
    let sigmas: Vec<f64> = (0..stages).map(|_| rng.random_range(0.5..2.0)).collect();
    let rho = shift.rho();
    let tol = DEFAULT_GRAMIAN_TOL;
    let fir_modes = vec![FeedbackMode::PerStepDiag, FeedbackMode::PerStepScalar, FeedbackMode::StaticDiag];
    let (label, model, modes) = match i % 4 {
        0 => {
            let f = random_fir(rng, stages)?;
            ("fir_det", NoiseModel::fir_deterministic(&shift, &f, &sigmas)?, fir_modes)
        }
        1 => {
            let a = random_arma(rng, stages, rho)?;
            (
                "arma_det",
                NoiseModel::arma_deterministic(&shift, &a, &sigmas, tol)?,
                vec![FeedbackMode::PerBranchDiag],
            )
        }
        2 => {
            let f = random_fir(rng, stages)?;
            let res = ResModel::new(g, p, kind)?;
            ("fir_stoch", NoiseModel::fir_stochastic(&res, &f, &sigmas)?, fir_modes)
        }
        _ => {
            let a = random_arma(rng, stages, rho)?;
            let res = ResModel::new(g, p, kind)?;
            (
                "arma_stoch",
                NoiseModel::arma_stochastic(&res, &a, &sigmas, tol)?,
                vec![FeedbackMode::PerBranchDiag],
            )
        }
    };
    Ok(Instance {
        label: format!("#{i} {label} N={n} stages={stages} p={p}"),
        model,
        modes,
    })
}

fn random_fir(rng: &mut ChaCha8Rng, stages: usize) -> Result<FirFilter> {
    FirFilter::new((0..=stages).map(|_| rng.random_range(-1.0..1.0)).collect())
}

fn random_arma(rng: &mut ChaCha8Rng, stages: usize, rho: f64) -> Result<ArmaFilter> {
    ArmaFilter::new(
        (0..stages)
            .map(|_| ArmaBranch {
                psi: rng.random_range(-0.9..0.9) / rho,
                phi: rng.random_range(-1.0..1.0),
            })
            .collect(),
    )
}

/// A priori box containing the minimizer: `|alpha_i| <= ||T|| sqrt(lmax(G) / G_ii)`.
fn search_bound(s: &SourceModel) -> f64 {
    let t_norm = spectral_norm(&s.t);
    let g_max = symmetric_eigenvalues(&s.g).map_or(f64::NAN, |e| e.max());
    let g_min = s.g.diagonal().min();
    if g_min <= 1e-12 * g_max.max(1e-300) {
        return 1.0 + t_norm;
    }
    t_norm * (g_max / g_min).sqrt()
}

/// Outcome of one closed form versus the search.
pub struct OptimalityOutcome {
    pub label: String,
    pub mode: FeedbackMode,
    pub closed_form: f64,
    pub searched: f64,
    pub off: f64,
    pub gradient: f64,
    pub fd_gradient: f64,
    pub fd_agreement: f64,
    pub mitigation: f64,
}

fn params_gradient(full: &Matrix, mode: FeedbackMode) -> Vec<f64> {
    match mode {
        FeedbackMode::Off => Vec::new(),
        FeedbackMode::PerStepDiag | FeedbackMode::PerBranchDiag => full.iter().copied().collect(),
        FeedbackMode::PerStepScalar => full.row_sum().iter().copied().collect(),
        FeedbackMode::StaticDiag => full.column_sum().iter().copied().collect(),
    }
}

pub fn evaluate_optimality(inst: &Instance, mode: FeedbackMode, grid_step: f64) -> Result<OptimalityOutcome> {
    let model = &inst.model;
    let (n, stages) = (model.nodes, model.stages());
    let (plan, mitigation) = model.solve(mode)?;
    let objective = |a: &[f64]| {
        let p = FeedbackPlan::from_params(mode, n, stages, a).expect("parameter count");
        matrix_objective(&model.sources, &p)
    };
    let closed_form = matrix_objective(&model.sources, &plan);
    let off = matrix_objective(&model.sources, &FeedbackPlan::off(n, stages));

    let per_source: Vec<f64> = model.sources.iter().map(search_bound).collect();
    let widest = per_source.iter().copied().fold(0.0, f64::max);
    let bounds: Vec<(f64, f64)> = match mode {
        FeedbackMode::PerStepDiag | FeedbackMode::PerBranchDiag => per_source
            .iter()
            .flat_map(|&b| std::iter::repeat_n((-b - grid_step, b + grid_step), n))
            .collect(),
        FeedbackMode::PerStepScalar => model
            .sources
            .iter()
            .map(|s| {
                let b = spectral_norm(&s.t) + grid_step;
                (-b, b)
            })
            .collect(),
        FeedbackMode::StaticDiag => vec![(-widest - grid_step, widest + grid_step); n],
        FeedbackMode::Off => Vec::new(),
    };
    let searched = grid_search_alpha(objective, &bounds, grid_step).value;

    let params = plan.params();
    let gradient = params_gradient(&matrix_gradient(&model.sources, &plan), mode)
        .iter()
        .fold(0.0_f64, |a, g| a.max(g.abs()));
    let fd_gradient = finite_difference_gradient(objective, &params, 1e-5)
        .iter()
        .fold(0.0_f64, |a, g| a.max(g.abs()));
    // away from the optimum the analytic and numerical gradients must agree
    let shifted: Vec<f64> = params.iter().enumerate().map(|(i, a)| a + 0.1 * (1.0 + i as f64 % 3.0)).collect();
    let shifted_plan = FeedbackPlan::from_params(mode, n, stages, &shifted)?;
    let analytic = params_gradient(&matrix_gradient(&model.sources, &shifted_plan), mode);
    let numeric = finite_difference_gradient(objective, &shifted, 1e-5);
    let fd_agreement = analytic
        .iter()
        .zip(&numeric)
        .map(|(a, b)| (a - b).abs() / (1.0 + a.abs()))
        .fold(0.0, f64::max);

    Ok(OptimalityOutcome {
        label: inst.label.clone(),
        mode,
        closed_form,
        searched,
        off,
        gradient,
        fd_gradient,
        fd_agreement,
        mitigation,
    })
}

fn optimality_checks(opts: &ValidateOptions) -> Result<Vec<Check>> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x0b7);
    let instances: Vec<Instance> = (0..opts.instances)
        .map(|i| random_instance(&mut rng, i))
        .collect::<Result<_>>()?;
    let jobs: Vec<(usize, FeedbackMode)> = instances
        .iter()
        .enumerate()
        .flat_map(|(i, inst)| inst.modes.iter().map(move |&m| (i, m)))
        .collect();
    let outcomes: Vec<OptimalityOutcome> = jobs
        .par_iter()
        .map(|&(i, m)| evaluate_optimality(&instances[i], m, opts.grid_step))
        .collect::<Result<_>>()?;

    let mut checks = Vec::new();
    for o in &outcomes {
        let beats = o.closed_form - o.searched;
        let ok = beats <= 1e-6
            && o.gradient <= 1e-8
            && o.fd_gradient <= 1e-6
            && o.fd_agreement <= 1e-5
            && o.mitigation >= -1e-12
            && o.closed_form <= o.off + 1e-12;
        checks.push(check(
            format!("{} {}", o.label, o.mode.name()),
            ok,
            format!(
                "zeta closed {:.6e}, search {:.6e} (gain {:.2e}), off {:.6e}, |grad| {:.1e}, |fd grad| {:.1e}, fd agreement {:.1e}",
                o.closed_form, o.searched, beats, o.off, o.gradient, o.fd_gradient, o.fd_agreement
            ),
        ));
    }
    // per-source improvement for the diagonal closed forms
    let mut per_source_ok = true;
    for inst in &instances {
        let mode = inst.modes[0];
        let (plan, _) = inst.model.solve(mode)?;
        let with = inst.model.predict(&plan)?;
        let without = inst.model.predict(&FeedbackPlan::off(inst.model.nodes, inst.model.stages()))?;
        for (a, b) in with.sources.iter().zip(&without.sources) {
            per_source_ok &= a.zeta <= b.zeta + 1e-12 && a.reduction >= -1e-12;
        }
    }
    checks.push(check(
        "closed form never increases any source's noise",
        per_source_ok,
        format!("{} instances", instances.len()),
    ));
    Ok(checks)
}

struct PredictionCase<'a> {
    name: String,
    source: ShiftSource<'a>,
    filter: GraphFilter,
    model: NoiseModel,
    arma_steps: usize,
}

fn prediction_checks(opts: &ValidateOptions) -> Result<Vec<Check>> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x9e37);
    let tol = DEFAULT_GRAMIAN_TOL;
    let steps_for = |q: f64| ((1e-14_f64).ln() / q.ln()).ceil() as usize + 1;

    let path3 = build_shift(&Graph::new(3, [(0, 1, 1.0), (1, 2, 1.0)])?, &ShiftKind::Adjacency)?;
    let g_det = normalized(&random_graph(&mut rng, 10, 22)?, &ShiftKind::Laplacian, 1.0)?;
    let det = build_shift(&g_det, &ShiftKind::Laplacian)?;
    let g12 = random_graph(&mut rng, 12, 26)?;
    let res_fir = ResModel::new(g12, 0.6, ShiftKind::ScaledLaplacian)?;
    let g8 = normalized(&random_graph(&mut rng, 8, 14)?, &ShiftKind::Adjacency, 1.0)?;
    let res_arma = ResModel::new(g8, 0.7, ShiftKind::Adjacency)?;
    let edge = ResModel::new(Graph::new(2, [(0, 1, 1.0)])?, 0.5, ShiftKind::Adjacency)?;
    let cycle = ResModel::new(
        Graph::new(4, [(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0), (0, 3, 1.0)])?,
        0.6,
        ShiftKind::Adjacency,
    )?;

    let fir3 = FirFilter::new(vec![1.0, 1.0, 1.0])?;
    let fir_det = FirFilter::new(vec![0.8, -0.6, 0.5, 0.3])?;
    let fir_res = FirFilter::new(vec![0.5, 1.0, -0.7, 0.4, 0.2])?;
    let fir_cycle = FirFilter::new(vec![0.3, 0.9, -0.5])?;
    let arma_det = ArmaFilter::new(vec![
        ArmaBranch { psi: -0.5, phi: 1.0 },
        ArmaBranch { psi: 0.3, phi: -0.4 },
    ])?;
    let arma_res = ArmaFilter::new(vec![ArmaBranch { psi: 0.6, phi: 1.0 }])?;
    let arma_half = ArmaFilter::new(vec![ArmaBranch { psi: 0.5, phi: 1.0 }])?;

    let cases = vec![
        PredictionCase {
            name: "path-3 FIR (1,1,1)".into(),
            source: ShiftSource::Fixed(&path3),
            filter: GraphFilter::Fir(fir3.clone()),
            model: NoiseModel::fir_deterministic(&path3, &fir3, &[1.0])?,
            arma_steps: 0,
        },
        PredictionCase {
            name: "deterministic FIR N=10".into(),
            source: ShiftSource::Fixed(&det),
            filter: GraphFilter::Fir(fir_det.clone()),
            model: NoiseModel::fir_deterministic(&det, &fir_det, &[1.0, 0.5, 2.0])?,
            arma_steps: 0,
        },
        PredictionCase {
            name: "deterministic ARMA N=10, 2 branches".into(),
            source: ShiftSource::Fixed(&det),
            filter: GraphFilter::Arma(arma_det.clone()),
            model: NoiseModel::arma_deterministic(&det, &arma_det, &[1.0, 0.7], tol)?,
            arma_steps: steps_for(arma_det.contraction(det.rho())),
        },
        PredictionCase {
            name: "stochastic FIR N=12, p=0.6".into(),
            source: ShiftSource::Random(&res_fir),
            filter: GraphFilter::Fir(fir_res.clone()),
            model: NoiseModel::fir_stochastic(&res_fir, &fir_res, &[1.0])?,
            arma_steps: 0,
        },
        PredictionCase {
            name: "stochastic FIR 4-cycle, p=0.6".into(),
            source: ShiftSource::Random(&cycle),
            filter: GraphFilter::Fir(fir_cycle.clone()),
            model: NoiseModel::fir_stochastic(&cycle, &fir_cycle, &[1.0])?,
            arma_steps: 0,
        },
        PredictionCase {
            name: "stochastic ARMA N=8, p=0.7".into(),
            source: ShiftSource::Random(&res_arma),
            filter: GraphFilter::Arma(arma_res.clone()),
            model: NoiseModel::arma_stochastic(&res_arma, &arma_res, &[1.0], tol)?,
            arma_steps: steps_for(arma_res.contraction(res_arma.rho())),
        },
        PredictionCase {
            name: "stochastic ARMA single edge, psi=0.5, p=0.5".into(),
            source: ShiftSource::Random(&edge),
            filter: GraphFilter::Arma(arma_half.clone()),
            model: NoiseModel::arma_stochastic(&edge, &arma_half, &[1.0], tol)?,
            arma_steps: steps_for(0.5),
        },
        PredictionCase {
            name: "stochastic ARMA 4-cycle, psi=0.4, p=0.6".into(),
            source: ShiftSource::Random(&cycle),
            filter: GraphFilter::Arma(ArmaFilter::new(vec![ArmaBranch { psi: 0.4, phi: 1.0 }])?),
            model: NoiseModel::arma_stochastic(
                &cycle,
                &ArmaFilter::new(vec![ArmaBranch { psi: 0.4, phi: 1.0 }])?,
                &[1.0],
                tol,
            )?,
            arma_steps: steps_for(0.8),
        },
    ];

    let mut checks = Vec::new();
    for (ci, case) in cases.iter().enumerate() {
        let (n, stages) = (case.model.nodes, case.model.stages());
        let diag = match case.filter {
            GraphFilter::Fir(_) => FeedbackMode::PerStepDiag,
            GraphFilter::Arma(_) => FeedbackMode::PerBranchDiag,
        };
        let plans = [FeedbackPlan::off(n, stages), case.model.solve(diag)?.0];
        for (pi, plan) in plans.iter().enumerate() {
            let predicted = case.model.predict(plan)?;
            let spec = NoiseOnlySpec {
                source: case.source,
                filter: &case.filter,
                plan,
                variances: case.model.sources.iter().map(|s| s.sigma2).collect(),
                only_source: None,
                arma_steps: case.arma_steps,
            };
            let seed = opts.seed.wrapping_add((ci * 2 + pi) as u64);
            let est = mc_zeta(&spec, opts.trials, seed)?;
            let z = est.z_score(predicted.zeta);
            checks.push(check(
                format!("{} [{}]", case.name, plan.mode().name()),
                z <= 3.0,
                format!(
                    "predicted {:.6e}, empirical {:.6e} +- {:.2e} (z = {z:.2})",
                    predicted.zeta, est.mean, est.std_err
                ),
            ));
        }
    }

    // per-source injections on the deterministic FIR instance
    let case = &cases[1];
    let (plan, _) = case.model.solve(FeedbackMode::PerStepDiag)?;
    let predicted = case.model.predict(&plan)?;
    for k in 0..case.model.stages() {
        let spec = NoiseOnlySpec {
            source: case.source,
            filter: &case.filter,
            plan: &plan,
            variances: case.model.sources.iter().map(|s| s.sigma2).collect(),
            only_source: Some(k),
            arma_steps: 0,
        };
        let est = mc_zeta(&spec, opts.trials, opts.seed.wrapping_add(1000 + k as u64))?;
        let z = est.z_score(predicted.sources[k].zeta);
        checks.push(check(
            format!("{} source {k} alone", case.name),
            z <= 3.0,
            format!(
                "predicted {:.6e}, empirical {:.6e} +- {:.2e} (z = {z:.2})",
                predicted.sources[k].zeta, est.mean, est.std_err
            ),
        ));
    }
    Ok(checks)
}
