use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use qefb::design::{
    expected_grams, fir_subfilter_gram, kernel_tensor, observability_gramian, stochastic_gramian, NoiseModel,
    DEFAULT_GRAMIAN_TOL,
};
use qefb::filters::{
    run_arma_exact_on, run_arma_on, run_arma_quantized, run_fir_exact_on, run_fir_on, run_fir_quantized,
    ArmaBranch, ArmaFilter, FeedbackMode, FeedbackPlan, FirFilter, ShiftSource, StateQuantizer,
};
use qefb::graph::{build_shift, mean_shift, symmetric_eigenvalues, Graph, ResModel, ShiftKind};
use qefb::harness::oracles::matrix_gradient;
use qefb::harness::validate::{random_graph, random_instance};
use qefb::quantizer::{noise_variance, quantize, Dither, QuantizationResult, QuantizerConfig, QuantizerSchedule};
use qefb::{Matrix, Vector};

const KINDS: [ShiftKind; 3] = [ShiftKind::Adjacency, ShiftKind::Laplacian, ShiftKind::ScaledLaplacian];

fn graph(seed: u64, n: usize, extra: usize) -> Graph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = (n - 1 + extra).min(n * (n - 1) / 2);
    random_graph(&mut rng, n, m).unwrap()
}

fn random_vector(rng: &mut ChaCha8Rng, n: usize) -> Vector {
    Vector::from_fn(n, |_, _| rng.random_range(-1.0..1.0))
}

fn min_eig(m: &Matrix) -> f64 {
    symmetric_eigenvalues(m).unwrap().min()
}

fn is_symmetric(m: &Matrix) -> bool {
    m == &m.transpose()
}

/// Replays a fixed table of injected errors, one vector per quantizer call,
/// keeping only the stages in `keep`.
struct Forced {
    table: Vec<Vector>,
    keep: Option<usize>,
    call: usize,
}

impl StateQuantizer for Forced {
    fn quantize(&mut self, stage: usize, w: &Vector) -> QuantizationResult {
        let mut e = self.table[self.call].clone();
        self.call += 1;
        if self.keep.is_some_and(|k| k != stage) {
            e.fill(0.0);
        }
        QuantizationResult {
            quantized: w + &e,
            error: e,
            dither: None,
            overflow_count: 0,
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn shifts_and_samples_are_symmetric(seed in any::<u64>(), n in 3usize..12, extra in 0usize..10, k in 0usize..3, p in 0.05f64..1.0) {
        let g = graph(seed, n, extra);
        let s = build_shift(&g, &KINDS[k]).unwrap();
        prop_assert!(is_symmetric(s.matrix()));
        let model = ResModel::new(g, p, KINDS[k].clone()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..20 {
            let r = model.sample_with_mask(&mut rng);
            prop_assert!(is_symmetric(r.shift.matrix()));
            let norm = symmetric_eigenvalues(r.shift.matrix()).unwrap().amax();
            prop_assert!(norm <= model.rho() + 1e-9, "{norm} > {}", model.rho());
        }
    }

    #[test]
    fn permutation_equivariance(seed in any::<u64>(), n in 3usize..10, extra in 0usize..8, k in 0usize..3) {
        let g = graph(seed, n, extra);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
        let mut perm: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            perm.swap(i, rng.random_range(0..=i));
        }
        let s = build_shift(&g, &KINDS[k]).unwrap();
        let sp = build_shift(&g.permuted(&perm).unwrap(), &KINDS[k]).unwrap();
        // node i is relabelled perm[i]: S'[perm i, perm j] = S[i, j]
        for i in 0..n {
            for j in 0..n {
                let (a, b) = (sp.matrix()[(perm[i], perm[j])], s.matrix()[(i, j)]);
                prop_assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
            }
        }
    }

    #[test]
    fn quantizer_error_is_bounded_and_exact(seed in any::<u64>(), bits in 2u32..20, range in 0.1f64..10.0, dither in any::<bool>()) {
        let cfg = QuantizerConfig::new(bits, range, if dither { Dither::Subtractive } else { Dither::Off }).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let edge = range - cfg.step() / 2.0;
        let w = Vector::from_fn(200, |_, _| rng.random_range(-edge..edge));
        let q = quantize(&w, &cfg, &mut rng);
        prop_assert_eq!(q.overflow_count, 0);
        for i in 0..w.len() {
            prop_assert!(q.error[i].abs() <= cfg.step() / 2.0 * (1.0 + 1e-12));
            prop_assert_eq!(w[i] + q.error[i], q.quantized[i]);
        }
    }

    #[test]
    fn variance_quarters_per_bit(bits in 1u32..51, range in 0.01f64..100.0) {
        let a = noise_variance(&QuantizerConfig::new(bits, range, Dither::Off).unwrap());
        let b = noise_variance(&QuantizerConfig::new(bits + 1, range, Dither::Off).unwrap());
        prop_assert!((a / b - 4.0).abs() <= 1e-12);
    }

    #[test]
    fn many_bits_converge_to_exact(seed in any::<u64>(), n in 3usize..10, p in 0.2f64..1.0, k in 1usize..6) {
        let g = graph(seed, n, 4);
        let model = ResModel::new(g, p, ShiftKind::ScaledLaplacian).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let fir = FirFilter::new((0..=k).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let arma = ArmaFilter::new(vec![ArmaBranch { psi: -0.5, phi: 1.0 }, ArmaBranch { psi: 0.3, phi: 0.5 }]).unwrap();
        let x = random_vector(&mut rng, n) * 0.1;
        let schedule = QuantizerSchedule::uniform(QuantizerConfig::new(50, 1.0, Dither::Subtractive).unwrap());
        for source in [ShiftSource::Fixed(model.base()), ShiftSource::Random(&model)] {
            let plan = FeedbackPlan::off(n, fir.order());
            let mut r1 = ChaCha8Rng::seed_from_u64(seed ^ 7);
            let (yq, _) = run_fir_quantized(source, &fir, &x, &schedule, &plan, &mut r1).unwrap();
            let mut r2 = ChaCha8Rng::seed_from_u64(seed ^ 7);
            let seq = source.draw(fir.order(), &mut r2);
            prop_assert!((yq - run_fir_exact_on(&seq, &fir, &x)).amax() <= 1e-12);

            let plan = FeedbackPlan::off(n, 2);
            let mut r1 = ChaCha8Rng::seed_from_u64(seed ^ 9);
            let (ys, _) = run_arma_quantized(source, &arma, &x, &schedule, &plan, 20, &mut r1).unwrap();
            let mut r2 = ChaCha8Rng::seed_from_u64(seed ^ 9);
            let seq = source.draw(20, &mut r2);
            let exact = run_arma_exact_on(&seq, &arma, &x);
            for (a, b) in ys.iter().zip(&exact) {
                prop_assert!((a - b).amax() <= 1e-12);
            }
        }
    }

    #[test]
    fn noise_response_is_linear(seed in any::<u64>(), n in 3usize..8, k in 1usize..5, arma in any::<bool>()) {
        let g = graph(seed, n, 3);
        let model = ResModel::new(g, 0.6, ShiftKind::ScaledLaplacian).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random_vector(&mut rng, n) * 0.1;
        let (stages, calls) = if arma { (2, 2 * 12) } else { (k, k) };
        let plan = FeedbackPlan::from_params(
            FeedbackMode::PerStepDiag,
            n,
            stages,
            &(0..n * stages).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<_>>(),
        ).unwrap();
        let table: Vec<Vector> = (0..calls).map(|_| random_vector(&mut rng, n) * 1e-3).collect();
        let seq = ShiftSource::Random(&model).draw(if arma { 12 } else { k }, &mut rng);
        let fir = FirFilter::new((0..=k).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let filt = ArmaFilter::new(vec![ArmaBranch { psi: 0.5, phi: 1.0 }, ArmaBranch { psi: -0.4, phi: 0.7 }]).unwrap();
        let run = |keep: Option<usize>| -> Vec<Vector> {
            let mut q = Forced { table: table.clone(), keep, call: 0 };
            if arma {
                let (ys, _) = run_arma_on(&seq, &filt, &x, &mut q, &plan).unwrap();
                ys.iter().zip(run_arma_exact_on(&seq, &filt, &x)).map(|(a, b)| a - b).collect()
            } else {
                let (y, _) = run_fir_on(&seq, &fir, &x, &mut q, &plan).unwrap();
                vec![y - run_fir_exact_on(&seq, &fir, &x)]
            }
        };
        let total = run(None);
        let mut sum = vec![Vector::zeros(n); total.len()];
        for s in 0..stages {
            for (acc, d) in sum.iter_mut().zip(run(Some(s))) {
                *acc += d;
            }
        }
        for (a, b) in total.iter().zip(&sum) {
            prop_assert!((a - b).amax() <= 1e-12);
        }
    }

    #[test]
    fn tap_scaling_scales_outputs(seed in any::<u64>(), n in 3usize..9, k in 1usize..6, e in -3i32..4, neg in any::<bool>()) {
        let c = if neg { -(2f64.powi(e)) } else { 2f64.powi(e) };
        let g = graph(seed, n, 3);
        let model = ResModel::new(g, 0.7, ShiftKind::ScaledLaplacian).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let fir = FirFilter::new((0..=k).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let x = random_vector(&mut rng, n) * 0.2;
        let schedule = QuantizerSchedule::uniform(QuantizerConfig::new(8, 1.0, Dither::Subtractive).unwrap());
        let plan = FeedbackPlan::from_params(FeedbackMode::PerStepScalar, n, k, &vec![0.3; k]).unwrap();
        let seq = ShiftSource::Random(&model).draw(k, &mut rng);
        let run = |f: &FirFilter| {
            let mut r = ChaCha8Rng::seed_from_u64(seed ^ 3);
            let mut q = qefb::filters::DitherQuantizer::new(&schedule, &mut r);
            let (y, _) = run_fir_on(&seq, f, &x, &mut q, &plan).unwrap();
            (y.clone(), y - run_fir_exact_on(&seq, f, &x))
        };
        let (y1, d1) = run(&fir);
        let (yc, dc) = run(&fir.scaled(c));
        // power-of-two scaling is exact in floating point
        prop_assert_eq!(yc, y1 * c);
        prop_assert!((dc - d1 * c).amax() <= 1e-15 * c.abs());
    }

    #[test]
    fn p_one_reproduces_deterministic_bitwise(seed in any::<u64>(), n in 3usize..9, k in 1usize..6) {
        let g = graph(seed, n, 3);
        let model = ResModel::new(g, 1.0, ShiftKind::Laplacian).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let fir = FirFilter::new((0..=k).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let x = random_vector(&mut rng, n) * (0.1 / model.rho());
        let schedule = QuantizerSchedule::uniform(QuantizerConfig::new(10, 1.0, Dither::Subtractive).unwrap());
        let plan = FeedbackPlan::off(n, k);
        let mut r1 = ChaCha8Rng::seed_from_u64(seed ^ 5);
        let mut r2 = ChaCha8Rng::seed_from_u64(seed ^ 5);
        let (a, _) = run_fir_quantized(ShiftSource::Random(&model), &fir, &x, &schedule, &plan, &mut r1).unwrap();
        let (b, _) = run_fir_quantized(ShiftSource::Fixed(model.base()), &fir, &x, &schedule, &plan, &mut r2).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn unstable_arma_is_rejected(seed in any::<u64>(), n in 3usize..8, q in 1.0f64..3.0) {
        let g = graph(seed, n, 3);
        let s = build_shift(&g, &ShiftKind::Laplacian).unwrap();
        let arma = ArmaFilter::new(vec![ArmaBranch { psi: q / s.rho(), phi: 1.0 }]).unwrap();
        prop_assert!(arma.check_stable(s.rho()).is_err());
        let schedule = QuantizerSchedule::uniform(QuantizerConfig::new(10, 1.0, Dither::Off).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let r = run_arma_quantized(ShiftSource::Fixed(&s), &arma, &Vector::zeros(n), &schedule, &FeedbackPlan::off(n, 1), 5, &mut rng);
        prop_assert!(r.is_err());
        prop_assert!(observability_gramian(&s, arma.branches()[0].psi, DEFAULT_GRAMIAN_TOL).is_err());
    }

    #[test]
    fn tap_scaling_keeps_alpha(seed in any::<u64>(), n in 3usize..8, k in 1usize..5, c in 0.1f64..5.0, p in 0.2f64..1.0) {
        let g = graph(seed, n, 3);
        let model = ResModel::new(g, p, ShiftKind::ScaledLaplacian).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let fir = FirFilter::new((0..=k).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        for (a, b) in [
            (NoiseModel::fir_deterministic(model.base(), &fir, &[1.0]).unwrap(), NoiseModel::fir_deterministic(model.base(), &fir.scaled(c), &[1.0]).unwrap()),
            (NoiseModel::fir_stochastic(&model, &fir, &[1.0]).unwrap(), NoiseModel::fir_stochastic(&model, &fir.scaled(c), &[1.0]).unwrap()),
        ] {
            for mode in [FeedbackMode::PerStepDiag, FeedbackMode::PerStepScalar, FeedbackMode::StaticDiag] {
                let (pa, ia) = a.solve(mode).unwrap();
                let (pb, ib) = b.solve(mode).unwrap();
                prop_assert!((pa.theta() - pb.theta()).amax() <= 1e-9 * (1.0 + pa.theta().amax()));
                prop_assert!((ib - c * c * ia).abs() <= 1e-9 * (1.0 + ib.abs()));
            }
        }
    }

    #[test]
    fn expectations_preserve_symmetry_and_psd(seed in any::<u64>(), n in 3usize..9, k in 1usize..5, p in 0.05f64..1.0, kind in 0usize..3, q in 0.05f64..0.95) {
        let g = graph(seed, n, 4);
        let model = ResModel::new(g, p, KINDS[kind].clone()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = Matrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let m = &a + a.transpose();
        let kernel = kernel_tensor(&model);
        prop_assert!(is_symmetric(&kernel.expected_sms(&m)));
        let fir = FirFilter::new((0..=k).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let mut grams = expected_grams(&kernel, &fir);
        for j in 1..=k {
            grams.push(fir_subfilter_gram(model.base(), &fir, j).unwrap());
        }
        for gm in &grams {
            prop_assert!(is_symmetric(gm));
            prop_assert!(min_eig(gm) >= -1e-10 * (1.0 + gm.amax()));
        }
        let psi = q / model.rho();
        let eye = Matrix::identity(n, n);
        for w in [observability_gramian(model.base(), psi, DEFAULT_GRAMIAN_TOL).unwrap(), stochastic_gramian(&model, -psi, DEFAULT_GRAMIAN_TOL).unwrap()] {
            prop_assert!(is_symmetric(&w.matrix));
            prop_assert!(min_eig(&(&w.matrix - &eye)) >= -1e-10);
            prop_assert!(w.residual <= DEFAULT_GRAMIAN_TOL * 10.0);
        }
    }

    #[test]
    fn closed_forms_are_stationary_and_improve(seed in any::<u64>(), i in 0usize..12) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inst = random_instance(&mut rng, i).unwrap();
        let (n, stages) = (inst.model.nodes, inst.model.stages());
        let off = inst.model.predict(&FeedbackPlan::off(n, stages)).unwrap();
        for &mode in &inst.modes {
            let (plan, mitigation) = inst.model.solve(mode).unwrap();
            prop_assert!(mitigation >= -1e-12);
            let pred = inst.model.predict(&plan).unwrap();
            prop_assert!(pred.zeta <= off.zeta + 1e-12);
            if matches!(mode, FeedbackMode::PerStepDiag | FeedbackMode::PerBranchDiag) {
                prop_assert!(matrix_gradient(&inst.model.sources, &plan).amax() <= 1e-8);
                for (a, b) in pred.sources.iter().zip(&off.sources) {
                    prop_assert!(a.zeta <= b.zeta + 1e-12);
                }
            }
        }
    }
}

#[test]
fn sampled_norm_bound_over_many_draws() {
    let g = graph(11, 20, 25);
    for kind in KINDS {
        let model = ResModel::new(g.clone(), 0.5, kind).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..10_000 {
            let s = model.sample_with_mask(&mut rng).shift;
            assert!(symmetric_eigenvalues(s.matrix()).unwrap().amax() <= model.rho() + 1e-9);
        }
    }
}

#[test]
fn mean_shift_matches_sample_average() {
    let g = graph(5, 6, 4);
    let model = ResModel::new(g, 0.35, ShiftKind::Laplacian).unwrap();
    let n = 6;
    let trials = 100_000;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut sum = Matrix::zeros(n, n);
    let mut sq = Matrix::zeros(n, n);
    for _ in 0..trials {
        let s = model.sample_with_mask(&mut rng).shift.matrix().clone();
        sq += s.component_mul(&s);
        sum += s;
    }
    let t = trials as f64;
    let mean = &sum / t;
    let expected = mean_shift(&model);
    for i in 0..n {
        for j in i..n {
            let var = (sq[(i, j)] / t - mean[(i, j)].powi(2)) * t / (t - 1.0);
            let se = (var / t).sqrt();
            let d = (mean[(i, j)] - expected[(i, j)]).abs();
            assert!(d <= 3.0 * se || d <= 1e-12, "({i},{j}): {d} vs se {se}");
        }
    }
}
