use proptest::prelude::*;

use signlab::dither::expected_dithered_sign;
use signlab::harness::verify::ulp_distance;
use signlab::harness::{csv_string, parse_csv, run_theorem_suite, ExperimentConfig, RecordRow};
use signlab::numeric::{inner, l1_norm, l2_norm_sq, sign, sign_vec, ParamVector, RngStream};
use signlab::optimizers::{
    dithered_step, hybrid_step, lambda_project, signsgd_step, signsgdm_step, Algorithm, DitherMode, OptimizerConfig,
    OptimizerState, Phase,
};
use signlab::theory::{expected_alignment_bound, gauss_bound, phi_measure, relaxation_holds, SnrProfile};

fn vec_of(range: std::ops::Range<f64>, len: std::ops::Range<usize>) -> impl Strategy<Value = ParamVector> {
    prop::collection::vec(range, len).prop_map(ParamVector::new)
}

fn any_real() -> impl Strategy<Value = f64> {
    use prop::num::f64::*;
    POSITIVE | NEGATIVE | NORMAL | SUBNORMAL | ZERO | INFINITE
}

/// Gradient stream with noise drawn from a fixed stream.
fn gradient_stream(dim: usize, steps: usize, seed: u64) -> Vec<ParamVector> {
    let mut rng = RngStream::new(seed, 9);
    (0..steps)
        .map(|k| {
            let drift = 1.0 / (1.0 + k as f64).sqrt();
            ParamVector::new(
                (0..dim)
                    .map(|i| drift * (i as f64 - 1.5) + rng.standard_normal())
                    .collect(),
            )
        })
        .collect()
}

proptest! {
    #[test]
    fn sign_identities(v in vec_of(-1e6..1e6, 1..32)) {
        let s = sign_vec(&v);
        prop_assert_eq!(sign_vec(&s), s.clone());
        if v.iter().all(|x| *x != 0.0) {
            let a = inner(&s, &v).unwrap();
            prop_assert!((a - l1_norm(&v)).abs() <= 1e-12 * l1_norm(&v));
        }
    }

    #[test]
    fn projection_identity_and_sign(
        m in vec_of(-10.0..10.0, 1..24),
        g_raw in vec_of(-1.0..1.0, 24..25),
        log_scale in -6.0..6.0f64,
        delta in 1e-5..1.0f64,
        epsilon in prop::sample::select(vec![1e-12, 1e-8, 1e-300]),
    ) {
        let g = ParamVector::new(g_raw.iter().take(m.dim()).map(|v| v * 10f64.powf(log_scale)).collect());
        let lam = lambda_project(&m, &g, delta, epsilon);
        prop_assert!(lam >= 0.0);
        let aligned: f64 = m.iter().zip(g.iter()).map(|(&a, &b)| sign(a) * b).sum();
        let rhs = delta * aligned.abs();
        prop_assert!(ulp_distance(lam * (l2_norm_sq(&g) + epsilon), rhs) <= 2);
    }

    #[test]
    fn relaxation_and_bound_shape(s in 0.0..1e6f64) {
        prop_assert!(relaxation_holds(s));
        let b = gauss_bound(s);
        prop_assert!((0.0..=0.5).contains(&b));
        prop_assert!(gauss_bound(s * 1.01 + 1e-9) <= b);
    }

    #[test]
    fn phi_interpolates_and_decomposes(
        g in vec_of(-5.0..5.0, 1..12),
        s_raw in vec_of(0.0..3.0, 12..13),
    ) {
        let s = ParamVector::new(s_raw.iter().take(g.dim()).copied().collect());
        let p = SnrProfile::new(g.clone(), s.clone()).unwrap();
        let phi = phi_measure(&p);
        let l1 = l1_norm(&g);
        prop_assert!(phi <= l1);
        let total_s: f64 = s.iter().sum();
        prop_assert!(l1 <= phi + total_s + 1e-12 * (l1 + total_s));
        if p.snr().iter().all(|v| *v >= 1.0) {
            prop_assert_eq!(phi, l1);
        }
    }

    #[test]
    fn gaussian_alignment_clears_bound(
        g in vec_of(-2.0..2.0, 1..5),
        s_raw in vec_of(0.1..2.0, 4..5),
        seed in 0u64..1000,
    ) {
        let s = ParamVector::new(s_raw.iter().take(g.dim()).copied().collect());
        let p = SnrProfile::new(g.clone(), s.clone()).unwrap();
        let bound = expected_alignment_bound(&p);
        // E[g_i sign(g_i + s_i ζ)] = |g_i| erf(|g_i| / (s_i √2)) for Gaussian ζ.
        let exact: f64 = g.iter().zip(s.iter()).map(|(&gi, &si)| gi.abs() * expected_dithered_sign(gi.abs(), si).unwrap()).sum();
        prop_assert!(exact >= bound);

        let trials = 20_000;
        let mut rng = RngStream::new(seed, 3);
        let draws: Vec<f64> = (0..trials)
            .map(|_| g.iter().zip(s.iter()).map(|(&gi, &si)| gi * sign(gi + si * rng.standard_normal())).sum())
            .collect();
        let mean = draws.iter().sum::<f64>() / trials as f64;
        let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (trials - 1) as f64;
        let se = (var / trials as f64).sqrt();
        prop_assert!(mean >= bound - 4.0 * se, "mean {mean} bound {bound} se {se}");
    }

    #[test]
    fn sign_steps_stay_on_the_delta_grid(
        x0 in vec_of(-3.0..3.0, 1..8),
        delta in prop::sample::select(vec![0.5, 0.01, 0.125, 1e-3]),
        alpha in prop::sample::select(vec![0.0, 0.3, 4.0]),
        seed in 0u64..1000,
    ) {
        let dim = x0.dim();
        let cfg = OptimizerConfig { delta, alpha, dither_mode: DitherMode::Pre, ..OptimizerConfig::default() };
        let mut rng = RngStream::new(seed, 2);
        let mut clean = OptimizerState::new(x0.clone(), Phase::Sign);
        let mut pre = OptimizerState::new(x0, Phase::Sign);
        for g in gradient_stream(dim, 50, seed) {
            let (xc, xp) = (clean.x.clone(), pre.x.clone());
            clean = signsgdm_step(clean, &g, &cfg);
            pre = dithered_step(pre, &g, &cfg, &mut rng);
            for (before, after) in [(&xc, &clean.x), (&xp, &pre.x)] {
                for (a, b) in before.iter().zip(after.iter()) {
                    let step = (b - a).abs();
                    let tol = 4.0 * f64::EPSILON * a.abs().max(delta);
                    prop_assert!(step <= tol || (step - delta).abs() <= tol, "step {step} delta {delta}");
                }
            }
            prop_assert!(clean.lambda >= 0.0 && clean.lambda_ema >= 0.0);
            prop_assert!(pre.lambda >= 0.0 && pre.lambda_ema >= 0.0);
        }
    }

    #[test]
    fn zero_momentum_reduces_to_signsgd(x0 in vec_of(-3.0..3.0, 1..8), seed in 0u64..1000) {
        let cfg = OptimizerConfig { delta: 0.05, beta: 0.0, ..OptimizerConfig::default() };
        let mut a = OptimizerState::new(x0.clone(), Phase::Sign);
        let mut b = OptimizerState::new(x0.clone(), Phase::Sign);
        for g in gradient_stream(x0.dim(), 40, seed) {
            a = signsgdm_step(a, &g, &cfg);
            b = signsgd_step(b, &g, &cfg);
            prop_assert_eq!(&a.x, &b.x);
        }
    }

    #[test]
    fn hybrid_without_switch_is_its_sign_phase(x0 in vec_of(-3.0..3.0, 1..6), seed in 0u64..1000) {
        let mut cfg = OptimizerConfig { delta: 0.02, alpha: 0.2, dither_mode: DitherMode::Post, ..OptimizerConfig::default() };
        cfg.t_switch = None;
        let (mut r1, mut r2) = (RngStream::new(seed, 2), RngStream::new(seed, 2));
        let mut a = OptimizerState::new(x0.clone(), Phase::Sign);
        let mut b = OptimizerState::new(x0.clone(), Phase::Sign);
        for g in gradient_stream(x0.dim(), 40, seed) {
            a = hybrid_step(a, &g, &cfg, &mut r1);
            b = dithered_step(b, &g, &cfg, &mut r2);
            prop_assert_eq!(&a, &b);
        }
    }

    #[test]
    fn config_round_trip(
        lipschitz in prop::collection::vec(any_real(), 1..6),
        delta in any_real(),
        eps in any_real(),
        t_switch in prop::option::of(any::<u64>()),
        seeds in prop::collection::vec(any::<u64>(), 0..5),
        algorithm in prop::sample::select(vec!["sgd", "sgdm", "signsgd", "signsgdm", "dithered", "hybrid"]),
        q in 0.01..0.99f64,
    ) {
        let mut cfg = ExperimentConfig::default();
        cfg.problem.dim = lipschitz.len();
        cfg.problem.lipschitz = lipschitz;
        cfg.problem.noise_family = signlab::problems::NoiseFamily::AsymmetricBimodal { q };
        cfg.optimizer.cfg.delta = delta;
        cfg.optimizer.cfg.epsilon = eps;
        cfg.optimizer.cfg.t_switch = t_switch;
        cfg.optimizer.algorithm = algorithm.parse::<Algorithm>().unwrap();
        cfg.run.seeds = seeds;
        let text = cfg.emit();
        let back = ExperimentConfig::parse(&text).unwrap();
        prop_assert_eq!(back.emit(), text);
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        prop_assert_eq!(bits(&back.problem.lipschitz), bits(&cfg.problem.lipschitz));
        prop_assert_eq!(back, cfg);
    }

    #[test]
    fn csv_round_trip(raw in prop::collection::vec((1u64..1000, any_real(), any_real(), any::<bool>()), 0..20)) {
        let mut k = 0;
        let rows: Vec<RecordRow> = raw
            .into_iter()
            .map(|(dk, f, lam, sgd)| {
                k += dk;
                RecordRow {
                    k,
                    f,
                    l1_grad: f.abs(),
                    phi: lam,
                    lambda: lam,
                    lambda_ema: f,
                    sigma_dither_sq: 0.0,
                    phase: if sgd { Phase::Sgd } else { Phase::Sign },
                }
            })
            .collect();
        let back = parse_csv(&csv_string(&rows)).unwrap();
        prop_assert_eq!(back.len(), rows.len());
        for (a, b) in back.iter().zip(&rows) {
            prop_assert_eq!(a.f.to_bits(), b.f.to_bits());
            prop_assert_eq!(a.lambda.to_bits(), b.lambda.to_bits());
            prop_assert_eq!(a.phase, b.phase);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn seed_order_does_not_change_averages(seeds in Just((0u64..8).collect::<Vec<_>>()).prop_shuffle()) {
        let cfg = ExperimentConfig::theorem_quadratic();
        let sorted: Vec<u64> = (0..8).collect();
        let a = run_theorem_suite(&cfg, &sorted, &[200], &[1, 4]).unwrap();
        let b = run_theorem_suite(&cfg, &seeds, &[200], &[1, 4]).unwrap();
        prop_assert_eq!(a, b);
    }
}
