//! Cross-module properties: decoder FER relations, neural-decoder symmetry, estimator
//! agreement, attack ordering and the UAP-PCA surrogate.

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use robustdec::attacks::{fgm_attack, pgd_attack, random_baseline, uap_pca, EnergyBudget, PgdConfig};
use robustdec::channel::{transmit, MessageMode, SnrContext};
use robustdec::code::{build_polar, parse_alist, resolve_code, to_alist, LinearCode};
use robustdec::decoders::{BeliefPropagation, Decoder, MaximumLikelihood, SuccessiveCancellation};
use robustdec::gf2::Gf2Matrix;
use robustdec::harness::{simulate, FerConfig, FerStats, PairedCounts, Perturber};
use robustdec::neural::{train, Activation, MlpDecoder, Optimizer, TrainConfig};
use robustdec::smoothing::{
    beta_bound, grad_backprop_mc, grad_stein, offset, smoothed_loss, DecoderLoss, EstimatorKind, LossOracle,
    SmoothingConfig,
};
use std::sync::Arc;

fn code(id: &str) -> Arc<LinearCode> {
    Arc::new(resolve_code(id).unwrap())
}

fn toy_mlp(mode: MessageMode, seed: u64) -> MlpDecoder {
    let mut m = MlpDecoder::new(code("hamming_7_4"), &[32, 32], Activation::Softplus, seed).unwrap();
    let cfg = TrainConfig {
        snr_range_db: (2.0, 7.0),
        steps: 3000,
        learning_rate: 1e-3,
        optimizer: Optimizer::Adam,
        seed,
        message_mode: mode,
        ..TrainConfig::default()
    };
    train(&mut m, &cfg).unwrap();
    m
}

fn fer_overlap(a: &FerStats, b: &FerStats) -> bool {
    let (a_lo, a_hi) = a.wilson_95();
    let (b_lo, b_hi) = b.wilson_95();
    a_lo <= b_hi && b_lo <= a_hi
}

#[test]
fn fer_does_not_increase_with_snr() {
    let ham = code("hamming_7_4");
    let polar = Arc::new(build_polar(16, 8, 2.0).unwrap());
    let decoders: Vec<Box<dyn Decoder>> = vec![
        Box::new(BeliefPropagation::sum_product(ham.clone(), 10)),
        Box::new(BeliefPropagation::min_sum(ham.clone(), 10)),
        Box::new(MaximumLikelihood::new(ham).unwrap()),
        Box::new(SuccessiveCancellation::new(polar.clone()).unwrap()),
        Box::new(MaximumLikelihood::new(polar).unwrap()),
    ];
    for d in &decoders {
        let stats: Vec<FerStats> = [4.0, 5.0, 6.0]
            .iter()
            .map(|&snr| {
                simulate(&[d.as_ref()], &Perturber::None, &FerConfig::fixed(snr, 20_000, 1))
                    .unwrap()
                    .stats[0]
            })
            .collect();
        for w in stats.windows(2) {
            // The higher-SNR interval may not lie entirely above the lower-SNR one.
            assert!(w[1].wilson_95().0 <= w[0].wilson_95().1, "{}: {:?}", d.name(), stats);
        }
    }
}

#[test]
fn ml_lower_bounds_every_decoder() {
    let ham = code("hamming_7_4");
    let sp = BeliefPropagation::sum_product(ham.clone(), 10);
    let ms = BeliefPropagation::min_sum(ham.clone(), 10);
    let mlp = toy_mlp(MessageMode::Uniform, 3);
    let ml = MaximumLikelihood::new(ham).unwrap();
    let polar = Arc::new(build_polar(16, 8, 2.0).unwrap());
    let sc = SuccessiveCancellation::new(polar.clone()).unwrap();
    let polar_ml = MaximumLikelihood::new(polar).unwrap();
    for snr in [3.0, 5.0] {
        let cfg = FerConfig::fixed(snr, 20_000, 2);
        let runs = [
            simulate(&[&ml, &sp, &ms, &mlp], &Perturber::None, &cfg).unwrap(),
            simulate(&[&polar_ml, &sc], &Perturber::None, &cfg).unwrap(),
        ];
        // ML is optimal in expectation, so on shared frames it may lose only by chance.
        for run in &runs {
            for other in &run.errors[1..] {
                let p = PairedCounts::from_outcomes(&run.errors[0], other).p_value_a_worse();
                assert!(p > 0.01, "{snr} dB: {:?}", run.stats);
            }
        }
    }
}

#[test]
fn trained_mlp_beats_hard_decisions() {
    let mlp = toy_mlp(MessageMode::Uniform, 4);
    let cfg = FerConfig::fixed(4.0, 20_000, 5);
    let snr = SnrContext::for_code(mlp.code(), 4.0).unwrap();
    let uncoded = (0..cfg.frames)
        .filter(|&i| {
            let f = transmit(mlp.code(), &snr, cfg.seed, i as u64, cfg.message_mode);
            f.received.iter().zip(&f.codeword).any(|(y, &c)| (*y < 0.0) != (c == 1))
        })
        .count();
    let s = simulate(&[&mlp], &Perturber::None, &cfg).unwrap().stats[0];
    assert!(
        (s.frame_errors as f64) < 0.5 * uncoded as f64,
        "{} vs {uncoded}",
        s.frame_errors
    );
}

#[test]
fn training_messages_do_not_matter() {
    let cfg = FerConfig::fixed(4.0, 20_000, 6);
    let zero = simulate(&[&toy_mlp(MessageMode::AllZero, 7)], &Perturber::None, &cfg)
        .unwrap()
        .stats[0];
    let uniform = simulate(&[&toy_mlp(MessageMode::Uniform, 7)], &Perturber::None, &cfg)
        .unwrap()
        .stats[0];
    assert!(fer_overlap(&zero, &uniform), "{zero:?} vs {uniform:?}");
}

#[test]
fn backprop_and_stein_estimates_agree() {
    let mlp = toy_mlp(MessageMode::Uniform, 8);
    let snr = SnrContext::for_code(mlp.code(), 3.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut outside = 0usize;
    let mut coords = 0usize;
    let mut stream = 0u64;
    for t in 0..100u64 {
        let nu = rng.random_range(0.02..0.1);
        // Hard-decision features jump where a coordinate changes sign, and only the Stein
        // estimator sees the jump; keep the smoothing noise away from those boundaries.
        let f = loop {
            stream += 1;
            let f = transmit(mlp.code(), &snr, 10, stream, MessageMode::Uniform);
            if f.received.iter().all(|y| y.abs() > 6.0 * nu) {
                break f;
            }
        };
        let loss = DecoderLoss::new(&mlp, &f.codeword, snr.sigma2);
        let cfg = SmoothingConfig {
            nu,
            samples: 2000,
            seed: t,
            estimator: EstimatorKind::Auto,
            loss_clip: 10.0,
        };
        let a = grad_backprop_mc(&loss, &f.received, &cfg).unwrap();
        let b = grad_stein(&loss, &f.received, &cfg.with_seed(t + 1000)).unwrap();
        for j in 0..a.gradient.len() {
            let se = (a.variance[j] + b.variance[j]).sqrt();
            coords += 1;
            if (a.gradient[j] - b.gradient[j]).abs() > 3.0 * se + 1e-12 {
                outside += 1;
            }
        }
    }
    // Three joint standard errors cover about 99.7% of coordinates.
    assert!((outside as f64) < 0.01 * coords as f64, "{outside}/{coords}");
}

#[test]
fn uap_pca_maximizes_the_quadratic_surrogate() {
    let mlp = toy_mlp(MessageMode::Uniform, 11);
    let snr = SnrContext::for_code(mlp.code(), 4.0).unwrap();
    let frames: Vec<_> = (0..200)
        .map(|i| transmit(mlp.code(), &snr, 12, i, MessageMode::Uniform))
        .collect();
    let losses: Vec<DecoderLoss> = frames
        .iter()
        .map(|f| DecoderLoss::new(&mlp, &f.codeword, snr.sigma2))
        .collect();
    let oracles: Vec<&dyn LossOracle> = losses.iter().map(|l| l as &dyn LossOracle).collect();
    let points: Vec<Vec<f64>> = frames.iter().map(|f| f.received.clone()).collect();
    let cfg = SmoothingConfig {
        samples: 64,
        ..SmoothingConfig::default()
    };
    let r = uap_pca(&oracles, &points, 0.1, &cfg).unwrap();
    let beta = beta_bound(&cfg);
    let surrogate = |d: &[f64]| {
        let norm = d.iter().map(|v| v * v).sum::<f64>().sqrt();
        r.batch
            .q
            .rows()
            .into_iter()
            .map(|q| (q.iter().zip(d).map(|(a, b)| a * b).sum::<f64>() / norm).powi(2) / (2.0 * beta))
            .sum::<f64>()
            / frames.len() as f64
    };
    let best = surrogate(&r.delta);
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..100 {
        let d: Vec<f64> = (0..7).map(|_| StandardNormal.sample(&mut rng)).collect();
        assert!(surrogate(&d) <= best * (1.0 + 1e-9));
    }
}

/// Mean and standard error of paired differences.
fn paired(a: &[f64], b: &[f64]) -> (f64, f64) {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let n = d.len() as f64;
    let mean = d.iter().sum::<f64>() / n;
    let var = d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[test]
fn attacks_are_ordered_by_smoothed_loss() {
    let mlp = toy_mlp(MessageMode::Uniform, 14);
    let snr = SnrContext::for_code(mlp.code(), 4.0).unwrap();
    let budget = EnergyBudget::new(0.1).unwrap();
    let attack_cfg = SmoothingConfig {
        samples: 64,
        ..SmoothingConfig::default()
    };
    // pgd, pgd from the origin, fgm, random, clean
    let mut loss = vec![Vec::new(); 5];
    for i in 0..500u64 {
        let f = transmit(mlp.code(), &snr, 16, i, MessageMode::Uniform);
        let oracle = DecoderLoss::new(&mlp, &f.codeword, snr.sigma2);
        let eval = SmoothingConfig {
            samples: 512,
            seed: i,
            ..SmoothingConfig::default()
        };
        let cfg = attack_cfg.with_seed(i);
        let pgd_cfg = PgdConfig {
            seed: i,
            ..PgdConfig::default()
        };
        let pgd = pgd_attack(&mlp, &f, &budget, &cfg, &pgd_cfg).unwrap();
        let origin = PgdConfig {
            random_start: false,
            ..pgd_cfg
        };
        let pgd0 = pgd_attack(&mlp, &f, &budget, &cfg, &origin).unwrap();
        let fgm = fgm_attack(&mlp, &f, &budget, &cfg).unwrap();
        let random = random_baseline(7, budget.sample_epsilon(&f.received), 17, i);
        for (k, d) in [pgd.delta, pgd0.delta, fgm.delta, random, vec![0.0; 7]]
            .iter()
            .enumerate()
        {
            loss[k].push(smoothed_loss(&oracle, &offset(&f.received, d), &eval).unwrap());
        }
    }
    let gap = |a: usize, b: usize| paired(&loss[a], &loss[b]);
    // Not significantly below FGM at about the 1% level.
    let (mean, se) = gap(1, 2);
    assert!(mean > -2.6 * se, "pgd from origin vs fgm: {mean} ± {se}");
    for (a, b, what) in [(0, 3, "pgd vs random"), (2, 3, "fgm vs random"), (2, 4, "fgm vs clean")] {
        let (mean, se) = gap(a, b);
        assert!(mean > 3.0 * se, "{what}: {mean} ± {se}");
    }
    let (mean, se) = gap(3, 4);
    assert!(mean > -2.6 * se, "random vs clean: {mean} ± {se}");
}

#[test]
fn target_error_stopping_bounds_relative_error() {
    let ham = code("hamming_7_4");
    let sp = BeliefPropagation::sum_product(ham, 10);
    for snr in [3.0, 5.0] {
        let cfg = FerConfig {
            snr_db: snr,
            frames: 1_000_000,
            target_errors: Some(100),
            seed: 18,
            ..FerConfig::default()
        };
        let s = simulate(&[&sp], &Perturber::None, &cfg).unwrap().stats[0];
        assert_eq!(s.frame_errors, 100);
        let p = s.fer();
        let rel_se = ((1.0 - p) / (p * s.frames as f64)).sqrt();
        assert!(rel_se <= 0.1, "{rel_se}");
    }
}

fn sparse_matrix(rows: usize, cols: usize, seed: u64) -> Gf2Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut h = Gf2Matrix::zeros(rows, cols);
    for j in 0..cols {
        h.set(rng.random_range(0..rows), j, true);
    }
    for r in 0..rows {
        h.set(r, rng.random_range(0..cols), true);
    }
    for _ in 0..rows * cols / 4 {
        h.set(rng.random_range(0..rows), rng.random_range(0..cols), true);
    }
    h
}

proptest! {
    #[test]
    fn alist_serialization_is_idempotent(rows in 1usize..20, cols in 1usize..60, seed in any::<u64>()) {
        let h = sparse_matrix(rows, cols, seed);
        let text = to_alist(&h);
        let parsed = parse_alist(&text).unwrap();
        prop_assert_eq!(&parsed, &h);
        prop_assert_eq!(to_alist(&parsed), text);
    }
}
