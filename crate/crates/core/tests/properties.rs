use mixdiff::probe::Probe;
use mixdiff::sampler::{
    sample_batch, sample_mixed_batch, MixSpec, Phase, PhasePlan, SamplerConfig,
};
use mixdiff::score_models::{default_layout, GaussianComponent};
use mixdiff::training::gram_matrix;
use mixdiff::{
    AnalyticScoreModel, ConditionEmbedding, ConditionedDistribution, MlpScoreNetwork, NoiseSchedule,
};
use ndarray::Array2;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn schedule_identity_holds_for_any_schedule(b0 in 0.0f64..5.0, span in 0.0f64..40.0, t in 0.0f64..=1.0) {
        let s = NoiseSchedule::new(b0, b0 + span).unwrap();
        let a = s.alpha(t).unwrap();
        prop_assert!((a * a + s.lambda_var(t).unwrap() - 1.0).abs() < 1e-12);
        prop_assert!(s.alpha(t).unwrap() <= 1.0 && s.lambda_var(t).unwrap() >= 0.0);
    }

    #[test]
    fn posterior_is_a_distribution(x0 in -6.0f64..6.0, x1 in -6.0f64..6.0) {
        let probe = Probe::new(default_layout()).unwrap();
        let p = probe.posterior(&[x0, x1]).unwrap();
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(p.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn posterior_is_permutation_equivariant(x0 in -4.0f64..4.0, x1 in -4.0f64..4.0, rot in 0usize..4) {
        let layout = default_layout();
        let mut rotated = layout.clone();
        rotated.rotate_left(rot);
        let p = Probe::new(layout).unwrap().posterior(&[x0, x1]).unwrap();
        let q = Probe::new(rotated).unwrap().posterior(&[x0, x1]).unwrap();
        for i in 0..4 {
            prop_assert!((q[i] - p[(i + rot) % 4]).abs() < 1e-12);
        }
    }

    #[test]
    fn gram_is_symmetric_psd(c in 1usize..6, l in 1usize..10, seed in any::<u64>(), v in proptest::collection::vec(-3.0f64..3.0, 6)) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = Array2::from_shape_fn((c, l), |_| rand::Rng::random_range(&mut rng, -2.0..2.0));
        let g = gram_matrix(&f).unwrap();
        let mut quad = 0.0;
        for i in 0..c {
            for j in 0..c {
                prop_assert_eq!(g[[i, j]], g[[j, i]]);
                quad += v[i] * g[[i, j]] * v[j];
            }
        }
        prop_assert!(quad >= -1e-12);
    }

    #[test]
    fn phase_plan_partitions_steps(n in 1usize..200, a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
        let (k_min, k_max) = if a <= b { (a, b) } else { (b, a) };
        let plan = PhasePlan::new(n, k_max, k_min);
        prop_assert_eq!(plan.phases().len(), n);
        let total = plan.count(Phase::Base) + plan.count(Phase::Combined) + plan.count(Phase::MixIn);
        prop_assert_eq!(total, n);
        // phases never go backwards along the trajectory
        let rank = |p: &Phase| match p { Phase::Base => 0, Phase::Combined => 1, Phase::MixIn => 2 };
        prop_assert!(plan.phases().windows(2).all(|w| rank(&w[0]) <= rank(&w[1])));
    }

    #[test]
    fn mixspec_rejects_weights_not_summing_to_one(w in 0.0f64..1.0, extra in 0.001f64..0.5) {
        let layout = default_layout();
        let mk = |weight: f64, i: usize| mixdiff::sampler::MixComponent { embedding: layout[i].condition().clone(), weight };
        let bad = MixSpec::new(vec![mk(w, 1), mk(1.0 - w + extra, 3)], 0, 0.6, 0.2, false);
        prop_assert!(bad.is_err());
    }

    #[test]
    fn checkpoint_roundtrip(seed in any::<u64>(), h1 in 1usize..8, h2 in 1usize..8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = MlpScoreNetwork::random(2, 3, &[h1, h2], &mut rng).unwrap();
        let mut bytes = Vec::new();
        net.write_to(&mut bytes).unwrap();
        let back = MlpScoreNetwork::read_from(bytes.as_slice()).unwrap();
        prop_assert_eq!(back, net);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn zero_weight_mix_matches_single_condition(seed in any::<u64>(), base in 0usize..4, other in 0usize..4, steps in 1usize..30) {
        let s = NoiseSchedule::default();
        let layout = default_layout();
        let model = AnalyticScoreModel::new(s, layout.clone()).unwrap();
        let mix = MixSpec::dual(layout[base].condition().clone(), layout[other].condition().clone(), 0.0, 0.6, 0.2, true).unwrap();
        let cfg = SamplerConfig::default().with_seed(seed).with_steps(steps);
        let a = sample_mixed_batch(&model, &s, &mix, &cfg, 8).unwrap();
        let b = sample_batch(&model, &s, &layout[base].condition().vector, &cfg, 8).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn score_is_translation_covariant(shift in -2.0f64..2.0, t in 0.01f64..1.0, x0 in -3.0f64..3.0) {
        // shifting every mean by c shifts the marginal by alpha(t) c
        let s = NoiseSchedule::default();
        let mk = |c: f64| ConditionedDistribution::new(
            ConditionEmbedding::new("m", vec![1.0]).unwrap(),
            vec![
                GaussianComponent { weight: 0.4, mean: vec![-1.0 + c], variance: 0.3 },
                GaussianComponent { weight: 0.6, mean: vec![1.5 + c], variance: 0.2 },
            ],
        ).unwrap();
        let a = s.alpha(t).unwrap();
        let base = mk(0.0).score(&s, &[x0], t).unwrap()[0];
        let moved = mk(shift).score(&s, &[x0 + a * shift], t).unwrap()[0];
        prop_assert!((base - moved).abs() < 1e-9 * base.abs().max(1.0));
    }
}
