//! Train the MLP score network on a single 2-D Gaussian, compare it with the
//! exact score, then sample from it.
//!
//! Optional argument: number of training steps (default 5000).

use mixdiff::probe::moment_check;
use mixdiff::sampler::{sample_batch, SamplerConfig};
use mixdiff::training::{score_matching_error, train, FeatureExtractor, TrainConfig};
use mixdiff::{
    AnalyticScoreModel, ConditionEmbedding, ConditionedDistribution, MlpScoreNetwork, NoiseSchedule,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> mixdiff::Result<()> {
    let steps = std::env::args()
        .nth(1)
        .map_or(5000, |s| s.parse().expect("steps must be an integer"));
    let schedule = NoiseSchedule::default();
    let happy = ConditionedDistribution::gaussian(
        ConditionEmbedding::new("Happy", vec![1.0])?,
        vec![2.0, 0.0],
        0.25,
    )?;
    let oracle = AnalyticScoreModel::new(schedule, vec![happy.clone()])?;

    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let network = MlpScoreNetwork::random(2, 1, &[64, 64], &mut rng)?;
    let extractor = FeatureExtractor::seeded(2, &[8, 8], 3, 1)?;
    let config = TrainConfig {
        steps,
        ..TrainConfig::default()
    };
    let before = score_matching_error(&network, &oracle, 4000, 1e-3, 99)?;
    let outcome = train(
        network,
        std::slice::from_ref(&happy),
        &schedule,
        &config,
        &extractor,
    )?;
    let after = score_matching_error(&outcome.network, &oracle, 4000, 1e-3, 99)?;
    println!(
        "score-matching error / zero baseline: {:.3} -> {:.3}",
        before.ratio(),
        after.ratio()
    );

    let path = std::env::temp_dir().join("mixdiff-example-network.bin");
    outcome.network.save(&path)?;
    let reloaded = MlpScoreNetwork::load(&path)?;
    let cfg = SamplerConfig::default().with_seed(5).with_steps(100);
    let samples = sample_batch(&reloaded, &schedule, &[1.0], &cfg, 2000)?;
    let r = moment_check(&samples, &happy)?;
    println!(
        "network samples: mean error {:.3?}, max covariance error {:.3}",
        r.mean_error, r.covariance_max_abs_error
    );
    Ok(())
}
