//! Reverse-SDE sampling of one condition with the exact score, compared with
//! the target's closed-form moments.

use mixdiff::probe::moment_check;
use mixdiff::sampler::{sample_batch, SamplerConfig};
use mixdiff::score_models::default_layout;
use mixdiff::{AnalyticScoreModel, NoiseSchedule};

fn main() -> mixdiff::Result<()> {
    let schedule = NoiseSchedule::default();
    let layout = default_layout();
    let model = AnalyticScoreModel::new(schedule, layout.clone())?;
    let happy = &layout[1];
    for steps in [10, 100, 1000] {
        let cfg = SamplerConfig::default().with_seed(1).with_steps(steps);
        let samples = sample_batch(&model, &schedule, &happy.condition().vector, &cfg, 4000)?;
        let r = moment_check(&samples, happy)?;
        println!(
            "N = {steps:>4}: mean error {:.4?}, max covariance error {:.4}, mean log-likelihood {:.4}",
            r.mean_error, r.covariance_max_abs_error, r.mean_log_likelihood
        );
    }
    Ok(())
}
