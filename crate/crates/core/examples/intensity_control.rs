//! Vary emotion intensity by mixing Neutral with a target at weight gamma.

use mixdiff::probe::Probe;
use mixdiff::sampler::{intensity_mix, sample_mixed_batch, PhaseBounds, SamplerConfig};
use mixdiff::score_models::default_layout;
use mixdiff::{AnalyticScoreModel, NoiseSchedule};

fn main() -> mixdiff::Result<()> {
    let schedule = NoiseSchedule::default();
    let layout = default_layout();
    let model = AnalyticScoreModel::new(schedule, layout.clone())?;
    let probe = Probe::new(layout.clone())?;
    let (neutral, sad) = (layout[0].condition(), layout[2].condition());
    let cfg = SamplerConfig::default().with_seed(3);
    let target = probe.index_of("Sad").expect("Sad is in the layout");

    for gamma in [0.0, 0.2, 0.4, 0.6, 0.8] {
        let mix = intensity_mix(neutral, sad, gamma, PhaseBounds::default(), false)?;
        let samples = sample_mixed_batch(&model, &schedule, &mix, &cfg, 1000)?;
        let r = probe.evaluate(&samples, mix.descriptor())?;
        println!(
            "gamma = {gamma:.1}: P(Sad) = {:.4}",
            r.probabilities[target]
        );
    }
    Ok(())
}
