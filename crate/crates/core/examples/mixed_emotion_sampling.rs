//! Mix two conditions at sampling time: Happy establishes the coarse
//! structure, Surprise is blended in and finally takes over.

use mixdiff::probe::Probe;
use mixdiff::sampler::{sample_mixed_batch, MixSpec, Phase, SamplerConfig};
use mixdiff::score_models::default_layout;
use mixdiff::{AnalyticScoreModel, NoiseSchedule};

fn main() -> mixdiff::Result<()> {
    let schedule = NoiseSchedule::default();
    let layout = default_layout();
    let model = AnalyticScoreModel::new(schedule, layout.clone())?;
    let probe = Probe::new(layout.clone())?;
    let (happy, surprise) = (layout[1].condition().clone(), layout[3].condition().clone());

    let cfg = SamplerConfig::default().with_seed(7);
    let mix = MixSpec::dual(happy, surprise, 0.3, 0.6, 0.2, true)?;
    let plan = mix.plan(cfg.steps);
    let phases: Vec<&str> = plan.phases().iter().map(Phase::as_str).collect();
    println!("phase plan for N = {}: {}", cfg.steps, phases.join(" "));

    let samples = sample_mixed_batch(&model, &schedule, &mix, &cfg, 2000)?;
    let result = probe.evaluate(&samples, mix.descriptor())?;
    println!("{}", result.descriptor);
    for (label, (p, se)) in result
        .labels
        .iter()
        .zip(result.probabilities.iter().zip(&result.std_errors))
    {
        println!("  P({label}) = {p:.4} ± {se:.4}");
    }
    Ok(())
}
