//! Probe probabilities as the mixed-in weight sweeps 0.1..0.8; writes CSV to
//! stdout.

use mixdiff::probe::{probability_curve, spearman, Probe};
use mixdiff::sampler::{PhaseBounds, SamplerConfig};
use mixdiff::score_models::default_layout;
use mixdiff::{AnalyticScoreModel, NoiseSchedule};

fn main() -> mixdiff::Result<()> {
    let schedule = NoiseSchedule::default();
    let layout = default_layout();
    let model = AnalyticScoreModel::new(schedule, layout.clone())?;
    let probe = Probe::new(layout.clone())?;
    let gammas: Vec<f64> = (1..=8).map(|i| i as f64 / 10.0).collect();
    let curve = probability_curve(
        &model,
        &schedule,
        &probe,
        layout[1].condition(),
        layout[3].condition(),
        &gammas,
        500,
        PhaseBounds::default(),
        &SamplerConfig::default().with_seed(11),
    )?;
    curve.write_csv(std::io::stdout())?;
    let rho = spearman(&gammas, &curve.series("Surprise").expect("label exists"))?;
    eprintln!("Spearman(gamma, P(Surprise)) = {rho}");
    Ok(())
}
