//! Can batches sampled at weak / medium / strong intensity be told apart from
//! their mean probe probability alone?

use mixdiff::probe::{intensity_confusion, ConfusionSettings, IntensityBucket, Probe};
use mixdiff::sampler::{PhaseBounds, SamplerConfig};
use mixdiff::score_models::default_layout;
use mixdiff::{AnalyticScoreModel, NoiseSchedule};

fn main() -> mixdiff::Result<()> {
    let schedule = NoiseSchedule::default();
    let layout = default_layout();
    let model = AnalyticScoreModel::new(schedule, layout.clone())?;
    let probe = Probe::new(layout.clone())?;
    let settings = ConfusionSettings {
        buckets: IntensityBucket::standard(),
        batches_per_bucket: 20,
        batch_size: 200,
        bounds: PhaseBounds::default(),
        calibration_seed: 1,
        evaluation_seed: 2,
    };
    let report = intensity_confusion(
        &model,
        &schedule,
        &probe,
        layout[0].condition(),
        layout[3].condition(),
        &settings,
        &SamplerConfig::default(),
    )?;
    report.matrix.write_csv(std::io::stdout())?;
    println!("centroids: {:.4?}", report.centroids);
    println!(
        "diagonal fraction: {:.3}",
        report.matrix.diagonal_fraction()
    );
    Ok(())
}
