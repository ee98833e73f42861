//! Exact scores of the default Gaussian-mixture layout, checked against
//! central differences of the log density.

use mixdiff::score_models::default_layout;
use mixdiff::{AnalyticScoreModel, NoiseSchedule, ScoreModel};

fn main() -> mixdiff::Result<()> {
    let schedule = NoiseSchedule::default();
    let model = AnalyticScoreModel::new(schedule, default_layout())?;
    let x = [0.7, 1.1];
    let h = 1e-5;
    for cond in model.conditions() {
        for t in [0.0, 0.1, 0.5] {
            let s = model.score(&x, t, &cond.condition().vector)?;
            let fd: Vec<f64> = (0..2)
                .map(|k| {
                    let (mut xp, mut xm) = (x, x);
                    xp[k] += h;
                    xm[k] -= h;
                    let lp = cond.log_density(&schedule, &xp, t).unwrap();
                    let lm = cond.log_density(&schedule, &xm, t).unwrap();
                    (lp - lm) / (2.0 * h)
                })
                .collect();
            println!(
                "{:<9} t={t:<4} score=[{:>9.5}, {:>9.5}]  fd=[{:>9.5}, {:>9.5}]",
                cond.label(),
                s[0],
                s[1],
                fd[0],
                fd[1]
            );
        }
    }
    Ok(())
}
