//! Print the noise schedule and draw from the forward marginal `p(x_t | x_0)`.

use mixdiff::NoiseSchedule;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn main() -> mixdiff::Result<()> {
    let s = NoiseSchedule::default();
    println!(
        "{:>5} {:>8} {:>10} {:>10} {:>10}",
        "t", "beta", "int beta", "alpha", "lambda"
    );
    for i in 0..=10 {
        let t = i as f64 / 10.0;
        println!(
            "{t:>5.1} {:>8.3} {:>10.5} {:>10.6} {:>10.6}",
            s.beta_at(t)?,
            s.beta_integral(t)?,
            s.alpha(t)?,
            s.lambda_var(t)?
        );
    }

    let x0 = [2.0, 0.0];
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for t in [0.05, 0.2, 0.5, 1.0] {
        let eps: Vec<f64> = (0..2).map(|_| StandardNormal.sample(&mut rng)).collect();
        let xt = s.forward_sample(&x0, t, &eps)?;
        println!("x_t at t = {t}: [{:.4}, {:.4}]", xt[0], xt[1]);
    }
    Ok(())
}
