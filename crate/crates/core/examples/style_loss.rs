//! Gram-matrix style loss through a frozen convolutional feature extractor.

use mixdiff::training::{gram_matrix, style_loss, style_loss_and_grad, FeatureExtractor};
use ndarray::{array, Array2};

fn main() -> mixdiff::Result<()> {
    let id = FeatureExtractor::identity();
    let one = style_loss(&id, &array![[2.0]], &array![[1.0]])?;
    println!("identity extractor, m_hat = 2, m = 1: style loss = {one}");

    let f = array![[1.0, 2.0, 0.0], [0.0, 1.0, 1.0]];
    println!("gram of a 2x3 feature map:\n{}", gram_matrix(&f)?);

    let ex = FeatureExtractor::seeded(4, &[8, 8], 3, 0)?;
    let m = Array2::from_shape_fn((16, 4), |(i, j)| ((i * 4 + j) as f64 * 0.37).sin());
    let m_hat = &m + &Array2::from_shape_fn((16, 4), |(i, j)| 0.1 * ((i + 2 * j) as f64).cos());
    println!("style_loss(m, m) = {}", style_loss(&ex, &m, &m)?);
    let (loss, grad) = style_loss_and_grad(&ex, &m_hat, &m)?;
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    println!("perturbed: loss = {loss:.6e}, |d loss / d m_hat| = {norm:.6e}");
    Ok(())
}
