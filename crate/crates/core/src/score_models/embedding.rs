use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// A labelled condition vector. The engine treats the vector as opaque, so
/// averaged or interpolated embeddings are valid inputs everywhere.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionEmbedding {
    pub label: String,
    pub vector: Vec<f64>,
}

impl ConditionEmbedding {
    pub fn new(label: impl Into<String>, vector: Vec<f64>) -> Result<Self> {
        let label = label.into();
        if vector.is_empty() || vector.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation {
                item: "ConditionEmbedding",
                reason: format!("embedding for '{label}' must be nonempty and finite"),
            });
        }
        Ok(Self { label, vector })
    }

    pub fn dim(&self) -> usize {
        self.vector.len()
    }
}

/// One-hot vector of length `dim` with a 1 at `index`.
pub fn one_hot(index: usize, dim: usize) -> Vec<f64> {
    let mut v = vec![0.0; dim];
    if index < dim {
        v[index] = 1.0;
    }
    v
}

/// Componentwise mean of a set of same-condition reference embeddings.
pub fn embed_average<V: AsRef<[f64]>>(vectors: &[V]) -> Result<Vec<f64>> {
    let first = vectors
        .first()
        .ok_or_else(|| Error::Argument("embed_average needs at least one vector".into()))?
        .as_ref();
    let mut acc = vec![0.0; first.len()];
    for v in vectors {
        let v = v.as_ref();
        check_dim("embed_average", first.len(), v.len())?;
        for (a, x) in acc.iter_mut().zip(v) {
            *a += x;
        }
    }
    let n = vectors.len() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn identical_vectors_average_to_themselves() {
        let v = vec![0.25, -1.0, 3.0];
        assert_eq!(embed_average(&vec![v.clone(); 7]).unwrap(), v);
    }

    #[test]
    fn midpoint() {
        assert_eq!(
            embed_average(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap(),
            vec![0.5, 0.5]
        );
    }

    #[test]
    fn empty_and_ragged_inputs_fail() {
        let empty: Vec<Vec<f64>> = vec![];
        assert!(matches!(embed_average(&empty), Err(Error::Argument(_))));
        assert!(matches!(
            embed_average(&[vec![1.0, 2.0], vec![1.0]]),
            Err(Error::Shape { .. })
        ));
    }

    #[test]
    fn noisy_references_concentrate_on_centre() {
        let centre = [0.0, 1.0, 0.0, 0.0];
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let mut last_err = f64::INFINITY;
        for &scale in &[0.5, 0.05, 0.005] {
            let noise = Normal::new(0.0, scale).unwrap();
            let refs: Vec<Vec<f64>> = (0..100)
                .map(|_| centre.iter().map(|c| c + noise.sample(&mut rng)).collect())
                .collect();
            let avg = embed_average(&refs).unwrap();
            let err = avg
                .iter()
                .zip(&centre)
                .map(|(a, c)| (a - c).abs())
                .fold(0.0, f64::max);
            // 4 coords, sd of the mean = scale / 10
            assert!(err < 4.0 * scale / 10.0);
            assert!(err < last_err);
            last_err = err;
        }
    }

    #[test]
    fn rejects_non_finite_embedding() {
        assert!(ConditionEmbedding::new("x", vec![f64::NAN]).is_err());
        assert!(ConditionEmbedding::new("x", vec![]).is_err());
    }
}
