use std::f64::consts::FRAC_PI_2;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::ScoreModel;
use crate::error::{check_dim, Error, Result};

/// Number of sinusoidal time features fed to the network.
pub const TIME_FEATURES: usize = 8;

const CHECKPOINT_MAGIC: &[u8; 8] = b"MXDFNET1";

/// Fixed sinusoidal encoding of `t`: `sin/cos(ω_k t)` with
/// `ω_k = (π/2)·2^k`, `k = 0..4`.
pub fn time_encoding(t: f64) -> [f64; TIME_FEATURES] {
    let mut out = [0.0; TIME_FEATURES];
    for k in 0..TIME_FEATURES / 2 {
        let w = FRAC_PI_2 * (1u32 << k) as f64;
        out[2 * k] = (w * t).sin();
        out[2 * k + 1] = (w * t).cos();
    }
    out
}

/// Fully connected score network: `tanh` hidden layers, linear output.
///
/// Input is `[x, time_encoding(t), e]`. All parameters live in one flat
/// buffer; layer `l` stores its `out × in` weight matrix row-major followed
/// by its bias.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpScoreNetwork {
    dim: usize,
    embed_dim: usize,
    widths: Vec<usize>,
    params: Vec<f64>,
}

/// Per-layer activations from a batched forward pass. The last entry is the
/// network output.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    activations: Vec<Array2<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &Array2<f64> {
        self.activations.last().expect("nonempty")
    }
}

const MAX_CHECKPOINT_WIDTH: usize = 1 << 16;

fn read_exact<R: Read>(input: &mut R, buf: &mut [u8]) -> Result<()> {
    input.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::Checkpoint("truncated checkpoint".into()),
        _ => Error::Io(e),
    })
}

impl MlpScoreNetwork {
    /// Network with every parameter zero.
    pub fn zeros(dim: usize, embed_dim: usize, hidden: &[usize]) -> Result<Self> {
        if dim == 0 || hidden.contains(&0) {
            return Err(Error::Argument("layer widths must be positive".into()));
        }
        let mut widths = Vec::with_capacity(hidden.len() + 2);
        widths.push(dim + TIME_FEATURES + embed_dim);
        widths.extend_from_slice(hidden);
        widths.push(dim);
        let count = widths.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        Ok(Self {
            dim,
            embed_dim,
            widths,
            params: vec![0.0; count],
        })
    }

    /// Weights drawn from `N(0, 1/fan_in)`, biases zero.
    pub fn random<R: Rng + ?Sized>(
        dim: usize,
        embed_dim: usize,
        hidden: &[usize],
        rng: &mut R,
    ) -> Result<Self> {
        let mut net = Self::zeros(dim, embed_dim, hidden)?;
        let mut offset = 0;
        for l in 0..net.widths.len() - 1 {
            let (fan_in, fan_out) = (net.widths[l], net.widths[l + 1]);
            let normal = Normal::new(0.0, (1.0 / fan_in as f64).sqrt()).expect("positive sd");
            for p in &mut net.params[offset..offset + fan_in * fan_out] {
                *p = normal.sample(rng);
            }
            offset += fan_in * fan_out + fan_out;
        }
        Ok(net)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn embed_dim(&self) -> usize {
        self.embed_dim
    }

    pub fn input_width(&self) -> usize {
        self.widths[0]
    }

    /// Hidden layer widths.
    pub fn hidden(&self) -> &[usize] {
        &self.widths[1..self.widths.len() - 1]
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn layer(&self, l: usize) -> (ArrayView2<'_, f64>, ArrayView1<'_, f64>) {
        let offset: usize = self.widths[..=l]
            .windows(2)
            .map(|w| w[0] * w[1] + w[1])
            .sum();
        let (n_in, n_out) = (self.widths[l], self.widths[l + 1]);
        let w = ArrayView2::from_shape((n_out, n_in), &self.params[offset..offset + n_in * n_out])
            .expect("layout");
        let b =
            ArrayView1::from(&self.params[offset + n_in * n_out..offset + n_in * n_out + n_out]);
        (w, b)
    }

    /// Assemble one input row `[x, time_encoding(t), e]`.
    pub fn build_input(&self, x: &[f64], t: f64, embedding: &[f64]) -> Result<Vec<f64>> {
        check_dim("mlp input x", self.dim, x.len())?;
        check_dim("mlp input embedding", self.embed_dim, embedding.len())?;
        let mut row = Vec::with_capacity(self.input_width());
        row.extend_from_slice(x);
        row.extend_from_slice(&time_encoding(t));
        row.extend_from_slice(embedding);
        Ok(row)
    }

    /// Batched forward pass over rows of `inputs`.
    pub fn forward_batch(&self, inputs: Array2<f64>) -> Result<ForwardCache> {
        check_dim("mlp batch width", self.input_width(), inputs.ncols())?;
        let n_layers = self.widths.len() - 1;
        let mut activations = Vec::with_capacity(n_layers + 1);
        activations.push(inputs);
        for l in 0..n_layers {
            let (w, b) = self.layer(l);
            let mut z = activations[l].dot(&w.t());
            z += &b;
            if l + 1 < n_layers {
                z.mapv_inplace(f64::tanh);
            }
            activations.push(z);
        }
        Ok(ForwardCache { activations })
    }

    /// Gradient of a scalar loss with respect to every parameter, given the
    /// loss gradient with respect to the network output of `cache`.
    pub fn backward(&self, cache: &ForwardCache, d_output: &Array2<f64>) -> Vec<f64> {
        let n_layers = self.widths.len() - 1;
        let mut grad = vec![0.0; self.params.len()];
        let mut delta = d_output.clone();
        let mut offset = self.params.len();
        for l in (0..n_layers).rev() {
            let (n_in, n_out) = (self.widths[l], self.widths[l + 1]);
            offset -= n_in * n_out + n_out;
            let a_prev = &cache.activations[l];
            let gw = delta.t().dot(a_prev);
            let gb = delta.sum_axis(Axis(0));
            grad[offset..offset + n_in * n_out]
                .iter_mut()
                .zip(gw.iter())
                .for_each(|(g, v)| *g = *v);
            grad[offset + n_in * n_out..offset + n_in * n_out + n_out]
                .iter_mut()
                .zip(gb.iter())
                .for_each(|(g, v)| *g = *v);
            if l > 0 {
                let (w, _) = self.layer(l);
                let mut next = delta.dot(&w);
                next.zip_mut_with(a_prev, |d, a| *d *= 1.0 - a * a);
                delta = next;
            }
        }
        grad
    }

    /// Evaluate `loss_fn` on the batch output and return the loss with its
    /// parameter gradient. `loss_fn` returns the loss and `∂loss/∂output`.
    pub fn loss_and_gradient<F>(&self, inputs: Array2<f64>, loss_fn: F) -> Result<(f64, Vec<f64>)>
    where
        F: FnOnce(&Array2<f64>) -> (f64, Array2<f64>),
    {
        let cache = self.forward_batch(inputs)?;
        let (loss, d_out) = loss_fn(cache.output());
        check_dim("loss gradient rows", cache.output().nrows(), d_out.nrows())?;
        check_dim("loss gradient cols", self.dim, d_out.ncols())?;
        Ok((loss, self.backward(&cache, &d_out)))
    }

    pub fn evaluate(&self, x: &[f64], t: f64, embedding: &[f64]) -> Result<Vec<f64>> {
        let row = self.build_input(x, t, embedding)?;
        let input = Array2::from_shape_vec((1, row.len()), row).expect("one row");
        let cache = self.forward_batch(input)?;
        Ok(cache.output().row(0).to_vec())
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(CHECKPOINT_MAGIC)?;
        let header = [
            self.dim as u64,
            self.embed_dim as u64,
            TIME_FEATURES as u64,
            self.hidden().len() as u64,
        ];
        let widths = self.hidden().iter().map(|&h| h as u64);
        for v in header.into_iter().chain(widths) {
            out.write_all(&v.to_le_bytes())?;
        }
        out.write_all(&(self.params.len() as u64).to_le_bytes())?;
        for p in &self.params {
            out.write_all(&p.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut input: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        read_exact(&mut input, &mut magic)?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(Error::Checkpoint("bad magic".into()));
        }
        let read_u64 = |input: &mut R| -> Result<u64> {
            let mut b = [0u8; 8];
            read_exact(input, &mut b)?;
            Ok(u64::from_le_bytes(b))
        };
        let dim = read_u64(&mut input)? as usize;
        let embed_dim = read_u64(&mut input)? as usize;
        let time_features = read_u64(&mut input)? as usize;
        if time_features != TIME_FEATURES {
            return Err(Error::Checkpoint(format!(
                "time feature count {time_features}, expected {TIME_FEATURES}"
            )));
        }
        let n_hidden = read_u64(&mut input)? as usize;
        if n_hidden > 64 {
            return Err(Error::Checkpoint(format!(
                "implausible layer count {n_hidden}"
            )));
        }
        let hidden = (0..n_hidden)
            .map(|_| read_u64(&mut input).map(|h| h as usize))
            .collect::<Result<Vec<_>>>()?;
        if [dim, embed_dim]
            .iter()
            .chain(&hidden)
            .any(|&w| w > MAX_CHECKPOINT_WIDTH)
        {
            return Err(Error::Checkpoint(format!(
                "implausible layer widths dim={dim} embed={embed_dim} hidden={hidden:?}"
            )));
        }
        let mut net =
            Self::zeros(dim, embed_dim, &hidden).map_err(|e| Error::Checkpoint(e.to_string()))?;
        let count = read_u64(&mut input)? as usize;
        if count != net.params.len() {
            return Err(Error::Checkpoint(format!(
                "parameter count {count}, header implies {}",
                net.params.len()
            )));
        }
        for p in &mut net.params {
            let mut b = [0u8; 8];
            read_exact(&mut input, &mut b)?;
            *p = f64::from_le_bytes(b);
        }
        if net.params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Checkpoint("non-finite parameter".into()));
        }
        Ok(net)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(file);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::read_from(std::io::BufReader::new(file))
    }

    /// Stack `(x, t, e)` triples into a batch input matrix.
    pub fn batch_input<'a, I>(&self, rows: I) -> Result<Array2<f64>>
    where
        I: IntoIterator<Item = (&'a [f64], f64, &'a [f64])>,
    {
        let mut flat = Vec::new();
        let mut n = 0;
        for (x, t, e) in rows {
            flat.extend(self.build_input(x, t, e)?);
            n += 1;
        }
        Ok(Array2::from_shape_vec((n, self.input_width()), flat).expect("row width"))
    }
}

impl ScoreModel for MlpScoreNetwork {
    fn dim(&self) -> usize {
        self.dim
    }

    fn score(&self, x: &[f64], t: f64, embedding: &[f64]) -> Result<Vec<f64>> {
        self.evaluate(x, t, embedding)
    }
}
