//! Split I/Q convolutional autoencoder with a Siamese angular-distance head.
//!
//! The encoder runs the I and Q sequences through separate
//! convolution/tanh/max-pool stacks, concatenates and flattens them and maps
//! the result to a `D`-dimensional embedding with one dense layer. The
//! decoder mirrors it: dense, tanh, unflatten, then per branch
//! nearest-neighbour upsampling and convolution back to one channel.
//!
//! Training minimizes `lambda_rec * MSE + lambda_trip * mean triplet loss`
//! with batch-hard mining on 8 x 4 batches.

mod arch;
mod checkpoint;
mod config;
mod distance;
mod net;
mod scalar;
mod train;

pub use arch::TensorInfo;
pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use config::{ConvStage, ModelConfig};
pub use distance::{angular_distance, mine_triplets, triplet_loss, Embedding, Triplet, NORM_FLOOR};
pub use train::{gradient_check, train, EpochStats, GradientCheck};

use rand::Rng;

use crate::sigcore::Waveform;
use crate::synth::rng_from_seed;
use crate::{Error, Result};
use arch::Arch;
use scalar::Scalar;

/// Inference batch size; any size gives identical per-message results.
const ENCODE_CHUNK: usize = 32;

/// Trained (or freshly initialized) network with its config and history.
#[derive(Debug, Clone)]
pub struct FingerprintModel {
    config: ModelConfig,
    arch: Arch,
    params: Vec<f32>,
    history: Vec<EpochStats>,
}

/// Checkpoints are complete models.
pub type Checkpoint = FingerprintModel;

pub(crate) fn init_params<T: Scalar>(arch: &Arch, seed: u64) -> Vec<T> {
    let mut rng = rng_from_seed(seed);
    let mut p = vec![T::zero(); arch.n_params];
    for (idx, t) in arch.tensors.iter().enumerate() {
        if let Some(bound) = arch.init_bound(idx) {
            for v in &mut p[t.range()] {
                *v = T::of(rng.random_range(-bound..bound));
            }
        }
    }
    p
}

/// Splits waveforms into per-branch `[b][len]` buffers.
pub(crate) fn branch_inputs<T: Scalar>(ws: &[&Waveform], len: usize) -> Result<[Vec<T>; 2]> {
    let mut i = Vec::with_capacity(ws.len() * len);
    let mut q = Vec::with_capacity(ws.len() * len);
    for w in ws {
        if w.len() != len {
            return Err(Error::Shape { what: "waveform length", expected: len, actual: w.len() });
        }
        i.extend(w.i().iter().map(|&v| T::of(f64::from(v))));
        q.extend(w.q().iter().map(|&v| T::of(f64::from(v))));
    }
    Ok([i, q])
}

impl FingerprintModel {
    /// Freshly initialized model: uniform weights in `+-sqrt(3 / fan_in)`
    /// drawn from `config.init_seed`, zero biases.
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let arch = Arch::new(&config);
        let params = init_params(&arch, config.init_seed);
        Ok(FingerprintModel { config, arch, params, history: Vec::new() })
    }

    pub(crate) fn from_parts(config: ModelConfig, params: Vec<f32>, history: Vec<EpochStats>) -> Result<Self> {
        config.validate()?;
        let arch = Arch::new(&config);
        if params.len() != arch.n_params {
            return Err(Error::Shape { what: "parameter count", expected: arch.n_params, actual: params.len() });
        }
        Ok(FingerprintModel { config, arch, params, history })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    /// Per-epoch losses recorded during training.
    pub fn history(&self) -> &[EpochStats] {
        &self.history
    }

    /// Parameter tensors in canonical order.
    pub fn tensors(&self) -> &[TensorInfo] {
        &self.arch.tensors
    }

    /// Values of the named tensor, row-major in its shape.
    pub fn tensor(&self, name: &str) -> Option<&[f32]> {
        self.arch.tensors.iter().find(|t| t.name == name).map(|t| &self.params[t.range()])
    }

    pub fn n_params(&self) -> usize {
        self.arch.n_params
    }

    pub(crate) fn params(&self) -> &[f32] {
        &self.params
    }

    fn embeddings_of(&self, e: &[f32], b: usize) -> Result<Vec<Embedding>> {
        let d = self.arch.dim;
        (0..b).map(|k| Embedding::new((0..d).map(|j| e[j * b + k]).collect())).collect()
    }

    /// Embedding of one normalized waveform of the configured length.
    pub fn encode(&self, w: &Waveform) -> Result<Embedding> {
        Ok(self.encode_many(&[w])?.remove(0))
    }

    /// Embeddings of many waveforms; each result depends only on its own input.
    pub fn encode_many(&self, ws: &[&Waveform]) -> Result<Vec<Embedding>> {
        let mut out = Vec::with_capacity(ws.len());
        for chunk in ws.chunks(ENCODE_CHUNK) {
            let inputs = branch_inputs::<f32>(chunk, self.arch.input_len)?;
            let tr = net::encode(&self.arch, &self.params, [&inputs[0], &inputs[1]], chunk.len());
            out.extend(self.embeddings_of(&tr.e, chunk.len())?);
        }
        Ok(out)
    }

    /// Reconstruction of the I/Q sequences from an embedding.
    pub fn decode(&self, e: &Embedding) -> Result<Waveform> {
        if e.dim() != self.arch.dim {
            return Err(Error::Shape { what: "embedding", expected: self.arch.dim, actual: e.dim() });
        }
        let tr = net::decode(&self.arch, &self.params, e.as_slice(), 1);
        Waveform::new(tr.output(0).to_vec(), tr.output(1).to_vec())
    }

    /// Mean per-message reconstruction MSE over both branches.
    pub fn reconstruction_error(&self, ws: &[&Waveform]) -> Result<f64> {
        if ws.is_empty() {
            return Err(Error::Precondition("no waveforms to reconstruct".into()));
        }
        let mut total = 0.0;
        for chunk in ws.chunks(ENCODE_CHUNK) {
            let inputs = branch_inputs::<f32>(chunk, self.arch.input_len)?;
            let enc = net::encode(&self.arch, &self.params, [&inputs[0], &inputs[1]], chunk.len());
            let dec = net::decode(&self.arch, &self.params, &enc.e, chunk.len());
            for br in 0..2 {
                total += dec
                    .output(br)
                    .iter()
                    .zip(&inputs[br])
                    .map(|(&y, &x)| f64::from(y - x).powi(2))
                    .sum::<f64>();
            }
        }
        Ok(total / (2 * self.arch.input_len * ws.len()) as f64)
    }
}
