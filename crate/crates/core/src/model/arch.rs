//! Parameter layout and layer geometry.

use serde::Serialize;

use super::config::ModelConfig;

pub(crate) const BRANCHES: [&str; 2] = ["i", "q"];

/// A named tensor inside the flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TensorInfo {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

impl TensorInfo {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub(crate) fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }

    fn fan_in(&self) -> usize {
        self.shape[1..].iter().product::<usize>().max(1)
    }
}

/// Geometry of one convolution: `cin -> cout` channels, kernel `k`, operating
/// on sequences of length `len`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct ConvGeom {
    pub cin: usize,
    pub cout: usize,
    pub k: usize,
    pub len: usize,
    pub weight: usize,
    pub bias: usize,
}

#[derive(Debug, Clone)]
pub(crate) struct Arch {
    pub tensors: Vec<TensorInfo>,
    pub n_params: usize,
    pub dim: usize,
    pub input_len: usize,
    /// Per branch, encoder convs in order, with their pool factors.
    pub enc: [Vec<(ConvGeom, usize)>; 2],
    /// Branch channels and length at the bottleneck.
    pub bottleneck: (usize, usize),
    pub flat: usize,
    pub enc_dense: (usize, usize),
    pub dec_dense: (usize, usize),
    /// Per branch, decoder stages: nearest-neighbour upsample by the given
    /// factor to `ConvGeom::len` samples, then convolve.
    pub dec: [Vec<(ConvGeom, usize)>; 2],
}

struct Layout {
    tensors: Vec<TensorInfo>,
    next: usize,
}

impl Layout {
    fn add(&mut self, name: String, shape: Vec<usize>) -> usize {
        let t = TensorInfo { name, shape, offset: self.next };
        self.next += t.len();
        self.tensors.push(t);
        self.tensors.len() - 1
    }

    fn conv(&mut self, prefix: String, cin: usize, cout: usize, k: usize, len: usize) -> ConvGeom {
        let weight = self.add(format!("{prefix}.weight"), vec![cout, cin, k]);
        let bias = self.add(format!("{prefix}.bias"), vec![cout]);
        ConvGeom { cin, cout, k, len, weight, bias }
    }
}

impl Arch {
    /// Builds the layout for a validated config.
    ///
    /// Tensor names: `enc.{i,q}.conv{s}.{weight,bias}`, `enc.dense.{weight,bias}`,
    /// `dec.dense.{weight,bias}`, `dec.{i,q}.conv{s}.{weight,bias}`. Conv
    /// weights are `[out, in, kernel]`, dense weights `[out, in]`.
    pub fn new(cfg: &ModelConfig) -> Arch {
        let mut lay = Layout { tensors: Vec::new(), next: 0 };
        let mut lens = vec![cfg.input_len];
        for s in &cfg.stages {
            lens.push(lens.last().unwrap() / s.pool);
        }
        let chans: Vec<usize> =
            std::iter::once(1).chain(cfg.stages.iter().map(|s| s.channels)).collect();
        let n = cfg.stages.len();

        let enc = BRANCHES.map(|b| {
            (0..n)
                .map(|s| {
                    let st = cfg.stages[s];
                    let g =
                        lay.conv(format!("enc.{b}.conv{s}"), chans[s], chans[s + 1], st.kernel, lens[s]);
                    (g, st.pool)
                })
                .collect::<Vec<_>>()
        });
        let flat = cfg.flat_size();
        let d = cfg.embedding_dim;
        let enc_w = lay.add("enc.dense.weight".into(), vec![d, flat]);
        let enc_b = lay.add("enc.dense.bias".into(), vec![d]);
        let dec_w = lay.add("dec.dense.weight".into(), vec![flat, d]);
        let dec_b = lay.add("dec.dense.bias".into(), vec![flat]);
        let dec = BRANCHES.map(|b| {
            (0..n)
                .map(|s| {
                    let from = n - s;
                    let kernel = cfg.stages[from - 1].kernel;
                    let g = lay.conv(
                        format!("dec.{b}.conv{s}"),
                        chans[from],
                        chans[from - 1],
                        kernel,
                        lens[from - 1],
                    );
                    (g, cfg.stages[from - 1].pool)
                })
                .collect::<Vec<_>>()
        });
        Arch {
            n_params: lay.next,
            tensors: lay.tensors,
            dim: d,
            input_len: cfg.input_len,
            enc,
            bottleneck: (chans[n], lens[n]),
            flat,
            enc_dense: (enc_w, enc_b),
            dec_dense: (dec_w, dec_b),
            dec,
        }
    }

    pub fn tensor(&self, idx: usize) -> &TensorInfo {
        &self.tensors[idx]
    }

    /// Uniform initialization bound `sqrt(3 / fan_in)` for weight tensors;
    /// `None` for biases, which start at zero.
    pub fn init_bound(&self, idx: usize) -> Option<f64> {
        let t = &self.tensors[idx];
        if t.shape.len() < 2 {
            return None;
        }
        Some((3.0 / t.fan_in() as f64).sqrt())
    }
}
