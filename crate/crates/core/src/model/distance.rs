use serde::{Deserialize, Serialize};

use super::scalar::Scalar;
use crate::datapipe::batch::check_structure;
use crate::{Error, Result};

/// Smallest norm accepted by the angular distance.
pub const NORM_FLOOR: f64 = 1e-12;

/// Encoder output vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding(Vec<f32>);

impl Embedding {
    pub fn new(values: Vec<f32>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::MalformedInput("embedding has no entries".into()));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::MalformedInput(format!("embedding entry {k} is not finite")));
        }
        Ok(Embedding(values))
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|&v| f64::from(v) * f64::from(v)).sum::<f64>().sqrt()
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.0
    }
}

/// `1 - u.v / (|u| |v|)`, in `[0, 2]`.
pub fn angular_distance(u: &Embedding, v: &Embedding) -> Result<f64> {
    if u.dim() != v.dim() {
        return Err(Error::Shape { what: "embedding", expected: u.dim(), actual: v.dim() });
    }
    let (nu, nv) = (u.norm(), v.norm());
    for n in [nu, nv] {
        if n < NORM_FLOOR {
            return Err(Error::DegenerateEmbedding { norm: n });
        }
    }
    let dot: f64 = u.0.iter().zip(&v.0).map(|(&a, &b)| f64::from(a) * f64::from(b)).sum();
    Ok((1.0 - dot / (nu * nv)).clamp(0.0, 2.0))
}

/// `max(d(a,p) - d(a,n) + margin, 0)`.
pub fn triplet_loss(a: &Embedding, p: &Embedding, n: &Embedding, margin: f64) -> Result<f64> {
    if !(margin > 0.0) {
        return Err(Error::Config(format!("margin must be > 0, got {margin}")));
    }
    Ok((angular_distance(a, p)? - angular_distance(a, n)? + margin).max(0.0))
}

/// Anchor, positive and negative positions within a batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Triplet {
    pub anchor: usize,
    pub positive: usize,
    pub negative: usize,
}

/// Batch-hard mining over a row-major `b x b` distance matrix: for each
/// anchor the farthest same-label message and the nearest other-label
/// message, ties going to the lowest index.
pub(crate) fn mine_from_distances<T: Scalar>(dist: &[T], labels: &[u32]) -> Vec<Triplet> {
    let b = labels.len();
    (0..b)
        .map(|a| {
            let row = &dist[a * b..(a + 1) * b];
            let mut pos: Option<usize> = None;
            let mut neg: Option<usize> = None;
            for j in 0..b {
                if j == a {
                    continue;
                }
                if labels[j] == labels[a] {
                    if pos.is_none_or(|p| row[j] > row[p]) {
                        pos = Some(j);
                    }
                } else if neg.is_none_or(|n| row[j] < row[n]) {
                    neg = Some(j);
                }
            }
            Triplet {
                anchor: a,
                positive: pos.expect("batch structure guarantees a positive"),
                negative: neg.expect("batch structure guarantees a negative"),
            }
        })
        .collect()
}

/// Batch-hard triplets for an 8 x 4 batch: one per anchor.
pub fn mine_triplets(embeddings: &[Embedding], labels: &[u32]) -> Result<Vec<Triplet>> {
    if embeddings.len() != labels.len() {
        return Err(Error::BatchStructure(format!(
            "{} embeddings but {} labels",
            embeddings.len(),
            labels.len()
        )));
    }
    check_structure(labels)?;
    let b = embeddings.len();
    let mut dist = vec![0.0f64; b * b];
    for i in 0..b {
        for j in 0..b {
            dist[i * b + j] = angular_distance(&embeddings[i], &embeddings[j])?;
        }
    }
    Ok(mine_from_distances(&dist, labels))
}

/// Mean batch-hard triplet loss over embeddings stored `[dim][b]`, with its
/// gradient in the same layout. `fixed` reuses a previous triplet selection.
pub(crate) fn batch_triplet<T: Scalar>(
    e: &[T],
    dim: usize,
    labels: &[u32],
    margin: f64,
    fixed: Option<&[Triplet]>,
) -> Result<(f64, Vec<T>, Vec<Triplet>)> {
    let b = labels.len();
    let col = |k: usize, d: usize| e[d * b + k];
    let mut norms = vec![T::zero(); b];
    for (k, n) in norms.iter_mut().enumerate() {
        *n = (0..dim).map(|d| col(k, d) * col(k, d)).sum::<T>().sqrt();
        if n.f64() < NORM_FLOOR {
            return Err(Error::DegenerateEmbedding { norm: n.f64() });
        }
    }
    // unit[k*dim + d]
    let mut unit = vec![T::zero(); b * dim];
    for k in 0..b {
        for d in 0..dim {
            unit[k * dim + d] = col(k, d) / norms[k];
        }
    }
    let cos = |i: usize, j: usize| -> T {
        unit[i * dim..(i + 1) * dim].iter().zip(&unit[j * dim..(j + 1) * dim]).map(|(&x, &y)| x * y).sum()
    };
    let triplets = match fixed {
        Some(t) => t.to_vec(),
        None => {
            let mut dist = vec![T::zero(); b * b];
            for i in 0..b {
                for j in 0..b {
                    dist[i * b + j] = T::one() - cos(i, j);
                }
            }
            mine_from_distances(&dist, labels)
        }
    };
    let mut grad = vec![T::zero(); dim * b];
    let mut total = 0.0;
    let scale = T::of(1.0 / b as f64);
    let m = T::of(margin);
    // d(u,v) = 1 - c: dd/du = -(v_hat - c u_hat) / |u|.
    let add_dist_grad = |grad: &mut [T], i: usize, j: usize, sign: T| {
        let c = cos(i, j);
        for d in 0..dim {
            let gi = -(unit[j * dim + d] - c * unit[i * dim + d]) / norms[i];
            let gj = -(unit[i * dim + d] - c * unit[j * dim + d]) / norms[j];
            grad[d * b + i] = grad[d * b + i] + sign * scale * gi;
            grad[d * b + j] = grad[d * b + j] + sign * scale * gj;
        }
    };
    for t in &triplets {
        let l = (T::one() - cos(t.anchor, t.positive)) - (T::one() - cos(t.anchor, t.negative)) + m;
        if l > T::zero() {
            total += l.f64();
            add_dist_grad(&mut grad, t.anchor, t.positive, T::one());
            add_dist_grad(&mut grad, t.anchor, t.negative, -T::one());
        }
    }
    Ok((total / b as f64, grad, triplets))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn emb(v: &[f32]) -> Embedding {
        Embedding::new(v.to_vec()).unwrap()
    }

    #[test]
    fn closed_form_examples() {
        let a = emb(&[1.0, 0.0]);
        assert_eq!(angular_distance(&a, &emb(&[0.0, 3.0])).unwrap(), 1.0);
        assert_eq!(angular_distance(&a, &emb(&[-2.0, 0.0])).unwrap(), 2.0);
        assert_eq!(angular_distance(&a, &emb(&[5.0, 0.0])).unwrap(), 0.0);
        assert!(matches!(
            angular_distance(&a, &emb(&[0.0, 0.0])),
            Err(Error::DegenerateEmbedding { .. })
        ));
        assert!(matches!(angular_distance(&a, &emb(&[1.0, 0.0, 0.0])), Err(Error::Shape { .. })));
    }

    #[test]
    fn triplet_examples() {
        // Unit vectors at chosen angles give exact distances.
        let at = |d: f64| {
            let c = 1.0 - d;
            emb(&[c as f32, (1.0 - c * c).sqrt() as f32])
        };
        let a = emb(&[1.0, 0.0]);
        let l = triplet_loss(&a, &at(0.1), &at(0.5), 0.2).unwrap();
        assert_eq!(l, 0.0);
        let l = triplet_loss(&a, &at(0.6), &at(0.3), 0.5).unwrap();
        assert!((l - 0.8).abs() < 1e-6, "{l}");
        assert!(triplet_loss(&a, &a, &a, 0.0).is_err());
    }

    fn random_batch(seed: u64) -> (Vec<Embedding>, Vec<u32>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let labels: Vec<u32> = (0..32).map(|k| (k / 4) as u32 * 3 + 1).collect();
        let embs = (0..32)
            .map(|_| emb(&(0..6).map(|_| rng.random_range(-1.0f32..1.0)).collect::<Vec<_>>()))
            .collect();
        (embs, labels)
    }

    #[test]
    fn mining_matches_brute_force() {
        for seed in 0..50 {
            let (embs, labels) = random_batch(seed);
            let got = mine_triplets(&embs, &labels).unwrap();
            assert_eq!(got.len(), 32);
            for t in &got {
                let a = t.anchor;
                let d = |j: usize| angular_distance(&embs[a], &embs[j]).unwrap();
                let pos = (0..32).filter(|&j| j != a && labels[j] == labels[a]);
                let neg = (0..32).filter(|&j| labels[j] != labels[a]);
                let max_p = pos.map(d).fold(f64::MIN, f64::max);
                let min_n = neg.map(d).fold(f64::MAX, f64::min);
                assert_eq!(d(t.positive), max_p);
                assert_eq!(d(t.negative), min_n);
                assert_eq!(labels[t.positive], labels[a]);
                assert_ne!(labels[t.negative], labels[a]);
                assert_ne!(t.positive, a);
            }
        }
    }

    #[test]
    fn identical_embeddings_cost_exactly_margin() {
        let labels: Vec<u32> = (0..32).map(|k| (k / 4) as u32).collect();
        let embs = vec![emb(&[0.3, -0.2, 0.9]); 32];
        let ts = mine_triplets(&embs, &labels).unwrap();
        for t in ts {
            let l = triplet_loss(&embs[t.anchor], &embs[t.positive], &embs[t.negative], 0.2).unwrap();
            assert_eq!(l, 0.2);
        }
    }

    #[test]
    fn separated_cluster_has_zero_loss() {
        let (mut embs, labels) = random_batch(3);
        // Transmitter of the first four moves far away along a fresh axis.
        for e in embs.iter_mut() {
            let mut v = e.clone().into_vec();
            v.push(0.0);
            *e = emb(&v);
        }
        for e in embs.iter_mut().take(4) {
            *e = emb(&[0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
        }
        let ts = mine_triplets(&embs, &labels).unwrap();
        for t in ts.iter().take(4) {
            let l = triplet_loss(&embs[t.anchor], &embs[t.positive], &embs[t.negative], 0.5).unwrap();
            assert_eq!(l, 0.0);
        }
    }

    #[test]
    fn malformed_batch_rejected() {
        let (embs, mut labels) = random_batch(0);
        labels[0] = 99;
        assert!(matches!(mine_triplets(&embs, &labels), Err(Error::BatchStructure(_))));
        assert!(matches!(mine_triplets(&embs[..31], &labels), Err(Error::BatchStructure(_))));
    }

    #[test]
    fn batch_loss_agrees_with_public_functions() {
        let (embs, labels) = random_batch(11);
        let dim = embs[0].dim();
        let mut e = vec![0.0f64; dim * 32];
        for (k, v) in embs.iter().enumerate() {
            for d in 0..dim {
                e[d * 32 + k] = f64::from(v.as_slice()[d]);
            }
        }
        let (loss, _, ts) = batch_triplet(&e, dim, &labels, 0.2, None).unwrap();
        assert_eq!(ts, mine_triplets(&embs, &labels).unwrap());
        let expect: f64 = ts
            .iter()
            .map(|t| triplet_loss(&embs[t.anchor], &embs[t.positive], &embs[t.negative], 0.2).unwrap())
            .sum::<f64>()
            / 32.0;
        assert!((loss - expect).abs() < 1e-9);
    }

    fn vec_strategy(dim: usize) -> impl Strategy<Value = Vec<f32>> {
        prop::collection::vec(-10.0f32..10.0, dim)
            .prop_filter("non-zero", |v| v.iter().map(|x| x * x).sum::<f32>() > 1e-6)
    }

    proptest! {
        #[test]
        fn distance_properties(u in vec_strategy(8), v in vec_strategy(8), c in 0.01f32..100.0) {
            let (eu, ev) = (emb(&u), emb(&v));
            let d = angular_distance(&eu, &ev).unwrap();
            prop_assert!((0.0..=2.0).contains(&d));
            prop_assert_eq!(d, angular_distance(&ev, &eu).unwrap());
            prop_assert!(angular_distance(&eu, &eu).unwrap() < 1e-6);
            let scaled = emb(&v.iter().map(|x| x * c).collect::<Vec<_>>());
            prop_assert!((angular_distance(&eu, &scaled).unwrap() - d).abs() < 1e-5);
        }

        #[test]
        fn triplet_hinge(a in vec_strategy(4), p in vec_strategy(4), n in vec_strategy(4), m in 0.01f64..1.0) {
            let (a, p, n) = (emb(&a), emb(&p), emb(&n));
            let l = triplet_loss(&a, &p, &n, m).unwrap();
            let dap = angular_distance(&a, &p).unwrap();
            let dan = angular_distance(&a, &n).unwrap();
            prop_assert!(l >= 0.0);
            prop_assert_eq!(l == 0.0, dan >= dap + m);
        }
    }
}
