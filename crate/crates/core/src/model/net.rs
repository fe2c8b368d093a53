//! Batched forward and backward passes.
//!
//! Activations are stored channel-major as `[channels][batch][length]` so each
//! convolution is a single GEMM over an im2col buffer covering the batch.
//! Dense layers work on `[features][batch]` matrices.

use super::arch::{Arch, ConvGeom};
use super::scalar::{gemm, Scalar};

fn slice<'a, T>(arch: &Arch, params: &'a [T], idx: usize) -> &'a [T] {
    &params[arch.tensor(idx).range()]
}

fn im2col<T: Scalar>(x: &[T], cin: usize, b: usize, l: usize, k: usize) -> Vec<T> {
    let pad = (k - 1) / 2;
    let bl = b * l;
    let mut col = vec![T::zero(); cin * k * bl];
    for c in 0..cin {
        for kk in 0..k {
            let row = &mut col[(c * k + kk) * bl..(c * k + kk + 1) * bl];
            // Output position t reads input t + kk - pad.
            let t_lo = pad.saturating_sub(kk);
            let t_hi = (l + pad).saturating_sub(kk).min(l);
            if t_lo >= t_hi {
                continue;
            }
            for bb in 0..b {
                let src = &x[(c * b + bb) * l..(c * b + bb + 1) * l];
                let dst = &mut row[bb * l..(bb + 1) * l];
                let shift = t_lo + kk - pad;
                dst[t_lo..t_hi].copy_from_slice(&src[shift..shift + (t_hi - t_lo)]);
            }
        }
    }
    col
}

fn col2im<T: Scalar>(dcol: &[T], cin: usize, b: usize, l: usize, k: usize) -> Vec<T> {
    let pad = (k - 1) / 2;
    let bl = b * l;
    let mut dx = vec![T::zero(); cin * bl];
    for c in 0..cin {
        for kk in 0..k {
            let row = &dcol[(c * k + kk) * bl..(c * k + kk + 1) * bl];
            let t_lo = pad.saturating_sub(kk);
            let t_hi = (l + pad).saturating_sub(kk).min(l);
            if t_lo >= t_hi {
                continue;
            }
            for bb in 0..b {
                let dst = &mut dx[(c * b + bb) * l..(c * b + bb + 1) * l];
                let src = &row[bb * l..(bb + 1) * l];
                let shift = t_lo + kk - pad;
                for (d, s) in dst[shift..shift + (t_hi - t_lo)].iter_mut().zip(&src[t_lo..t_hi]) {
                    *d = *d + *s;
                }
            }
        }
    }
    dx
}

fn add_bias<T: Scalar>(z: &mut [T], bias: &[T], stride: usize) {
    for (o, row) in z.chunks_mut(stride).enumerate() {
        let bo = bias[o];
        row.iter_mut().for_each(|v| *v = *v + bo);
    }
}

fn tanh_inplace<T: Scalar>(z: &mut [T]) {
    z.iter_mut().for_each(|v| *v = v.tanh());
}

/// `da * (1 - a^2)`, in place on `da`.
fn tanh_backward<T: Scalar>(da: &mut [T], a: &[T]) {
    for (d, &y) in da.iter_mut().zip(a) {
        *d = *d * (T::one() - y * y);
    }
}

fn conv_forward<T: Scalar>(g: &ConvGeom, b: usize, x: &[T], w: &[T], bias: &[T]) -> (Vec<T>, Vec<T>) {
    let bl = b * g.len;
    let col = im2col(x, g.cin, b, g.len, g.k);
    let mut z = vec![T::zero(); g.cout * bl];
    gemm(g.cout, g.cin * g.k, bl, w, false, &col, false, T::zero(), &mut z);
    add_bias(&mut z, bias, bl);
    (col, z)
}

/// Accumulates weight and bias gradients; returns the input gradient when asked.
#[allow(clippy::too_many_arguments)]
fn conv_backward<T: Scalar>(
    g: &ConvGeom,
    b: usize,
    col: &[T],
    dz: &[T],
    w: &[T],
    gw: &mut [T],
    gb: &mut [T],
    need_dx: bool,
) -> Option<Vec<T>> {
    let bl = b * g.len;
    let ck = g.cin * g.k;
    gemm(g.cout, bl, ck, dz, false, col, true, T::one(), gw);
    for (o, row) in dz.chunks(bl).enumerate() {
        gb[o] = gb[o] + row.iter().copied().sum::<T>();
    }
    if !need_dx {
        return None;
    }
    let mut dcol = vec![T::zero(); ck * bl];
    gemm(ck, g.cout, bl, w, true, dz, false, T::zero(), &mut dcol);
    Some(col2im(&dcol, g.cin, b, g.len, g.k))
}

/// Max-pool over windows of `p`; remainder samples are dropped. Returns the
/// pooled values and the flat index of each window's first maximum.
fn pool_forward<T: Scalar>(a: &[T], rows: usize, l: usize, p: usize) -> (Vec<T>, Vec<u32>) {
    let lp = l / p;
    let mut out = Vec::with_capacity(rows * lp);
    let mut arg = Vec::with_capacity(rows * lp);
    for r in 0..rows {
        let src = &a[r * l..(r + 1) * l];
        for j in 0..lp {
            let mut best = j * p;
            for t in j * p + 1..(j + 1) * p {
                if src[t] > src[best] {
                    best = t;
                }
            }
            out.push(src[best]);
            arg.push((r * l + best) as u32);
        }
    }
    (out, arg)
}

fn pool_backward<T: Scalar>(dout: &[T], arg: &[u32], n: usize) -> Vec<T> {
    let mut da = vec![T::zero(); n];
    for (&d, &k) in dout.iter().zip(arg) {
        da[k as usize] = da[k as usize] + d;
    }
    da
}

fn upsample_forward<T: Scalar>(x: &[T], rows: usize, ls: usize, lb: usize, p: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(rows * lb);
    for r in 0..rows {
        let src = &x[r * ls..(r + 1) * ls];
        out.extend((0..lb).map(|t| src[(t / p).min(ls - 1)]));
    }
    out
}

fn upsample_backward<T: Scalar>(dout: &[T], rows: usize, ls: usize, lb: usize, p: usize) -> Vec<T> {
    let mut dx = vec![T::zero(); rows * ls];
    for r in 0..rows {
        let src = &dout[r * lb..(r + 1) * lb];
        let dst = &mut dx[r * ls..(r + 1) * ls];
        for (t, &d) in src.iter().enumerate() {
            let s = (t / p).min(ls - 1);
            dst[s] = dst[s] + d;
        }
    }
    dx
}

/// `y = W x + bias` for `x` of shape `[in][b]`.
fn dense_forward<T: Scalar>(w: &[T], bias: &[T], x: &[T], out: usize, inp: usize, b: usize) -> Vec<T> {
    let mut y = vec![T::zero(); out * b];
    gemm(out, inp, b, w, false, x, false, T::zero(), &mut y);
    add_bias(&mut y, bias, b);
    y
}

#[allow(clippy::too_many_arguments)]
fn dense_backward<T: Scalar>(
    w: &[T],
    x: &[T],
    dy: &[T],
    out: usize,
    inp: usize,
    b: usize,
    gw: &mut [T],
    gb: &mut [T],
) -> Vec<T> {
    gemm(out, b, inp, dy, false, x, true, T::one(), gw);
    for (o, row) in dy.chunks(b).enumerate() {
        gb[o] = gb[o] + row.iter().copied().sum::<T>();
    }
    let mut dx = vec![T::zero(); inp * b];
    gemm(inp, out, b, w, true, dy, false, T::zero(), &mut dx);
    dx
}

pub(crate) struct EncStage<T> {
    col: Vec<T>,
    act: Vec<T>,
    arg: Vec<u32>,
}

/// Encoder activations kept for the backward pass.
pub(crate) struct EncTrace<T> {
    pub b: usize,
    stages: [Vec<EncStage<T>>; 2],
    flat: Vec<T>,
    /// Embeddings, `[dim][b]`.
    pub e: Vec<T>,
}

pub(crate) struct DecStage<T> {
    col: Vec<T>,
    out: Vec<T>,
}

pub(crate) struct DecTrace<T> {
    h: Vec<T>,
    stages: [Vec<DecStage<T>>; 2],
}

impl<T> DecTrace<T> {
    /// Reconstructed branch `br`, laid out `[b][input_len]`.
    pub fn output(&self, br: usize) -> &[T] {
        &self.stages[br].last().expect("at least one stage").out
    }
}

/// Runs the encoder. `inputs[br]` holds branch `br` as `[b][input_len]`.
pub(crate) fn encode<T: Scalar>(arch: &Arch, params: &[T], inputs: [&[T]; 2], b: usize) -> EncTrace<T> {
    let (c_last, l_last) = arch.bottleneck;
    let mut flat = vec![T::zero(); arch.flat * b];
    let stages = [0, 1].map(|br| {
        let mut cur = inputs[br].to_vec();
        let mut trace = Vec::new();
        for (g, p) in &arch.enc[br] {
            let (col, mut act) =
                conv_forward(g, b, &cur, slice(arch, params, g.weight), slice(arch, params, g.bias));
            tanh_inplace(&mut act);
            let (pooled, arg) = pool_forward(&act, g.cout * b, g.len, *p);
            cur = pooled;
            trace.push(EncStage { col, act, arg });
        }
        // [c][b][t] -> row (br*C + c)*L + t, column bb.
        for c in 0..c_last {
            for bb in 0..b {
                for t in 0..l_last {
                    let row = (br * c_last + c) * l_last + t;
                    flat[row * b + bb] = cur[(c * b + bb) * l_last + t];
                }
            }
        }
        trace
    });
    let (wi, bi) = arch.enc_dense;
    let e = dense_forward(slice(arch, params, wi), slice(arch, params, bi), &flat, arch.dim, arch.flat, b);
    EncTrace { b, stages, flat, e }
}

/// Runs the decoder on embeddings `e` laid out `[dim][b]`.
pub(crate) fn decode<T: Scalar>(arch: &Arch, params: &[T], e: &[T], b: usize) -> DecTrace<T> {
    let (c_last, l_last) = arch.bottleneck;
    let (wi, bi) = arch.dec_dense;
    let mut h = dense_forward(slice(arch, params, wi), slice(arch, params, bi), e, arch.flat, arch.dim, b);
    tanh_inplace(&mut h);
    let stages = [0, 1].map(|br| {
        let mut cur = vec![T::zero(); c_last * b * l_last];
        for c in 0..c_last {
            for bb in 0..b {
                for t in 0..l_last {
                    let row = (br * c_last + c) * l_last + t;
                    cur[(c * b + bb) * l_last + t] = h[row * b + bb];
                }
            }
        }
        let mut ls = l_last;
        let n = arch.dec[br].len();
        let mut trace = Vec::with_capacity(n);
        for (s, (g, p)) in arch.dec[br].iter().enumerate() {
            let up = upsample_forward(&cur, g.cin * b, ls, g.len, *p);
            let (col, mut out) =
                conv_forward(g, b, &up, slice(arch, params, g.weight), slice(arch, params, g.bias));
            if s + 1 < n {
                tanh_inplace(&mut out);
            }
            cur = out.clone();
            ls = g.len;
            trace.push(DecStage { col, out });
        }
        trace
    });
    DecTrace { h, stages }
}

/// Backpropagates output gradients through decoder and encoder, accumulating
/// into `grads`. `d_out[br]` is the gradient of the reconstruction of branch
/// `br`; `d_e` is any extra gradient arriving directly at the embeddings.
pub(crate) fn backward<T: Scalar>(
    arch: &Arch,
    params: &[T],
    enc: &EncTrace<T>,
    dec: &DecTrace<T>,
    d_out: [Vec<T>; 2],
    d_e: Vec<T>,
    grads: &mut [T],
) {
    let b = enc.b;
    let (c_last, l_last) = arch.bottleneck;
    let mut dh = vec![T::zero(); arch.flat * b];
    for (br, d_rec) in d_out.into_iter().enumerate() {
        let stages = &arch.dec[br];
        let n = stages.len();
        let mut dcur = d_rec;
        for s in (0..n).rev() {
            let (g, p) = &stages[s];
            let st = &dec.stages[br][s];
            if s + 1 < n {
                tanh_backward(&mut dcur, &st.out);
            }
            let (gw, gb) = split_grads(arch, grads, g.weight, g.bias);
            let dup = conv_backward(g, b, &st.col, &dcur, slice(arch, params, g.weight), gw, gb, true)
                .expect("requested");
            let ls = if s == 0 { l_last } else { stages[s - 1].0.len };
            dcur = upsample_backward(&dup, g.cin * b, ls, g.len, *p);
        }
        for c in 0..c_last {
            for bb in 0..b {
                for t in 0..l_last {
                    let row = (br * c_last + c) * l_last + t;
                    dh[row * b + bb] = dcur[(c * b + bb) * l_last + t];
                }
            }
        }
    }
    tanh_backward(&mut dh, &dec.h);
    let (wi, bi) = arch.dec_dense;
    let (gw, gb) = split_grads(arch, grads, wi, bi);
    let mut de = dense_backward(slice(arch, params, wi), &enc.e, &dh, arch.flat, arch.dim, b, gw, gb);
    for (d, x) in de.iter_mut().zip(&d_e) {
        *d = *d + *x;
    }

    let (wi, bi) = arch.enc_dense;
    let (gw, gb) = split_grads(arch, grads, wi, bi);
    let dflat = dense_backward(slice(arch, params, wi), &enc.flat, &de, arch.dim, arch.flat, b, gw, gb);
    for br in 0..2 {
        let mut dcur = vec![T::zero(); c_last * b * l_last];
        for c in 0..c_last {
            for bb in 0..b {
                for t in 0..l_last {
                    let row = (br * c_last + c) * l_last + t;
                    dcur[(c * b + bb) * l_last + t] = dflat[row * b + bb];
                }
            }
        }
        for s in (0..arch.enc[br].len()).rev() {
            let (g, _) = &arch.enc[br][s];
            let st = &enc.stages[br][s];
            let mut dact = pool_backward(&dcur, &st.arg, st.act.len());
            tanh_backward(&mut dact, &st.act);
            let (gw, gb) = split_grads(arch, grads, g.weight, g.bias);
            match conv_backward(g, b, &st.col, &dact, slice(arch, params, g.weight), gw, gb, s > 0) {
                Some(dx) => dcur = dx,
                None => break,
            }
        }
    }
}

/// Disjoint mutable views of a weight tensor and its bias. The bias always
/// directly follows its weight in the layout.
fn split_grads<'a, T>(arch: &Arch, grads: &'a mut [T], w: usize, bias: usize) -> (&'a mut [T], &'a mut [T]) {
    let wr = arch.tensor(w).range();
    let br = arch.tensor(bias).range();
    debug_assert_eq!(wr.end, br.start);
    let (head, tail) = grads[wr.start..br.end].split_at_mut(wr.len());
    (head, tail)
}
