//! Forward pass with cached intermediates and the matching hand-written backward
//! pass. Everything is per sequence; batching happens in the trainer by summing
//! gradients in a fixed order.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::layout::{BlockOffsets, Layout};
use crate::error::{Error, Result};
use crate::scalar::Real;

const LN_EPS: f64 = 1e-5;
// sqrt(2 / pi)
const GELU_C: f64 = 0.797_884_560_802_865_4;
const GELU_A: f64 = 0.044_715;

struct LnCache<T> {
    xhat: Vec<T>,
    rstd: Vec<T>,
}

struct BlockCache<T> {
    ln1: LnCache<T>,
    a: Vec<T>,
    q: Vec<T>,
    k: Vec<T>,
    v: Vec<T>,
    /// Attention probabilities, `[head][query][key]`, zero above the diagonal.
    probs: Vec<T>,
    att: Vec<T>,
    ln2: LnCache<T>,
    b: Vec<T>,
    h_pre: Vec<T>,
    h_act: Vec<T>,
}

/// Intermediates of one forward pass.
pub struct ForwardCache<T> {
    pub len: usize,
    tokens: Vec<u32>,
    /// Residual stream: `hidden[0]` is the embedding output, `hidden[l]` the output
    /// of block `l`. Each entry is `[len, d_model]` row-major.
    pub hidden: Vec<Vec<T>>,
    blocks: Vec<BlockCache<T>>,
    lnf: LnCache<T>,
    y: Vec<T>,
    /// `[len, vocab]` row-major.
    pub logits: Vec<T>,
}

impl<T: Real> ForwardCache<T> {
    pub fn logits_row(&self, pos: usize, vocab: usize) -> &[T] {
        &self.logits[pos * vocab..(pos + 1) * vocab]
    }

    pub fn hidden_row(&self, layer: usize, pos: usize, d: usize) -> &[T] {
        &self.hidden[layer][pos * d..(pos + 1) * d]
    }
}

fn linear<T: Real>(x: &[T], n: usize, din: usize, w: &[T], b: &[T], dout: usize) -> Vec<T> {
    let mut out = vec![T::ZERO; n * dout];
    for r in 0..n {
        let row = &mut out[r * dout..(r + 1) * dout];
        row.copy_from_slice(&b[..dout]);
        for (k, &xv) in x[r * din..(r + 1) * din].iter().enumerate() {
            let wrow = &w[k * dout..(k + 1) * dout];
            for (o, &wv) in row.iter_mut().zip(wrow) {
                *o += xv * wv;
            }
        }
    }
    out
}

/// Accumulates weight/bias gradients and returns the input gradient.
#[allow(clippy::too_many_arguments)]
fn linear_backward<T: Real>(
    x: &[T],
    n: usize,
    din: usize,
    w: &[T],
    g: &[T],
    dout: usize,
    dw: &mut [T],
    db: &mut [T],
) -> Vec<T> {
    let mut dx = vec![T::ZERO; n * din];
    for r in 0..n {
        let grow = &g[r * dout..(r + 1) * dout];
        for (d, &gv) in db[..dout].iter_mut().zip(grow) {
            *d += gv;
        }
        for k in 0..din {
            let xv = x[r * din + k];
            let wrow = &w[k * dout..(k + 1) * dout];
            let dwrow = &mut dw[k * dout..(k + 1) * dout];
            let mut acc = T::ZERO;
            for ((dwv, &wv), &gv) in dwrow.iter_mut().zip(wrow).zip(grow) {
                *dwv += xv * gv;
                acc += gv * wv;
            }
            dx[r * din + k] = acc;
        }
    }
    dx
}

fn layer_norm<T: Real>(x: &[T], n: usize, d: usize, g: &[T], b: &[T]) -> (Vec<T>, LnCache<T>) {
    let mut out = vec![T::ZERO; n * d];
    let mut xhat = vec![T::ZERO; n * d];
    let mut rstd = vec![T::ZERO; n];
    let inv_d = T::ONE / T::from_f64(d as f64);
    let eps = T::from_f64(LN_EPS);
    for r in 0..n {
        let row = &x[r * d..(r + 1) * d];
        let mut mean = T::ZERO;
        for &v in row {
            mean += v;
        }
        mean *= inv_d;
        let mut var = T::ZERO;
        for &v in row {
            let c = v - mean;
            var += c * c;
        }
        var *= inv_d;
        let rs = T::ONE / (var + eps).sqrt();
        rstd[r] = rs;
        for i in 0..d {
            let xh = (row[i] - mean) * rs;
            xhat[r * d + i] = xh;
            out[r * d + i] = xh * g[i] + b[i];
        }
    }
    (out, LnCache { xhat, rstd })
}

/// Adds the input gradient into `dx`, accumulates gain/bias gradients.
#[allow(clippy::too_many_arguments)]
fn layer_norm_backward<T: Real>(
    dy: &[T],
    cache: &LnCache<T>,
    g: &[T],
    n: usize,
    d: usize,
    dx: &mut [T],
    dg: &mut [T],
    db: &mut [T],
) {
    let inv_d = T::ONE / T::from_f64(d as f64);
    let mut dxhat = vec![T::ZERO; d];
    for r in 0..n {
        let dyr = &dy[r * d..(r + 1) * d];
        let xh = &cache.xhat[r * d..(r + 1) * d];
        let mut mean_dxhat = T::ZERO;
        let mut mean_dxhat_xhat = T::ZERO;
        for i in 0..d {
            dg[i] += dyr[i] * xh[i];
            db[i] += dyr[i];
            let v = dyr[i] * g[i];
            dxhat[i] = v;
            mean_dxhat += v;
            mean_dxhat_xhat += v * xh[i];
        }
        mean_dxhat *= inv_d;
        mean_dxhat_xhat *= inv_d;
        let rs = cache.rstd[r];
        for i in 0..d {
            dx[r * d + i] += rs * (dxhat[i] - mean_dxhat - xh[i] * mean_dxhat_xhat);
        }
    }
}

#[inline]
fn gelu<T: Real>(x: T) -> T {
    let c = T::from_f64(GELU_C);
    let a = T::from_f64(GELU_A);
    let half = T::from_f64(0.5);
    half * x * (T::ONE + (c * (x + a * x * x * x)).tanh())
}

#[inline]
fn gelu_grad<T: Real>(x: T) -> T {
    let c = T::from_f64(GELU_C);
    let a = T::from_f64(GELU_A);
    let half = T::from_f64(0.5);
    let t = (c * (x + a * x * x * x)).tanh();
    half * (T::ONE + t) + half * x * (T::ONE - t * t) * c * (T::ONE + T::from_f64(3.0) * a * x * x)
}

fn check_tokens(layout: &Layout, tokens: &[u32]) -> Result<()> {
    let cfg = &layout.config;
    if tokens.is_empty() {
        return Err(Error::Empty("token sequence"));
    }
    if tokens.len() > cfg.context_len {
        return Err(Error::SequenceTooLong {
            len: tokens.len(),
            context: cfg.context_len,
        });
    }
    if let Some(&bad) = tokens.iter().find(|&&t| t as usize >= cfg.vocab_size) {
        return Err(Error::Structure(format!(
            "token id {bad} outside vocabulary of {}",
            cfg.vocab_size
        )));
    }
    Ok(())
}

fn block_forward<T: Real>(
    layout: &Layout,
    p: &[T],
    o: &BlockOffsets,
    x: &[T],
    n: usize,
) -> (BlockCache<T>, Vec<T>) {
    let cfg = &layout.config;
    let (d, f, h) = (cfg.d_model, cfg.d_ff, cfg.n_heads);
    let hd = cfg.head_dim();
    let w = |off: usize, len: usize| &p[off..off + len];

    let (a, ln1) = layer_norm(x, n, d, w(o.ln1_g, d), w(o.ln1_b, d));
    let q = linear(&a, n, d, w(o.wq, d * d), w(o.bq, d), d);
    let k = linear(&a, n, d, w(o.wk, d * d), w(o.bk, d), d);
    let v = linear(&a, n, d, w(o.wv, d * d), w(o.bv, d), d);

    let scale = T::ONE / T::from_f64(hd as f64).sqrt();
    let mut probs = vec![T::ZERO; h * n * n];
    let mut att = vec![T::ZERO; n * d];
    for head in 0..h {
        let c0 = head * hd;
        for i in 0..n {
            let prow = &mut probs[(head * n + i) * n..(head * n + i + 1) * n];
            let qi = &q[i * d + c0..i * d + c0 + hd];
            let mut max = T::from_f64(f64::NEG_INFINITY);
            for j in 0..=i {
                let kj = &k[j * d + c0..j * d + c0 + hd];
                let mut s = T::ZERO;
                for (&a, &b) in qi.iter().zip(kj) {
                    s += a * b;
                }
                s *= scale;
                prow[j] = s;
                max = max.max(s);
            }
            let mut sum = T::ZERO;
            for pj in prow[..=i].iter_mut() {
                *pj = (*pj - max).exp();
                sum += *pj;
            }
            let inv = T::ONE / sum;
            let out = &mut att[i * d + c0..i * d + c0 + hd];
            for j in 0..=i {
                prow[j] *= inv;
                let pj = prow[j];
                let vj = &v[j * d + c0..j * d + c0 + hd];
                for (ov, &vv) in out.iter_mut().zip(vj) {
                    *ov += pj * vv;
                }
            }
        }
    }
    let proj = linear(&att, n, d, w(o.wo, d * d), w(o.bo, d), d);
    let x_mid: Vec<T> = x.iter().zip(&proj).map(|(&a, &b)| a + b).collect();

    let (b, ln2) = layer_norm(&x_mid, n, d, w(o.ln2_g, d), w(o.ln2_b, d));
    let h_pre = linear(&b, n, d, w(o.w1, d * f), w(o.b1, f), f);
    let h_act: Vec<T> = h_pre.iter().map(|&v| gelu(v)).collect();
    let ff = linear(&h_act, n, f, w(o.w2, f * d), w(o.b2, d), d);
    let x_out = x_mid.iter().zip(&ff).map(|(&a, &b)| a + b).collect();

    (
        BlockCache {
            ln1,
            a,
            q,
            k,
            v,
            probs,
            att,
            ln2,
            b,
            h_pre,
            h_act,
        },
        x_out,
    )
}

/// Runs the model on `tokens` and keeps everything the backward pass needs.
pub fn forward<T: Real>(layout: &Layout, params: &[T], tokens: &[u32]) -> Result<ForwardCache<T>> {
    check_tokens(layout, tokens)?;
    let cfg = &layout.config;
    let off = &layout.offsets;
    let (d, v) = (cfg.d_model, cfg.vocab_size);
    let n = tokens.len();

    let mut x0 = vec![T::ZERO; n * d];
    for (i, &t) in tokens.iter().enumerate() {
        let te = &params[off.tok_emb + t as usize * d..off.tok_emb + (t as usize + 1) * d];
        let pe = &params[off.pos_emb + i * d..off.pos_emb + (i + 1) * d];
        for ((o, &a), &b) in x0[i * d..(i + 1) * d].iter_mut().zip(te).zip(pe) {
            *o = a + b;
        }
    }

    let mut hidden = Vec::with_capacity(cfg.n_layers + 1);
    hidden.push(x0);
    let mut blocks = Vec::with_capacity(cfg.n_layers);
    for bo in &off.blocks {
        let (cache, x_out) = block_forward(layout, params, bo, hidden.last().unwrap(), n);
        blocks.push(cache);
        hidden.push(x_out);
    }

    let (y, lnf) = layer_norm(
        hidden.last().unwrap(),
        n,
        d,
        &params[off.lnf_g..off.lnf_g + d],
        &params[off.lnf_b..off.lnf_b + d],
    );
    let logits = linear(
        &y,
        n,
        d,
        &params[off.head_w..off.head_w + d * v],
        &params[off.head_b..off.head_b + v],
        v,
    );
    Ok(ForwardCache {
        len: n,
        tokens: tokens.to_vec(),
        hidden,
        blocks,
        lnf,
        y,
        logits,
    })
}

#[allow(clippy::too_many_arguments)]
fn block_backward<T: Real>(
    layout: &Layout,
    p: &[T],
    o: &BlockOffsets,
    cache: &BlockCache<T>,
    dx_out: &[T],
    n: usize,
    grad: &mut [T],
) -> Vec<T> {
    let cfg = &layout.config;
    let (d, f, h) = (cfg.d_model, cfg.d_ff, cfg.n_heads);
    let hd = cfg.head_dim();

    // Feed-forward branch: x_out = x_mid + W2 gelu(W1 ln2(x_mid)).
    let mut dx_mid = dx_out.to_vec();
    let dh_act = {
        let (dw, db) = split_two(grad, o.w2, f * d, o.b2, d);
        linear_backward(&cache.h_act, n, f, &p[o.w2..o.w2 + f * d], dx_out, d, dw, db)
    };
    let dh_pre: Vec<T> = dh_act
        .iter()
        .zip(&cache.h_pre)
        .map(|(&g, &x)| g * gelu_grad(x))
        .collect();
    let db_ = {
        let (dw, db) = split_two(grad, o.w1, d * f, o.b1, f);
        linear_backward(&cache.b, n, d, &p[o.w1..o.w1 + d * f], &dh_pre, f, dw, db)
    };
    {
        let (dg, db) = split_two(grad, o.ln2_g, d, o.ln2_b, d);
        layer_norm_backward(&db_, &cache.ln2, &p[o.ln2_g..o.ln2_g + d], n, d, &mut dx_mid, dg, db);
    }

    // Attention branch: x_mid = x_in + Wo attn(ln1(x_in)).
    let mut dx_in = dx_mid.clone();
    let datt = {
        let (dw, db) = split_two(grad, o.wo, d * d, o.bo, d);
        linear_backward(&cache.att, n, d, &p[o.wo..o.wo + d * d], &dx_mid, d, dw, db)
    };
    let scale = T::ONE / T::from_f64(hd as f64).sqrt();
    let mut dq = vec![T::ZERO; n * d];
    let mut dk = vec![T::ZERO; n * d];
    let mut dv = vec![T::ZERO; n * d];
    let mut dp = vec![T::ZERO; n];
    for head in 0..h {
        let c0 = head * hd;
        for i in 0..n {
            let prow = &cache.probs[(head * n + i) * n..(head * n + i + 1) * n];
            let dai = &datt[i * d + c0..i * d + c0 + hd];
            let mut dot = T::ZERO;
            for j in 0..=i {
                let vj = &cache.v[j * d + c0..j * d + c0 + hd];
                let mut s = T::ZERO;
                for (&a, &b) in dai.iter().zip(vj) {
                    s += a * b;
                }
                dp[j] = s;
                dot += prow[j] * s;
                let dvj = &mut dv[j * d + c0..j * d + c0 + hd];
                for (g, &a) in dvj.iter_mut().zip(dai) {
                    *g += prow[j] * a;
                }
            }
            for j in 0..=i {
                let ds = prow[j] * (dp[j] - dot) * scale;
                for c in 0..hd {
                    dq[i * d + c0 + c] += ds * cache.k[j * d + c0 + c];
                    dk[j * d + c0 + c] += ds * cache.q[i * d + c0 + c];
                }
            }
        }
    }
    let mut da = vec![T::ZERO; n * d];
    for (w_off, b_off, g) in [(o.wq, o.bq, &dq), (o.wk, o.bk, &dk), (o.wv, o.bv, &dv)] {
        let (dw, db) = split_two(grad, w_off, d * d, b_off, d);
        let part = linear_backward(&cache.a, n, d, &p[w_off..w_off + d * d], g, d, dw, db);
        for (acc, v) in da.iter_mut().zip(part) {
            *acc += v;
        }
    }
    {
        let (dg, db) = split_two(grad, o.ln1_g, d, o.ln1_b, d);
        layer_norm_backward(&da, &cache.ln1, &p[o.ln1_g..o.ln1_g + d], n, d, &mut dx_in, dg, db);
    }
    dx_in
}

/// Two disjoint mutable windows of the gradient buffer; `a` must precede `b`.
fn split_two<T>(buf: &mut [T], a: usize, alen: usize, b: usize, blen: usize) -> (&mut [T], &mut [T]) {
    debug_assert!(a + alen <= b);
    let (left, right) = buf.split_at_mut(b);
    (&mut left[a..a + alen], &mut right[..blen])
}

/// Back-propagates `dlogits` (`[len, vocab]`) through the cached forward pass,
/// accumulating into `grad` (same layout as the parameters).
pub fn backward<T: Real>(
    layout: &Layout,
    params: &[T],
    cache: &ForwardCache<T>,
    dlogits: &[T],
    grad: &mut [T],
) {
    let cfg = &layout.config;
    let off = &layout.offsets;
    let (d, v) = (cfg.d_model, cfg.vocab_size);
    let n = cache.len;
    debug_assert_eq!(dlogits.len(), n * v);
    debug_assert_eq!(grad.len(), layout.total);

    let dy = {
        let (dw, db) = split_two(grad, off.head_w, d * v, off.head_b, v);
        linear_backward(&cache.y, n, d, &params[off.head_w..off.head_w + d * v], dlogits, v, dw, db)
    };
    let mut dx = vec![T::ZERO; n * d];
    {
        let (dg, db) = split_two(grad, off.lnf_g, d, off.lnf_b, d);
        layer_norm_backward(&dy, &cache.lnf, &params[off.lnf_g..off.lnf_g + d], n, d, &mut dx, dg, db);
    }
    for (l, bo) in off.blocks.iter().enumerate().rev() {
        dx = block_backward(layout, params, bo, &cache.blocks[l], &dx, n, grad);
    }
    for (i, &t) in cache.tokens.iter().enumerate() {
        let te = off.tok_emb + t as usize * d;
        let pe = off.pos_emb + i * d;
        for c in 0..d {
            grad[te + c] += dx[i * d + c];
            grad[pe + c] += dx[i * d + c];
        }
    }
}
