//! Forward pass and exact backpropagation for one sequence at a time.
//!
//! PAD positions are dropped before the encoder runs. Since PAD keys are
//! masked out of every attention row and PAD rows never reach the loss, this
//! gives the same outputs as masking them in place.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{real, ModelParams, Real, Span};
use crate::color::SpecialToken;
use crate::error::{Error, Result};
use crate::sequence::{SEGMENTS, SEQ_LEN};

const LN_EPS: f64 = 1e-5;
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_K: f64 = 0.044_715;

/// One training or evaluation example: token ids and the masked positions
/// with their true color index (0-based among colors).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BatchItem {
    pub ids: [u32; SEQ_LEN],
    pub targets: Vec<(usize, usize)>,
}

pub type Batch = [BatchItem];

/// SplitMix64 over the parts; used to give every (seed, step, example) its own stream.
pub(crate) fn derive_seed(parts: &[u64]) -> u64 {
    let mut h = 0x9E37_79B9_7F4A_7C15u64;
    for &p in parts {
        h ^= p.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_add(h << 6).wrapping_add(h >> 2);
        let mut z = h;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        h = z ^ (z >> 31);
    }
    h
}

struct LnCache<T> {
    xhat: Vec<T>,
    rstd: Vec<T>,
}

struct LayerCache<T> {
    ln1: LnCache<T>,
    h1: Vec<T>,
    q: Vec<T>,
    k: Vec<T>,
    v: Vec<T>,
    /// heads × n × n
    probs: Vec<T>,
    ctx: Vec<T>,
    mask1: Option<Vec<T>>,
    ln2: LnCache<T>,
    h2: Vec<T>,
    u: Vec<T>,
    g: Vec<T>,
    mask2: Option<Vec<T>>,
}

/// Activations kept for the backward pass.
pub(crate) struct Forward<T> {
    /// Sequence position of each active row.
    pub rows: Vec<usize>,
    ids: Vec<usize>,
    mask0: Option<Vec<T>>,
    layers: Vec<LayerCache<T>>,
    lnf: LnCache<T>,
    hf: Vec<T>,
    /// Active-row index of each query.
    query_rows: Vec<usize>,
    /// queries × colors
    pub logits: Vec<T>,
}

impl<T: Real> Forward<T> {
    /// Attention probabilities as `[layer][head]` row-major `n × n` over active rows.
    pub fn attention(&self) -> Vec<Vec<Vec<T>>> {
        let n = self.rows.len();
        self.layers
            .iter()
            .map(|l| l.probs.chunks(n * n).map(|c| c.to_vec()).collect())
            .collect()
    }
}

/// out[n×m] += a[n×k] · b[k×m]
fn mm_acc<T: Real>(out: &mut [T], a: &[T], b: &[T], n: usize, k: usize, m: usize) {
    for i in 0..n {
        let orow = &mut out[i * m..(i + 1) * m];
        for (p, &aip) in a[i * k..(i + 1) * k].iter().enumerate() {
            for (o, &bv) in orow.iter_mut().zip(&b[p * m..(p + 1) * m]) {
                *o += aip * bv;
            }
        }
    }
}

/// out[k×m] += aᵀ · b with a[n×k], b[n×m]
fn mm_at_b_acc<T: Real>(out: &mut [T], a: &[T], b: &[T], n: usize, k: usize, m: usize) {
    for i in 0..n {
        let brow = &b[i * m..(i + 1) * m];
        for (p, &aip) in a[i * k..(i + 1) * k].iter().enumerate() {
            for (o, &bv) in out[p * m..(p + 1) * m].iter_mut().zip(brow) {
                *o += aip * bv;
            }
        }
    }
}

/// out[n×k] += a · bᵀ with a[n×m], b[k×m]
fn mm_a_bt_acc<T: Real>(out: &mut [T], a: &[T], b: &[T], n: usize, m: usize, k: usize) {
    for i in 0..n {
        let arow = &a[i * m..(i + 1) * m];
        for p in 0..k {
            let mut s = T::zero();
            for (&x, &y) in arow.iter().zip(&b[p * m..(p + 1) * m]) {
                s += x * y;
            }
            out[i * k + p] += s;
        }
    }
}

fn linear<T: Real>(x: &[T], w: &[T], b: &[T], n: usize, din: usize, dout: usize) -> Vec<T> {
    let mut y = Vec::with_capacity(n * dout);
    for _ in 0..n {
        y.extend_from_slice(b);
    }
    mm_acc(&mut y, x, w, n, din, dout);
    y
}

fn col_sum_acc<T: Real>(out: &mut [T], x: &[T], cols: usize) {
    for row in x.chunks(cols) {
        for (o, &v) in out.iter_mut().zip(row) {
            *o += v;
        }
    }
}

fn layer_norm<T: Real>(x: &[T], d: usize, g: &[T], b: &[T]) -> (Vec<T>, LnCache<T>) {
    let n = x.len() / d;
    let inv_d = real::<T>(1.0 / d as f64);
    let eps = real::<T>(LN_EPS);
    let mut y = vec![T::zero(); x.len()];
    let mut xhat = vec![T::zero(); x.len()];
    let mut rstd = vec![T::zero(); n];
    for i in 0..n {
        let row = &x[i * d..(i + 1) * d];
        let mean = row.iter().fold(T::zero(), |s, &v| s + v) * inv_d;
        let var = row.iter().fold(T::zero(), |s, &v| s + (v - mean) * (v - mean)) * inv_d;
        let r = T::one() / (var + eps).sqrt();
        rstd[i] = r;
        for j in 0..d {
            let h = (row[j] - mean) * r;
            xhat[i * d + j] = h;
            y[i * d + j] = h * g[j] + b[j];
        }
    }
    (y, LnCache { xhat, rstd })
}

fn layer_norm_back<T: Real>(dy: &[T], c: &LnCache<T>, g: &[T], dg: &mut [T], db: &mut [T], dx: &mut [T]) {
    let d = g.len();
    let inv_d = real::<T>(1.0 / d as f64);
    let mut dxhat = vec![T::zero(); d];
    for (i, &r) in c.rstd.iter().enumerate() {
        let (dyr, xh) = (&dy[i * d..(i + 1) * d], &c.xhat[i * d..(i + 1) * d]);
        let (mut m1, mut m2) = (T::zero(), T::zero());
        for j in 0..d {
            dg[j] += dyr[j] * xh[j];
            db[j] += dyr[j];
            dxhat[j] = dyr[j] * g[j];
            m1 += dxhat[j];
            m2 += dxhat[j] * xh[j];
        }
        m1 *= inv_d;
        m2 *= inv_d;
        for j in 0..d {
            dx[i * d + j] += r * (dxhat[j] - m1 - xh[j] * m2);
        }
    }
}

fn gelu<T: Real>(u: T) -> T {
    let (c, k, half) = (real::<T>(GELU_C), real::<T>(GELU_K), real::<T>(0.5));
    half * u * (T::one() + (c * (u + k * u * u * u)).tanh())
}

fn gelu_grad<T: Real>(u: T) -> T {
    let (c, k, half) = (real::<T>(GELU_C), real::<T>(GELU_K), real::<T>(0.5));
    let t = (c * (u + k * u * u * u)).tanh();
    half * (T::one() + t) + half * u * (T::one() - t * t) * c * (T::one() + real::<T>(3.0) * k * u * u)
}

fn dropout_mask<T: Real>(len: usize, p: f64, rng: &mut ChaCha8Rng) -> Vec<T> {
    let keep = real::<T>(1.0 / (1.0 - p));
    (0..len).map(|_| if rng.random::<f64>() < p { T::zero() } else { keep }).collect()
}

fn apply_mask<T: Real>(x: &mut [T], mask: &Option<Vec<T>>) {
    if let Some(m) = mask {
        for (v, &k) in x.iter_mut().zip(m) {
            *v *= k;
        }
    }
}

/// Runs the encoder and returns logits over colors at `queries` (sequence positions).
///
/// `dropout_rng` enables training-mode dropout.
pub(crate) fn forward<T: Real>(p: &ModelParams<T>, ids: &[u32; SEQ_LEN], queries: &[usize], mut dropout_rng: Option<&mut ChaCha8Rng>) -> Result<Forward<T>> {
    let cfg = p.config();
    let lay = p.layout();
    let w = p.data();
    let (d, nh, dh, dff, nc) = (cfg.d_model, cfg.n_heads, cfg.head_dim(), cfg.d_ff, cfg.num_colors());

    let rows: Vec<usize> = (0..SEQ_LEN).filter(|&i| ids[i] != SpecialToken::Pad as u32).collect();
    let n = rows.len();
    let mut query_rows = Vec::with_capacity(queries.len());
    for &q in queries {
        match rows.iter().position(|&r| r == q) {
            Some(r) => query_rows.push(r),
            None => return Err(Error::Shape(format!("query position {q} is PAD or out of range"))),
        }
    }
    let mut tok = Vec::with_capacity(n);
    for &pos in &rows {
        let id = ids[pos] as usize;
        if id >= cfg.vocab_size {
            return Err(Error::Shape(format!("token id {id} outside vocabulary of {}", cfg.vocab_size)));
        }
        tok.push(id);
    }

    let p_drop = if dropout_rng.is_some() { cfg.dropout } else { 0.0 };
    let mut mask = |len: usize| -> Option<Vec<T>> {
        match dropout_rng.as_deref_mut() {
            Some(rng) if p_drop > 0.0 => Some(dropout_mask(len, p_drop, rng)),
            _ => None,
        }
    };

    let mut x = vec![T::zero(); n * d];
    for (i, (&pos, &id)) in rows.iter().zip(&tok).enumerate() {
        let xr = &mut x[i * d..(i + 1) * d];
        for (o, &v) in xr.iter_mut().zip(&w[lay.token.row(id)]) {
            *o += v;
        }
        if let Some(s) = lay.segment {
            for (o, &v) in xr.iter_mut().zip(&w[s.row(SEGMENTS[pos] as usize)]) {
                *o += v;
            }
        }
        if let Some(s) = lay.position {
            for (o, &v) in xr.iter_mut().zip(&w[s.row(pos)]) {
                *o += v;
            }
        }
    }
    let mask0 = mask(n * d);
    apply_mask(&mut x, &mask0);

    let scale = real::<T>(1.0 / (dh as f64).sqrt());
    let mut layers = Vec::with_capacity(lay.layers.len());
    for ls in &lay.layers {
        let (h1, ln1) = layer_norm(&x, d, &w[ls.ln1_g.range()], &w[ls.ln1_b.range()]);
        let q = linear(&h1, &w[ls.wq.range()], &w[ls.bq.range()], n, d, d);
        let k = linear(&h1, &w[ls.wk.range()], &w[ls.bk.range()], n, d, d);
        let v = linear(&h1, &w[ls.wv.range()], &w[ls.bv.range()], n, d, d);
        let mut probs = vec![T::zero(); nh * n * n];
        let mut ctx = vec![T::zero(); n * d];
        for h in 0..nh {
            let hc = h * dh;
            let ph = &mut probs[h * n * n..(h + 1) * n * n];
            for i in 0..n {
                let qi = &q[i * d + hc..i * d + hc + dh];
                let row = &mut ph[i * n..(i + 1) * n];
                let mut max = T::neg_infinity();
                for j in 0..n {
                    let kj = &k[j * d + hc..j * d + hc + dh];
                    let mut s = T::zero();
                    for (&a, &b) in qi.iter().zip(kj) {
                        s += a * b;
                    }
                    row[j] = s * scale;
                    max = max.max(row[j]);
                }
                let mut z = T::zero();
                for r in row.iter_mut() {
                    *r = (*r - max).exp();
                    z += *r;
                }
                for (j, r) in row.iter_mut().enumerate() {
                    *r /= z;
                    let vj = &v[j * d + hc..j * d + hc + dh];
                    for (o, &vv) in ctx[i * d + hc..i * d + hc + dh].iter_mut().zip(vj) {
                        *o += *r * vv;
                    }
                }
            }
        }
        let mut attn = linear(&ctx, &w[ls.wo.range()], &w[ls.bo.range()], n, d, d);
        let mask1 = mask(n * d);
        apply_mask(&mut attn, &mask1);
        for (xv, a) in x.iter_mut().zip(&attn) {
            *xv += *a;
        }

        let (h2, ln2) = layer_norm(&x, d, &w[ls.ln2_g.range()], &w[ls.ln2_b.range()]);
        let u = linear(&h2, &w[ls.w1.range()], &w[ls.b1.range()], n, d, dff);
        let g: Vec<T> = u.iter().map(|&v| gelu(v)).collect();
        let mut o = linear(&g, &w[ls.w2.range()], &w[ls.b2.range()], n, dff, d);
        let mask2 = mask(n * d);
        apply_mask(&mut o, &mask2);
        for (xv, a) in x.iter_mut().zip(&o) {
            *xv += *a;
        }
        layers.push(LayerCache {
            ln1,
            h1,
            q,
            k,
            v,
            probs,
            ctx,
            mask1,
            ln2,
            h2,
            u,
            g,
            mask2,
        });
    }

    let (hf, lnf) = layer_norm(&x, d, &w[lay.lnf_g.range()], &w[lay.lnf_b.range()]);
    let wo = &w[lay.w_out.range()];
    let bo = &w[lay.b_out.range()];
    let mut logits = Vec::with_capacity(query_rows.len() * nc);
    for &r in &query_rows {
        logits.extend(linear(&hf[r * d..(r + 1) * d], wo, bo, 1, d, nc));
    }
    Ok(Forward {
        rows,
        ids: tok,
        mask0,
        layers,
        lnf,
        hf,
        query_rows,
        logits,
    })
}

/// Backpropagates `dlogits` (queries × colors) and accumulates into `grad`.
pub(crate) fn backward<T: Real>(p: &ModelParams<T>, f: &Forward<T>, dlogits: &[T], grad: &mut [T]) {
    let cfg = p.config();
    let lay = p.layout();
    let w = p.data();
    let (d, nh, dh, dff, nc) = (cfg.d_model, cfg.n_heads, cfg.head_dim(), cfg.d_ff, cfg.num_colors());
    let n = f.rows.len();

    // head
    let mut dhf = vec![T::zero(); n * d];
    for (qi, &r) in f.query_rows.iter().enumerate() {
        let dl = &dlogits[qi * nc..(qi + 1) * nc];
        mm_at_b_acc(&mut grad[lay.w_out.range()], &f.hf[r * d..(r + 1) * d], dl, 1, d, nc);
        col_sum_acc(&mut grad[lay.b_out.range()], dl, nc);
        mm_a_bt_acc(&mut dhf[r * d..(r + 1) * d], dl, &w[lay.w_out.range()], 1, nc, d);
    }
    let mut dx = vec![T::zero(); n * d];
    {
        let (dg, db) = split_two(grad, lay.lnf_g, lay.lnf_b);
        layer_norm_back(&dhf, &f.lnf, &w[lay.lnf_g.range()], dg, db, &mut dx);
    }

    let scale = real::<T>(1.0 / (dh as f64).sqrt());
    for (ls, c) in lay.layers.iter().zip(&f.layers).rev() {
        // feed-forward block: x_out = x_mid + drop(gelu(h2 W1 + b1) W2 + b2)
        let mut d_o = dx.clone();
        apply_mask(&mut d_o, &c.mask2);
        mm_at_b_acc(&mut grad[ls.w2.range()], &c.g, &d_o, n, dff, d);
        col_sum_acc(&mut grad[ls.b2.range()], &d_o, d);
        let mut du = vec![T::zero(); n * dff];
        mm_a_bt_acc(&mut du, &d_o, &w[ls.w2.range()], n, d, dff);
        for (g, &u) in du.iter_mut().zip(&c.u) {
            *g *= gelu_grad(u);
        }
        mm_at_b_acc(&mut grad[ls.w1.range()], &c.h2, &du, n, d, dff);
        col_sum_acc(&mut grad[ls.b1.range()], &du, dff);
        let mut dh2 = vec![T::zero(); n * d];
        mm_a_bt_acc(&mut dh2, &du, &w[ls.w1.range()], n, dff, d);
        {
            let (dg, db) = split_two(grad, ls.ln2_g, ls.ln2_b);
            layer_norm_back(&dh2, &c.ln2, &w[ls.ln2_g.range()], dg, db, &mut dx);
        }

        // attention block: x_mid = x_in + drop(ctx Wo + bo)
        let mut d_attn = dx.clone();
        apply_mask(&mut d_attn, &c.mask1);
        mm_at_b_acc(&mut grad[ls.wo.range()], &c.ctx, &d_attn, n, d, d);
        col_sum_acc(&mut grad[ls.bo.range()], &d_attn, d);
        let mut dctx = vec![T::zero(); n * d];
        mm_a_bt_acc(&mut dctx, &d_attn, &w[ls.wo.range()], n, d, d);

        let mut dq = vec![T::zero(); n * d];
        let mut dk = vec![T::zero(); n * d];
        let mut dv = vec![T::zero(); n * d];
        let mut ds = vec![T::zero(); n];
        for h in 0..nh {
            let hc = h * dh;
            let ph = &c.probs[h * n * n..(h + 1) * n * n];
            for i in 0..n {
                let dci = &dctx[i * d + hc..i * d + hc + dh];
                let a = &ph[i * n..(i + 1) * n];
                let mut dot = T::zero();
                for j in 0..n {
                    let vj = &c.v[j * d + hc..j * d + hc + dh];
                    let mut da = T::zero();
                    for (&x, &y) in dci.iter().zip(vj) {
                        da += x * y;
                    }
                    ds[j] = da;
                    dot += da * a[j];
                    for (o, &g) in dv[j * d + hc..j * d + hc + dh].iter_mut().zip(dci) {
                        *o += a[j] * g;
                    }
                }
                for j in 0..n {
                    let s = a[j] * (ds[j] - dot) * scale;
                    for t in 0..dh {
                        dq[i * d + hc + t] += s * c.k[j * d + hc + t];
                        dk[j * d + hc + t] += s * c.q[i * d + hc + t];
                    }
                }
            }
        }
        let mut dh1 = vec![T::zero(); n * d];
        for (dm, wm, bm) in [(&dq, ls.wq, ls.bq), (&dk, ls.wk, ls.bk), (&dv, ls.wv, ls.bv)] {
            mm_at_b_acc(&mut grad[wm.range()], &c.h1, dm, n, d, d);
            col_sum_acc(&mut grad[bm.range()], dm, d);
            mm_a_bt_acc(&mut dh1, dm, &w[wm.range()], n, d, d);
        }
        let (dg, db) = split_two(grad, ls.ln1_g, ls.ln1_b);
        layer_norm_back(&dh1, &c.ln1, &w[ls.ln1_g.range()], dg, db, &mut dx);
    }

    apply_mask(&mut dx, &f.mask0);
    for (i, (&pos, &id)) in f.rows.iter().zip(&f.ids).enumerate() {
        let dr = &dx[i * d..(i + 1) * d];
        add_row(grad, lay.token.row(id), dr);
        if let Some(s) = lay.segment {
            add_row(grad, s.row(SEGMENTS[pos] as usize), dr);
        }
        if let Some(s) = lay.position {
            add_row(grad, s.row(pos), dr);
        }
    }
}

fn add_row<T: Real>(grad: &mut [T], range: std::ops::Range<usize>, src: &[T]) {
    for (o, &v) in grad[range].iter_mut().zip(src) {
        *o += v;
    }
}

/// Disjoint mutable views of two tensors; `a` must precede `b` in the buffer.
fn split_two<T>(buf: &mut [T], a: Span, b: Span) -> (&mut [T], &mut [T]) {
    debug_assert!(a.offset + a.len() <= b.offset);
    let (lo, hi) = buf.split_at_mut(b.offset);
    (&mut lo[a.range()], &mut hi[..b.len()])
}

/// Softmax of one logit row in f64.
pub(crate) fn softmax_f64<T: Real>(logits: &[T]) -> Vec<f64> {
    let xs: Vec<f64> = logits.iter().map(|v| v.to_f64().unwrap_or(f64::NAN)).collect();
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = xs.iter().map(|x| (x - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

fn check_item<T: Real>(p: &ModelParams<T>, item: &BatchItem) -> Result<()> {
    let nc = p.config().num_colors();
    for &(pos, target) in &item.targets {
        if pos >= SEQ_LEN || target >= nc {
            return Err(Error::Shape(format!("target ({pos}, {target}) outside sequence or color range")));
        }
        let id = item.ids[pos];
        if id == SpecialToken::Pad as u32 || id == SpecialToken::Sep as u32 {
            return Err(Error::Shape(format!("target position {pos} holds a PAD or SEP token")));
        }
    }
    Ok(())
}

/// Mean negative log-likelihood over all targets in the batch and its exact
/// gradient. `dropout` carries `(seed, step)` for training mode.
pub fn loss_and_gradients<T: Real>(p: &ModelParams<T>, batch: &Batch, dropout: Option<(u64, u64)>) -> Result<(f64, Vec<T>)> {
    let total: usize = batch.iter().map(|b| b.targets.len()).sum();
    if total == 0 {
        return Err(Error::Shape("batch has no masked targets".into()));
    }
    let nc = p.config().num_colors();
    let inv = real::<T>(1.0 / total as f64);
    let mut grad = vec![T::zero(); p.len()];
    let mut loss = 0.0;
    for (idx, item) in batch.iter().enumerate() {
        check_item(p, item)?;
        if item.targets.is_empty() {
            continue;
        }
        let queries: Vec<usize> = item.targets.iter().map(|t| t.0).collect();
        let mut rng = dropout.map(|(seed, step)| ChaCha8Rng::seed_from_u64(derive_seed(&[seed, step, idx as u64])));
        let f = forward(p, &item.ids, &queries, rng.as_mut())?;
        let mut dlogits = vec![T::zero(); queries.len() * nc];
        for (qi, &(_, target)) in item.targets.iter().enumerate() {
            let row = &f.logits[qi * nc..(qi + 1) * nc];
            let max = row.iter().copied().fold(T::neg_infinity(), T::max);
            let z = row.iter().fold(T::zero(), |s, &v| s + (v - max).exp());
            let lse = max + z.ln();
            loss += (lse - row[target]).to_f64().unwrap_or(f64::NAN);
            for (c, dl) in dlogits[qi * nc..(qi + 1) * nc].iter_mut().enumerate() {
                let pc = (row[c] - lse).exp();
                *dl = (pc - if c == target { T::one() } else { T::zero() }) * inv;
            }
        }
        backward(p, &f, &dlogits, &mut grad);
    }
    Ok((loss / total as f64, grad))
}
