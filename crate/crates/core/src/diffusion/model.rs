//! Desk-scale temporal transformer that predicts the clean motion clip.
//!
//! Wiring per clip of `L` frames:
//!
//! ```text
//! h   = [x_t | m_ref] W_in + b_in          (initial condition by concatenation)
//!     + ctx                                 ctx = ecs W_c + b_c
//!     + φ(t) W_t + b_t                      (sinusoidal timestep embedding)
//!     + pos                                 (sinusoidal frame positions)
//! per block:
//!   h += SelfAttn(rms(h))
//!   h += CrossAttn(rms(h), ctx)             (per-frame condition context)
//!   h += W2 silu(W1 rms(h) + b1) + b2
//! out = h W_out + b_out
//! ```
//!
//! All parameters live in one flat vector; gradients are computed by hand.

use crate::conditioning::{assemble_ics, EcsLayout, DEFAULT_FEATURE_DIM};
use crate::error::{Error, Result};
use crate::motion::layout::MOTION_DIMS;
use ndarray::linalg::general_mat_mul;
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, ArrayViewMut2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

const RMS_EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DenoiserConfig {
    pub motion_dims: usize,
    pub ecs_width: usize,
    pub hidden: usize,
    pub blocks: usize,
    pub mlp_hidden: usize,
}

impl Default for DenoiserConfig {
    fn default() -> Self {
        Self {
            motion_dims: MOTION_DIMS,
            ecs_width: EcsLayout { feature_dim: DEFAULT_FEATURE_DIM }.width(),
            hidden: 64,
            blocks: 2,
            mlp_hidden: 128,
        }
    }
}

impl DenoiserConfig {
    /// Small network for gradient checking.
    pub fn tiny() -> Self {
        Self { hidden: 16, mlp_hidden: 32, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.motion_dims != MOTION_DIMS {
            return Err(Error::Config(format!("motion_dims must be {MOTION_DIMS}, got {}", self.motion_dims)));
        }
        if self.hidden < 2 || !self.hidden.is_multiple_of(2) {
            return Err(Error::Config(format!("hidden width must be even and >= 2, got {}", self.hidden)));
        }
        if self.ecs_width == 0 || self.mlp_hidden == 0 || self.blocks == 0 {
            return Err(Error::Config("ecs_width, mlp_hidden and blocks must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Slot {
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
}

impl Slot {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

#[derive(Debug, Clone)]
struct AttnSlots {
    q: Slot,
    k: Slot,
    v: Slot,
    o: Slot,
}

#[derive(Debug, Clone)]
struct BlockSlots {
    sa: AttnSlots,
    ca: AttnSlots,
    w1: Slot,
    b1: Slot,
    w2: Slot,
    b2: Slot,
}

#[derive(Debug, Clone)]
struct Layout {
    w_in: Slot,
    b_in: Slot,
    w_c: Slot,
    b_c: Slot,
    w_t: Slot,
    b_t: Slot,
    blocks: Vec<BlockSlots>,
    w_out: Slot,
    b_out: Slot,
    named: Vec<(String, Slot)>,
    total: usize,
}

impl Layout {
    fn new(cfg: &DenoiserConfig) -> Self {
        let mut named = Vec::new();
        let mut offset = 0;
        let mut add = |name: String, rows: usize, cols: usize| {
            let s = Slot { offset, rows, cols };
            offset += rows * cols;
            named.push((name, s));
            s
        };
        let (h, m, f) = (cfg.hidden, cfg.motion_dims, cfg.mlp_hidden);
        let w_in = add("input.w".into(), 2 * m, h);
        let b_in = add("input.b".into(), 1, h);
        let w_c = add("context.w".into(), cfg.ecs_width, h);
        let b_c = add("context.b".into(), 1, h);
        let w_t = add("time.w".into(), h, h);
        let b_t = add("time.b".into(), 1, h);
        let mut blocks = Vec::new();
        for b in 0..cfg.blocks {
            let mut attn = |kind: &str| AttnSlots {
                q: add(format!("block{b}.{kind}.q"), h, h),
                k: add(format!("block{b}.{kind}.k"), h, h),
                v: add(format!("block{b}.{kind}.v"), h, h),
                o: add(format!("block{b}.{kind}.o"), h, h),
            };
            let sa = attn("self");
            let ca = attn("cross");
            let w1 = add(format!("block{b}.mlp.w1"), h, f);
            let b1 = add(format!("block{b}.mlp.b1"), 1, f);
            let w2 = add(format!("block{b}.mlp.w2"), f, h);
            let b2 = add(format!("block{b}.mlp.b2"), 1, h);
            blocks.push(BlockSlots { sa, ca, w1, b1, w2, b2 });
        }
        let w_out = add("output.w".into(), h, m);
        let b_out = add("output.b".into(), 1, m);
        Self { w_in, b_in, w_c, b_c, w_t, b_t, blocks, w_out, b_out, named, total: offset }
    }
}

/// Sinusoidal embedding of a scalar position into `dim` channels.
pub fn sinusoidal(pos: f64, dim: usize) -> Array1<f64> {
    let half = dim / 2;
    let mut out = Array1::zeros(dim);
    for k in 0..half {
        let freq = (-(10_000f64).ln() * k as f64 / half as f64).exp();
        out[k] = (pos * freq).sin();
        out[half + k] = (pos * freq).cos();
    }
    out
}

fn positions(len: usize, dim: usize) -> Array2<f64> {
    let mut p = Array2::zeros((len, dim));
    for i in 0..len {
        p.row_mut(i).assign(&sinusoidal(i as f64, dim));
    }
    p
}

fn rms_norm(x: &Array2<f64>) -> (Array2<f64>, Array1<f64>) {
    let inv: Array1<f64> =
        x.rows().into_iter().map(|r| 1.0 / (r.iter().map(|v| v * v).sum::<f64>() / r.len() as f64 + RMS_EPS).sqrt()).collect();
    let mut y = x.clone();
    for (mut row, s) in y.rows_mut().into_iter().zip(&inv) {
        row.mapv_inplace(|v| v * s);
    }
    (y, inv)
}

fn rms_norm_backward(y: &Array2<f64>, inv: &Array1<f64>, dy: &Array2<f64>) -> Array2<f64> {
    let width = y.ncols() as f64;
    let mut dx = dy.clone();
    for ((mut d, yr), s) in dx.rows_mut().into_iter().zip(y.rows()).zip(inv) {
        let dot = d.iter().zip(yr).map(|(a, b)| a * b).sum::<f64>() / width;
        for (dv, yv) in d.iter_mut().zip(yr) {
            *dv = s * (*dv - yv * dot);
        }
    }
    dx
}

fn silu(u: f64) -> f64 {
    u / (1.0 + (-u).exp())
}

fn silu_grad(u: f64) -> f64 {
    let s = 1.0 / (1.0 + (-u).exp());
    s * (1.0 + u * (1.0 - s))
}

fn softmax_rows(s: &mut Array2<f64>) {
    for mut row in s.rows_mut() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - max).exp());
        let z = row.sum();
        row.mapv_inplace(|v| v / z);
    }
}

#[derive(Debug, Clone)]
struct AttnCache {
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    a: Array2<f64>,
    o: Array2<f64>,
}

#[derive(Debug, Clone)]
struct BlockCache {
    sa_in: Array2<f64>,
    sa_inv: Array1<f64>,
    sa: AttnCache,
    ca_in: Array2<f64>,
    ca_inv: Array1<f64>,
    ca: AttnCache,
    mlp_in: Array2<f64>,
    mlp_inv: Array1<f64>,
    u: Array2<f64>,
    g: Array2<f64>,
}

/// Intermediate activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    ics: Array2<f64>,
    ecs: Array2<f64>,
    t_embed: Array1<f64>,
    ctx: Array2<f64>,
    blocks: Vec<BlockCache>,
    h_final: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Denoiser {
    cfg: DenoiserConfig,
    params: Vec<f64>,
}

impl Denoiser {
    /// Scaled-normal initialization; the output head starts at zero so the
    /// untrained network predicts the all-zero clip.
    pub fn new(cfg: DenoiserConfig, seed: u64) -> Result<Self> {
        let mut d = Self::with_random_head(cfg, seed)?;
        let layout = Layout::new(&cfg);
        d.params[layout.w_out.range()].iter_mut().for_each(|v| *v = 0.0);
        Ok(d)
    }

    /// Same as [`Denoiser::new`] but with a random output head.
    pub fn with_random_head(cfg: DenoiserConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let layout = Layout::new(&cfg);
        let mut params = vec![0.0; layout.total];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let residual_gain = 1.0 / (2.0 * cfg.blocks as f64).sqrt();
        for (name, slot) in &layout.named {
            if slot.rows == 1 {
                continue;
            }
            let mut std = 1.0 / (slot.rows as f64).sqrt();
            if name.ends_with(".o") || name.ends_with(".w2") {
                std *= residual_gain;
            }
            let normal = Normal::new(0.0, std).expect("std is positive");
            for v in &mut params[slot.range()] {
                *v = normal.sample(&mut rng);
            }
        }
        Ok(Self { cfg, params })
    }

    pub fn from_params(cfg: DenoiserConfig, params: Vec<f64>) -> Result<Self> {
        cfg.validate()?;
        let total = Layout::new(&cfg).total;
        if params.len() != total {
            return Err(Error::shape(format!("{total} parameters"), params.len()));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidInput("parameters must be finite".into()));
        }
        Ok(Self { cfg, params })
    }

    pub fn config(&self) -> &DenoiserConfig {
        &self.cfg
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    /// Named parameter tensors in storage order.
    pub fn tensors(&self) -> Vec<(String, Slot)> {
        Layout::new(&self.cfg).named
    }

    fn mat(&self, s: Slot) -> ArrayView2<'_, f64> {
        ArrayView2::from_shape((s.rows, s.cols), &self.params[s.range()]).expect("slot matches layout")
    }

    fn row(&self, s: Slot) -> ArrayView1<'_, f64> {
        ArrayView1::from(&self.params[s.range()])
    }

    fn check_inputs(&self, x_t: &ArrayView2<f64>, m_ref: &ArrayView1<f64>, ecs: &ArrayView2<f64>) -> Result<()> {
        let m = self.cfg.motion_dims;
        if x_t.nrows() == 0 || x_t.ncols() != m {
            return Err(Error::shape(format!("L x {m} noisy clip"), format!("{:?}", x_t.dim())));
        }
        if m_ref.len() != m {
            return Err(Error::shape(format!("{m}-d reference motion"), m_ref.len()));
        }
        if ecs.dim() != (x_t.nrows(), self.cfg.ecs_width) {
            return Err(Error::shape(format!("{} x {} condition rows", x_t.nrows(), self.cfg.ecs_width), format!("{:?}", ecs.dim())));
        }
        Ok(())
    }

    /// Predicts the clean clip `m̂0` from the noisy clip at step `t`.
    pub fn forward(&self, x_t: ArrayView2<f64>, m_ref: ArrayView1<f64>, ecs: ArrayView2<f64>, t: usize) -> Result<Array2<f64>> {
        Ok(self.forward_cached(x_t, m_ref, ecs, t)?.0)
    }

    pub fn forward_cached(
        &self,
        x_t: ArrayView2<f64>,
        m_ref: ArrayView1<f64>,
        ecs: ArrayView2<f64>,
        t: usize,
    ) -> Result<(Array2<f64>, ForwardCache)> {
        self.check_inputs(&x_t, &m_ref, &ecs)?;
        let layout = Layout::new(&self.cfg);
        let hd = self.cfg.hidden;
        let l = x_t.nrows();
        let ics = assemble_ics(&m_ref.to_vec(), x_t)?;
        let ecs = ecs.to_owned();

        let ctx = ecs.dot(&self.mat(layout.w_c)) + self.row(layout.b_c);
        let t_embed = sinusoidal(t as f64, hd);
        let temb = t_embed.dot(&self.mat(layout.w_t)) + self.row(layout.b_t);
        let mut h = ics.dot(&self.mat(layout.w_in)) + self.row(layout.b_in);
        h += &ctx;
        h += &temb;
        h += &positions(l, hd);

        let scale = 1.0 / (hd as f64).sqrt();
        let mut blocks = Vec::with_capacity(layout.blocks.len());
        for bs in &layout.blocks {
            let (sa_in, sa_inv) = rms_norm(&h);
            let sa = self.attn_forward(&bs.sa, &sa_in, &sa_in, scale);
            h += &sa.o.dot(&self.mat(bs.sa.o));

            let (ca_in, ca_inv) = rms_norm(&h);
            let ca = self.attn_forward(&bs.ca, &ca_in, &ctx, scale);
            h += &ca.o.dot(&self.mat(bs.ca.o));

            let (mlp_in, mlp_inv) = rms_norm(&h);
            let u = mlp_in.dot(&self.mat(bs.w1)) + self.row(bs.b1);
            let g = u.mapv(silu);
            h += &(g.dot(&self.mat(bs.w2)) + self.row(bs.b2));
            blocks.push(BlockCache { sa_in, sa_inv, sa, ca_in, ca_inv, ca, mlp_in, mlp_inv, u, g });
        }
        let out = h.dot(&self.mat(layout.w_out)) + self.row(layout.b_out);
        Ok((out, ForwardCache { ics, ecs, t_embed, ctx, blocks, h_final: h }))
    }

    fn attn_forward(&self, s: &AttnSlots, xq: &Array2<f64>, xkv: &Array2<f64>, scale: f64) -> AttnCache {
        let q = xq.dot(&self.mat(s.q));
        let k = xkv.dot(&self.mat(s.k));
        let v = xkv.dot(&self.mat(s.v));
        let mut a = q.dot(&k.t()) * scale;
        softmax_rows(&mut a);
        let o = a.dot(&v);
        AttnCache { q, k, v, a, o }
    }

    /// Returns `(∂/∂xq, ∂/∂xkv)` and accumulates parameter gradients.
    fn attn_backward(
        &self,
        s: &AttnSlots,
        c: &AttnCache,
        xq: &Array2<f64>,
        xkv: &Array2<f64>,
        dout: &Array2<f64>,
        scale: f64,
        grads: &mut [f64],
    ) -> (Array2<f64>, Array2<f64>) {
        acc_matmul_tn(grads, s.o, &c.o, dout);
        let d_o = dout.dot(&self.mat(s.o).t());
        let da = d_o.dot(&c.v.t());
        let dv = c.a.t().dot(&d_o);
        let mut ds = da;
        for (mut drow, arow) in ds.rows_mut().into_iter().zip(c.a.rows()) {
            let dot: f64 = drow.iter().zip(arow).map(|(x, y)| x * y).sum();
            for (dv, av) in drow.iter_mut().zip(arow) {
                *dv = av * (*dv - dot) * scale;
            }
        }
        let dq = ds.dot(&c.k);
        let dk = ds.t().dot(&c.q);
        acc_matmul_tn(grads, s.q, xq, &dq);
        acc_matmul_tn(grads, s.k, xkv, &dk);
        acc_matmul_tn(grads, s.v, xkv, &dv);
        let dxq = dq.dot(&self.mat(s.q).t());
        let dxkv = dk.dot(&self.mat(s.k).t()) + dv.dot(&self.mat(s.v).t());
        (dxq, dxkv)
    }

    /// Accumulates `∂loss/∂params` into `grads` given `∂loss/∂output`.
    pub fn backward(&self, cache: &ForwardCache, d_out: ArrayView2<f64>, grads: &mut [f64]) -> Result<()> {
        if grads.len() != self.params.len() {
            return Err(Error::shape(self.params.len(), grads.len()));
        }
        if d_out.dim() != (cache.h_final.nrows(), self.cfg.motion_dims) {
            return Err(Error::shape(format!("{:?}", (cache.h_final.nrows(), self.cfg.motion_dims)), format!("{:?}", d_out.dim())));
        }
        let layout = Layout::new(&self.cfg);
        let d_out = d_out.to_owned();
        acc_matmul_tn(grads, layout.w_out, &cache.h_final, &d_out);
        acc_colsum(grads, layout.b_out, &d_out);
        let mut dh = d_out.dot(&self.mat(layout.w_out).t());
        let mut dctx = Array2::zeros(cache.ctx.dim());
        let scale = 1.0 / (self.cfg.hidden as f64).sqrt();

        for (bs, bc) in layout.blocks.iter().zip(&cache.blocks).rev() {
            // mlp
            acc_matmul_tn(grads, bs.w2, &bc.g, &dh);
            acc_colsum(grads, bs.b2, &dh);
            let dg = dh.dot(&self.mat(bs.w2).t());
            let du = ndarray::Zip::from(&dg).and(&bc.u).map_collect(|&g, &u| g * silu_grad(u));
            acc_matmul_tn(grads, bs.w1, &bc.mlp_in, &du);
            acc_colsum(grads, bs.b1, &du);
            let dn = du.dot(&self.mat(bs.w1).t());
            dh += &rms_norm_backward(&bc.mlp_in, &bc.mlp_inv, &dn);

            // cross attention
            let (dxq, dkv) = self.attn_backward(&bs.ca, &bc.ca, &bc.ca_in, &cache.ctx, &dh, scale, grads);
            dctx += &dkv;
            dh += &rms_norm_backward(&bc.ca_in, &bc.ca_inv, &dxq);

            // self attention
            let (dxq, dkv) = self.attn_backward(&bs.sa, &bc.sa, &bc.sa_in, &bc.sa_in, &dh, scale, grads);
            let dn = dxq + dkv;
            dh += &rms_norm_backward(&bc.sa_in, &bc.sa_inv, &dn);
        }

        dctx += &dh;
        acc_matmul_tn(grads, layout.w_in, &cache.ics, &dh);
        acc_colsum(grads, layout.b_in, &dh);
        acc_matmul_tn(grads, layout.w_c, &cache.ecs, &dctx);
        acc_colsum(grads, layout.b_c, &dctx);
        let dtemb = dh.sum_axis(Axis(0));
        let mut gw = grad_view(grads, layout.w_t);
        for (i, e) in cache.t_embed.iter().enumerate() {
            gw.row_mut(i).scaled_add(*e, &dtemb);
        }
        let gb = &mut grads[layout.b_t.range()];
        for (g, d) in gb.iter_mut().zip(&dtemb) {
            *g += d;
        }
        Ok(())
    }
}

fn grad_view(grads: &mut [f64], s: Slot) -> ArrayViewMut2<'_, f64> {
    ArrayViewMut2::from_shape((s.rows, s.cols), &mut grads[s.range()]).expect("slot matches layout")
}

/// `grads[s] += aᵀ b`.
fn acc_matmul_tn(grads: &mut [f64], s: Slot, a: &Array2<f64>, b: &Array2<f64>) {
    let mut g = grad_view(grads, s);
    general_mat_mul(1.0, &a.t(), b, 1.0, &mut g);
}

fn acc_colsum(grads: &mut [f64], s: Slot, d: &Array2<f64>) {
    for row in d.rows() {
        for (g, v) in grads[s.range()].iter_mut().zip(row) {
            *g += v;
        }
    }
}
