//! Batched evaluation of a network over many points, carrying input
//! derivative channels forward and parameter adjoints backward.
//!
//! Activations are stored as `(points·channels) x width` row-major blocks.
//! Channel 0 is the value, channels `1..=dim` the gradient, and the
//! remaining channels the requested Hessian entries. Every affine map then
//! becomes one GEMM over all rows, and the bias touches value rows only.

use crate::autodiff::DiffValue;
use crate::error::{Error, Result};
use crate::network::{Architecture, NetworkParams};

/// Which derivative channels to propagate.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Channels {
    dim: usize,
    first: bool,
    pairs: Vec<(usize, usize)>,
}

impl Channels {
    pub fn value_only(dim: usize) -> Self {
        Self { dim, first: false, pairs: Vec::new() }
    }

    pub fn gradient(dim: usize) -> Self {
        Self { dim, first: true, pairs: Vec::new() }
    }

    /// Gradient plus the listed Hessian entries (i <= j).
    pub fn with_pairs(dim: usize, pairs: &[(usize, usize)]) -> Self {
        let pairs = pairs.iter().map(|&(i, j)| (i.min(j), i.max(j))).collect();
        Self { dim, first: true, pairs }
    }

    /// Gradient plus the whole upper triangle of the Hessian.
    pub fn full(dim: usize) -> Self {
        let pairs: Vec<_> = (0..dim).flat_map(|i| (i..dim).map(move |j| (i, j))).collect();
        Self { dim, first: true, pairs }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn count(&self) -> usize {
        1 + if self.first { self.dim } else { 0 } + self.pairs.len()
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn has_first(&self) -> bool {
        self.first
    }

    /// Channel index of ∂/∂x_i.
    pub fn first_index(&self, i: usize) -> usize {
        1 + i
    }

    /// Channel index of the Hessian entry (i, j), if propagated.
    pub fn pair_index(&self, i: usize, j: usize) -> Option<usize> {
        let key = (i.min(j), i.max(j));
        self.pairs.iter().position(|&p| p == key).map(|k| 1 + self.dim + k)
    }
}

#[derive(Debug, Clone)]
struct Block {
    layers: Vec<usize>,
    projection: Option<usize>,
    skip: bool,
}

/// Precomputed evaluation plan for one architecture.
#[derive(Debug, Clone)]
pub struct Engine {
    dim: usize,
    width: usize,
    scale: Vec<(f64, f64)>,
    blocks: Vec<Block>,
    head: usize,
    param_count: usize,
}

/// Cached intermediate values of a batched forward pass.
#[derive(Debug, Clone)]
pub struct Forward {
    n: usize,
    channels: Channels,
    /// Block inputs; the last entry feeds the head.
    zs: Vec<Vec<f64>>,
    pre: Vec<Vec<Vec<f64>>>,
    post: Vec<Vec<Vec<f64>>>,
    out: Vec<f64>,
}

impl Forward {
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn channels(&self) -> &Channels {
        &self.channels
    }

    /// Raw output channels for point `p`.
    pub fn output(&self, p: usize) -> &[f64] {
        let c = self.channels.count();
        &self.out[p * c..(p + 1) * c]
    }

    pub fn value(&self, p: usize) -> f64 {
        self.out[p * self.channels.count()]
    }

    /// Output jet at point `p`; Hessian entries that were not propagated are 0.
    pub fn jet(&self, p: usize) -> DiffValue {
        let ch = &self.channels;
        let o = self.output(p);
        let mut v = DiffValue::constant(ch.dim, o[0]);
        if ch.first {
            for i in 0..ch.dim {
                v.set_d(i, o[1 + i]);
            }
        }
        for (k, &(i, j)) in ch.pairs.iter().enumerate() {
            v.set_d2(i, j, o[1 + ch.dim + k]);
        }
        v
    }
}

impl Engine {
    pub fn new(arch: &Architecture) -> Result<Self> {
        arch.validate()?;
        let shapes = arch.layer_shapes();
        let mut blocks = Vec::new();
        let mut idx = 0;
        match arch {
            Architecture::Mlp(a) => {
                blocks.push(Block { layers: (0..a.hidden_layers).collect(), projection: None, skip: false });
                idx = a.hidden_layers;
            }
            Architecture::ResNet(a) => {
                for b in 0..a.blocks {
                    let layers = (idx..idx + a.block_hidden_layers).collect();
                    idx += a.block_hidden_layers;
                    let din = if b == 0 { a.input_dim } else { a.width };
                    let projection = (din != a.width).then(|| {
                        idx += 1;
                        idx - 1
                    });
                    blocks.push(Block { layers, projection, skip: true });
                }
            }
        }
        debug_assert_eq!(idx + 1, shapes.len());
        Ok(Self {
            dim: arch.input_dim(),
            width: arch.width(),
            scale: arch.scaling().coefficients(),
            blocks,
            head: idx,
            param_count: shapes.iter().map(|s| s.len()).sum(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn param_count(&self) -> usize {
        self.param_count
    }

    fn check(&self, params: &NetworkParams, points: &[f64], channels: &Channels) -> Result<usize> {
        if params.len() != self.param_count {
            return Err(Error::Shape(format!("{} parameters, architecture needs {}", params.len(), self.param_count)));
        }
        if channels.dim != self.dim || !points.len().is_multiple_of(self.dim) {
            return Err(Error::Shape(format!("points of dimension {} for a {}-input network", channels.dim, self.dim)));
        }
        if !channels.first && !channels.pairs.is_empty() {
            return Err(Error::Shape("Hessian channels need gradient channels".into()));
        }
        if channels.pairs.iter().any(|&(_, j)| j >= self.dim) {
            return Err(Error::Shape("Hessian channel out of range".into()));
        }
        Ok(points.len() / self.dim)
    }

    /// Evaluates the network on `points` (flat, row-major).
    pub fn forward(&self, params: &NetworkParams, points: &[f64], channels: &Channels) -> Result<Forward> {
        let n = self.check(params, points, channels)?;
        let c = channels.count();
        let rows = n * c;
        let d = self.dim;
        let w = self.width;

        let mut input = vec![0.0; rows * d];
        for p in 0..n {
            let x = &points[p * d..(p + 1) * d];
            let base = p * c * d;
            for k in 0..d {
                let (off, f) = self.scale[k];
                input[base + k] = f * x[k] + off;
                if channels.first {
                    input[base + (1 + k) * d + k] = f;
                }
            }
        }

        let mut zs = vec![input];
        let mut pre_all = Vec::with_capacity(self.blocks.len());
        let mut post_all = Vec::with_capacity(self.blocks.len());
        for block in &self.blocks {
            let z = zs.last().expect("non-empty");
            let mut in_width = if zs.len() == 1 { d } else { w };
            let mut pres = Vec::with_capacity(block.layers.len());
            let mut posts: Vec<Vec<f64>> = Vec::with_capacity(block.layers.len());
            for &l in &block.layers {
                let src = posts.last().unwrap_or(z);
                let mut a = vec![0.0; rows * w];
                affine(src, rows, in_width, params.weights(l), params.bias(l), w, c, &mut a);
                let mut y = vec![0.0; rows * w];
                tanh_forward(&a, &mut y, n, channels, w);
                pres.push(a);
                posts.push(y);
                in_width = w;
            }
            if block.skip {
                let mut out = posts.last().expect("block has layers").clone();
                match block.projection {
                    Some(pl) => {
                        let zin_w = if zs.len() == 1 { d } else { w };
                        gemm_xwt(z, rows, zin_w, params.weights(pl), w, &mut out, 1.0);
                    }
                    None => out.iter_mut().zip(z).for_each(|(o, zi)| *o += zi),
                }
                zs.push(out);
            }
            pre_all.push(pres);
            post_all.push(posts);
        }

        let last = match self.blocks.last() {
            Some(b) if !b.skip => post_all.last().and_then(|p| p.last()).expect("mlp has layers"),
            _ => zs.last().expect("non-empty"),
        };
        let mut out = vec![0.0; rows];
        affine(last, rows, w, params.weights(self.head), params.bias(self.head), 1, c, &mut out);
        Ok(Forward { n, channels: channels.clone(), zs, pre: pre_all, post: post_all, out })
    }

    /// Accumulates `Σ_p Σ_c seed[p,c] · ∂out[p,c]/∂Θ` into `grad`.
    pub fn backward(&self, params: &NetworkParams, fwd: &Forward, seed: &[f64], grad: &mut [f64]) -> Result<()> {
        let c = fwd.channels.count();
        let rows = fwd.n * c;
        if seed.len() != rows || grad.len() != self.param_count {
            return Err(Error::Shape(format!(
                "seed of {} for {rows} outputs, gradient of {} for {} parameters",
                seed.len(),
                grad.len(),
                self.param_count
            )));
        }
        let w = self.width;
        let d = self.dim;
        let mlp = !self.blocks[0].skip;

        // head
        let head_in = if mlp { fwd.post[0].last().expect("layers") } else { fwd.zs.last().expect("zs") };
        {
            let off = params.offset(self.head);
            let (gw, gb) = grad[off..off + w + 1].split_at_mut(w);
            gemm_gw(seed, head_in, rows, 1, w, gw);
            gb[0] += (0..fwd.n).map(|p| seed[p * c]).sum::<f64>();
        }
        let mut g = vec![0.0; rows * w];
        gemm_gx(seed, params.weights(self.head), rows, 1, w, &mut g);

        for (b, block) in self.blocks.iter().enumerate().rev() {
            let z_in = &fwd.zs[if mlp { 0 } else { b }];
            let zin_w = if b == 0 { d } else { w };
            let mut g_skip = if block.skip {
                match block.projection {
                    Some(pl) => {
                        let off = params.offset(pl);
                        gemm_gw(&g, z_in, rows, w, zin_w, &mut grad[off..off + w * zin_w]);
                        if b > 0 {
                            let mut gs = vec![0.0; rows * zin_w];
                            gemm_gx(&g, params.weights(pl), rows, w, zin_w, &mut gs);
                            Some(gs)
                        } else {
                            None
                        }
                    }
                    None => (b > 0).then(|| g.clone()),
                }
            } else {
                None
            };

            let mut g_post = g;
            for (li, &l) in block.layers.iter().enumerate().rev() {
                let mut g_pre = vec![0.0; rows * w];
                tanh_backward(&fwd.pre[b][li], &fwd.post[b][li], &g_post, &mut g_pre, fwd.n, &fwd.channels, w);
                let src = if li == 0 { z_in } else { &fwd.post[b][li - 1] };
                let in_w = if li == 0 { zin_w } else { w };
                let off = params.offset(l);
                let (gw, rest) = grad[off..].split_at_mut(w * in_w);
                gemm_gw(&g_pre, src, rows, w, in_w, gw);
                let gb = &mut rest[..w];
                for p in 0..fwd.n {
                    let row = &g_pre[p * c * w..p * c * w + w];
                    gb.iter_mut().zip(row).for_each(|(a, b)| *a += b);
                }
                if li == 0 && b == 0 {
                    g_post = Vec::new();
                    break;
                }
                let mut g_src = vec![0.0; rows * in_w];
                gemm_gx(&g_pre, params.weights(l), rows, w, in_w, &mut g_src);
                g_post = g_src;
            }
            g = g_post;
            if let Some(gs) = g_skip.take() {
                g.iter_mut().zip(&gs).for_each(|(a, b)| *a += b);
            }
        }
        Ok(())
    }
}

/// out = x·Wᵀ + b (bias on value rows only).
#[allow(clippy::too_many_arguments)]
fn affine(x: &[f64], rows: usize, k: usize, w: &[f64], b: &[f64], m: usize, c: usize, out: &mut [f64]) {
    gemm_xwt(x, rows, k, w, m, out, 0.0);
    if !b.is_empty() {
        for r in (0..rows).step_by(c) {
            out[r * m..(r + 1) * m].iter_mut().zip(b).for_each(|(o, bi)| *o += bi);
        }
    }
}

/// out = x (rows×k) · wᵀ (k×m) + beta·out
fn gemm_xwt(x: &[f64], rows: usize, k: usize, w: &[f64], m: usize, out: &mut [f64], beta: f64) {
    debug_assert!(x.len() >= rows * k && w.len() >= m * k && out.len() >= rows * m);
    if rows == 0 {
        return;
    }
    // SAFETY: extents checked above; strides describe contiguous row-major buffers.
    unsafe {
        matrixmultiply::dgemm(
            rows,
            k,
            m,
            1.0,
            x.as_ptr(),
            k as isize,
            1,
            w.as_ptr(),
            1,
            k as isize,
            beta,
            out.as_mut_ptr(),
            m as isize,
            1,
        );
    }
}

/// gw (m×k) += gᵀ (m×rows) · x (rows×k)
fn gemm_gw(g: &[f64], x: &[f64], rows: usize, m: usize, k: usize, gw: &mut [f64]) {
    debug_assert!(g.len() >= rows * m && x.len() >= rows * k && gw.len() >= m * k);
    if rows == 0 {
        return;
    }
    // SAFETY: as above.
    unsafe {
        matrixmultiply::dgemm(
            m,
            rows,
            k,
            1.0,
            g.as_ptr(),
            1,
            m as isize,
            x.as_ptr(),
            k as isize,
            1,
            1.0,
            gw.as_mut_ptr(),
            k as isize,
            1,
        );
    }
}

/// gx (rows×k) = g (rows×m) · w (m×k)
fn gemm_gx(g: &[f64], w: &[f64], rows: usize, m: usize, k: usize, gx: &mut [f64]) {
    debug_assert!(g.len() >= rows * m && w.len() >= m * k && gx.len() >= rows * k);
    if rows == 0 {
        return;
    }
    // SAFETY: as above.
    unsafe {
        matrixmultiply::dgemm(
            rows,
            m,
            k,
            1.0,
            g.as_ptr(),
            m as isize,
            1,
            w.as_ptr(),
            k as isize,
            1,
            0.0,
            gx.as_mut_ptr(),
            k as isize,
            1,
        );
    }
}

/// `1 - 2/(e^{2x} + 1)`: within a few ulps of 1 in absolute terms and about
/// three times faster than the libm routine.
#[inline]
fn tanh(x: f64) -> f64 {
    1.0 - 2.0 / ((2.0 * x).exp() + 1.0)
}

fn tanh_forward(a: &[f64], y: &mut [f64], n: usize, ch: &Channels, w: usize) {
    let c = ch.count();
    let d = ch.dim;
    for p in 0..n {
        let base = p * c * w;
        let a_p = &a[base..base + c * w];
        let y_p = &mut y[base..base + c * w];
        for u in 0..w {
            y_p[u] = tanh(a_p[u]);
        }
        if !ch.first {
            continue;
        }
        let (yv, yrest) = y_p.split_at_mut(w);
        for i in 0..d {
            let ai = &a_p[(1 + i) * w..(2 + i) * w];
            let yi = &mut yrest[i * w..(i + 1) * w];
            for u in 0..w {
                yi[u] = (1.0 - yv[u] * yv[u]) * ai[u];
            }
        }
        for (k, &(i, j)) in ch.pairs.iter().enumerate() {
            let ai = &a_p[(1 + i) * w..(2 + i) * w];
            let aj = &a_p[(1 + j) * w..(2 + j) * w];
            let ak = &a_p[(1 + d + k) * w..(2 + d + k) * w];
            let yk = &mut yrest[(d + k) * w..(d + k + 1) * w];
            for u in 0..w {
                let t = yv[u];
                let s = 1.0 - t * t;
                yk[u] = s * ak[u] - 2.0 * t * s * ai[u] * aj[u];
            }
        }
    }
}

fn tanh_backward(a: &[f64], y: &[f64], gy: &[f64], ga: &mut [f64], n: usize, ch: &Channels, w: usize) {
    let c = ch.count();
    let d = ch.dim;
    for p in 0..n {
        let base = p * c * w;
        let a_p = &a[base..base + c * w];
        let yv = &y[base..base + w];
        let gy_p = &gy[base..base + c * w];
        let ga_p = &mut ga[base..base + c * w];
        for u in 0..w {
            let t = yv[u];
            ga_p[u] = (1.0 - t * t) * gy_p[u];
        }
        if !ch.first {
            continue;
        }
        let (gav, garest) = ga_p.split_at_mut(w);
        for i in 0..d {
            let ai = &a_p[(1 + i) * w..(2 + i) * w];
            let gyi = &gy_p[(1 + i) * w..(2 + i) * w];
            let gai = &mut garest[i * w..(i + 1) * w];
            for u in 0..w {
                let t = yv[u];
                let s = 1.0 - t * t;
                let s2 = -2.0 * t * s;
                gai[u] = s * gyi[u];
                gav[u] += s2 * gyi[u] * ai[u];
            }
        }
        for (k, &(i, j)) in ch.pairs.iter().enumerate() {
            let ak = &a_p[(1 + d + k) * w..(2 + d + k) * w];
            let gyk = &gy_p[(1 + d + k) * w..(2 + d + k) * w];
            for u in 0..w {
                let t = yv[u];
                let s = 1.0 - t * t;
                let s2 = -2.0 * t * s;
                let s3 = -2.0 * s * (1.0 - 3.0 * t * t);
                let ai = a_p[(1 + i) * w + u];
                let aj = a_p[(1 + j) * w + u];
                let g = gyk[u];
                garest[(d + k) * w + u] = s * g;
                gav[u] += g * (s2 * ak[u] + s3 * ai * aj);
                garest[i * w + u] += s2 * g * aj;
                garest[j * w + u] += s2 * g * ai;
            }
        }
    }
}
