//! Shallow U-Net with densely connected dilated-convolution blocks.
//!
//! ```text
//! stem 3x3 -> [dense block -> stride-2 conv] x (levels-1) -> dense block
//!          -> [1x1 + upsample, concat skip, 3x3 fuse] x (levels-1) -> 1x1 head
//! ```
//!
//! Level `l` works at width `base_width * 2^l`. A dense block with input
//! width `c` runs one 3x3 convolution per dilation; each sees the block input
//! concatenated with all previous outputs and adds `base_width * 2^l`
//! channels. Every convolution except the head is followed by SiLU.
//!
//! The decoder's up-projection is a 1x1 convolution; since both it and SiLU
//! commute with nearest-neighbour upsampling, it runs at the coarse
//! resolution and its activation is upsampled afterwards.

use super::conv::{upsample2, upsample2_backward, ConvGeom, Scratch};
use super::tensor::{Real, Tensor};
use super::ModelSpec;

#[derive(Debug, Clone, Copy)]
pub(crate) struct Conv {
    pub param: usize,
    pub geom: ConvGeom,
}

#[derive(Debug, Clone)]
pub(crate) struct Level {
    pub width: usize,
    pub dense: Vec<Conv>,
    pub down: Option<Conv>,
}

impl Level {
    fn out_ch(&self) -> usize {
        self.dense.last().map(|c| c.geom.in_ch + c.geom.out_ch).unwrap_or(self.width)
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Decoder {
    pub up: Conv,
    pub fuse: Conv,
}

#[derive(Debug, Clone)]
pub(crate) struct Layout {
    pub stem: Conv,
    pub levels: Vec<Level>,
    /// `decoders[l]` restores level `l` from level `l + 1`.
    pub decoders: Vec<Decoder>,
    pub head: Conv,
    /// (name, shape) of every parameter; weights at even, biases at odd index.
    pub params: Vec<(String, Vec<usize>)>,
}

impl Layout {
    pub fn new(spec: &ModelSpec) -> Layout {
        let mut params = Vec::new();
        let mut conv = |name: String, in_ch, out_ch, kernel, dilation, stride| {
            let geom = ConvGeom { in_ch, out_ch, kernel, dilation, stride };
            let param = params.len();
            params.push((format!("{name}.weight"), vec![out_ch, in_ch, kernel, kernel]));
            params.push((format!("{name}.bias"), vec![out_ch]));
            Conv { param, geom }
        };
        let width = |l: usize| spec.base_width << l;

        let stem = conv("stem".into(), spec.in_channels, width(0), 3, 1, 1);
        let mut levels = Vec::new();
        let mut block_in = width(0);
        for l in 0..spec.n_levels {
            let growth = width(l);
            let mut dense = Vec::new();
            let mut ch = block_in;
            for (i, &d) in spec.dense_block_dilations.iter().enumerate() {
                dense.push(conv(format!("enc{l}.dense{i}"), ch, growth, 3, d, 1));
                ch += growth;
            }
            let down = (l + 1 < spec.n_levels).then(|| {
                block_in = width(l + 1);
                conv(format!("enc{l}.down"), ch, width(l + 1), 3, 1, 2)
            });
            levels.push(Level { width: growth, dense, down });
        }
        let mut decoders = Vec::new();
        let mut below = levels.last().map(Level::out_ch).unwrap_or(width(0));
        for l in (0..spec.n_levels.saturating_sub(1)).rev() {
            let w = width(l);
            let up = conv(format!("dec{l}.up"), below, w, 1, 1, 1);
            let fuse = conv(format!("dec{l}.fuse"), w + levels[l].out_ch(), w, 3, 1, 1);
            decoders.push(Decoder { up, fuse });
            below = w;
        }
        decoders.reverse();
        let head = conv("head".into(), below, spec.n_classes, 1, 1, 1);
        Layout { stem, levels, decoders, head, params }
    }
}

fn sigmoid<T: Real>(z: T) -> T {
    T::one() / (T::one() + (-z).exp())
}

fn silu<T: Real>(z: &[T]) -> Vec<T> {
    z.iter().map(|&v| v * sigmoid(v)).collect()
}

/// `grad *= silu'(z)` elementwise.
fn silu_backward<T: Real>(z: &[T], grad: &mut [T]) {
    for (g, &v) in grad.iter_mut().zip(z) {
        let s = sigmoid(v);
        *g *= s * (T::one() + v * (T::one() - s));
    }
}

/// Intermediate values kept from the forward pass.
pub(crate) struct Trace<T> {
    input: Vec<T>,
    stem_z: Vec<T>,
    /// Per level: block input followed by each dense activation.
    feats: Vec<Vec<T>>,
    dense_z: Vec<Vec<Vec<T>>>,
    down_z: Vec<Vec<T>>,
    /// Per decoder level: coarse input, coarse up pre-activation, concat, fuse pre-activation.
    up_in: Vec<Vec<T>>,
    up_z: Vec<Vec<T>>,
    cat: Vec<Vec<T>>,
    fuse_z: Vec<Vec<T>>,
    /// Input to the head.
    top: Vec<T>,
    pub logits: Vec<T>,
}

fn dims(h: usize, w: usize, level: usize) -> (usize, usize) {
    (h >> level, w >> level)
}

pub(crate) fn forward<T: Real>(layout: &Layout, params: &[Tensor<T>], input: Vec<T>, h: usize, w: usize) -> Trace<T> {
    let weight = |c: &Conv| params[c.param].data.as_slice();
    let bias = |c: &Conv| params[c.param + 1].data.as_slice();
    let mut scratch = Scratch::default();
    let n_levels = layout.levels.len();

    let stem_z = layout.stem.geom.forward(weight(&layout.stem), bias(&layout.stem), &input, h, w, &mut scratch);
    let mut block_input = silu(&stem_z);
    let mut feats = Vec::with_capacity(n_levels);
    let mut dense_z = Vec::with_capacity(n_levels);
    let mut down_z = Vec::new();
    for (l, level) in layout.levels.iter().enumerate() {
        let (lh, lw) = dims(h, w, l);
        let mut buf = block_input;
        let mut zs = Vec::with_capacity(level.dense.len());
        for c in &level.dense {
            let z = c.geom.forward(weight(c), bias(c), &buf, lh, lw, &mut scratch);
            buf.extend(silu(&z));
            zs.push(z);
        }
        block_input = Vec::new();
        if let Some(down) = &level.down {
            let z = down.geom.forward(weight(down), bias(down), &buf, lh, lw, &mut scratch);
            block_input = silu(&z);
            down_z.push(z);
        }
        feats.push(buf);
        dense_z.push(zs);
    }

    let n_dec = layout.decoders.len();
    let mut up_in = vec![Vec::new(); n_dec];
    let mut up_z = vec![Vec::new(); n_dec];
    let mut cat = vec![Vec::new(); n_dec];
    let mut fuse_z = vec![Vec::new(); n_dec];
    let mut below = feats[n_levels - 1].clone();
    for l in (0..n_dec).rev() {
        let dec = &layout.decoders[l];
        let (lh, lw) = dims(h, w, l);
        let z = dec.up.geom.forward(weight(&dec.up), bias(&dec.up), &below, lh / 2, lw / 2, &mut scratch);
        let mut c = upsample2(&silu(&z), dec.up.geom.out_ch, lh / 2, lw / 2);
        c.extend_from_slice(&feats[l]);
        let fz = dec.fuse.geom.forward(weight(&dec.fuse), bias(&dec.fuse), &c, lh, lw, &mut scratch);
        up_in[l] = std::mem::replace(&mut below, silu(&fz));
        up_z[l] = z;
        cat[l] = c;
        fuse_z[l] = fz;
    }
    let logits = layout.head.geom.forward(weight(&layout.head), bias(&layout.head), &below, h, w, &mut scratch);
    Trace { input, stem_z, feats, dense_z, down_z, up_in, up_z, cat, fuse_z, top: below, logits }
}

/// Back-propagates `grad_logits` through the trace, returning parameter
/// gradients aligned with `params`.
pub(crate) fn backward<T: Real>(
    layout: &Layout,
    params: &[Tensor<T>],
    trace: &Trace<T>,
    grad_logits: &[T],
    h: usize,
    w: usize,
) -> Vec<Tensor<T>> {
    let mut grads: Vec<Tensor<T>> = params.iter().map(|p| Tensor::zeros(p.name.clone(), p.shape.clone())).collect();
    let mut scratch = Scratch::default();
    let n_levels = layout.levels.len();

    // Run one conv backward, accumulating into `grads`.
    let mut conv_back = |c: &Conv, input: &[T], lh: usize, lw: usize, g_out: &[T], g_in: Option<&mut [T]>| {
        let (gw, rest) = grads[c.param..].split_at_mut(1);
        c.geom.backward(
            &params[c.param].data,
            input,
            lh,
            lw,
            g_out,
            &mut gw[0].data,
            &mut rest[0].data,
            g_in,
            &mut scratch,
        );
    };

    let mut grad_feats: Vec<Vec<T>> = trace.feats.iter().map(|f| vec![T::zero(); f.len()]).collect();

    let mut grad_top = vec![T::zero(); trace.top.len()];
    conv_back(&layout.head, &trace.top, h, w, grad_logits, Some(&mut grad_top));

    if layout.decoders.is_empty() {
        for (g, &v) in grad_feats[0].iter_mut().zip(&grad_top) {
            *g += v;
        }
    }
    let mut grad_d = grad_top;
    for (l, dec) in layout.decoders.iter().enumerate() {
        let (lh, lw) = dims(h, w, l);
        let mut g_fz = grad_d;
        silu_backward(&trace.fuse_z[l], &mut g_fz);
        let mut g_cat = vec![T::zero(); trace.cat[l].len()];
        conv_back(&dec.fuse, &trace.cat[l], lh, lw, &g_fz, Some(&mut g_cat));
        let up_len = dec.up.geom.out_ch * lh * lw;
        for (g, &v) in grad_feats[l].iter_mut().zip(&g_cat[up_len..]) {
            *g += v;
        }
        let mut g_uz = upsample2_backward(&g_cat[..up_len], dec.up.geom.out_ch, lh / 2, lw / 2);
        silu_backward(&trace.up_z[l], &mut g_uz);
        let mut g_below = vec![T::zero(); trace.up_in[l].len()];
        conv_back(&dec.up, &trace.up_in[l], lh / 2, lw / 2, &g_uz, Some(&mut g_below));
        if l + 1 == n_levels - 1 {
            for (g, &v) in grad_feats[l + 1].iter_mut().zip(&g_below) {
                *g += v;
            }
            grad_d = Vec::new();
        } else {
            grad_d = g_below;
        }
    }

    for l in (0..n_levels).rev() {
        let level = &layout.levels[l];
        let (lh, lw) = dims(h, w, l);
        let px = lh * lw;
        let feats = &trace.feats[l];
        let mut g_feats = std::mem::take(&mut grad_feats[l]);
        for (i, c) in level.dense.iter().enumerate().rev() {
            let in_len = c.geom.in_ch * px;
            let out_len = c.geom.out_ch * px;
            let (g_in, g_out) = g_feats.split_at_mut(in_len);
            let mut g_z = g_out[..out_len].to_vec();
            silu_backward(&trace.dense_z[l][i], &mut g_z);
            conv_back(c, &feats[..in_len], lh, lw, &g_z, Some(g_in));
        }
        let block_in = &g_feats[..level.width * px];
        if l == 0 {
            let mut g_z = block_in.to_vec();
            silu_backward(&trace.stem_z, &mut g_z);
            conv_back(&layout.stem, &trace.input, h, w, &g_z, None);
        } else {
            let down = layout.levels[l - 1].down.as_ref().expect("inner level has a downsampling conv");
            let mut g_z = block_in.to_vec();
            silu_backward(&trace.down_z[l - 1], &mut g_z);
            let (ph, pw) = dims(h, w, l - 1);
            let mut g_prev = std::mem::take(&mut grad_feats[l - 1]);
            conv_back(down, &trace.feats[l - 1], ph, pw, &g_z, Some(&mut g_prev));
            grad_feats[l - 1] = g_prev;
        }
    }
    grads
}
