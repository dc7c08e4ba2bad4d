//! Small convolutional value network with exact backpropagation.
//!
//! Architecture: `[conv -> relu -> (2x2 max-pool)]*`, flatten, concatenate
//! auxiliary features, `[fc -> relu]*`, then a linear head (optionally a
//! dueling value/advantage head). Parameters live in one flat vector so the
//! optimizer and the file format stay trivial.

use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("invalid network spec: {0}")]
    InvalidSpec(String),
    #[error("batch shape mismatch: {0}")]
    Shape(String),
    #[error("not a parameter file (bad magic)")]
    BadMagic,
    #[error("unsupported parameter file version {0}")]
    UnsupportedVersion(u32),
    #[error("scalar width mismatch: file has {found}-byte values, expected {expected}")]
    ScalarMismatch { expected: u8, found: u8 },
    #[error("parameter file was written for a different network spec")]
    SpecMismatch,
    #[error("layer shape mismatch: file has {found:?}, spec needs {expected:?}")]
    ShapeMismatch {
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("parameter file truncated")]
    Truncated,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvSpec {
    pub channels: usize,
    pub kernel: usize,
    #[serde(default = "one")]
    pub stride: usize,
    #[serde(default = "yes")]
    pub pool: bool,
}

fn one() -> usize {
    1
}

fn yes() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    pub input_channels: usize,
    pub input_height: usize,
    pub input_width: usize,
    pub aux_width: usize,
    pub conv: Vec<ConvSpec>,
    pub fc: Vec<usize>,
    pub output: usize,
    #[serde(default)]
    pub dueling: bool,
}

impl NetworkSpec {
    pub fn validate(&self) -> Result<(), NnError> {
        let bad = |m: &str| Err(NnError::InvalidSpec(m.to_string()));
        if self.output == 0 {
            return bad("output width must be positive");
        }
        if self.input_channels > 0 && (self.input_height == 0 || self.input_width == 0) {
            return bad("image dims must be positive");
        }
        if self.input_channels == 0 && !self.conv.is_empty() {
            return bad("conv layers need image input");
        }
        if self
            .conv
            .iter()
            .any(|c| c.channels == 0 || c.kernel == 0 || c.stride == 0)
        {
            return bad("conv dims must be positive");
        }
        if self.fc.iter().any(|w| *w == 0) {
            return bad("fc widths must be positive");
        }
        if self.dueling && self.output < 2 {
            return bad("dueling head needs at least two outputs");
        }
        if Layout::new(self).feature_width == 0 {
            return bad("network has no inputs");
        }
        Ok(())
    }

    pub fn image_len(&self) -> usize {
        self.input_channels * self.input_height * self.input_width
    }

    /// Stable textual form hashed into parameter files.
    pub fn describe(&self) -> String {
        let conv: Vec<String> = self
            .conv
            .iter()
            .map(|c| {
                format!(
                    "{}x{}s{}{}",
                    c.channels,
                    c.kernel,
                    c.stride,
                    if c.pool { "p" } else { "" }
                )
            })
            .collect();
        format!(
            "in={}x{}x{};aux={};conv=[{}];fc={:?};out={};dueling={}",
            self.input_channels,
            self.input_height,
            self.input_width,
            self.aux_width,
            conv.join(","),
            self.fc,
            self.output,
            self.dueling
        )
    }

    fn hash(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update(self.describe().as_bytes());
        h.finalize().into()
    }
}

#[derive(Clone, Debug)]
struct ConvLayer {
    in_c: usize,
    in_h: usize,
    in_w: usize,
    out_c: usize,
    out_h: usize,
    out_w: usize,
    kernel: usize,
    pool: bool,
    pool_h: usize,
    pool_w: usize,
    w_off: usize,
    b_off: usize,
    /// Input index per (output position, channel, ky, kx); `PAD` outside.
    gather: Vec<u32>,
}

const PAD: u32 = u32::MAX;

impl ConvLayer {
    fn out_len(&self) -> usize {
        self.out_c * self.out_h * self.out_w
    }
}

fn gather_table(
    c: usize,
    h: usize,
    w: usize,
    out_h: usize,
    out_w: usize,
    k: usize,
    stride: usize,
) -> Vec<u32> {
    let pad = ((k - 1) / 2) as i64;
    let mut t = Vec::with_capacity(out_h * out_w * c * k * k);
    for oy in 0..out_h {
        for ox in 0..out_w {
            for ci in 0..c {
                for ky in 0..k {
                    for kx in 0..k {
                        let iy = (oy * stride + ky) as i64 - pad;
                        let ix = (ox * stride + kx) as i64 - pad;
                        if iy < 0 || ix < 0 || iy >= h as i64 || ix >= w as i64 {
                            t.push(PAD);
                        } else {
                            t.push(((ci * h + iy as usize) * w + ix as usize) as u32);
                        }
                    }
                }
            }
        }
    }
    t
}

#[derive(Clone, Debug)]
struct Dense {
    inputs: usize,
    outputs: usize,
    w_off: usize,
    b_off: usize,
}

#[derive(Clone, Debug)]
struct Layout {
    conv: Vec<ConvLayer>,
    fc: Vec<Dense>,
    head: Dense,
    value: Option<Dense>,
    feature_width: usize,
    total: usize,
    blocks: Vec<usize>,
}

impl Layout {
    fn new(spec: &NetworkSpec) -> Self {
        let mut off = 0;
        let mut blocks = Vec::new();
        let mut alloc = |n: usize| {
            let o = off;
            off += n;
            blocks.push(n);
            o
        };
        let (mut c, mut h, mut w) = (spec.input_channels, spec.input_height, spec.input_width);
        let mut conv = Vec::new();
        for cs in &spec.conv {
            let out_h = h.div_ceil(cs.stride);
            let out_w = w.div_ceil(cs.stride);
            let w_off = alloc(cs.channels * c * cs.kernel * cs.kernel);
            let b_off = alloc(cs.channels);
            let (pool_h, pool_w) = if cs.pool {
                (out_h.div_ceil(2), out_w.div_ceil(2))
            } else {
                (out_h, out_w)
            };
            conv.push(ConvLayer {
                in_c: c,
                in_h: h,
                in_w: w,
                out_c: cs.channels,
                out_h,
                out_w,
                kernel: cs.kernel,
                pool: cs.pool,
                pool_h,
                pool_w,
                w_off,
                b_off,
                gather: gather_table(c, h, w, out_h, out_w, cs.kernel, cs.stride),
            });
            c = cs.channels;
            h = pool_h;
            w = pool_w;
        }
        let image_features = if spec.input_channels == 0 {
            0
        } else {
            c * h * w
        };
        let feature_width = image_features + spec.aux_width;
        let mut fc = Vec::new();
        let mut width = feature_width;
        for &n in &spec.fc {
            let w_off = alloc(n * width);
            let b_off = alloc(n);
            fc.push(Dense {
                inputs: width,
                outputs: n,
                w_off,
                b_off,
            });
            width = n;
        }
        let w_off = alloc(spec.output * width);
        let b_off = alloc(spec.output);
        let head = Dense {
            inputs: width,
            outputs: spec.output,
            w_off,
            b_off,
        };
        let value = spec.dueling.then(|| {
            let w_off = alloc(width);
            let b_off = alloc(1);
            Dense {
                inputs: width,
                outputs: 1,
                w_off,
                b_off,
            }
        });
        Layout {
            conv,
            fc,
            head,
            value,
            feature_width,
            total: off,
            blocks,
        }
    }
}

/// Flat parameter (or gradient) vector.
#[derive(Clone, Debug, PartialEq)]
pub struct Parameters<T> {
    pub values: Vec<T>,
}

impl<T: Scalar> Parameters<T> {
    pub fn zeros(len: usize) -> Self {
        Parameters {
            values: vec![T::zero(); len],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn cast<U: Scalar>(&self) -> Parameters<U> {
        Parameters {
            values: self.values.iter().map(|v| U::lit(v.as_f64())).collect(),
        }
    }
}

/// Inputs for `n` samples: images `n x C x H x W` and auxiliary features.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch<T> {
    pub len: usize,
    pub images: Vec<T>,
    pub aux: Vec<T>,
}

impl<T: Scalar> Batch<T> {
    pub fn new() -> Self {
        Batch {
            len: 0,
            images: Vec::new(),
            aux: Vec::new(),
        }
    }

    pub fn push(&mut self, image: &[T], aux: &[T]) {
        self.images.extend_from_slice(image);
        self.aux.extend_from_slice(aux);
        self.len += 1;
    }
}

impl<T: Scalar> Default for Batch<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Activations retained for backpropagation.
#[derive(Clone, Debug)]
pub struct Cache<T> {
    inputs: Batch<T>,
    /// Per sample, per conv layer: post-relu map and pool argmax indices.
    conv_out: Vec<Vec<(Vec<T>, Vec<usize>)>>,
    /// Per sample: input of every dense layer (fc layers then head).
    dense_in: Vec<Vec<Vec<T>>>,
    advantages: Vec<Vec<T>>,
}

impl<T: Scalar> Cache<T> {
    /// ReLU on/off pattern and pool winners; used to detect kinks.
    pub fn pattern(&self) -> Vec<usize> {
        let mut p = Vec::new();
        for sample in &self.conv_out {
            for (act, arg) in sample {
                p.extend(act.iter().map(|v| (*v > T::zero()) as usize));
                p.extend_from_slice(arg);
            }
        }
        for sample in &self.dense_in {
            for layer in sample.iter().skip(1) {
                p.extend(layer.iter().map(|v| (*v > T::zero()) as usize));
            }
        }
        p
    }
}

/// Network architecture plus derived layout; parameters are held separately.
#[derive(Clone, Debug)]
pub struct Network {
    spec: NetworkSpec,
    layout: Layout,
}

impl Network {
    pub fn new(spec: NetworkSpec) -> Result<Self, NnError> {
        spec.validate()?;
        let layout = Layout::new(&spec);
        Ok(Network { spec, layout })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn num_params(&self) -> usize {
        self.layout.total
    }

    /// Fan-in scaled uniform initialization, `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
    pub fn init<T: Scalar>(&self, seed: u64) -> Parameters<T> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = Parameters::zeros(self.layout.total);
        let mut fill = |w_off: usize, wn: usize, b_off: usize, bn: usize, fan_in: usize| {
            let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
            for v in &mut p.values[w_off..w_off + wn] {
                *v = T::lit(rng.gen_range(-bound..bound));
            }
            for v in &mut p.values[b_off..b_off + bn] {
                *v = T::lit(rng.gen_range(-bound..bound));
            }
        };
        for l in &self.layout.conv {
            let fan_in = l.in_c * l.kernel * l.kernel;
            fill(l.w_off, l.out_c * fan_in, l.b_off, l.out_c, fan_in);
        }
        for d in self
            .layout
            .fc
            .iter()
            .chain(std::iter::once(&self.layout.head))
            .chain(self.layout.value.iter())
        {
            fill(d.w_off, d.inputs * d.outputs, d.b_off, d.outputs, d.inputs);
        }
        p
    }

    fn check_batch<T: Scalar>(
        &self,
        params: &Parameters<T>,
        batch: &Batch<T>,
    ) -> Result<(), NnError> {
        if params.len() != self.layout.total {
            return Err(NnError::Shape(format!(
                "expected {} parameters, got {}",
                self.layout.total,
                params.len()
            )));
        }
        if batch.images.len() != batch.len * self.spec.image_len() {
            return Err(NnError::Shape(format!(
                "expected {} image values, got {}",
                batch.len * self.spec.image_len(),
                batch.images.len()
            )));
        }
        if batch.aux.len() != batch.len * self.spec.aux_width {
            return Err(NnError::Shape(format!(
                "expected {} aux values, got {}",
                batch.len * self.spec.aux_width,
                batch.aux.len()
            )));
        }
        Ok(())
    }

    /// Outputs for every sample, `len x output` row-major. Samples are
    /// evaluated independently, so results do not depend on batching.
    pub fn forward<T: Scalar>(
        &self,
        params: &Parameters<T>,
        batch: &Batch<T>,
    ) -> Result<Vec<T>, NnError> {
        self.check_batch(params, batch)?;
        let mut out = Vec::with_capacity(batch.len * self.spec.output);
        for i in 0..batch.len {
            let (o, _) = self.forward_sample(params, batch, i, false);
            out.extend(o);
        }
        Ok(out)
    }

    pub fn forward_cached<T: Scalar>(
        &self,
        params: &Parameters<T>,
        batch: &Batch<T>,
    ) -> Result<(Vec<T>, Cache<T>), NnError> {
        self.check_batch(params, batch)?;
        let mut out = Vec::with_capacity(batch.len * self.spec.output);
        let mut cache = Cache {
            inputs: batch.clone(),
            conv_out: Vec::with_capacity(batch.len),
            dense_in: Vec::with_capacity(batch.len),
            advantages: Vec::with_capacity(batch.len),
        };
        for i in 0..batch.len {
            let (o, c) = self.forward_sample(params, batch, i, true);
            out.extend(o);
            let c = c.expect("cache requested");
            cache.conv_out.push(c.0);
            cache.dense_in.push(c.1);
            cache.advantages.push(c.2);
        }
        Ok((out, cache))
    }

    #[allow(clippy::type_complexity)]
    fn forward_sample<T: Scalar>(
        &self,
        params: &Parameters<T>,
        batch: &Batch<T>,
        i: usize,
        keep: bool,
    ) -> (
        Vec<T>,
        Option<(Vec<(Vec<T>, Vec<usize>)>, Vec<Vec<T>>, Vec<T>)>,
    ) {
        let p = &params.values;
        let il = self.spec.image_len();
        let mut x: Vec<T> = batch.images[i * il..(i + 1) * il].to_vec();
        let mut conv_cache = Vec::new();
        for l in &self.layout.conv {
            let act = conv_forward(l, p, &x);
            if l.pool {
                let (pooled, arg) = max_pool(l, &act);
                if keep {
                    conv_cache.push((act, arg));
                }
                x = pooled;
            } else {
                if keep {
                    conv_cache.push((act.clone(), Vec::new()));
                }
                x = act;
            }
        }
        if self.spec.input_channels == 0 {
            x.clear();
        }
        let aw = self.spec.aux_width;
        x.extend_from_slice(&batch.aux[i * aw..(i + 1) * aw]);
        let mut dense_cache = Vec::new();
        for d in &self.layout.fc {
            let mut y = dense_forward(d, p, &x);
            for v in &mut y {
                *v = v.max(T::zero());
            }
            if keep {
                dense_cache.push(std::mem::replace(&mut x, y));
            } else {
                x = y;
            }
        }
        let adv = dense_forward(&self.layout.head, p, &x);
        let out = match &self.layout.value {
            None => adv.clone(),
            Some(vd) => {
                let v = dense_forward(vd, p, &x)[0];
                let mean = adv.iter().copied().sum::<T>() / T::lit(adv.len() as f64);
                adv.iter().map(|a| v + *a - mean).collect()
            }
        };
        if keep {
            dense_cache.push(x);
            (out, Some((conv_cache, dense_cache, adv)))
        } else {
            (out, None)
        }
    }

    /// Gradient of `sum_i <d_out_i, f(x_i)>` with respect to the parameters.
    /// `d_out` has the same layout as the forward output and already carries
    /// any per-sample weights.
    pub fn backward<T: Scalar>(
        &self,
        params: &Parameters<T>,
        cache: &Cache<T>,
        d_out: &[T],
    ) -> Result<Parameters<T>, NnError> {
        let n = cache.inputs.len;
        if d_out.len() != n * self.spec.output {
            return Err(NnError::Shape(format!(
                "expected {} output gradients, got {}",
                n * self.spec.output,
                d_out.len()
            )));
        }
        let p = &params.values;
        let mut g = Parameters::zeros(self.layout.total);
        let out_w = self.spec.output;
        for i in 0..n {
            let dq = &d_out[i * out_w..(i + 1) * out_w];
            if dq.iter().all(|v| *v == T::zero()) {
                continue;
            }
            let dense_in = &cache.dense_in[i];
            let head_in = dense_in.last().expect("head input");
            let mut dx = vec![T::zero(); head_in.len()];
            match &self.layout.value {
                None => dense_backward(&self.layout.head, p, &mut g.values, head_in, dq, &mut dx),
                Some(vd) => {
                    let dv = dq.iter().copied().sum::<T>();
                    let mean = dv / T::lit(out_w as f64);
                    let da: Vec<T> = dq.iter().map(|d| *d - mean).collect();
                    dense_backward(&self.layout.head, p, &mut g.values, head_in, &da, &mut dx);
                    dense_backward(vd, p, &mut g.values, head_in, &[dv], &mut dx);
                }
            }
            for (li, d) in self.layout.fc.iter().enumerate().rev() {
                // dx is the gradient w.r.t. this layer's relu output
                let relu_out = &dense_in[li + 1];
                let dz: Vec<T> = dx
                    .iter()
                    .zip(relu_out)
                    .map(|(g, a)| if *a > T::zero() { *g } else { T::zero() })
                    .collect();
                let x_in = &dense_in[li];
                let mut dprev = vec![T::zero(); x_in.len()];
                dense_backward(d, p, &mut g.values, x_in, &dz, &mut dprev);
                dx = dprev;
            }
            if self.layout.conv.is_empty() {
                continue;
            }
            // gradient w.r.t. the flattened conv features (aux part dropped)
            let mut dfeat: Vec<T> = dx[..self.layout.feature_width - self.spec.aux_width].to_vec();
            let il = self.spec.image_len();
            let image = &cache.inputs.images[i * il..(i + 1) * il];
            for (ci, l) in self.layout.conv.iter().enumerate().rev() {
                let (act, arg) = &cache.conv_out[i][ci];
                let mut dact = if l.pool {
                    let mut d = vec![T::zero(); l.out_len()];
                    for (k, &src) in arg.iter().enumerate() {
                        d[src] = d[src] + dfeat[k];
                    }
                    d
                } else {
                    dfeat
                };
                for (d, a) in dact.iter_mut().zip(act) {
                    if *a <= T::zero() {
                        *d = T::zero();
                    }
                }
                let input: &[T] = if ci == 0 {
                    image
                } else {
                    let prev = &self.layout.conv[ci - 1];
                    if prev.pool {
                        // recompute the pooled input from cached activations
                        let (pa, parg) = &cache.conv_out[i][ci - 1];
                        let pooled: Vec<T> = parg.iter().map(|&s| pa[s]).collect();
                        dfeat = conv_backward(l, p, &mut g.values, &pooled, &dact, ci > 0);
                        continue;
                    }
                    &cache.conv_out[i][ci - 1].0
                };
                dfeat = conv_backward(l, p, &mut g.values, input, &dact, ci > 0);
            }
        }
        Ok(g)
    }

    pub fn save<T: Scalar>(&self, params: &Parameters<T>, path: &Path) -> Result<(), NnError> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(&self.encode(params)?)?;
        Ok(())
    }

    pub fn load<T: Scalar>(&self, path: &Path) -> Result<Parameters<T>, NnError> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        self.decode(&bytes)
    }

    /// Header: magic, version, scalar width, spec hash, block sizes; then
    /// little-endian values.
    pub fn encode<T: Scalar>(&self, params: &Parameters<T>) -> Result<Vec<u8>, NnError> {
        if params.len() != self.layout.total {
            return Err(NnError::ShapeMismatch {
                expected: vec![self.layout.total],
                found: vec![params.len()],
            });
        }
        let mut out = Vec::with_capacity(64 + params.len() * T::BYTES);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.push(T::TAG);
        out.extend_from_slice(&self.spec.hash());
        out.extend_from_slice(&(self.layout.blocks.len() as u32).to_le_bytes());
        for b in &self.layout.blocks {
            out.extend_from_slice(&(*b as u64).to_le_bytes());
        }
        for v in &params.values {
            v.write_le(&mut out);
        }
        Ok(out)
    }

    pub fn decode<T: Scalar>(&self, bytes: &[u8]) -> Result<Parameters<T>, NnError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(NnError::BadMagic);
        }
        let version = u32::from_le_bytes(r.take(4)?.try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(NnError::UnsupportedVersion(version));
        }
        let tag = r.take(1)?[0];
        if tag != T::TAG {
            return Err(NnError::ScalarMismatch {
                expected: T::TAG,
                found: tag,
            });
        }
        let hash = r.take(32)?;
        let nblocks = u32::from_le_bytes(r.take(4)?.try_into().unwrap()) as usize;
        let mut blocks = Vec::with_capacity(nblocks.min(1024));
        for _ in 0..nblocks {
            blocks.push(u64::from_le_bytes(r.take(8)?.try_into().unwrap()) as usize);
        }
        if blocks != self.layout.blocks {
            return Err(NnError::ShapeMismatch {
                expected: self.layout.blocks.clone(),
                found: blocks,
            });
        }
        if hash != self.spec.hash() {
            return Err(NnError::SpecMismatch);
        }
        let data = r.take(self.layout.total * T::BYTES)?;
        let values = data.chunks_exact(T::BYTES).map(T::read_le).collect();
        Ok(Parameters { values })
    }
}

const MAGIC: &[u8; 8] = b"DIMPARAM";
const FORMAT_VERSION: u32 = 1;

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], NnError> {
        if self.pos + n > self.bytes.len() {
            return Err(NnError::Truncated);
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
}

/// im2col: one row of `in_c * k * k` input values (zero where padded) per
/// output position.
fn im2col<T: Scalar>(l: &ConvLayer, x: &[T]) -> Vec<T> {
    l.gather
        .iter()
        .map(|&i| if i == PAD { T::zero() } else { x[i as usize] })
        .collect()
}

fn conv_forward<T: Scalar>(l: &ConvLayer, p: &[T], x: &[T]) -> Vec<T> {
    let cols = im2col(l, x);
    let span = l.in_c * l.kernel * l.kernel;
    let npos = l.out_h * l.out_w;
    let mut out = vec![T::zero(); l.out_len()];
    for o in 0..l.out_c {
        let w = &p[l.w_off + o * span..l.w_off + (o + 1) * span];
        let b = p[l.b_off + o];
        for (pos, col) in cols.chunks_exact(span).enumerate() {
            out[o * npos + pos] = (b + dot(w, col)).max(T::zero());
        }
    }
    out
}

/// Accumulates weight/bias gradients; returns the input gradient when asked.
fn conv_backward<T: Scalar>(
    l: &ConvLayer,
    p: &[T],
    g: &mut [T],
    x: &[T],
    dz: &[T],
    want_input_grad: bool,
) -> Vec<T> {
    let cols = im2col(l, x);
    let span = l.in_c * l.kernel * l.kernel;
    let npos = l.out_h * l.out_w;
    let mut dcols = if want_input_grad {
        vec![T::zero(); cols.len()]
    } else {
        Vec::new()
    };
    for o in 0..l.out_c {
        let wr = l.w_off + o * span..l.w_off + (o + 1) * span;
        for pos in 0..npos {
            let d = dz[o * npos + pos];
            if d == T::zero() {
                continue;
            }
            g[l.b_off + o] = g[l.b_off + o] + d;
            axpy(d, &cols[pos * span..(pos + 1) * span], &mut g[wr.clone()]);
            if want_input_grad {
                axpy(d, &p[wr.clone()], &mut dcols[pos * span..(pos + 1) * span]);
            }
        }
    }
    let mut dx = if want_input_grad {
        vec![T::zero(); l.in_c * l.in_h * l.in_w]
    } else {
        Vec::new()
    };
    if want_input_grad {
        for (&i, v) in l.gather.iter().zip(&dcols) {
            if i != PAD {
                dx[i as usize] = dx[i as usize] + *v;
            }
        }
    }
    dx
}

/// Dot product with eight independent partial sums (vectorizes; the
/// summation order is fixed, so results stay deterministic).
fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    let mut acc = [T::zero(); 8];
    let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for i in 0..8 {
            acc[i] = acc[i] + x[i] * y[i];
        }
    }
    let mut s = ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7]));
    for (x, y) in ra.iter().zip(rb) {
        s = s + *x * *y;
    }
    s
}

fn axpy<T: Scalar>(a: T, x: &[T], y: &mut [T]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi = *yi + a * *xi;
    }
}

/// 2x2 max-pool, stride 2, partial windows at odd edges.
fn max_pool<T: Scalar>(l: &ConvLayer, x: &[T]) -> (Vec<T>, Vec<usize>) {
    let mut out = Vec::with_capacity(l.out_c * l.pool_h * l.pool_w);
    let mut arg = Vec::with_capacity(out.capacity());
    for c in 0..l.out_c {
        for py in 0..l.pool_h {
            for px in 0..l.pool_w {
                let mut best = usize::MAX;
                for dy in 0..2 {
                    for dx in 0..2 {
                        let (y, x_) = (2 * py + dy, 2 * px + dx);
                        if y < l.out_h && x_ < l.out_w {
                            let idx = (c * l.out_h + y) * l.out_w + x_;
                            if best == usize::MAX || x[idx] > x[best] {
                                best = idx;
                            }
                        }
                    }
                }
                out.push(x[best]);
                arg.push(best);
            }
        }
    }
    (out, arg)
}

fn dense_forward<T: Scalar>(d: &Dense, p: &[T], x: &[T]) -> Vec<T> {
    (0..d.outputs)
        .map(|o| p[d.b_off + o] + dot(&p[d.w_off + o * d.inputs..d.w_off + (o + 1) * d.inputs], x))
        .collect()
}

fn dense_backward<T: Scalar>(d: &Dense, p: &[T], g: &mut [T], x: &[T], dz: &[T], dx: &mut [T]) {
    for (o, &dzo) in dz.iter().enumerate() {
        if dzo == T::zero() {
            continue;
        }
        g[d.b_off + o] = g[d.b_off + o] + dzo;
        let w = d.w_off + o * d.inputs..d.w_off + (o + 1) * d.inputs;
        axpy(dzo, x, &mut g[w.clone()]);
        axpy(dzo, &p[w], dx);
    }
}

/// Adaptive-moment optimizer with bias correction.
#[derive(Clone, Debug)]
pub struct Adam<T> {
    pub learning_rate: T,
    pub beta1: T,
    pub beta2: T,
    pub epsilon: T,
    m: Vec<T>,
    v: Vec<T>,
    step: u64,
}

impl<T: Scalar> Adam<T> {
    pub fn new(num_params: usize, learning_rate: f64) -> Self {
        Adam {
            learning_rate: T::lit(learning_rate),
            beta1: T::lit(0.9),
            beta2: T::lit(0.999),
            epsilon: T::lit(1e-8),
            m: vec![T::zero(); num_params],
            v: vec![T::zero(); num_params],
            step: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, params: &mut Parameters<T>, grads: &Parameters<T>) {
        assert_eq!(params.len(), grads.len(), "gradient shape");
        assert_eq!(params.len(), self.m.len(), "optimizer shape");
        self.step += 1;
        let t = self.step as i32;
        let c1 = T::one() - self.beta1.powi(t);
        let c2 = T::one() - self.beta2.powi(t);
        let (b1, b2) = (self.beta1, self.beta2);
        for i in 0..params.values.len() {
            let g = grads.values[i];
            self.m[i] = b1 * self.m[i] + (T::one() - b1) * g;
            self.v[i] = b2 * self.v[i] + (T::one() - b2) * g * g;
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            params.values[i] =
                params.values[i] - self.learning_rate * mh / (vh.sqrt() + self.epsilon);
        }
    }
}

pub mod check {
    //! Finite-difference gradient check.

    use super::*;

    #[derive(Clone, Debug, PartialEq)]
    pub struct GradCheckReport {
        pub max_relative_error: f64,
        pub checked: usize,
        /// Components skipped because a relu or pool decision flipped inside
        /// the finite-difference step.
        pub skipped_kinks: usize,
    }

    impl GradCheckReport {
        pub fn passes(&self, tolerance: f64) -> bool {
            self.max_relative_error <= tolerance
        }
    }

    /// Weighted squared loss `sum_i w_i (f(x_i) - y_i)^2` summed over outputs.
    pub fn loss(
        net: &Network,
        params: &Parameters<f64>,
        batch: &Batch<f64>,
        targets: &[f64],
        weights: &[f64],
    ) -> f64 {
        let out = net.forward(params, batch).expect("shapes");
        let k = net.spec().output;
        out.iter()
            .enumerate()
            .map(|(j, q)| weights[j / k] * (q - targets[j]).powi(2))
            .sum()
    }

    pub fn loss_gradient(net: &Network, out: &[f64], targets: &[f64], weights: &[f64]) -> Vec<f64> {
        let k = net.spec().output;
        out.iter()
            .enumerate()
            .map(|(j, q)| 2.0 * weights[j / k] * (q - targets[j]))
            .collect()
    }

    /// Compare `analytic` (usually `Network::backward`) against central
    /// differences of the loss at step `h`.
    pub fn compare(
        net: &Network,
        params: &Parameters<f64>,
        batch: &Batch<f64>,
        targets: &[f64],
        weights: &[f64],
        h: f64,
        analytic: &Parameters<f64>,
    ) -> GradCheckReport {
        let mut worst = 0.0f64;
        let mut checked = 0;
        let mut skipped = 0;
        let mut p = params.clone();
        for i in 0..params.len() {
            let orig = p.values[i];
            p.values[i] = orig + h;
            let (_, cp) = net.forward_cached(&p, batch).expect("shapes");
            let lp = loss(net, &p, batch, targets, weights);
            p.values[i] = orig - h;
            let (_, cm) = net.forward_cached(&p, batch).expect("shapes");
            let lm = loss(net, &p, batch, targets, weights);
            p.values[i] = orig;
            if cp.pattern() != cm.pattern() {
                skipped += 1;
                continue;
            }
            let numeric = (lp - lm) / (2.0 * h);
            let a = analytic.values[i];
            let denom = a.abs().max(numeric.abs());
            let rel = if denom < 1e-7 {
                (a - numeric).abs()
            } else {
                (a - numeric).abs() / denom
            };
            worst = worst.max(rel);
            checked += 1;
        }
        GradCheckReport {
            max_relative_error: worst,
            checked,
            skipped_kinks: skipped,
        }
    }

    /// A random architecture small enough to difference exhaustively.
    pub fn random_spec(rng: &mut ChaCha8Rng) -> NetworkSpec {
        loop {
            let input_channels = rng.gen_range(0..=2);
            let conv = if input_channels == 0 {
                Vec::new()
            } else {
                (0..rng.gen_range(0..=2))
                    .map(|_| ConvSpec {
                        channels: rng.gen_range(1..=3),
                        kernel: [1, 3][rng.gen_range(0..2)],
                        stride: rng.gen_range(1..=2),
                        pool: rng.gen_bool(0.5),
                    })
                    .collect()
            };
            let output = rng.gen_range(1..=3);
            let spec = NetworkSpec {
                input_channels,
                input_height: rng.gen_range(1..=5),
                input_width: rng.gen_range(1..=5),
                aux_width: rng.gen_range(0..=3),
                conv,
                fc: (0..rng.gen_range(0..=2))
                    .map(|_| rng.gen_range(1..=5))
                    .collect(),
                output,
                dueling: output > 1 && rng.gen_bool(0.5),
            };
            if spec.validate().is_ok() {
                return spec;
            }
        }
    }

    pub fn random_batch(net: &Network, n: usize, rng: &mut ChaCha8Rng) -> Batch<f64> {
        let mut b = Batch::new();
        for _ in 0..n {
            let img: Vec<f64> = (0..net.spec().image_len())
                .map(|_| rng.gen_range(-1.0..1.0))
                .collect();
            let aux: Vec<f64> = (0..net.spec().aux_width)
                .map(|_| rng.gen_range(-1.0..1.0))
                .collect();
            b.push(&img, &aux);
        }
        b
    }

    /// Full randomized check for one seed: random spec, parameters, batch,
    /// targets and importance weights.
    pub fn gradcheck_seed(seed: u64, h: f64) -> (NetworkSpec, GradCheckReport) {
        gradcheck_seed_with(seed, h, |_| {})
    }

    /// As [`gradcheck_seed`], but `tamper` may alter the analytic gradient
    /// before comparison.
    pub fn gradcheck_seed_with(
        seed: u64,
        h: f64,
        tamper: impl FnOnce(&mut Parameters<f64>),
    ) -> (NetworkSpec, GradCheckReport) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let spec = random_spec(&mut rng);
        let net = Network::new(spec.clone()).expect("valid spec");
        let params: Parameters<f64> = net.init(rng.gen());
        let n = rng.gen_range(1..=3);
        let batch = random_batch(&net, n, &mut rng);
        let targets: Vec<f64> = (0..n * spec.output)
            .map(|_| rng.gen_range(-1.0..1.0))
            .collect();
        let weights: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..2.0)).collect();
        let (out, cache) = net.forward_cached(&params, &batch).expect("shapes");
        let d = loss_gradient(&net, &out, &targets, &weights);
        let mut analytic = net.backward(&params, &cache, &d).expect("shapes");
        tamper(&mut analytic);
        let report = compare(&net, &params, &batch, &targets, &weights, h, &analytic);
        (spec, report)
    }
}
