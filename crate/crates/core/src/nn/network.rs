use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::NnError;
use crate::rng::{self, tag};

pub const KERNEL: usize = 3;
const IN_CHANNELS: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvStage {
    pub out_channels: usize,
    pub stride: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkSpec {
    /// Side of the square `3 x S x S` input.
    pub input_size: usize,
    pub stages: Vec<ConvStage>,
}

impl Default for NetworkSpec {
    fn default() -> Self {
        Self::with_widths(32, &[8, 16, 32])
    }
}

impl NetworkSpec {
    /// Stride-2 stages of the given widths.
    pub fn with_widths(input_size: usize, widths: &[usize]) -> Self {
        Self {
            input_size,
            stages: widths
                .iter()
                .map(|&out_channels| ConvStage {
                    out_channels,
                    stride: 2,
                })
                .collect(),
        }
    }

    pub fn validate(&self) -> Result<(), NnError> {
        if self.input_size == 0 || self.stages.is_empty() {
            return Err(NnError::Shape(
                "need a positive input size and at least one stage".into(),
            ));
        }
        if self.stages.iter().any(|s| s.out_channels == 0 || s.stride == 0) {
            return Err(NnError::Shape("stage widths and strides must be positive".into()));
        }
        Ok(())
    }

    pub fn input_len(&self) -> usize {
        IN_CHANNELS * self.input_size * self.input_size
    }

    /// `(channels, side)` of the input and of every stage output.
    pub fn shapes(&self) -> Vec<(usize, usize)> {
        let mut shapes = vec![(IN_CHANNELS, self.input_size)];
        for s in &self.stages {
            let side = shapes.last().unwrap().1;
            shapes.push((s.out_channels, (side - 1) / s.stride + 1));
        }
        shapes
    }

    pub fn layout(&self) -> Layout {
        let shapes = self.shapes();
        let mut offset = 0;
        let mut conv = Vec::with_capacity(self.stages.len());
        for (i, s) in self.stages.iter().enumerate() {
            let fan_in = shapes[i].0 * KERNEL * KERNEL;
            let weights = offset;
            offset += s.out_channels * fan_in;
            let bias = offset;
            offset += s.out_channels;
            conv.push((weights, bias));
        }
        let head_weights = offset;
        offset += shapes.last().unwrap().0;
        Layout {
            conv,
            head_weights,
            head_bias: offset,
            len: offset + 1,
        }
    }

    pub fn param_count(&self) -> usize {
        self.layout().len
    }

    /// Stable identifier of the architecture, stored in checkpoints.
    pub fn fingerprint(&self) -> u64 {
        let mut canon = format!("hullgauge-net:v1;S={}", self.input_size);
        for s in &self.stages {
            canon.push_str(&format!(";{}/{}", s.out_channels, s.stride));
        }
        // FNV-1a
        canon.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
            (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
        })
    }
}

/// Offsets into the flat parameter vector.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Layout {
    /// `(weights, bias)` start offsets per stage; weights are `[out][in][ky][kx]`.
    pub conv: Vec<(usize, usize)>,
    pub head_weights: usize,
    pub head_bias: usize,
    pub len: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NetworkState {
    spec: NetworkSpec,
    layout: Layout,
    params: Vec<f64>,
    init_seed: u64,
    version: u64,
}

impl NetworkState {
    /// Fan-in scaled uniform init: conv weights `U(±sqrt(6 / fan_in))`, head
    /// weights `U(±1 / sqrt(fan_in))`, zero biases.
    pub fn init(spec: NetworkSpec, seed: u64) -> Result<Self, NnError> {
        spec.validate()?;
        let layout = spec.layout();
        let shapes = spec.shapes();
        let mut params = vec![0.0; layout.len];
        let mut r = rng::stream(seed, &[tag::INIT]);
        for (i, &(w, b)) in layout.conv.iter().enumerate() {
            let fan_in = (shapes[i].0 * KERNEL * KERNEL) as f64;
            let bound = (6.0 / fan_in).sqrt();
            for p in &mut params[w..b] {
                *p = r.random_range(-bound..bound);
            }
        }
        let fan_in = shapes.last().unwrap().0 as f64;
        let bound = 1.0 / fan_in.sqrt();
        for p in &mut params[layout.head_weights..layout.head_bias] {
            *p = r.random_range(-bound..bound);
        }
        Ok(Self {
            spec,
            layout,
            params,
            init_seed: seed,
            version: 0,
        })
    }

    pub fn zeros(spec: NetworkSpec) -> Result<Self, NnError> {
        spec.validate()?;
        let layout = spec.layout();
        Ok(Self {
            params: vec![0.0; layout.len],
            spec,
            layout,
            init_seed: 0,
            version: 0,
        })
    }

    pub fn from_params(spec: NetworkSpec, params: Vec<f64>, init_seed: u64) -> Result<Self, NnError> {
        spec.validate()?;
        let layout = spec.layout();
        if params.len() != layout.len {
            return Err(NnError::Shape(format!(
                "{} parameters for an architecture with {}",
                params.len(),
                layout.len
            )));
        }
        Ok(Self {
            spec,
            layout,
            params,
            init_seed,
            version: 0,
        })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    /// Mutable access; invalidates outstanding forward caches.
    pub fn params_mut(&mut self) -> &mut [f64] {
        self.version += 1;
        &mut self.params
    }

    pub fn init_seed(&self) -> u64 {
        self.init_seed
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    fn check_inputs(&self, images: &[&[f64]]) -> Result<(), NnError> {
        let want = self.spec.input_len();
        if let Some((i, bad)) = images.iter().enumerate().find(|(_, x)| x.len() != want) {
            return Err(NnError::Shape(format!(
                "image {i} has {} values, expected {want}",
                bad.len()
            )));
        }
        Ok(())
    }

    /// Scores plus everything backward needs.
    pub fn forward(&self, images: &[&[f64]]) -> Result<(Vec<f64>, ForwardCache), NnError> {
        self.check_inputs(images)?;
        let samples: Vec<SampleCache> = images.par_iter().map(|x| self.forward_one(x)).collect();
        let scores = samples.iter().map(|s| s.score).collect();
        Ok((
            scores,
            ForwardCache {
                version: self.version,
                samples,
            },
        ))
    }

    /// Scores only.
    pub fn predict(&self, images: &[&[f64]]) -> Result<Vec<f64>, NnError> {
        self.check_inputs(images)?;
        Ok(images.par_iter().map(|x| self.forward_one(x).score).collect())
    }

    fn forward_one(&self, input: &[f64]) -> SampleCache {
        let shapes = self.spec.shapes();
        let mut acts: Vec<Vec<f64>> = Vec::with_capacity(shapes.len());
        let mut pre: Vec<Vec<f64>> = Vec::with_capacity(self.spec.stages.len());
        acts.push(input.to_vec());
        for (i, stage) in self.spec.stages.iter().enumerate() {
            let (w, b) = self.layout.conv[i];
            let z = conv_forward(
                &acts[i],
                shapes[i],
                &self.params[w..b],
                &self.params[b..b + stage.out_channels],
                shapes[i + 1],
                stage.stride,
            );
            acts.push(z.iter().map(|&v| v.max(0.0)).collect());
            pre.push(z);
        }
        let (channels, side) = *shapes.last().unwrap();
        let plane = side * side;
        let last = acts.last().unwrap();
        let pooled: Vec<f64> = (0..channels)
            .map(|c| last[c * plane..(c + 1) * plane].iter().sum::<f64>() / plane as f64)
            .collect();
        let head = &self.params[self.layout.head_weights..self.layout.head_bias];
        let score = head.iter().zip(&pooled).map(|(w, p)| w * p).sum::<f64>() + self.params[self.layout.head_bias];
        SampleCache {
            acts,
            pre,
            pooled,
            score,
        }
    }

    /// Gradient of `sum_i dscores[i] * score_i` with respect to every parameter.
    pub fn backward(&self, cache: &ForwardCache, dscores: &[f64]) -> Result<Vec<f64>, NnError> {
        if cache.version != self.version {
            return Err(NnError::StaleCache {
                cache: cache.version,
                current: self.version,
            });
        }
        if dscores.len() != cache.samples.len() {
            return Err(NnError::Shape(format!(
                "{} upstream gradients for a batch of {}",
                dscores.len(),
                cache.samples.len()
            )));
        }
        let per_sample: Vec<Vec<f64>> = cache
            .samples
            .par_iter()
            .zip(dscores.par_iter())
            .map(|(s, &g)| self.backward_one(s, g))
            .collect();
        // Fixed summation order keeps the result independent of scheduling.
        let mut grad = vec![0.0; self.layout.len];
        for g in &per_sample {
            for (acc, v) in grad.iter_mut().zip(g) {
                *acc += v;
            }
        }
        Ok(grad)
    }

    fn backward_one(&self, s: &SampleCache, upstream: f64) -> Vec<f64> {
        let mut grad = vec![0.0; self.layout.len];
        if upstream == 0.0 {
            return grad;
        }
        let shapes = self.spec.shapes();
        let (channels, side) = *shapes.last().unwrap();
        let plane = side * side;
        let lay = &self.layout;
        for c in 0..channels {
            grad[lay.head_weights + c] = upstream * s.pooled[c];
        }
        grad[lay.head_bias] = upstream;

        let mut dact = vec![0.0; channels * plane];
        for c in 0..channels {
            let g = upstream * self.params[lay.head_weights + c] / plane as f64;
            dact[c * plane..(c + 1) * plane].fill(g);
        }
        for i in (0..self.spec.stages.len()).rev() {
            let stage = self.spec.stages[i];
            let dz: Vec<f64> = dact
                .iter()
                .zip(&s.pre[i])
                .map(|(&d, &z)| if z > 0.0 { d } else { 0.0 })
                .collect();
            let (w, b) = lay.conv[i];
            let (gw, rest) = grad[w..].split_at_mut(b - w);
            let gb = &mut rest[..stage.out_channels];
            dact = conv_backward(
                &s.acts[i],
                shapes[i],
                &self.params[w..b],
                &dz,
                shapes[i + 1],
                stage.stride,
                gw,
                gb,
                i > 0,
            );
        }
        grad
    }
}

/// Per-sample intermediate values.
#[derive(Clone, Debug)]
pub struct SampleCache {
    /// Input followed by every post-ReLU stage output.
    pub acts: Vec<Vec<f64>>,
    /// Pre-activation of every stage.
    pub pre: Vec<Vec<f64>>,
    pub pooled: Vec<f64>,
    pub score: f64,
}

#[derive(Clone, Debug)]
pub struct ForwardCache {
    version: u64,
    pub samples: Vec<SampleCache>,
}

/// Patch matrix `[out_pixel][c][ky][kx]` with zero padding of 1.
fn im2col(input: &[f64], (in_c, in_side): (usize, usize), out_side: usize, stride: usize) -> Vec<f64> {
    let k = in_c * KERNEL * KERNEL;
    let mut cols = vec![0.0; out_side * out_side * k];
    for oy in 0..out_side {
        for ox in 0..out_side {
            let patch = &mut cols[(oy * out_side + ox) * k..][..k];
            for c in 0..in_c {
                for ky in 0..KERNEL {
                    let iy = (oy * stride + ky) as isize - 1;
                    if iy < 0 || iy >= in_side as isize {
                        continue;
                    }
                    let row = &input[(c * in_side + iy as usize) * in_side..][..in_side];
                    for kx in 0..KERNEL {
                        let ix = (ox * stride + kx) as isize - 1;
                        if ix >= 0 && ix < in_side as isize {
                            patch[(c * KERNEL + ky) * KERNEL + kx] = row[ix as usize];
                        }
                    }
                }
            }
        }
    }
    cols
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn conv_forward(
    input: &[f64],
    (in_c, in_side): (usize, usize),
    weights: &[f64],
    bias: &[f64],
    (out_c, out_side): (usize, usize),
    stride: usize,
) -> Vec<f64> {
    let k = in_c * KERNEL * KERNEL;
    let out_plane = out_side * out_side;
    let cols = im2col(input, (in_c, in_side), out_side, stride);
    let mut out = vec![0.0; out_c * out_plane];
    for o in 0..out_c {
        let w = &weights[o * k..(o + 1) * k];
        for (p, d) in out[o * out_plane..(o + 1) * out_plane].iter_mut().enumerate() {
            *d = bias[o] + dot(w, &cols[p * k..(p + 1) * k]);
        }
    }
    out
}

/// Accumulates weight and bias gradients; returns the input gradient when
/// `want_input` is set (empty otherwise).
#[allow(clippy::too_many_arguments)]
fn conv_backward(
    input: &[f64],
    (in_c, in_side): (usize, usize),
    weights: &[f64],
    dz: &[f64],
    (out_c, out_side): (usize, usize),
    stride: usize,
    gw: &mut [f64],
    gb: &mut [f64],
    want_input: bool,
) -> Vec<f64> {
    let k = in_c * KERNEL * KERNEL;
    let out_plane = out_side * out_side;
    let cols = im2col(input, (in_c, in_side), out_side, stride);
    for o in 0..out_c {
        let g = &dz[o * out_plane..(o + 1) * out_plane];
        gb[o] += g.iter().sum::<f64>();
        let gwo = &mut gw[o * k..(o + 1) * k];
        for (p, &gv) in g.iter().enumerate() {
            if gv != 0.0 {
                for (acc, x) in gwo.iter_mut().zip(&cols[p * k..(p + 1) * k]) {
                    *acc += gv * x;
                }
            }
        }
    }
    if !want_input {
        return Vec::new();
    }
    let mut dcols = vec![0.0; out_plane * k];
    for o in 0..out_c {
        let w = &weights[o * k..(o + 1) * k];
        for p in 0..out_plane {
            let gv = dz[o * out_plane + p];
            if gv != 0.0 {
                for (d, wv) in dcols[p * k..(p + 1) * k].iter_mut().zip(w) {
                    *d += gv * wv;
                }
            }
        }
    }
    let mut dinput = vec![0.0; in_c * in_side * in_side];
    for oy in 0..out_side {
        for ox in 0..out_side {
            let patch = &dcols[(oy * out_side + ox) * k..][..k];
            for c in 0..in_c {
                for ky in 0..KERNEL {
                    let iy = (oy * stride + ky) as isize - 1;
                    if iy < 0 || iy >= in_side as isize {
                        continue;
                    }
                    for kx in 0..KERNEL {
                        let ix = (ox * stride + kx) as isize - 1;
                        if ix >= 0 && ix < in_side as isize {
                            dinput[(c * in_side + iy as usize) * in_side + ix as usize] +=
                                patch[(c * KERNEL + ky) * KERNEL + kx];
                        }
                    }
                }
            }
        }
    }
    dinput
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_images(n: usize, len: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut r = rng::stream(seed, &[99]);
        (0..n)
            .map(|_| (0..len).map(|_| r.random_range(-0.5..0.5)).collect())
            .collect()
    }

    #[test]
    fn default_shapes_and_count() {
        let spec = NetworkSpec::default();
        assert_eq!(spec.shapes(), vec![(3, 32), (8, 16), (16, 8), (32, 4)]);
        // 8*27+8 + 16*72+16 + 32*144+32 + 32+1
        assert_eq!(spec.param_count(), 224 + 1168 + 4640 + 33);
        let state = NetworkState::init(spec.clone(), 1).unwrap();
        assert_eq!(state.params().len(), spec.param_count());
    }

    #[test]
    fn zero_parameters_score_zero() {
        let state = NetworkState::zeros(NetworkSpec::default()).unwrap();
        let imgs = random_images(3, 3 * 32 * 32, 1);
        let refs: Vec<&[f64]> = imgs.iter().map(|v| v.as_slice()).collect();
        assert_eq!(state.predict(&refs).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn forward_is_deterministic() {
        let state = NetworkState::init(NetworkSpec::default(), 3).unwrap();
        let imgs = random_images(2, 3 * 32 * 32, 2);
        let refs: Vec<&[f64]> = imgs.iter().map(|v| v.as_slice()).collect();
        let a = state.predict(&refs).unwrap();
        let b = state.forward(&refs).unwrap().0;
        assert_eq!(a, b);
    }

    #[test]
    fn wrong_input_size_is_rejected() {
        let state = NetworkState::init(NetworkSpec::default(), 3).unwrap();
        let bad = vec![0.0; 10];
        assert!(matches!(state.predict(&[&bad]), Err(NnError::Shape(_))));
    }

    #[test]
    fn stale_cache_is_detected() {
        let mut state = NetworkState::init(NetworkSpec::with_widths(16, &[4]), 3).unwrap();
        let imgs = random_images(1, 3 * 16 * 16, 2);
        let (_, cache) = state.forward(&[&imgs[0]]).unwrap();
        state.params_mut()[0] += 1.0;
        assert!(matches!(
            state.backward(&cache, &[1.0]),
            Err(NnError::StaleCache { .. })
        ));
    }

    #[test]
    fn zero_upstream_gives_zero_gradient() {
        let state = NetworkState::init(NetworkSpec::with_widths(16, &[4, 8]), 3).unwrap();
        let imgs = random_images(2, 3 * 16 * 16, 2);
        let refs: Vec<&[f64]> = imgs.iter().map(|v| v.as_slice()).collect();
        let (_, cache) = state.forward(&refs).unwrap();
        let g = state.backward(&cache, &[0.0, 0.0]).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn duplicated_sample_doubles_gradient() {
        let state = NetworkState::init(NetworkSpec::with_widths(16, &[4, 8]), 5).unwrap();
        let imgs = random_images(1, 3 * 16 * 16, 8);
        let (_, one) = state.forward(&[&imgs[0]]).unwrap();
        let (_, two) = state.forward(&[&imgs[0], &imgs[0]]).unwrap();
        let g1 = state.backward(&one, &[1.0]).unwrap();
        let g2 = state.backward(&two, &[1.0, 1.0]).unwrap();
        for (a, b) in g1.iter().zip(&g2) {
            assert_eq!(2.0 * a, *b);
        }
    }

    #[test]
    fn fingerprint_distinguishes_architectures() {
        let a = NetworkSpec::default().fingerprint();
        let b = NetworkSpec::with_widths(32, &[6, 12, 24]).fingerprint();
        assert_ne!(a, b);
        assert_eq!(a, NetworkSpec::default().fingerprint());
    }
}
