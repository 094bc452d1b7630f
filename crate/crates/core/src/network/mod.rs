//! The recognizer: three conv blocks collapse a 50×200 image into 25
//! left-to-right frames, two bidirectional recurrent layers read the frames,
//! and a per-frame affine map plus softmax yields class probabilities.
//!
//! Gradients are derived by hand. [`forward_cached`] keeps every activation a
//! backward pass needs; [`backward_from_cache`] walks the stages in reverse.

mod conv;
mod rnn;
mod tensor;

pub use rnn::{rnn_cell_step, CellKind, CellState, RnnDirection};
pub use tensor::Tensor;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imageproc::{NormalizedImage, CANVAS_HEIGHT, CANVAS_WIDTH};
use crate::seed;

/// Frames emitted per image: the canvas width divided by the pooling stride 8.
pub const FRAMES: usize = 25;
pub const RNN_LAYERS: usize = 2;
pub const KERNEL: usize = 3;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub conv_channels: Vec<usize>,
    pub kernel: usize,
    pub cell: CellKind,
    pub hidden: usize,
    pub rnn_layers: usize,
    /// C + 1, blank included.
    pub num_classes: usize,
}

impl NetworkConfig {
    pub fn new(num_classes: usize, cell: CellKind) -> Self {
        Self {
            conv_channels: vec![16, 32, 48],
            kernel: KERNEL,
            cell,
            hidden: 64,
            rnn_layers: RNN_LAYERS,
            num_classes,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.conv_channels.len() != 3 || self.conv_channels.contains(&0) {
            return Err(Error::InvalidArgument(
                "conv_channels must list three positive widths".into(),
            ));
        }
        if self.kernel != KERNEL {
            return Err(Error::InvalidArgument("only 3x3 kernels are supported".into()));
        }
        if self.rnn_layers != RNN_LAYERS {
            return Err(Error::InvalidArgument("the recurrent stack has exactly two layers".into()));
        }
        if self.hidden == 0 || self.num_classes < 2 {
            return Err(Error::InvalidArgument(
                "hidden must be positive and num_classes at least 2".into(),
            ));
        }
        Ok(())
    }

    /// Feature width handed to the recurrent stack.
    pub fn feature_width(&self) -> usize {
        *self.conv_channels.last().expect("validated config")
    }

    /// Spatial size of each conv block: `(height, width)` before pooling.
    pub fn conv_geometry(&self) -> [(usize, usize); 3] {
        let mut dims = [(0, 0); 3];
        let (mut h, mut w) = (CANVAS_HEIGHT, CANVAS_WIDTH);
        for d in &mut dims {
            *d = (h, w);
            h /= 2;
            w /= 2;
        }
        dims
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvLayer {
    /// `[out, in, 3, 3]`
    pub weight: Tensor,
    /// `[out]`
    pub bias: Tensor,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RnnLayer {
    pub forward: RnnDirection,
    pub backward: RnnDirection,
}

/// All trainable arrays. Gradients use the same type.
#[derive(Clone, Debug, PartialEq)]
pub struct Parameters {
    pub cell: CellKind,
    pub convs: Vec<ConvLayer>,
    pub rnn: Vec<RnnLayer>,
    /// `[classes, 2 * hidden]`
    pub proj_weight: Tensor,
    /// `[classes]`
    pub proj_bias: Tensor,
}

/// Parameter-shaped gradient container.
pub type GradientSet = Parameters;

impl Parameters {
    pub fn zeros(config: &NetworkConfig) -> Self {
        let mut convs = Vec::new();
        let mut in_ch = 1;
        for &out_ch in &config.conv_channels {
            convs.push(ConvLayer {
                weight: Tensor::zeros(&[out_ch, in_ch, KERNEL, KERNEL]),
                bias: Tensor::zeros(&[out_ch]),
            });
            in_ch = out_ch;
        }
        let mut rnn = Vec::new();
        let mut input = config.feature_width();
        for _ in 0..config.rnn_layers {
            rnn.push(RnnLayer {
                forward: RnnDirection::zeros(config.cell, input, config.hidden),
                backward: RnnDirection::zeros(config.cell, input, config.hidden),
            });
            input = 2 * config.hidden;
        }
        Self {
            cell: config.cell,
            convs,
            rnn,
            proj_weight: Tensor::zeros(&[config.num_classes, 2 * config.hidden]),
            proj_bias: Tensor::zeros(&[config.num_classes]),
        }
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.arrays_mut().into_iter().for_each(|(_, t)| t.data_mut().fill(0.0));
        z
    }

    pub fn num_classes(&self) -> usize {
        self.proj_bias.len()
    }

    pub fn hidden(&self) -> usize {
        self.rnn[0].forward.hidden()
    }

    /// Every array with a stable dotted name, in a fixed order.
    pub fn arrays(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        for (i, c) in self.convs.iter().enumerate() {
            out.push((format!("conv{i}.weight"), &c.weight));
            out.push((format!("conv{i}.bias"), &c.bias));
        }
        for (i, l) in self.rnn.iter().enumerate() {
            for (dir, p) in [("fwd", &l.forward), ("bwd", &l.backward)] {
                out.push((format!("rnn{i}.{dir}.w_input"), &p.w_input));
                out.push((format!("rnn{i}.{dir}.w_recurrent"), &p.w_recurrent));
                out.push((format!("rnn{i}.{dir}.bias"), &p.bias));
            }
        }
        out.push(("proj.weight".into(), &self.proj_weight));
        out.push(("proj.bias".into(), &self.proj_bias));
        out
    }

    pub fn arrays_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut out = Vec::new();
        for (i, c) in self.convs.iter_mut().enumerate() {
            out.push((format!("conv{i}.weight"), &mut c.weight));
            out.push((format!("conv{i}.bias"), &mut c.bias));
        }
        for (i, l) in self.rnn.iter_mut().enumerate() {
            for (dir, p) in [("fwd", &mut l.forward), ("bwd", &mut l.backward)] {
                out.push((format!("rnn{i}.{dir}.w_input"), &mut p.w_input));
                out.push((format!("rnn{i}.{dir}.w_recurrent"), &mut p.w_recurrent));
                out.push((format!("rnn{i}.{dir}.bias"), &mut p.bias));
            }
        }
        out.push(("proj.weight".into(), &mut self.proj_weight));
        out.push(("proj.bias".into(), &mut self.proj_bias));
        out
    }

    pub fn num_parameters(&self) -> usize {
        self.arrays().iter().map(|(_, t)| t.len()).sum()
    }

    /// Name of the first array holding a NaN or infinity.
    pub fn first_non_finite(&self) -> Option<String> {
        self.arrays()
            .into_iter()
            .find(|(_, t)| !t.is_finite())
            .map(|(n, _)| n)
    }

    /// `self += other`, arrays matched by position.
    pub fn add_assign(&mut self, other: &Parameters) {
        for ((_, a), (_, b)) in self.arrays_mut().into_iter().zip(other.arrays()) {
            for (x, y) in a.data_mut().iter_mut().zip(b.data()) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for (_, t) in self.arrays_mut() {
            t.data_mut().iter_mut().for_each(|v| *v *= factor);
        }
    }
}

fn glorot(rng: &mut impl Rng, t: &mut Tensor, fan_in: usize, fan_out: usize) {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    for v in t.data_mut() {
        *v = rng.random_range(-bound..bound);
    }
}

/// Glorot-uniform weights, zero biases, LSTM forget-gate bias 1.
///
/// Recurrent matrices use per-gate fans (`input → hidden`, `hidden → hidden`).
pub fn init_params(config: &NetworkConfig, seed: u64) -> Result<Parameters> {
    config.validate()?;
    let mut p = Parameters::zeros(config);
    let mut rng = seed::rng(seed::derive(&[seed, 0x1417]));
    for c in &mut p.convs {
        let s = c.weight.shape().to_vec();
        glorot(&mut rng, &mut c.weight, s[1] * 9, s[0] * 9);
    }
    let hd = config.hidden;
    for layer in &mut p.rnn {
        for dir in [&mut layer.forward, &mut layer.backward] {
            let input = dir.input();
            glorot(&mut rng, &mut dir.w_input, input, hd);
            glorot(&mut rng, &mut dir.w_recurrent, hd, hd);
            if config.cell == CellKind::Lstm {
                dir.bias.data_mut()[hd..2 * hd].fill(1.0);
            }
        }
    }
    glorot(&mut rng, &mut p.proj_weight, 2 * hd, config.num_classes);
    Ok(p)
}

/// Per-frame class probabilities, `frames × classes`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameMatrix {
    frames: usize,
    classes: usize,
    probs: Vec<f64>,
}

impl FrameMatrix {
    /// Validates that every row is a probability distribution (±1e-9).
    pub fn new(frames: usize, classes: usize, probs: Vec<f64>) -> Result<Self> {
        if frames == 0 || classes < 2 || probs.len() != frames * classes {
            return Err(Error::Shape(format!(
                "frame matrix {frames}x{classes} with {} values",
                probs.len()
            )));
        }
        for (t, row) in probs.chunks_exact(classes).enumerate() {
            if row.iter().any(|p| !(0.0..=1.0).contains(p)) {
                return Err(Error::InvalidArgument(format!("row {t} has entries outside [0, 1]")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidArgument(format!("row {t} sums to {sum}")));
            }
        }
        Ok(Self {
            frames,
            classes,
            probs,
        })
    }

    /// Row-wise softmax of `logits`.
    pub fn from_logits(frames: usize, classes: usize, logits: &[f64]) -> Self {
        assert_eq!(logits.len(), frames * classes);
        let mut probs = Vec::with_capacity(logits.len());
        for row in logits.chunks_exact(classes) {
            let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let start = probs.len();
            probs.extend(row.iter().map(|v| (v - m).exp()));
            let z: f64 = probs[start..].iter().sum();
            probs[start..].iter_mut().for_each(|p| *p /= z);
        }
        Self {
            frames,
            classes,
            probs,
        }
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    /// Index of the blank class (the last one).
    pub fn blank(&self) -> usize {
        self.classes - 1
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.probs[t * self.classes..(t + 1) * self.classes]
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }
}

/// Activations retained for the backward pass.
pub struct ForwardCache {
    /// Input of each conv block (the normalized image for block 0).
    block_inputs: Vec<Vec<f64>>,
    /// Post-ReLU activations of each block, used as the ReLU mask.
    relu_out: Vec<Vec<f64>>,
    pool_arg: Vec<Vec<u32>>,
    /// Input sequence of each recurrent layer.
    rnn_inputs: Vec<Vec<Vec<f64>>>,
    rnn_caches: Vec<(Vec<rnn::StepCache>, Vec<rnn::StepCache>)>,
    hidden_out: Vec<Vec<f64>>,
    logits: Vec<f64>,
}

impl ForwardCache {
    pub fn logits(&self) -> &[f64] {
        &self.logits
    }
}

fn check_finite(name: &str, values: &[f64]) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(name.to_owned()))
    }
}

fn check_params(params: &Parameters) -> Result<()> {
    if params.convs.len() != 3 || params.rnn.len() != RNN_LAYERS {
        return Err(Error::Shape("parameters do not describe a 3-block, 2-layer network".into()));
    }
    match params.first_non_finite() {
        Some(name) => Err(Error::NonFinite(name)),
        None => Ok(()),
    }
}

fn conv_stage(
    params: &Parameters,
    image: &NormalizedImage,
    mut keep: Option<&mut ForwardCache>,
) -> Result<Vec<Vec<f64>>> {
    let mut x = image.data().to_vec();
    let (mut h, mut w) = (image.height(), image.width());
    let mut in_ch = 1;
    for (i, layer) in params.convs.iter().enumerate() {
        let out_ch = layer.bias.len();
        if layer.weight.shape() != [out_ch, in_ch, KERNEL, KERNEL] {
            return Err(Error::Shape(format!("conv{i}.weight has shape {:?}", layer.weight.shape())));
        }
        let mut z = vec![0.0; out_ch * h * w];
        conv::conv3x3_forward(&x, in_ch, h, w, layer.weight.data(), layer.bias.data(), out_ch, &mut z);
        conv::relu_inplace(&mut z);
        let (pooled, arg) = conv::maxpool2x2(&z, out_ch, h, w);
        check_finite(&format!("conv{i}.output"), &pooled)?;
        if let Some(c) = keep.as_deref_mut() {
            c.block_inputs.push(std::mem::take(&mut x));
            c.relu_out.push(z);
            c.pool_arg.push(arg);
        }
        x = pooled;
        h /= 2;
        w /= 2;
        in_ch = out_ch;
    }
    // Mean over the remaining rows turns each column into one frame.
    debug_assert_eq!(w, FRAMES);
    let feats = (0..w)
        .map(|t| {
            (0..in_ch)
                .map(|c| (0..h).map(|y| x[(c * h + y) * w + t]).sum::<f64>() / h as f64)
                .collect()
        })
        .collect();
    Ok(feats)
}

/// Conv front end: 25 frames of `conv_channels[2]` features, left to right.
pub fn extract_features(params: &Parameters, image: &NormalizedImage) -> Result<Vec<Vec<f64>>> {
    check_params(params)?;
    conv_stage(params, image, None)
}

fn birnn(
    params: &Parameters,
    features: Vec<Vec<f64>>,
    mut keep: Option<&mut ForwardCache>,
) -> Result<Vec<Vec<f64>>> {
    let mut xs = features;
    for (i, layer) in params.rnn.iter().enumerate() {
        if xs.iter().any(|x| x.len() != layer.forward.input()) {
            return Err(Error::Shape(format!("rnn{i} expects {} inputs", layer.forward.input())));
        }
        let (fwd, fc) = rnn::run_direction(params.cell, &layer.forward, &xs, false);
        let (bwd, bc) = rnn::run_direction(params.cell, &layer.backward, &xs, true);
        let ys: Vec<Vec<f64>> = fwd
            .into_iter()
            .zip(bwd)
            .map(|(mut f, b)| {
                f.extend(b);
                f
            })
            .collect();
        check_finite(&format!("rnn{i}.output"), &ys.concat())?;
        if let Some(c) = keep.as_deref_mut() {
            c.rnn_inputs.push(std::mem::take(&mut xs));
            c.rnn_caches.push((fc, bc));
        }
        xs = ys;
    }
    Ok(xs)
}

/// Two bidirectional layers from zero initial state; each frame's output is
/// `[forward ‖ backward]`.
pub fn run_birnn_stack(params: &Parameters, features: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    if params.rnn.len() != RNN_LAYERS {
        return Err(Error::Shape("expected two recurrent layers".into()));
    }
    birnn(params, features.to_vec(), None)
}

fn project(params: &Parameters, hidden: &[Vec<f64>]) -> Result<Vec<f64>> {
    let k = params.num_classes();
    let width = params.proj_weight.shape()[1];
    let mut logits = Vec::with_capacity(hidden.len() * k);
    for hrow in hidden {
        if hrow.len() != width {
            return Err(Error::Shape(format!("projection expects width {width}, got {}", hrow.len())));
        }
        for (row, b) in params
            .proj_weight
            .data()
            .chunks_exact(width)
            .zip(params.proj_bias.data())
        {
            logits.push(b + tensor::dot(row, hrow));
        }
    }
    check_finite("logits", &logits)?;
    Ok(logits)
}

/// Per-frame affine map to C + 1 logits followed by softmax.
pub fn project_and_softmax(params: &Parameters, hidden: &[Vec<f64>]) -> Result<FrameMatrix> {
    let logits = project(params, hidden)?;
    Ok(FrameMatrix::from_logits(hidden.len(), params.num_classes(), &logits))
}

pub fn forward(params: &Parameters, image: &NormalizedImage) -> Result<FrameMatrix> {
    check_params(params)?;
    let feats = conv_stage(params, image, None)?;
    let hidden = birnn(params, feats, None)?;
    project_and_softmax(params, &hidden)
}

/// Forward pass that also returns the activations needed by
/// [`backward_from_cache`].
pub fn forward_cached(params: &Parameters, image: &NormalizedImage) -> Result<(FrameMatrix, ForwardCache)> {
    check_params(params)?;
    let mut cache = ForwardCache {
        block_inputs: Vec::new(),
        relu_out: Vec::new(),
        pool_arg: Vec::new(),
        rnn_inputs: Vec::new(),
        rnn_caches: Vec::new(),
        hidden_out: Vec::new(),
        logits: Vec::new(),
    };
    let feats = conv_stage(params, image, Some(&mut cache))?;
    let hidden = birnn(params, feats, Some(&mut cache))?;
    let logits = project(params, &hidden)?;
    let frames = FrameMatrix::from_logits(hidden.len(), params.num_classes(), &logits);
    cache.hidden_out = hidden;
    cache.logits = logits;
    Ok((frames, cache))
}

/// Gradient of `Σ grad_logits ⊙ logits` with respect to every parameter.
pub fn backward_from_cache(
    params: &Parameters,
    cache: &ForwardCache,
    grad_logits: &[f64],
) -> Result<GradientSet> {
    let k = params.num_classes();
    let t_len = cache.hidden_out.len();
    if grad_logits.len() != t_len * k {
        return Err(Error::Shape(format!(
            "grad_wrt_logits needs {t_len}x{k} values, got {}",
            grad_logits.len()
        )));
    }
    let mut grads = params.zeros_like();

    // Projection.
    let width = params.proj_weight.shape()[1];
    let mut dh: Vec<Vec<f64>> = Vec::with_capacity(t_len);
    for (t, hrow) in cache.hidden_out.iter().enumerate() {
        let g = &grad_logits[t * k..(t + 1) * k];
        let mut d = vec![0.0; width];
        for (j, &gv) in g.iter().enumerate() {
            grads.proj_bias.data_mut()[j] += gv;
            let wrow = &params.proj_weight.data()[j * width..(j + 1) * width];
            let dwrow = &mut grads.proj_weight.data_mut()[j * width..(j + 1) * width];
            for ((dw, x), (dd, w)) in dwrow.iter_mut().zip(hrow).zip(d.iter_mut().zip(wrow)) {
                *dw += gv * x;
                *dd += gv * w;
            }
        }
        dh.push(d);
    }

    // Recurrent stack, top layer first.
    for (i, layer) in params.rnn.iter().enumerate().rev() {
        let hd = layer.forward.hidden();
        let xs = &cache.rnn_inputs[i];
        let (fc, bc) = &cache.rnn_caches[i];
        let d_f: Vec<Vec<f64>> = dh.iter().map(|d| d[..hd].to_vec()).collect();
        let d_b: Vec<Vec<f64>> = dh.iter().map(|d| d[hd..].to_vec()).collect();
        let gl = &mut grads.rnn[i];
        let dx_f = rnn::backward_direction(params.cell, &layer.forward, &mut gl.forward, xs, fc, &d_f, false);
        let dx_b = rnn::backward_direction(params.cell, &layer.backward, &mut gl.backward, xs, bc, &d_b, true);
        dh = dx_f
            .into_iter()
            .zip(dx_b)
            .map(|(a, b)| a.iter().zip(&b).map(|(x, y)| x + y).collect())
            .collect();
    }

    // Height mean, then the conv blocks in reverse.
    let geo = {
        let mut g = Vec::new();
        let (mut h, mut w) = (CANVAS_HEIGHT, CANVAS_WIDTH);
        for _ in 0..3 {
            g.push((h, w));
            h /= 2;
            w /= 2;
        }
        g
    };
    let last_ch = params.convs[2].bias.len();
    let (ph, pw) = (geo[2].0 / 2, geo[2].1 / 2);
    let mut d_pooled = vec![0.0; last_ch * ph * pw];
    for (t, d) in dh.iter().enumerate() {
        for (c, dv) in d.iter().enumerate() {
            for y in 0..ph {
                d_pooled[(c * ph + y) * pw + t] = dv / ph as f64;
            }
        }
    }
    for i in (0..3).rev() {
        let (h, w) = geo[i];
        let layer = &params.convs[i];
        let out_ch = layer.bias.len();
        let in_ch = layer.weight.shape()[1];
        let relu = &cache.relu_out[i];
        let mut dz = vec![0.0; out_ch * h * w];
        for (&idx, &g) in cache.pool_arg[i].iter().zip(&d_pooled) {
            let idx = idx as usize;
            if relu[idx] > 0.0 {
                dz[idx] += g;
            }
        }
        let gl = &mut grads.convs[i];
        let mut dinput = (i > 0).then(|| vec![0.0; in_ch * h * w]);
        conv::conv3x3_backward(
            &cache.block_inputs[i],
            in_ch,
            h,
            w,
            layer.weight.data(),
            out_ch,
            &dz,
            gl.weight.data_mut(),
            gl.bias.data_mut(),
            dinput.as_deref_mut(),
        );
        if let Some(d) = dinput {
            d_pooled = d;
        }
    }

    if let Some(name) = grads.first_non_finite() {
        return Err(Error::NonFinite(format!("gradient of {name}")));
    }
    Ok(grads)
}

/// Exact reverse-mode gradient of `Σ grad_logits ⊙ logits(params, image)`.
pub fn backward(params: &Parameters, image: &NormalizedImage, grad_logits: &[f64]) -> Result<GradientSet> {
    let (_, cache) = forward_cached(params, image)?;
    backward_from_cache(params, &cache, grad_logits)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imageproc::{normalize, GrayImage};

    fn tiny(cell: CellKind) -> NetworkConfig {
        NetworkConfig {
            conv_channels: vec![2, 2, 2],
            kernel: 3,
            cell,
            hidden: 4,
            rnn_layers: 2,
            num_classes: 4,
        }
    }

    fn test_image(offset: usize) -> NormalizedImage {
        let img = GrayImage::from_fn(50, 200, |y, x| {
            let xx = x as isize - offset as isize;
            if (60..140).contains(&xx) && (15..35).contains(&y) && (xx / 7 + y as isize / 5) % 3 == 0 {
                0.0
            } else {
                255.0
            }
        });
        normalize(&img).unwrap()
    }

    #[test]
    fn init_is_deterministic_with_expected_biases() {
        let cfg = NetworkConfig::new(21, CellKind::Lstm);
        let a = init_params(&cfg, 3).unwrap();
        assert_eq!(a, init_params(&cfg, 3).unwrap());
        assert_ne!(a, init_params(&cfg, 4).unwrap());
        for (name, t) in a.arrays() {
            if name.ends_with("bias") {
                if name.starts_with("rnn") {
                    let hd = cfg.hidden;
                    for (k, v) in t.data().iter().enumerate() {
                        let want = if (hd..2 * hd).contains(&k) { 1.0 } else { 0.0 };
                        assert_eq!(*v, want, "{name}[{k}]");
                    }
                } else {
                    assert!(t.data().iter().all(|&v| v == 0.0), "{name}");
                }
            }
        }
        let g = init_params(&NetworkConfig::new(21, CellKind::Gru), 3).unwrap();
        for (name, t) in g.arrays() {
            if name.ends_with("bias") {
                assert!(t.data().iter().all(|&v| v == 0.0), "{name}");
            }
        }
    }

    #[test]
    fn init_weight_mean_within_three_standard_errors() {
        let cfg = NetworkConfig::new(21, CellKind::Gru);
        let p = init_params(&cfg, 0).unwrap();
        let w = &p.rnn[1].forward.w_input;
        assert!(w.len() >= 10_000);
        let n = w.len() as f64;
        let mean = w.data().iter().sum::<f64>() / n;
        let var = w.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!(mean.abs() <= 3.0 * (var / n).sqrt(), "mean {mean}");
    }

    #[test]
    fn zero_network_features_and_uniform_output() {
        let cfg = tiny(CellKind::Gru);
        let p = Parameters::zeros(&cfg);
        let img = test_image(0);
        let feats = extract_features(&p, &img).unwrap();
        assert_eq!(feats.len(), FRAMES);
        assert!(feats.iter().flatten().all(|&v| v == 0.0));
        let hidden = run_birnn_stack(&p, &feats).unwrap();
        assert_eq!(hidden.len(), FRAMES);
        assert!(hidden.iter().flatten().all(|&v| v == 0.0));
        let out = forward(&p, &img).unwrap();
        assert!(out.probs().iter().all(|&v| (v - 0.25).abs() < 1e-15));
    }

    #[test]
    fn translation_by_stride_shifts_frames() {
        let cfg = tiny(CellKind::Gru);
        let p = init_params(&cfg, 5).unwrap();
        let a = extract_features(&p, &test_image(0)).unwrap();
        let b = extract_features(&p, &test_image(8)).unwrap();
        for t in 3..FRAMES - 3 {
            for (x, y) in a[t].iter().zip(&b[t + 1]) {
                assert!((x - y).abs() < 1e-12, "frame {t}");
            }
        }
    }

    #[test]
    fn birnn_direction_symmetry() {
        let cfg = tiny(CellKind::Lstm);
        let mut p = init_params(&cfg, 9).unwrap();
        for l in &mut p.rnn {
            l.backward = l.forward.clone();
        }
        // With tied weights, the second layer must also see mirrored
        // [fwd ‖ bwd] inputs; swap its input halves to keep symmetry.
        let hd = cfg.hidden;
        let l1 = &mut p.rnn[1];
        let permute = |w: &Tensor| {
            let cols = w.shape()[1];
            let mut out = w.clone();
            for (src, dst) in w.data().chunks_exact(cols).zip(out.data_mut().chunks_exact_mut(cols)) {
                dst[..hd].copy_from_slice(&src[hd..]);
                dst[hd..].copy_from_slice(&src[..hd]);
            }
            out
        };
        l1.backward.w_input = permute(&l1.forward.w_input);
        let feats: Vec<Vec<f64>> = (0..FRAMES)
            .map(|t| vec![(t as f64 * 0.3).sin(), (t as f64 * 0.7).cos()])
            .collect();
        let mut rev = feats.clone();
        rev.reverse();
        let out = run_birnn_stack(&p, &feats).unwrap();
        let out_rev = run_birnn_stack(&p, &rev).unwrap();
        for t in 0..FRAMES {
            let a = &out[t];
            let b = &out_rev[FRAMES - 1 - t];
            for k in 0..hd {
                assert!((a[k] - b[hd + k]).abs() < 1e-12);
                assert!((a[hd + k] - b[k]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn softmax_rows_and_shift_invariance() {
        let logits: Vec<f64> = (0..FRAMES * 5).map(|i| (i as f64 * 0.37).sin() * 6.0).collect();
        let a = FrameMatrix::from_logits(FRAMES, 5, &logits);
        for t in 0..FRAMES {
            assert!((a.row(t).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        let mut shifted = logits.clone();
        shifted[..5].iter_mut().for_each(|v| *v += 123.0);
        let b = FrameMatrix::from_logits(FRAMES, 5, &shifted);
        for (x, y) in a.row(0).iter().zip(b.row(0)) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_upstream_gradient_gives_zero_gradients() {
        let cfg = tiny(CellKind::Lstm);
        let p = init_params(&cfg, 1).unwrap();
        let g = backward(&p, &test_image(3), &vec![0.0; FRAMES * 4]).unwrap();
        assert!(g.arrays().iter().all(|(_, t)| t.data().iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn non_finite_parameter_is_named() {
        let cfg = tiny(CellKind::Gru);
        let mut p = init_params(&cfg, 1).unwrap();
        p.rnn[1].backward.bias.data_mut()[0] = f64::NAN;
        match forward(&p, &test_image(0)) {
            Err(Error::NonFinite(name)) => assert_eq!(name, "rnn1.bwd.bias"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let cfg = tiny(CellKind::Gru);
        let p = init_params(&cfg, 1).unwrap();
        assert!(matches!(backward(&p, &test_image(0), &[0.0; 3]), Err(Error::Shape(_))));
    }
}
