//! Static floating-point operation counts for one forward pass.
//!
//! Conventions: a multiply-add is two operations; an affine map `in → out`
//! costs `2·in·out`; activations, pooling and the row mean cost one
//! operation per output element; a recurrent gate costs an input affine map,
//! a recurrent affine map and one activation per unit.

use serde::{Deserialize, Serialize};

use crate::network::{NetworkConfig, FRAMES};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerFlops {
    pub name: String,
    pub flops: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlopsEstimate {
    pub layers: Vec<LayerFlops>,
    pub total: u64,
}

impl FlopsEstimate {
    pub fn millions(&self) -> f64 {
        self.total as f64 / 1e6
    }

    pub fn layer(&self, name: &str) -> Option<u64> {
        self.layers.iter().find(|l| l.name == name).map(|l| l.flops)
    }
}

/// `2·K_h·K_w·C_in·C_out·H_out·W_out`.
pub fn conv_flops(kernel: usize, in_ch: usize, out_ch: usize, out_h: usize, out_w: usize) -> u64 {
    2 * (kernel * kernel * in_ch * out_ch * out_h * out_w) as u64
}

pub fn affine_flops(input: usize, output: usize) -> u64 {
    2 * (input * output) as u64
}

pub fn estimate_flops(config: &NetworkConfig) -> FlopsEstimate {
    let mut layers = Vec::new();
    let mut push = |name: String, flops: u64| layers.push(LayerFlops { name, flops });

    let mut in_ch = 1;
    let geometry = config.conv_geometry();
    for (i, (&out_ch, &(h, w))) in config.conv_channels.iter().zip(&geometry).enumerate() {
        push(format!("conv{i}"), conv_flops(config.kernel, in_ch, out_ch, h, w));
        push(format!("relu{i}"), (out_ch * h * w) as u64);
        push(format!("pool{i}"), (out_ch * (h / 2) * (w / 2)) as u64);
        in_ch = out_ch;
    }
    push("row_mean".into(), (config.feature_width() * FRAMES) as u64);

    let hd = config.hidden;
    let mut input = config.feature_width();
    for layer in 0..config.rnn_layers {
        let per_gate = affine_flops(input, hd) + affine_flops(hd, hd) + hd as u64;
        let per_step = per_gate * config.cell.gates() as u64;
        push(format!("rnn{layer}"), per_step * 2 * FRAMES as u64);
        input = 2 * hd;
    }
    push("proj".into(), affine_flops(2 * hd, config.num_classes) * FRAMES as u64);
    push("softmax".into(), (config.num_classes * FRAMES) as u64);

    let total = layers.iter().map(|l| l.flops).sum();
    FlopsEstimate { layers, total }
}
