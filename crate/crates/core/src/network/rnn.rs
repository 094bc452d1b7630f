//! LSTM and GRU cells and the bidirectional layer built from them.
//!
//! Gate rows are stacked in the weight matrices: LSTM uses `[i, f, g, o]`,
//! GRU uses `[z, r, c]`. The GRU candidate sees `r ⊙ h` through its
//! recurrent block.

use serde::{Deserialize, Serialize};

use super::tensor::{dot, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellKind {
    Lstm,
    Gru,
}

impl CellKind {
    pub fn gates(self) -> usize {
        match self {
            CellKind::Lstm => 4,
            CellKind::Gru => 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            CellKind::Lstm => "lstm",
            CellKind::Gru => "gru",
        }
    }
}

impl std::str::FromStr for CellKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "lstm" => Ok(CellKind::Lstm),
            "gru" => Ok(CellKind::Gru),
            other => Err(format!("unknown cell type {other:?}")),
        }
    }
}

impl std::fmt::Display for CellKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Weights of one recurrent direction.
#[derive(Clone, Debug, PartialEq)]
pub struct RnnDirection {
    /// `[gates * hidden, input]`
    pub w_input: Tensor,
    /// `[gates * hidden, hidden]`
    pub w_recurrent: Tensor,
    /// `[gates * hidden]`
    pub bias: Tensor,
}

impl RnnDirection {
    pub fn zeros(cell: CellKind, input: usize, hidden: usize) -> Self {
        let rows = cell.gates() * hidden;
        Self {
            w_input: Tensor::zeros(&[rows, input]),
            w_recurrent: Tensor::zeros(&[rows, hidden]),
            bias: Tensor::zeros(&[rows]),
        }
    }

    pub fn hidden(&self) -> usize {
        self.w_recurrent.shape()[1]
    }

    pub fn input(&self) -> usize {
        self.w_input.shape()[1]
    }
}

/// Recurrent state; `c` is empty for GRU cells.
#[derive(Clone, Debug, PartialEq)]
pub struct CellState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

impl CellState {
    pub fn zeros(cell: CellKind, hidden: usize) -> Self {
        Self {
            h: vec![0.0; hidden],
            c: match cell {
                CellKind::Lstm => vec![0.0; hidden],
                CellKind::Gru => Vec::new(),
            },
        }
    }
}

#[inline]
pub(crate) fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `out += W x` for row-major `W: rows × cols`.
#[inline]
fn matvec_acc(w: &[f64], cols: usize, x: &[f64], out: &mut [f64]) {
    for (o, row) in out.iter_mut().zip(w.chunks_exact(cols)) {
        *o += dot(row, x);
    }
}

/// `out += Wᵀ g`.
#[inline]
fn matvec_t_acc(w: &[f64], cols: usize, g: &[f64], out: &mut [f64]) {
    for (gv, row) in g.iter().zip(w.chunks_exact(cols)) {
        if *gv != 0.0 {
            for (o, a) in out.iter_mut().zip(row) {
                *o += gv * a;
            }
        }
    }
}

/// `dW += g xᵀ`.
#[inline]
fn outer_acc(dw: &mut [f64], cols: usize, g: &[f64], x: &[f64]) {
    for (gv, row) in g.iter().zip(dw.chunks_exact_mut(cols)) {
        if *gv != 0.0 {
            for (d, xv) in row.iter_mut().zip(x) {
                *d += gv * xv;
            }
        }
    }
}

/// What one step needs for its backward pass.
#[derive(Clone, Debug)]
pub(crate) struct StepCache {
    h_prev: Vec<f64>,
    c_prev: Vec<f64>,
    /// Post-activation gate values, stacked like the weight rows.
    gates: Vec<f64>,
    /// LSTM: tanh of the new cell state. GRU: `r ⊙ h_prev`.
    aux: Vec<f64>,
}

pub(crate) fn step_forward(
    cell: CellKind,
    p: &RnnDirection,
    x: &[f64],
    state: &CellState,
) -> (CellState, StepCache) {
    let hd = p.hidden();
    let ind = p.input();
    let wi = p.w_input.data();
    let wr = p.w_recurrent.data();
    let mut pre = p.bias.data().to_vec();
    matvec_acc(wi, ind, x, &mut pre);
    match cell {
        CellKind::Lstm => {
            matvec_acc(wr, hd, &state.h, &mut pre);
            let mut gates = pre;
            for (k, v) in gates.iter_mut().enumerate() {
                *v = if k / hd == 2 { v.tanh() } else { logistic(*v) };
            }
            let (i, rest) = gates.split_at(hd);
            let (f, rest) = rest.split_at(hd);
            let (g, o) = rest.split_at(hd);
            let c: Vec<f64> = (0..hd).map(|k| f[k] * state.c[k] + i[k] * g[k]).collect();
            let tanh_c: Vec<f64> = c.iter().map(|v| v.tanh()).collect();
            let h: Vec<f64> = (0..hd).map(|k| o[k] * tanh_c[k]).collect();
            let cache = StepCache {
                h_prev: state.h.clone(),
                c_prev: state.c.clone(),
                gates,
                aux: tanh_c,
            };
            (CellState { h, c }, cache)
        }
        CellKind::Gru => {
            // z and r see h directly; the candidate sees r ⊙ h.
            matvec_acc(&wr[..2 * hd * hd], hd, &state.h, &mut pre[..2 * hd]);
            let mut gates = pre;
            for v in &mut gates[..2 * hd] {
                *v = logistic(*v);
            }
            let rh: Vec<f64> = (0..hd).map(|k| gates[hd + k] * state.h[k]).collect();
            matvec_acc(&wr[2 * hd * hd..], hd, &rh, &mut gates[2 * hd..]);
            for v in &mut gates[2 * hd..] {
                *v = v.tanh();
            }
            let h: Vec<f64> = (0..hd)
                .map(|k| {
                    let z = gates[k];
                    (1.0 - z) * state.h[k] + z * gates[2 * hd + k]
                })
                .collect();
            let cache = StepCache {
                h_prev: state.h.clone(),
                c_prev: Vec::new(),
                gates,
                aux: rh,
            };
            (CellState { h, c: Vec::new() }, cache)
        }
    }
}

/// Backward through one step. `dh`/`dc` are gradients w.r.t. the new state;
/// returns gradients w.r.t. `(x, h_prev, c_prev)` and accumulates weights.
pub(crate) fn step_backward(
    cell: CellKind,
    p: &RnnDirection,
    grad: &mut RnnDirection,
    x: &[f64],
    cache: &StepCache,
    dh: &[f64],
    dc: &[f64],
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let hd = p.hidden();
    let ind = p.input();
    let g = &cache.gates;
    let mut da = vec![0.0; cell.gates() * hd];
    let mut dh_prev = vec![0.0; hd];
    let mut dc_prev = Vec::new();
    let wr = p.w_recurrent.data();
    match cell {
        CellKind::Lstm => {
            dc_prev = vec![0.0; hd];
            for k in 0..hd {
                let (i, f, cand, o) = (g[k], g[hd + k], g[2 * hd + k], g[3 * hd + k]);
                let tc = cache.aux[k];
                let dck = dc[k] + dh[k] * o * (1.0 - tc * tc);
                da[k] = dck * cand * i * (1.0 - i);
                da[hd + k] = dck * cache.c_prev[k] * f * (1.0 - f);
                da[2 * hd + k] = dck * i * (1.0 - cand * cand);
                da[3 * hd + k] = dh[k] * tc * o * (1.0 - o);
                dc_prev[k] = dck * f;
            }
            matvec_t_acc(wr, hd, &da, &mut dh_prev);
            outer_acc(grad.w_recurrent.data_mut(), hd, &da, &cache.h_prev);
        }
        CellKind::Gru => {
            let mut d_rh = vec![0.0; hd];
            for k in 0..hd {
                let (z, cand) = (g[k], g[2 * hd + k]);
                dh_prev[k] += dh[k] * (1.0 - z);
                da[k] = dh[k] * (cand - cache.h_prev[k]) * z * (1.0 - z);
                da[2 * hd + k] = dh[k] * z * (1.0 - cand * cand);
            }
            matvec_t_acc(&wr[2 * hd * hd..], hd, &da[2 * hd..], &mut d_rh);
            for k in 0..hd {
                let r = g[hd + k];
                da[hd + k] = d_rh[k] * cache.h_prev[k] * r * (1.0 - r);
                dh_prev[k] += d_rh[k] * r;
            }
            matvec_t_acc(&wr[..2 * hd * hd], hd, &da[..2 * hd], &mut dh_prev);
            let dwr = grad.w_recurrent.data_mut();
            outer_acc(&mut dwr[..2 * hd * hd], hd, &da[..2 * hd], &cache.h_prev);
            outer_acc(&mut dwr[2 * hd * hd..], hd, &da[2 * hd..], &cache.aux);
        }
    }
    let mut dx = vec![0.0; ind];
    matvec_t_acc(p.w_input.data(), ind, &da, &mut dx);
    outer_acc(grad.w_input.data_mut(), ind, &da, x);
    for (b, d) in grad.bias.data_mut().iter_mut().zip(&da) {
        *b += d;
    }
    (dx, dh_prev, dc_prev)
}

/// One cell update without caching.
pub fn rnn_cell_step(cell: CellKind, params: &RnnDirection, x: &[f64], state: &CellState) -> CellState {
    assert_eq!(x.len(), params.input(), "input width mismatch");
    assert_eq!(state.h.len(), params.hidden(), "state width mismatch");
    step_forward(cell, params, x, state).0
}

/// Runs one direction over `xs`; `reverse` processes time backwards but
/// returns outputs indexed by original time.
pub(crate) fn run_direction(
    cell: CellKind,
    p: &RnnDirection,
    xs: &[Vec<f64>],
    reverse: bool,
) -> (Vec<Vec<f64>>, Vec<StepCache>) {
    let t_len = xs.len();
    let mut state = CellState::zeros(cell, p.hidden());
    let mut outs = vec![Vec::new(); t_len];
    let mut caches = Vec::with_capacity(t_len);
    for s in 0..t_len {
        let t = if reverse { t_len - 1 - s } else { s };
        let (next, cache) = step_forward(cell, p, &xs[t], &state);
        outs[t] = next.h.clone();
        caches.push(cache);
        state = next;
    }
    (outs, caches)
}

/// Backward through a whole direction; `dys` is indexed by original time.
pub(crate) fn backward_direction(
    cell: CellKind,
    p: &RnnDirection,
    grad: &mut RnnDirection,
    xs: &[Vec<f64>],
    caches: &[StepCache],
    dys: &[Vec<f64>],
    reverse: bool,
) -> Vec<Vec<f64>> {
    let t_len = xs.len();
    let hd = p.hidden();
    let mut dxs = vec![Vec::new(); t_len];
    let mut dh_next = vec![0.0; hd];
    let mut dc_next = match cell {
        CellKind::Lstm => vec![0.0; hd],
        CellKind::Gru => Vec::new(),
    };
    for s in (0..t_len).rev() {
        let t = if reverse { t_len - 1 - s } else { s };
        let dh: Vec<f64> = dys[t].iter().zip(&dh_next).map(|(a, b)| a + b).collect();
        let (dx, dh_prev, dc_prev) =
            step_backward(cell, p, grad, &xs[t], &caches[s], &dh, &dc_next);
        dxs[t] = dx;
        dh_next = dh_prev;
        dc_next = dc_prev;
    }
    dxs
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gru_zero_weights_gives_zero_state() {
        let p = RnnDirection::zeros(CellKind::Gru, 3, 4);
        let s = rnn_cell_step(CellKind::Gru, &p, &[0.3, -2.0, 5.0], &CellState::zeros(CellKind::Gru, 4));
        assert_eq!(s.h, vec![0.0; 4]);
    }

    #[test]
    fn lstm_forget_bias_hand_evaluation() {
        let hd = 3;
        let mut p = RnnDirection::zeros(CellKind::Lstm, 2, hd);
        for k in hd..2 * hd {
            p.bias.data_mut()[k] = 1.0;
        }
        let v = [0.5, -1.5, 2.0];
        let state = CellState {
            h: vec![0.0; hd],
            c: v.to_vec(),
        };
        let out = rnn_cell_step(CellKind::Lstm, &p, &[0.0, 0.0], &state);
        let sig1 = 1.0 / (1.0 + (-1.0f64).exp());
        for k in 0..hd {
            let c = sig1 * v[k];
            assert!((out.c[k] - c).abs() < 1e-15);
            assert!((out.h[k] - 0.5 * c.tanh()).abs() < 1e-15);
        }
    }

    #[test]
    fn gate_ranges() {
        let mut p = RnnDirection::zeros(CellKind::Lstm, 2, 3);
        for (i, v) in p.w_input.data_mut().iter_mut().enumerate() {
            *v = (i as f64 * 1.7).sin() * 4.0;
        }
        let (_, cache) = step_forward(CellKind::Lstm, &p, &[3.0, -2.0], &CellState::zeros(CellKind::Lstm, 3));
        for (k, g) in cache.gates.iter().enumerate() {
            if k / 3 == 2 {
                assert!(*g > -1.0 && *g < 1.0);
            } else {
                assert!(*g > 0.0 && *g < 1.0);
            }
        }
    }
}
