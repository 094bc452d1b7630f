use crate::error::{Error, Result};
use crate::network::{GradientSet, Parameters};

/// First and second moment estimates plus the step counter.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Parameters,
    pub v: Parameters,
    pub step: u64,
}

impl AdamState {
    pub fn new(params: &Parameters) -> Self {
        Self {
            m: params.zeros_like(),
            v: params.zeros_like(),
            step: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamHyper {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

fn check_congruent(a: &Parameters, b: &Parameters, what: &str) -> Result<()> {
    let (x, y) = (a.arrays(), b.arrays());
    if x.len() != y.len() {
        return Err(Error::Shape(format!("{what}: {} arrays vs {}", y.len(), x.len())));
    }
    for ((name, s), (_, t)) in x.iter().zip(&y) {
        if s.shape() != t.shape() {
            return Err(Error::Shape(format!(
                "{what} {name}: shape {:?} vs {:?}",
                t.shape(),
                s.shape()
            )));
        }
    }
    Ok(())
}

/// One bias-corrected Adam update, in place.
pub fn adam_step(
    params: &mut Parameters,
    grads: &GradientSet,
    state: &mut AdamState,
    hyper: &AdamHyper,
) -> Result<()> {
    check_congruent(params, grads, "gradient")?;
    check_congruent(params, &state.m, "first moment")?;
    check_congruent(params, &state.v, "second moment")?;
    if let Some(name) = grads.first_non_finite() {
        return Err(Error::NonFinite(format!("gradient of {name}")));
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - hyper.beta1.powi(t);
    let c2 = 1.0 - hyper.beta2.powi(t);
    let g_arrays = grads.arrays();
    let mut m_arrays = state.m.arrays_mut();
    let mut v_arrays = state.v.arrays_mut();
    for (i, (_, p)) in params.arrays_mut().into_iter().enumerate() {
        let g = g_arrays[i].1.data();
        let m = m_arrays[i].1.data_mut();
        let v = v_arrays[i].1.data_mut();
        for (j, w) in p.data_mut().iter_mut().enumerate() {
            m[j] = hyper.beta1 * m[j] + (1.0 - hyper.beta1) * g[j];
            v[j] = hyper.beta2 * v[j] + (1.0 - hyper.beta2) * g[j] * g[j];
            let m_hat = m[j] / c1;
            let v_hat = v[j] / c2;
            *w -= hyper.learning_rate * m_hat / (v_hat.sqrt() + hyper.epsilon);
        }
    }
    Ok(())
}
