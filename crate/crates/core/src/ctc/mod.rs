//! Connectionist temporal classification: loss, gradient, decoders and
//! exhaustive oracles.
//!
//! The blank is always the last class of a [`FrameMatrix`]. All dynamic
//! programming runs in log space.

mod decode;
mod oracle;

pub use decode::{beam_decode, greedy_decode, labeling_log_prob};
pub use oracle::{brute_force_best_labeling, brute_force_labelings, brute_force_loss};

use crate::error::{Error, Result};
use crate::network::FrameMatrix;

/// Blank-interleaved target `∅ l₁ ∅ l₂ … ∅` of length `2L + 1`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExpandedLabel {
    ids: Vec<usize>,
}

impl ExpandedLabel {
    pub fn ids(&self) -> &[usize] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

pub fn expand_label(labels: &[usize], blank: usize) -> Result<ExpandedLabel> {
    if labels.contains(&blank) {
        return Err(Error::BlankInTarget);
    }
    let mut ids = Vec::with_capacity(2 * labels.len() + 1);
    ids.push(blank);
    for &l in labels {
        ids.push(l);
        ids.push(blank);
    }
    Ok(ExpandedLabel { ids })
}

/// Merges adjacent repeats, then drops blanks.
pub fn collapse_path(path: &[usize], blank: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut prev = None;
    for &p in path {
        if Some(p) != prev && p != blank {
            out.push(p);
        }
        prev = Some(p);
    }
    out
}

/// Minimum number of frames that can emit `labels`.
pub fn min_frames(labels: &[usize]) -> usize {
    labels.len() + labels.windows(2).filter(|w| w[0] == w[1]).count()
}

pub fn check_producible(labels: &[usize], frames: usize) -> Result<()> {
    let needed = min_frames(labels);
    if needed > frames {
        return Err(Error::TargetTooLong {
            target_len: labels.len(),
            repeats: needed - labels.len(),
            needed,
            frames,
        });
    }
    Ok(())
}

#[inline]
pub(crate) fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

fn validate(probs: &FrameMatrix, labels: &[usize]) -> Result<ExpandedLabel> {
    let blank = probs.blank();
    if let Some(&bad) = labels.iter().find(|&&l| l > blank) {
        return Err(Error::LabelOutOfRange { id: bad, size: blank });
    }
    let ext = expand_label(labels, blank)?;
    check_producible(labels, probs.frames())?;
    Ok(ext)
}

fn log_probs(probs: &FrameMatrix) -> Vec<f64> {
    probs.probs().iter().map(|p| p.ln()).collect()
}

/// `alpha[t][s]`: log mass of path prefixes ending at frame `t` in state `s`.
fn alpha(lp: &[f64], classes: usize, frames: usize, ext: &[usize]) -> Vec<f64> {
    let s_len = ext.len();
    let mut a = vec![f64::NEG_INFINITY; frames * s_len];
    a[0] = lp[ext[0]];
    if s_len > 1 {
        a[1] = lp[ext[1]];
    }
    for t in 1..frames {
        let (prev, cur) = a.split_at_mut(t * s_len);
        let prev = &prev[(t - 1) * s_len..];
        let row = &lp[t * classes..(t + 1) * classes];
        for s in 0..s_len {
            let mut v = prev[s];
            if s >= 1 {
                v = log_add(v, prev[s - 1]);
            }
            if s >= 2 && ext[s] != ext[s - 2] {
                v = log_add(v, prev[s - 2]);
            }
            cur[s] = v + row[ext[s]];
        }
    }
    a
}

/// `beta[t][s]`: log mass of path suffixes from state `s` at frame `t`,
/// including the emission at `t`.
fn beta(lp: &[f64], classes: usize, frames: usize, ext: &[usize]) -> Vec<f64> {
    let s_len = ext.len();
    let mut b = vec![f64::NEG_INFINITY; frames * s_len];
    let last = (frames - 1) * s_len;
    let row = &lp[(frames - 1) * classes..];
    b[last + s_len - 1] = row[ext[s_len - 1]];
    if s_len > 1 {
        b[last + s_len - 2] = row[ext[s_len - 2]];
    }
    for t in (0..frames - 1).rev() {
        let (cur, next) = b.split_at_mut((t + 1) * s_len);
        let cur = &mut cur[t * s_len..];
        let row = &lp[t * classes..(t + 1) * classes];
        for s in 0..s_len {
            let mut v = next[s];
            if s + 1 < s_len {
                v = log_add(v, next[s + 1]);
            }
            if s + 2 < s_len && ext[s] != ext[s + 2] {
                v = log_add(v, next[s + 2]);
            }
            cur[s] = v + row[ext[s]];
        }
    }
    b
}

fn total_log_prob(a: &[f64], frames: usize, s_len: usize) -> f64 {
    let last = &a[(frames - 1) * s_len..];
    let mut v = last[s_len - 1];
    if s_len > 1 {
        v = log_add(v, last[s_len - 2]);
    }
    v
}

/// `-ln p(labels | probs)`, summed over every alignment.
pub fn ctc_loss(probs: &FrameMatrix, labels: &[usize]) -> Result<f64> {
    let ext = validate(probs, labels)?;
    let lp = log_probs(probs);
    let a = alpha(&lp, probs.classes(), probs.frames(), ext.ids());
    Ok(-total_log_prob(&a, probs.frames(), ext.len()))
}

/// Loss plus its gradient with respect to the pre-softmax logits.
#[derive(Clone, Debug, PartialEq)]
pub struct CtcResult {
    pub loss: f64,
    /// `frames × classes`, row-major.
    pub grad_logits: Vec<f64>,
}

/// `grad[t, k] = probs[t, k] − Σ_{s : ext[s] = k} α_t(s) β_t(s) / (probs[t, k] · p(labels))`.
pub fn ctc_grad(probs: &FrameMatrix, labels: &[usize]) -> Result<CtcResult> {
    let ext = validate(probs, labels)?;
    let (frames, classes) = (probs.frames(), probs.classes());
    let lp = log_probs(probs);
    let ids = ext.ids();
    let s_len = ids.len();
    let a = alpha(&lp, classes, frames, ids);
    let b = beta(&lp, classes, frames, ids);
    let log_p = total_log_prob(&a, frames, s_len);
    if !log_p.is_finite() {
        return Err(Error::NonFinite("ctc log-likelihood".into()));
    }
    let mut grad = probs.probs().to_vec();
    let mut occ = vec![f64::NEG_INFINITY; classes];
    for t in 0..frames {
        occ.fill(f64::NEG_INFINITY);
        for (s, &k) in ids.iter().enumerate() {
            let v = a[t * s_len + s] + b[t * s_len + s];
            occ[k] = log_add(occ[k], v);
        }
        for k in 0..classes {
            if occ[k] > f64::NEG_INFINITY {
                grad[t * classes + k] -= (occ[k] - lp[t * classes + k] - log_p).exp();
            }
        }
    }
    Ok(CtcResult {
        loss: -log_p,
        grad_logits: grad,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::FrameMatrix;

    #[test]
    fn expand_examples() {
        let b = 9;
        assert_eq!(expand_label(&[1], b).unwrap().ids(), &[b, 1, b]);
        assert_eq!(expand_label(&[], b).unwrap().ids(), &[b]);
        assert_eq!(expand_label(&[1, 1], b).unwrap().ids(), &[b, 1, b, 1, b]);
        assert!(matches!(expand_label(&[1, b], b), Err(Error::BlankInTarget)));
    }

    #[test]
    fn collapse_examples() {
        let b = 9;
        assert_eq!(collapse_path(&[b, 1, 1, b, 2], b), vec![1, 2]);
        assert_eq!(collapse_path(&[1, b, 1], b), vec![1, 1]);
        assert!(collapse_path(&[b, b, b], b).is_empty());
    }

    #[test]
    fn two_frame_worked_example() {
        let p = FrameMatrix::new(2, 2, vec![0.5; 4]).unwrap();
        let loss = ctc_loss(&p, &[0]).unwrap();
        assert!((loss - (-(0.75f64).ln())).abs() < 1e-12);
        assert!((loss - 0.287682).abs() < 1e-6);
    }

    #[test]
    fn repeated_target_needs_three_frames() {
        let p = FrameMatrix::new(2, 2, vec![0.5; 4]).unwrap();
        match ctc_loss(&p, &[0, 0]) {
            Err(Error::TargetTooLong { needed: 3, frames: 2, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_target_is_all_blank_path() {
        let rows = [0.2, 0.5, 0.3, 0.6, 0.1, 0.3, 0.25, 0.25, 0.5];
        let p = FrameMatrix::new(3, 3, rows.to_vec()).unwrap();
        let expect = -(0.3f64.ln() + 0.3f64.ln() + 0.5f64.ln());
        assert!((ctc_loss(&p, &[]).unwrap() - expect).abs() < 1e-12);
    }

    #[test]
    fn single_frame_empty_target_gradient() {
        let p = FrameMatrix::new(1, 2, vec![0.5, 0.5]).unwrap();
        let r = ctc_grad(&p, &[]).unwrap();
        assert!((r.grad_logits[0] - 0.5).abs() < 1e-15);
        assert!((r.grad_logits[1] + 0.5).abs() < 1e-15);
    }

    #[test]
    fn grad_rows_sum_to_zero() {
        let logits: Vec<f64> = (0..25 * 6).map(|i| (i as f64 * 0.77).sin() * 3.0).collect();
        let p = FrameMatrix::from_logits(25, 6, &logits);
        let r = ctc_grad(&p, &[0, 1, 1, 4, 2]).unwrap();
        for row in r.grad_logits.chunks(6) {
            assert!(row.iter().sum::<f64>().abs() < 1e-10);
        }
        assert!((r.loss - ctc_loss(&p, &[0, 1, 1, 4, 2]).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn label_out_of_range() {
        let p = FrameMatrix::new(2, 2, vec![0.5; 4]).unwrap();
        assert!(ctc_loss(&p, &[2]).is_err());
        assert!(matches!(ctc_loss(&p, &[1]), Err(Error::BlankInTarget)));
    }
}
