//! Exhaustive path enumeration, usable only on tiny instances.

use std::collections::HashMap;

use super::collapse_path;
use crate::error::{Error, Result};
use crate::network::FrameMatrix;

pub const MAX_FRAMES: usize = 8;
pub const MAX_SYMBOLS: usize = 4;

/// Probability of every labeling reachable from some path, sorted by
/// labeling.
pub fn brute_force_labelings(probs: &FrameMatrix) -> Result<Vec<(Vec<usize>, f64)>> {
    let (frames, classes) = (probs.frames(), probs.classes());
    if frames > MAX_FRAMES || classes > MAX_SYMBOLS + 1 {
        return Err(Error::TooLarge(format!(
            "{frames} frames x {classes} classes exceeds T <= {MAX_FRAMES}, C <= {MAX_SYMBOLS}"
        )));
    }
    let blank = probs.blank();
    let mut mass: HashMap<Vec<usize>, f64> = HashMap::new();
    let mut path = vec![0usize; frames];
    loop {
        let p: f64 = path.iter().enumerate().map(|(t, &k)| probs.row(t)[k]).product();
        *mass.entry(collapse_path(&path, blank)).or_insert(0.0) += p;
        // Odometer increment over (C+1)^T paths.
        let mut t = frames;
        loop {
            if t == 0 {
                let mut out: Vec<_> = mass.into_iter().collect();
                out.sort_by(|a, b| a.0.cmp(&b.0));
                return Ok(out);
            }
            t -= 1;
            path[t] += 1;
            if path[t] < classes {
                break;
            }
            path[t] = 0;
        }
    }
}

pub fn brute_force_loss(probs: &FrameMatrix, labels: &[usize]) -> Result<f64> {
    let total: f64 = brute_force_labelings(probs)?
        .into_iter()
        .filter(|(l, _)| l == labels)
        .map(|(_, p)| p)
        .sum();
    Ok(-total.ln())
}

/// Most probable labeling; ties resolve to the lexicographically smallest.
pub fn brute_force_best_labeling(probs: &FrameMatrix) -> Result<Vec<usize>> {
    let all = brute_force_labelings(probs)?;
    let mut best = &all[0];
    for cand in &all[1..] {
        if cand.1 > best.1 {
            best = cand;
        }
    }
    Ok(best.0.clone())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_two_frames() {
        let p = FrameMatrix::new(2, 2, vec![0.5; 4]).unwrap();
        let all = brute_force_labelings(&p).unwrap();
        assert_eq!(all, vec![(vec![], 0.25), (vec![0], 0.75)]);
        assert!((brute_force_loss(&p, &[0]).unwrap() + 0.75f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn single_frame_best_is_argmax() {
        let p = FrameMatrix::new(1, 4, vec![0.1, 0.5, 0.15, 0.25]).unwrap();
        assert_eq!(brute_force_best_labeling(&p).unwrap(), vec![1]);
        let p = FrameMatrix::new(1, 3, vec![0.1, 0.2, 0.7]).unwrap();
        assert!(brute_force_best_labeling(&p).unwrap().is_empty());
    }

    #[test]
    fn rejects_large_instances() {
        let p = FrameMatrix::from_logits(9, 3, &[0.0; 27]);
        assert!(matches!(brute_force_labelings(&p), Err(Error::TooLarge(_))));
        let p = FrameMatrix::from_logits(2, 6, &[0.0; 12]);
        assert!(brute_force_labelings(&p).is_err());
    }
}
