use std::collections::HashMap;

use super::{collapse_path, ctc_loss, log_add};
use crate::network::FrameMatrix;

/// Per-frame argmax (ties to the lowest class id), then collapse.
pub fn greedy_decode(probs: &FrameMatrix) -> Vec<usize> {
    let path: Vec<usize> = (0..probs.frames())
        .map(|t| {
            let row = probs.row(t);
            let mut best = 0;
            for (k, &p) in row.iter().enumerate().skip(1) {
                if p > row[best] {
                    best = k;
                }
            }
            best
        })
        .collect();
    collapse_path(&path, probs.blank())
}

/// Exact `ln p(labels | probs)`; `-inf` when the labeling cannot be produced.
pub fn labeling_log_prob(probs: &FrameMatrix, labels: &[usize]) -> f64 {
    ctc_loss(probs, labels).map_or(f64::NEG_INFINITY, |l| -l)
}

#[derive(Clone, Copy)]
struct Beam {
    /// Log mass of paths ending in blank.
    blank: f64,
    /// Log mass of paths ending in the prefix's last label.
    label: f64,
}

impl Beam {
    const EMPTY: Beam = Beam {
        blank: f64::NEG_INFINITY,
        label: f64::NEG_INFINITY,
    };

    fn total(self) -> f64 {
        log_add(self.blank, self.label)
    }
}

/// Prefix beam search without a language model.
///
/// Surviving prefixes, plus the greedy labeling, are rescored with the exact
/// CTC forward pass and the most probable one is returned; on ties the greedy
/// labeling wins, then the lexicographically smallest prefix.
pub fn beam_decode(probs: &FrameMatrix, beam_width: usize) -> Vec<usize> {
    let width = beam_width.max(1);
    let blank = probs.blank();
    let mut beams: Vec<(Vec<usize>, Beam)> = vec![(
        Vec::new(),
        Beam {
            blank: 0.0,
            label: f64::NEG_INFINITY,
        },
    )];
    for t in 0..probs.frames() {
        let lp: Vec<f64> = probs.row(t).iter().map(|p| p.ln()).collect();
        let mut next: HashMap<Vec<usize>, Beam> = HashMap::new();
        for (prefix, beam) in &beams {
            let total = beam.total();
            {
                let e = next.entry(prefix.clone()).or_insert(Beam::EMPTY);
                e.blank = log_add(e.blank, total + lp[blank]);
            }
            let last = prefix.last().copied();
            for (c, &lpc) in lp.iter().enumerate() {
                if c == blank || lpc == f64::NEG_INFINITY {
                    continue;
                }
                let mut extended = prefix.clone();
                extended.push(c);
                if Some(c) == last {
                    // Repeat without a blank collapses into the same prefix.
                    let e = next.entry(prefix.clone()).or_insert(Beam::EMPTY);
                    e.label = log_add(e.label, beam.label + lpc);
                    let e = next.entry(extended).or_insert(Beam::EMPTY);
                    e.label = log_add(e.label, beam.blank + lpc);
                } else {
                    let e = next.entry(extended).or_insert(Beam::EMPTY);
                    e.label = log_add(e.label, total + lpc);
                }
            }
        }
        let mut ranked: Vec<(Vec<usize>, Beam)> = next.into_iter().collect();
        ranked.sort_by(|a, b| {
            b.1.total()
                .partial_cmp(&a.1.total())
                .unwrap_or(std::cmp::Ordering::Equal)
                .then_with(|| a.0.cmp(&b.0))
        });
        ranked.truncate(width);
        beams = ranked;
    }

    let greedy = greedy_decode(probs);
    let mut rest: Vec<Vec<usize>> = beams
        .into_iter()
        .map(|(p, _)| p)
        .filter(|p| *p != greedy)
        .collect();
    rest.sort();
    let mut candidates = vec![greedy];
    candidates.extend(rest);
    let mut best = candidates[0].clone();
    let mut best_lp = labeling_log_prob(probs, &best);
    for cand in &candidates[1..] {
        let lp = labeling_log_prob(probs, cand);
        if lp > best_lp {
            best_lp = lp;
            best = cand.clone();
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_hot_frames(path: &[usize], classes: usize) -> FrameMatrix {
        let mut probs = Vec::new();
        for &k in path {
            for c in 0..classes {
                probs.push(if c == k { 0.9 } else { 0.1 / (classes - 1) as f64 });
            }
        }
        FrameMatrix::new(path.len(), classes, probs).unwrap()
    }

    #[test]
    fn greedy_examples() {
        // classes a=0, b=1, blank=2
        assert_eq!(greedy_decode(&one_hot_frames(&[0, 0, 2, 1, 1], 3)), vec![0, 1]);
        assert!(greedy_decode(&one_hot_frames(&[2, 2, 2], 3)).is_empty());
        assert_eq!(greedy_decode(&one_hot_frames(&[0], 2)), vec![0]);
    }

    #[test]
    fn greedy_ties_go_to_lowest_id() {
        let p = FrameMatrix::new(1, 3, vec![1.0 / 3.0; 3]).unwrap();
        assert_eq!(greedy_decode(&p), vec![0]);
    }

    #[test]
    fn beam_single_frame_matches_greedy() {
        for probs in [[0.2, 0.5, 0.3], [0.4, 0.4, 0.2], [0.3, 0.3, 0.4], [1.0 / 3.0; 3]] {
            let p = FrameMatrix::new(1, 3, probs.to_vec()).unwrap();
            assert_eq!(beam_decode(&p, 3), greedy_decode(&p));
        }
    }

    #[test]
    fn beam_beats_greedy_on_classic_case() {
        // Greedy reads blank twice, but "a" carries more total mass.
        let p = FrameMatrix::new(2, 2, vec![0.4, 0.6, 0.4, 0.6]).unwrap();
        assert!(greedy_decode(&p).is_empty());
        assert_eq!(beam_decode(&p, 4), vec![0]);
    }
}
