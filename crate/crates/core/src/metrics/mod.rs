//! Edit distance, character and word error rates, static FLOP counts and the
//! evaluation report.

mod flops;
mod report;

pub use flops::{estimate_flops, FlopsEstimate, LayerFlops};
pub use report::{EvalReport, ReportMeta, SampleRow};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Unit-cost edit operations turning a reference into a hypothesis.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EditBreakdown {
    pub substitutions: usize,
    /// Hypothesis symbols with no reference counterpart.
    pub insertions: usize,
    /// Reference symbols missing from the hypothesis.
    pub deletions: usize,
}

impl EditBreakdown {
    pub fn total(&self) -> usize {
        self.substitutions + self.insertions + self.deletions
    }
}

/// Levenshtein distance over code points with an operation breakdown.
///
/// The backtrace prefers a diagonal step (match or substitution), then a
/// deletion, then an insertion.
pub fn edit_distance(reference: &str, hypothesis: &str) -> EditBreakdown {
    let r: Vec<char> = reference.chars().collect();
    let h: Vec<char> = hypothesis.chars().collect();
    edit_distance_seq(&r, &h)
}

pub fn edit_distance_seq<T: PartialEq>(r: &[T], h: &[T]) -> EditBreakdown {
    let (n, m) = (r.len(), h.len());
    let cols = m + 1;
    let mut dp = vec![0usize; (n + 1) * cols];
    for i in 0..=n {
        dp[i * cols] = i;
    }
    for j in 0..=m {
        dp[j] = j;
    }
    for i in 1..=n {
        for j in 1..=m {
            let sub = dp[(i - 1) * cols + j - 1] + usize::from(r[i - 1] != h[j - 1]);
            let del = dp[(i - 1) * cols + j] + 1;
            let ins = dp[i * cols + j - 1] + 1;
            dp[i * cols + j] = sub.min(del).min(ins);
        }
    }
    let mut out = EditBreakdown::default();
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        let here = dp[i * cols + j];
        if i > 0 && j > 0 {
            let mismatch = usize::from(r[i - 1] != h[j - 1]);
            if here == dp[(i - 1) * cols + j - 1] + mismatch {
                out.substitutions += mismatch;
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if i > 0 && here == dp[(i - 1) * cols + j] + 1 {
            out.deletions += 1;
            i -= 1;
        } else {
            out.insertions += 1;
            j -= 1;
        }
    }
    out
}

/// Corpus CER: total edits over total reference characters.
pub fn cer<R: AsRef<str>, H: AsRef<str>>(pairs: &[(R, H)]) -> Result<f64> {
    let (edits, chars) = pairs.iter().fold((0usize, 0usize), |(e, c), (r, h)| {
        let r = r.as_ref();
        (e + edit_distance(r, h.as_ref()).total(), c + r.chars().count())
    });
    if chars == 0 {
        return Err(Error::InvalidArgument(
            "CER is undefined with zero reference characters".into(),
        ));
    }
    Ok(edits as f64 / chars as f64)
}

/// Fraction of hypotheses that differ from their reference.
pub fn wer<R: AsRef<str>, H: AsRef<str>>(pairs: &[(R, H)]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::InvalidArgument("WER of an empty list is undefined".into()));
    }
    let wrong = pairs.iter().filter(|(r, h)| r.as_ref() != h.as_ref()).count();
    Ok(wrong as f64 / pairs.len() as f64)
}
