//! Corpus ingestion: manifests, word crops, length filtering, character sets,
//! splits, and a synthetic stand-in corpus.

mod charset;
mod manifest;
mod synth;

pub use charset::Charset;
pub use manifest::{
    load_manifest, parse_manifest, BBox, Manifest, ManifestPage, PageRecord, WordEntry,
};
pub use synth::{glyph_strokes, render_glyph, synth_corpus, write_synthetic_pages, SynthConfig};

use std::collections::HashMap;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imageproc::GrayImage;
use crate::seed;

/// Default maximum transcript length in code points.
pub const MAX_WORD_LEN: usize = 10;

/// A cropped word image with its transcript.
#[derive(Clone, Debug, PartialEq)]
pub struct WordSample {
    pub image: GrayImage,
    pub transcript: String,
    /// `<page path>#<word index>`.
    pub source_id: String,
}

impl WordSample {
    pub fn len(&self) -> usize {
        self.transcript.chars().count()
    }

    pub fn is_empty(&self) -> bool {
        self.transcript.is_empty()
    }
}

/// Crops every annotated word out of its page.
pub fn extract_words(pages: &[PageRecord]) -> Result<Vec<WordSample>> {
    let mut samples = Vec::new();
    for page in pages.iter().filter(|p| !p.words.is_empty()) {
        let image = GrayImage::load(&page.image_path)?;
        for (i, word) in page.words.iter().enumerate() {
            let b = word.bbox;
            let crop = image
                .crop(b.x as usize, b.y as usize, b.width as usize, b.height as usize)
                .map_err(|e| Error::BoundingBox {
                    location: page.word_id(i),
                    message: e.to_string(),
                })?;
            samples.push(WordSample {
                image: crop,
                transcript: word.text.clone(),
                source_id: page.word_id(i),
            });
        }
    }
    Ok(samples)
}

/// Keeps samples whose transcript has at most `max_word_len` code points.
pub fn filter_by_length(samples: Vec<WordSample>, max_word_len: usize) -> Vec<WordSample> {
    samples
        .into_iter()
        .filter(|s| s.len() <= max_word_len)
        .collect()
}

pub fn build_charset(samples: &[WordSample]) -> Result<Charset> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument(
            "cannot build a character set from an empty sample list".into(),
        ));
    }
    Charset::from_texts(samples.iter().map(|s| s.transcript.as_str()))
}

/// Disjoint train/validation/test id lists.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub seed: u64,
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" | "validation" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::InvalidArgument(format!("unknown split {other:?}"))),
        }
    }
}

impl SplitAssignment {
    pub fn ids(&self, split: Split) -> &[String] {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    /// Looks up the samples of `split` in assignment order.
    pub fn select<'a>(&self, split: Split, samples: &'a [WordSample]) -> Result<Vec<&'a WordSample>> {
        let by_id: HashMap<&str, &WordSample> =
            samples.iter().map(|s| (s.source_id.as_str(), s)).collect();
        self.ids(split)
            .iter()
            .map(|id| {
                by_id
                    .get(id.as_str())
                    .copied()
                    .ok_or_else(|| Error::InvalidArgument(format!("split references unknown sample {id}")))
            })
            .collect()
    }
}

/// Seeded shuffle followed by a contiguous cut: `floor(0.70 N)` train,
/// `floor(0.15 N)` validation, remainder test.
pub fn split_dataset(samples: &[WordSample], seed: u64) -> Result<SplitAssignment> {
    split_ids(samples.iter().map(|s| s.source_id.clone()).collect(), seed)
}

pub fn split_ids(mut ids: Vec<String>, seed: u64) -> Result<SplitAssignment> {
    let n = ids.len();
    if n < 3 {
        return Err(Error::InvalidArgument(format!(
            "need at least 3 samples to split, got {n}"
        )));
    }
    let mut rng = seed::rng(seed::derive(&[seed, 0x5911]));
    ids.shuffle(&mut rng);
    let n_train = n * 70 / 100;
    let n_val = n * 15 / 100;
    let test = ids.split_off(n_train + n_val);
    let val = ids.split_off(n_train);
    Ok(SplitAssignment {
        seed,
        train: ids,
        val,
        test,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample(id: usize, text: &str) -> WordSample {
        WordSample {
            image: GrayImage::filled(2, 2, 255.0),
            transcript: text.into(),
            source_id: format!("p#{id}"),
        }
    }

    #[test]
    fn length_filter_boundary() {
        let s = vec![
            sample(0, "abcdefghij"),
            sample(1, "abcdefghijk"),
            sample(2, "ab"),
        ];
        let kept = filter_by_length(s, 10);
        let ids: Vec<_> = kept.iter().map(|s| s.source_id.as_str()).collect();
        assert_eq!(ids, ["p#0", "p#2"]);
        assert!(filter_by_length(vec![], 10).is_empty());
    }

    #[test]
    fn length_counts_code_points() {
        // Ten Bengali code points, more than ten bytes.
        let word = "আমারসোনারব";
        assert_eq!(word.chars().count(), 10);
        assert_eq!(filter_by_length(vec![sample(0, word)], 10).len(), 1);
    }

    #[test]
    fn split_sizes() {
        let s: Vec<_> = (0..100).map(|i| sample(i, "a")).collect();
        let a = split_dataset(&s, 1).unwrap();
        assert_eq!((a.train.len(), a.val.len(), a.test.len()), (70, 15, 15));
        let s: Vec<_> = (0..10).map(|i| sample(i, "a")).collect();
        let a = split_dataset(&s, 1).unwrap();
        assert_eq!((a.train.len(), a.val.len(), a.test.len()), (7, 1, 2));
        assert_eq!(a, split_dataset(&s, 1).unwrap());
        assert!(split_dataset(&s[..2], 0).is_err());
    }

    #[test]
    fn split_rounding_has_no_float_drift() {
        // 0.7 * 30 is 20.999... in binary floating point.
        let a = split_ids((0..30).map(|i| i.to_string()).collect(), 0).unwrap();
        assert_eq!((a.train.len(), a.val.len(), a.test.len()), (21, 4, 5));
    }

    proptest! {
        #[test]
        fn split_is_a_partition(n in 3usize..400, seed in any::<u64>()) {
            let ids: Vec<String> = (0..n).map(|i| i.to_string()).collect();
            let a = split_ids(ids.clone(), seed).unwrap();
            let mut all: Vec<String> = a.train.iter().chain(&a.val).chain(&a.test).cloned().collect();
            all.sort();
            let mut expect = ids;
            expect.sort();
            prop_assert_eq!(all, expect);
            let target = |f: f64| f * n as f64;
            prop_assert!((a.train.len() as f64 - target(0.70)).abs() <= 1.0);
            prop_assert!((a.val.len() as f64 - target(0.15)).abs() <= 1.0);
            // Two floors can each drop just under one sample into the remainder.
            prop_assert!((a.test.len() as f64 - target(0.15)).abs() < 2.0);
        }

        #[test]
        fn filter_idempotent_and_charset_order_free(
            words in proptest::collection::vec("[a-e]{1,14}", 1..30),
        ) {
            let samples: Vec<_> = words.iter().enumerate().map(|(i, w)| sample(i, w)).collect();
            let once = filter_by_length(samples.clone(), 10);
            prop_assert_eq!(filter_by_length(once.clone(), 10), once.clone());
            let mut rev = samples.clone();
            rev.reverse();
            prop_assert_eq!(build_charset(&samples).unwrap(), build_charset(&rev).unwrap());
            if !once.is_empty() {
                let cs = build_charset(&once).unwrap();
                for s in &once {
                    prop_assert!(cs.encode(&s.transcript).is_ok());
                }
            }
        }
    }
}
