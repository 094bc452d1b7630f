use std::path::Path;

use serde::{Deserialize, Serialize};

use super::EditBreakdown;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleRow {
    #[serde(rename = "ref")]
    pub reference: String,
    #[serde(rename = "hyp")]
    pub hypothesis: String,
    pub s: usize,
    pub i: usize,
    pub d: usize,
}

impl SampleRow {
    pub fn new(reference: String, hypothesis: String, edits: EditBreakdown) -> Self {
        Self {
            reference,
            hypothesis,
            s: edits.substitutions,
            i: edits.insertions,
            d: edits.deletions,
        }
    }
}

/// Provenance carried alongside the headline numbers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportMeta {
    pub seed: u64,
    pub checkpoint: String,
    pub beam_width: Option<usize>,
    /// Always `"reference"`: CER divides by reference characters.
    pub cer_denominator: String,
    /// Evaluation never augments; recorded for readers of train-split reports.
    pub augmentation: String,
}

/// Loss, CER and WER over one split with per-sample rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub split: String,
    pub decoder: String,
    pub loss: f64,
    pub cer: f64,
    pub wer: f64,
    pub samples: Vec<SampleRow>,
    pub meta: ReportMeta,
}

impl EvalReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Comment lines with the header fields, then `ref,hyp,s,i,d` rows.
    pub fn to_csv(&self) -> Result<String> {
        let mut out = format!(
            "# split={} decoder={} seed={} checkpoint={} cer_denominator={} augmentation={}\n# loss={} cer={} wer={}\n",
            self.split,
            self.decoder,
            self.meta.seed,
            self.meta.checkpoint,
            self.meta.cer_denominator,
            self.meta.augmentation,
            self.loss,
            self.cer,
            self.wer
        );
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["ref", "hyp", "s", "i", "d"])
            .and_then(|_| {
                self.samples.iter().try_for_each(|r| {
                    w.write_record([
                        r.reference.as_str(),
                        r.hypothesis.as_str(),
                        &r.s.to_string(),
                        &r.i.to_string(),
                        &r.d.to_string(),
                    ])
                })
            })
            .map_err(|e| Error::InvalidArgument(format!("csv: {e}")))?;
        let body = w
            .into_inner()
            .map_err(|e| Error::InvalidArgument(format!("csv: {e}")))?;
        out.push_str(&String::from_utf8(body).expect("csv output is utf-8"));
        Ok(out)
    }

    /// Writes `<stem>.json` and `<stem>.csv` into `dir`.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<()> {
        let json = dir.join(format!("{stem}.json"));
        std::fs::write(&json, self.to_json()?).map_err(|e| Error::io(&json, e))?;
        let csv_path = dir.join(format!("{stem}.csv"));
        std::fs::write(&csv_path, self.to_csv()?).map_err(|e| Error::io(&csv_path, e))
    }
}
