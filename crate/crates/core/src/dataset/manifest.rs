//! Page manifests: `{"pages":[{"image":"<path>","words":[{"bbox":[x,y,w,h],"text":"…"}]}]}`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

/// Word box in pixels, top-left origin, y downward.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "[u32; 4]", into = "[u32; 4]")]
pub struct BBox {
    pub x: u32,
    pub y: u32,
    pub width: u32,
    pub height: u32,
}

impl From<[u32; 4]> for BBox {
    fn from([x, y, width, height]: [u32; 4]) -> Self {
        Self {
            x,
            y,
            width,
            height,
        }
    }
}

impl From<BBox> for [u32; 4] {
    fn from(b: BBox) -> Self {
        [b.x, b.y, b.width, b.height]
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WordEntry {
    pub bbox: BBox,
    pub text: String,
}

/// One page image with its annotated words. `image_path` is resolved
/// against the manifest's directory.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PageRecord {
    /// The image path exactly as written in the manifest.
    pub source: String,
    pub image_path: PathBuf,
    pub words: Vec<WordEntry>,
}

impl PageRecord {
    pub fn word_id(&self, index: usize) -> String {
        format!("{}#{index}", self.source)
    }
}

/// Serializable manifest, used when writing synthetic data sets.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct Manifest {
    pub pages: Vec<ManifestPage>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ManifestPage {
    pub image: String,
    pub words: Vec<WordEntry>,
}

fn schema(location: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Schema {
        location: location.into(),
        message: message.into(),
    }
}

fn parse_bbox(value: &Value, location: &str) -> Result<BBox> {
    let arr = value
        .as_array()
        .ok_or_else(|| schema(location, "bbox must be an array [x, y, w, h]"))?;
    if arr.len() != 4 {
        return Err(schema(location, format!("bbox has {} entries, expected 4", arr.len())));
    }
    let mut out = [0u32; 4];
    for (slot, v) in out.iter_mut().zip(arr) {
        *slot = v
            .as_u64()
            .and_then(|n| u32::try_from(n).ok())
            .ok_or_else(|| schema(location, format!("bbox entry {v} is not a non-negative integer")))?;
    }
    Ok(BBox::from(out))
}

/// Parses and validates a manifest already read into memory. Image paths are
/// resolved against `base_dir`; page dimensions are read from image headers.
pub fn parse_manifest(text: &str, base_dir: &Path) -> Result<Vec<PageRecord>> {
    let root: Value =
        serde_json::from_str(text).map_err(|e| schema("manifest", e.to_string()))?;
    let pages = root
        .get("pages")
        .and_then(Value::as_array)
        .ok_or_else(|| schema("manifest", "missing array field `pages`"))?;

    let mut records = Vec::with_capacity(pages.len());
    for (pi, page) in pages.iter().enumerate() {
        let loc = format!("pages[{pi}]");
        let image = page
            .get("image")
            .and_then(Value::as_str)
            .ok_or_else(|| schema(format!("{loc}.image"), "missing string field `image`"))?;
        let words = page
            .get("words")
            .and_then(Value::as_array)
            .ok_or_else(|| schema(format!("{loc}.words"), "missing array field `words`"))?;
        let image_path = base_dir.join(image);

        let mut entries = Vec::with_capacity(words.len());
        for (wi, word) in words.iter().enumerate() {
            let wloc = format!("{loc}.words[{wi}]");
            let bbox = parse_bbox(
                word.get("bbox")
                    .ok_or_else(|| schema(format!("{wloc}.bbox"), "missing field `bbox`"))?,
                &format!("{wloc}.bbox"),
            )?;
            let text = word
                .get("text")
                .and_then(Value::as_str)
                .ok_or_else(|| schema(format!("{wloc}.text"), "missing string field `text`"))?;
            if text.is_empty() {
                return Err(schema(format!("{wloc}.text"), "text is empty"));
            }
            if bbox.width == 0 || bbox.height == 0 {
                return Err(Error::BoundingBox {
                    location: wloc,
                    message: format!("zero-sized box {:?}", <[u32; 4]>::from(bbox)),
                });
            }
            entries.push(WordEntry {
                bbox,
                text: text.to_owned(),
            });
        }

        if !entries.is_empty() {
            let (pw, ph) = image::image_dimensions(&image_path).map_err(|e| Error::Image {
                path: image_path.clone(),
                message: e.to_string(),
            })?;
            for (wi, e) in entries.iter().enumerate() {
                let b = e.bbox;
                if u64::from(b.x) + u64::from(b.width) > u64::from(pw)
                    || u64::from(b.y) + u64::from(b.height) > u64::from(ph)
                {
                    return Err(Error::BoundingBox {
                        location: format!("{loc}.words[{wi}]"),
                        message: format!(
                            "box {:?} exceeds page {pw}x{ph}",
                            <[u32; 4]>::from(b)
                        ),
                    });
                }
            }
        }
        records.push(PageRecord {
            source: image.to_owned(),
            image_path,
            words: entries,
        });
    }
    Ok(records)
}

/// Reads and validates a manifest file.
pub fn load_manifest(path: &Path) -> Result<Vec<PageRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    parse_manifest(&text, base)
}
