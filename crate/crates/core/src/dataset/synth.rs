//! Procedural-glyph corpus used to exercise the pipeline without real scans.

use std::path::Path;

use rand::seq::index::sample as sample_indices;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{BBox, Charset, Manifest, ManifestPage, WordEntry, WordSample};
use crate::error::{Error, Result};
use crate::imageproc::GrayImage;
use crate::seed;

const GLYPH_W: usize = 20;
const GLYPH_H: usize = 30;
const PITCH: usize = 22;
const CANVAS_H: usize = 50;
const MIN_CANVAS_W: usize = 200;
const BASE_THICKNESS: f64 = 2.0;
const GLYPH_SEED: u64 = 0x6C79_7068;

/// Lattice the strokes are drawn on, in glyph-local pixels.
const LATTICE_X: [f64; 3] = [3.0, 10.0, 17.0];
const LATTICE_Y: [f64; 4] = [3.0, 11.0, 19.0, 27.0];

type Point = (f64, f64);
type Stroke = (Point, Point);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub alphabet_size: usize,
    pub word_count: usize,
    pub min_len: usize,
    pub max_len: usize,
    /// Standard deviation of additive canvas noise, in intensity levels.
    pub noise: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            alphabet_size: 20,
            word_count: 500,
            min_len: 2,
            max_len: 8,
            noise: 6.0,
            seed: 0,
        }
    }
}

/// Symbols used by the synthetic alphabet, in label order.
fn symbol(i: usize) -> char {
    const BASE: &str = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789";
    BASE.chars()
        .nth(i)
        .unwrap_or_else(|| char::from_u32(0x4E00 + i as u32).expect("valid CJK code point"))
}

fn lattice_edges() -> Vec<Stroke> {
    let p = |r: usize, c: usize| (LATTICE_X[c], LATTICE_Y[r]);
    let mut edges = Vec::new();
    for r in 0..4 {
        for c in 0..2 {
            edges.push((p(r, c), p(r, c + 1)));
        }
    }
    for r in 0..3 {
        for c in 0..3 {
            edges.push((p(r, c), p(r + 1, c)));
        }
    }
    for r in 0..3 {
        for c in 0..2 {
            edges.push((p(r, c), p(r + 1, c + 1)));
            edges.push((p(r, c + 1), p(r + 1, c)));
        }
    }
    edges
}

/// Stroke sets for the first `alphabet_size` symbols. Each symbol gets 5–8
/// lattice edges; any two symbols differ in at least three edges.
pub fn glyph_strokes(alphabet_size: usize) -> Vec<Vec<Stroke>> {
    let edges = lattice_edges();
    let mut rng = seed::rng(GLYPH_SEED);
    let mut masks: Vec<u64> = Vec::with_capacity(alphabet_size);
    while masks.len() < alphabet_size {
        let count = rng.random_range(5..=8);
        let mask = sample_indices(&mut rng, edges.len(), count)
            .into_iter()
            .fold(0u64, |m, i| m | (1 << i));
        if masks.iter().all(|&m| (m ^ mask).count_ones() >= 3) {
            masks.push(mask);
        }
    }
    masks
        .into_iter()
        .map(|m| {
            (0..edges.len())
                .filter(|i| m & (1 << i) != 0)
                .map(|i| edges[i])
                .collect()
        })
        .collect()
}

fn draw_stroke(canvas: &mut GrayImage, (a, b): Stroke, thickness: f64) {
    let r = thickness / 2.0;
    let y_lo = (a.1.min(b.1) - r).floor().max(0.0) as usize;
    let y_hi = ((a.1.max(b.1) + r).ceil() as usize).min(canvas.height() - 1);
    let x_lo = (a.0.min(b.0) - r).floor().max(0.0) as usize;
    let x_hi = ((a.0.max(b.0) + r).ceil() as usize).min(canvas.width() - 1);
    let (vx, vy) = (b.0 - a.0, b.1 - a.1);
    let len2 = vx * vx + vy * vy;
    for y in y_lo..=y_hi {
        for x in x_lo..=x_hi {
            let (px, py) = (x as f64 - a.0, y as f64 - a.1);
            let t = ((px * vx + py * vy) / len2).clamp(0.0, 1.0);
            let (ex, ey) = (px - t * vx, py - t * vy);
            if ex * ex + ey * ey <= r * r {
                canvas.set(y, x, 0.0);
            }
        }
    }
}

fn draw_glyph(canvas: &mut GrayImage, strokes: &[Stroke], ox: f64, oy: f64, thickness: f64) {
    for &((x0, y0), (x1, y1)) in strokes {
        draw_stroke(canvas, ((x0 + ox, y0 + oy), (x1 + ox, y1 + oy)), thickness);
    }
}

/// Unjittered render of one symbol on a white glyph tile.
pub fn render_glyph(symbol_index: usize, alphabet_size: usize) -> GrayImage {
    let strokes = glyph_strokes(alphabet_size);
    let mut tile = GrayImage::filled(GLYPH_H, GLYPH_W, 255.0);
    draw_glyph(&mut tile, &strokes[symbol_index], 0.0, 0.0, BASE_THICKNESS);
    tile
}

fn render_word(
    labels: &[usize],
    strokes: &[Vec<Stroke>],
    noise: f64,
    rng: &mut impl Rng,
) -> GrayImage {
    let width = MIN_CANVAS_W.max(labels.len() * PITCH + 8);
    let mut canvas = GrayImage::filled(CANVAS_H, width, 255.0);
    let slack = width - labels.len() * PITCH;
    let x0 = rng.random_range(2..=slack.saturating_sub(2).max(2)) as f64;
    let y0 = 10.0 + rng.random_range(-4.0..=4.0);
    for (k, &label) in labels.iter().enumerate() {
        let dx = rng.random_range(-2.0..=2.0);
        let dy = rng.random_range(-2.0..=2.0);
        let thickness = BASE_THICKNESS + rng.random_range(-1.0..=1.0);
        let ox = x0 + (k * PITCH) as f64 + dx;
        draw_glyph(&mut canvas, &strokes[label], ox, y0 + dy, thickness);
    }
    if noise > 0.0 {
        let normal = Normal::new(0.0, noise).expect("noise is positive and finite");
        for v in canvas.data_mut() {
            *v = (*v + normal.sample(rng)).clamp(0.0, 255.0);
        }
    }
    for v in canvas.data_mut() {
        *v = v.round();
    }
    canvas
}

/// Draws uniform random transcripts and renders them, redrawing the whole
/// transcript list until every symbol of the alphabet occurs.
pub fn synth_corpus(config: &SynthConfig) -> Result<(Vec<WordSample>, Charset)> {
    if config.alphabet_size < 2 {
        return Err(Error::InvalidArgument("alphabet size must be at least 2".into()));
    }
    if config.min_len == 0 || config.min_len > config.max_len {
        return Err(Error::InvalidArgument(format!(
            "invalid word length range {}..={}",
            config.min_len, config.max_len
        )));
    }
    if config.word_count * config.max_len < config.alphabet_size {
        return Err(Error::InvalidArgument(
            "too few symbol slots to cover the alphabet".into(),
        ));
    }
    let strokes = glyph_strokes(config.alphabet_size);
    let charset = Charset::new((0..config.alphabet_size).map(symbol).collect())?;

    let mut attempt = 0u64;
    let (labels, mut rng) = loop {
        let mut rng = seed::rng(seed::derive(&[config.seed, attempt]));
        let labels: Vec<Vec<usize>> = (0..config.word_count)
            .map(|_| {
                let len = rng.random_range(config.min_len..=config.max_len);
                (0..len)
                    .map(|_| rng.random_range(0..config.alphabet_size))
                    .collect()
            })
            .collect();
        let mut seen = vec![false; config.alphabet_size];
        labels.iter().flatten().for_each(|&l| seen[l] = true);
        if seen.iter().all(|&s| s) {
            break (labels, rng);
        }
        attempt += 1;
    };

    let samples = labels
        .iter()
        .enumerate()
        .map(|(i, word)| {
            Ok(WordSample {
                image: render_word(word, &strokes, config.noise, &mut rng),
                transcript: charset.decode(word)?,
                source_id: format!("synth#{i}"),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((samples, charset))
}

/// Packs samples onto page images (stacked vertically, `words_per_page` per
/// page), writes the PNGs and `manifest.json` into `dir`.
pub fn write_synthetic_pages(
    samples: &[WordSample],
    dir: &Path,
    words_per_page: usize,
) -> Result<Manifest> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut manifest = Manifest::default();
    for (pi, chunk) in samples.chunks(words_per_page.max(1)).enumerate() {
        let width = chunk.iter().map(|s| s.image.width()).max().unwrap_or(1);
        let height: usize = chunk.iter().map(|s| s.image.height()).sum();
        let mut page = GrayImage::filled(height, width, 255.0);
        let mut words = Vec::with_capacity(chunk.len());
        let mut top = 0;
        for s in chunk {
            for y in 0..s.image.height() {
                for x in 0..s.image.width() {
                    page.set(top + y, x, s.image.get(y, x));
                }
            }
            words.push(WordEntry {
                bbox: BBox {
                    x: 0,
                    y: top as u32,
                    width: s.image.width() as u32,
                    height: s.image.height() as u32,
                },
                text: s.transcript.clone(),
            });
            top += s.image.height();
        }
        let name = format!("page_{pi:04}.png");
        page.save_png(&dir.join(&name))?;
        manifest.pages.push(ManifestPage { image: name, words });
    }
    let path = dir.join("manifest.json");
    std::fs::write(&path, serde_json::to_string_pretty(&manifest)?)
        .map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}
