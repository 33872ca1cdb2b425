//! Text detection, recognition and the classifier-gated censoring
//! intervention.
//!
//! Detection and recognition sit behind [`TextDetector`] and
//! [`TextRecognizer`] so any OCR engine can be plugged in. The reference
//! implementations read text rendered with the built-in 5x7 font exactly.

use std::collections::VecDeque;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::font::{GlyphFont, GLYPH_H, GLYPH_W, PITCH};
use crate::frame::{BBox, Frame};
use crate::learn::{classify, tokenize, TextModel};
use crate::vision::InterventionFn;

pub trait TextDetector: Send + Sync {
    /// Text line regions, in bounds and pairwise IoU below 0.5.
    fn detect(&self, frame: &Frame) -> Result<Vec<BBox>>;
}

pub trait TextRecognizer: Send + Sync {
    /// Characters in reading order with their boxes inside `region`.
    fn recognize(&self, frame: &Frame, region: &BBox) -> Result<Vec<(char, BBox)>>;
}

/// Renders `text` on the font background with one cell unit of padding.
pub fn render_text(text: &str, font: &GlyphFont) -> Result<Frame> {
    if let Some(c) = text.chars().find(|c| !(' '..='~').contains(c)) {
        return Err(Error::UnsupportedCharacter(c));
    }
    let (w, h) = font.text_size(text);
    let mut out = Frame::filled(w, h, font.bg);
    for (x, y) in font.ink_positions(text)? {
        out.set(x + font.scale, y + font.scale, font.fg);
    }
    Ok(out)
}

/// Ink mask under the dark-on-light convention, inverted when more than
/// half of the frame would be ink.
pub fn ink_mask(frame: &Frame) -> Vec<bool> {
    let mut ink: Vec<bool> = frame
        .pixels()
        .chunks_exact(3)
        .map(|p| crate::frame::Color::new(p[0], p[1], p[2]).luminance() < 128.0)
        .collect();
    if ink.iter().filter(|&&b| b).count() * 2 > ink.len() {
        ink.iter_mut().for_each(|b| *b = !*b);
    }
    ink
}

/// 8-connected component bounding boxes of a mask.
pub fn connected_components(mask: &[bool], width: u32, height: u32) -> Vec<BBox> {
    let (w, h) = (width as usize, height as usize);
    let mut seen = vec![false; mask.len()];
    let mut out = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..mask.len() {
        if !mask[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        queue.push_back(start);
        let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
        while let Some(i) = queue.pop_front() {
            let (x, y) = (i % w, i / w);
            x0 = x0.min(x);
            y0 = y0.min(y);
            x1 = x1.max(x);
            y1 = y1.max(y);
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                    if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                        continue;
                    }
                    let j = ny as usize * w + nx as usize;
                    if mask[j] && !seen[j] {
                        seen[j] = true;
                        queue.push_back(j);
                    }
                }
            }
        }
        out.push(BBox::new(x0 as u32, y0 as u32, (x1 - x0 + 1) as u32, (y1 - y0 + 1) as u32));
    }
    out
}

/// Connected-component line detector for the built-in font.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ReferenceDetector {
    /// Largest horizontal ink gap joined into one line.
    pub merge_gap: u32,
    /// Largest vertical gap between horizontally overlapping pieces that
    /// still belong together (the dot of an `i`, the halves of `:`).
    pub stack_gap: u32,
}

impl ReferenceDetector {
    pub fn for_scale(scale: u32) -> Self {
        let scale = scale.max(1);
        Self {
            merge_gap: 2 * PITCH * scale,
            stack_gap: 2 * scale,
        }
    }

    fn joins(&self, a: &BBox, b: &BBox) -> bool {
        if a.iou(b) >= 0.5 {
            return true;
        }
        let h_gap = a.x.max(b.x).saturating_sub(a.right().min(b.right()));
        let v_overlap = a.bottom().min(b.bottom()).saturating_sub(a.y.max(b.y));
        if h_gap <= self.merge_gap && v_overlap * 2 >= a.h.min(b.h) {
            return true;
        }
        let h_overlap = a.right().min(b.right()) > a.x.max(b.x);
        let v_gap = a.y.max(b.y).saturating_sub(a.bottom().min(b.bottom()));
        h_overlap && v_gap <= self.stack_gap
    }

    /// Merges boxes until no pair satisfies the joining rules.
    pub fn merge(&self, mut boxes: Vec<BBox>) -> Vec<BBox> {
        loop {
            let mut merged = false;
            let mut i = 0;
            while i < boxes.len() {
                let mut j = i + 1;
                while j < boxes.len() {
                    if self.joins(&boxes[i], &boxes[j]) {
                        let b = boxes.swap_remove(j);
                        boxes[i] = boxes[i].union(&b);
                        merged = true;
                    } else {
                        j += 1;
                    }
                }
                i += 1;
            }
            if !merged {
                break;
            }
        }
        boxes.sort_by_key(|b| (b.y, b.x));
        boxes
    }
}

impl Default for ReferenceDetector {
    fn default() -> Self {
        Self::for_scale(1)
    }
}

impl TextDetector for ReferenceDetector {
    fn detect(&self, frame: &Frame) -> Result<Vec<BBox>> {
        let mask = ink_mask(frame);
        let components = connected_components(&mask, frame.width(), frame.height());
        Ok(self.merge(components))
    }
}

pub fn reference_detect(frame: &Frame) -> Vec<BBox> {
    ReferenceDetector::default()
        .detect(frame)
        .expect("reference detector is infallible")
}

/// Fraction of a glyph's 35 bits that may differ before a cell reads as `?`.
pub const MAX_GLYPH_DISTANCE: f64 = 0.20;

/// Glyph-cell recognizer for text rendered with a [`GlyphFont`].
#[derive(Clone, Debug)]
pub struct ReferenceRecognizer {
    pub font: GlyphFont,
}

impl ReferenceRecognizer {
    pub fn new(font: GlyphFont) -> Self {
        Self { font }
    }

    fn glyph_bits(glyph: &crate::font::Glyph) -> u64 {
        glyph.iter().fold(0u64, |acc, row| acc << GLYPH_W | *row as u64)
    }

    fn sample_cell(&self, ink: &dyn Fn(i64, i64) -> bool, cx: i64, cy: i64) -> u64 {
        let s = self.font.scale as i64;
        let mut bits = 0u64;
        for row in 0..GLYPH_H as i64 {
            for col in 0..GLYPH_W as i64 {
                let mut count = 0;
                for dy in 0..s {
                    for dx in 0..s {
                        count += ink(cx + col * s + dx, cy + row * s + dy) as i64;
                    }
                }
                bits = bits << 1 | (2 * count >= s * s) as u64;
            }
        }
        bits
    }

    fn nearest(&self, table: &[(char, u64)], bits: u64) -> (char, u32) {
        table
            .iter()
            .map(|&(c, g)| (c, (g ^ bits).count_ones()))
            .min_by_key(|&(c, d)| (d, c))
            .expect("font is non-empty")
    }
}

impl TextRecognizer for ReferenceRecognizer {
    fn recognize(&self, frame: &Frame, region: &BBox) -> Result<Vec<(char, BBox)>> {
        frame.check_region(region)?;
        let mask = ink_mask(frame);
        let (fw, fh) = (frame.width() as i64, frame.height() as i64);
        let ink = |x: i64, y: i64| x >= 0 && y >= 0 && x < fw && y < fh && mask[(y * fw + x) as usize];
        let in_region = |x: i64, y: i64| region.contains_point(x as u32, y as u32) && ink(x, y);
        let table: Vec<(char, u64)> = self
            .font
            .glyphs()
            .map(|(c, g)| (c, Self::glyph_bits(g)))
            .collect();

        let s = self.font.scale as i64;
        let (cell_w, cell_h, pitch) = (GLYPH_W as i64 * s, GLYPH_H as i64 * s, PITCH as i64 * s);
        let (rx, ry) = (region.x as i64, region.y as i64);
        let (right, bottom) = (region.right() as i64, region.bottom() as i64);
        let (oy_lo, oy_hi) = {
            let a = bottom - cell_h;
            (a.min(ry), a.max(ry))
        };

        let mut best: Option<(u64, Vec<(char, BBox)>)> = None;
        for dx in 0..cell_w {
            let ox = rx - dx;
            for oy in oy_lo..=oy_hi {
                let mut cost = 0u64;
                let mut chars = Vec::new();
                let mut k = 0;
                while ox + k * pitch < right {
                    let cx = ox + k * pitch;
                    let bits = self.sample_cell(&in_region, cx, oy);
                    let (c, d) = self.nearest(&table, bits);
                    cost += d as u64;
                    // Ink in the inter-glyph gap means the grid is misaligned.
                    for gx in cx + cell_w..cx + pitch {
                        cost += (oy..oy + cell_h).filter(|&y| in_region(gx, y)).count() as u64;
                    }
                    let c = if d as f64 > MAX_GLYPH_DISTANCE * (GLYPH_W * GLYPH_H) as f64 {
                        '?'
                    } else {
                        c
                    };
                    let cell = BBox::new(
                        cx.max(0) as u32,
                        oy.max(0) as u32,
                        (cx + cell_w - cx.max(0)) as u32,
                        (oy + cell_h - oy.max(0)) as u32,
                    );
                    let bbox = cell.intersection(region).unwrap_or(*region);
                    chars.push((c, bbox));
                    k += 1;
                }
                if best.as_ref().is_none_or(|(b, _)| cost < *b) {
                    best = Some((cost, chars));
                }
            }
        }
        Ok(best.map(|(_, chars)| chars).unwrap_or_default())
    }
}

pub fn reference_recognize(frame: &Frame, region: &BBox, font: &GlyphFont) -> Result<Vec<(char, BBox)>> {
    ReferenceRecognizer::new(font.clone()).recognize(frame, region)
}

/// Joins recognized characters and trims surrounding blanks.
pub fn chars_to_string(chars: &[(char, BBox)]) -> String {
    chars.iter().map(|(c, _)| *c).collect::<String>().trim().to_string()
}

/// A non-fatal problem encountered while censoring one region.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub timestamp: u64,
    pub region: Option<BBox>,
    pub message: String,
}

pub trait DiagnosticSink: Send + Sync {
    fn record(&self, diagnostic: Diagnostic);
}

#[derive(Default)]
pub struct MemorySink(Mutex<Vec<Diagnostic>>);

impl MemorySink {
    pub fn take(&self) -> Vec<Diagnostic> {
        std::mem::take(&mut self.0.lock().unwrap())
    }
}

impl DiagnosticSink for MemorySink {
    fn record(&self, diagnostic: Diagnostic) {
        self.0.lock().unwrap().push(diagnostic);
    }
}

/// Appends one JSON object per line, e.g. to `logs/texthook.jsonl`.
pub struct JsonlSink {
    path: PathBuf,
    lock: Mutex<()>,
}

impl JsonlSink {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        Self {
            path: path.into(),
            lock: Mutex::new(()),
        }
    }
}

impl DiagnosticSink for JsonlSink {
    fn record(&self, diagnostic: Diagnostic) {
        let _guard = self.lock.lock().unwrap();
        if let Some(dir) = self.path.parent() {
            let _ = std::fs::create_dir_all(dir);
        }
        let line = serde_json::to_string(&diagnostic).unwrap_or_default();
        if let Ok(mut f) = OpenOptions::new().create(true).append(true).open(&self.path) {
            let _ = writeln!(f, "{line}");
        }
    }
}

/// Result of running the censor pipeline on one frame.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CensorReport {
    /// `(region, recognized text, score)` for every classified line.
    pub scored: Vec<(BBox, String, f64)>,
    pub censored: Vec<BBox>,
    pub diagnostics: Vec<Diagnostic>,
}

/// Detects, recognizes and classifies every text line, blacking out lines
/// whose positive score reaches `threshold`.
pub fn censor_frame(
    frame: &Frame,
    detector: &dyn TextDetector,
    recognizer: &dyn TextRecognizer,
    model: &TextModel,
    threshold: f64,
) -> (Frame, CensorReport) {
    let mut report = CensorReport::default();
    let diag = |region, message: String| Diagnostic {
        timestamp: frame.timestamp,
        region,
        message,
    };
    let regions = match detector.detect(frame) {
        Ok(r) => r,
        Err(e) => {
            report.diagnostics.push(diag(None, format!("detector failed: {e}")));
            return (frame.clone(), report);
        }
    };
    let mut out = frame.clone();
    for region in regions {
        if !region.fits_in(frame.width(), frame.height()) {
            report.diagnostics.push(diag(Some(region), "detector returned an out-of-bounds region".into()));
            continue;
        }
        let text = match recognizer.recognize(frame, &region) {
            Ok(chars) => chars_to_string(&chars),
            Err(e) => {
                report.diagnostics.push(diag(Some(region), format!("recognizer failed: {e}")));
                continue;
            }
        };
        if tokenize(&text).is_empty() {
            continue;
        }
        let score = match classify(model, &text) {
            Ok(s) => s,
            Err(e) => {
                report.diagnostics.push(diag(Some(region), format!("classifier failed: {e}")));
                continue;
            }
        };
        if score >= threshold {
            out.fill_rect(&region, crate::frame::Color::BLACK);
            report.censored.push(region);
        }
        report.scored.push((region, text, score));
    }
    (out, report)
}

/// Wraps [`censor_frame`] as an intervention for category `model.category`.
pub fn censor_intervention(
    detector: Arc<dyn TextDetector>,
    recognizer: Arc<dyn TextRecognizer>,
    model: Arc<TextModel>,
    threshold: f64,
    sink: Option<Arc<dyn DiagnosticSink>>,
) -> InterventionFn {
    let id = format!("text-{}", model.category);
    InterventionFn::new(id, move |frame| {
        let (out, report) = censor_frame(frame, detector.as_ref(), recognizer.as_ref(), &model, threshold);
        if let Some(sink) = &sink {
            report.diagnostics.into_iter().for_each(|d| sink.record(d));
        }
        out
    })
}
