//! One-shot GUI element detection by multi-scale template matching.
//!
//! A [`MaskTemplate`] is a cropped element. [`match_template`] resizes it
//! along the configured scale ladder, scores every stride-aligned window with
//! zero-mean normalized cross-correlation, and prunes overlapping hits with
//! non-maximum suppression.

mod contour;
mod ncc;

use std::collections::BTreeMap;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use contour::{contourize, EDGE_THRESHOLD};
use ncc::{Plane, Prepared, TemplateStats, COARSE_FACTOR};

use crate::error::{Error, Result};
use crate::frame::{BBox, Frame};
use crate::vision::{inpaint_with_mode, FillMode, InterventionFn};

pub const MIN_TEMPLATE_SIDE: u32 = 4;

/// True when `name` is a non-empty `[a-z0-9-]+` identifier.
pub fn is_valid_name(name: &str) -> bool {
    !name.is_empty()
        && name
            .bytes()
            .all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'-')
}

#[derive(Clone, Debug, PartialEq)]
pub struct MaskTemplate {
    pub name: String,
    pub image: Frame,
    pub contour_mode: bool,
}

impl MaskTemplate {
    pub fn new(name: impl Into<String>, image: Frame, contour_mode: bool) -> Result<Self> {
        let name = name.into();
        if !is_valid_name(&name) {
            return Err(Error::InvalidTemplate(format!("name {name:?} must match [a-z0-9-]+")));
        }
        let (w, h) = image.dimensions();
        if w < MIN_TEMPLATE_SIDE || h < MIN_TEMPLATE_SIDE {
            return Err(Error::InvalidTemplate(format!("{w}x{h} is smaller than 4x4")));
        }
        let t = Self {
            name,
            image,
            contour_mode,
        };
        if t.stats_at(1.0).is_none() {
            return Err(Error::FlatTemplate);
        }
        Ok(t)
    }

    fn plane(&self, img: &Frame) -> Plane {
        if self.contour_mode {
            Plane::gray(&contourize(img))
        } else {
            Plane::rgb(img)
        }
    }

    fn stats_at(&self, scale: f64) -> Option<TemplateStats> {
        let resized = if scale == 1.0 {
            self.image.clone()
        } else {
            self.image.scale_nearest(scale)
        };
        TemplateStats::new(self.plane(&resized))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    /// Picks FFT correlation when it is cheaper than direct summation.
    #[default]
    Auto,
    Direct,
    Fft,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchConfig {
    pub scales: Vec<f64>,
    pub score_threshold: f64,
    pub nms_iou: f64,
    pub stride: u32,
    /// Search a 4x box-downsampled pyramid level first, then refine around
    /// the coarse hits at full resolution with stride 1.
    #[serde(default)]
    pub coarse_to_fine: bool,
    /// Coarse-level score needed for a window to be refined.
    #[serde(default = "default_coarse_threshold")]
    pub coarse_threshold: f64,
    #[serde(default)]
    pub backend: Backend,
}

fn default_coarse_threshold() -> f64 {
    0.5
}

impl Default for MatchConfig {
    fn default() -> Self {
        Self {
            scales: vec![0.5, 0.63, 0.79, 1.0, 1.26, 1.59, 2.0],
            score_threshold: 0.80,
            nms_iou: 0.30,
            stride: 1,
            coarse_to_fine: false,
            coarse_threshold: default_coarse_threshold(),
            backend: Backend::Auto,
        }
    }
}

impl MatchConfig {
    pub fn with_scales(scales: Vec<f64>) -> Self {
        Self {
            scales,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.scales.is_empty() {
            return Err(Error::InvalidConfig("scale ladder is empty".into()));
        }
        if self.scales.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::InvalidConfig("scales must be positive".into()));
        }
        if self.scales.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidConfig("scales must be strictly increasing".into()));
        }
        for (name, v) in [
            ("score_threshold", self.score_threshold),
            ("nms_iou", self.nms_iou),
            ("coarse_threshold", self.coarse_threshold),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidConfig(format!("{name} {v} outside [0, 1]")));
            }
        }
        if self.stride == 0 {
            return Err(Error::InvalidConfig("stride must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Match {
    pub bbox: BBox,
    pub score: f64,
    pub scale: f64,
    pub template: String,
}

fn rank(a: &Match, b: &Match) -> std::cmp::Ordering {
    b.score
        .total_cmp(&a.score)
        .then(a.bbox.y.cmp(&b.bbox.y))
        .then(a.bbox.x.cmp(&b.bbox.x))
        .then(a.scale.total_cmp(&b.scale))
}

/// Greedy suppression: keeps the best-ranked match and drops any later one
/// whose IoU with a kept match reaches `iou`.
pub fn non_max_suppression(mut matches: Vec<Match>, iou: f64) -> Vec<Match> {
    matches.sort_by(rank);
    let mut kept: Vec<Match> = Vec::new();
    for m in matches {
        if kept.iter().all(|k| k.bbox.iou(&m.bbox) < iou) {
            kept.push(m);
        }
    }
    kept
}

/// A frame prepared for repeated matching (shared across templates).
pub struct PreparedFrame {
    rgb: Prepared,
    contour: std::sync::OnceLock<Prepared>,
    source: Frame,
}

impl PreparedFrame {
    pub fn new(frame: &Frame) -> Self {
        Self {
            rgb: Prepared::new(Plane::rgb(frame)),
            contour: std::sync::OnceLock::new(),
            source: frame.clone(),
        }
    }

    fn plane_for(&self, contour_mode: bool) -> &Prepared {
        if contour_mode {
            self.contour
                .get_or_init(|| Prepared::new(Plane::gray(&contourize(&self.source))))
        } else {
            &self.rgb
        }
    }
}

/// All windows scoring at least the threshold, before suppression.
pub fn candidate_matches(frame: &Frame, template: &MaskTemplate, cfg: &MatchConfig) -> Result<Vec<Match>> {
    cfg.validate()?;
    Ok(candidates_prepared(&PreparedFrame::new(frame), template, cfg))
}

fn candidates_prepared(frame: &PreparedFrame, template: &MaskTemplate, cfg: &MatchConfig) -> Vec<Match> {
    let prepared = frame.plane_for(template.contour_mode);
    let per_scale: Vec<Vec<Match>> = cfg
        .scales
        .par_iter()
        .map(|&scale| {
            let Some(stats) = template.stats_at(scale) else {
                return Vec::new();
            };
            let (tw, th) = (stats.plane.w, stats.plane.h);
            if tw > prepared.plane.w || th > prepared.plane.h {
                return Vec::new();
            }
            let hits = if cfg.coarse_to_fine {
                scan_coarse_to_fine(prepared, &stats, cfg)
            } else {
                scan(prepared, &stats, cfg)
            };
            hits.into_iter()
                .map(|(x, y, score)| Match {
                    bbox: BBox::new(x as u32, y as u32, tw as u32, th as u32),
                    score,
                    scale,
                    template: template.name.clone(),
                })
                .collect()
        })
        .collect();
    let mut all: Vec<Match> = per_scale.into_iter().flatten().collect();
    all.sort_by(rank);
    all
}

fn use_fft(prepared: &Prepared, t: &TemplateStats, stride: usize) -> bool {
    let (w, h) = (prepared.plane.w, prepared.plane.h);
    let positions = ((w - t.plane.w) / stride + 1) * ((h - t.plane.h) / stride + 1);
    let direct = positions as f64 * t.n as f64;
    let n = (w * h) as f64;
    // One forward per channel plus one inverse, each ~5 n log2 n flops.
    let fft = (t.plane.c + 1) as f64 * 5.0 * n * n.log2().max(1.0) * 2.0;
    direct > fft
}

fn scan(prepared: &Prepared, t: &TemplateStats, cfg: &MatchConfig) -> Vec<(usize, usize, f64)> {
    let stride = cfg.stride as usize;
    let (tw, th) = (t.plane.w, t.plane.h);
    let (vw, vh) = (prepared.plane.w - tw + 1, prepared.plane.h - th + 1);
    let fft = match cfg.backend {
        Backend::Direct => false,
        Backend::Fft => true,
        Backend::Auto => use_fft(prepared, t, stride),
    };
    let cross = fft.then(|| prepared.cross_fft(&t.plane));
    let mut out = Vec::new();
    for y in (0..vh).step_by(stride) {
        for x in (0..vw).step_by(stride) {
            let (s, q) = prepared.integral.window(x, y, tw, th);
            let c = match &cross {
                Some(c) => c[y * vw + x],
                None => ncc::cross_direct(&prepared.plane, &t.plane, x, y),
            };
            let score = ncc::score(t, s, q, c);
            if score >= cfg.score_threshold {
                out.push((x, y, score));
            }
        }
    }
    out
}

fn scan_coarse_to_fine(prepared: &Prepared, t: &TemplateStats, cfg: &MatchConfig) -> Vec<(usize, usize, f64)> {
    let coarse_frame = prepared.coarse();
    let coarse_t = t
        .plane
        .downsample(COARSE_FACTOR)
        .filter(|p| p.w >= 2 && p.h >= 2)
        .and_then(TemplateStats::new);
    let (Some(coarse_frame), Some(coarse_t)) = (coarse_frame, coarse_t) else {
        return scan(prepared, t, &MatchConfig { stride: 1, ..cfg.clone() });
    };
    if coarse_t.plane.w > coarse_frame.plane.w || coarse_t.plane.h > coarse_frame.plane.h {
        return scan(prepared, t, &MatchConfig { stride: 1, ..cfg.clone() });
    }

    let (tw, th) = (t.plane.w, t.plane.h);
    let (vw, vh) = (prepared.plane.w - tw + 1, prepared.plane.h - th + 1);
    let mut visited = vec![false; vw * vh];
    let mut out = Vec::new();
    let f = COARSE_FACTOR;
    let coarse_cfg = MatchConfig {
        stride: 1,
        score_threshold: cfg.coarse_threshold,
        ..cfg.clone()
    };
    for (cx, cy, _) in scan(&coarse_frame, &coarse_t, &coarse_cfg) {
        {
            let (x0, y0) = ((cx * f).saturating_sub(f), (cy * f).saturating_sub(f));
            for y in y0..(cy * f + f + 1).min(vh) {
                for x in x0..(cx * f + f + 1).min(vw) {
                    let i = y * vw + x;
                    if std::mem::replace(&mut visited[i], true) {
                        continue;
                    }
                    let score = prepared.score_at(t, x, y);
                    if score >= cfg.score_threshold {
                        out.push((x, y, score));
                    }
                }
            }
        }
    }
    out
}

/// Matches one template, suppresses overlaps and sorts by descending score.
pub fn match_template(frame: &Frame, template: &MaskTemplate, cfg: &MatchConfig) -> Result<Vec<Match>> {
    let candidates = candidate_matches(frame, template, cfg)?;
    Ok(non_max_suppression(candidates, cfg.nms_iou))
}

/// Matches every template against one frame. Results are keyed by template
/// name; a failure for one template does not affect the others.
pub fn match_all(
    frame: &Frame,
    templates: &[MaskTemplate],
    cfg: &MatchConfig,
) -> BTreeMap<String, Result<Vec<Match>>> {
    if let Err(e) = cfg.validate() {
        let msg = e.to_string();
        return templates
            .iter()
            .map(|t| (t.name.clone(), Err(Error::InvalidConfig(msg.clone()))))
            .collect();
    }
    let prepared = PreparedFrame::new(frame);
    let results: Vec<(String, Result<Vec<Match>>)> = templates
        .par_iter()
        .map(|t| {
            let found = non_max_suppression(candidates_prepared(&prepared, t, cfg), cfg.nms_iou);
            (t.name.clone(), Ok(found))
        })
        .collect();
    results.into_iter().collect()
}

/// Inpaints every surviving match of `template` with the modal color of the
/// matched region, best match first.
pub fn occlusion_intervention(template: MaskTemplate, cfg: MatchConfig) -> InterventionFn {
    occlusion_intervention_with(template, cfg, FillMode::Region)
}

pub fn occlusion_intervention_with(template: MaskTemplate, cfg: MatchConfig, fill: FillMode) -> InterventionFn {
    let id = format!("mask-{}", template.name);
    let template = Arc::new(template);
    InterventionFn::new(id, move |frame| {
        let Ok(matches) = match_template(frame, &template, &cfg) else {
            return frame.clone();
        };
        matches.iter().fold(frame.clone(), |acc, m| {
            inpaint_with_mode(&acc, &m.bbox, None, fill).unwrap_or(acc)
        })
    })
}
