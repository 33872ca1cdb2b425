//! Deterministic synthetic interface scenes with ground truth.
//!
//! Two device families ("mobile", "desktop") each have three platforms.
//! Within a family every element kind is pixel-identical across platforms;
//! between families the designs differ slightly. Element palettes are kept
//! light so the only dark ink in a scene is its text.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::font::GlyphFont;
use crate::frame::{BBox, Color, Frame};
use crate::learn::{Label, Lexicon};
use crate::text::render_text;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Mobile,
    Desktop,
}

impl Family {
    pub const ALL: [Family; 2] = [Family::Mobile, Family::Desktop];

    pub fn name(self) -> &'static str {
        match self {
            Family::Mobile => "mobile",
            Family::Desktop => "desktop",
        }
    }

    pub fn platforms(self) -> Vec<Platform> {
        Platform::ALL.iter().copied().filter(|p| p.family() == self).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Platform {
    Android,
    Ios,
    MobileWeb,
    Windows,
    Macos,
    Linux,
}

impl Platform {
    pub const ALL: [Platform; 6] = [
        Platform::Android,
        Platform::Ios,
        Platform::MobileWeb,
        Platform::Windows,
        Platform::Macos,
        Platform::Linux,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Platform::Android => "android",
            Platform::Ios => "ios",
            Platform::MobileWeb => "mobile-web",
            Platform::Windows => "windows",
            Platform::Macos => "macos",
            Platform::Linux => "linux",
        }
    }

    pub fn parse(name: &str) -> Result<Platform> {
        Platform::ALL
            .into_iter()
            .find(|p| p.name() == name)
            .ok_or_else(|| Error::NotFound(format!("platform {name:?}")))
    }

    pub fn family(self) -> Family {
        match self {
            Platform::Android | Platform::Ios | Platform::MobileWeb => Family::Mobile,
            _ => Family::Desktop,
        }
    }

    pub fn background(self) -> Color {
        match self {
            Platform::Android => Color::new(250, 250, 250),
            Platform::Ios => Color::new(242, 242, 247),
            Platform::MobileWeb => Color::new(255, 255, 255),
            Platform::Windows => Color::new(243, 243, 243),
            Platform::Macos => Color::new(236, 236, 238),
            Platform::Linux => Color::new(246, 245, 244),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ElementKind {
    StoriesBar,
    LikeMetric,
    ShareButton,
    RecommendationCard,
}

impl ElementKind {
    pub const ALL: [ElementKind; 4] = [
        ElementKind::StoriesBar,
        ElementKind::LikeMetric,
        ElementKind::ShareButton,
        ElementKind::RecommendationCard,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ElementKind::StoriesBar => "stories_bar",
            ElementKind::LikeMetric => "like_metric",
            ElementKind::ShareButton => "share_button",
            ElementKind::RecommendationCard => "recommendation_card",
        }
    }

    /// The base raster of this element for a device family.
    pub fn raster(self, family: Family) -> Frame {
        let mobile = family == Family::Mobile;
        match self {
            ElementKind::StoriesBar => stories_bar(mobile),
            ElementKind::LikeMetric => like_metric(mobile),
            ElementKind::ShareButton => share_button(mobile),
            ElementKind::RecommendationCard => recommendation_card(mobile),
        }
    }
}

fn disc(f: &mut Frame, cx: f64, cy: f64, r: f64, c: Color) {
    for y in 0..f.height() {
        for x in 0..f.width() {
            let (dx, dy) = (x as f64 + 0.5 - cx, y as f64 + 0.5 - cy);
            if dx * dx + dy * dy <= r * r {
                f.set(x, y, c);
            }
        }
    }
}

fn stories_bar(mobile: bool) -> Frame {
    let panel = if mobile { Color::new(232, 232, 240) } else { Color::new(225, 235, 245) };
    let (w, h, n, r) = if mobile { (150, 34, 5, 13.0) } else { (190, 40, 6, 13.0) };
    let mut f = Frame::filled(w, h, panel);
    let rings = [
        Color::new(240, 150, 80),
        Color::new(230, 120, 200),
        Color::new(250, 200, 90),
        Color::new(120, 170, 250),
        Color::new(150, 210, 140),
        Color::new(200, 160, 240),
    ];
    let step = w as f64 / n as f64;
    for i in 0..n {
        let cx = step * (i as f64 + 0.5);
        let ring = if mobile { rings[i] } else { rings[(i + 2) % rings.len()] };
        disc(&mut f, cx, h as f64 / 2.0, r, ring);
        disc(&mut f, cx, h as f64 / 2.0, r - 3.0, Color::new(250, 250, 250));
        let face = Color::new(180 + (i as u8 * 13), 200, 170 + (i as u8 * 11));
        disc(&mut f, cx, h as f64 / 2.0, r - 5.0, face);
    }
    f
}

fn like_metric(mobile: bool) -> Frame {
    let heart = if mobile { Color::new(240, 110, 130) } else { Color::new(235, 130, 160) };
    let (w, h) = if mobile { (40, 16) } else { (48, 18) };
    let mut f = Frame::filled(w, h, Color::new(248, 236, 240));
    disc(&mut f, 5.0, 6.0, 4.0, heart);
    disc(&mut f, 11.0, 6.0, 4.0, heart);
    for y in 6..14u32 {
        let half = 14u32.saturating_sub(y);
        for x in 8u32.saturating_sub(half)..(8 + half).min(w) {
            f.set(x, y, heart);
        }
    }
    let bars = if mobile { [10u32, 6, 12] } else { [8, 12, 5] };
    for (i, len) in bars.iter().enumerate() {
        let y = 3 + i as u32 * 4;
        f.fill_rect(&BBox::new(20, y, *len * 2 - 4, 2), Color::new(160, 160, 175));
    }
    f
}

fn share_button(mobile: bool) -> Frame {
    let (w, h) = if mobile { (24, 24) } else { (28, 20) };
    let bg = if mobile { Color::new(200, 225, 250) } else { Color::new(210, 240, 215) };
    let ink = Color::new(90, 150, 230);
    let mut f = Frame::filled(w, h, bg);
    for (x, y) in [(0, 0), (w - 1, 0), (0, h - 1), (w - 1, h - 1)] {
        f.set(x, y, Color::new(245, 245, 245));
    }
    let cy = h / 2;
    f.fill_rect(&BBox::new(5, cy - 1, w - 12, 3), Color::new(140, 170, 230));
    for i in 0..6u32 {
        f.fill_rect(&BBox::new(w - 12 + i, cy - 5 + i, 2, 11 - 2 * i), ink);
    }
    if mobile {
        let edge = Color::new(150, 185, 230);
        f.fill_rect(&BBox::new(1, 0, w - 2, 1), edge);
        f.fill_rect(&BBox::new(1, h - 1, w - 2, 1), edge);
        f.fill_rect(&BBox::new(0, 1, 1, h - 2), edge);
        f.fill_rect(&BBox::new(w - 1, 1, 1, h - 2), edge);
    } else {
        f.fill_rect(&BBox::new(3, 3, 3, h - 6), Color::new(150, 200, 160));
    }
    f
}

fn recommendation_card(mobile: bool) -> Frame {
    let (w, h) = if mobile { (90, 60) } else { (120, 70) };
    let mut f = Frame::filled(w, h, Color::new(252, 252, 252));
    f.fill_rect(&BBox::new(0, 0, w, 1), Color::new(210, 210, 215));
    f.fill_rect(&BBox::new(0, h - 1, w, 1), Color::new(210, 210, 215));
    let thumb = if mobile { BBox::new(4, 4, 36, h - 8) } else { BBox::new(4, 4, 56, 40) };
    let thumb_color = if mobile { Color::new(170, 200, 235) } else { Color::new(235, 200, 160) };
    f.fill_rect(&thumb, thumb_color);
    disc(&mut f, thumb.x as f64 + 12.0, thumb.y as f64 + 12.0, 6.0, Color::new(250, 230, 140));
    let tx = if mobile { 46 } else { 64 };
    for (i, len) in [36u32, 28, 40, 20].iter().enumerate() {
        let y = 6 + i as u32 * 9;
        if y + 4 < h {
            f.fill_rect(&BBox::new(tx, y, (*len).min(w - tx - 3), 4), Color::new(200, 200, 210));
        }
    }
    if !mobile {
        f.fill_rect(&BBox::new(4, 50, 80, 12), Color::new(190, 220, 200));
    }
    f
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    pub kind: ElementKind,
    pub bbox: BBox,
    pub scale: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TextTruth {
    pub text: String,
    /// The rendered block including its padding.
    pub bbox: BBox,
    pub label: Label,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SceneTruth {
    pub placements: Vec<Placement>,
    pub texts: Vec<TextTruth>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneParams {
    pub width: u32,
    pub height: u32,
    pub scales: Vec<f64>,
    pub min_texts: usize,
    pub max_texts: usize,
    /// Marker probability for scene sentences (1.0 makes them separable).
    pub marker_prob: f64,
}

impl Default for SceneParams {
    fn default() -> Self {
        Self {
            width: 640,
            height: 360,
            scales: vec![0.79, 1.0, 1.0, 1.0, 1.26],
            min_texts: 2,
            max_texts: 4,
            marker_prob: 1.0,
        }
    }
}

/// Clearance kept around every item so text lines never merge with
/// neighbors.
const MARGIN: u32 = 14;

fn free(occupied: &[BBox], b: &BBox) -> bool {
    let grown = BBox::new(
        b.x.saturating_sub(MARGIN),
        b.y.saturating_sub(MARGIN),
        b.w + 2 * MARGIN,
        b.h + 2 * MARGIN,
    );
    occupied.iter().all(|o| o.intersection(&grown).is_none())
}

fn place(rng: &mut ChaCha8Rng, occupied: &[BBox], w: u32, h: u32, fw: u32, fh: u32) -> Option<BBox> {
    if w + 4 > fw || h + 4 > fh {
        return None;
    }
    (0..200).find_map(|_| {
        let b = BBox::new(rng.gen_range(2..=fw - w - 2), rng.gen_range(2..=fh - h - 2), w, h);
        free(occupied, &b).then_some(b)
    })
}

pub fn gen_scene(platform: Platform, seed: u64, width: u32, height: u32) -> Result<(Frame, SceneTruth)> {
    gen_scene_with(
        platform,
        seed,
        &SceneParams {
            width,
            height,
            ..SceneParams::default()
        },
    )
}

pub fn gen_scene_with(platform: Platform, seed: u64, params: &SceneParams) -> Result<(Frame, SceneTruth)> {
    let (fw, fh) = (params.width, params.height);
    if fw < 320 || fh < 240 {
        return Err(Error::InvalidArgument(format!("scene size {fw}x{fh} is below 320x240")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(31).wrapping_add(platform as u64 + 1));
    let bg = platform.background();
    let mut frame = Frame::filled(fw, fh, bg);
    let mut truth = SceneTruth::default();
    let mut occupied: Vec<BBox> = Vec::new();

    let mut kinds = ElementKind::ALL.to_vec();
    kinds.shuffle(&mut rng);
    let n_kinds = rng.gen_range(2..=kinds.len());
    for &kind in &kinds[..n_kinds] {
        let base = kind.raster(platform.family());
        let copies = if matches!(kind, ElementKind::LikeMetric | ElementKind::ShareButton) {
            rng.gen_range(1..=3)
        } else {
            1
        };
        for _ in 0..copies {
            let scale = *params.scales.choose(&mut rng).unwrap_or(&1.0);
            let raster = if scale == 1.0 { base.clone() } else { base.scale_nearest(scale) };
            if let Some(b) = place(&mut rng, &occupied, raster.width(), raster.height(), fw, fh) {
                frame.paste(&raster, b.x as i64, b.y as i64);
                occupied.push(b);
                truth.placements.push(Placement { kind, bbox: b, scale });
            }
        }
    }

    let font = GlyphFont::standard().clone().with_colors(Color::BLACK, bg);
    let lex = Lexicon::standard();
    let n_texts = rng.gen_range(params.min_texts..=params.max_texts);
    for i in 0..n_texts {
        let label = if i % 2 == 0 { Label::Positive } else { Label::Negative };
        let mut sentence = lex.sentence(&mut rng, label, 3..=6, params.marker_prob);
        let max_chars = ((fw - 2 * MARGIN) / 6).saturating_sub(2) as usize;
        while sentence.len() > max_chars {
            match sentence.rfind(' ') {
                Some(cut) => sentence.truncate(cut),
                None => break,
            }
        }
        let raster = render_text(&sentence, &font)?;
        if let Some(b) = place(&mut rng, &occupied, raster.width(), raster.height(), fw, fh) {
            frame.paste(&raster, b.x as i64, b.y as i64);
            occupied.push(b);
            truth.texts.push(TextTruth { text: sentence, bbox: b, label });
        }
    }
    Ok((frame, truth))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub platform: Platform,
    pub family: Family,
    pub seed: u64,
    pub path: String,
    pub truth: SceneTruth,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub width: u32,
    pub height: u32,
    pub scenes: Vec<ManifestEntry>,
}

#[derive(Clone, Debug)]
pub struct Scene {
    pub platform: Platform,
    pub seed: u64,
    pub frame: Frame,
    pub truth: SceneTruth,
}

/// Every `platform x seed` scene, platform-major.
pub fn corpus_matrix(seeds: &[u64], platforms: &[Platform], params: &SceneParams) -> Result<(Vec<Scene>, Manifest)> {
    let mut scenes = Vec::new();
    let mut entries = Vec::new();
    for &platform in platforms {
        for &seed in seeds {
            let (frame, truth) = gen_scene_with(platform, seed, params)?;
            entries.push(ManifestEntry {
                platform,
                family: platform.family(),
                seed,
                path: format!("{}/{seed}.png", platform.name()),
                truth: truth.clone(),
            });
            scenes.push(Scene {
                platform,
                seed,
                frame,
                truth,
            });
        }
    }
    let manifest = Manifest {
        width: params.width,
        height: params.height,
        scenes: entries,
    };
    Ok((scenes, manifest))
}

/// Writes `<dir>/<platform>/<seed>.png` and `<dir>/manifest.json`.
pub fn write_corpus(dir: &Path, scenes: &[Scene], manifest: &Manifest) -> Result<()> {
    for (scene, entry) in scenes.iter().zip(&manifest.scenes) {
        let path = dir.join(&entry.path);
        std::fs::create_dir_all(path.parent().expect("entry path has a parent"))?;
        scene.frame.save_png(&path)?;
    }
    std::fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(manifest)?)?;
    Ok(())
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    Ok(serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json"))?)?)
}

/// Detection counts for one mask against one set of scenes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BreadthCell {
    pub kind: ElementKind,
    pub mask_family: Family,
    pub scene_family: Family,
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
}

impl BreadthCell {
    pub fn precision(&self) -> f64 {
        let found = self.true_positives + self.false_positives;
        if found == 0 {
            1.0
        } else {
            self.true_positives as f64 / found as f64
        }
    }

    pub fn recall(&self) -> f64 {
        let actual = self.true_positives + self.false_negatives;
        if actual == 0 {
            1.0
        } else {
            self.true_positives as f64 / actual as f64
        }
    }

    pub fn perfect(&self) -> bool {
        self.false_positives == 0 && self.false_negatives == 0
    }
}

/// The first scale-1.0 placement of `kind` in `scenes`: where a user
/// would draw the annotation box.
pub fn annotation_source(scenes: &[Scene], kind: ElementKind) -> Option<(&Scene, &Placement)> {
    scenes.iter().find_map(|s| {
        s.truth
            .placements
            .iter()
            .find(|p| p.kind == kind && p.scale == 1.0)
            .map(|p| (s, p))
    })
}

/// Greedy one-to-one assignment at IoU >= 0.5; returns (tp, fp, fn).
pub fn score_detections(found: &[BBox], truth: &[BBox]) -> (usize, usize, usize) {
    let mut used = vec![false; truth.len()];
    let mut tp = 0;
    for f in found {
        let best = truth
            .iter()
            .enumerate()
            .filter(|(i, t)| !used[*i] && t.iou(f) >= 0.5)
            .max_by(|a, b| a.1.iou(f).total_cmp(&b.1.iou(f)));
        if let Some((i, _)) = best {
            used[i] = true;
            tp += 1;
        }
    }
    (tp, found.len() - tp, truth.len() - tp)
}

/// Runs `mask` over every scene and scores it against placements of `kind`.
pub fn evaluate_mask(
    mask: &crate::mask::MaskTemplate,
    kind: ElementKind,
    mask_family: Family,
    scenes: &[Scene],
    cfg: &crate::mask::MatchConfig,
) -> Result<BreadthCell> {
    use rayon::prelude::*;
    let per_scene = scenes
        .par_iter()
        .map(|scene| {
            let found: Vec<BBox> = crate::mask::match_template(&scene.frame, mask, cfg)?
                .into_iter()
                .map(|m| m.bbox)
                .collect();
            let truth: Vec<BBox> = scene.truth.placements.iter().filter(|p| p.kind == kind).map(|p| p.bbox).collect();
            Ok(score_detections(&found, &truth))
        })
        .collect::<Result<Vec<_>>>()?;
    let scene_family = scenes.first().map(|s| s.platform.family()).unwrap_or(mask_family);
    Ok(per_scene.into_iter().fold(
        BreadthCell {
            kind,
            mask_family,
            scene_family,
            true_positives: 0,
            false_positives: 0,
            false_negatives: 0,
        },
        |mut cell, (tp, fp, fn_)| {
            cell.true_positives += tp;
            cell.false_positives += fp;
            cell.false_negatives += fn_;
            cell
        },
    ))
}

/// Per-class line counts after censoring one or more scenes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CensorTally {
    pub positive_lines: usize,
    pub positive_censored: usize,
    pub negative_lines: usize,
    pub negative_censored: usize,
}

impl CensorTally {
    /// A line counts as censored when any censored box overlaps it.
    pub fn add(&mut self, truth: &SceneTruth, censored: &[BBox]) {
        for t in &truth.texts {
            let hit = censored.iter().any(|c| c.intersection(&t.bbox).is_some());
            match t.label {
                Label::Positive => {
                    self.positive_lines += 1;
                    self.positive_censored += hit as usize;
                }
                Label::Negative => {
                    self.negative_lines += 1;
                    self.negative_censored += hit as usize;
                }
            }
        }
    }

    pub fn positive_rate(&self) -> f64 {
        if self.positive_lines == 0 {
            return 1.0;
        }
        self.positive_censored as f64 / self.positive_lines as f64
    }
}
