//! Pixel-level intervention primitives: modal color, majority-pixel
//! inpainting, warning labels, and the sequential compositor.

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::font::GlyphFont;
use crate::frame::{BBox, Color, Frame};

/// Modal RGB triple over `region` (or the whole frame). Ties go to the
/// lexicographically smallest color.
pub fn mode_color(frame: &Frame, region: Option<&BBox>) -> Result<Color> {
    let region = match region {
        Some(r) => {
            frame.check_region(r)?;
            *r
        }
        None => frame.bounds(),
    };
    let mut counts: HashMap<u32, u32> = HashMap::new();
    for y in region.y..region.bottom() {
        let row = frame.row(y);
        for px in row[region.x as usize * 3..region.right() as usize * 3].chunks_exact(3) {
            let key = (px[0] as u32) << 16 | (px[1] as u32) << 8 | px[2] as u32;
            *counts.entry(key).or_default() += 1;
        }
    }
    let (key, _) = counts
        .into_iter()
        .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
        .expect("region is non-empty");
    Ok(Color::new((key >> 16) as u8, (key >> 8) as u8, key as u8))
}

/// Where the default inpaint color is sampled from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FillMode {
    #[default]
    Region,
    Frame,
}

/// Fills `region` with `fill`, or with the region's modal color when `fill`
/// is `None`.
pub fn inpaint(frame: &Frame, region: &BBox, fill: Option<Color>) -> Result<Frame> {
    inpaint_with_mode(frame, region, fill, FillMode::Region)
}

pub fn inpaint_with_mode(
    frame: &Frame,
    region: &BBox,
    fill: Option<Color>,
    mode: FillMode,
) -> Result<Frame> {
    frame.check_region(region)?;
    let color = match (fill, mode) {
        (Some(c), _) => c,
        (None, FillMode::Region) => mode_color(frame, Some(region))?,
        (None, FillMode::Frame) => mode_color(frame, None)?,
    };
    let mut out = frame.clone();
    out.fill_rect(region, color);
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LabelStyle {
    pub border: Color,
    pub border_px: u32,
    pub text: Color,
}

impl Default for LabelStyle {
    fn default() -> Self {
        Self {
            border: Color::RED,
            border_px: 2,
            text: Color::RED,
        }
    }
}

/// Outlines `region` with a border drawn on its inner edge and writes `text`
/// inside it, clipped to the region.
pub fn draw_label(frame: &Frame, region: &BBox, text: &str) -> Result<Frame> {
    draw_label_styled(frame, region, text, &LabelStyle::default())
}

pub fn draw_label_styled(
    frame: &Frame,
    region: &BBox,
    text: &str,
    style: &LabelStyle,
) -> Result<Frame> {
    frame.check_region(region)?;
    let mut out = frame.clone();
    let bw = style.border_px.min(region.w).min(region.h);
    let edges = [
        BBox::new(region.x, region.y, region.w, bw),
        BBox::new(region.x, region.bottom() - bw, region.w, bw),
        BBox::new(region.x, region.y, bw, region.h),
        BBox::new(region.right() - bw, region.y, bw, region.h),
    ];
    for e in edges.iter().filter(|e| !e.is_empty()) {
        out.fill_rect(e, style.border);
    }

    let font = GlyphFont::standard();
    let origin_x = region.x + bw + 1;
    let origin_y = region.y + bw + 1;
    for (x, y) in font.ink_positions(text)? {
        let (px, py) = (origin_x + x, origin_y + y);
        if region.contains_point(px, py) {
            out.set(px, py, style.text);
        }
    }
    Ok(out)
}

type ApplyFn = dyn Fn(&Frame) -> Frame + Send + Sync;

/// A named pure frame transformation.
#[derive(Clone)]
pub struct InterventionFn {
    pub id: String,
    apply: Arc<ApplyFn>,
}

impl fmt::Debug for InterventionFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("InterventionFn").field("id", &self.id).finish()
    }
}

impl InterventionFn {
    pub fn new(id: impl Into<String>, apply: impl Fn(&Frame) -> Frame + Send + Sync + 'static) -> Self {
        Self {
            id: id.into(),
            apply: Arc::new(apply),
        }
    }

    pub fn identity(id: impl Into<String>) -> Self {
        Self::new(id, Frame::clone)
    }

    /// Runs the transformation without the dimension check.
    pub fn call(&self, frame: &Frame) -> Frame {
        (self.apply)(frame)
    }

    pub fn apply(&self, frame: &Frame) -> Result<Frame> {
        let out = self.call(frame);
        if out.dimensions() != frame.dimensions() {
            return Err(Error::ContractViolation(self.id.clone()));
        }
        Ok(out)
    }
}

/// Applies `chain` in order; later interventions see earlier outputs.
pub fn apply_interventions(frame: &Frame, chain: &[InterventionFn]) -> Result<Frame> {
    chain
        .iter()
        .try_fold(frame.clone(), |acc, f| f.apply(&acc))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn checker(w: u32, h: u32) -> Frame {
        Frame::from_fn(w, h, |x, y| {
            if (x + y) % 2 == 0 {
                Color::BLACK
            } else {
                Color::WHITE
            }
        })
    }

    #[test]
    fn mode_of_uniform_frame() {
        let f = Frame::filled(4, 4, Color::new(10, 20, 30));
        assert_eq!(mode_color(&f, None).unwrap(), Color::new(10, 20, 30));
    }

    #[test]
    fn mode_tie_breaks_lexicographically() {
        let f = Frame::new(2, 1, vec![255, 255, 255, 0, 0, 0]).unwrap();
        assert_eq!(mode_color(&f, None).unwrap(), Color::BLACK);
    }

    #[test]
    fn mode_matches_histogram_oracle() {
        // 40 red, 24 blue on an 8x8 grid.
        let f = Frame::from_fn(8, 8, |x, y| {
            if y * 8 + x < 40 {
                Color::new(200, 0, 0)
            } else {
                Color::new(0, 0, 200)
            }
        });
        let mut hist: Vec<(Color, usize)> = Vec::new();
        for y in 0..8 {
            for x in 0..8 {
                let c = f.get(x, y);
                match hist.iter_mut().find(|(k, _)| *k == c) {
                    Some((_, n)) => *n += 1,
                    None => hist.push((c, 1)),
                }
            }
        }
        let oracle = hist.iter().max_by_key(|(_, n)| *n).unwrap().0;
        assert_eq!(oracle, Color::new(200, 0, 0));
        assert_eq!(mode_color(&f, Some(&BBox::new(0, 0, 8, 8))).unwrap(), oracle);
    }

    #[test]
    fn mode_rejects_out_of_bounds() {
        let f = Frame::filled(4, 4, Color::WHITE);
        assert!(matches!(
            mode_color(&f, Some(&BBox::new(2, 2, 3, 1))),
            Err(Error::Bounds { .. })
        ));
    }

    #[test]
    fn inpaint_uniform_is_identity() {
        let f = Frame::filled(10, 10, Color::new(128, 128, 128));
        assert_eq!(inpaint(&f, &BBox::new(2, 3, 4, 5), None).unwrap(), f);
    }

    #[test]
    fn inpaint_explicit_fill() {
        let f = checker(10, 10);
        let r = BBox::new(2, 2, 3, 3);
        let out = inpaint(&f, &r, Some(Color::BLACK)).unwrap();
        for y in 0..10 {
            for x in 0..10 {
                let expected = if r.contains_point(x, y) { Color::BLACK } else { f.get(x, y) };
                assert_eq!(out.get(x, y), expected);
            }
        }
    }

    #[test]
    fn inpaint_checker_region_goes_black() {
        // 3x3 at the origin of a checkerboard: 5 black, 4 white.
        let f = checker(6, 6);
        let r = BBox::new(0, 0, 3, 3);
        let out = inpaint(&f, &r, None).unwrap();
        assert!((0..3).all(|y| (0..3).all(|x| out.get(x, y) == Color::BLACK)));
    }

    #[test]
    fn frame_fill_mode_samples_whole_frame() {
        let mut f = Frame::filled(10, 10, Color::WHITE);
        f.fill_rect(&BBox::new(0, 0, 4, 4), Color::new(9, 9, 9));
        let r = BBox::new(0, 0, 4, 4);
        let out = inpaint_with_mode(&f, &r, None, FillMode::Frame).unwrap();
        assert_eq!(out.get(1, 1), Color::WHITE);
        let out = inpaint_with_mode(&f, &r, None, FillMode::Region).unwrap();
        assert_eq!(out.get(1, 1), Color::new(9, 9, 9));
    }

    #[test]
    fn label_with_empty_text_is_border_only() {
        let f = Frame::filled(20, 20, Color::WHITE);
        let r = BBox::new(5, 5, 10, 8);
        let out = draw_label(&f, &r, "").unwrap();
        for y in 0..20 {
            for x in 0..20 {
                let inner = BBox::new(7, 7, 6, 4);
                let expected = if r.contains_point(x, y) && !inner.contains_point(x, y) {
                    Color::RED
                } else {
                    Color::WHITE
                };
                assert_eq!(out.get(x, y), expected, "({x},{y})");
            }
        }
    }

    #[test]
    fn label_flush_with_edge_stays_in_bounds() {
        let f = Frame::filled(30, 12, Color::WHITE);
        let out = draw_label(&f, &BBox::new(10, 2, 20, 10), "WARNING LABEL").unwrap();
        assert_eq!(out.dimensions(), (30, 12));
        assert!(draw_label(&f, &BBox::new(10, 2, 21, 10), "x").is_err());
    }

    #[test]
    fn chain_order_later_wins() {
        let f = Frame::filled(10, 10, Color::new(50, 50, 50));
        let r1 = BBox::new(0, 0, 6, 6);
        let r2 = BBox::new(4, 4, 6, 6);
        let chain = vec![
            InterventionFn::new("black", move |fr| inpaint(fr, &r1, Some(Color::BLACK)).unwrap()),
            InterventionFn::new("white", move |fr| inpaint(fr, &r2, Some(Color::WHITE)).unwrap()),
        ];
        let out = apply_interventions(&f, &chain).unwrap();
        assert_eq!(out.get(5, 5), Color::WHITE);
        assert_eq!(out.get(1, 1), Color::BLACK);
        assert_eq!(apply_interventions(&f, &[]).unwrap(), f);
    }

    #[test]
    fn chain_rejects_resizing_intervention() {
        let f = Frame::filled(10, 10, Color::WHITE);
        let chain = vec![
            InterventionFn::identity("ok"),
            InterventionFn::new("shrink", |fr| fr.crop(&BBox::new(0, 0, 5, 5)).unwrap()),
        ];
        match apply_interventions(&f, &chain) {
            Err(Error::ContractViolation(id)) => assert_eq!(id, "shrink"),
            other => panic!("unexpected {other:?}"),
        }
    }
}
