#![allow(dead_code)]

pub mod walkthrough;

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use screenome::mask::{candidate_matches, Backend, MaskTemplate, MatchConfig};
use screenome::{BBox, Color, Frame};

/// The font asset parsed directly, without the library's loader.
pub fn font_table() -> BTreeMap<char, [u8; 7]> {
    let raw = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/assets/font5x7.json")).unwrap();
    let map: BTreeMap<String, Vec<u8>> = serde_json::from_str(&raw).unwrap();
    map.into_iter()
        .map(|(k, v)| (k.chars().next().unwrap(), v.try_into().unwrap()))
        .collect()
}

/// Reference label rasterizer: 2 px red inner border, red glyph ink
/// starting 3 px in from the top-left corner, everything clipped to the
/// region.
pub fn label_oracle(frame: &Frame, region: BBox, text: &str) -> Frame {
    let font = font_table();
    let mut out = frame.clone();
    let red = Color::new(255, 0, 0);
    for y in region.y..region.y + region.h {
        for x in region.x..region.x + region.w {
            let edge = x < region.x + 2 || y < region.y + 2 || x + 2 >= region.x + region.w || y + 2 >= region.y + region.h;
            if edge {
                out.set(x, y, red);
            }
        }
    }
    for (i, c) in text.chars().enumerate() {
        let rows = font[&c];
        for (row, bits) in rows.iter().enumerate() {
            for col in 0..5u32 {
                if bits >> (4 - col) & 1 == 1 {
                    let x = region.x + 3 + i as u32 * 6 + col;
                    let y = region.y + 3 + row as u32;
                    if x < region.x + region.w && y < region.y + region.h {
                        out.set(x, y, red);
                    }
                }
            }
        }
    }
    out
}

/// Nearest-neighbor resize written out independently:
/// target `(ceil(w*s), ceil(h*s))`, source index `floor(i * src / dst)`.
pub fn oracle_resize(img: &Frame, scale: f64) -> Frame {
    let dim = |d: u32| {
        let v = d as f64 * scale;
        if (v - v.round()).abs() < 1e-9 { v.round() as u32 } else { v.ceil() as u32 }.max(1)
    };
    let (w, h) = (dim(img.width()), dim(img.height()));
    Frame::from_fn(w, h, |x, y| {
        img.get(
            (x as u64 * img.width() as u64 / w as u64) as u32,
            (y as u64 * img.height() as u64 / h as u64) as u32,
        )
    })
}

fn samples(img: &Frame, x0: u32, y0: u32, w: u32, h: u32) -> Vec<f64> {
    let mut v = Vec::with_capacity((w * h * 3) as usize);
    for y in y0..y0 + h {
        for x in x0..x0 + w {
            v.extend(img.get(x, y).to_array().map(f64::from));
        }
    }
    v
}

/// Zero-mean NCC of two equal-length sample vectors in the textbook
/// mean-subtracted form, clamped below at 0; flat inputs score 0.
pub fn ncc(t: &[f64], w: &[f64]) -> f64 {
    let n = t.len() as f64;
    let (mt, mw) = (t.iter().sum::<f64>() / n, w.iter().sum::<f64>() / n);
    let (mut num, mut vt, mut vw) = (0.0, 0.0, 0.0);
    for (a, b) in t.iter().zip(w) {
        num += (a - mt) * (b - mw);
        vt += (a - mt) * (a - mt);
        vw += (b - mw) * (b - mw);
    }
    if vt <= 0.0 || vw <= 0.0 {
        return 0.0;
    }
    (num / (vt * vw).sqrt()).max(0.0)
}

/// Every `(x, y, scale, score)` at or above `threshold`, by exhaustive
/// search over scales and positions.
pub fn brute_force(frame: &Frame, template: &Frame, scales: &[f64], threshold: f64) -> Vec<(u32, u32, f64, f64)> {
    let mut out = Vec::new();
    for &s in scales {
        let t = oracle_resize(template, s);
        if t.width() > frame.width() || t.height() > frame.height() {
            continue;
        }
        let ts = samples(&t, 0, 0, t.width(), t.height());
        for y in 0..=frame.height() - t.height() {
            for x in 0..=frame.width() - t.width() {
                let score = ncc(&ts, &samples(frame, x, y, t.width(), t.height()));
                if score >= threshold {
                    out.push((x, y, s, score));
                }
            }
        }
    }
    out
}

/// A frame of random axis-aligned blocks drawn from a small palette.
pub fn blocky_frame(rng: &mut impl Rng, w: u32, h: u32) -> Frame {
    let palette: Vec<Color> = (0..4).map(|_| Color::new(rng.gen(), rng.gen(), rng.gen())).collect();
    let mut f = Frame::filled(w, h, palette[0]);
    for _ in 0..rng.gen_range(3..12) {
        let bw = rng.gen_range(1..=w.min(24));
        let bh = rng.gen_range(1..=h.min(24));
        let b = BBox::new(rng.gen_range(0..=w - bw), rng.gen_range(0..=h - bh), bw, bh);
        f.fill_rect(&b, palette[rng.gen_range(0..palette.len())]);
    }
    f
}

pub fn noise_frame(rng: &mut impl Rng, w: u32, h: u32) -> Frame {
    Frame::from_fn(w, h, |_, _| Color::new(rng.gen(), rng.gen(), rng.gen()))
}

pub fn seeded_noise(w: u32, h: u32, seed: u64) -> Frame {
    noise_frame(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed), w, h)
}

pub const LADDER: [f64; 7] = [0.5, 0.63, 0.79, 1.0, 1.26, 1.59, 2.0];

/// One random instance: a blocky frame up to 96x96, a non-flat template up
/// to 24x24 (a crop of the frame, possibly perturbed), three ladder scales.
pub fn instance(seed: u64) -> (Frame, Frame, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (fw, fh) = (rng.gen_range(24..=96), rng.gen_range(24..=96));
    let frame = blocky_frame(&mut rng, fw, fh);
    loop {
        let (tw, th) = (rng.gen_range(4..=24u32), rng.gen_range(4..=24u32));
        let b = BBox::new(rng.gen_range(0..=fw - tw), rng.gen_range(0..=fh - th), tw, th);
        let mut t = frame.crop(&b).unwrap();
        if rng.gen_bool(0.3) {
            let (x, y) = (rng.gen_range(0..tw), rng.gen_range(0..th));
            t.set(x, y, Color::new(rng.gen(), rng.gen(), rng.gen()));
        }
        if MaskTemplate::new("t", t.clone(), false).is_ok() {
            let mut idx: Vec<usize> = (0..LADDER.len()).collect();
            let mut scales: Vec<f64> = (0..3).map(|_| LADDER[idx.swap_remove(rng.gen_range(0..idx.len()))]).collect();
            scales.sort_by(f64::total_cmp);
            return (frame, t, scales);
        }
    }
}

/// Compares pre-NMS candidates of both backends with [`brute_force`] on
/// instance `seed`. Returns how many matches were compared.
pub fn oracle_equivalence(seed: u64) -> Result<usize, String> {
    let (frame, t, scales) = instance(seed);
    let mut compared = 0;
    for backend in [Backend::Direct, Backend::Fft] {
        let cfg = MatchConfig {
            backend,
            ..MatchConfig::with_scales(scales.clone())
        };
        let template = MaskTemplate::new("t", t.clone(), false).map_err(|e| e.to_string())?;
        let got = candidate_matches(&frame, &template, &cfg).map_err(|e| e.to_string())?;
        let want = brute_force(&frame, &t, &scales, cfg.score_threshold);
        // Windows whose score sits on the threshold within float noise may
        // land on either side.
        let near = |s: f64| (s - cfg.score_threshold).abs() < 1e-9;
        let mut got_set: Vec<(u32, u32, u64)> = got
            .iter()
            .filter(|m| !near(m.score))
            .map(|m| (m.bbox.x, m.bbox.y, m.scale.to_bits()))
            .collect();
        let mut want_set: Vec<(u32, u32, u64)> = want.iter().filter(|w| !near(w.3)).map(|w| (w.0, w.1, w.2.to_bits())).collect();
        got_set.sort();
        want_set.sort();
        if got_set != want_set {
            return Err(format!("seed {seed} {backend:?}: {} matches vs {} from the oracle", got_set.len(), want_set.len()));
        }
        for m in &got {
            let w = want
                .iter()
                .find(|w| (w.0, w.1, w.2) == (m.bbox.x, m.bbox.y, m.scale))
                .ok_or_else(|| format!("seed {seed} {backend:?}: match at {:?} unknown to the oracle", m.bbox))?;
            if (m.score - w.3).abs() >= 1e-6 {
                return Err(format!("seed {seed} {backend:?}: score {} vs {}", m.score, w.3));
            }
        }
        compared += got.len();
    }
    Ok(compared)
}
