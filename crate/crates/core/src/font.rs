//! The built-in 5x7 bitmap font used for labels, synthetic text and the
//! reference recognizer.

use std::collections::BTreeMap;
use std::sync::LazyLock;

use crate::error::{Error, Result};
use crate::frame::Color;

pub const GLYPH_W: u32 = 5;
pub const GLYPH_H: u32 = 7;
/// Horizontal advance of one glyph cell at scale 1 (glyph plus gap).
pub const PITCH: u32 = GLYPH_W + 1;

const FONT_JSON: &str = include_str!("../assets/font5x7.json");

static STANDARD: LazyLock<GlyphFont> = LazyLock::new(|| {
    GlyphFont::from_json(FONT_JSON).expect("bundled font table is valid")
});

/// Seven rows of five bits each, MSB-first (bit 4 is the leftmost column).
pub type Glyph = [u8; 7];

#[derive(Clone, Debug, PartialEq)]
pub struct GlyphFont {
    glyphs: BTreeMap<char, Glyph>,
    pub scale: u32,
    pub fg: Color,
    pub bg: Color,
}

impl GlyphFont {
    pub fn standard() -> &'static GlyphFont {
        &STANDARD
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let raw: BTreeMap<String, Vec<u8>> = serde_json::from_str(json)?;
        let mut glyphs = BTreeMap::new();
        for (key, rows) in raw {
            let mut chars = key.chars();
            let (Some(c), None) = (chars.next(), chars.next()) else {
                return Err(Error::InvalidArgument(format!("font key {key:?} is not one char")));
            };
            let rows: Glyph = rows
                .try_into()
                .map_err(|_| Error::InvalidArgument(format!("glyph {c:?} needs 7 rows")))?;
            if rows.iter().any(|r| *r >= 1 << GLYPH_W) {
                return Err(Error::InvalidArgument(format!("glyph {c:?} row wider than 5 bits")));
            }
            glyphs.insert(c, rows);
        }
        if let Some(missing) = (32u8..=126).map(char::from).find(|c| !glyphs.contains_key(c)) {
            return Err(Error::InvalidArgument(format!("font lacks glyph {missing:?}")));
        }
        Ok(Self {
            glyphs,
            scale: 1,
            fg: Color::BLACK,
            bg: Color::WHITE,
        })
    }

    pub fn with_scale(mut self, scale: u32) -> Self {
        self.scale = scale.max(1);
        self
    }

    pub fn with_colors(mut self, fg: Color, bg: Color) -> Self {
        self.fg = fg;
        self.bg = bg;
        self
    }

    pub fn glyph(&self, c: char) -> Result<&Glyph> {
        self.glyphs.get(&c).ok_or(Error::UnsupportedCharacter(c))
    }

    pub fn glyphs(&self) -> impl Iterator<Item = (char, &Glyph)> {
        self.glyphs.iter().map(|(c, g)| (*c, g))
    }

    pub fn bit(glyph: &Glyph, col: u32, row: u32) -> bool {
        glyph[row as usize] >> (GLYPH_W - 1 - col) & 1 == 1
    }

    /// Size of the rendered text block including the one-cell-unit padding.
    pub fn text_size(&self, text: &str) -> (u32, u32) {
        let n = text.chars().count() as u32;
        let inner = if n == 0 { 0 } else { n * PITCH - 1 };
        ((inner + 2) * self.scale, (GLYPH_H + 2) * self.scale)
    }

    /// Ink pixel coordinates of `text` laid out from the top-left of the
    /// first glyph cell (padding excluded).
    pub fn ink_positions(&self, text: &str) -> Result<Vec<(u32, u32)>> {
        let s = self.scale;
        let mut out = Vec::new();
        for (i, c) in text.chars().enumerate() {
            let glyph = self.glyph(c)?;
            let cell_x = i as u32 * PITCH * s;
            for row in 0..GLYPH_H {
                for col in 0..GLYPH_W {
                    if Self::bit(glyph, col, row) {
                        for dy in 0..s {
                            for dx in 0..s {
                                out.push((cell_x + col * s + dx, row * s + dy));
                            }
                        }
                    }
                }
            }
        }
        Ok(out)
    }
}
