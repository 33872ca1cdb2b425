use crate::frame::{Color, Frame};

/// Edge-map binarization threshold on the normalized [0, 255] magnitude.
pub const EDGE_THRESHOLD: f64 = 64.0;

// Largest possible 3x3 Sobel magnitude for 8-bit input: |gx| = |gy| = 4 * 255.
const MAX_MAGNITUDE: f64 = 1_442.497_833_620_557_6;

/// Binary gradient-magnitude edge map, stored as gray RGB (0 or 255).
///
/// Luma is 0.299r + 0.587g + 0.114b, gradients are 3x3 Sobel with replicated
/// borders, and the magnitude is scaled by the largest attainable magnitude
/// so that a template and a frame are binarized on the same scale.
pub fn contourize(frame: &Frame) -> Frame {
    let (w, h) = frame.dimensions();
    let luma: Vec<f64> = frame
        .pixels()
        .chunks_exact(3)
        .map(|p| 0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64)
        .collect();
    let at = |x: i64, y: i64| {
        let x = x.clamp(0, w as i64 - 1) as usize;
        let y = y.clamp(0, h as i64 - 1) as usize;
        luma[y * w as usize + x]
    };
    Frame::from_fn(w, h, |x, y| {
        let (x, y) = (x as i64, y as i64);
        let gx = (at(x + 1, y - 1) + 2.0 * at(x + 1, y) + at(x + 1, y + 1))
            - (at(x - 1, y - 1) + 2.0 * at(x - 1, y) + at(x - 1, y + 1));
        let gy = (at(x - 1, y + 1) + 2.0 * at(x, y + 1) + at(x + 1, y + 1))
            - (at(x - 1, y - 1) + 2.0 * at(x, y - 1) + at(x + 1, y - 1));
        let normalized = (gx * gx + gy * gy).sqrt() / MAX_MAGNITUDE * 255.0;
        if normalized >= EDGE_THRESHOLD {
            Color::WHITE
        } else {
            Color::BLACK
        }
    })
    .with_timestamp(frame.timestamp)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame::BBox;

    #[test]
    fn uniform_frame_has_no_edges() {
        let out = contourize(&Frame::filled(9, 7, Color::new(40, 90, 200)));
        assert!(out.pixels().iter().all(|&v| v == 0));
    }

    #[test]
    fn vertical_step_gives_thin_column() {
        // Black for x < 5, white from x = 5. Hand-computed Sobel: gx = 4*255 at
        // x = 4 and x = 5 (normalized 180.3), zero elsewhere.
        let f = Frame::from_fn(10, 6, |x, _| if x < 5 { Color::BLACK } else { Color::WHITE });
        let out = contourize(&f);
        for y in 0..6 {
            for x in 0..10 {
                let edge = x == 4 || x == 5;
                assert_eq!(out.get(x, y), if edge { Color::WHITE } else { Color::BLACK }, "({x},{y})");
            }
        }
    }

    #[test]
    fn gray_images_are_channel_permutation_invariant() {
        let f = Frame::from_fn(12, 12, |x, y| {
            let v = ((x * 37 + y * 11) % 256) as u8;
            Color::new(v, v, v)
        });
        let permuted = Frame::from_fn(12, 12, |x, y| {
            let c = f.get(x, y);
            Color::new(c.b, c.r, c.g)
        });
        assert_eq!(contourize(&f), contourize(&permuted));
    }

    #[test]
    fn box_outline_edges() {
        let mut f = Frame::filled(20, 20, Color::WHITE);
        f.fill_rect(&BBox::new(5, 5, 10, 10), Color::BLACK);
        let out = contourize(&f);
        assert_eq!(out.get(10, 10), Color::BLACK);
        assert_eq!(out.get(5, 10), Color::WHITE);
        assert_eq!(out.get(0, 0), Color::BLACK);
    }
}
