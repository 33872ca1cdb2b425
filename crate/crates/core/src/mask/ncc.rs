//! Zero-mean normalized cross-correlation over interleaved u8 planes.
//!
//! Window sums come from integral images and the template/window cross term
//! is an exact integer, so every backend produces identical scores:
//!
//! `ncc = (n*Σti - Σt*Σi) / sqrt((n*Σt² - (Σt)²) * (n*Σi² - (Σi)²))`

use std::sync::{Arc, OnceLock};

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::frame::Frame;

/// Interleaved 8-bit samples with `c` channels.
#[derive(Clone, Debug)]
pub(crate) struct Plane {
    pub w: usize,
    pub h: usize,
    pub c: usize,
    pub data: Vec<u8>,
}

impl Plane {
    pub fn rgb(frame: &Frame) -> Self {
        Self {
            w: frame.width() as usize,
            h: frame.height() as usize,
            c: 3,
            data: frame.pixels().to_vec(),
        }
    }

    /// Single channel taken from a gray RGB frame (e.g. an edge map).
    pub fn gray(frame: &Frame) -> Self {
        Self {
            w: frame.width() as usize,
            h: frame.height() as usize,
            c: 1,
            data: frame.pixels().iter().step_by(3).copied().collect(),
        }
    }

    pub fn row(&self, y: usize) -> &[u8] {
        let stride = self.w * self.c;
        &self.data[y * stride..(y + 1) * stride]
    }

    pub fn sums(&self) -> (u64, u64) {
        self.data.iter().fold((0, 0), |(s, q), &v| {
            (s + v as u64, q + (v as u64) * (v as u64))
        })
    }

    /// Box-average downsample by `factor` (floor dimensions).
    pub fn downsample(&self, factor: usize) -> Option<Plane> {
        let (w, h) = (self.w / factor, self.h / factor);
        if w == 0 || h == 0 {
            return None;
        }
        let area = (factor * factor) as u32;
        let mut data = vec![0u8; w * h * self.c];
        for y in 0..h {
            for x in 0..w {
                for ch in 0..self.c {
                    let mut acc = 0u32;
                    for dy in 0..factor {
                        let row = self.row(y * factor + dy);
                        for dx in 0..factor {
                            acc += row[(x * factor + dx) * self.c + ch] as u32;
                        }
                    }
                    data[(y * w + x) * self.c + ch] = ((acc + area / 2) / area) as u8;
                }
            }
        }
        Some(Plane { w, h, c: self.c, data })
    }
}

/// Summed-area tables of channel-summed values and squares.
#[derive(Debug)]
pub(crate) struct Integral {
    stride: usize,
    sum: Vec<u64>,
    sq: Vec<u64>,
}

impl Integral {
    pub fn new(p: &Plane) -> Self {
        let stride = p.w + 1;
        let mut sum = vec![0u64; stride * (p.h + 1)];
        let mut sq = vec![0u64; stride * (p.h + 1)];
        for y in 0..p.h {
            let row = p.row(y);
            let (mut rs, mut rq) = (0u64, 0u64);
            for x in 0..p.w {
                for &v in &row[x * p.c..(x + 1) * p.c] {
                    rs += v as u64;
                    rq += (v as u64) * (v as u64);
                }
                let i = (y + 1) * stride + x + 1;
                sum[i] = sum[i - stride] + rs;
                sq[i] = sq[i - stride] + rq;
            }
        }
        Self { stride, sum, sq }
    }

    pub fn window(&self, x: usize, y: usize, w: usize, h: usize) -> (u64, u64) {
        let s = self.stride;
        let (a, b, c, d) = (y * s + x, y * s + x + w, (y + h) * s + x, (y + h) * s + x + w);
        (
            self.sum[d] + self.sum[a] - self.sum[b] - self.sum[c],
            self.sq[d] + self.sq[a] - self.sq[b] - self.sq[c],
        )
    }
}

/// A template plane with its precomputed moments. `None` when flat.
#[derive(Debug, Clone)]
pub(crate) struct TemplateStats {
    pub plane: Plane,
    pub n: u64,
    pub sum: u64,
    pub var: u128,
}

impl TemplateStats {
    pub fn new(plane: Plane) -> Option<Self> {
        let n = (plane.w * plane.h * plane.c) as u64;
        let (sum, sq) = plane.sums();
        let var = n as u128 * sq as u128 - (sum as u128) * (sum as u128);
        (var > 0).then_some(Self { plane, n, sum, var })
    }
}

pub(crate) fn score(t: &TemplateStats, isum: u64, isq: u64, cross: u64) -> f64 {
    let ivar = t.n as u128 * isq as u128 - (isum as u128) * (isum as u128);
    if ivar == 0 {
        return 0.0;
    }
    let num = t.n as i128 * cross as i128 - t.sum as i128 * isum as i128;
    if num <= 0 {
        return 0.0;
    }
    (num as f64 / ((t.var as f64).sqrt() * (ivar as f64).sqrt())).min(1.0)
}

fn dot(a: &[u8], b: &[u8]) -> u64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| x as u32 * y as u32)
        .sum::<u32>() as u64
}

/// Exact Σ t·i for the window at `(x, y)`.
pub(crate) fn cross_direct(frame: &Plane, t: &Plane, x: usize, y: usize) -> u64 {
    let c = frame.c;
    (0..t.h)
        .map(|r| dot(&frame.row(y + r)[x * c..(x + t.w) * c], t.row(r)))
        .sum()
}

/// A frame plane with lazily built acceleration structures.
pub(crate) struct Prepared {
    pub plane: Plane,
    pub integral: Integral,
    spectrum: OnceLock<Vec<Vec<Complex<f64>>>>,
    coarse: OnceLock<Option<Arc<Prepared>>>,
}

pub(crate) const COARSE_FACTOR: usize = 4;

impl Prepared {
    pub fn new(plane: Plane) -> Self {
        let integral = Integral::new(&plane);
        Self {
            plane,
            integral,
            spectrum: OnceLock::new(),
            coarse: OnceLock::new(),
        }
    }

    pub fn coarse(&self) -> Option<Arc<Prepared>> {
        self.coarse
            .get_or_init(|| {
                self.plane
                    .downsample(COARSE_FACTOR)
                    .map(|p| Arc::new(Prepared::new(p)))
            })
            .clone()
    }

    pub fn score_at(&self, t: &TemplateStats, x: usize, y: usize) -> f64 {
        let (s, q) = self.integral.window(x, y, t.plane.w, t.plane.h);
        score(t, s, q, cross_direct(&self.plane, &t.plane, x, y))
    }

    fn spectrum(&self) -> &[Vec<Complex<f64>>] {
        self.spectrum.get_or_init(|| {
            let p = &self.plane;
            (0..p.c)
                .map(|ch| {
                    let mut buf: Vec<Complex<f64>> = p
                        .data
                        .iter()
                        .skip(ch)
                        .step_by(p.c)
                        .map(|&v| Complex::new(v as f64, 0.0))
                        .collect();
                    fft2d(&mut buf, p.w, p.h, false);
                    buf
                })
                .collect()
        })
    }

    /// Exact cross terms for every valid window, via frequency-domain
    /// correlation. Row-major over `(w - tw + 1) x (h - th + 1)`.
    pub fn cross_fft(&self, t: &Plane) -> Vec<u64> {
        let p = &self.plane;
        let (w, h) = (p.w, p.h);
        let spectrum = self.spectrum();
        let mut acc = vec![Complex::new(0.0, 0.0); w * h];
        for (ch, fspec) in spectrum.iter().enumerate() {
            let mut buf = vec![Complex::new(0.0, 0.0); w * h];
            for y in 0..t.h {
                let row = t.row(y);
                for x in 0..t.w {
                    buf[y * w + x] = Complex::new(row[x * t.c + ch] as f64, 0.0);
                }
            }
            fft2d(&mut buf, w, h, false);
            for ((a, f), tv) in acc.iter_mut().zip(fspec).zip(&buf) {
                *a += f * tv.conj();
            }
        }
        fft2d(&mut acc, w, h, true);
        let norm = (w * h) as f64;
        let (vw, vh) = (w - t.w + 1, h - t.h + 1);
        let mut out = Vec::with_capacity(vw * vh);
        for y in 0..vh {
            for x in 0..vw {
                out.push((acc[y * w + x].re / norm).round().max(0.0) as u64);
            }
        }
        out
    }
}

fn fft2d(buf: &mut [Complex<f64>], w: usize, h: usize, inverse: bool) {
    let mut planner = FftPlanner::new();
    let (row_fft, col_fft) = if inverse {
        (planner.plan_fft_inverse(w), planner.plan_fft_inverse(h))
    } else {
        (planner.plan_fft_forward(w), planner.plan_fft_forward(h))
    };
    row_fft.process(buf);
    let mut t = transpose(buf, w, h);
    col_fft.process(&mut t);
    buf.copy_from_slice(&transpose(&t, h, w));
}

fn transpose(buf: &[Complex<f64>], w: usize, h: usize) -> Vec<Complex<f64>> {
    let mut out = vec![Complex::new(0.0, 0.0); w * h];
    for y in 0..h {
        for x in 0..w {
            out[x * h + y] = buf[y * w + x];
        }
    }
    out
}
