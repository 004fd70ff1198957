//! Grid ⇄ lattice encoding.
//!
//! A color grid becomes a `height × width × 50` lattice of floats in `[0, 1]`:
//!
//! - channels 0–3: RGBA. Color index `v` of an `n`-color palette maps to hue
//!   `v/n · 360°` at lightness 0.5 and saturation 0.8; index 0 is transparent
//!   black (every component gated to zero). Alpha is 1 for `v > 0`, else 0.
//! - channels 4–7: the binary code of `v`, least-significant bit first. Four
//!   bits cover palettes up to 11 colors with headroom.
//! - channels 8–49: filled with ones. These are working memory for the
//!   automaton; the constant fill gives update rules something to latch onto
//!   from step one.
//!
//! Decoding inverts the visible channels only: a cell with alpha below 0.5 is
//! color 0, otherwise the RGB triple snaps to the nearest palette entry
//! (smallest index wins ties). The gap between palette entries is what makes
//! decoding robust to the residual noise a trained automaton leaves behind;
//! [`Palette::min_rgb_distance`] measures that gap.

use std::path::Path;

use image::RgbaImage;
use ndarray::{Array3, ArrayView3, Axis};
use thiserror::Error;

use crate::dataset::Grid;
use crate::real::Real;

/// Total channels of a full lattice state.
pub const LATTICE_CHANNELS: usize = 50;
/// Channels carrying the decodable color signal (RGBA + binary code).
pub const VISIBLE_CHANNELS: usize = 8;
/// Channel index of alpha, which doubles as the aliveness signal.
pub const ALPHA_CHANNEL: usize = 3;
/// Number of binary color-code channels (4–7).
pub const BINARY_CHANNELS: usize = 4;

#[derive(Debug, Error, PartialEq)]
pub enum CodecError {
    #[error("palette size {0} outside 2..=11")]
    PaletteSize(usize),
    #[error("color index {index} not in palette of {palette} colors")]
    ColorOutOfPalette { index: usize, palette: usize },
    #[error("lattice has {0} channels, need at least {min}", min = VISIBLE_CHANNELS)]
    TooFewChannels(usize),
    #[error("image error: {0}")]
    Image(String),
}

/// Converts one color index of an `n`-color palette to normalized RGBA.
///
/// Hue is `v/n · 360°`, lightness 0.5, saturation 0.8, converted through the
/// standard HSL piecewise formula; chroma and the lightness offset are gated
/// so index 0 collapses to transparent black.
pub fn color_to_rgba(v: usize, n: usize) -> Result<[f64; 4], CodecError> {
    if !(2..=11).contains(&n) {
        return Err(CodecError::PaletteSize(n));
    }
    if v >= n {
        return Err(CodecError::ColorOutOfPalette {
            index: v,
            palette: n,
        });
    }
    let gate = if v > 0 { 1.0 } else { 0.0 };
    let h = v as f64 / n as f64 * 360.0;
    let l = 0.5_f64;
    let s = 0.8_f64;
    let chroma = (1.0 - (2.0 * l - 1.0).abs()) * s * gate;
    let x = chroma * (1.0 - ((h / 60.0) % 2.0 - 1.0).abs());
    let (rp, gp, bp) = match h {
        h if h < 60.0 => (chroma, x, 0.0),
        h if h < 120.0 => (x, chroma, 0.0),
        h if h < 180.0 => (0.0, chroma, x),
        h if h < 240.0 => (0.0, x, chroma),
        h if h < 300.0 => (x, 0.0, chroma),
        _ => (chroma, 0.0, x),
    };
    let m = (l - chroma / 2.0) * gate;
    Ok([rp + m, gp + m, bp + m, gate])
}

/// Precomputed RGBA entries for an `n`-color palette.
#[derive(Debug, Clone, PartialEq)]
pub struct Palette {
    n: usize,
    entries: Vec<[f64; 4]>,
}

impl Palette {
    pub fn new(n: usize) -> Result<Self, CodecError> {
        let entries = (0..n)
            .map(|v| color_to_rgba(v, n))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Palette { n, entries })
    }

    /// The 10-color palette of unpadded ARC grids.
    pub fn arc() -> Self {
        Palette::new(10).expect("10 is a valid palette size")
    }

    /// The 11-color palette used when grids carry a pad color.
    pub fn arc_padded() -> Self {
        Palette::new(11).expect("11 is a valid palette size")
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn rgba(&self, v: usize) -> Result<[f64; 4], CodecError> {
        self.entries
            .get(v)
            .copied()
            .ok_or(CodecError::ColorOutOfPalette {
                index: v,
                palette: self.n,
            })
    }

    /// Smallest pairwise Euclidean RGB distance among the non-transparent
    /// entries — the decode noise margin. Perturbations below roughly half
    /// this distance per RGB channel cannot flip a decoded color.
    pub fn min_rgb_distance(&self) -> f64 {
        let mut min = f64::INFINITY;
        for a in 1..self.n {
            for b in (a + 1)..self.n {
                let ea = self.entries[a];
                let eb = self.entries[b];
                let d = (0..3)
                    .map(|c| (ea[c] - eb[c]).powi(2))
                    .sum::<f64>()
                    .sqrt();
                min = min.min(d);
            }
        }
        min
    }
}

/// Encodes a grid into a fresh `h × w × 50` lattice state.
pub fn encode_grid<F: Real>(grid: &Grid, palette: &Palette) -> Result<Array3<F>, CodecError> {
    encode_grid_with_channels(grid, palette, LATTICE_CHANNELS)
}

/// Encoding with a custom channel count (at least [`VISIBLE_CHANNELS`]);
/// everything past channel 7 is filled with ones.
pub fn encode_grid_with_channels<F: Real>(
    grid: &Grid,
    palette: &Palette,
    channels: usize,
) -> Result<Array3<F>, CodecError> {
    if channels < VISIBLE_CHANNELS {
        return Err(CodecError::TooFewChannels(channels));
    }
    let (h, w) = grid.dims();
    let mut lattice = Array3::from_elem((h, w, channels), F::one());
    for i in 0..h {
        for j in 0..w {
            let v = grid.get(i, j) as usize;
            let rgba = palette.rgba(v)?;
            for c in 0..4 {
                lattice[[i, j, c]] = F::from_f64(rgba[c]);
            }
            for bit in 0..BINARY_CHANNELS {
                let set = (v >> bit) & 1 == 1;
                lattice[[i, j, 4 + bit]] = if set { F::one() } else { F::zero() };
            }
        }
    }
    Ok(lattice)
}

/// Decodes a lattice state back to a grid by alpha-gating and snapping RGB to
/// the nearest palette entry (ties resolve to the smallest index).
pub fn decode_lattice<F: Real>(
    lattice: ArrayView3<F>,
    palette: &Palette,
) -> Result<Grid, CodecError> {
    let (h, w, c) = lattice.dim();
    if c < 4 {
        return Err(CodecError::TooFewChannels(c));
    }
    let mut rows = vec![vec![0u8; w]; h];
    for i in 0..h {
        for j in 0..w {
            let alpha = lattice[[i, j, ALPHA_CHANNEL]].to_f64();
            if alpha < 0.5 {
                continue; // transparent ⇒ color 0
            }
            let px = [
                lattice[[i, j, 0]].to_f64(),
                lattice[[i, j, 1]].to_f64(),
                lattice[[i, j, 2]].to_f64(),
            ];
            let mut best = 1usize;
            let mut best_d = f64::INFINITY;
            for v in 1..palette.len() {
                let e = palette.rgba(v)?;
                let d = (0..3).map(|k| (px[k] - e[k]).powi(2)).sum::<f64>();
                if d < best_d {
                    best_d = d;
                    best = v;
                }
            }
            rows[i][j] = best as u8;
        }
    }
    Grid::from_rows(&rows).map_err(|e| CodecError::Image(format!("decoded grid invalid: {e}")))
}

/// Renders the RGBA channels of a lattice as an image, upscaled by an integer
/// factor with nearest-neighbor sampling. Channel values are clamped to
/// `[0, 1]` before quantization.
pub fn lattice_to_image<F: Real>(
    lattice: ArrayView3<F>,
    scale: u32,
) -> Result<RgbaImage, CodecError> {
    let (h, w, c) = lattice.dim();
    if c < 4 {
        return Err(CodecError::TooFewChannels(c));
    }
    let scale = scale.max(1);
    let mut img = RgbaImage::new(w as u32 * scale, h as u32 * scale);
    for (y, x, px) in img.enumerate_pixels_mut().map(|(x, y, p)| (y, x, p)) {
        let i = (y / scale) as usize;
        let j = (x / scale) as usize;
        let q = |ch: usize| -> u8 {
            let v = lattice[[i, j, ch]].to_f64().clamp(0.0, 1.0);
            (v * 255.0).round() as u8
        };
        *px = image::Rgba([q(0), q(1), q(2), q(3)]);
    }
    Ok(img)
}

/// Writes the RGBA channels of a lattice to a PNG file.
pub fn write_png<F: Real>(
    lattice: ArrayView3<F>,
    path: &Path,
    scale: u32,
) -> Result<(), CodecError> {
    let img = lattice_to_image(lattice, scale)?;
    img.save(path).map_err(|e| CodecError::Image(e.to_string()))
}

/// Mean squared error between two lattices over the given channels,
/// accumulated in f64. Panics on shape mismatch — callers align shapes first.
pub fn channel_mse<F: Real>(a: ArrayView3<F>, b: ArrayView3<F>, channels: usize) -> f64 {
    assert_eq!(a.dim(), b.dim(), "lattice shapes must match");
    let (h, w, c) = a.dim();
    assert!(channels <= c, "channel range exceeds lattice depth");
    let mut sum = 0.0;
    for i in 0..h {
        for j in 0..w {
            for k in 0..channels {
                let d = a[[i, j, k]].to_f64() - b[[i, j, k]].to_f64();
                sum += d * d;
            }
        }
    }
    sum / (h * w * channels) as f64
}

/// Largest per-cell absolute channel difference over the first `channels`
/// channels — the stability signal for rollout convergence checks.
pub fn max_abs_delta<F: Real>(a: ArrayView3<F>, b: ArrayView3<F>, channels: usize) -> f64 {
    assert_eq!(a.dim(), b.dim(), "lattice shapes must match");
    let mut max = 0.0f64;
    for (pa, pb) in a
        .axis_iter(Axis(2))
        .take(channels)
        .zip(b.axis_iter(Axis(2)).take(channels))
    {
        for (&va, &vb) in pa.iter().zip(pb.iter()) {
            max = max.max((va.to_f64() - vb.to_f64()).abs());
        }
    }
    max
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn assert_close(got: f64, want: f64, tol: f64, what: &str) {
        assert!(
            (got - want).abs() <= tol,
            "{what}: got {got}, want {want} (tol {tol})"
        );
    }

    #[test]
    fn palette_matches_hand_computed_entries() {
        // v=1, n=10: hue 36°, chroma 0.8, x = 0.48, m = 0.1.
        let rgba = color_to_rgba(1, 10).unwrap();
        assert_close(rgba[0], 0.9, 1e-12, "v1 R");
        assert_close(rgba[1], 0.58, 1e-12, "v1 G");
        assert_close(rgba[2], 0.1, 1e-12, "v1 B");
        assert_close(rgba[3], 1.0, 0.0, "v1 A");
        // Same values expressed on the 0–255 scale.
        assert_close(rgba[0] * 255.0, 229.5, 1e-9, "v1 R byte");
        assert_close(rgba[1] * 255.0, 147.9, 1e-9, "v1 G byte");

        // v=5, n=10: hue 180°, sector boundary.
        let rgba = color_to_rgba(5, 10).unwrap();
        assert_close(rgba[0], 0.1, 1e-12, "v5 R");
        assert_close(rgba[1], 0.9, 1e-12, "v5 G");
        assert_close(rgba[2], 0.9, 1e-12, "v5 B");

        // v=0 is gated to transparent black regardless of palette size.
        for n in 2..=11 {
            assert_eq!(color_to_rgba(0, n).unwrap(), [0.0, 0.0, 0.0, 0.0]);
        }

        // Alpha is exactly 1 for every non-zero color.
        for v in 1..10 {
            assert_eq!(color_to_rgba(v, 10).unwrap()[3], 1.0);
        }

        assert_eq!(color_to_rgba(10, 10), Err(CodecError::ColorOutOfPalette { index: 10, palette: 10 }));
        assert_eq!(color_to_rgba(0, 1), Err(CodecError::PaletteSize(1)));
        assert_eq!(color_to_rgba(0, 12), Err(CodecError::PaletteSize(12)));
    }

    #[test]
    fn binary_channels_encode_lsb_first() {
        let palette = Palette::arc();
        let grid = Grid::from_rows(&[vec![5, 9]]).unwrap();
        let lat = encode_grid::<f64>(&grid, &palette).unwrap();
        // 5 = 0b0101 → channels 4..8 = 1,0,1,0
        assert_eq!(lat[[0, 0, 4]], 1.0);
        assert_eq!(lat[[0, 0, 5]], 0.0);
        assert_eq!(lat[[0, 0, 6]], 1.0);
        assert_eq!(lat[[0, 0, 7]], 0.0);
        // 9 = 0b1001 → 1,0,0,1
        assert_eq!(lat[[0, 1, 4]], 1.0);
        assert_eq!(lat[[0, 1, 5]], 0.0);
        assert_eq!(lat[[0, 1, 6]], 0.0);
        assert_eq!(lat[[0, 1, 7]], 1.0);
    }

    #[test]
    fn hidden_channels_are_ones_and_shape_is_full() {
        let palette = Palette::arc();
        let grid = Grid::from_rows(&[vec![0, 3], vec![7, 0]]).unwrap();
        let lat = encode_grid::<f32>(&grid, &palette).unwrap();
        assert_eq!(lat.dim(), (2, 2, LATTICE_CHANNELS));
        for i in 0..2 {
            for j in 0..2 {
                for c in VISIBLE_CHANNELS..LATTICE_CHANNELS {
                    assert_eq!(lat[[i, j, c]], 1.0);
                }
            }
        }
        // Color 0 cells are fully transparent in the visible channels.
        for c in 0..VISIBLE_CHANNELS {
            assert_eq!(lat[[0, 0, c]], 0.0);
        }
    }

    #[test]
    fn decode_inverts_encode_for_every_color() {
        for n in [10usize, 11] {
            let palette = Palette::new(n).unwrap();
            let values: Vec<u8> = (0..n as u8).collect();
            let grid = Grid::from_rows(&[values]).unwrap();
            let lat = encode_grid::<f64>(&grid, &palette).unwrap();
            let back = decode_lattice(lat.view(), &palette).unwrap();
            assert_eq!(back, grid, "palette size {n}");
        }
    }

    #[test]
    fn decode_survives_bounded_noise() {
        let palette = Palette::arc();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        // Noise amplitudes: a fixed 0.02, and 40% of the per-channel margin
        // implied by the palette's minimum RGB distance.
        let margin_amp = 0.4 * palette.min_rgb_distance() / 2.0 / 3f64.sqrt();
        assert!(margin_amp > 0.02);
        for &amp in &[0.02, margin_amp] {
            for _ in 0..20 {
                let h = rng.random_range(1..=8);
                let w = rng.random_range(1..=8);
                let rows: Vec<Vec<u8>> = (0..h)
                    .map(|_| (0..w).map(|_| rng.random_range(0..=9)).collect())
                    .collect();
                let grid = Grid::from_rows(&rows).unwrap();
                let mut lat = encode_grid::<f64>(&grid, &palette).unwrap();
                for v in lat.iter_mut() {
                    *v += rng.random_range(-amp..=amp);
                }
                let back = decode_lattice(lat.view(), &palette).unwrap();
                assert_eq!(back, grid, "amplitude {amp}");
            }
        }
    }

    #[test]
    fn ties_resolve_to_smallest_color() {
        let palette = Palette::arc();
        // Midpoint between colors 1 and 2 in RGB, alpha forced visible.
        let e1 = palette.rgba(1).unwrap();
        let e2 = palette.rgba(2).unwrap();
        let mut lat = Array3::<f64>::zeros((1, 1, VISIBLE_CHANNELS));
        for c in 0..3 {
            lat[[0, 0, c]] = (e1[c] + e2[c]) / 2.0;
        }
        lat[[0, 0, ALPHA_CHANNEL]] = 1.0;
        let grid = decode_lattice(lat.view(), &palette).unwrap();
        assert_eq!(grid.get(0, 0), 1);
    }

    #[test]
    fn palette_noise_margin_is_wide() {
        let arc = Palette::arc();
        // Adjacent hues 36° apart: colors 1 and 2 differ by (0.16, 0.32, 0).
        let d12 = {
            let a = arc.rgba(1).unwrap();
            let b = arc.rgba(2).unwrap();
            (0..3).map(|c| (a[c] - b[c]).powi(2)).sum::<f64>().sqrt()
        };
        assert_close(d12, 0.128f64.sqrt(), 1e-12, "distance 1–2");
        assert!(arc.min_rgb_distance() > 0.3);
        assert!(Palette::arc_padded().min_rgb_distance() > 0.25);
    }

    #[test]
    fn mse_and_delta_helpers_match_hand_arithmetic() {
        let a = Array3::<f64>::zeros((2, 2, 8));
        let mut b = a.clone();
        b.fill(0.1);
        assert_close(channel_mse(a.view(), b.view(), 8), 0.01, 1e-15, "mse");
        b[[1, 1, 7]] = 0.5;
        assert_close(max_abs_delta(a.view(), b.view(), 8), 0.5, 0.0, "delta");
        // Channel limit excludes later channels.
        assert_close(max_abs_delta(a.view(), b.view(), 7), 0.1, 1e-15, "delta ch7");
    }

    #[test]
    fn png_roundtrip_has_scaled_dimensions() {
        let palette = Palette::arc();
        let grid = Grid::from_rows(&[vec![1, 2, 3], vec![4, 5, 6]]).unwrap();
        let lat = encode_grid::<f32>(&grid, &palette).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cell.png");
        write_png(lat.view(), &path, 4).unwrap();
        let img = image::open(&path).unwrap();
        assert_eq!(img.width(), 12);
        assert_eq!(img.height(), 8);
    }
}
