//! Exporting rollouts as image sequences and animated GIFs.

use std::fs::File;
use std::io;
use std::path::{Path, PathBuf};

use image::codecs::gif::{GifEncoder, Repeat};
use image::{Delay, Frame};
use ndarray::Array3;
use rand::SeedableRng as _;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::codec::{lattice_to_image, write_png, CodecError};
use crate::engine::CellModel;
use crate::real::Real;

/// Per-frame GIF delay.
const GIF_FRAME_MS: u32 = 50;

#[derive(Debug, Error)]
pub enum FrameError {
    #[error("frame output failed: {0}")]
    Io(#[from] io::Error),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error("image encoding failed: {0}")]
    Encode(String),
    #[error("no states to export")]
    Empty,
}

/// What an export produced.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameExport {
    pub png_paths: Vec<PathBuf>,
    pub gif_path: Option<PathBuf>,
}

/// Rolls `steps` updates from `x0` with a fresh seeded stream, returning
/// every state — the seed state first, so the result has `steps + 1` entries.
pub fn record_rollout<F: Real>(
    model: &CellModel<F>,
    x0: Array3<F>,
    steps: usize,
    seed: u64,
) -> Vec<Array3<F>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut states = Vec::with_capacity(steps + 1);
    states.push(x0);
    for _ in 0..steps {
        let next = model.step(states.last().expect("seed state pushed"), &mut rng);
        states.push(next);
    }
    states
}

/// Writes each state as `frame_00000.png`, `frame_00001.png`, … under `dir`
/// (created if missing), each cell scaled up by `scale`. With `gif` set, an
/// infinitely looping `rollout.gif` of the same frames is written alongside.
pub fn export_frames<F: Real>(
    states: &[Array3<F>],
    dir: &Path,
    scale: u32,
    gif: bool,
) -> Result<FrameExport, FrameError> {
    if states.is_empty() {
        return Err(FrameError::Empty);
    }
    std::fs::create_dir_all(dir)?;

    let mut png_paths = Vec::with_capacity(states.len());
    for (i, state) in states.iter().enumerate() {
        let path = dir.join(format!("frame_{i:05}.png"));
        write_png(state.view(), &path, scale)?;
        png_paths.push(path);
    }

    let gif_path = if gif {
        let path = dir.join("rollout.gif");
        let mut encoder = GifEncoder::new(File::create(&path)?);
        encoder
            .set_repeat(Repeat::Infinite)
            .map_err(|e| FrameError::Encode(e.to_string()))?;
        for state in states {
            let img = lattice_to_image(state.view(), scale)?;
            let frame = Frame::from_parts(img, 0, 0, Delay::from_numer_denom_ms(GIF_FRAME_MS, 1));
            encoder
                .encode_frame(frame)
                .map_err(|e| FrameError::Encode(e.to_string()))?;
        }
        Some(path)
    } else {
        None
    };

    Ok(FrameExport {
        png_paths,
        gif_path,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::{encode_grid, Palette};
    use crate::dataset::Grid;
    use crate::engram::{VariantName, VariantSpec};

    #[test]
    fn a_rollout_exports_one_png_per_state_plus_a_gif() {
        let dir = tempfile::tempdir().unwrap();
        let grid = Grid::from_rows(&[vec![0, 1, 2], vec![3, 4, 5], vec![6, 7, 8]]).unwrap();
        let x0 = encode_grid::<f32>(&grid, &Palette::arc()).unwrap();
        let model = VariantSpec::of(VariantName::Nca).build::<f32>(1);
        let mut rng = ChaCha8Rng::seed_from_u64(2);

        let mut states = vec![x0];
        for _ in 0..20 {
            let next = model.step(states.last().unwrap(), &mut rng);
            states.push(next);
        }
        let export = export_frames(&states, dir.path(), 8, true).unwrap();

        assert_eq!(export.png_paths.len(), 21);
        assert!(export.png_paths[0].ends_with("frame_00000.png"));
        assert!(export.png_paths[20].ends_with("frame_00020.png"));
        for p in &export.png_paths {
            assert!(p.exists());
            let img = image::open(p).unwrap();
            assert_eq!((img.width(), img.height()), (24, 24));
        }
        let gif = export.gif_path.unwrap();
        assert!(gif.exists());
        assert!(std::fs::metadata(&gif).unwrap().len() > 0);
    }

    #[test]
    fn empty_state_lists_are_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let states: Vec<Array3<f32>> = Vec::new();
        assert!(matches!(
            export_frames(&states, dir.path(), 4, false),
            Err(FrameError::Empty)
        ));
    }
}
