//! Rendering a transformation flow as a sequence of frames.

use std::fs::File;
use std::path::{Path, PathBuf};

use image::codecs::gif::{GifEncoder, Repeat};
use image::{Delay, Frame as GifFrame, RgbaImage};

use crate::error::{Error, Result};
use crate::lattice::CanvasTransform;
use crate::raster::{sample, DigitalImage, SmoothImage};

/// One frame of a flow animation.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    /// Unclamped colors `M′(α⁽ᵗ⁾)`.
    pub samples: Vec<f64>,
    /// The same colors clamped into `[0, 1]`.
    pub image: DigitalImage,
}

/// Samples `moving` (smoothed at `cutoff`) at every transform of `flow`.
pub fn render_flow(moving: &DigitalImage, flow: &[CanvasTransform], cutoff: f64) -> Result<Vec<Frame>> {
    if flow.is_empty() {
        return Err(Error::InvalidInput("empty transformation flow".into()));
    }
    let smooth = SmoothImage::new(moving.clone(), cutoff)?;
    flow.iter()
        .map(|t| {
            if t.len() != moving.len() {
                return Err(Error::InvalidInput(format!(
                    "flow transform has {} points for a {}-pixel image",
                    t.len(),
                    moving.len()
                )));
            }
            let samples = sample(&smooth, t);
            let image = DigitalImage::from_clamped(moving.rows(), moving.cols(), samples.clone())?;
            Ok(Frame { samples, image })
        })
        .collect()
}

/// File name of frame `index` out of `count`, zero-padded to at least three digits.
pub fn frame_file_name(index: usize, count: usize) -> String {
    let width = count.saturating_sub(1).to_string().len().max(3);
    format!("frame_{index:0width$}.png")
}

/// Writes frames as numbered grayscale PNGs into `dir` (created if needed).
pub fn write_frames(frames: &[Frame], dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    frames
        .iter()
        .enumerate()
        .map(|(k, f)| {
            let path = dir.join(frame_file_name(k, frames.len()));
            crate::io::save_png(&f.image, &path)?;
            Ok(path)
        })
        .collect()
}

/// Assembles frames into a looping animated GIF.
pub fn write_gif(frames: &[Frame], path: &Path, delay_ms: u32) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut encoder = GifEncoder::new(file);
    let wrap = |e: image::ImageError| Error::Decode {
        path: path.to_path_buf(),
        source: e,
    };
    encoder.set_repeat(Repeat::Infinite).map_err(wrap)?;
    for f in frames {
        let (rows, cols) = f.image.dims();
        let bytes = f.image.to_bytes();
        let rgba = RgbaImage::from_fn(cols as u32, rows as u32, |x, y| {
            let v = bytes[y as usize * cols + x as usize];
            image::Rgba([v, v, v, 255])
        });
        encoder
            .encode_frame(GifFrame::from_parts(rgba, 0, 0, Delay::from_numer_denom_ms(delay_ms, 1)))
            .map_err(wrap)?;
    }
    Ok(())
}
