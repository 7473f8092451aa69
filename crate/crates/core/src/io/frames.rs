//! Frame stacks: each grayscale frame becomes one matrix column.
//!
//! Pixel `(r, c)` of a `height × width` frame sits at row `r + c·height`.

use std::path::{Path, PathBuf};

use super::pgm::{decode_pgm, encode_pgm, quantize, GrayImage};
use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;

#[derive(Debug, Clone, PartialEq)]
pub struct FrameStack {
    pub frame_height: usize,
    pub frame_width: usize,
    pub count: usize,
    /// `(height·width) × count`, values in `[0, 1]` after ingestion.
    pub matrix: DenseMatrix,
}

impl FrameStack {
    pub fn new(frame_height: usize, frame_width: usize, matrix: DenseMatrix) -> Result<Self> {
        if matrix.rows() != frame_height * frame_width {
            return Err(Error::invalid(format!(
                "{} rows cannot hold {frame_height}x{frame_width} frames",
                matrix.rows()
            )));
        }
        Ok(FrameStack {
            frame_height,
            frame_width,
            count: matrix.cols(),
            matrix,
        })
    }

    /// Column `j` of `m` (shaped like this stack) as an 8-bit image.
    pub fn frame_image(&self, m: &DenseMatrix, j: usize) -> GrayImage {
        let (h, w) = (self.frame_height, self.frame_width);
        let col = m.col(j);
        let mut pixels = vec![0u8; h * w];
        for c in 0..w {
            for r in 0..h {
                pixels[r * w + c] = quantize(col[r + c * h]);
            }
        }
        GrayImage {
            width: w,
            height: h,
            maxval: 255,
            pixels,
        }
    }
}

/// Reads PGM frames in order into one stack, scaling pixels by `1/maxval`.
pub fn ingest_frames<P: AsRef<Path>>(paths: &[P]) -> Result<FrameStack> {
    let Some(first) = paths.first() else {
        return Err(Error::invalid("no frames given"));
    };
    let img0 = load_image(first.as_ref())?;
    let (h, w) = (img0.height, img0.width);
    let mut m = DenseMatrix::zeros(h * w, paths.len());
    for (j, p) in paths.iter().enumerate() {
        let img = if j == 0 { img0.clone() } else { load_image(p.as_ref())? };
        if (img.height, img.width) != (h, w) {
            return Err(Error::invalid(format!(
                "{} is {}x{}, expected {h}x{w}",
                p.as_ref().display(),
                img.height,
                img.width
            )));
        }
        let scale = 1.0 / img.maxval as f64;
        let col = m.col_mut(j);
        for r in 0..h {
            for c in 0..w {
                col[r + c * h] = img.pixel(r, c) as f64 * scale;
            }
        }
    }
    FrameStack::new(h, w, m)
}

fn load_image(path: &Path) -> Result<GrayImage> {
    let bytes = super::read_file(path)?;
    decode_pgm(&bytes).map_err(|e| match e {
        Error::Format(msg) => Error::Format(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// Writes `l_NNNN.pgm` and `s_NNNN.pgm` for every column into `out_dir`.
pub fn emit_frames(
    stack: &FrameStack,
    l: &DenseMatrix,
    s: &DenseMatrix,
    out_dir: impl AsRef<Path>,
) -> Result<Vec<PathBuf>> {
    stack.matrix.check_same_shape(l, "emit_frames L")?;
    stack.matrix.check_same_shape(s, "emit_frames S")?;
    let dir = out_dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::with_capacity(2 * stack.count);
    for (prefix, m) in [("l", l), ("s", s)] {
        for j in 0..stack.count {
            let path = dir.join(format!("{prefix}_{j:04}.pgm"));
            super::write_file(&path, &encode_pgm(&stack.frame_image(m, j)))?;
            written.push(path);
        }
    }
    Ok(written)
}
