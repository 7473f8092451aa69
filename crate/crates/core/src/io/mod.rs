//! Serialization, frame stacks and synthetic problems.

mod csv;
mod frames;
mod lrml;
mod pgm;
mod synth;

pub use csv::{
    matrix_from_csv, matrix_to_csv, metrics_from_csv, metrics_to_csv, read_metrics, write_metrics, METRICS_HEADER,
};
pub use frames::{emit_frames, ingest_frames, FrameStack};
pub use lrml::{decode_lrml, encode_lrml, load_matrix, save_matrix, LRML_MAGIC, LRML_VERSION};
pub use pgm::{decode_pgm, encode_pgm, quantize, GrayImage};
pub use synth::{synth_rpca, synth_rpca_coarse, SyntheticProblem};

use std::path::Path;

use crate::error::{Error, Result};

pub(crate) fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}
