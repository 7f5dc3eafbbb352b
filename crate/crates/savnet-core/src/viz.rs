//! Similarity-map export: one heatmap per attribute over the input
//! spectrogram, as binary PGM plus the raw values as CSV, with an index
//! tying each map to its local score and argmax cell.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::attributes::{ATTRIBUTE_NAMES, NUM_ATTRIBUTES};
use crate::audio::{MelSpectrogram, N_FRAMES, N_MELS};
use crate::model::{infer, ModelError, ModelParams};

#[derive(Debug, thiserror::Error)]
pub enum VizError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Where one attribute's artifacts landed, plus the numbers the index
/// records for it.
#[derive(Debug, Clone)]
pub struct MapInfo {
    pub attribute: &'static str,
    /// Local score h_k (the map's spatial max).
    pub score: f64,
    /// Argmax cell in feature-grid coordinates.
    pub row: usize,
    pub col: usize,
    pub pgm_path: PathBuf,
    pub csv_path: PathBuf,
}

/// Min-max normalize into 0..=255. A constant map has no contrast to
/// show, so the degenerate range maps to all zeros rather than dividing
/// by zero.
pub fn normalize_to_bytes(values: &[f64]) -> Vec<u8> {
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max <= min {
        return vec![0; values.len()];
    }
    values
        .iter()
        .map(|&v| ((v - min) / (max - min) * 255.0).round() as u8)
        .collect()
}

/// Nearest-neighbor upsample of an `h` x `w` byte grid to `oh` x `ow`.
pub fn upsample_nearest(src: &[u8], h: usize, w: usize, oh: usize, ow: usize) -> Vec<u8> {
    assert_eq!(src.len(), h * w, "source grid size");
    let mut out = Vec::with_capacity(oh * ow);
    for i in 0..oh {
        let si = i * h / oh;
        for j in 0..ow {
            let sj = j * w / ow;
            out.push(src[si * w + sj]);
        }
    }
    out
}

fn write_pgm(path: &Path, width: usize, height: usize, bytes: &[u8]) -> std::io::Result<()> {
    let mut data = format!("P5\n{width} {height}\n255\n").into_bytes();
    data.extend_from_slice(bytes);
    fs::write(path, data)
}

/// Run the model on `x` and write, per attribute k: `<attr>.pgm` (min-max
/// normalized, nearest-neighbor upsampled to the 80x100 input grid, row 0
/// = lowest mel bin) and `<attr>.csv` (raw map values on the feature
/// grid), plus `index.csv` with the attribute name, h_k, and the argmax
/// cell of the raw map.
pub fn export_similarity_maps(
    x: &MelSpectrogram,
    params: &ModelParams,
    out_dir: &Path,
) -> Result<Vec<MapInfo>, VizError> {
    let inference = infer(params, x)?;
    let dims = inference.maps.dims();
    let (h, w) = (dims[1], dims[2]);
    fs::create_dir_all(out_dir)?;

    let mut index = String::from("attribute,score,argmax_row,argmax_col\n");
    let mut infos = Vec::with_capacity(NUM_ATTRIBUTES);
    for (k, &attribute) in ATTRIBUTE_NAMES.iter().enumerate() {
        let raw = &inference.maps.data()[k * h * w..(k + 1) * h * w];
        let bytes = normalize_to_bytes(raw);
        let image = upsample_nearest(&bytes, h, w, N_MELS, N_FRAMES);
        let pgm_path = out_dir.join(format!("{attribute}.pgm"));
        write_pgm(&pgm_path, N_FRAMES, N_MELS, &image)?;

        let mut csv = String::new();
        for i in 0..h {
            for j in 0..w {
                if j > 0 {
                    csv.push(',');
                }
                let _ = write!(csv, "{}", raw[i * w + j]);
            }
            csv.push('\n');
        }
        let csv_path = out_dir.join(format!("{attribute}.csv"));
        fs::write(&csv_path, csv)?;

        let flat = inference.argmax[k];
        let (row, col) = (flat / w, flat % w);
        let score = inference.h[k];
        let _ = writeln!(index, "{attribute},{score},{row},{col}");
        infos.push(MapInfo {
            attribute,
            score,
            row,
            col,
            pgm_path,
            csv_path,
        });
    }
    fs::write(out_dir.join("index.csv"), index)?;
    Ok(infos)
}
