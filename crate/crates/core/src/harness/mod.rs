//! Synthetic sequences, stream accounting, sweeps and per-frame metric tables.

pub mod report;
pub mod sweep;
pub mod synth;

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

pub use report::{report_components, ComponentReport};
pub use sweep::{frame_distortions, sweep, write_sweep_csv, SequenceSource, SweepRow, SweepSpec};
pub use synth::{generate_sequence, SequenceKind};

use crate::mesh::{load_mesh, save_mesh, Mesh, MeshFormat};
use crate::metrics::{hausdorff, p2s_rmse};
use crate::{Error, Result};

/// Mesh files (`.obj`, `.ply`) of a directory in file-name order.
pub fn sequence_files(dir: &Path) -> Result<Vec<(PathBuf, MeshFormat)>> {
    let mut files: Vec<(PathBuf, MeshFormat)> = std::fs::read_dir(dir)?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<Vec<_>>>()?
        .into_iter()
        .filter_map(|p| MeshFormat::from_path(&p).map(|f| (p, f)))
        .collect();
    files.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(files)
}

pub fn load_sequence_dir(dir: &Path) -> Result<Vec<Mesh>> {
    let files = sequence_files(dir)?;
    if files.is_empty() {
        return Err(Error::invalid(format!(
            "no .obj or .ply files in {}",
            dir.display()
        )));
    }
    files
        .iter()
        .enumerate()
        .map(|(i, (p, f))| Ok(load_mesh(p, *f)?.with_frame_index(i)))
        .collect()
}

/// Writes `frame_00000.<ext>`, `frame_00001.<ext>`, ...
pub fn save_sequence_dir(frames: &[Mesh], dir: &Path, format: MeshFormat) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let ext = match format {
        MeshFormat::Obj => "obj",
        MeshFormat::Ply => "ply",
    };
    for (i, m) in frames.iter().enumerate() {
        save_mesh(m, &dir.join(format!("frame_{i:05}.{ext}")), format)?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrameMetrics {
    pub frame_index: usize,
    /// Coded size of the frame when a stream is known.
    pub bits: Option<u64>,
    pub p2s_rmse: f64,
    pub hausdorff: f64,
}

/// Compares `test[i]` with `reference[i]`; `bits` optionally annotates rows.
pub fn frame_metrics(
    test: &[Mesh],
    reference: &[Mesh],
    bits: Option<&[u64]>,
) -> Result<Vec<FrameMetrics>> {
    if test.len() != reference.len() || bits.is_some_and(|b| b.len() != test.len()) {
        return Err(Error::DimensionMismatch(
            "sequences differ in length".into(),
        ));
    }
    test.iter()
        .zip(reference)
        .enumerate()
        .map(|(i, (t, r))| {
            Ok(FrameMetrics {
                frame_index: i,
                bits: bits.map(|b| b[i]),
                p2s_rmse: p2s_rmse(t, r)?,
                hausdorff: hausdorff(t, r)?,
            })
        })
        .collect()
}

pub fn write_metrics_csv<W: Write>(rows: &[FrameMetrics], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(sweep::csv_error)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests;
