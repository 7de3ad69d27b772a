//! Parameter sweeps producing rate-distortion tables.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::codec::{encode_sequence, CodecConfig};
use crate::harness::load_sequence_dir;
use crate::harness::report::report_components;
use crate::harness::synth::{generate_sequence, SequenceKind};
use crate::mesh::{Mesh, SurfaceIndex};
use crate::metrics::{distances_to, rms};
use crate::{Error, Result};

/// Where a sweep gets its frames.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SequenceSource {
    Synthetic {
        kind: SequenceKind,
        frames: usize,
        resolution: usize,
        #[serde(default)]
        seed: u64,
    },
    Directory(PathBuf),
}

impl SequenceSource {
    pub fn load(&self) -> Result<Vec<Mesh>> {
        match self {
            Self::Synthetic {
                kind,
                frames,
                resolution,
                seed,
            } => generate_sequence(*kind, *frames, *resolution, *seed),
            Self::Directory(p) => load_sequence_dir(p),
        }
    }
}

/// JSON sweep description: one sequence, any number of configurations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub sequence: SequenceSource,
    pub configs: Vec<CodecConfig>,
}

impl SweepSpec {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text)
            .map_err(|e| Error::invalid(format!("sweep file {}: {e}", path.display())))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub config_index: usize,
    pub config: CodecConfig,
    pub total_bits: u64,
    pub bits_per_frame: Vec<u64>,
    pub mean_p2s_rmse: f64,
    pub max_p2s_rmse: f64,
    pub iframe_bytes: usize,
    pub keynode_bytes: usize,
    pub rt_bytes: usize,
    pub residual_bytes: usize,
    pub overhead_bytes: usize,
    /// Set when the configuration failed; numeric columns are then zero.
    pub error: Option<String>,
}

impl SweepRow {
    fn failed(config_index: usize, config: &CodecConfig, e: Error) -> Self {
        Self {
            config_index,
            config: config.clone(),
            total_bits: 0,
            bits_per_frame: Vec::new(),
            mean_p2s_rmse: 0.0,
            max_p2s_rmse: 0.0,
            iframe_bytes: 0,
            keynode_bytes: 0,
            rt_bytes: 0,
            residual_bytes: 0,
            overhead_bytes: 0,
            error: Some(e.to_string()),
        }
    }
}

/// Per-frame point-to-surface RMSE of `decoded` against `sources`.
pub fn frame_distortions(decoded: &[Mesh], sources: &[Mesh]) -> Result<Vec<f64>> {
    if decoded.len() != sources.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} decoded frames for {} sources",
            decoded.len(),
            sources.len()
        )));
    }
    decoded
        .iter()
        .zip(sources)
        .map(|(d, s)| {
            if d.is_empty() {
                return Err(Error::EmptyGeometry);
            }
            Ok(rms(&distances_to(d.positions(), &SurfaceIndex::build(s)?)))
        })
        .collect()
}

fn run_one(config_index: usize, config: &CodecConfig, frames: &[Mesh]) -> Result<SweepRow> {
    let enc = encode_sequence(frames, config)?;
    let rep = report_components(&enc.bytes)?;
    let d = frame_distortions(&enc.decoded, frames)?;
    Ok(SweepRow {
        config_index,
        config: config.clone(),
        total_bits: 8 * enc.bytes.len() as u64,
        bits_per_frame: rep.per_frame.iter().map(|&b| 8 * b as u64).collect(),
        mean_p2s_rmse: d.iter().sum::<f64>() / d.len() as f64,
        max_p2s_rmse: d.iter().copied().fold(0.0, f64::max),
        iframe_bytes: rep.iframe,
        keynode_bytes: rep.keynode_indices,
        rt_bytes: rep.rt,
        residual_bytes: rep.residual,
        overhead_bytes: rep.overhead,
        error: None,
    })
}

/// Encodes `frames` once per configuration; failures become error rows.
pub fn sweep(configs: &[CodecConfig], frames: &[Mesh]) -> Result<Vec<SweepRow>> {
    if configs.is_empty() {
        return Err(Error::invalid("a sweep needs at least one configuration"));
    }
    Ok(configs
        .iter()
        .enumerate()
        .map(|(i, c)| run_one(i, c, frames).unwrap_or_else(|e| SweepRow::failed(i, c, e)))
        .collect())
}

#[derive(Serialize)]
struct CsvRow<'a> {
    config_index: usize,
    gof_size: usize,
    num_keynodes: usize,
    q: usize,
    prediction_mode: String,
    iframe_quant_bits: u8,
    rt_levels: usize,
    residual_levels: usize,
    leaf_budget: usize,
    ncoc_threshold: f64,
    total_bits: u64,
    mean_p2s_rmse: f64,
    max_p2s_rmse: f64,
    iframe_bytes: usize,
    keynode_bytes: usize,
    rt_bytes: usize,
    residual_bytes: usize,
    overhead_bytes: usize,
    bits_per_frame: String,
    error: &'a str,
}

/// One CSV line per row; per-frame bits are `;`-joined in the last column but one.
pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        let c = &r.config;
        w.serialize(CsvRow {
            config_index: r.config_index,
            gof_size: c.gof_size,
            num_keynodes: c.num_keynodes,
            q: c.q,
            prediction_mode: c.prediction_mode.to_string(),
            iframe_quant_bits: c.iframe_quant_bits,
            rt_levels: c.rt_levels,
            residual_levels: c.residual.levels,
            leaf_budget: c.residual.leaf_budget,
            ncoc_threshold: c.residual.ncoc_threshold,
            total_bits: r.total_bits,
            mean_p2s_rmse: r.mean_p2s_rmse,
            max_p2s_rmse: r.max_p2s_rmse,
            iframe_bytes: r.iframe_bytes,
            keynode_bytes: r.keynode_bytes,
            rt_bytes: r.rt_bytes,
            residual_bytes: r.residual_bytes,
            overhead_bytes: r.overhead_bytes,
            bits_per_frame: r
                .bits_per_frame
                .iter()
                .map(u64::to_string)
                .collect::<Vec<_>>()
                .join(";"),
            error: r.error.as_deref().unwrap_or(""),
        })
        .map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

pub(crate) fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::invalid(format!("csv: {other:?}")),
    }
}
