use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use kndm_core::codec::{decode_sequence, encode_sequence, CodecConfig, PredictionMode};
use kndm_core::harness::{
    frame_metrics, generate_sequence, load_sequence_dir, report_components, save_sequence_dir,
    sweep, write_metrics_csv, write_sweep_csv, SequenceKind, SweepSpec,
};
use kndm_core::mesh::MeshFormat;

/// Key-node driven codec for dynamic triangle mesh sequences.
#[derive(Parser)]
#[command(name = "kndm", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Encode a directory of .obj/.ply frames (file-name order) into a stream.
    Encode {
        in_dir: PathBuf,
        out: PathBuf,
        #[command(flatten)]
        opts: EncodeOpts,
    },
    /// Decode a stream into a directory of frames.
    Decode {
        input: PathBuf,
        out_dir: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Obj)]
        format: Format,
    },
    /// Per-frame point-to-surface RMSE and Hausdorff distance between two sequences.
    Metrics {
        dir_a: PathBuf,
        dir_b: PathBuf,
        /// CSV output; printed to stdout when omitted.
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Stream whose per-frame sizes fill the bits column.
        #[arg(long)]
        bitstream: Option<PathBuf>,
    },
    /// Write a synthetic sequence.
    Synth {
        /// rigid, bend, bend_with_detach or noisy.
        kind: SequenceKind,
        frames: usize,
        resolution: usize,
        out_dir: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = Format::Obj)]
        format: Format,
    },
    /// Byte breakdown of a stream.
    Report {
        input: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Run every configuration of a sweep file; writes CSV plus a JSON twin.
    Sweep { config: PathBuf, out: PathBuf },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Obj,
    Ply,
}

impl From<Format> for MeshFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Obj => MeshFormat::Obj,
            Format::Ply => MeshFormat::Ply,
        }
    }
}

/// Overrides on top of `--config` (or the defaults).
#[derive(Args)]
struct EncodeOpts {
    /// JSON file with CodecConfig fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    gof: Option<usize>,
    #[arg(long)]
    nodes: Option<usize>,
    #[arg(long)]
    q: Option<usize>,
    /// ff, dual:<s> or adp.
    #[arg(long)]
    mode: Option<PredictionMode>,
    #[arg(long)]
    iframe_bits: Option<u8>,
    #[arg(long)]
    rt_levels: Option<usize>,
    #[arg(long)]
    res_levels: Option<usize>,
    #[arg(long)]
    depth: Option<u8>,
    #[arg(long)]
    leaf_budget: Option<usize>,
    #[arg(long)]
    ncoc_thresh: Option<f64>,
    #[arg(long)]
    no_ncoc: bool,
    #[arg(long)]
    alpha_reg: Option<f64>,
    #[arg(long)]
    alpha_rot: Option<f64>,
    #[arg(long)]
    max_outer_iters: Option<usize>,
    #[arg(long)]
    max_inner_iters: Option<usize>,
    #[arg(long)]
    convergence_tol: Option<f64>,
    #[arg(long)]
    correspondence_refresh: Option<usize>,
    #[arg(long)]
    graph_k: Option<usize>,
    #[arg(long)]
    candidate_factor: Option<usize>,
    #[arg(long)]
    resolve_divisor: Option<usize>,
    #[arg(long)]
    prune_outer_iters: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

impl EncodeOpts {
    fn config(self) -> Result<CodecConfig> {
        let mut c = match &self.config {
            Some(p) => {
                let text =
                    fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?
            }
            None => CodecConfig::default(),
        };
        set(&mut c.gof_size, self.gof);
        set(&mut c.num_keynodes, self.nodes);
        set(&mut c.q, self.q);
        set(&mut c.prediction_mode, self.mode);
        set(&mut c.iframe_quant_bits, self.iframe_bits);
        set(&mut c.rt_levels, self.rt_levels);
        set(&mut c.residual.levels, self.res_levels);
        set(&mut c.residual.depth, self.depth);
        set(&mut c.residual.leaf_budget, self.leaf_budget);
        set(&mut c.residual.ncoc_threshold, self.ncoc_thresh);
        if self.no_ncoc {
            c.residual.ncoc_enabled = false;
        }
        let r = &mut c.registration;
        set(&mut r.alpha_reg, self.alpha_reg);
        set(&mut r.alpha_rot, self.alpha_rot);
        set(&mut r.max_outer_iters, self.max_outer_iters);
        set(&mut r.max_inner_iters, self.max_inner_iters);
        set(&mut r.convergence_tol, self.convergence_tol);
        set(&mut r.correspondence_refresh, self.correspondence_refresh);
        let s = &mut c.selection;
        set(&mut s.graph_k, self.graph_k);
        set(&mut s.candidate_factor, self.candidate_factor);
        set(&mut s.resolve_divisor, self.resolve_divisor);
        set(&mut s.prune_outer_iters, self.prune_outer_iters);
        set(&mut c.seed, self.seed);
        c.validate()?;
        Ok(c)
    }
}

fn read_stream(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).with_context(|| format!("reading {}", path.display()))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Encode { in_dir, out, opts } => {
            let cfg = opts.config()?;
            let frames = load_sequence_dir(&in_dir)?;
            let enc = encode_sequence(&frames, &cfg)?;
            fs::write(&out, &enc.bytes).with_context(|| format!("writing {}", out.display()))?;
            println!("{} frames -> {} bytes", frames.len(), enc.bytes.len());
        }
        Command::Decode {
            input,
            out_dir,
            format,
        } => {
            let frames = decode_sequence(&read_stream(&input)?)?;
            save_sequence_dir(&frames, &out_dir, format.into())?;
            println!("{} frames written to {}", frames.len(), out_dir.display());
        }
        Command::Metrics {
            dir_a,
            dir_b,
            csv,
            bitstream,
        } => {
            let a = load_sequence_dir(&dir_a)?;
            let b = load_sequence_dir(&dir_b)?;
            let bits = match bitstream {
                Some(p) => Some(
                    report_components(&read_stream(&p)?)?
                        .per_frame
                        .iter()
                        .map(|&n| 8 * n as u64)
                        .collect::<Vec<_>>(),
                ),
                None => None,
            };
            let rows = frame_metrics(&a, &b, bits.as_deref())?;
            match csv {
                Some(p) => write_metrics_csv(&rows, BufWriter::new(File::create(&p)?))?,
                None => write_metrics_csv(&rows, io::stdout().lock())?,
            }
        }
        Command::Synth {
            kind,
            frames,
            resolution,
            out_dir,
            seed,
            format,
        } => {
            let seq = generate_sequence(kind, frames, resolution, seed)?;
            save_sequence_dir(&seq, &out_dir, format.into())?;
            println!(
                "{} {kind} frames written to {}",
                seq.len(),
                out_dir.display()
            );
        }
        Command::Report { input, json } => {
            let rep = report_components(&read_stream(&input)?)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&rep)?);
            } else {
                let mut out = io::stdout().lock();
                writeln!(out, "total            {:>10}", rep.total)?;
                writeln!(out, "iframe           {:>10}", rep.iframe)?;
                writeln!(out, "keynode indices  {:>10}", rep.keynode_indices)?;
                writeln!(out, "rt               {:>10}", rep.rt)?;
                writeln!(out, "residual         {:>10}", rep.residual)?;
                writeln!(out, "overhead         {:>10}", rep.overhead)?;
                writeln!(out, "switches         {:?}", rep.switches)?;
            }
        }
        Command::Sweep { config, out } => {
            let json = out.with_extension("json");
            if json == out {
                bail!("sweep output must not be a .json file");
            }
            let spec = SweepSpec::from_json_file(&config)?;
            let frames = spec.sequence.load()?;
            let rows = sweep(&spec.configs, &frames)?;
            write_sweep_csv(&rows, BufWriter::new(File::create(&out)?))?;
            fs::write(&json, serde_json::to_string_pretty(&rows)?)?;
            let failed = rows.iter().filter(|r| r.error.is_some()).count();
            println!(
                "{} rows ({failed} failed) -> {} and {}",
                rows.len(),
                out.display(),
                json.display()
            );
        }
    }
    Ok(())
}

fn main() -> std::process::ExitCode {
    match run(Cli::parse()) {
        Ok(()) => std::process::ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::ExitCode::FAILURE
        }
    }
}
