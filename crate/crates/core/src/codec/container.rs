//! GoF coding and the sequence container.
//!
//! Layout (little-endian):
//!
//! ```text
//! header   "KNDM" version:u16 frames:u32 gof:u8 nodes:u32 q:u16
//!          rt_levels:u16 res_levels:u16 iframe_bits:u8 mode:u8 switch:u8 flags:u8
//! per GoF  switch:u8 [iframe] [forward anchors] [backward anchors]
//!          then for frames 1..n: [rt] [residual]
//! ```
//!
//! Every `[..]` is a section with a `u32` byte length. Frames below the switch
//! index are chained forward from this GoF's I-frame, the rest backward from
//! the next GoF's I-frame.

use crate::bytes::{write_section, write_u16, write_u32, ByteReader};
use crate::codec::config::{CodecConfig, PredictionMode};
use crate::codec::iframe::{decode_iframe, decode_iframe_from, encode_iframe};
use crate::codec::pframe::{decode_pframe, encode_pframe_indexed, PFrameOutput, PFrameParams};
use crate::deform::{KeyNodeSet, TransformSet};
use crate::keynode::{decode_indices_from, encode_indices, generate_keynodes};
use crate::mesh::{Mesh, SurfaceIndex};
use crate::metrics::{distances_to, rms};
use crate::{Error, Result};

pub const MAGIC: &[u8; 4] = b"KNDM";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 25;
/// Residual streams carry NCOC flags.
pub const FLAG_NCOC: u8 = 1;
/// A dual-direction stream whose final GoF is forward-only for lack of a next I-frame.
pub const FLAG_FINAL_FORWARD: u8 = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceHeader {
    pub frame_count: u32,
    pub gof_size: u8,
    pub num_keynodes: u32,
    pub q: u16,
    pub rt_levels: u16,
    pub residual_levels: u16,
    pub iframe_bits: u8,
    pub mode: PredictionMode,
    pub flags: u8,
}

impl SequenceHeader {
    fn from_config(cfg: &CodecConfig, frame_count: usize) -> Self {
        let mut flags = 0;
        if cfg.residual.ncoc_enabled {
            flags |= FLAG_NCOC;
        }
        if cfg.prediction_mode != PredictionMode::Forward {
            flags |= FLAG_FINAL_FORWARD;
        }
        Self {
            frame_count: frame_count as u32,
            gof_size: cfg.gof_size as u8,
            num_keynodes: cfg.num_keynodes as u32,
            q: cfg.q as u16,
            rt_levels: cfg.rt_levels as u16,
            residual_levels: cfg.residual.levels as u16,
            iframe_bits: cfg.iframe_quant_bits,
            mode: cfg.prediction_mode,
            flags,
        }
    }

    fn write(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(MAGIC);
        write_u16(out, VERSION);
        write_u32(out, self.frame_count);
        out.push(self.gof_size);
        write_u32(out, self.num_keynodes);
        write_u16(out, self.q);
        write_u16(out, self.rt_levels);
        write_u16(out, self.residual_levels);
        out.push(self.iframe_bits);
        let (mode, s) = self.mode.code();
        out.push(mode);
        out.push(s);
        out.push(self.flags);
    }

    fn read(r: &mut ByteReader) -> Result<Self> {
        let magic = r.take(4)?;
        if magic != MAGIC {
            return Err(Error::corrupt(0, "bad magic"));
        }
        let at = r.offset();
        let version = r.u16()?;
        if version != VERSION {
            return Err(Error::corrupt(at, format!("unsupported version {version}")));
        }
        let field = |ok: bool, at: usize, what: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::corrupt(at, format!("invalid {what}")))
            }
        };
        let at = r.offset();
        let frame_count = r.u32()?;
        field(frame_count > 0, at, "frame count")?;
        let at = r.offset();
        let gof_size = r.u8()?;
        field(gof_size > 0, at, "GoF size")?;
        let at = r.offset();
        let num_keynodes = r.u32()?;
        field(num_keynodes > 0, at, "key-node count")?;
        let at = r.offset();
        let q = r.u16()?;
        field(q > 0, at, "Q")?;
        let mut levels = [0u16; 2];
        for l in &mut levels {
            let at = r.offset();
            *l = r.u16()?;
            field(*l >= 4 && *l % 2 == 0, at, "level count")?;
        }
        let at = r.offset();
        let iframe_bits = r.u8()?;
        field((8..=24).contains(&iframe_bits), at, "I-frame bits")?;
        let at = r.offset();
        let (code, s) = (r.u8()?, r.u8()?);
        let mode = PredictionMode::from_code(code, s)
            .filter(|m| !matches!(m, PredictionMode::FixedDual(s) if *s == 0 || *s >= gof_size))
            .ok_or_else(|| Error::corrupt(at, format!("invalid prediction mode {code}/{s}")))?;
        let at = r.offset();
        let flags = r.u8()?;
        field(flags & !(FLAG_NCOC | FLAG_FINAL_FORWARD) == 0, at, "flags")?;
        Ok(Self {
            frame_count,
            gof_size,
            num_keynodes,
            q,
            rt_levels: levels[0],
            residual_levels: levels[1],
            iframe_bits,
            mode,
            flags,
        })
    }

    pub fn pframe_params(&self) -> PFrameParams {
        PFrameParams {
            q: self.q as usize,
            rt_levels: self.rt_levels as usize,
            residual_levels: self.residual_levels as usize,
            ncoc_enabled: self.flags & FLAG_NCOC != 0,
        }
    }

    /// `(first frame, frame count)` of every GoF.
    pub fn gof_ranges(&self) -> Vec<(usize, usize)> {
        gof_ranges(self.frame_count as usize, self.gof_size as usize)
    }
}

fn gof_ranges(frames: usize, g: usize) -> Vec<(usize, usize)> {
    (0..frames)
        .step_by(g)
        .map(|s| (s, g.min(frames - s)))
        .collect()
}

/// Sections of one GoF, each a reader positioned at its payload.
#[derive(Debug, Clone)]
pub struct GofSections<'a> {
    pub first_frame: usize,
    pub frame_count: usize,
    pub switch: u8,
    pub switch_offset: usize,
    pub iframe: ByteReader<'a>,
    pub forward_nodes: ByteReader<'a>,
    pub backward_nodes: ByteReader<'a>,
    /// `(rt, residual)` for frames `1..frame_count`.
    pub pframes: Vec<(ByteReader<'a>, ByteReader<'a>)>,
}

#[derive(Debug, Clone)]
pub struct Container<'a> {
    pub header: SequenceHeader,
    pub gofs: Vec<GofSections<'a>>,
    pub total_len: usize,
}

/// Splits a stream into sections without decoding any payload.
pub fn parse_container(bytes: &[u8]) -> Result<Container<'_>> {
    let mut r = ByteReader::new(bytes);
    let header = SequenceHeader::read(&mut r)?;
    let mut gofs = Vec::new();
    for (first_frame, n) in header.gof_ranges() {
        let switch_offset = r.offset();
        let switch = r.u8()?;
        if switch == 0 || switch as usize > n {
            return Err(Error::corrupt(
                switch_offset,
                format!("switch index {switch} outside [1, {n}]"),
            ));
        }
        let iframe = r.section()?;
        let forward_nodes = r.section()?;
        let backward_nodes = r.section()?;
        let pframes = (1..n)
            .map(|_| Ok((r.section()?, r.section()?)))
            .collect::<Result<_>>()?;
        gofs.push(GofSections {
            first_frame,
            frame_count: n,
            switch,
            switch_offset,
            iframe,
            forward_nodes,
            backward_nodes,
            pframes,
        });
    }
    r.finish()?;
    Ok(Container {
        header,
        gofs,
        total_len: bytes.len(),
    })
}

#[derive(Debug, Clone)]
pub struct EncodedSequence {
    pub bytes: Vec<u8>,
    /// The encoder's reference reconstructions, one per input frame.
    pub decoded: Vec<Mesh>,
    /// Switch index written for each GoF.
    pub switches: Vec<u8>,
}

#[derive(Debug, Clone)]
pub struct EncodedGof {
    pub bytes: Vec<u8>,
    pub decoded: Vec<Mesh>,
    pub switch: u8,
}

/// A coded I-frame together with its reconstruction.
#[derive(Debug, Clone)]
pub struct CodedIFrame {
    pub payload: Vec<u8>,
    pub decoded: Mesh,
}

impl CodedIFrame {
    pub fn encode(mesh: &Mesh, bits: u8, frame_index: usize) -> Result<Self> {
        let payload = encode_iframe(mesh, bits)?;
        let decoded = decode_iframe(&payload)?.with_frame_index(frame_index);
        Ok(Self { payload, decoded })
    }
}

pub fn encode_sequence(frames: &[Mesh], cfg: &CodecConfig) -> Result<EncodedSequence> {
    cfg.validate()?;
    if frames.is_empty() {
        return Err(Error::invalid("a sequence needs at least one frame"));
    }
    if frames.len() > u32::MAX as usize {
        return Err(Error::invalid("too many frames"));
    }
    let ranges = gof_ranges(frames.len(), cfg.gof_size);
    let iframes = ranges
        .iter()
        .map(|&(s, _)| CodedIFrame::encode(&frames[s], cfg.iframe_quant_bits, s))
        .collect::<Result<Vec<_>>>()?;
    let mut bytes = Vec::with_capacity(HEADER_LEN);
    SequenceHeader::from_config(cfg, frames.len()).write(&mut bytes);
    let mut decoded = Vec::with_capacity(frames.len());
    let mut switches = Vec::with_capacity(ranges.len());
    for (k, &(s, n)) in ranges.iter().enumerate() {
        let next = iframes.get(k + 1).map(|i| &i.decoded);
        let gof = encode_gof(&frames[s..s + n], &iframes[k], next, cfg, s, k as u64)?;
        bytes.extend_from_slice(&gof.bytes);
        decoded.extend(gof.decoded);
        switches.push(gof.switch);
    }
    Ok(EncodedSequence {
        bytes,
        decoded,
        switches,
    })
}

fn rmse(decoded: &Mesh, index: &SurfaceIndex) -> f64 {
    rms(&distances_to(decoded.positions(), index))
}

/// Encodes one GoF; `next_iframe` is the decoded I-frame of the following
/// GoF, required for dual-direction prediction.
pub fn encode_gof(
    frames: &[Mesh],
    iframe: &CodedIFrame,
    next_iframe: Option<&Mesh>,
    cfg: &CodecConfig,
    first_frame: usize,
    gof_index: u64,
) -> Result<EncodedGof> {
    let n = frames.len();
    if n == 0 || n > cfg.gof_size {
        return Err(Error::invalid(format!(
            "GoF of {n} frames with G = {}",
            cfg.gof_size
        )));
    }
    let params = PFrameParams {
        q: cfg.q,
        rt_levels: cfg.rt_levels,
        residual_levels: cfg.residual.levels,
        ncoc_enabled: cfg.residual.ncoc_enabled,
    };
    let indices = frames[1..]
        .iter()
        .map(SurfaceIndex::build)
        .collect::<Result<Vec<_>>>()?;
    let index_of = |f: usize| &indices[f - 1];
    let select = |source: &Mesh, target: &Mesh, seed: u64| {
        let count = cfg.num_keynodes.min(source.vertex_count());
        generate_keynodes(
            source,
            target,
            count,
            cfg.q,
            &cfg.selection,
            &cfg.registration,
            seed,
        )
    };
    let fwd_seed = cfg.seed.wrapping_add(2 * gof_index);
    let bwd_seed = fwd_seed.wrapping_add(1);
    // frames visited in chain order, each predicted from the previous output
    let chain = |start: &Mesh, nodes: &KeyNodeSet, order: &mut dyn Iterator<Item = usize>| {
        let mut out: Vec<(usize, PFrameOutput)> = Vec::new();
        let mut warm: Option<TransformSet> = None;
        for f in order {
            let prev = out.last().map_or(start, |(_, o)| &o.decoded);
            let mut o = encode_pframe_indexed(
                prev,
                index_of(f),
                nodes,
                &params,
                &cfg.residual,
                &cfg.registration,
                warm.as_ref(),
            )?;
            o.decoded = o.decoded.with_frame_index(first_frame + f);
            warm = Some(o.transforms.clone());
            out.push((f, o));
        }
        Ok::<_, Error>(out)
    };

    let lookahead = next_iframe.filter(|_| n > 1);
    let (switch, fwd_nodes, bwd_nodes, mut outputs) = match (cfg.prediction_mode, lookahead) {
        _ if n == 1 => (1, None, None, Vec::new()),
        (PredictionMode::Forward, _) | (_, None) => {
            let nodes = select(&iframe.decoded, &frames[1], fwd_seed)?;
            let out = chain(&iframe.decoded, &nodes, &mut (1..n))?;
            (n, Some(nodes), None, out)
        }
        (PredictionMode::FixedDual(s), Some(next)) => {
            let s = (s as usize).min(n);
            let mut out = Vec::new();
            let fwd = if s > 1 {
                let nodes = select(&iframe.decoded, &frames[1], fwd_seed)?;
                out.extend(chain(&iframe.decoded, &nodes, &mut (1..s))?);
                Some(nodes)
            } else {
                None
            };
            let bwd = if s < n {
                let nodes = select(next, &frames[n - 1], bwd_seed)?;
                out.extend(chain(next, &nodes, &mut (s..n).rev())?);
                Some(nodes)
            } else {
                None
            };
            (s, fwd, bwd, out)
        }
        (PredictionMode::Adaptive, Some(next)) => {
            let fwd_set = select(&iframe.decoded, &frames[1], fwd_seed)?;
            let bwd_set = select(next, &frames[n - 1], bwd_seed)?;
            let mut fwd = chain(&iframe.decoded, &fwd_set, &mut (1..n))?;
            let mut bwd = chain(next, &bwd_set, &mut (1..n).rev())?;
            bwd.reverse();
            let fwd_cost: Vec<f64> = fwd
                .iter()
                .map(|(f, o)| rmse(&o.decoded, index_of(*f)))
                .collect();
            let bwd_cost: Vec<f64> = bwd
                .iter()
                .map(|(f, o)| rmse(&o.decoded, index_of(*f)))
                .collect();
            let total = |s: usize| -> f64 {
                fwd_cost[..s - 1].iter().sum::<f64>() + bwd_cost[s - 1..].iter().sum::<f64>()
            };
            let mut best = n;
            let mut best_cost = total(n);
            for s in (1..n).rev() {
                let c = total(s);
                if c < best_cost {
                    best = s;
                    best_cost = c;
                }
            }
            bwd.drain(..best - 1);
            fwd.truncate(best - 1);
            let mut out = fwd;
            out.extend(bwd);
            (
                best,
                (best > 1).then_some(fwd_set),
                (best < n).then_some(bwd_set),
                out,
            )
        }
    };
    outputs.sort_by_key(|(f, _)| *f);

    let mut bytes = Vec::new();
    bytes.push(switch as u8);
    write_section(&mut bytes, &iframe.payload);
    for set in [&fwd_nodes, &bwd_nodes] {
        let payload = match set {
            Some(s) => encode_indices(&s.anchor_indices)?,
            None => Vec::new(),
        };
        write_section(&mut bytes, &payload);
    }
    let mut decoded = Vec::with_capacity(n);
    decoded.push(iframe.decoded.clone());
    for (_, o) in outputs {
        write_section(&mut bytes, &o.rt_payload);
        write_section(&mut bytes, &o.residual_payload);
        decoded.push(o.decoded);
    }
    Ok(EncodedGof {
        bytes,
        decoded,
        switch: switch as u8,
    })
}

pub fn decode_sequence(bytes: &[u8]) -> Result<Vec<Mesh>> {
    let container = parse_container(bytes)?;
    let params = container.header.pframe_params();
    let mut gofs = container.gofs;
    let iframes = gofs
        .iter_mut()
        .map(|g| {
            let m = decode_iframe_from(&mut g.iframe)?;
            g.iframe.finish()?;
            Ok(m.with_frame_index(g.first_frame))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = Vec::with_capacity(container.header.frame_count as usize);
    for (k, g) in gofs.into_iter().enumerate() {
        out.extend(decode_gof(g, &iframes[k], iframes.get(k + 1), &params)?);
    }
    Ok(out)
}

fn read_anchors(
    r: &mut ByteReader,
    reference: Option<&Mesh>,
    needed: bool,
) -> Result<Option<KeyNodeSet>> {
    let at = r.offset();
    let anchors = decode_indices_from(r)?;
    match reference {
        _ if anchors.is_empty() && !needed => Ok(None),
        Some(mesh) if needed && !anchors.is_empty() => {
            if anchors
                .last()
                .is_some_and(|&a| a as usize >= mesh.vertex_count())
            {
                return Err(Error::corrupt(
                    at,
                    "anchor index outside the reference frame",
                ));
            }
            Ok(Some(KeyNodeSet::anchors_only(mesh, anchors)?))
        }
        _ => Err(Error::corrupt(
            at,
            "key-node section does not match the switch index",
        )),
    }
}

/// Decodes one GoF given its decoded I-frame and, for dual-direction GoFs,
/// the next GoF's decoded I-frame.
pub fn decode_gof(
    mut g: GofSections,
    iframe: &Mesh,
    next_iframe: Option<&Mesh>,
    params: &PFrameParams,
) -> Result<Vec<Mesh>> {
    let n = g.frame_count;
    let s = g.switch as usize;
    if s < n && next_iframe.is_none() {
        return Err(Error::corrupt(
            g.switch_offset,
            "backward prediction in the final GoF",
        ));
    }
    let fwd = read_anchors(&mut g.forward_nodes, Some(iframe), s > 1)?;
    let bwd = read_anchors(&mut g.backward_nodes, next_iframe, s < n)?;
    let mut frames: Vec<Option<Mesh>> = vec![None; n];
    frames[0] = Some(iframe.clone());
    let mut run =
        |start: &Mesh, nodes: &KeyNodeSet, order: &mut dyn Iterator<Item = usize>| -> Result<()> {
            let mut prev = start.clone();
            for f in order {
                let (rt, res) = &mut g.pframes[f - 1];
                prev = decode_pframe(&prev, nodes, rt, res, params)?
                    .with_frame_index(g.first_frame + f);
                frames[f] = Some(prev.clone());
            }
            Ok(())
        };
    if let Some(nodes) = &fwd {
        run(iframe, nodes, &mut (1..s))?;
    }
    if let (Some(nodes), Some(next)) = (&bwd, next_iframe) {
        run(next, nodes, &mut (s..n).rev())?;
    }
    Ok(frames
        .into_iter()
        .map(|f| f.expect("every frame is decoded"))
        .collect())
}
