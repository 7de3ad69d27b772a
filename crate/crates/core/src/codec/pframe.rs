//! Closed-loop P-frame coding: solve, quantize the transforms, predict with
//! the quantized transforms, then code the residual against the source.

use crate::bytes::ByteReader;
use crate::deform::{
    apply_deformation, compute_influence_weights, KeyNodeSet, TransformSet, WeightTable,
};
use crate::entropy::{decode_vector, encode_vector};
use crate::mesh::{Mesh, SurfaceIndex};
use crate::registration::{solve, NodeState, RegistrationParams};
use crate::residual::{
    compute_residuals, decode_residual_frame, encode_residual_frame, ResidualConfig,
};
use crate::{Error, Result, Vec3};

/// Stream parameters a P-frame decoder needs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PFrameParams {
    pub q: usize,
    pub rt_levels: usize,
    pub residual_levels: usize,
    pub ncoc_enabled: bool,
}

#[derive(Debug, Clone)]
pub struct PFrameOutput {
    pub rt_payload: Vec<u8>,
    pub residual_payload: Vec<u8>,
    /// Reconstruction exactly as the decoder produces it.
    pub decoded: Mesh,
    /// Unquantized solver result, used to warm-start the next frame.
    pub transforms: TransformSet,
}

fn reference_weights(
    reference: &Mesh,
    nodes: &KeyNodeSet,
    q: usize,
) -> Result<(KeyNodeSet, WeightTable)> {
    let nodes = nodes.reanchored(reference)?;
    let q = q.min(nodes.len());
    let w = compute_influence_weights(reference.positions(), &nodes.node_positions, q)?;
    Ok((nodes, w))
}

/// Encodes `source` as a prediction from `prev_decoded`.
///
/// `nodes` are anchored to vertices of the chain's I-frame; `prev_decoded`
/// shares its topology.
pub fn encode_pframe(
    prev_decoded: &Mesh,
    source: &Mesh,
    nodes: &KeyNodeSet,
    params: &PFrameParams,
    residual: &ResidualConfig,
    registration: &RegistrationParams,
    init: Option<&TransformSet>,
) -> Result<PFrameOutput> {
    let index = SurfaceIndex::build(source)?;
    encode_pframe_indexed(
        prev_decoded,
        &index,
        nodes,
        params,
        residual,
        registration,
        init,
    )
}

pub(crate) fn encode_pframe_indexed(
    prev_decoded: &Mesh,
    source_index: &SurfaceIndex,
    nodes: &KeyNodeSet,
    params: &PFrameParams,
    residual: &ResidualConfig,
    registration: &RegistrationParams,
    init: Option<&TransformSet>,
) -> Result<PFrameOutput> {
    let (nodes_ref, weights) = reference_weights(prev_decoded, nodes, params.q)?;
    let n = nodes_ref.len();
    let init_state = init
        .filter(|t| t.len() == n)
        .map(NodeState::from_transforms);
    let transforms = solve(
        prev_decoded.positions(),
        source_index,
        &nodes_ref,
        &weights,
        registration,
        init_state,
    )
    .and_then(|sol| sol.state.to_transforms())
    .unwrap_or_else(|_| TransformSet::identity(n));

    let mut rt_payload = Vec::new();
    let r = encode_vector(
        &transforms.flat_rotations(),
        &transforms.flat_rotations(),
        params.rt_levels,
        &mut rt_payload,
    )?;
    let t = encode_vector(
        &transforms.flat_translations(),
        &transforms.flat_translations(),
        params.rt_levels,
        &mut rt_payload,
    )?;
    let quantized = TransformSet::from_flat(&r, &t)?;
    let distorted = apply_deformation(prev_decoded, &nodes_ref, &quantized, &weights)?;
    let res = compute_residuals(&distorted, source_index);
    let residual_payload = encode_residual_frame(&distorted, &res, residual)?;

    let decoded = decode_pframe(
        prev_decoded,
        nodes,
        &mut ByteReader::new(&rt_payload),
        &mut ByteReader::new(&residual_payload),
        params,
    )?;
    Ok(PFrameOutput {
        rt_payload,
        residual_payload,
        decoded,
        transforms,
    })
}

/// Reconstructs a P-frame from its two payloads; consumes both readers.
pub fn decode_pframe(
    prev_decoded: &Mesh,
    nodes: &KeyNodeSet,
    rt: &mut ByteReader,
    residual: &mut ByteReader,
    params: &PFrameParams,
) -> Result<Mesh> {
    let (nodes_ref, weights) = reference_weights(prev_decoded, nodes, params.q)?;
    let at = rt.offset();
    let r = decode_vector(rt, params.rt_levels)?;
    let t = decode_vector(rt, params.rt_levels)?;
    rt.finish()?;
    if r.len() != 3 * nodes_ref.len() || t.len() != 3 * nodes_ref.len() {
        return Err(Error::corrupt(
            at,
            format!(
                "{} rotation and {} translation values for {} key nodes",
                r.len(),
                t.len(),
                nodes_ref.len()
            ),
        ));
    }
    let quantized = TransformSet::from_flat(&r, &t)?;
    let distorted = apply_deformation(prev_decoded, &nodes_ref, &quantized, &weights)?;
    let corrections = decode_residual_frame(
        &distorted,
        residual,
        params.residual_levels,
        params.ncoc_enabled,
    )?;
    let positions: Vec<Vec3> = distorted
        .positions()
        .iter()
        .zip(&corrections)
        .map(|(p, c)| p + c)
        .collect();
    distorted.with_positions(positions)
}
