//! Byte accounting of a coded stream.

use serde::{Deserialize, Serialize};

use crate::codec::container::{parse_container, HEADER_LEN};
use crate::Result;

const LEN_PREFIX: usize = 4;

/// Bytes per stream component; the five components sum to `total`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComponentReport {
    pub total: usize,
    pub iframe: usize,
    pub keynode_indices: usize,
    pub rt: usize,
    pub residual: usize,
    /// Header, switch bytes and section lengths.
    pub overhead: usize,
    /// Bytes attributed to each frame; the header goes to frame 0 and each
    /// GoF's switch byte and key nodes to its I-frame.
    pub per_frame: Vec<usize>,
    pub switches: Vec<u8>,
}

impl ComponentReport {
    pub fn component_sum(&self) -> usize {
        self.iframe + self.keynode_indices + self.rt + self.residual + self.overhead
    }
}

pub fn report_components(bytes: &[u8]) -> Result<ComponentReport> {
    let c = parse_container(bytes)?;
    let mut rep = ComponentReport {
        total: c.total_len,
        overhead: HEADER_LEN,
        per_frame: vec![0; c.header.frame_count as usize],
        ..Default::default()
    };
    rep.per_frame[0] = HEADER_LEN;
    for g in &c.gofs {
        let iframe = g.iframe.remaining();
        let nodes = g.forward_nodes.remaining() + g.backward_nodes.remaining();
        rep.iframe += iframe;
        rep.keynode_indices += nodes;
        rep.overhead += 1 + 3 * LEN_PREFIX;
        rep.per_frame[g.first_frame] += iframe + nodes + 1 + 3 * LEN_PREFIX;
        rep.switches.push(g.switch);
        for (f, (rt, res)) in g.pframes.iter().enumerate() {
            rep.rt += rt.remaining();
            rep.residual += res.remaining();
            rep.overhead += 2 * LEN_PREFIX;
            rep.per_frame[g.first_frame + 1 + f] +=
                rt.remaining() + res.remaining() + 2 * LEN_PREFIX;
        }
    }
    Ok(rep)
}
