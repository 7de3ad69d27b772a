//! Sequence coding: I-frames, closed-loop P-frames, GoF prediction modes and
//! the container format.

pub mod config;
pub mod container;
pub mod iframe;
pub mod pframe;

pub use config::{CodecConfig, PredictionMode};
pub use container::{
    decode_gof, decode_sequence, encode_gof, encode_sequence, parse_container, CodedIFrame,
    Container, EncodedGof, EncodedSequence, GofSections, SequenceHeader,
};
pub use iframe::{decode_iframe, encode_iframe};
pub use pframe::{decode_pframe, encode_pframe, PFrameOutput, PFrameParams};
