use super::*;
use crate::codec::{encode_sequence, CodecConfig};

fn small_config() -> CodecConfig {
    let mut c = CodecConfig {
        gof_size: 4,
        num_keynodes: 12,
        ..Default::default()
    };
    c.registration.max_outer_iters = 8;
    c.residual.leaf_budget = 32;
    c
}

#[test]
fn components_sum_to_stream_length() {
    let frames = generate_sequence(SequenceKind::Bend, 6, 6, 1).unwrap();
    let enc = encode_sequence(&frames, &small_config()).unwrap();
    let rep = report_components(&enc.bytes).unwrap();
    assert_eq!(rep.component_sum(), enc.bytes.len());
    assert_eq!(rep.per_frame.iter().sum::<usize>(), enc.bytes.len());
    assert!(rep.rt > 0 && rep.residual > 0 && rep.keynode_indices > 0);
}

#[test]
fn all_intra_has_no_inter_components() {
    let frames = generate_sequence(SequenceKind::Bend, 3, 6, 1).unwrap();
    let cfg = CodecConfig {
        gof_size: 1,
        ..small_config()
    };
    let rep = report_components(&encode_sequence(&frames, &cfg).unwrap().bytes).unwrap();
    assert_eq!((rep.rt, rep.residual, rep.keynode_indices), (0, 0, 0));
    assert_eq!(rep.component_sum(), rep.total);
}

#[test]
fn sweep_rows_are_deterministic() {
    let frames = generate_sequence(SequenceKind::Rigid, 3, 5, 2).unwrap();
    let cfg = small_config();
    let rows = sweep(&[cfg.clone()], &frames).unwrap();
    assert_eq!(rows.len(), 1);
    assert!(rows[0].error.is_none());
    let twice = sweep(&[cfg.clone(), cfg], &frames).unwrap();
    assert_eq!(twice[0].total_bits, twice[1].total_bits);
    assert_eq!(twice[0].bits_per_frame, twice[1].bits_per_frame);
    assert_eq!(twice[0].mean_p2s_rmse, twice[1].mean_p2s_rmse);
    assert_eq!(
        rows[0].bits_per_frame.iter().sum::<u64>(),
        rows[0].total_bits
    );
    assert!(sweep(&[], &frames).is_err());
}

#[test]
fn failing_config_becomes_error_row() {
    let frames = generate_sequence(SequenceKind::Rigid, 2, 5, 2).unwrap();
    let bad = CodecConfig {
        iframe_quant_bits: 3,
        ..small_config()
    };
    let rows = sweep(&[bad, small_config()], &frames).unwrap();
    assert!(rows[0].error.is_some());
    assert!(rows[1].error.is_none());
    let mut csv = Vec::new();
    write_sweep_csv(&rows, &mut csv).unwrap();
    assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 3);
}

#[test]
fn sequence_dir_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let frames = generate_sequence(SequenceKind::Noisy, 3, 5, 4).unwrap();
    save_sequence_dir(&frames, dir.path(), MeshFormat::Ply).unwrap();
    let back = load_sequence_dir(dir.path()).unwrap();
    assert_eq!(back, frames);
    let rows = frame_metrics(&back, &frames, None).unwrap();
    assert!(rows.iter().all(|r| r.p2s_rmse == 0.0 && r.hausdorff == 0.0));
    let mut out = Vec::new();
    write_metrics_csv(&rows, &mut out).unwrap();
    let text = String::from_utf8(out).unwrap();
    assert!(text.starts_with("frame_index,bits,p2s_rmse,hausdorff"));
}
