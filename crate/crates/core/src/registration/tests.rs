use super::*;
use crate::deform::{compute_influence_weights, rotvec_to_matrix};
use crate::testutil::{bumpy_sphere, translated};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn setup(mesh: &Mesh, n: usize, q: usize) -> (KeyNodeSet, WeightTable) {
    let mut anchors: Vec<u32> = mesh
        .farthest_point_sample(n, 7)
        .unwrap()
        .into_iter()
        .map(|i| i as u32)
        .collect();
    anchors.sort_unstable();
    let nodes = KeyNodeSet::from_anchors(mesh, anchors, 4).unwrap();
    let w = compute_influence_weights(mesh.positions(), &nodes.node_positions, q).unwrap();
    (nodes, w)
}

fn rotated_z(mesh: &Mesh, angle: f64, center: Vec3) -> Mesh {
    let r = rotvec_to_matrix(&Vec3::new(0.0, 0.0, angle));
    mesh.with_positions(
        mesh.positions()
            .iter()
            .map(|p| r * (p - center) + center)
            .collect(),
    )
    .unwrap()
}

#[test]
fn loss_zero_at_identity_on_same_mesh() {
    let m = bumpy_sphere(6, 8);
    let (nodes, w) = setup(&m, 5, 3);
    let c = m.positions().to_vec();
    let l = eval_loss(
        &m,
        &nodes,
        &w,
        &vec![Mat3::identity(); 5],
        &vec![Vec3::zeros(); 5],
        &c,
    )
    .unwrap();
    assert_eq!(l, LossBreakdown::default());
}

#[test]
fn single_edge_regularizer() {
    let m = Mesh::new(vec![Vec3::zeros(), Vec3::x(), Vec3::y()], vec![[0, 1, 2]]).unwrap();
    let nodes = KeyNodeSet::from_anchors(&m, vec![0, 1], 1).unwrap();
    assert_eq!(nodes.graph_edges, vec![(0, 1)]);
    let w = compute_influence_weights(m.positions(), &nodes.node_positions, 1).unwrap();
    let l = eval_loss(
        &m,
        &nodes,
        &w,
        &[Mat3::identity(); 2],
        &[Vec3::x(), Vec3::zeros()],
        m.positions(),
    )
    .unwrap();
    // each direction of the edge contributes |(1,0,0)|^2
    assert!((l.reg - 2.0).abs() < 1e-15);
    assert_eq!(l.rot, 0.0);
}

#[test]
fn gradient_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let m = bumpy_sphere(5, 6);
    let params = RegistrationParams::default();
    for trial in 0..20 {
        let n = 1 + trial % 5;
        let (nodes, w) = setup(&m, n, n.min(3));
        let mut rot: Vec<Mat3> = (0..n)
            .map(|_| Mat3::identity() + Mat3::from_fn(|_, _| rng.gen_range(-0.2..0.2)))
            .collect();
        let mut tr: Vec<Vec3> = (0..n)
            .map(|_| Vec3::from_fn(|_, _| rng.gen_range(-0.3..0.3)))
            .collect();
        let corr: Vec<Vec3> = m
            .positions()
            .iter()
            .map(|p| p + Vec3::from_fn(|_, _| rng.gen_range(-0.1..0.1)))
            .collect();
        let g = loss_gradient(&m, &nodes, &w, &rot, &tr, &params, &corr).unwrap();
        let total = |rot: &[Mat3], tr: &[Vec3]| {
            eval_loss(&m, &nodes, &w, rot, tr, &corr)
                .unwrap()
                .total(&params)
        };
        let h = 1e-6;
        let mut fd = vec![0.0; 12 * n];
        for j in 0..n {
            for p in 0..12 {
                let bump = |s: f64, rot: &mut Vec<Mat3>, tr: &mut Vec<Vec3>| {
                    if p < 9 {
                        rot[j][(p / 3, p % 3)] += s;
                    } else {
                        tr[j][p - 9] += s;
                    }
                };
                bump(h, &mut rot, &mut tr);
                let lp = total(&rot, &tr);
                bump(-2.0 * h, &mut rot, &mut tr);
                let lm = total(&rot, &tr);
                bump(h, &mut rot, &mut tr);
                fd[12 * j + p] = (lp - lm) / (2.0 * h);
            }
        }
        let err: f64 = g
            .iter()
            .zip(&fd)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        let scale: f64 = fd.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(
            err / scale < 1e-5,
            "trial {trial}: relative error {}",
            err / scale
        );
    }
}

#[test]
fn recovers_pure_translation() {
    let m = bumpy_sphere(10, 14);
    let delta = Vec3::new(0.05, -0.03, 0.04);
    let target = translated(&m, delta);
    let (nodes, w) = setup(&m, 6, 4);
    let params = RegistrationParams {
        max_outer_iters: 400,
        convergence_tol: 1e-14,
        ..Default::default()
    };
    let rep = extract_transforms(&m, &target, &nodes, &w, &params, None).unwrap();
    for (r, t) in rep
        .transforms
        .rotations
        .iter()
        .zip(&rep.transforms.translations)
    {
        assert!(r.norm() < 1e-6, "rotation {r:?}");
        assert!((t - delta).norm() < 1e-6, "translation {t:?}");
    }
    assert!(rep.loss_trace.last().unwrap().loss.data < 1e-10);
}

#[test]
fn same_target_converges_immediately() {
    let m = bumpy_sphere(6, 8);
    let (nodes, w) = setup(&m, 4, 3);
    let rep = extract_transforms(&m, &m, &nodes, &w, &RegistrationParams::default(), None).unwrap();
    assert!(rep.converged);
    assert_eq!(rep.loss_trace.len(), 1);
    assert_eq!(rep.loss_trace[0].iteration, 0);
    assert_eq!(rep.transforms, TransformSet::identity(4));
}

#[test]
fn single_node_recovers_small_rotation() {
    let m = bumpy_sphere(10, 14);
    let centroid = m.positions().iter().sum::<Vec3>() / m.vertex_count() as f64;
    let angle = 5f64.to_radians();
    let target = rotated_z(&m, angle, centroid);
    let nodes = KeyNodeSet::free(vec![centroid], 4);
    let w = compute_influence_weights(m.positions(), &nodes.node_positions, 1).unwrap();
    let params = RegistrationParams {
        max_outer_iters: 400,
        convergence_tol: 1e-14,
        ..Default::default()
    };
    let rep = extract_transforms(&m, &target, &nodes, &w, &params, None).unwrap();
    let r = rep.transforms.rotations[0];
    assert!((r - Vec3::new(0.0, 0.0, angle)).norm() < 1e-4, "{r:?}");
}

#[test]
fn invalid_params_rejected() {
    let p = RegistrationParams {
        max_outer_iters: 0,
        ..Default::default()
    };
    assert!(p.validate().is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn trace_is_monotone_and_rotations_proper(
        dx in -0.1f64..0.1, dy in -0.1f64..0.1, angle in -0.2f64..0.2, n in 2usize..7
    ) {
        let m = bumpy_sphere(7, 9);
        let target = rotated_z(&translated(&m, Vec3::new(dx, dy, 0.0)), angle, Vec3::zeros());
        let (nodes, w) = setup(&m, n, 3.min(n));
        let index = SurfaceIndex::build(&target).unwrap();
        let params = RegistrationParams { max_outer_iters: 8, ..Default::default() };
        let sol = solve(m.positions(), &index, &nodes, &w, &params, None).unwrap();
        for pair in sol.trace.windows(2) {
            prop_assert!(pair[1].loss.total(&params) <= pair[0].loss.total(&params));
        }
        for r in &sol.state.rotations {
            let p = nearest_rotation(r);
            prop_assert!((p.transpose() * p - Mat3::identity()).norm() < 1e-9);
            prop_assert!(p.determinant() > 0.0);
        }
    }
}
