use proptest::prelude::*;

use bellow_core::actuator::{ActuatorSpec, Material};
use bellow_core::bspline::{basis, clamped_uniform_knots, BSplineCurve as Curve};
use bellow_core::cad::{audit, mesh_module, MeshOptions};
use bellow_core::kinematics::{cc_transform, chain_poses, ModuleState};
use bellow_core::optimizer::{segment_cost, SegmentParams, SharedParams};
use bellow_core::oracle::oracle_theta;
use bellow_core::segmentation::ArcSegment;
use bellow_core::surrogate::OracleModel;
use bellow_core::{ModuleDesign, Vec3};

fn state() -> impl Strategy<Value = ModuleState> {
    (0.0..3.0f64, 1.0..40.0f64, -3.2..3.2f64).prop_map(|(theta, l, dphi)| ModuleState { theta, l, dphi })
}

/// Valid designs: t ∈ [r_in/4, r_in/2], l ∈ (4t, 4(R − r_in)].
fn design() -> impl Strategy<Value = ModuleDesign> {
    (2.0..10.0f64, 0.25..0.5f64, 0.0..1.0f64, 0.01..1.0f64).prop_map(|(r_in, tr, ru, lu)| {
        let t = r_in * tr;
        let r_avg = r_in + t + ru * (r_in - t) + 0.01;
        let l_hi = 4.0 * (r_avg - r_in);
        ModuleDesign::new(r_in, t, r_avg, 4.0 * t + lu * (l_hi - 4.0 * t))
    })
}

proptest! {
    #[test]
    fn basis_is_a_partition_of_unity(n in 4usize..20, degree in 1usize..4, t in 0.0..=1.0f64) {
        prop_assume!(n > degree);
        let knots = clamped_uniform_knots::<f64>(n, degree);
        let sum: f64 = (0..n).map(|i| basis(i, degree, t, &knots).unwrap()).sum();
        prop_assert!((sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn projection_is_idempotent(seed in 0u64..1000, q in prop::array::uniform3(-20.0..20.0f64)) {
        let ctrl: Vec<Vec3> = (0..6)
            .map(|i| {
                let a = i as f64 + seed as f64 * 0.1;
                Vec3::new(10.0 * a.cos(), 10.0 * a.sin(), 3.0 * i as f64)
            })
            .collect();
        let c = Curve::new(ctrl, 3).unwrap();
        let first = c.project(&Vec3::from(q));
        let second = c.project(&first.position);
        prop_assert!(second.distance < 1e-8);
        prop_assert!(second.position.distance(&first.position) < 1e-8);
    }

    #[test]
    fn module_transform_is_rigid(s in state()) {
        let p = cc_transform(&s).unwrap();
        prop_assert!(p.orthonormality_error() < 1e-12);
        prop_assert!((p.determinant() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn chain_is_associative(a in prop::collection::vec(state(), 1..5), b in prop::collection::vec(state(), 1..5)) {
        let joined: Vec<ModuleState> = a.iter().chain(b.iter()).copied().collect();
        let whole = *chain_poses(&joined).unwrap().last().unwrap();
        let split = *chain_poses(&a).unwrap().last().unwrap() * *chain_poses(&b).unwrap().last().unwrap();
        prop_assert!(whole.max_abs_diff(&split) < 1e-9);
    }

    #[test]
    fn actuator_json_round_trip(d in design(), n in 1usize..6, twist in -3.0..3.0f64, p in 0.0..10.0f64) {
        let spec = ActuatorSpec::uniform(d, n, twist, p, Material::default()).unwrap();
        let back: ActuatorSpec = serde_json::from_str(&serde_json::to_string(&spec).unwrap()).unwrap();
        prop_assert_eq!(back, spec);
    }

    #[test]
    fn oracle_is_monotone_in_pressure(d in design(), p in 0.0..9.5f64) {
        let m = Material::default();
        prop_assert!(oracle_theta(&d, p + 0.5, &m).unwrap() >= oracle_theta(&d, p, &m).unwrap());
        prop_assert_eq!(oracle_theta(&d, 0.0, &m).unwrap(), 0.0);
    }

    #[test]
    fn segment_cost_vanishes_only_on_exact_match(d in design(), n in 1usize..8, p in 0.5..10.0f64, scale in 0.5..1.5f64) {
        let theta = oracle_theta(&d, p, &Material::default()).unwrap();
        let x = SharedParams { r_in: d.r_in, t: d.t, pressure: p };
        let y = SegmentParams { r_avg: d.r_avg, l: d.l };
        let exact = ArcSegment::new(n as f64 * d.l, theta / d.l, 0.0).unwrap();
        let c = segment_cost(&x, &y, &exact, &OracleModel::default()).unwrap();
        prop_assert!(c.cost < 1e-12);
        prop_assume!((scale - 1.0).abs() > 1e-3);
        let off = ArcSegment::new(n as f64 * d.l, scale * theta / d.l, 0.0).unwrap();
        let c = segment_cost(&x, &y, &off, &OracleModel::default()).unwrap();
        prop_assert!(c.cost > 0.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn valid_designs_mesh_watertight(d in design()) {
        let a = audit(&mesh_module(&d, &MeshOptions { angular_step_deg: 6.0 }).unwrap());
        prop_assert!(a.is_watertight(), "{:?} {:?}", d, a);
        prop_assert_eq!(a.euler, 0);
    }
}

#[test]
fn partition_of_unity_on_a_dense_grid() {
    let knots = clamped_uniform_knots::<f64>(12, 3);
    let worst = (0..=10_000)
        .map(|k| k as f64 / 10_000.0)
        .map(|t| ((0..12).map(|i| basis(i, 3, t, &knots).unwrap()).sum::<f64>() - 1.0).abs())
        .fold(0.0, f64::max);
    assert!(worst < 1e-12);
}
