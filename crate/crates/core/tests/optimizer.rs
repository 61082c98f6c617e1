
use bellow_core::actuator::Material;
use bellow_core::kinematics::forward_kinematics;
use bellow_core::optimizer::{assemble, optimize, Budget, MatchProblem, MatchStatus};
use bellow_core::oracle::oracle_theta;
use bellow_core::segmentation::ArcSegment;
use bellow_core::surrogate::{actuator_thetas, OracleModel};
use bellow_core::ModuleDesign;

fn planted() -> (ArcSegment, f64) {
    let d = ModuleDesign::new(4.0, 1.0, 7.0, 8.0);
    let theta = oracle_theta(&d, 8.0, &Material::default()).unwrap();
    (ArcSegment::new(48.0, theta / 8.0, 0.0).unwrap(), theta)
}

#[test]
fn recovers_a_planted_design() {
    let (seg, _) = planted();
    let mut p = MatchProblem::new(vec![seg], 10.0);
    p.budget = Budget::desk();
    p.r_in_range = Some((2.0, 8.0));
    p.seed = 11;
    let r = optimize(&p, &OracleModel::default()).unwrap();
    assert!(r.feasible);
    assert!(r.mean_cost < 0.02, "cost {}", r.mean_cost);
    assert_eq!(r.status, MatchStatus::Converged);
}

#[test]
fn seeded_runs_are_identical() {
    let (seg, _) = planted();
    let mut p = MatchProblem::new(vec![seg, ArcSegment::new(20.0, 0.0, 0.0).unwrap()], 10.0);
    p.budget = Budget { upper_iters: 12, lower_iters: 8 };
    p.seed = 5;
    let a = optimize(&p, &OracleModel::default()).unwrap();
    let b = optimize(&p, &OracleModel::default()).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
}

#[test]
fn zero_pressure_is_reported_infeasible() {
    let (seg, _) = planted();
    let mut p = MatchProblem::new(vec![seg], 0.0);
    p.budget = Budget { upper_iters: 8, lower_iters: 6 };
    let r = optimize(&p, &OracleModel::default()).unwrap();
    assert!(!r.feasible);
    assert_eq!(r.status, MatchStatus::Infeasible);
    assert!(r.mean_cost > 0.5);
    assert!(assemble(&r).is_err());
}

#[test]
fn assembled_actuator_tracks_the_target_arc() {
    let (seg, _) = planted();
    let mut p = MatchProblem::new(vec![seg], 10.0);
    p.budget = Budget::desk();
    p.r_in_range = Some((2.0, 8.0));
    p.seed = 11;
    let model = OracleModel::default();
    let r = optimize(&p, &model).unwrap();
    let spec = assemble(&r).unwrap();
    let thetas = actuator_thetas(&spec, &model);
    let tip = forward_kinematics(&spec, &thetas).unwrap().last().unwrap().translation();
    // tip of the target arc in the same frame
    let (l, k) = (seg.length, seg.kappa);
    let expect = [(1.0 - (k * l).cos()) / k, 0.0, (k * l).sin() / k];
    let err = ((tip.x - expect[0]).powi(2) + (tip.y - expect[1]).powi(2) + (tip.z - expect[2]).powi(2)).sqrt();
    assert!(err < 0.03 * l, "tip error {err}");
}

#[test]
fn matches_a_segmented_letter_s() {
    use bellow_core::segmentation::segment;
    use bellow_core::shapes::letter_s;
    let pts = letter_s(25.0, 200);
    let seg = segment(&pts, 0.1).unwrap();
    let mut p = MatchProblem::new(seg.segments.clone(), 10.0);
    p.budget = Budget::desk();
    p.rout_max = Some(30.0);
    p.seed = 2;
    let r = optimize(&p, &OracleModel::default()).unwrap();
    assert!(r.feasible);
    assert!(r.mean_cost < 0.02);
    let spec = assemble(&r).unwrap();
    let n0 = r.segments[0].n;
    assert!((spec.rotations()[n0 - 1].abs() - std::f64::consts::PI).abs() < 0.02);
}

#[test]
fn identical_segments_get_identical_designs() {
    let (seg, _) = planted();
    let mut twin = seg;
    twin.dphi = std::f64::consts::PI;
    let mut p = MatchProblem::new(vec![seg, twin], 10.0);
    p.budget = Budget { upper_iters: 10, lower_iters: 8 };
    let r = optimize(&p, &OracleModel::default()).unwrap();
    let (a, b) = (&r.segments[0], &r.segments[1]);
    assert_eq!((a.r_avg, a.l, a.n, a.cost), (b.r_avg, b.l, b.n, b.cost));
}

#[test]
fn best_cost_history_is_non_increasing() {
    let (seg, _) = planted();
    let mut p = MatchProblem::new(vec![ArcSegment::new(70.0, seg.kappa * 1.7, 0.0).unwrap()], 10.0);
    p.budget = Budget { upper_iters: 25, lower_iters: 8 };
    p.target_cost = 1e-9;
    let r = optimize(&p, &OracleModel::default()).unwrap();
    assert!(r.history.len() >= 2);
    assert!(r.history.windows(2).all(|w| w[1] <= w[0]));
    assert_eq!(r.status, MatchStatus::BudgetExhausted);
}

#[test]
fn lower_level_recovers_planted_module() {
    use bellow_core::optimizer::{optimize_lower, SharedParams, TARGET_COST};
    let (seg, _) = planted();
    let p = MatchProblem::new(vec![seg], 10.0);
    let lim = p.limits();
    let x = SharedParams { r_in: 4.0, t: 1.0, pressure: 8.0 };
    let hits = (0..20u64)
        .filter(|&s| {
            optimize_lower(&x, &seg, &OracleModel::default(), &lim, 15, TARGET_COST, s)
                .is_some_and(|r| r.cost <= 0.02)
        })
        .count();
    assert!(hits >= 16, "{hits}/20");
}
