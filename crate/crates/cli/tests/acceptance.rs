//! Acceptance suite: one PASS/FAIL line per criterion, written straight to
//! stdout so it shows up without `--nocapture`.

use std::f64::consts::PI;
use std::io::Write;
use std::process::Command;
use std::time::{Duration, Instant};

use axum::body::Body;
use axum::http::{Request, StatusCode};
use http_body_util::BodyExt;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use bellow_core::actuator::{validate_module, Material};
use bellow_core::bspline::{auto_fit, basis, clamped_uniform_knots, DEFAULT_DEGREE};
use bellow_core::cad::{audit, mesh_module, module_volume, read_stl, stl_bytes, MeshOptions, FAN_ANGLE};
use bellow_core::kinematics::{cc_transform, polyline_length, ModuleState, Pose, SMALL_ANGLE};
use bellow_core::metrics::discrete_frechet;
use bellow_core::optimizer::{feasible, optimize, Budget, MatchProblem, MatchResult, SegmentParams};
use bellow_core::oracle::{dataset_to_bytes, generate_dataset, DatasetGrid, OracleSample};
use bellow_core::pipeline::{self, to_json, Model, SegmentRequest, SimulateRequest};
use bellow_core::segmentation::{max_deviation, reconstruct, segment, ArcSegment, SegmentKind};
use bellow_core::shapes;
use bellow_core::surrogate::{train, DeflectionModel, SurrogateModel, TrainConfig};
use bellow_core::ModuleDesign;

mod tol {
    pub const KINEMATICS_ELEMENT: f64 = 1e-9;
    pub const KINEMATICS_BRANCH: f64 = 1e-8;
    pub const KINEMATICS_STATES: usize = 1000;
    pub const PARTITION_OF_UNITY: f64 = 1e-12;
    pub const ARC_FIT_RESIDUAL: f64 = 0.1;
    pub const PROJECTION_IDEMPOTENCE: f64 = 1e-8;
    pub const SEGMENT_RELATIVE: f64 = 0.01;
    pub const TWIST_DEG: f64 = 1.0;
    pub const SEGMENT_TOLERANCE: f64 = 0.1;
    pub const DATASET_ROWS: usize = 5040;
    pub const GRADIENT_RELATIVE: f64 = 1e-5;
    pub const TEST_MSE: f64 = 1e-5;
    pub const MAX_EPOCHS: usize = 1000;
    pub const TRAIN_SEED: u64 = 42;
    pub const MATCH_COST: f64 = 0.02;
    pub const MATCH_SEEDS: u64 = 10;
    pub const MATCH_MIN_HITS: usize = 8;
    pub const FRECHET_FRACTION: f64 = 0.05;
    pub const VOLUME_RELATIVE: f64 = 0.02;
}

struct Report {
    failures: Vec<String>,
}

impl Report {
    fn line(&mut self, name: &str, pass: bool, detail: String, elapsed: Duration, limit: Duration) {
        let in_time = elapsed <= limit;
        let ok = pass && in_time;
        let mut out = std::io::stdout().lock();
        writeln!(out, "{} {name}: {detail} [{:.2?} of {:.0?}]", if ok { "PASS" } else { "FAIL" }, elapsed, limit).unwrap();
        out.flush().unwrap();
        if !ok {
            self.failures.push(name.to_owned());
        }
    }
}

fn brute_force(s: &ModuleState) -> [[f64; 4]; 4] {
    let (th, l, ph) = (s.theta, s.l, s.dphi);
    let rz = [[ph.cos(), -ph.sin(), 0.0, 0.0], [ph.sin(), ph.cos(), 0.0, 0.0], [0.0, 0.0, 1.0, 0.0], [0.0, 0.0, 0.0, 1.0]];
    let (px, pz) = if th == 0.0 { (0.0, l) } else { (l / th * (1.0 - th.cos()), l / th * th.sin()) };
    let bend = [[th.cos(), 0.0, th.sin(), px], [0.0, 1.0, 0.0, 0.0], [-th.sin(), 0.0, th.cos(), pz], [0.0, 0.0, 0.0, 1.0]];
    // twist about z first, then bend about the rotated y axis
    let mut m = [[0.0; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            for k in 0..4 {
                m[i][j] += rz[i][k] * bend[k][j];
            }
        }
    }
    m
}

fn max_diff(a: &Pose, b: &[[f64; 4]; 4]) -> f64 {
    (0..4).flat_map(|i| (0..4).map(move |j| (i, j))).map(|(i, j)| (a.m[i][j] - b[i][j]).abs()).fold(0.0, f64::max)
}

fn kinematics(r: &mut Report) {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = 0.0f64;
    for k in 0..tol::KINEMATICS_STATES {
        let theta = if k % 100 == 0 { 0.0 } else { rng.gen_range(1e-4..PI) };
        let s = ModuleState { theta, l: rng.gen_range(1.0..50.0), dphi: rng.gen_range(-PI..PI) };
        worst = worst.max(max_diff(&cc_transform(&s).unwrap(), &brute_force(&s)));
    }
    let mut jump = 0.0f64;
    for (l, dphi) in [(1.0, 0.0), (10.0, 0.7), (50.0, -2.5)] {
        let below = cc_transform(&ModuleState { theta: SMALL_ANGLE * (1.0 - 1e-6), l, dphi }).unwrap();
        let above = cc_transform(&ModuleState { theta: SMALL_ANGLE * (1.0 + 1e-6), l, dphi }).unwrap();
        jump = jump.max(below.max_abs_diff(&above));
    }
    let pass = worst < tol::KINEMATICS_ELEMENT && jump < tol::KINEMATICS_BRANCH;
    r.line("kinematics", pass, format!("max element error {worst:.2e}, branch jump {jump:.2e}"), t0.elapsed(), Duration::from_secs(1));
}

fn bspline(r: &mut Report) {
    let t0 = Instant::now();
    let mut pou = 0.0f64;
    for n in [3, 5, 12, 40] {
        let knots = clamped_uniform_knots::<f64>(n, DEFAULT_DEGREE);
        for k in 0..=1000 {
            let t = k as f64 / 1000.0;
            let sum: f64 = (0..n).map(|i| basis(i, DEFAULT_DEGREE, t, &knots).unwrap()).sum();
            pou = pou.max((sum - 1.0).abs());
        }
    }
    let pts = shapes::circle_arc(30.0, 2.5, 200);
    let fit = auto_fit(&pts, tol::ARC_FIT_RESIDUAL, DEFAULT_DEGREE).unwrap();
    let residual = fit.curve.max_residual(&pts);
    let mut idem = 0.0f64;
    for p in fit.curve.project_all(&shapes::letter_s(25.0, 50)) {
        let again = fit.curve.project(&p.position);
        idem = idem.max(again.position.distance(&p.position));
    }
    let pass = pou < tol::PARTITION_OF_UNITY && residual < tol::ARC_FIT_RESIDUAL && idem < tol::PROJECTION_IDEMPOTENCE;
    r.line(
        "bspline",
        pass,
        format!("partition of unity {pou:.1e}, arc fit residual {residual:.4} mm, projection drift {idem:.1e}"),
        t0.elapsed(),
        Duration::from_secs(5),
    );
}

fn segmentation(r: &mut Report) {
    let t0 = Instant::now();
    let tol_mm = tol::SEGMENT_TOLERANCE;
    let s = segment(&shapes::letter_s(25.0, 200), tol_mm).unwrap();
    let arcs: Vec<_> = s.segments.iter().filter(|x| x.kind == SegmentKind::Arc).collect();
    let (dl, dk) = match arcs.as_slice() {
        [a, b] if s.segments.len() == 2 => ((a.length - b.length).abs() / a.length, (a.kappa - b.kappa).abs() / a.kappa),
        _ => (f64::INFINITY, f64::INFINITY),
    };
    let trunk = segment(&shapes::trunk(30.0, 200), tol_mm).unwrap();
    let twist = trunk.segments.get(1).map_or(f64::NAN, |x| x.dphi.to_degrees());
    let mut worst_excess = f64::NEG_INFINITY;
    for pts in [shapes::letter_s(25.0, 200), shapes::trunk(30.0, 200), shapes::circle_arc(20.0, 2.0, 150), shapes::line(60.0, 80)] {
        let seg = segment(&pts, tol_mm).unwrap();
        let dev = max_deviation(&pts, &reconstruct(&seg, 128).unwrap());
        worst_excess = worst_excess.max(dev - (tol_mm + seg.fit.max_residual));
    }
    let pass = dl < tol::SEGMENT_RELATIVE && dk < tol::SEGMENT_RELATIVE && (twist - 90.0).abs() <= tol::TWIST_DEG && worst_excess <= 0.0;
    r.line(
        "segmentation",
        pass,
        format!(
            "S gives {} segments, dL {dl:.2e}, dkappa {dk:.2e}; trunk twist {twist:.3} deg; worst deviation margin {:.3} mm",
            s.segments.len(),
            -worst_excess
        ),
        t0.elapsed(),
        Duration::from_secs(10),
    );
}

fn dataset(r: &mut Report) -> Vec<OracleSample> {
    let t0 = Instant::now();
    let grid = DatasetGrid::default();
    let rows = generate_dataset(&grid, &Material::default()).unwrap();
    let again = generate_dataset(&grid, &Material::default()).unwrap();
    let deterministic = dataset_to_bytes(&rows) == dataset_to_bytes(&again);
    let distinct = |f: fn(&OracleSample) -> f64| {
        let mut v: Vec<f64> = rows.iter().map(f).collect();
        v.sort_by(f64::total_cmp);
        v.dedup();
        v
    };
    let r_in = distinct(|s| s.r_in);
    let p = distinct(|s| s.pressure);
    let invalid = rows.iter().filter(|s| !validate_module(&ModuleDesign::new(s.r_in, s.t, s.r_avg, s.l)).is_ok()).count();
    let pass = deterministic && r_in == [2.0, 4.0, 6.0, 8.0, 10.0] && p.len() == 21 && invalid == 0 && rows.len() == tol::DATASET_ROWS;
    r.line(
        "dataset",
        pass,
        format!("{} rows, r_in {r_in:?}, {} pressures, {invalid} invalid, deterministic {deterministic}", rows.len(), p.len()),
        t0.elapsed(),
        Duration::from_secs(10),
    );
    rows
}

fn surrogate(r: &mut Report, rows: &[OracleSample]) -> SurrogateModel {
    let t0 = Instant::now();
    // gradient check on a slice of the real grid
    let sample: Vec<OracleSample> = rows.iter().step_by(97).cloned().collect();
    let lo = [2.0, 0.5, 2.5, 2.0, 0.0];
    let hi = [10.0, 10.0 / 3.0, 20.0, 40.0, 10.0];
    let mut m = SurrogateModel::initialise(lo, hi, &mut ChaCha8Rng::seed_from_u64(7));
    let lambda = 1e-3;
    let g = m.objective_gradient(&sample, lambda);
    let base = m.params();
    let mut worst = 0.0f64;
    for k in (0..base.len()).step_by(7) {
        let h = 1e-6;
        let mut p = base.clone();
        p[k] += h;
        m.set_params(&p);
        let fp = m.objective(&sample, lambda);
        p[k] -= 2.0 * h;
        m.set_params(&p);
        let fm = m.objective(&sample, lambda);
        let fd = (fp - fm) / (2.0 * h);
        let scale = g[k].abs().max(fd.abs()).max(1e-6);
        worst = worst.max((fd - g[k]).abs() / scale);
    }
    let cfg = TrainConfig { seed: tol::TRAIN_SEED, epochs: tol::MAX_EPOCHS, ..Default::default() };
    let (model, report) = train(rows, &cfg).unwrap();
    let pass = worst < tol::GRADIENT_RELATIVE && report.test_mse < tol::TEST_MSE && report.epochs <= tol::MAX_EPOCHS;
    r.line(
        "surrogate",
        pass,
        format!("gradient rel error {worst:.1e}; test MSE {:.2e} rad^2 after {} epochs (train {:.2e})", report.test_mse, report.epochs, report.train_mse),
        t0.elapsed(),
        Duration::from_secs(300),
    );
    model
}

fn revalidates(p: &MatchProblem, res: &MatchResult) -> bool {
    let lim = p.limits();
    let arcs_ok = p.arcs().all(|(i, seg)| {
        let d = &res.segments[i];
        feasible(&res.x, &SegmentParams { r_avg: d.r_avg, l: d.l }, seg, &lim).is_empty()
    });
    arcs_ok && pipeline::assemble(res).is_ok()
}

fn optimizer(r: &mut Report, model: &SurrogateModel) {
    let t0 = Instant::now();
    let planted = ModuleDesign::new(4.0, 1.0, 7.0, 8.0);
    let theta = model.theta(&planted, 8.0);
    let seg = ArcSegment::new(48.0, theta / 8.0, 0.0).unwrap();
    let problem = |seed| {
        let mut p = MatchProblem::new(vec![seg], 10.0);
        p.budget = Budget::desk();
        p.seed = seed;
        p
    };
    let mut hits = 0;
    let mut bad = 0;
    let mut costs = Vec::new();
    for seed in 0..tol::MATCH_SEEDS {
        let p = problem(seed);
        let res = optimize(&p, model).unwrap();
        costs.push(res.mean_cost);
        if res.feasible {
            if !revalidates(&p, &res) {
                bad += 1;
            }
            if res.mean_cost < tol::MATCH_COST {
                hits += 1;
            }
        }
    }
    let a = to_json(&optimize(&problem(3), model).unwrap());
    let b = to_json(&optimize(&problem(3), model).unwrap());
    let pass = hits >= tol::MATCH_MIN_HITS && bad == 0 && a == b;
    let worst = costs.iter().cloned().fold(0.0, f64::max);
    r.line(
        "optimizer",
        pass,
        format!("{hits}/{} seeds below {}, worst cost {worst:.4}, {bad} re-validation failures, reproducible {}", tol::MATCH_SEEDS, tol::MATCH_COST, a == b),
        t0.elapsed(),
        Duration::from_secs(600),
    );
}

fn end_to_end(r: &mut Report, model: &Model) {
    let t0 = Instant::now();
    let points = shapes::letter_s(25.0, 200);
    let seg = pipeline::run_segment(&SegmentRequest { points: points.clone(), tolerance: tol::SEGMENT_TOLERANCE }).unwrap();
    let mut p = MatchProblem::new(seg.segments.clone(), 10.0);
    p.budget = Budget::desk();
    p.rout_max = Some(30.0);
    p.seed = 1;
    let res = pipeline::run_match(&p, model, &mut |_| {}).unwrap();
    let (d, len) = match pipeline::assemble(&res) {
        Ok(spec) => {
            let sim = pipeline::simulate(&SimulateRequest { spec: spec.into(), pressure_kpa: None, samples_per_module: 16 }, model).unwrap();
            let placed = pipeline::place_centerline(&sim, &seg.base);
            (discrete_frechet(&points, &placed).unwrap(), polyline_length(&points))
        }
        Err(_) => (f64::INFINITY, polyline_length(&points)),
    };
    r.line(
        "end_to_end",
        d < tol::FRECHET_FRACTION * len,
        format!("Frechet {d:.3} mm vs length {len:.1} mm ({:.2}%), mean cost {:.4}", 100.0 * d / len, res.mean_cost),
        t0.elapsed(),
        Duration::from_secs(900),
    );
}

fn cad(r: &mut Report) {
    let t0 = Instant::now();
    let d = ModuleDesign::standard();
    let mesh = mesh_module(&d, &MeshOptions::default()).unwrap();
    let a = audit(&mesh);
    let exact = module_volume(&d, FAN_ANGLE).unwrap();
    let rel = (a.volume - exact).abs() / exact;
    let tris = read_stl(&stl_bytes(&mesh)).unwrap();
    let exact_f32 = tris.len() == mesh.triangles.len()
        && tris.iter().zip(&mesh.triangles).all(|(t, idx)| {
            (0..3).all(|k| (0..3).all(|c| t.vertices[k][c] == mesh.vertices[idx[k] as usize][c] as f32))
        });
    let pass = a.is_watertight() && rel < tol::VOLUME_RELATIVE && exact_f32;
    r.line(
        "cad",
        pass,
        format!("watertight {}, volume {:.2} vs {exact:.2} mm^3 ({:.3}%), STL f32 exact {exact_f32}", a.is_watertight(), a.volume, 100.0 * rel),
        t0.elapsed(),
        Duration::from_secs(30),
    );
}

fn parity(r: &mut Report, model: &SurrogateModel) {
    let t0 = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let model_path = dir.path().join("m.surrogate.json");
    model.save(&model_path).unwrap();
    let seg = segment(&shapes::trunk(30.0, 200), tol::SEGMENT_TOLERANCE).unwrap();
    let seg_path = dir.path().join("seg.json");
    std::fs::write(&seg_path, to_json(&seg)).unwrap();

    let out = Command::new(env!("CARGO_BIN_EXE_bellow"))
        .args(["match", "--segments", seg_path.to_str().unwrap(), "--model", model_path.to_str().unwrap()])
        .args(["--pmax", "10", "--rout-max", "30", "--seed", "5", "--budget", "desk"])
        .output()
        .unwrap();
    let cli = out.stdout;

    let rt = tokio::runtime::Runtime::new().unwrap();
    let http = rt.block_on(async {
        let cfg = bellow_service::ServiceConfig { store_dir: dir.path().join("store"), ..Default::default() };
        let app = bellow_service::router(bellow_service::AppState::new(&cfg).unwrap());
        let call = |method: &str, uri: &str, body: Vec<u8>| {
            let req = Request::builder().method(method).uri(uri).body(Body::from(body)).unwrap();
            let app = app.clone();
            async move {
                let resp = tower::ServiceExt::oneshot(app, req).await.unwrap();
                let status = resp.status();
                (status, resp.into_body().collect().await.unwrap().to_bytes().to_vec())
            }
        };
        let (s, up) = call("POST", "/api/models?name=parity", model.to_json().into_bytes()).await;
        assert_eq!(s, StatusCode::CREATED, "{}", String::from_utf8_lossy(&up));
        let mut p = MatchProblem::new(seg.segments.clone(), 10.0);
        p.rout_max = Some(30.0);
        p.seed = 5;
        p.budget = Budget::desk();
        let mut body = serde_json::to_value(&p).unwrap();
        body["model"] = "parity".into();
        let (_, rec) = call("POST", "/api/optimize", body.to_string().into_bytes()).await;
        let id = serde_json::from_slice::<serde_json::Value>(&rec).unwrap()["id"].as_str().unwrap().to_owned();
        for _ in 0..6000 {
            let (s, bytes) = call("GET", &format!("/api/jobs/{id}/result"), Vec::new()).await;
            if s == StatusCode::OK {
                return bytes;
            }
            tokio::time::sleep(Duration::from_millis(20)).await;
        }
        Vec::new()
    });
    let pass = out.status.code() == Some(0) && !cli.is_empty() && cli == http;
    r.line(
        "cli_service_parity",
        pass,
        format!("CLI exit {:?}, {} vs {} bytes, identical {}", out.status.code(), cli.len(), http.len(), cli == http),
        t0.elapsed(),
        Duration::from_secs(600),
    );
}

#[test]
fn acceptance() {
    let mut r = Report { failures: Vec::new() };
    writeln!(std::io::stdout().lock(), "\nacceptance criteria:").unwrap();
    kinematics(&mut r);
    bspline(&mut r);
    segmentation(&mut r);
    let rows = dataset(&mut r);
    let model = surrogate(&mut r, &rows);
    optimizer(&mut r, &model);
    end_to_end(&mut r, &Model::Surrogate(Box::new(model.clone())));
    cad(&mut r);
    parity(&mut r, &model);
    assert!(r.failures.is_empty(), "failed: {:?}", r.failures);
}
