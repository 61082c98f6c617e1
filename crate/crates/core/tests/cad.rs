use std::f64::consts::{FRAC_PI_2, PI, TAU};

use bellow_core::actuator::{ActuatorSpec, Material};
use bellow_core::cad::{
    audit, bounding_box, contains, mesh_actuator, mesh_module, module_volume, read_stl, stl_bytes, MeshOptions, FAN_ANGLE,
};
use bellow_core::ModuleDesign;

fn default_stack(n: usize, twist: f64) -> ActuatorSpec {
    ActuatorSpec::uniform(ModuleDesign::standard(), n, twist, 0.0, Material::default()).unwrap()
}

#[test]
fn default_module_is_a_watertight_torus() {
    let mesh = mesh_module(&ModuleDesign::standard(), &MeshOptions::default()).unwrap();
    let a = audit(&mesh);
    assert!(a.is_watertight(), "{a:?}");
    assert_eq!(a.euler, 0);
    assert_eq!(a.genus(), 1);
}

#[test]
fn module_volume_matches_the_revolution_oracle() {
    let d = ModuleDesign::standard();
    let mesh = mesh_module(&d, &MeshOptions::default()).unwrap();
    let exact = module_volume(&d, FAN_ANGLE).unwrap();
    let rel = (audit(&mesh).volume - exact).abs() / exact;
    assert!(rel < 0.02, "rel {rel}");
    // finer tessellation converges
    let fine = mesh_module(&d, &MeshOptions { angular_step_deg: 0.5 }).unwrap();
    assert!((audit(&fine).volume - exact).abs() / exact < rel.max(1e-4));
}

#[test]
fn volume_grows_with_wall_thickness() {
    let mut last = 0.0;
    for t in [1.3, 1.5, 1.8, 2.1, 2.4] {
        let v = audit(&mesh_module(&ModuleDesign::new(5.0, t, 8.0, 10.0), &MeshOptions::default()).unwrap()).volume;
        assert!(v > last);
        last = v;
    }
}

#[test]
fn meshing_is_deterministic() {
    let d = ModuleDesign::standard();
    let a = stl_bytes(&mesh_module(&d, &MeshOptions::default()).unwrap());
    let b = stl_bytes(&mesh_module(&d, &MeshOptions::default()).unwrap());
    assert_eq!(a, b);
}

#[test]
fn eight_module_stack_is_80_mm_and_closed() {
    let mesh = mesh_actuator(&default_stack(8, 0.0), &MeshOptions::default()).unwrap();
    let a = audit(&mesh);
    assert!(a.is_watertight(), "{a:?}");
    // capped top, blind inlet port: a sphere topologically
    assert_eq!(a.euler, 2);
    let (lo, hi) = bounding_box(&mesh);
    assert!(lo[2].abs() < 1e-12 && (hi[2] - 80.0).abs() < 1e-9);
    assert!((hi[0] - 11.0).abs() < 1e-9);
}

#[test]
fn single_module_actuator_adds_caps_and_port() {
    let d = ModuleDesign::standard();
    let module = audit(&mesh_module(&d, &MeshOptions::default()).unwrap());
    let act = audit(&mesh_actuator(&default_stack(1, 0.0), &MeshOptions::default()).unwrap());
    assert!(act.is_watertight());
    assert_eq!(act.euler, 2);
    // caps add material: the two end plugs minus the port
    assert!(act.volume > module.volume);
    assert!(act.volume < module.volume + 2.0 * PI * 5.0 * 5.0 * 1.5);
}

#[test]
fn fans_follow_the_cumulative_twist() {
    let spec = default_stack(3, FRAC_PI_2);
    let mesh = mesh_actuator(&spec, &MeshOptions::default()).unwrap();
    // probe the cavity of each module at mid-height, halfway out
    let rho = (5.0 + (11.0 - 1.5)) / 2.0;
    for (k, centre) in spec.cumulative_twists().iter().enumerate() {
        let z = 10.0 * k as f64 + 5.0;
        for step in 0..16 {
            let phi = TAU * step as f64 / 16.0 + 0.05;
            let d = (phi - centre + PI).rem_euclid(TAU) - PI;
            let inside = contains(&mesh, [rho * phi.cos(), rho * phi.sin(), z]);
            assert_eq!(inside, d.abs() < FAN_ANGLE / 2.0, "module {k} phi {phi}");
        }
    }
    // wall material is found everywhere around
    assert!(contains(&mesh, [4.25, 0.1, 10.0]));
}

#[test]
fn rigid_modules_are_filled_all_round() {
    let mut spec = default_stack(2, 0.0);
    spec.set_rigid(vec![1]).unwrap();
    let mesh = mesh_actuator(&spec, &MeshOptions::default()).unwrap();
    assert!(audit(&mesh).is_watertight());
    for step in 0..8 {
        let phi = TAU * step as f64 / 8.0 + 0.1;
        assert!(contains(&mesh, [7.0 * phi.cos(), 7.0 * phi.sin(), 15.0]));
    }
}

#[test]
fn stl_round_trip_is_exact_at_f32() {
    let mesh = mesh_actuator(&default_stack(2, 1.0), &MeshOptions::default()).unwrap();
    let bytes = stl_bytes(&mesh);
    assert_eq!(bytes.len(), 84 + 50 * mesh.triangles.len());
    let back = read_stl(&bytes).unwrap();
    assert_eq!(back.len(), mesh.triangles.len());
    for (i, t) in back.iter().enumerate() {
        for (v, w) in t.vertices.iter().zip(mesh.triangle(i)) {
            assert_eq!(*v, w.map(|c| c as f32));
        }
    }
}

#[test]
fn boundary_designs_mesh_cleanly() {
    for d in [
        ModuleDesign::new(5.0, 1.5, 7.5, 10.0),
        ModuleDesign::new(2.0, 1.0, 4.0, 4.0 + 1e-3),
        ModuleDesign::new(10.0, 2.5, 20.0, 30.0),
    ] {
        let a = audit(&mesh_module(&d, &MeshOptions::default()).unwrap());
        assert!(a.is_watertight(), "{d:?} {a:?}");
        let exact = module_volume(&d, FAN_ANGLE).unwrap();
        assert!((a.volume - exact).abs() / exact < 0.02);
    }
}
