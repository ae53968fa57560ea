//! Scenario hooks driven against the surrogate solvers in-process.

use std::sync::Arc;

use flowbridge_core::adapter::{Engine, EnvInstance, EnvOptions, WindowRecord};
use flowbridge_core::coupling::{CouplingSchema, FieldKey};
use flowbridge_core::scenarios::{
    rot_velocity, scaffold, Case, JetCylinderHooks, JetCylinderScenario, RotatingCylinderScenario, ScenarioConfig,
    ScenarioKind, ScenarioSolvers,
};
use flowbridge_core::surrogate::{names, ActuationGeometry, ActuationMode};
use proptest::prelude::*;

fn mesh<'a>(schema: &'a CouplingSchema, name: &str) -> &'a flowbridge_core::coupling::CouplingMesh {
    schema.meshes.iter().find(|m| m.name == name).unwrap()
}

fn env_for(cfg: &ScenarioConfig) -> (tempfile::TempDir, EnvInstance) {
    let dir = tempfile::tempdir().unwrap();
    let case = scaffold(dir.path(), cfg).unwrap();
    let (options, cfg): (EnvOptions, ScenarioConfig) = Case::load(&case.env_config).unwrap();
    let engine = Engine::InProcess(Arc::new(ScenarioSolvers(cfg.clone())));
    let env = EnvInstance::new(0, options, cfg.hooks(), engine).unwrap();
    (dir, env)
}

fn episode(cfg: &ScenarioConfig, action: impl Fn(&[f64]) -> f64) -> (Vec<f64>, Vec<WindowRecord>) {
    let (_dir, mut env) = env_for(cfg);
    env.set_recording(true);
    let (mut obs, _) = env.reset(Some(0)).unwrap();
    let mut rewards = Vec::new();
    loop {
        let r = env.step(&[action(&obs)]).unwrap();
        rewards.push(r.reward);
        obs = r.observation;
        if r.terminated {
            break;
        }
    }
    env.close();
    (rewards, env.take_trace())
}

fn forces(rec: &WindowRecord) -> (f64, f64) {
    let f = &rec.reads[&FieldKey::new(names::FORCES, names::FORCES_MESH)];
    (f[0], f[1])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn jets_are_zero_net_and_recover_the_action(
        a in -2.5e-4f64..2.5e-4,
        width in 4.0f64..30.0,
        n in 2usize..40,
    ) {
        let s = JetCylinderScenario { jet_width_deg: width, jet_vertices: n, ..Default::default() };
        let schema = ScenarioConfig::JetCylinder(s.clone()).coupling_schema();
        let hooks = JetCylinderHooks::new(s.clone());
        let (v1, v2) = hooks.jet_buffers(a).unwrap();
        let g1 = ActuationGeometry::new(ActuationMode::Jet, mesh(&schema, names::JET1_MESH), s.geometry.center).unwrap();
        let g2 = ActuationGeometry::new(ActuationMode::Jet, mesh(&schema, names::JET2_MESH), s.geometry.center).unwrap();
        let (q1, q2) = (g1.measure(&v1).unwrap(), g2.measure(&v2).unwrap());
        prop_assert!((q1 + q2).abs() <= 1e-12 * s.q_max);
        let u = g1.net_actuation(&v1, s.wake.q_max_ref).unwrap();
        prop_assert!((u - a / s.q_max).abs() <= 1e-12, "u {} vs {}", u, a / s.q_max);
    }

    #[test]
    fn rotation_recovers_the_normalized_rate(omega in -5.0f64..5.0) {
        let s = RotatingCylinderScenario::default();
        let schema = ScenarioConfig::RotatingCylinder(s.clone()).coupling_schema();
        let m = mesh(&schema, names::CYLINDER_MESH);
        let verts: Vec<[f64; 2]> = m.vertices.iter().map(|v| [v[0], v[1]]).collect();
        let v = rot_velocity(omega, s.omega_max, &verts, s.geometry.center).unwrap();
        let g = ActuationGeometry::new(ActuationMode::Rotation, m, s.geometry.center).unwrap();
        prop_assert!((g.net_actuation(&v, s.wake.q_max_ref).unwrap() - omega / s.omega_max).abs() <= 1e-12);
    }
}

#[test]
fn unactuated_reward_reduces_to_the_lift_penalty() {
    let cfg = ScenarioConfig::default_for(ScenarioKind::JetCylinder);
    let ScenarioConfig::JetCylinder(s) = &cfg else { unreachable!() };
    let (rewards, trace) = episode(&cfg, |_| 0.0);
    assert_eq!(rewards.len(), 20);
    assert_eq!(trace.len(), 1000);
    let k = s.substeps_per_action;
    let cd_mean = trace.iter().map(|r| forces(r).0).sum::<f64>() / trace.len() as f64;
    assert!((cd_mean - s.cd_base).abs() < 1e-9, "cd {cd_mean} vs base {}", s.cd_base);
    let lift: f64 = trace.chunks(k).map(|c| (c.iter().map(|r| forces(r).1).sum::<f64>() / k as f64).abs()).sum::<f64>()
        / rewards.len() as f64;
    let mean_reward = rewards.iter().sum::<f64>() / rewards.len() as f64;
    assert!((mean_reward + s.lift_penalty * lift).abs() < 1e-9, "{mean_reward} vs {}", -s.lift_penalty * lift);
}

#[test]
fn in_process_episodes_are_deterministic() {
    for kind in ScenarioKind::ALL {
        let cfg = ScenarioConfig::default_for(kind).with_end_time(match kind {
            ScenarioKind::PerpendicularFlap => 1.0,
            _ => 0.4,
        });
        let cfg = cfg.unwrap();
        let policy = |o: &[f64]| 0.3 * o[0].sin();
        let (r1, t1) = episode(&cfg, policy);
        let (r2, t2) = episode(&cfg, policy);
        assert_eq!(r1, r2, "{kind}");
        assert_eq!(t1.len(), t2.len());
        for (a, b) in t1.iter().zip(&t2) {
            assert_eq!((a.t, &a.action, &a.reads), (b.t, &b.action, &b.reads));
        }
    }
}

#[test]
fn frozen_flap_stays_near_rest() {
    let cfg = ScenarioConfig::default_for(ScenarioKind::PerpendicularFlap);
    let ScenarioConfig::PerpendicularFlap(s) = &cfg else { unreachable!() };
    let y0 = s.y0;
    let (rewards, trace) = episode(&cfg, |_| y0);
    assert_eq!(rewards.len(), 1000);
    let key = FieldKey::new(names::TIP_DISPLACEMENT, names::TIP_MESH);
    let x: Vec<f64> = trace.iter().map(|r| r.reads[&key][0]).collect();
    let tail = &x[x.len() / 2..];
    let spread = tail.iter().cloned().fold(f64::MIN, f64::max) - tail.iter().cloned().fold(f64::MAX, f64::min);
    assert!(spread < 1e-4, "spread {spread}");
}
