use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::Duration;

use proptest::prelude::*;
use serde_json::json;

use super::*;
use crate::transport::{fake_connection_pair, Connection, Message};

fn loopback_schema(vertices: usize, components: usize, window_size: f64, end_time: f64) -> Arc<CouplingSchema> {
    let verts: Vec<Vec<f64>> = (0..vertices).map(|i| vec![i as f64 * 0.01, 0.5]).collect();
    let doc = json!({
        "participants": ["controller", "echo"],
        "links": [["controller", "echo"]],
        "meshes": [{"name": "m", "dim": 2, "owner": "echo", "vertices": verts,
                    "face_weights": vec![1.0; vertices]}],
        "fields": [
            {"name": "Out", "mesh": "m", "components": components, "writer": "controller"},
            {"name": "Back", "mesh": "m", "components": components, "writer": "echo"}
        ],
        "window_size": window_size,
        "end_time": end_time
    });
    Arc::new(load_schema(&doc.to_string()).unwrap())
}

/// Follower that returns every `Out` buffer as `Back` in the same window.
fn spawn_echo(schema: Arc<CouplingSchema>, conn: Connection) -> JoinHandle<Result<u64, CouplingError>> {
    thread::spawn(move || {
        let ws = schema.window_size;
        let mut s = CouplingSession::new(schema, "echo")?;
        s.set_timeout(Duration::from_secs(10));
        s.attach("controller", conn)?;
        s.initialize()?;
        let mut windows = 0;
        while s.is_coupling_ongoing()? {
            let v = s.read_field("Out", "m")?.to_vec();
            s.write_field("Back", "m", &v)?;
            s.advance(ws)?;
            windows += 1;
        }
        s.finalize();
        Ok(windows)
    })
}

fn controller_with_echo(schema: &Arc<CouplingSchema>) -> (CouplingSession, JoinHandle<Result<u64, CouplingError>>) {
    let (a, b) = fake_connection_pair();
    let echo = spawn_echo(schema.clone(), b);
    let mut s = CouplingSession::new(schema.clone(), "controller").unwrap();
    s.set_timeout(Duration::from_secs(10));
    s.attach("echo", a).unwrap();
    (s, echo)
}

#[test]
fn initialize_returns_window_size_and_zero_reads() {
    let schema = loopback_schema(3, 1, 0.1, 0.3);
    let (mut s, echo) = controller_with_echo(&schema);
    assert_eq!(s.initialize().unwrap(), 0.1);
    assert_eq!(s.state(), SessionState::Initialized);
    assert_eq!(s.time(), 0.0);
    assert_eq!(s.read_field("Back", "m").unwrap(), &[0.0; 3]);
    assert!(matches!(s.initialize(), Err(CouplingError::State { .. })));
    s.finalize();
    assert!(matches!(echo.join().unwrap(), Err(CouplingError::PeerFinalized { .. })));
}

#[test]
fn advance_arithmetic_and_termination() {
    let schema = loopback_schema(1, 1, 0.1, 0.3);
    let (mut s, echo) = controller_with_echo(&schema);
    s.initialize().unwrap();
    assert!(s.is_coupling_ongoing().unwrap());
    assert!(matches!(s.advance(0.05), Err(CouplingError::DtMismatch { .. })));
    assert_eq!(s.advance(0.1).unwrap(), 0.1);
    assert!((s.time() - 0.1).abs() < TIME_ATOL);
    assert_eq!(s.state(), SessionState::Running);
    assert_eq!(s.advance(0.1).unwrap(), 0.1);
    // t = end_time - window_size is still ongoing
    assert!(s.is_coupling_ongoing().unwrap());
    assert_eq!(s.advance(0.1).unwrap(), 0.0);
    assert!((s.time() - 0.3).abs() < TIME_ATOL);
    assert!(!s.is_coupling_ongoing().unwrap());
    assert!(matches!(s.advance(0.1), Err(CouplingError::CouplingComplete)));
    s.finalize();
    s.finalize();
    assert_eq!(s.state(), SessionState::Finalized);
    assert_eq!(echo.join().unwrap().unwrap(), 3);
}

#[test]
fn early_finalize_releases_peer() {
    let schema = loopback_schema(1, 1, 0.1, 1.0);
    let (mut s, echo) = controller_with_echo(&schema);
    s.initialize().unwrap();
    s.advance(0.1).unwrap();
    s.finalize();
    assert!(matches!(echo.join().unwrap(), Err(CouplingError::PeerFinalized { .. })));
}

#[test]
fn field_errors() {
    let schema = loopback_schema(2, 2, 0.1, 0.2);
    let (mut s, echo) = controller_with_echo(&schema);
    assert!(matches!(s.write_field("Out", "m", &[0.0; 4]), Err(CouplingError::State { .. })));
    s.initialize().unwrap();
    s.write_field("Out", "m", &[0.0; 4]).unwrap();
    assert!(matches!(s.write_field("Out", "m", &[0.0; 3]), Err(CouplingError::Length { expected: 4, got: 3, .. })));
    assert!(matches!(s.write_field("Back", "m", &[0.0; 4]), Err(CouplingError::Direction { .. })));
    assert!(matches!(s.read_field("Out", "m"), Err(CouplingError::Direction { .. })));
    assert!(matches!(s.read_field("Nope", "m"), Err(CouplingError::UnknownField(_))));
    s.finalize();
    let _ = echo.join();
}

#[test]
fn mesh_registration_rules() {
    let arc: Vec<Vec<f64>> = (0..5)
        .map(|i| {
            let a = (85.0f64 + 2.5 * i as f64).to_radians();
            vec![0.05 * a.cos(), 0.05 * a.sin()]
        })
        .collect();
    let doc = json!({
        "participants": ["controller", "fluid"],
        "links": [["controller", "fluid"]],
        "meshes": [{"name": "jet1", "dim": 2, "owner": "fluid", "vertices": arc,
                    "face_weights": [1.0, 1.0, 1.0, 1.0, 1.0]}],
        "fields": [{"name": "Velocity", "mesh": "jet1", "components": 2, "writer": "controller"}],
        "window_size": 0.1, "end_time": 0.4
    });
    let schema = Arc::new(load_schema(&doc.to_string()).unwrap());
    let mut s = CouplingSession::new(schema.clone(), "controller").unwrap();
    // mesh owned by the peer: accepted and later checked against its MESH frame
    assert_eq!(s.set_mesh_vertices("jet1", &arc).unwrap(), 5);
    assert!(matches!(
        s.set_mesh_vertices("jet1", &[vec![0.0, 0.0, 0.0]]),
        Err(CouplingError::Dimension { expected: 2, got: 3, .. })
    ));
    assert!(matches!(s.set_mesh_vertices("nope", &arc), Err(CouplingError::UnknownMesh(_))));

    // a controller registering different coordinates fails the handshake
    let (a, b) = fake_connection_pair();
    let fluid = {
        let schema = schema.clone();
        thread::spawn(move || {
            let mut f = CouplingSession::new(schema, "fluid").unwrap();
            f.attach("controller", b).unwrap();
            f.initialize()
        })
    };
    let mut shifted = arc.clone();
    shifted[4][0] += 1e-9;
    s.set_mesh_vertices("jet1", &shifted).unwrap();
    s.attach("fluid", a).unwrap();
    assert!(matches!(s.initialize(), Err(CouplingError::MeshMismatch { .. })));
    assert!(fluid.join().unwrap().is_err());
    assert!(matches!(s.set_mesh_vertices("jet1", &arc), Err(CouplingError::State { .. })));
}

#[test]
fn schema_mismatch_detected_on_both_sides() {
    let ours = loopback_schema(1, 1, 0.1, 0.4);
    let theirs = loopback_schema(1, 1, 0.1, 0.5);
    let (a, b) = fake_connection_pair();
    let echo = spawn_echo(theirs, b);
    let mut s = CouplingSession::new(ours, "controller").unwrap();
    s.attach("echo", a).unwrap();
    assert!(matches!(s.initialize(), Err(CouplingError::SchemaMismatch { .. })));
    assert!(echo.join().unwrap().is_err());
}

#[test]
fn initialize_requires_links() {
    let schema = loopback_schema(1, 1, 0.1, 0.4);
    let mut s = CouplingSession::new(schema, "controller").unwrap();
    assert!(matches!(s.initialize(), Err(CouplingError::NotConnected(_))));
}

#[test]
fn out_of_order_data_aborts_with_error_frame() {
    let schema = loopback_schema(1, 1, 0.1, 0.4);
    let (a, mut raw) = fake_connection_pair();
    let mut s = CouplingSession::new(schema.clone(), "controller").unwrap();
    s.set_timeout(Duration::from_secs(5));
    s.attach("echo", a).unwrap();
    let peer = thread::spawn(move || {
        let t = Some(Duration::from_secs(5));
        // play the echo side by hand
        raw.send(&Message::Hello { participant: "echo".into(), schema_hash: schema.hash() }).unwrap();
        raw.send(&Message::Mesh { mesh: "m".into(), coords: schema.meshes[0].flat_coords() }).unwrap();
        raw.send(&Message::InitAck).unwrap();
        let mut seen = Vec::new();
        loop {
            let msg = raw.recv(t).unwrap();
            let done = matches!(msg, Message::Advance { .. });
            seen.push(msg);
            if done {
                break;
            }
        }
        raw.send(&Message::Data { field: "Back".into(), mesh: "m".into(), window: 5, values: vec![1.0] }).unwrap();
        // the controller may already have hung up
        let _ = raw.send(&Message::Advance { window: 0 });
        let reply = raw.recv(t).unwrap();
        (seen, reply)
    });
    s.initialize().unwrap();
    s.write_field("Out", "m", &[2.5]).unwrap();
    let err = s.advance(0.1).unwrap_err();
    assert!(matches!(err, CouplingError::Protocol(ref m) if m.contains("out-of-order")), "{err}");
    assert_eq!(s.state(), SessionState::Finalized);
    let (seen, reply) = peer.join().unwrap();
    assert!(seen.contains(&Message::Data { field: "Out".into(), mesh: "m".into(), window: 0, values: vec![2.5] }));
    assert!(matches!(reply, Message::Error { .. }));
}

/// Runs a full loopback episode, returning the `(t, read buffer)` trace.
fn loopback_trace(schema: &Arc<CouplingSchema>, inputs: &[Vec<f64>]) -> Vec<(f64, Vec<f64>)> {
    let (mut s, echo) = controller_with_echo(schema);
    s.initialize().unwrap();
    let mut trace = Vec::new();
    for input in inputs {
        s.write_field("Out", "m", input).unwrap();
        s.advance(schema.window_size).unwrap();
        trace.push((s.time(), s.read_field("Back", "m").unwrap().to_vec()));
    }
    s.finalize();
    echo.join().unwrap().unwrap();
    trace
}

#[test]
fn identical_inputs_give_identical_traces() {
    let schema = loopback_schema(3, 2, 0.25, 1.0);
    let inputs: Vec<Vec<f64>> = (0..4).map(|w| (0..6).map(|i| (w * 6 + i) as f64 / 7.0).collect()).collect();
    let a = loopback_trace(&schema, &inputs);
    let b = loopback_trace(&schema, &inputs);
    assert_eq!(a.len(), 4);
    for ((ta, va), (tb, vb)) in a.iter().zip(&b) {
        assert_eq!(ta.to_bits(), tb.to_bits());
        assert!(va.iter().zip(vb).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn full_episode_advances_exactly_n_windows(ws in 1e-3f64..0.5, n in 1u64..40) {
        let schema = loopback_schema(1, 1, ws, ws * n as f64);
        let (mut s, echo) = controller_with_echo(&schema);
        let mut dt = s.initialize().unwrap();
        let mut count = 0;
        while s.is_coupling_ongoing().unwrap() {
            dt = s.advance(dt.max(schema.window_size)).unwrap();
            count += 1;
        }
        s.finalize();
        prop_assert_eq!(count, n);
        prop_assert_eq!(echo.join().unwrap().unwrap(), n);
    }

    #[test]
    fn loopback_read_equals_written(
        vertices in 1usize..20,
        vector in any::<bool>(),
        seed in any::<u64>(),
    ) {
        use rand::{Rng, SeedableRng};
        let components = if vector { 2 } else { 1 };
        let schema = loopback_schema(vertices, components, 0.1, 0.3);
        let mut rng = rand_pcg::Pcg64::seed_from_u64(seed);
        let inputs: Vec<Vec<f64>> = (0..3)
            .map(|_| (0..vertices * components).map(|_| f64::from_bits(rng.gen())).collect())
            .collect();
        let trace = loopback_trace(&schema, &inputs);
        for (input, (_, read)) in inputs.iter().zip(&trace) {
            prop_assert!(input.iter().zip(read).all(|(a, b)| a.to_bits() == b.to_bits()));
        }
    }
}

#[derive(Debug, Clone)]
enum Op {
    SetMesh,
    Initialize,
    Write,
    Read,
    Advance,
    Ongoing,
    Finalize,
}

fn arb_op() -> impl Strategy<Value = Op> {
    prop_oneof![
        Just(Op::SetMesh),
        Just(Op::Initialize),
        Just(Op::Write),
        Just(Op::Read),
        Just(Op::Advance),
        Just(Op::Ongoing),
        Just(Op::Finalize),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Every call is checked against a model of the lifecycle
    /// Created → Initialized → Running → Finalized.
    #[test]
    fn state_machine_is_enforced(ops in prop::collection::vec(arb_op(), 1..16)) {
        let schema = loopback_schema(1, 1, 0.1, 0.5);
        let (mut s, echo) = controller_with_echo(&schema);
        let mut model = SessionState::Created;
        let mut windows = 0u64;
        for op in ops {
            let active = matches!(model, SessionState::Initialized | SessionState::Running);
            match op {
                Op::SetMesh => {
                    let ok = s.set_mesh_vertices("m", &schema.meshes[0].vertices).is_ok();
                    prop_assert_eq!(ok, model == SessionState::Created);
                }
                Op::Initialize => {
                    let ok = s.initialize().is_ok();
                    prop_assert_eq!(ok, model == SessionState::Created);
                    if ok { model = SessionState::Initialized; }
                }
                Op::Write => prop_assert_eq!(s.write_field("Out", "m", &[1.0]).is_ok(), active),
                Op::Read => prop_assert_eq!(s.read_field("Back", "m").is_ok(), active),
                Op::Advance => {
                    let ok = s.advance(0.1).is_ok();
                    prop_assert_eq!(ok, active && windows < 5);
                    if ok { windows += 1; model = SessionState::Running; }
                }
                Op::Ongoing => {
                    let res = s.is_coupling_ongoing();
                    prop_assert_eq!(res.is_ok(), model != SessionState::Created);
                }
                Op::Finalize => {
                    s.finalize();
                    model = SessionState::Finalized;
                }
            }
            prop_assert_eq!(s.state(), model);
        }
        s.finalize();
        let _ = echo.join();
    }
}
