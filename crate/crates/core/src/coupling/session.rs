use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;
use std::time::Duration;

use log::{debug, warn};

use super::schema::{CouplingSchema, FieldKey};
use super::CouplingError;
use crate::transport::{connect, listen, Connection, Endpoint, Listener, Message, TransportError};

/// Default bound on every blocking protocol call.
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);
/// Absolute tolerance on runtime time comparisons (seconds).
pub const TIME_ATOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SessionState {
    Created,
    Initialized,
    Running,
    Finalized,
}

#[derive(Debug)]
struct Link {
    index: usize,
    peer: String,
    /// This participant sends first in every window of this link.
    leader: bool,
    conn: Option<Connection>,
    sends: Vec<FieldKey>,
    recvs: Vec<FieldKey>,
    owned_meshes: Vec<String>,
    peer_meshes: Vec<String>,
}

/// Description of one link as seen from this participant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LinkInfo {
    pub index: usize,
    pub peer: String,
    pub leader: bool,
}

/// Participant-side state of an explicit serial coupling.
///
/// Each window, the leader of a link sends its write fields and then waits
/// for the follower's data of the same window. The follower therefore
/// always holds the leader's data for the window it is about to compute.
#[derive(Debug)]
pub struct CouplingSession {
    schema: Arc<CouplingSchema>,
    hash: [u8; 32],
    participant: String,
    state: SessionState,
    window: u64,
    n_windows: u64,
    coords: BTreeMap<String, Vec<f64>>,
    links: Vec<Link>,
    write_buffers: BTreeMap<FieldKey, Vec<f64>>,
    read_buffers: BTreeMap<FieldKey, Vec<f64>>,
    timeout: Duration,
}

fn state_err(op: &'static str, state: SessionState) -> CouplingError {
    CouplingError::State { op, state }
}

impl CouplingSession {
    pub fn new(schema: Arc<CouplingSchema>, participant: &str) -> Result<Self, CouplingError> {
        if !schema.participants.iter().any(|p| p == participant) {
            return Err(CouplingError::UnknownParticipant(participant.to_owned()));
        }
        let mut links = Vec::new();
        for (index, [a, b]) in schema.links.iter().enumerate() {
            let (peer, leader) = if a == participant {
                (b.clone(), true)
            } else if b == participant {
                (a.clone(), false)
            } else {
                continue;
            };
            let mut link = Link {
                index,
                peer,
                leader,
                conn: None,
                sends: Vec::new(),
                recvs: Vec::new(),
                owned_meshes: Vec::new(),
                peer_meshes: Vec::new(),
            };
            let mut owned = BTreeSet::new();
            let mut theirs = BTreeSet::new();
            for f in &schema.fields {
                let to_peer = f.writer == participant && f.reader() == link.peer;
                let from_peer = f.writer == link.peer && f.reader() == participant;
                if !(to_peer || from_peer) {
                    continue;
                }
                if to_peer {
                    link.sends.push(f.key());
                } else {
                    link.recvs.push(f.key());
                }
                let owner = &schema.mesh(&f.mesh).expect("validated").owner;
                if owner == participant {
                    owned.insert(f.mesh.clone());
                } else {
                    theirs.insert(f.mesh.clone());
                }
            }
            link.owned_meshes = owned.into_iter().collect();
            link.peer_meshes = theirs.into_iter().collect();
            links.push(link);
        }

        let mut write_buffers = BTreeMap::new();
        let mut read_buffers = BTreeMap::new();
        for f in &schema.fields {
            let zeros = vec![0.0; schema.buffer_len(f)];
            if f.writer == participant {
                write_buffers.insert(f.key(), zeros);
            } else if f.reader() == participant {
                read_buffers.insert(f.key(), zeros);
            }
        }
        let coords = schema.meshes.iter().map(|m| (m.name.clone(), m.flat_coords())).collect();

        Ok(CouplingSession {
            hash: schema.hash(),
            n_windows: schema.n_windows(),
            participant: participant.to_owned(),
            schema,
            state: SessionState::Created,
            window: 0,
            coords,
            links,
            write_buffers,
            read_buffers,
            timeout: DEFAULT_TIMEOUT,
        })
    }

    pub fn schema(&self) -> &Arc<CouplingSchema> {
        &self.schema
    }

    pub fn participant(&self) -> &str {
        &self.participant
    }

    pub fn state(&self) -> SessionState {
        self.state
    }

    pub fn set_timeout(&mut self, timeout: Duration) {
        self.timeout = timeout;
    }

    /// Current simulation time in seconds.
    pub fn time(&self) -> f64 {
        self.window as f64 * self.schema.window_size
    }

    /// Number of windows completed so far.
    pub fn window_index(&self) -> u64 {
        self.window
    }

    pub fn n_windows(&self) -> u64 {
        self.n_windows
    }

    pub fn window_size(&self) -> f64 {
        self.schema.window_size
    }

    pub fn links(&self) -> Vec<LinkInfo> {
        self.links.iter().map(|l| LinkInfo { index: l.index, peer: l.peer.clone(), leader: l.leader }).collect()
    }

    /// Fields this participant writes.
    pub fn write_keys(&self) -> impl Iterator<Item = &FieldKey> {
        self.write_buffers.keys()
    }

    /// Fields this participant reads.
    pub fn read_keys(&self) -> impl Iterator<Item = &FieldKey> {
        self.read_buffers.keys()
    }

    /// Registers this participant's view of a mesh. Coordinates of meshes
    /// owned by a peer are only used to validate the peer's MESH message.
    pub fn set_mesh_vertices<V: AsRef<[f64]>>(&mut self, mesh: &str, coords: &[V]) -> Result<usize, CouplingError> {
        if self.state != SessionState::Created {
            return Err(state_err("set_mesh_vertices", self.state));
        }
        let decl = self.schema.mesh(mesh).ok_or_else(|| CouplingError::UnknownMesh(mesh.to_owned()))?;
        if let Some(bad) = coords.iter().find(|c| c.as_ref().len() != decl.dim) {
            return Err(CouplingError::Dimension {
                mesh: mesh.to_owned(),
                expected: decl.dim,
                got: bad.as_ref().len(),
            });
        }
        if coords.len() != decl.vertex_count() {
            return Err(CouplingError::VertexCount {
                mesh: mesh.to_owned(),
                expected: decl.vertex_count(),
                got: coords.len(),
            });
        }
        let flat = coords.iter().flat_map(|c| c.as_ref().iter().copied()).collect();
        self.coords.insert(mesh.to_owned(), flat);
        Ok(coords.len())
    }

    /// Attaches an established connection for the link to `peer`.
    pub fn attach(&mut self, peer: &str, conn: Connection) -> Result<(), CouplingError> {
        if self.state != SessionState::Created {
            return Err(state_err("attach", self.state));
        }
        let link = self
            .links
            .iter_mut()
            .find(|l| l.peer == peer)
            .ok_or_else(|| CouplingError::UnknownParticipant(peer.to_owned()))?;
        link.conn = Some(conn);
        Ok(())
    }

    /// Opens every link through `endpoint`: listens where this participant
    /// leads, connects (with retry) where it follows.
    pub fn connect_links(&mut self, endpoint: &Endpoint, retry_budget: u32) -> Result<(), CouplingError> {
        let mut listeners: Vec<(String, Listener)> = Vec::new();
        for link in self.links.iter().filter(|l| l.leader && l.conn.is_none()) {
            let l = listen(&endpoint.for_link(link.index)).map_err(CouplingError::Transport)?;
            listeners.push((link.peer.clone(), l));
        }
        let followers: Vec<(String, usize)> =
            self.links.iter().filter(|l| !l.leader && l.conn.is_none()).map(|l| (l.peer.clone(), l.index)).collect();
        for (peer, index) in followers {
            let conn = connect(&endpoint.for_link(index), retry_budget).map_err(CouplingError::Transport)?;
            self.attach(&peer, conn)?;
        }
        for (peer, listener) in listeners {
            let conn = listener.accept(self.timeout, || Ok(())).map_err(|e| match e {
                TransportError::Timeout => CouplingError::Timeout { peer: peer.clone() },
                e => CouplingError::Transport(e),
            })?;
            self.attach(&peer, conn)?;
        }
        Ok(())
    }

    /// Handshakes with every peer and returns the window size.
    pub fn initialize(&mut self) -> Result<f64, CouplingError> {
        if self.state != SessionState::Created {
            return Err(state_err("initialize", self.state));
        }
        if let Some(l) = self.links.iter().find(|l| l.conn.is_none()) {
            return Err(CouplingError::NotConnected(l.peer.clone()));
        }
        let res = self.handshake();
        self.guard(res)?;
        self.state = SessionState::Initialized;
        debug!("{}: initialized ({} windows)", self.participant, self.n_windows);
        Ok(self.schema.window_size)
    }

    fn handshake(&mut self) -> Result<(), CouplingError> {
        for i in 0..self.links.len() {
            let hello = Message::Hello { participant: self.participant.clone(), schema_hash: self.hash };
            self.send(i, &hello)?;
            for mesh in self.links[i].owned_meshes.clone() {
                let coords = self.coords[&mesh].clone();
                self.send(i, &Message::Mesh { mesh, coords })?;
            }
            self.send(i, &Message::InitAck)?;
        }
        for i in 0..self.links.len() {
            let peer = self.links[i].peer.clone();
            match self.recv(i)? {
                Message::Hello { participant, schema_hash } => {
                    if participant != peer {
                        return Err(CouplingError::Protocol(format!(
                            "expected HELLO from '{peer}', got '{participant}'"
                        )));
                    }
                    if schema_hash != self.hash {
                        return Err(CouplingError::SchemaMismatch { peer });
                    }
                }
                other => return Err(self.unexpected(i, other)),
            }
            let mut pending: BTreeSet<String> = self.links[i].peer_meshes.iter().cloned().collect();
            loop {
                match self.recv(i)? {
                    Message::Mesh { mesh, coords } => {
                        if !pending.remove(&mesh) {
                            return Err(CouplingError::Protocol(format!("unexpected MESH '{mesh}' from '{peer}'")));
                        }
                        let mine = &self.coords[&mesh];
                        let same = mine.len() == coords.len()
                            && mine.iter().zip(&coords).all(|(a, b)| a.to_bits() == b.to_bits());
                        if !same {
                            return Err(CouplingError::MeshMismatch { mesh, peer });
                        }
                    }
                    Message::InitAck if pending.is_empty() => break,
                    other => return Err(self.unexpected(i, other)),
                }
            }
        }
        for i in 0..self.links.len() {
            if !self.links[i].leader {
                self.receive_window(i, 0)?;
            }
        }
        Ok(())
    }

    pub fn write_field(&mut self, field: &str, mesh: &str, values: &[f64]) -> Result<(), CouplingError> {
        if !matches!(self.state, SessionState::Initialized | SessionState::Running) {
            return Err(state_err("write_field", self.state));
        }
        let key = FieldKey::new(field, mesh);
        let Some(buf) = self.write_buffers.get_mut(&key) else {
            return Err(if self.read_buffers.contains_key(&key) {
                CouplingError::Direction { field: key, op: "write" }
            } else {
                CouplingError::UnknownField(key)
            });
        };
        if buf.len() != values.len() {
            return Err(CouplingError::Length { field: key, expected: buf.len(), got: values.len() });
        }
        buf.copy_from_slice(values);
        Ok(())
    }

    /// Most recently received buffer of `field`; zeros before any data arrived.
    pub fn read_field(&self, field: &str, mesh: &str) -> Result<&[f64], CouplingError> {
        if !matches!(self.state, SessionState::Initialized | SessionState::Running) {
            return Err(state_err("read_field", self.state));
        }
        let key = FieldKey::new(field, mesh);
        match self.read_buffers.get(&key) {
            Some(buf) => Ok(buf),
            None if self.write_buffers.contains_key(&key) => Err(CouplingError::Direction { field: key, op: "read" }),
            None => Err(CouplingError::UnknownField(key)),
        }
    }

    /// Exchanges one coupling window and returns the next time-step size
    /// (zero once the end time is reached).
    pub fn advance(&mut self, dt: f64) -> Result<f64, CouplingError> {
        if !matches!(self.state, SessionState::Initialized | SessionState::Running) {
            return Err(state_err("advance", self.state));
        }
        if self.window >= self.n_windows {
            return Err(CouplingError::CouplingComplete);
        }
        if (dt - self.schema.window_size).abs() > TIME_ATOL {
            return Err(CouplingError::DtMismatch { dt, window_size: self.schema.window_size });
        }
        let res = self.exchange();
        self.guard(res)?;
        self.window += 1;
        self.state = SessionState::Running;
        if self.window >= self.n_windows {
            Ok(0.0)
        } else {
            Ok(self.schema.window_size)
        }
    }

    fn exchange(&mut self) -> Result<(), CouplingError> {
        let w = self.window;
        for i in 0..self.links.len() {
            for key in self.links[i].sends.clone() {
                let msg = Message::Data {
                    field: key.field.clone(),
                    mesh: key.mesh.clone(),
                    window: w,
                    values: self.write_buffers[&key].clone(),
                };
                self.send(i, &msg)?;
            }
            self.send(i, &Message::Advance { window: w })?;
        }
        for i in 0..self.links.len() {
            if self.links[i].leader {
                self.receive_window(i, w)?;
            } else if w + 1 < self.n_windows {
                self.receive_window(i, w + 1)?;
            }
        }
        Ok(())
    }

    fn receive_window(&mut self, i: usize, window: u64) -> Result<(), CouplingError> {
        let peer = self.links[i].peer.clone();
        let mut pending: BTreeMap<FieldKey, Vec<f64>> = BTreeMap::new();
        loop {
            match self.recv(i)? {
                Message::Data { field, mesh, window: w, values } => {
                    let key = FieldKey { field, mesh };
                    if w != window {
                        return Err(CouplingError::Protocol(format!(
                            "out-of-order DATA {key} from '{peer}': window {w}, expected {window}"
                        )));
                    }
                    if !self.links[i].recvs.contains(&key) {
                        return Err(CouplingError::Protocol(format!("unexpected DATA {key} from '{peer}'")));
                    }
                    let expected = self.read_buffers[&key].len();
                    if values.len() != expected {
                        return Err(CouplingError::Protocol(format!(
                            "DATA {key} from '{peer}' carries {} values, expected {expected}",
                            values.len()
                        )));
                    }
                    if pending.insert(key.clone(), values).is_some() {
                        return Err(CouplingError::Protocol(format!("duplicate DATA {key} from '{peer}'")));
                    }
                }
                Message::Advance { window: w } => {
                    if w != window {
                        return Err(CouplingError::Protocol(format!(
                            "out-of-order ADVANCE from '{peer}': window {w}, expected {window}"
                        )));
                    }
                    if let Some(missing) = self.links[i].recvs.iter().find(|k| !pending.contains_key(k)) {
                        return Err(CouplingError::Protocol(format!(
                            "window {window} from '{peer}' is missing {missing}"
                        )));
                    }
                    self.read_buffers.extend(pending);
                    return Ok(());
                }
                other => return Err(self.unexpected(i, other)),
            }
        }
    }

    fn send(&mut self, i: usize, msg: &Message) -> Result<(), CouplingError> {
        let link = &mut self.links[i];
        let conn = link.conn.as_mut().ok_or_else(|| CouplingError::NotConnected(link.peer.clone()))?;
        conn.send(msg).map_err(|e| transport_err(&link.peer, e))
    }

    fn recv(&mut self, i: usize) -> Result<Message, CouplingError> {
        let timeout = self.timeout;
        let link = &mut self.links[i];
        let conn = link.conn.as_mut().ok_or_else(|| CouplingError::NotConnected(link.peer.clone()))?;
        conn.recv(Some(timeout)).map_err(|e| transport_err(&link.peer, e))
    }

    fn unexpected(&self, i: usize, msg: Message) -> CouplingError {
        let peer = self.links[i].peer.clone();
        match msg {
            Message::Finalize => CouplingError::PeerFinalized { peer },
            Message::Error { reason } => CouplingError::PeerError { peer, reason },
            other => CouplingError::Protocol(format!("unexpected {other} from '{peer}'")),
        }
    }

    /// On failure, tears the session down so that peers are not left blocked:
    /// FINALIZE is forwarded when a peer ended the run, ERROR otherwise.
    fn guard<T>(&mut self, res: Result<T, CouplingError>) -> Result<T, CouplingError> {
        if let Err(err) = &res {
            match err {
                CouplingError::PeerFinalized { peer } => {
                    let peer = peer.clone();
                    self.shutdown(Some(&peer), &Message::Finalize);
                }
                CouplingError::PeerError { peer, reason } => {
                    let msg = Message::Error { reason: format!("{peer}: {reason}") };
                    let peer = peer.clone();
                    self.shutdown(Some(&peer), &msg);
                }
                other => {
                    warn!("{}: aborting coupling: {other}", self.participant);
                    let msg = Message::Error { reason: format!("{}: {other}", self.participant) };
                    self.shutdown(None, &msg);
                }
            }
        }
        res
    }

    /// Sends a final ERROR frame to every peer and closes the session.
    pub fn abort(&mut self, reason: &str) {
        if self.state == SessionState::Finalized {
            return;
        }
        let msg = Message::Error { reason: format!("{}: {reason}", self.participant) };
        self.shutdown(None, &msg);
    }

    /// Sends FINALIZE to every peer and closes all links. Idempotent.
    pub fn finalize(&mut self) {
        if self.state == SessionState::Finalized {
            return;
        }
        self.shutdown(None, &Message::Finalize);
    }

    fn shutdown(&mut self, skip: Option<&str>, msg: &Message) {
        for link in &mut self.links {
            if let Some(mut conn) = link.conn.take() {
                if skip != Some(link.peer.as_str()) {
                    let _ = conn.send(msg);
                }
                conn.close();
            }
        }
        self.state = SessionState::Finalized;
    }

    /// `true` while windows remain. Equivalent to `t < end_time − 1e-12`
    /// but evaluated on the integer window counter.
    pub fn is_coupling_ongoing(&self) -> Result<bool, CouplingError> {
        if self.state == SessionState::Created {
            return Err(state_err("is_coupling_ongoing", self.state));
        }
        Ok(self.window < self.n_windows)
    }
}

impl Drop for CouplingSession {
    fn drop(&mut self) {
        self.finalize();
    }
}

fn transport_err(peer: &str, e: TransportError) -> CouplingError {
    match e {
        TransportError::Timeout => CouplingError::Timeout { peer: peer.to_owned() },
        TransportError::Closed => CouplingError::PeerDisconnected { peer: peer.to_owned() },
        e => CouplingError::Transport(e),
    }
}
