//! Participant-side explicit serial coupling: schema, mesh/field
//! registration, window advancement and termination.

mod schema;
mod session;
#[cfg(test)]
mod tests;

pub use schema::{load_schema, CouplingMesh, CouplingSchema, FieldKey, FieldSpec, SCHEMA_TIME_RTOL};
pub use session::{CouplingSession, LinkInfo, SessionState, DEFAULT_TIMEOUT, TIME_ATOL};

use crate::transport::TransportError;

#[derive(Debug, thiserror::Error)]
pub enum CouplingError {
    #[error("schema parse error: {0}")]
    Parse(String),
    #[error("schema validation error: {0}")]
    Validation(String),
    #[error("{op} not allowed in state {state:?}")]
    State { op: &'static str, state: SessionState },
    #[error("unknown participant '{0}'")]
    UnknownParticipant(String),
    #[error("unknown mesh '{0}'")]
    UnknownMesh(String),
    #[error("unknown field {0}")]
    UnknownField(FieldKey),
    #[error("mesh '{mesh}' is {expected}-dimensional, got a {got}-component point")]
    Dimension { mesh: String, expected: usize, got: usize },
    #[error("mesh '{mesh}' declares {expected} vertices, got {got}")]
    VertexCount { mesh: String, expected: usize, got: usize },
    #[error("field {field} needs {expected} values, got {got}")]
    Length { field: FieldKey, expected: usize, got: usize },
    #[error("cannot {op} field {field}: wrong direction for this participant")]
    Direction { field: FieldKey, op: &'static str },
    #[error("dt {dt} does not match window size {window_size}")]
    DtMismatch { dt: f64, window_size: f64 },
    #[error("coupling already reached its end time")]
    CouplingComplete,
    #[error("link to '{0}' is not connected")]
    NotConnected(String),
    #[error("schema mismatch with '{peer}'")]
    SchemaMismatch { peer: String },
    #[error("mesh '{mesh}' coordinates differ from those sent by '{peer}'")]
    MeshMismatch { mesh: String, peer: String },
    #[error("protocol violation: {0}")]
    Protocol(String),
    #[error("'{peer}' finalized the coupling")]
    PeerFinalized { peer: String },
    #[error("'{peer}' reported an error: {reason}")]
    PeerError { peer: String, reason: String },
    #[error("'{peer}' disconnected")]
    PeerDisconnected { peer: String },
    #[error("timed out waiting for '{peer}'")]
    Timeout { peer: String },
    #[error(transparent)]
    Transport(TransportError),
}
