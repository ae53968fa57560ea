//! Wire protocol between participant processes plus an in-process fake
//! transport for tests.

mod conn;
mod endpoint;
mod frame;

pub use conn::{fake_connection_pair, fake_pair, Connection, Duplex, FakeStream};
pub use endpoint::{connect, listen, Endpoint, Listener, CONNECT_BACKOFF, DEFAULT_RETRY_BUDGET, ENDPOINT_ENV};
pub use frame::{
    decode_header, decode_payload, FrameError, Message, MessageType, HEADER_LEN, MAGIC, MAX_PAYLOAD, SCHEMA_HASH_LEN,
};

#[derive(Debug, thiserror::Error)]
pub enum TransportError {
    #[error("frame error: {0}")]
    Frame(#[from] FrameError),
    #[error("connection closed by peer")]
    Closed,
    #[error("timed out waiting for peer")]
    Timeout,
    #[error("invalid endpoint {0}")]
    BadEndpoint(String),
    #[error("bind failed: {0}")]
    Bind(std::io::Error),
    #[error("could not connect to {endpoint} after {attempts} attempts: {last}")]
    RetryExhausted { endpoint: String, attempts: u32, last: String },
    #[error("i/o error: {0}")]
    Io(std::io::Error),
}
