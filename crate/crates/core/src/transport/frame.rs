//! Binary framing for participant-to-participant messages.
//!
//! Every frame is `magic (4) | msg_type (1) | payload_len (u32 LE) | payload`.
//! Strings inside payloads are UTF-8 prefixed by a `u32` LE byte length;
//! floats are IEEE-754 binary64, little-endian.

use std::fmt;

pub const MAGIC: [u8; 4] = *b"FBR1";
pub const HEADER_LEN: usize = 9;
/// Upper bound on `payload_len`; anything larger is treated as corruption.
pub const MAX_PAYLOAD: u32 = 1 << 28;
pub const SCHEMA_HASH_LEN: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum MessageType {
    Hello = 1,
    Mesh = 2,
    InitAck = 3,
    Data = 4,
    Advance = 5,
    Finalize = 6,
    Error = 7,
}

impl TryFrom<u8> for MessageType {
    type Error = FrameError;

    fn try_from(value: u8) -> Result<Self, FrameError> {
        Ok(match value {
            1 => MessageType::Hello,
            2 => MessageType::Mesh,
            3 => MessageType::InitAck,
            4 => MessageType::Data,
            5 => MessageType::Advance,
            6 => MessageType::Finalize,
            7 => MessageType::Error,
            other => return Err(FrameError::UnknownType(other)),
        })
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum FrameError {
    #[error("bad magic {0:02x?}")]
    BadMagic([u8; 4]),
    #[error("unknown message type {0}")]
    UnknownType(u8),
    #[error("truncated frame: need {needed} bytes, have {available}")]
    Truncated { needed: usize, available: usize },
    #[error("payload length {0} exceeds limit")]
    Oversize(u32),
    #[error("malformed {kind:?} payload: {reason}")]
    Malformed { kind: MessageType, reason: String },
}

/// One protocol message. Float vectors compare bitwise so that NaN payloads
/// still satisfy `decode(encode(m)) == m`.
#[derive(Debug, Clone)]
pub enum Message {
    Hello { participant: String, schema_hash: [u8; SCHEMA_HASH_LEN] },
    Mesh { mesh: String, coords: Vec<f64> },
    InitAck,
    Data { field: String, mesh: String, window: u64, values: Vec<f64> },
    Advance { window: u64 },
    Finalize,
    Error { reason: String },
}

fn bits_eq(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
}

impl PartialEq for Message {
    fn eq(&self, other: &Self) -> bool {
        use Message::*;
        match (self, other) {
            (Hello { participant: a, schema_hash: ha }, Hello { participant: b, schema_hash: hb }) => {
                a == b && ha == hb
            }
            (Mesh { mesh: a, coords: ca }, Mesh { mesh: b, coords: cb }) => a == b && bits_eq(ca, cb),
            (InitAck, InitAck) | (Finalize, Finalize) => true,
            (
                Data { field: fa, mesh: ma, window: wa, values: va },
                Data { field: fb, mesh: mb, window: wb, values: vb },
            ) => fa == fb && ma == mb && wa == wb && bits_eq(va, vb),
            (Advance { window: a }, Advance { window: b }) => a == b,
            (Error { reason: a }, Error { reason: b }) => a == b,
            _ => false,
        }
    }
}

impl fmt::Display for Message {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Message::Hello { participant, .. } => write!(f, "HELLO({participant})"),
            Message::Mesh { mesh, coords } => write!(f, "MESH({mesh}, {} floats)", coords.len()),
            Message::InitAck => f.write_str("INIT_ACK"),
            Message::Data { field, mesh, window, values } => {
                write!(f, "DATA({field}@{mesh}, window {window}, {} floats)", values.len())
            }
            Message::Advance { window } => write!(f, "ADVANCE({window})"),
            Message::Finalize => f.write_str("FINALIZE"),
            Message::Error { reason } => write!(f, "ERROR({reason})"),
        }
    }
}

impl Message {
    pub fn msg_type(&self) -> MessageType {
        match self {
            Message::Hello { .. } => MessageType::Hello,
            Message::Mesh { .. } => MessageType::Mesh,
            Message::InitAck => MessageType::InitAck,
            Message::Data { .. } => MessageType::Data,
            Message::Advance { .. } => MessageType::Advance,
            Message::Finalize => MessageType::Finalize,
            Message::Error { .. } => MessageType::Error,
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.payload_len());
        self.encode_into(&mut out);
        out
    }

    /// Appends the encoded frame to `out`.
    pub fn encode_into(&self, out: &mut Vec<u8>) {
        let len = self.payload_len();
        assert!(len <= MAX_PAYLOAD as usize, "payload of {len} bytes exceeds frame limit");
        out.extend_from_slice(&MAGIC);
        out.push(self.msg_type() as u8);
        out.extend_from_slice(&(len as u32).to_le_bytes());
        match self {
            Message::Hello { participant, schema_hash } => {
                out.extend_from_slice(participant.as_bytes());
                out.extend_from_slice(schema_hash);
            }
            Message::Mesh { mesh, coords } => {
                put_str(out, mesh);
                put_floats(out, coords);
            }
            Message::InitAck | Message::Finalize => {}
            Message::Data { field, mesh, window, values } => {
                put_str(out, field);
                put_str(out, mesh);
                out.extend_from_slice(&window.to_le_bytes());
                put_floats(out, values);
            }
            Message::Advance { window } => out.extend_from_slice(&window.to_le_bytes()),
            Message::Error { reason } => out.extend_from_slice(reason.as_bytes()),
        }
    }

    fn payload_len(&self) -> usize {
        match self {
            Message::Hello { participant, .. } => participant.len() + SCHEMA_HASH_LEN,
            Message::Mesh { mesh, coords } => 4 + mesh.len() + 8 * coords.len(),
            Message::InitAck | Message::Finalize => 0,
            Message::Data { field, mesh, values, .. } => 8 + field.len() + mesh.len() + 8 + 8 * values.len(),
            Message::Advance { .. } => 8,
            Message::Error { reason } => reason.len(),
        }
    }

    /// Decodes one frame from the front of `bytes`, returning the message and
    /// the number of bytes consumed.
    pub fn decode(bytes: &[u8]) -> Result<(Message, usize), FrameError> {
        let (kind, len) = decode_header(bytes)?;
        let total = HEADER_LEN + len as usize;
        if bytes.len() < total {
            return Err(FrameError::Truncated { needed: total, available: bytes.len() });
        }
        let msg = decode_payload(kind, &bytes[HEADER_LEN..total])?;
        Ok((msg, total))
    }
}

/// Validates a frame header and returns `(type, payload_len)`.
pub fn decode_header(bytes: &[u8]) -> Result<(MessageType, u32), FrameError> {
    if bytes.len() < HEADER_LEN {
        return Err(FrameError::Truncated { needed: HEADER_LEN, available: bytes.len() });
    }
    let magic: [u8; 4] = bytes[0..4].try_into().unwrap();
    if magic != MAGIC {
        return Err(FrameError::BadMagic(magic));
    }
    let kind = MessageType::try_from(bytes[4])?;
    let len = u32::from_le_bytes(bytes[5..9].try_into().unwrap());
    if len > MAX_PAYLOAD {
        return Err(FrameError::Oversize(len));
    }
    Ok((kind, len))
}

/// Decodes a payload whose type and exact length are already known.
pub fn decode_payload(kind: MessageType, payload: &[u8]) -> Result<Message, FrameError> {
    let mut r = Reader { kind, buf: payload };
    let msg = match kind {
        MessageType::Hello => {
            if payload.len() < SCHEMA_HASH_LEN {
                return Err(r.malformed("shorter than schema hash"));
            }
            let split = payload.len() - SCHEMA_HASH_LEN;
            let participant = std::str::from_utf8(&payload[..split])
                .map_err(|_| r.malformed("participant name is not UTF-8"))?
                .to_owned();
            let schema_hash = payload[split..].try_into().unwrap();
            r.buf = &[];
            Message::Hello { participant, schema_hash }
        }
        MessageType::Mesh => {
            let mesh = r.string()?;
            let coords = r.rest_floats()?;
            Message::Mesh { mesh, coords }
        }
        MessageType::InitAck => Message::InitAck,
        MessageType::Data => {
            let field = r.string()?;
            let mesh = r.string()?;
            let window = r.u64()?;
            let values = r.rest_floats()?;
            Message::Data { field, mesh, window, values }
        }
        MessageType::Advance => Message::Advance { window: r.u64()? },
        MessageType::Finalize => Message::Finalize,
        MessageType::Error => {
            let reason = std::str::from_utf8(payload).map_err(|_| r.malformed("reason is not UTF-8"))?.to_owned();
            r.buf = &[];
            Message::Error { reason }
        }
    };
    if !r.buf.is_empty() {
        return Err(r.malformed(format!("{} trailing bytes", r.buf.len())));
    }
    Ok(msg)
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

fn put_floats(out: &mut Vec<u8>, values: &[f64]) {
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

struct Reader<'a> {
    kind: MessageType,
    buf: &'a [u8],
}

impl<'a> Reader<'a> {
    fn malformed(&self, reason: impl Into<String>) -> FrameError {
        FrameError::Malformed { kind: self.kind, reason: reason.into() }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], FrameError> {
        if self.buf.len() < n {
            return Err(self.malformed(format!("needs {n} more bytes, has {}", self.buf.len())));
        }
        let (head, tail) = self.buf.split_at(n);
        self.buf = tail;
        Ok(head)
    }

    fn u64(&mut self) -> Result<u64, FrameError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String, FrameError> {
        let len = u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize;
        let bytes = self.take(len)?;
        std::str::from_utf8(bytes).map(str::to_owned).map_err(|_| self.malformed("string is not UTF-8"))
    }

    fn rest_floats(&mut self) -> Result<Vec<f64>, FrameError> {
        if !self.buf.len().is_multiple_of(8) {
            return Err(self.malformed("float payload is not a multiple of 8 bytes"));
        }
        let values = self.buf.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        self.buf = &[];
        Ok(values)
    }
}
