use std::collections::VecDeque;
use std::io::{self, Read, Write};
use std::net::{Shutdown, TcpStream};
use std::os::unix::net::UnixStream;
use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, Instant};

use super::frame::{decode_header, decode_payload, Message, HEADER_LEN};
use super::TransportError;

/// A reliable, ordered, bidirectional byte stream.
pub trait Duplex: Read + Write + Send {
    fn set_read_timeout(&mut self, timeout: Option<Duration>) -> io::Result<()>;
    /// Closes both directions; the peer observes end-of-stream.
    fn shutdown(&mut self);
}

impl Duplex for TcpStream {
    fn set_read_timeout(&mut self, timeout: Option<Duration>) -> io::Result<()> {
        TcpStream::set_read_timeout(self, timeout)
    }

    fn shutdown(&mut self) {
        let _ = TcpStream::shutdown(self, Shutdown::Both);
    }
}

impl Duplex for UnixStream {
    fn set_read_timeout(&mut self, timeout: Option<Duration>) -> io::Result<()> {
        UnixStream::set_read_timeout(self, timeout)
    }

    fn shutdown(&mut self) {
        let _ = UnixStream::shutdown(self, Shutdown::Both);
    }
}

/// A framed connection: sends and receives whole [`Message`]s.
pub struct Connection {
    stream: Box<dyn Duplex>,
    scratch: Vec<u8>,
    closed: bool,
}

impl std::fmt::Debug for Connection {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Connection").field("closed", &self.closed).finish()
    }
}

impl Connection {
    pub fn new(stream: impl Duplex + 'static) -> Self {
        Connection { stream: Box::new(stream), scratch: Vec::new(), closed: false }
    }

    pub fn send(&mut self, msg: &Message) -> Result<(), TransportError> {
        if self.closed {
            return Err(TransportError::Closed);
        }
        self.scratch.clear();
        msg.encode_into(&mut self.scratch);
        self.stream.write_all(&self.scratch).map_err(map_io)?;
        self.stream.flush().map_err(map_io)
    }

    /// Blocks for the next frame. `None` waits forever.
    pub fn recv(&mut self, timeout: Option<Duration>) -> Result<Message, TransportError> {
        if self.closed {
            return Err(TransportError::Closed);
        }
        self.stream.set_read_timeout(timeout).map_err(TransportError::Io)?;
        let mut header = [0u8; HEADER_LEN];
        read_full(&mut *self.stream, &mut header, true)?;
        let (kind, len) = decode_header(&header)?;
        let mut payload = vec![0u8; len as usize];
        read_full(&mut *self.stream, &mut payload, false)?;
        Ok(decode_payload(kind, &payload)?)
    }

    pub fn close(&mut self) {
        if !self.closed {
            self.closed = true;
            self.stream.shutdown();
        }
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }
}

impl Drop for Connection {
    fn drop(&mut self) {
        self.close();
    }
}

fn map_io(err: io::Error) -> TransportError {
    match err.kind() {
        io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut => TransportError::Timeout,
        io::ErrorKind::BrokenPipe
        | io::ErrorKind::ConnectionReset
        | io::ErrorKind::ConnectionAborted
        | io::ErrorKind::UnexpectedEof => TransportError::Closed,
        _ => TransportError::Io(err),
    }
}

/// `read_exact` that distinguishes a clean end-of-stream at a frame boundary
/// from a frame cut short.
fn read_full(stream: &mut dyn Duplex, buf: &mut [u8], at_boundary: bool) -> Result<(), TransportError> {
    let mut filled = 0;
    while filled < buf.len() {
        match stream.read(&mut buf[filled..]) {
            Ok(0) if filled == 0 && at_boundary => return Err(TransportError::Closed),
            Ok(0) => {
                return Err(TransportError::Frame(super::FrameError::Truncated {
                    needed: buf.len(),
                    available: filled,
                }))
            }
            Ok(n) => filled += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(map_io(e)),
        }
    }
    Ok(())
}

#[derive(Default)]
struct PipeState {
    data: VecDeque<u8>,
    writer_closed: bool,
    reader_closed: bool,
}

#[derive(Default)]
struct Pipe {
    state: Mutex<PipeState>,
    ready: Condvar,
}

/// One half of an in-process connection pair. No OS sockets are involved.
pub struct FakeStream {
    rx: Arc<Pipe>,
    tx: Arc<Pipe>,
    timeout: Option<Duration>,
}

/// Two connected in-process halves; bytes written to one are read from the
/// other in FIFO order.
pub fn fake_pair() -> (FakeStream, FakeStream) {
    let a_to_b = Arc::new(Pipe::default());
    let b_to_a = Arc::new(Pipe::default());
    (
        FakeStream { rx: b_to_a.clone(), tx: a_to_b.clone(), timeout: None },
        FakeStream { rx: a_to_b, tx: b_to_a, timeout: None },
    )
}

/// [`fake_pair`] wrapped as framed connections.
pub fn fake_connection_pair() -> (Connection, Connection) {
    let (a, b) = fake_pair();
    (Connection::new(a), Connection::new(b))
}

impl Read for FakeStream {
    fn read(&mut self, buf: &mut [u8]) -> io::Result<usize> {
        if buf.is_empty() {
            return Ok(0);
        }
        let deadline = self.timeout.map(|t| Instant::now() + t);
        let mut state = self.rx.state.lock().unwrap();
        loop {
            if !state.data.is_empty() {
                let n = buf.len().min(state.data.len());
                for (slot, byte) in buf.iter_mut().zip(state.data.drain(..n)) {
                    *slot = byte;
                }
                return Ok(n);
            }
            if state.writer_closed || state.reader_closed {
                return Ok(0);
            }
            state = match deadline {
                None => self.rx.ready.wait(state).unwrap(),
                Some(deadline) => {
                    let now = Instant::now();
                    if now >= deadline {
                        return Err(io::ErrorKind::TimedOut.into());
                    }
                    self.rx.ready.wait_timeout(state, deadline - now).unwrap().0
                }
            };
        }
    }
}

impl Write for FakeStream {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        let mut state = self.tx.state.lock().unwrap();
        if state.reader_closed || state.writer_closed {
            return Err(io::ErrorKind::BrokenPipe.into());
        }
        state.data.extend(buf);
        self.tx.ready.notify_all();
        Ok(buf.len())
    }

    fn flush(&mut self) -> io::Result<()> {
        Ok(())
    }
}

impl Duplex for FakeStream {
    fn set_read_timeout(&mut self, timeout: Option<Duration>) -> io::Result<()> {
        self.timeout = timeout;
        Ok(())
    }

    fn shutdown(&mut self) {
        {
            let mut tx = self.tx.state.lock().unwrap();
            tx.writer_closed = true;
            self.tx.ready.notify_all();
        }
        let mut rx = self.rx.state.lock().unwrap();
        rx.reader_closed = true;
        rx.data.clear();
        self.rx.ready.notify_all();
    }
}

impl Drop for FakeStream {
    fn drop(&mut self) {
        Duplex::shutdown(self);
    }
}
