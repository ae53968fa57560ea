use std::fmt;
use std::io;
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::os::unix::net::{UnixListener, UnixStream};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::thread;
use std::time::{Duration, Instant};

use super::conn::Connection;
use super::TransportError;

/// Environment variable carrying the rendezvous endpoint to spawned solvers.
pub const ENDPOINT_ENV: &str = "FLOWBRIDGE_ENDPOINT";
pub const CONNECT_BACKOFF: Duration = Duration::from_millis(100);
pub const DEFAULT_RETRY_BUDGET: u32 = 300;

/// Where a participant listens or connects: `tcp:127.0.0.1:<port>` or
/// `local:<path>`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Endpoint {
    Tcp(SocketAddr),
    Local(PathBuf),
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Endpoint::Tcp(addr) => write!(f, "tcp:{addr}"),
            Endpoint::Local(path) => write!(f, "local:{}", path.display()),
        }
    }
}

impl FromStr for Endpoint {
    type Err = TransportError;

    fn from_str(s: &str) -> Result<Self, TransportError> {
        let bad = |why: &str| TransportError::BadEndpoint(format!("{s:?}: {why}"));
        if let Some(rest) = s.strip_prefix("tcp:") {
            let addr: SocketAddr = rest.parse().map_err(|_| bad("expected tcp:<ip>:<port>"))?;
            if !addr.ip().is_loopback() {
                return Err(bad("only loopback addresses are supported"));
            }
            Ok(Endpoint::Tcp(addr))
        } else if let Some(rest) = s.strip_prefix("local:") {
            if rest.is_empty() {
                return Err(bad("empty socket path"));
            }
            Ok(Endpoint::Local(PathBuf::from(rest)))
        } else {
            Err(bad("expected a tcp: or local: prefix"))
        }
    }
}

impl Endpoint {
    /// Endpoint used by the link at `index` in the schema's link list. The
    /// base endpoint itself serves link 0.
    pub fn for_link(&self, index: usize) -> Endpoint {
        match self {
            Endpoint::Tcp(addr) => {
                let mut addr = *addr;
                addr.set_port(addr.port() + index as u16);
                Endpoint::Tcp(addr)
            }
            Endpoint::Local(path) if index == 0 => Endpoint::Local(path.clone()),
            Endpoint::Local(path) => {
                let mut name = path.as_os_str().to_owned();
                name.push(format!(".{index}"));
                Endpoint::Local(PathBuf::from(name))
            }
        }
    }

    /// Picks a loopback base port whose next `links` ports are currently free.
    pub fn free_tcp(links: usize) -> Result<Endpoint, TransportError> {
        for _ in 0..64 {
            let probe = TcpListener::bind("127.0.0.1:0").map_err(TransportError::Bind)?;
            let base = probe.local_addr().map_err(TransportError::Bind)?;
            drop(probe);
            if base.port() as usize + links > u16::MAX as usize {
                continue;
            }
            let all_free = (0..links).all(|i| {
                let mut a = base;
                a.set_port(base.port() + i as u16);
                TcpListener::bind(a).is_ok()
            });
            if all_free {
                return Ok(Endpoint::Tcp(base));
            }
        }
        Err(TransportError::Bind(io::Error::new(io::ErrorKind::AddrInUse, "no free consecutive loopback ports")))
    }

    pub fn local(path: impl AsRef<Path>) -> Endpoint {
        Endpoint::Local(path.as_ref().to_path_buf())
    }
}

pub enum Listener {
    Tcp(TcpListener),
    Local(UnixListener, PathBuf),
}

impl fmt::Debug for Listener {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Listener::Tcp(l) => write!(f, "Listener::Tcp({:?})", l.local_addr().ok()),
            Listener::Local(_, p) => write!(f, "Listener::Local({})", p.display()),
        }
    }
}

pub fn listen(endpoint: &Endpoint) -> Result<Listener, TransportError> {
    match endpoint {
        Endpoint::Tcp(addr) => {
            let l = TcpListener::bind(addr).map_err(TransportError::Bind)?;
            l.set_nonblocking(true).map_err(TransportError::Bind)?;
            Ok(Listener::Tcp(l))
        }
        Endpoint::Local(path) => {
            if path.exists() {
                std::fs::remove_file(path).map_err(TransportError::Bind)?;
            }
            let l = UnixListener::bind(path).map_err(TransportError::Bind)?;
            l.set_nonblocking(true).map_err(TransportError::Bind)?;
            Ok(Listener::Local(l, path.clone()))
        }
    }
}

impl Listener {
    /// Non-blocking accept attempt.
    pub fn try_accept(&self) -> Result<Option<Connection>, TransportError> {
        let res = match self {
            Listener::Tcp(l) => l.accept().map(|(s, _)| {
                s.set_nonblocking(false)?;
                s.set_nodelay(true)?;
                Ok(Connection::new(s))
            }),
            Listener::Local(l, _) => l.accept().map(|(s, _)| {
                s.set_nonblocking(false)?;
                Ok(Connection::new(s))
            }),
        };
        match res {
            Ok(conn) => conn.map(Some).map_err(TransportError::Io),
            Err(e) if e.kind() == io::ErrorKind::WouldBlock => Ok(None),
            Err(e) => Err(TransportError::Io(e)),
        }
    }

    /// Blocks until a peer connects. `alive` is polled between attempts so
    /// callers can give up early (e.g. when the peer process died).
    pub fn accept(
        &self,
        timeout: Duration,
        mut alive: impl FnMut() -> Result<(), TransportError>,
    ) -> Result<Connection, TransportError> {
        let deadline = Instant::now() + timeout;
        loop {
            if let Some(conn) = self.try_accept()? {
                return Ok(conn);
            }
            alive()?;
            if Instant::now() >= deadline {
                return Err(TransportError::Timeout);
            }
            thread::sleep(Duration::from_millis(5));
        }
    }
}

impl Drop for Listener {
    fn drop(&mut self) {
        if let Listener::Local(_, path) = self {
            let _ = std::fs::remove_file(path);
        }
    }
}

/// Connects with a fixed [`CONNECT_BACKOFF`] between attempts.
pub fn connect(endpoint: &Endpoint, retry_budget: u32) -> Result<Connection, TransportError> {
    let attempts = retry_budget.max(1);
    let mut last = None;
    for attempt in 0..attempts {
        let res = match endpoint {
            Endpoint::Tcp(addr) => TcpStream::connect(addr).and_then(|s| {
                s.set_nodelay(true)?;
                Ok(Connection::new(s))
            }),
            Endpoint::Local(path) => UnixStream::connect(path).map(Connection::new),
        };
        match res {
            Ok(conn) => return Ok(conn),
            Err(e) => last = Some(e),
        }
        if attempt + 1 < attempts {
            thread::sleep(CONNECT_BACKOFF);
        }
    }
    Err(TransportError::RetryExhausted {
        endpoint: endpoint.to_string(),
        attempts,
        last: last.map(|e| e.to_string()).unwrap_or_default(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transport::Message;

    #[test]
    fn parse_and_display() {
        let ep: Endpoint = "tcp:127.0.0.1:4567".parse().unwrap();
        assert_eq!(ep.to_string(), "tcp:127.0.0.1:4567");
        assert_eq!(ep.for_link(2).to_string(), "tcp:127.0.0.1:4569");
        let ep: Endpoint = "local:/tmp/x.sock".parse().unwrap();
        assert_eq!(ep.for_link(0), ep);
        assert_eq!(ep.for_link(1).to_string(), "local:/tmp/x.sock.1");
        assert!("tcp:10.0.0.1:80".parse::<Endpoint>().is_err());
        assert!("udp:127.0.0.1:80".parse::<Endpoint>().is_err());
        assert!("local:".parse::<Endpoint>().is_err());
    }

    #[test]
    fn connect_retries_until_peer_listens() {
        let ep = Endpoint::free_tcp(1).unwrap();
        let ep2 = ep.clone();
        let server = thread::spawn(move || {
            thread::sleep(Duration::from_millis(1000));
            let l = listen(&ep2).unwrap();
            let mut c = l.accept(Duration::from_secs(10), || Ok(())).unwrap();
            c.send(&Message::InitAck).unwrap();
        });
        let mut conn = connect(&ep, DEFAULT_RETRY_BUDGET).unwrap();
        assert_eq!(conn.recv(Some(Duration::from_secs(5))).unwrap(), Message::InitAck);
        server.join().unwrap();
    }

    #[test]
    fn exhausted_budget_errors() {
        let ep = Endpoint::free_tcp(1).unwrap();
        assert!(matches!(connect(&ep, 1), Err(TransportError::RetryExhausted { attempts: 1, .. })));
    }

    #[test]
    fn second_connection_waits_for_accept() {
        let ep = Endpoint::free_tcp(1).unwrap();
        let l = listen(&ep).unwrap();
        let mut first = connect(&ep, 5).unwrap();
        let mut second = connect(&ep, 5).unwrap();
        let mut served = l.accept(Duration::from_secs(5), || Ok(())).unwrap();
        served.send(&Message::Finalize).unwrap();
        assert_eq!(first.recv(Some(Duration::from_secs(5))).unwrap(), Message::Finalize);
        // Nobody accepted the second stream, so nothing ever arrives on it.
        assert!(matches!(second.recv(Some(Duration::from_millis(100))), Err(TransportError::Timeout)));
    }

    #[test]
    fn local_socket_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let ep = Endpoint::local(dir.path().join("s.sock"));
        let l = listen(&ep).unwrap();
        let mut c = connect(&ep, 3).unwrap();
        let mut s = l.accept(Duration::from_secs(5), || Ok(())).unwrap();
        c.send(&Message::Advance { window: 9 }).unwrap();
        assert_eq!(s.recv(Some(Duration::from_secs(5))).unwrap(), Message::Advance { window: 9 });
        s.close();
        assert!(matches!(c.recv(Some(Duration::from_secs(5))), Err(TransportError::Closed)));
    }
}
