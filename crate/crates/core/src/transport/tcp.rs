//! Framed TCP backend.
//!
//! Every agent runs a listener whose per-connection reader threads push raw
//! frames into the agent's mailbox. Outgoing links keep one persistent
//! connection per directed peer pair. A queued link hands frames to a writer
//! thread so `send` returns immediately; a packet that cannot be written is
//! dropped and counted. A synchronous link (used by the deterministic
//! scheduler) waits for the receiver to acknowledge that the frame reached
//! its mailbox.

use std::io::{self, Read, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::mpsc::{self, Sender};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use log::{debug, warn};

use super::wire::{self, HEADER_LEN};
use super::{Inbound, MailboxSender, PeerLink, TransportError};
use crate::knowledge::{AgentId, GradientPacket};

const ACK: u8 = 0xA5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TcpOptions {
    /// How long a link keeps retrying the initial connection.
    pub connect_timeout: Duration,
    pub write_timeout: Duration,
    /// Wait for a per-frame acknowledgement from the receiver.
    pub synchronous: bool,
}

impl Default for TcpOptions {
    fn default() -> Self {
        Self {
            connect_timeout: Duration::from_secs(10),
            write_timeout: Duration::from_secs(30),
            synchronous: false,
        }
    }
}

/// Accept loop feeding one mailbox. Stops when dropped.
#[derive(Debug)]
pub struct TcpListenerHandle {
    local_addr: SocketAddr,
    stop: Arc<AtomicBool>,
    thread: Option<JoinHandle<()>>,
}

impl TcpListenerHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.local_addr
    }
}

impl Drop for TcpListenerHandle {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        // wake the blocking accept
        let _ = TcpStream::connect_timeout(&self.local_addr, Duration::from_millis(200));
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

/// Serves `listener`, forwarding every received frame into `mailbox`.
/// With `ack` set, each frame is acknowledged after it has been queued.
pub fn listen(
    listener: TcpListener,
    mailbox: MailboxSender,
    ack: bool,
) -> io::Result<TcpListenerHandle> {
    let local_addr = listener.local_addr()?;
    let stop = Arc::new(AtomicBool::new(false));
    let stop_flag = Arc::clone(&stop);
    let thread = thread::Builder::new()
        .name(format!("ddal-listen-{}", mailbox.owner()))
        .spawn(move || {
            for conn in listener.incoming() {
                if stop_flag.load(Ordering::SeqCst) {
                    break;
                }
                match conn {
                    Ok(stream) => {
                        let mb = mailbox.clone();
                        let spawned = thread::Builder::new()
                            .name(format!("ddal-read-{}", mb.owner()))
                            .spawn(move || read_frames(stream, mb, ack));
                        if let Err(e) = spawned {
                            warn!("cannot spawn reader thread: {e}");
                        }
                    }
                    Err(e) => debug!("accept failed: {e}"),
                }
            }
        })?;
    Ok(TcpListenerHandle {
        local_addr,
        stop,
        thread: Some(thread),
    })
}

/// Like `read_exact`, but a clean EOF before the first byte yields `Ok(false)`.
fn fill(stream: &mut TcpStream, buf: &mut [u8]) -> io::Result<bool> {
    let mut read = 0;
    while read < buf.len() {
        match stream.read(&mut buf[read..]) {
            Ok(0) if read == 0 => return Ok(false),
            Ok(0) => return Err(io::ErrorKind::UnexpectedEof.into()),
            Ok(n) => read += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    Ok(true)
}

fn read_frames(mut stream: TcpStream, mailbox: MailboxSender, ack: bool) {
    let _ = stream.set_nodelay(true);
    loop {
        let mut header = [0u8; HEADER_LEN];
        match fill(&mut stream, &mut header) {
            Ok(true) => {}
            Ok(false) => return,
            Err(e) => {
                debug!("reader for agent {}: {e}", mailbox.owner());
                return;
            }
        }
        let total = match wire::frame_len(&header) {
            Ok(total) => total,
            Err(e) => {
                // The stream cannot be resynchronised; hand the garbage to the
                // owner so it is counted, then drop the connection.
                warn!("agent {}: unusable frame header: {e}", mailbox.owner());
                let _ = mailbox.deliver(Inbound::Frame(header.to_vec()));
                let _ = stream.shutdown(Shutdown::Both);
                return;
            }
        };
        let mut frame = vec![0u8; total];
        frame[..HEADER_LEN].copy_from_slice(&header);
        if let Err(e) = stream.read_exact(&mut frame[HEADER_LEN..]) {
            debug!(
                "agent {}: connection closed mid-frame: {e}",
                mailbox.owner()
            );
            let _ = mailbox.deliver(Inbound::Frame(header.to_vec()));
            return;
        }
        if mailbox.deliver(Inbound::Frame(frame)).is_err() {
            return;
        }
        if ack && stream.write_all(&[ACK]).is_err() {
            return;
        }
    }
}

fn connect_with_retry(addr: SocketAddr, timeout: Duration) -> Option<TcpStream> {
    let deadline = Instant::now() + timeout;
    loop {
        let attempt = Duration::from_millis(250).min(timeout.max(Duration::from_millis(1)));
        match TcpStream::connect_timeout(&addr, attempt) {
            Ok(s) => {
                let _ = s.set_nodelay(true);
                return Some(s);
            }
            Err(e) => {
                if Instant::now() >= deadline {
                    debug!("giving up on {addr}: {e}");
                    return None;
                }
                thread::sleep(Duration::from_millis(25));
            }
        }
    }
}

enum LinkMode {
    Queued {
        tx: Mutex<Option<Sender<Vec<u8>>>>,
        writer: Mutex<Option<JoinHandle<()>>>,
    },
    Synchronous {
        stream: Mutex<Option<TcpStream>>,
    },
}

/// Outgoing connection to one peer.
pub struct TcpLink {
    peer: AgentId,
    addr: SocketAddr,
    mode: LinkMode,
    deferred: Arc<AtomicU64>,
}

impl std::fmt::Debug for TcpLink {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TcpLink")
            .field("peer", &self.peer)
            .field("addr", &self.addr)
            .finish()
    }
}

impl TcpLink {
    /// Queued links connect in the background and never block the caller;
    /// synchronous links connect before returning.
    pub fn connect(peer: AgentId, addr: SocketAddr, opts: TcpOptions) -> Self {
        let deferred = Arc::new(AtomicU64::new(0));
        let mode = if opts.synchronous {
            let stream = connect_with_retry(addr, opts.connect_timeout);
            if let Some(s) = &stream {
                let _ = s.set_write_timeout(Some(opts.write_timeout));
                let _ = s.set_read_timeout(Some(opts.write_timeout));
            } else {
                warn!("no connection to agent {peer} at {addr}");
            }
            LinkMode::Synchronous {
                stream: Mutex::new(stream),
            }
        } else {
            let (tx, rx) = mpsc::channel::<Vec<u8>>();
            let failures = Arc::clone(&deferred);
            let writer = thread::Builder::new()
                .name(format!("ddal-write-{peer}"))
                .spawn(move || {
                    let mut stream = connect_with_retry(addr, opts.connect_timeout);
                    match &stream {
                        Some(s) => {
                            let _ = s.set_write_timeout(Some(opts.write_timeout));
                        }
                        None => warn!("no connection to agent {peer} at {addr}"),
                    }
                    for frame in rx {
                        let ok = match stream.as_mut() {
                            Some(s) => s.write_all(&frame).is_ok(),
                            None => false,
                        };
                        if !ok {
                            if stream.take().is_some() {
                                warn!("connection to agent {peer} lost");
                            }
                            failures.fetch_add(1, Ordering::Relaxed);
                        }
                    }
                    if let Some(s) = stream {
                        let _ = s.shutdown(Shutdown::Write);
                    }
                })
                .expect("spawn writer thread");
            LinkMode::Queued {
                tx: Mutex::new(Some(tx)),
                writer: Mutex::new(Some(writer)),
            }
        };
        Self {
            peer,
            addr,
            mode,
            deferred,
        }
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }
}

impl PeerLink for TcpLink {
    fn peer(&self) -> AgentId {
        self.peer
    }

    fn send(&self, packet: &GradientPacket) -> Result<(), TransportError> {
        let frame = wire::encode(packet)?;
        match &self.mode {
            LinkMode::Queued { tx, .. } => {
                let guard = tx.lock().expect("link mutex");
                match guard.as_ref() {
                    Some(tx) => tx
                        .send(frame)
                        .map_err(|_| TransportError::LinkDown(self.peer)),
                    None => Err(TransportError::LinkDown(self.peer)),
                }
            }
            LinkMode::Synchronous { stream } => {
                let mut guard = stream.lock().expect("link mutex");
                let s = guard.as_mut().ok_or(TransportError::LinkDown(self.peer))?;
                let mut ack = [0u8; 1];
                let res = s.write_all(&frame).and_then(|_| s.read_exact(&mut ack));
                match res {
                    Ok(()) if ack[0] == ACK => Ok(()),
                    Ok(()) => {
                        *guard = None;
                        Err(TransportError::LinkDown(self.peer))
                    }
                    Err(e) => {
                        *guard = None;
                        Err(e.into())
                    }
                }
            }
        }
    }

    fn deferred_failures(&self) -> u64 {
        self.deferred.load(Ordering::Relaxed)
    }

    fn close(&self) {
        match &self.mode {
            LinkMode::Queued { tx, writer } => {
                tx.lock().expect("link mutex").take();
                if let Some(w) = writer.lock().expect("link mutex").take() {
                    let _ = w.join();
                }
            }
            LinkMode::Synchronous { stream } => {
                if let Some(s) = stream.lock().expect("link mutex").take() {
                    let _ = s.shutdown(Shutdown::Both);
                }
            }
        }
    }
}

impl Drop for TcpLink {
    fn drop(&mut self) {
        if let LinkMode::Queued { tx, .. } = &self.mode {
            // let the writer drain and exit on its own
            if let Ok(mut guard) = tx.lock() {
                guard.take();
            }
        }
    }
}
