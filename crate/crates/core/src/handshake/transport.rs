use std::collections::VecDeque;
use std::io::{self, Read, Write};
use std::sync::mpsc;

use thiserror::Error;

use super::{HandshakeError, HandshakeOutput, Role, Session, Status};

/// Bytes of framing counted per handshake message: a 4-byte big-endian length.
pub const FRAME_OVERHEAD: usize = 4;

const MAX_FRAME: usize = 1 << 24;

/// Moves whole handshake messages between two parties.
pub trait Transport {
    fn send(&mut self, msg: &[u8]) -> io::Result<()>;
    fn recv(&mut self) -> io::Result<Vec<u8>>;
}

/// Length-prefixed framing over any byte stream, usually a `TcpStream`.
pub struct FramedTransport<S> {
    stream: S,
    sent: u64,
    received: u64,
}

impl<S: Read + Write> FramedTransport<S> {
    pub fn new(stream: S) -> Self {
        FramedTransport { stream, sent: 0, received: 0 }
    }

    /// Bytes written, framing included.
    pub fn bytes_sent(&self) -> u64 {
        self.sent
    }

    pub fn bytes_received(&self) -> u64 {
        self.received
    }

    pub fn get_mut(&mut self) -> &mut S {
        &mut self.stream
    }

    pub fn into_inner(self) -> S {
        self.stream
    }
}

impl<S: Read + Write> Transport for FramedTransport<S> {
    fn send(&mut self, msg: &[u8]) -> io::Result<()> {
        if msg.len() > MAX_FRAME {
            return Err(io::Error::new(io::ErrorKind::InvalidInput, "frame too large"));
        }
        self.stream.write_all(&(msg.len() as u32).to_be_bytes())?;
        self.stream.write_all(msg)?;
        self.stream.flush()?;
        self.sent += (msg.len() + FRAME_OVERHEAD) as u64;
        Ok(())
    }

    fn recv(&mut self) -> io::Result<Vec<u8>> {
        let mut len = [0u8; 4];
        self.stream.read_exact(&mut len)?;
        let len = u32::from_be_bytes(len) as usize;
        if len > MAX_FRAME {
            return Err(io::Error::new(io::ErrorKind::InvalidData, "frame too large"));
        }
        let mut buf = vec![0u8; len];
        self.stream.read_exact(&mut buf)?;
        self.received += (len + FRAME_OVERHEAD) as u64;
        Ok(buf)
    }
}

/// In-process transport for running two parties on two threads.
pub struct ChannelTransport {
    tx: mpsc::Sender<Vec<u8>>,
    rx: mpsc::Receiver<Vec<u8>>,
}

impl ChannelTransport {
    pub fn pair() -> (Self, Self) {
        let (a_tx, b_rx) = mpsc::channel();
        let (b_tx, a_rx) = mpsc::channel();
        (ChannelTransport { tx: a_tx, rx: a_rx }, ChannelTransport { tx: b_tx, rx: b_rx })
    }
}

impl Transport for ChannelTransport {
    fn send(&mut self, msg: &[u8]) -> io::Result<()> {
        self.tx.send(msg.to_vec()).map_err(|_| io::Error::new(io::ErrorKind::BrokenPipe, "peer hung up"))
    }

    fn recv(&mut self) -> io::Result<Vec<u8>> {
        self.rx.recv().map_err(|_| io::Error::new(io::ErrorKind::UnexpectedEof, "peer hung up"))
    }
}

#[derive(Debug, Error)]
pub enum StageError {
    #[error("{side} rejected: {error}")]
    Rejected { side: Role, error: HandshakeError },
    #[error("message {0} was dropped in transit")]
    Dropped(u8),
    #[error("transport: {0}")]
    Io(#[from] io::Error),
}

impl StageError {
    pub fn handshake_error(&self) -> Option<&HandshakeError> {
        match self {
            StageError::Rejected { error, .. } => Some(error),
            _ => None,
        }
    }
}

/// Runs one stage for a single party over `transport`.
pub fn drive(session: &mut Session, transport: &mut dyn Transport) -> Result<HandshakeOutput, StageError> {
    let side = session.role();
    let rejected = |error| StageError::Rejected { side, error };
    if side == Role::Initiator {
        let m1 = session.start().map_err(rejected)?;
        transport.send(&m1)?;
    }
    loop {
        let msg = transport.recv()?;
        for out in session.handle(&msg).map_err(rejected)? {
            transport.send(&out)?;
        }
        if session.status() == Status::Accept {
            return Ok(session.last_output().expect("accepted stage has output").clone());
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    ToResponder,
    ToInitiator,
}

type Tamper = Box<dyn FnMut(u8, Direction, Vec<u8>) -> Option<Vec<u8>> + Send>;

/// In-memory wire between two sessions driven from one thread. Counts every
/// message as its length plus [`FRAME_OVERHEAD`], and can rewrite or drop
/// messages in transit.
#[derive(Default)]
pub struct MemoryLink {
    sent: [u64; 2],
    log: Vec<(u8, Role, usize)>,
    tamper: Option<Tamper>,
}

impl MemoryLink {
    pub fn new() -> Self {
        Self::default()
    }

    /// `f(index, direction, msg)` returns the bytes to deliver, or `None` to
    /// drop the message.
    pub fn with_tamper(f: impl FnMut(u8, Direction, Vec<u8>) -> Option<Vec<u8>> + Send + 'static) -> Self {
        MemoryLink { tamper: Some(Box::new(f)), ..Self::default() }
    }

    pub fn clear_tamper(&mut self) {
        self.tamper = None;
    }

    pub fn bytes_sent(&self, by: Role) -> u64 {
        self.sent[by as usize]
    }

    pub fn total_bytes(&self) -> u64 {
        self.sent.iter().sum()
    }

    /// `(message index, sender, framed length)` for everything sent so far.
    pub fn log(&self) -> &[(u8, Role, usize)] {
        &self.log
    }

    pub fn reset_counters(&mut self) {
        self.sent = [0; 2];
        self.log.clear();
    }

    fn transit(&mut self, index: u8, from: Role, msg: Vec<u8>) -> Option<Vec<u8>> {
        let framed = msg.len() + FRAME_OVERHEAD;
        self.sent[from as usize] += framed as u64;
        self.log.push((index, from, framed));
        let dir = match from {
            Role::Initiator => Direction::ToResponder,
            Role::Responder => Direction::ToInitiator,
        };
        match &mut self.tamper {
            Some(f) => f(index, dir, msg),
            None => Some(msg),
        }
    }
}

/// Runs one full stage between two sessions over `link` and returns both
/// outputs, initiator first.
pub fn run_stage(
    initiator: &mut Session,
    responder: &mut Session,
    link: &mut MemoryLink,
) -> Result<(HandshakeOutput, HandshakeOutput), StageError> {
    let m1 = initiator.start().map_err(|error| StageError::Rejected { side: Role::Initiator, error })?;
    let mut queue = VecDeque::from([(Role::Responder, m1)]);
    let mut index = 0u8;
    while let Some((to, msg)) = queue.pop_front() {
        index += 1;
        let msg = link.transit(index, to.peer(), msg).ok_or(StageError::Dropped(index))?;
        let session = match to {
            Role::Initiator => &mut *initiator,
            Role::Responder => &mut *responder,
        };
        let out = session.handle(&msg).map_err(|error| StageError::Rejected { side: to, error })?;
        queue.extend(out.into_iter().map(|m| (to.peer(), m)));
    }
    let output = |s: &Session| s.last_output().filter(|_| s.status() == Status::Accept).cloned();
    match (output(initiator), output(responder)) {
        (Some(i), Some(r)) => Ok((i, r)),
        _ => unreachable!("all eight messages delivered without rejection"),
    }
}
