// SPDX-License-Identifier: Apache-2.0

//! Message channels: in-process duplex queues and a loopback TCP
//! transport, both carrying the framing from [`wire`](super::wire)
//! bit for bit.
//!
//! The protocol treats a channel as an already-authenticated,
//! confidential link (the transcript recorder marks post-handshake
//! payloads opaque); neither transport encrypts anything itself.

use std::collections::VecDeque;
use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::{Arc, Condvar, Mutex};

use super::wire::{decode_frame, decode_message, encode_frame, WireError, MAX_FRAME_LEN};
use super::ProtocolMessage;

/// Transport-level failure.
#[derive(Debug)]
pub enum TransportError {
    /// The peer hung up; no further messages will arrive.
    Closed,
    /// A length prefix exceeded [`MAX_FRAME_LEN`].
    FrameTooLarge { len: usize },
    /// The peer sent bytes the codec rejects.
    Wire(WireError),
    /// Socket-level I/O failure.
    Io(std::io::Error),
}

impl std::fmt::Display for TransportError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TransportError::Closed => f.write_str("channel closed by peer"),
            TransportError::FrameTooLarge { len } => {
                write!(f, "frame of {len} bytes exceeds cap of {MAX_FRAME_LEN}")
            }
            TransportError::Wire(err) => write!(f, "{err}"),
            TransportError::Io(err) => write!(f, "io: {err}"),
        }
    }
}

impl std::error::Error for TransportError {}

impl From<WireError> for TransportError {
    fn from(err: WireError) -> TransportError {
        TransportError::Wire(err)
    }
}

impl From<std::io::Error> for TransportError {
    fn from(err: std::io::Error) -> TransportError {
        TransportError::Io(err)
    }
}

/// A bidirectional, ordered, reliable message link between two parties.
pub trait Channel: Send {
    fn send(&mut self, msg: &ProtocolMessage) -> Result<(), TransportError>;
    /// Block until a message arrives or the peer closes the link.
    fn recv(&mut self) -> Result<ProtocolMessage, TransportError>;
}

/// One direction of an in-process duplex link: a queue of encoded
/// frames plus a closed flag, guarded by a mutex/condvar pair.
struct Pipe {
    state: Mutex<PipeState>,
    ready: Condvar,
}

struct PipeState {
    frames: VecDeque<Vec<u8>>,
    closed: bool,
}

impl Pipe {
    fn new() -> Arc<Pipe> {
        Arc::new(Pipe {
            state: Mutex::new(PipeState {
                frames: VecDeque::new(),
                closed: false,
            }),
            ready: Condvar::new(),
        })
    }

    fn push(&self, frame: Vec<u8>) -> Result<(), TransportError> {
        let mut state = self.state.lock().expect("pipe lock");
        if state.closed {
            return Err(TransportError::Closed);
        }
        state.frames.push_back(frame);
        self.ready.notify_one();
        Ok(())
    }

    fn pop(&self) -> Result<Vec<u8>, TransportError> {
        let mut state = self.state.lock().expect("pipe lock");
        loop {
            if let Some(frame) = state.frames.pop_front() {
                return Ok(frame);
            }
            if state.closed {
                return Err(TransportError::Closed);
            }
            state = self.ready.wait(state).expect("pipe lock");
        }
    }

    fn close(&self) {
        let mut state = self.state.lock().expect("pipe lock");
        state.closed = true;
        self.ready.notify_all();
    }
}

/// In-process channel endpoint; the default transport. Messages are
/// queued as fully framed byte vectors, so the queue carries exactly
/// the bytes the socket transport would.
pub struct QueueChannel {
    tx: Arc<Pipe>,
    rx: Arc<Pipe>,
}

/// Create a connected pair of in-process endpoints.
pub fn duplex_pair() -> (QueueChannel, QueueChannel) {
    let a_to_b = Pipe::new();
    let b_to_a = Pipe::new();
    (
        QueueChannel {
            tx: Arc::clone(&a_to_b),
            rx: Arc::clone(&b_to_a),
        },
        QueueChannel {
            tx: b_to_a,
            rx: a_to_b,
        },
    )
}

impl Channel for QueueChannel {
    fn send(&mut self, msg: &ProtocolMessage) -> Result<(), TransportError> {
        self.tx.push(encode_frame(msg))
    }

    fn recv(&mut self) -> Result<ProtocolMessage, TransportError> {
        let frame = self.rx.pop()?;
        Ok(decode_frame(&frame)?)
    }
}

impl Drop for QueueChannel {
    fn drop(&mut self) {
        // Unblock the peer in both directions: its reads drain and then
        // report Closed; its sends fail fast.
        self.tx.close();
        self.rx.close();
    }
}

/// Loopback TCP endpoint carrying the identical framing.
pub struct SocketChannel {
    stream: TcpStream,
}

impl SocketChannel {
    pub fn from_stream(stream: TcpStream) -> SocketChannel {
        let _ = stream.set_nodelay(true);
        SocketChannel { stream }
    }

    /// Bind an ephemeral loopback port and return the two connected
    /// endpoints.
    pub fn loopback_pair() -> std::io::Result<(SocketChannel, SocketChannel)> {
        let listener = TcpListener::bind("127.0.0.1:0")?;
        let addr = listener.local_addr()?;
        let client = TcpStream::connect(addr)?;
        let (server, _) = listener.accept()?;
        Ok((
            SocketChannel::from_stream(client),
            SocketChannel::from_stream(server),
        ))
    }
}

impl Channel for SocketChannel {
    fn send(&mut self, msg: &ProtocolMessage) -> Result<(), TransportError> {
        self.stream.write_all(&encode_frame(msg))?;
        Ok(())
    }

    fn recv(&mut self) -> Result<ProtocolMessage, TransportError> {
        let mut header = [0u8; 4];
        if let Err(err) = self.stream.read_exact(&mut header) {
            // EOF on a frame boundary is a clean close.
            if err.kind() == std::io::ErrorKind::UnexpectedEof {
                return Err(TransportError::Closed);
            }
            return Err(TransportError::Io(err));
        }
        let len = u32::from_be_bytes(header) as usize;
        if len > MAX_FRAME_LEN {
            return Err(TransportError::FrameTooLarge { len });
        }
        let mut body = vec![0u8; len];
        self.stream.read_exact(&mut body)?;
        Ok(decode_message(&body)?)
    }
}
