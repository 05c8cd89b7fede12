//! Text-frame transports: WebSocket, or newline-delimited JSON over raw TCP.

use std::fmt;
use std::io;
use std::str::FromStr;
use std::time::Duration;

use futures_util::stream::{SplitSink, SplitStream};
use futures_util::{SinkExt, StreamExt};
use tokio::net::tcp::{OwnedReadHalf, OwnedWriteHalf};
use tokio::net::TcpStream;
use tokio_tungstenite::tungstenite::protocol::CloseFrame;
use tokio_tungstenite::tungstenite::Message;
use tokio_tungstenite::WebSocketStream;
use tokio_util::codec::{FramedRead, FramedWrite, LinesCodec, LinesCodecError};

/// Longest accepted frame on the newline transport.
pub const MAX_LINE: usize = 16 * 1024 * 1024;

/// Port used when a `ws://` URL names none (the rosbridge default).
pub const DEFAULT_PORT: u16 = 9090;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    Ws,
    Tcp,
}

/// A parsed `ws://host:port/path` or `tcp://host:port` address.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Endpoint {
    pub scheme: Scheme,
    pub host: String,
    pub port: u16,
    pub path: String,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid endpoint {url:?}: {reason}")]
pub struct EndpointError {
    pub url: String,
    pub reason: String,
}

impl FromStr for Endpoint {
    type Err = EndpointError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = |reason: &str| EndpointError {
            url: s.to_string(),
            reason: reason.to_string(),
        };
        let url = url::Url::parse(s).map_err(|e| err(&e.to_string()))?;
        let scheme = match url.scheme() {
            "ws" => Scheme::Ws,
            "tcp" => Scheme::Tcp,
            "wss" => return Err(err("TLS is not supported")),
            other => return Err(err(&format!("unsupported scheme {other:?}"))),
        };
        let host = url
            .host_str()
            .filter(|h| !h.is_empty())
            .ok_or_else(|| err("missing host"))?;
        let host = host.trim_start_matches('[').trim_end_matches(']').to_string();
        Ok(Endpoint {
            scheme,
            host,
            port: url.port().unwrap_or(DEFAULT_PORT),
            path: if url.path().is_empty() {
                "/".into()
            } else {
                url.path().into()
            },
        })
    }
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let host = if self.host.contains(':') {
            format!("[{}]", self.host)
        } else {
            self.host.clone()
        };
        match self.scheme {
            Scheme::Ws => write!(f, "ws://{host}:{}{}", self.port, self.path),
            Scheme::Tcp => write!(f, "tcp://{host}:{}", self.port),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum TransportError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("websocket: {0}")]
    Ws(#[from] tokio_tungstenite::tungstenite::Error),
    #[error("frame longer than {MAX_LINE} bytes")]
    FrameTooLong,
    #[error("frame is not UTF-8")]
    NotUtf8,
}

impl From<LinesCodecError> for TransportError {
    fn from(e: LinesCodecError) -> Self {
        match e {
            LinesCodecError::MaxLineLengthExceeded => TransportError::FrameTooLong,
            LinesCodecError::Io(e) => TransportError::Io(e),
        }
    }
}

/// What arrived from the peer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Frame {
    Text(String),
    /// Ping, pong or other control traffic. Counts as liveness only.
    Control,
}

type Ws = WebSocketStream<TcpStream>;

pub enum FrameTx {
    Ws(SplitSink<Ws, Message>),
    Lines(FramedWrite<OwnedWriteHalf, LinesCodec>),
}

pub enum FrameRx {
    Ws(SplitStream<Ws>),
    Lines(FramedRead<OwnedReadHalf, LinesCodec>),
}

impl FrameTx {
    pub async fn send(&mut self, text: &str) -> Result<(), TransportError> {
        match self {
            FrameTx::Ws(s) => s.send(Message::Text(text.to_string())).await?,
            FrameTx::Lines(s) => s.send(text).await?,
        }
        Ok(())
    }

    /// WebSocket ping. A no-op on the newline transport, which has no control frames.
    pub async fn ping(&mut self) -> Result<(), TransportError> {
        if let FrameTx::Ws(s) = self {
            s.send(Message::Ping(Vec::new())).await?;
        }
        Ok(())
    }

    pub async fn close(&mut self, reason: &str) {
        match self {
            FrameTx::Ws(s) => {
                let frame = CloseFrame {
                    code: tokio_tungstenite::tungstenite::protocol::frame::coding::CloseCode::Normal,
                    reason: reason.to_string().into(),
                };
                let _ = s.send(Message::Close(Some(frame))).await;
                let _ = s.close().await;
            }
            FrameTx::Lines(s) => {
                let _ = SinkExt::<&str>::close(s).await;
            }
        }
    }
}

impl FrameRx {
    /// The next frame, or `None` once the peer has closed.
    pub async fn recv(&mut self) -> Option<Result<Frame, TransportError>> {
        match self {
            FrameRx::Ws(s) => loop {
                return match s.next().await? {
                    Ok(Message::Text(t)) => Some(Ok(Frame::Text(t))),
                    Ok(Message::Binary(b)) => Some(
                        String::from_utf8(b)
                            .map(Frame::Text)
                            .map_err(|_| TransportError::NotUtf8),
                    ),
                    Ok(Message::Close(_)) => None,
                    Ok(Message::Ping(_) | Message::Pong(_)) => Some(Ok(Frame::Control)),
                    Ok(Message::Frame(_)) => continue,
                    Err(e) => Some(Err(e.into())),
                };
            },
            FrameRx::Lines(s) => loop {
                return match s.next().await? {
                    Ok(line) if line.trim().is_empty() => continue,
                    Ok(line) => Some(Ok(Frame::Text(line))),
                    Err(e) => Some(Err(e.into())),
                };
            },
        }
    }
}

fn lines(stream: TcpStream) -> (FrameTx, FrameRx) {
    let (r, w) = stream.into_split();
    (
        FrameTx::Lines(FramedWrite::new(w, LinesCodec::new_with_max_length(MAX_LINE))),
        FrameRx::Lines(FramedRead::new(r, LinesCodec::new_with_max_length(MAX_LINE))),
    )
}

fn split_ws(ws: Ws) -> (FrameTx, FrameRx) {
    let (tx, rx) = ws.split();
    (FrameTx::Ws(tx), FrameRx::Ws(rx))
}

pub async fn connect(ep: &Endpoint) -> Result<(FrameTx, FrameRx), TransportError> {
    let stream = TcpStream::connect((ep.host.as_str(), ep.port)).await?;
    stream.set_nodelay(true)?;
    match ep.scheme {
        Scheme::Tcp => Ok(lines(stream)),
        Scheme::Ws => {
            let (ws, _) = tokio_tungstenite::client_async(ep.to_string(), stream).await?;
            Ok(split_ws(ws))
        }
    }
}

/// How an accepted connection opened.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Opening {
    WebSocket,
    Lines,
    /// A plain HTTP request (no upgrade) for `path`.
    HttpGet {
        path: String,
    },
}

/// Reads the start of an accepted connection without consuming it.
///
/// Connections that stay silent for `wait` are treated as newline clients, since those may
/// legitimately speak second.
pub async fn sniff(stream: &TcpStream, wait: Duration) -> io::Result<Opening> {
    let mut buf = vec![0u8; 8192];
    let deadline = tokio::time::Instant::now() + wait;
    loop {
        let n = match tokio::time::timeout_at(deadline, stream.peek(&mut buf)).await {
            Ok(r) => r?,
            Err(_) => return Ok(Opening::Lines),
        };
        if n == 0 {
            return Err(io::ErrorKind::UnexpectedEof.into());
        }
        let head = &buf[..n];
        if !b"GET ".starts_with(&head[..n.min(4)]) {
            return Ok(Opening::Lines);
        }
        if let Some(end) = find(head, b"\r\n\r\n") {
            let text = String::from_utf8_lossy(&head[..end]).to_ascii_lowercase();
            let upgrade = text
                .lines()
                .any(|l| l.starts_with("upgrade:") && l.contains("websocket"));
            if upgrade {
                return Ok(Opening::WebSocket);
            }
            let path = text.split_whitespace().nth(1).unwrap_or("/").to_string();
            return Ok(Opening::HttpGet { path });
        }
        if n == buf.len() {
            return Err(io::Error::new(io::ErrorKind::InvalidData, "request head too large"));
        }
        tokio::time::sleep(Duration::from_millis(5)).await;
    }
}

fn find(hay: &[u8], needle: &[u8]) -> Option<usize> {
    hay.windows(needle.len()).position(|w| w == needle)
}

/// Completes the server side of a connection whose opening has been sniffed.
pub async fn accept(stream: TcpStream, opening: &Opening) -> Result<(FrameTx, FrameRx), TransportError> {
    stream.set_nodelay(true)?;
    match opening {
        Opening::WebSocket => Ok(split_ws(tokio_tungstenite::accept_async(stream).await?)),
        Opening::Lines => Ok(lines(stream)),
        Opening::HttpGet { .. } => Err(io::Error::new(io::ErrorKind::InvalidInput, "not a frame connection").into()),
    }
}
