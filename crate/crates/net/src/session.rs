//! Viewer session server.
//!
//! Every tick the engine hands its diff to [`SessionServer::broadcast_diff`]. The server
//! folds it into its own copy of the scene, serializes it once, and queues the same text to
//! every session. A new session is primed with the folded scene as a `reset` diff, so it
//! continues gaplessly from the next epoch.

use std::net::SocketAddr;
use std::path::{Component, Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::Duration;

use holoviz_core::engine::EngineInbox;
use holoviz_core::msgs::StatusLevel;
use holoviz_core::plugins::{InputEvent, PluginInfo, StatusNotice};
use holoviz_core::scene::{SceneDiff, SceneError, Snapshot};
use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use tokio::io::AsyncWriteExt;
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::{broadcast, mpsc, Notify};
use tokio::task::JoinHandle;

use crate::transport::{self, Frame, FrameRx, FrameTx, Opening};

pub const DEFAULT_SESSION_PORT: u16 = 9091;
const FAREWELL_TIMEOUT: Duration = Duration::from_secs(2);

/// One message on a session socket, `{"kind": ..., "payload": ...}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "snake_case")]
pub enum SessionMessage {
    /// Server to client: the scene change for one epoch.
    Diff(SceneDiff),
    /// Client to server: user input.
    Input(InputEvent),
    /// Server to client: a notice for the user.
    Status(StatusNotice),
    /// Client to server: send the whole scene at the next tick.
    Resync,
    /// Server to client: registry state, sent on connect and after every change.
    Plugins(Vec<PluginInfo>),
}

impl SessionMessage {
    pub fn to_text(&self) -> String {
        serde_json::to_string(self).expect("session messages serialize")
    }
}

#[derive(Debug, Clone)]
pub struct SessionConfig {
    pub bind: SocketAddr,
    /// A session that sends nothing (not even a pong) for this long is closed.
    pub keepalive: Duration,
    /// A session with more than this many undelivered messages is dropped.
    pub max_pending: usize,
    /// Directory served to plain HTTP GET requests on the same port.
    pub assets_dir: Option<PathBuf>,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            bind: SocketAddr::from(([0, 0, 0, 0], DEFAULT_SESSION_PORT)),
            keepalive: Duration::from_secs(10),
            max_pending: 128,
            assets_dir: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CloseReason {
    ClientClosed,
    KeepaliveExpired,
    SlowClient,
    ServerShutdown,
    Error,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SessionEvent {
    Opened { id: u64, peer: SocketAddr },
    Closed { id: u64, reason: CloseReason },
}

struct Member {
    id: u64,
    tx: mpsc::Sender<Arc<str>>,
    resync: Arc<AtomicBool>,
    kick: Arc<Notify>,
}

struct Hub {
    scene: Snapshot,
    plugins: Option<Arc<str>>,
    members: Vec<Member>,
    next_id: u64,
}

struct Shared {
    hub: Mutex<Hub>,
    inbox: EngineInbox,
    cfg: SessionConfig,
    events: broadcast::Sender<SessionEvent>,
    shutdown: Notify,
}

impl Shared {
    fn emit(&self, ev: SessionEvent) {
        log::debug!("{ev:?}");
        let _ = self.events.send(ev);
    }

    /// Queues `text` to one member; a full queue marks it as too slow.
    fn offer(&self, m: &Member, text: Arc<str>) -> bool {
        match m.tx.try_send(text) {
            Ok(()) => true,
            Err(mpsc::error::TrySendError::Full(_)) => {
                m.kick.notify_one();
                false
            }
            Err(mpsc::error::TrySendError::Closed(_)) => false,
        }
    }
}

/// Accepts viewer sessions and fans the diff stream out to them.
pub struct SessionServer {
    shared: Arc<Shared>,
    local_addr: SocketAddr,
    accept: JoinHandle<()>,
}

impl SessionServer {
    /// Binds the listener. Input events from every session are posted to `inbox`.
    pub async fn bind(cfg: SessionConfig, inbox: EngineInbox) -> std::io::Result<SessionServer> {
        Self::bind_with_scene(cfg, inbox, Snapshot::new()).await
    }

    /// As [`bind`](Self::bind), for an engine whose scene is already at `scene`.
    pub async fn bind_with_scene(
        cfg: SessionConfig,
        inbox: EngineInbox,
        scene: Snapshot,
    ) -> std::io::Result<SessionServer> {
        let listener = TcpListener::bind(cfg.bind).await?;
        let local_addr = listener.local_addr()?;
        let (events, _) = broadcast::channel(256);
        let shared = Arc::new(Shared {
            hub: Mutex::new(Hub {
                scene,
                plugins: None,
                members: Vec::new(),
                next_id: 0,
            }),
            inbox,
            cfg,
            events,
            shutdown: Notify::new(),
        });
        let accept = tokio::spawn(accept_loop(shared.clone(), listener));
        log::info!("session server listening on {local_addr}");
        Ok(SessionServer {
            shared,
            local_addr,
            accept,
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.local_addr
    }

    pub fn events(&self) -> broadcast::Receiver<SessionEvent> {
        self.shared.events.subscribe()
    }

    pub fn session_count(&self) -> usize {
        self.shared.hub.lock().members.len()
    }

    /// The scene as folded from every broadcast diff.
    pub fn scene(&self) -> Snapshot {
        self.shared.hub.lock().scene.clone()
    }

    /// Folds `diff` and queues it to every session; sessions that asked for a resync get the
    /// whole scene instead. Diffs must arrive in epoch order.
    pub fn broadcast_diff(&self, diff: &SceneDiff) -> Result<(), SceneError> {
        let mut guard = self.shared.hub.lock();
        let Hub { scene, members, .. } = &mut *guard;
        scene.apply_diff(diff)?;
        let incremental: Arc<str> = SessionMessage::Diff(diff.clone()).to_text().into();
        let mut full: Option<Arc<str>> = None;
        let shared = &self.shared;
        members.retain(|m| {
            let text = if m.resync.swap(false, Ordering::AcqRel) {
                full.get_or_insert_with(|| SessionMessage::Diff(scene.to_reset_diff(true)).to_text().into())
                    .clone()
            } else {
                incremental.clone()
            };
            shared.offer(m, text)
        });
        Ok(())
    }

    pub fn broadcast_status(&self, notice: &StatusNotice) {
        let text: Arc<str> = SessionMessage::Status(notice.clone()).to_text().into();
        let mut hub = self.shared.hub.lock();
        let shared = &self.shared;
        hub.members.retain(|m| shared.offer(m, text.clone()));
    }

    /// Publishes registry state to every session, and remembers it for new ones.
    pub fn broadcast_plugins(&self, plugins: Vec<PluginInfo>) {
        let text: Arc<str> = SessionMessage::Plugins(plugins).to_text().into();
        let mut hub = self.shared.hub.lock();
        hub.plugins = Some(text.clone());
        let shared = &self.shared;
        hub.members.retain(|m| shared.offer(m, text.clone()));
    }

    /// Stops accepting and closes every session.
    pub async fn shutdown(self) {
        self.accept.abort();
        let _ = self.accept.await;
        let members = std::mem::take(&mut self.shared.hub.lock().members);
        self.shared.shutdown.notify_waiters();
        drop(members);
        log::info!("session server on {} stopped", self.local_addr);
    }
}

async fn accept_loop(shared: Arc<Shared>, listener: TcpListener) {
    loop {
        let (stream, peer) = match listener.accept().await {
            Ok(c) => c,
            Err(e) => {
                log::warn!("session accept failed: {e}");
                tokio::time::sleep(Duration::from_millis(50)).await;
                continue;
            }
        };
        let shared = shared.clone();
        tokio::spawn(async move {
            if let Err(e) = handle(shared, stream, peer).await {
                log::debug!("session from {peer} ended with error: {e}");
            }
        });
    }
}

async fn handle(shared: Arc<Shared>, stream: TcpStream, peer: SocketAddr) -> Result<(), transport::TransportError> {
    let opening = transport::sniff(&stream, Duration::from_secs(2)).await?;
    if let Opening::HttpGet { path } = &opening {
        return serve_file(stream, shared.cfg.assets_dir.as_deref(), path).await;
    }
    if opening != Opening::WebSocket {
        log::debug!("rejecting non-websocket session from {peer}");
        return Ok(());
    }
    let (tx, rx) = transport::accept(stream, &opening).await?;
    // the queue is sized so that `max_pending` diffs fit alongside the priming messages
    let (out_tx, out_rx) = mpsc::channel(shared.cfg.max_pending.max(1) + 2);
    let resync = Arc::new(AtomicBool::new(false));
    let kick = Arc::new(Notify::new());
    let id = {
        let mut hub = shared.hub.lock();
        hub.next_id += 1;
        let id = hub.next_id;
        let snapshot: Arc<str> = SessionMessage::Diff(hub.scene.to_reset_diff(true)).to_text().into();
        let _ = out_tx.try_send(snapshot);
        if let Some(p) = &hub.plugins {
            let _ = out_tx.try_send(p.clone());
        }
        hub.members.push(Member {
            id,
            tx: out_tx.clone(),
            resync: resync.clone(),
            kick: kick.clone(),
        });
        id
    };
    drop(out_tx);
    shared.emit(SessionEvent::Opened { id, peer });

    let reply = {
        let hub_shared = shared.clone();
        move |text: Arc<str>| {
            let hub = hub_shared.hub.lock();
            if let Some(m) = hub.members.iter().find(|m| m.id == id) {
                let _ = m.tx.try_send(text);
            }
        }
    };
    let mut writer = tokio::spawn(write_loop(tx, out_rx, kick, shared.clone(), shared.cfg.clone()));
    let leave = || shared.hub.lock().members.retain(|m| m.id != id);
    let read = read_loop(rx, &shared, &resync, reply);
    tokio::pin!(read);
    let (reason, writer_reason) = tokio::select! {
        reason = &mut read => {
            // dropping the member's sender lets the writer finish
            leave();
            (reason, (&mut writer).await.unwrap_or(CloseReason::Error))
        }
        w = &mut writer => {
            leave();
            (CloseReason::Error, w.unwrap_or(CloseReason::Error))
        }
    };
    let reason = match (reason, writer_reason) {
        (_, CloseReason::SlowClient) => CloseReason::SlowClient,
        (CloseReason::Error, w) => w,
        (CloseReason::ClientClosed, CloseReason::ServerShutdown) => CloseReason::ServerShutdown,
        (r, _) => r,
    };
    shared.emit(SessionEvent::Closed { id, reason });
    Ok(())
}

async fn read_loop(mut rx: FrameRx, shared: &Shared, resync: &AtomicBool, reply: impl Fn(Arc<str>)) -> CloseReason {
    let keepalive = shared.cfg.keepalive;
    loop {
        let frame = tokio::select! {
            f = tokio::time::timeout(keepalive, rx.recv()) => f,
            _ = shared.shutdown.notified() => return CloseReason::ServerShutdown,
        };
        let text = match frame {
            Err(_) => return CloseReason::KeepaliveExpired,
            Ok(None) => return CloseReason::ClientClosed,
            Ok(Some(Err(_))) => return CloseReason::Error,
            Ok(Some(Ok(Frame::Control))) => continue,
            Ok(Some(Ok(Frame::Text(t)))) => t,
        };
        let problem = match serde_json::from_str::<SessionMessage>(&text) {
            Ok(SessionMessage::Input(ev)) => match ev.validate() {
                Ok(()) => {
                    shared.inbox.post_input(ev);
                    None
                }
                Err(e) => Some(format!("rejected input: {e}")),
            },
            Ok(SessionMessage::Resync) => {
                resync.store(true, Ordering::Release);
                None
            }
            Ok(other) => Some(format!("unexpected message kind from client: {other:?}")),
            Err(e) => Some(format!("unreadable session message: {e}")),
        };
        if let Some(message) = problem {
            let notice = StatusNotice::new(StatusLevel::Error, "session", message);
            reply(SessionMessage::Status(notice).to_text().into());
        }
    }
}

async fn write_loop(
    mut tx: FrameTx,
    mut out: mpsc::Receiver<Arc<str>>,
    kick: Arc<Notify>,
    shared: Arc<Shared>,
    cfg: SessionConfig,
) -> CloseReason {
    let mut ping = tokio::time::interval(cfg.keepalive / 2);
    ping.tick().await;
    loop {
        tokio::select! {
            biased;
            _ = kick.notified() => {
                let notice = StatusNotice::new(
                    StatusLevel::Error,
                    "session",
                    format!("session dropped: more than {} messages pending", cfg.max_pending),
                );
                log::warn!("{}", notice.message);
                // the socket is backed up, so the farewell may never get through
                let farewell = async {
                    let _ = tx.send(&SessionMessage::Status(notice).to_text()).await;
                    tx.close("too slow").await;
                };
                let _ = tokio::time::timeout(FAREWELL_TIMEOUT, farewell).await;
                return CloseReason::SlowClient;
            }
            _ = shared.shutdown.notified() => {
                tx.close("server shutting down").await;
                return CloseReason::ServerShutdown;
            }
            msg = out.recv() => match msg {
                Some(text) => {
                    if tx.send(&text).await.is_err() {
                        return CloseReason::Error;
                    }
                }
                None => {
                    tx.close("session closed").await;
                    return CloseReason::ClientClosed;
                }
            },
            _ = ping.tick() => {
                if tx.ping().await.is_err() {
                    return CloseReason::Error;
                }
            }
        }
    }
}

fn content_type(path: &Path) -> &'static str {
    match path.extension().and_then(|e| e.to_str()) {
        Some("html") => "text/html; charset=utf-8",
        Some("js") | Some("mjs") => "text/javascript",
        Some("css") => "text/css",
        Some("json") => "application/json",
        Some("glb") => "model/gltf-binary",
        Some("gltf") => "model/gltf+json",
        Some("stl") => "model/stl",
        Some("png") => "image/png",
        _ => "application/octet-stream",
    }
}

/// Resolves a request path inside `root`, refusing anything that would escape it.
fn resolve(root: &Path, request: &str) -> Option<PathBuf> {
    let rel = request.split(['?', '#']).next()?.trim_start_matches('/');
    let rel = if rel.is_empty() { "index.html" } else { rel };
    let mut out = root.to_path_buf();
    for c in Path::new(rel).components() {
        match c {
            Component::Normal(p) => out.push(p),
            _ => return None,
        }
    }
    Some(out)
}

async fn serve_file(
    mut stream: TcpStream,
    root: Option<&Path>,
    request: &str,
) -> Result<(), transport::TransportError> {
    let found = match root.and_then(|r| resolve(r, request)) {
        Some(p) => tokio::fs::read(&p).await.ok().map(|body| (content_type(&p), body)),
        None => None,
    };
    // drain the request head so closing does not reset the connection
    let mut head = vec![0u8; 8192];
    let _ = tokio::io::AsyncReadExt::read(&mut stream, &mut head).await;
    let (status, ctype, body) = match found {
        Some((ctype, body)) => ("200 OK", ctype, body),
        None => ("404 Not Found", "text/plain", b"not found\n".to_vec()),
    };
    let header = format!(
        "HTTP/1.1 {status}\r\nContent-Type: {ctype}\r\nContent-Length: {}\r\nAccess-Control-Allow-Origin: *\r\nConnection: close\r\n\r\n",
        body.len()
    );
    stream.write_all(header.as_bytes()).await?;
    stream.write_all(&body).await?;
    stream.shutdown().await?;
    Ok(())
}
