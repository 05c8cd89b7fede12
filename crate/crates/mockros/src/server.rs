//! Mock rosbridge server: topic fan-out between clients plus one scenario loop.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use holoviz_core::msgs::{decode_str, encode_string, BridgeOp, DecodeError, StatusLevel};
use holoviz_core::Stamp;
use holoviz_net::transport::{self, Frame};
use parking_lot::Mutex;
use serde::Serialize;
use serde_json::{json, Value};
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::{mpsc, watch};
use tokio::task::JoinHandle;

use crate::clock::SimClock;
use crate::scenario::{set_seq, Scenario, ScenarioScript, ScenarioStatus, ScriptError};

#[derive(Debug, thiserror::Error)]
pub enum ServeError {
    #[error("cannot bind {addr}: {source}")]
    Bind { addr: SocketAddr, source: std::io::Error },
    #[error(transparent)]
    Script(#[from] ScriptError),
}

#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub bind: SocketAddr,
    pub script: ScenarioScript,
    /// Simulated seconds per wall-clock second.
    pub time_scale: f64,
    /// Wall-clock period of the scenario loop.
    pub step_period: Duration,
}

impl ServerConfig {
    pub fn new(bind: SocketAddr, script: ScenarioScript) -> Self {
        Self {
            bind,
            script,
            time_scale: 1.0,
            step_period: Duration::from_millis(5),
        }
    }
}

/// One connected client as seen by the server.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ClientInfo {
    pub id: u64,
    pub peer: String,
    pub subscriptions: BTreeMap<String, String>,
    pub advertisements: BTreeMap<String, String>,
}

struct Client {
    info: ClientInfo,
    tx: mpsc::UnboundedSender<Arc<str>>,
}

#[derive(Default)]
struct Hub {
    clients: BTreeMap<u64, Client>,
    next_id: u64,
}

impl Hub {
    fn fan_out(&self, topic: &str, text: &Arc<str>) {
        for c in self.clients.values() {
            if c.info.subscriptions.contains_key(topic) {
                let _ = c.tx.send(text.clone());
            }
        }
    }
}

struct Shared {
    hub: Mutex<Hub>,
    status: Mutex<ScenarioStatus>,
    published: Mutex<BTreeMap<String, u64>>,
    seq: AtomicU64,
    to_scenario: mpsc::UnboundedSender<(String, Value)>,
}

impl Shared {
    fn publish(&self, topic: &str, mut msg: Value) {
        set_seq(&mut msg, self.seq.fetch_add(1, Ordering::Relaxed));
        let text: Arc<str> = encode_string(&BridgeOp::publish(topic, msg)).into();
        *self.published.lock().entry(topic.to_string()).or_default() += 1;
        self.hub.lock().fan_out(topic, &text);
    }
}

pub struct MockServer {
    shared: Arc<Shared>,
    local_addr: SocketAddr,
    stop: watch::Sender<bool>,
    tasks: Vec<JoinHandle<()>>,
    clock: SimClock,
}

impl MockServer {
    pub async fn start(cfg: ServerConfig) -> Result<MockServer, ServeError> {
        let base = Stamp::from_secs_f64(
            std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs_f64())
                .unwrap_or(0.0),
        );
        let scenario = Scenario::new(cfg.script.clone(), base)?;
        let listener = TcpListener::bind(cfg.bind)
            .await
            .map_err(|source| ServeError::Bind { addr: cfg.bind, source })?;
        let local_addr = listener
            .local_addr()
            .map_err(|source| ServeError::Bind { addr: cfg.bind, source })?;
        let (to_scenario, from_clients) = mpsc::unbounded_channel();
        let shared = Arc::new(Shared {
            hub: Mutex::new(Hub::default()),
            status: Mutex::new(scenario.status().clone()),
            published: Mutex::new(BTreeMap::new()),
            seq: AtomicU64::new(0),
            to_scenario,
        });
        let (stop, stop_rx) = watch::channel(false);
        let clock = SimClock::new(base, cfg.time_scale);
        let tasks = vec![
            tokio::spawn(accept_loop(shared.clone(), listener, stop_rx.clone())),
            tokio::spawn(scenario_loop(
                shared.clone(),
                scenario,
                clock,
                cfg.step_period,
                from_clients,
                stop_rx,
            )),
        ];
        log::info!(
            "mockros {} scenario on {local_addr} (time scale {})",
            cfg.script.name,
            cfg.time_scale
        );
        Ok(MockServer {
            shared,
            local_addr,
            stop,
            tasks,
            clock,
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.local_addr
    }

    pub fn ws_url(&self) -> String {
        format!("ws://{}", self.local_addr)
    }

    pub fn tcp_url(&self) -> String {
        format!("tcp://{}", self.local_addr)
    }

    pub fn clock(&self) -> SimClock {
        self.clock
    }

    pub fn clients(&self) -> Vec<ClientInfo> {
        self.shared
            .hub
            .lock()
            .clients
            .values()
            .map(|c| c.info.clone())
            .collect()
    }

    /// Union of every client's subscriptions.
    pub fn subscribed_topics(&self) -> BTreeMap<String, String> {
        let hub = self.shared.hub.lock();
        hub.clients
            .values()
            .flat_map(|c| c.info.subscriptions.clone())
            .collect()
    }

    pub fn status(&self) -> ScenarioStatus {
        self.shared.status.lock().clone()
    }

    /// Messages published so far, per topic.
    pub fn published(&self) -> BTreeMap<String, u64> {
        self.shared.published.lock().clone()
    }

    /// Publishes `msg` on `topic` as if the scenario had, for tests.
    pub fn inject(&self, topic: &str, msg: Value) {
        self.shared.publish(topic, msg);
    }

    /// Stops the scenario, closes every connection and releases the port.
    pub async fn shutdown(self) {
        let _ = self.stop.send(true);
        for t in self.tasks {
            let _ = t.await;
        }
        let clients = std::mem::take(&mut self.shared.hub.lock().clients);
        drop(clients);
        log::info!("mockros on {} stopped", self.local_addr);
    }
}

async fn accept_loop(shared: Arc<Shared>, listener: TcpListener, mut stop: watch::Receiver<bool>) {
    let mut conns = Vec::new();
    loop {
        let (stream, peer) = tokio::select! {
            _ = stop.changed() => break,
            r = listener.accept() => match r {
                Ok(c) => c,
                Err(e) => {
                    log::warn!("accept failed: {e}");
                    continue;
                }
            },
        };
        conns.retain(|h: &JoinHandle<()>| !h.is_finished());
        conns.push(tokio::spawn(client(shared.clone(), stream, peer, stop.clone())));
    }
    for mut c in conns {
        // Clients see the same stop signal and send a close frame first.
        if tokio::time::timeout(Duration::from_millis(500), &mut c).await.is_err() {
            c.abort();
        }
    }
}

async fn client(shared: Arc<Shared>, stream: TcpStream, peer: SocketAddr, mut stop: watch::Receiver<bool>) {
    let opening = match transport::sniff(&stream, Duration::from_millis(500)).await {
        Ok(o) => o,
        Err(e) => {
            log::debug!("{peer}: {e}");
            return;
        }
    };
    let (mut tx, mut rx) = match transport::accept(stream, &opening).await {
        Ok(c) => c,
        Err(e) => {
            log::debug!("{peer}: handshake failed: {e}");
            return;
        }
    };
    let (out_tx, mut out_rx) = mpsc::unbounded_channel::<Arc<str>>();
    let id = {
        let mut hub = shared.hub.lock();
        hub.next_id += 1;
        let id = hub.next_id;
        hub.clients.insert(
            id,
            Client {
                info: ClientInfo {
                    id,
                    peer: peer.to_string(),
                    subscriptions: BTreeMap::new(),
                    advertisements: BTreeMap::new(),
                },
                tx: out_tx.clone(),
            },
        );
        id
    };
    log::info!("client {id} connected from {peer} ({opening:?})");
    loop {
        tokio::select! {
            _ = stop.changed() => {
                tx.close("server shutting down").await;
                break;
            }
            out = out_rx.recv() => match out {
                Some(text) => {
                    if tx.send(&text).await.is_err() {
                        break;
                    }
                }
                None => break,
            },
            frame = rx.recv() => match frame {
                None | Some(Err(_)) => break,
                Some(Ok(Frame::Control)) => {}
                Some(Ok(Frame::Text(text))) => {
                    if let Some(reply) = handle_frame(&shared, id, &text) {
                        let _ = out_tx.send(reply.into());
                    }
                }
            },
        }
    }
    shared.hub.lock().clients.remove(&id);
    log::info!("client {id} disconnected");
}

fn status_reply(level: StatusLevel, msg: impl Into<String>, id: Option<&str>) -> String {
    let mut op = BridgeOp::status(level, msg);
    if let BridgeOp::Status(s) = &mut op {
        s.id = id.map(str::to_string);
    }
    encode_string(&op)
}

/// Applies one client frame; returns a reply for that client only, if any.
fn handle_frame(shared: &Shared, id: u64, text: &str) -> Option<String> {
    let op = match decode_str(text) {
        Ok(op) => op,
        Err(DecodeError::UnsupportedOp(name)) if name == "introspect" => {
            let clients: Vec<ClientInfo> = shared.hub.lock().clients.values().map(|c| c.info.clone()).collect();
            let body = json!({ "clients": clients }).to_string();
            return Some(status_reply(StatusLevel::Info, body, Some("introspect")));
        }
        Err(DecodeError::UnsupportedOp(name)) => {
            return Some(status_reply(
                StatusLevel::Error,
                format!("unsupported op {name:?}"),
                None,
            ));
        }
        Err(e) => return Some(status_reply(StatusLevel::Error, format!("bad request: {e}"), None)),
    };
    let mut hub = shared.hub.lock();
    let me = &mut hub.clients.get_mut(&id)?.info;
    match op {
        BridgeOp::Subscribe(s) => {
            me.subscriptions.insert(s.topic, s.msg_type.unwrap_or_default());
        }
        BridgeOp::Unsubscribe(u) => {
            me.subscriptions.remove(&u.topic);
        }
        BridgeOp::Advertise(a) => {
            me.advertisements.insert(a.topic, a.msg_type);
        }
        BridgeOp::Unadvertise(u) => {
            me.advertisements.remove(&u.topic);
        }
        BridgeOp::Publish(p) => {
            if !me.advertisements.contains_key(&p.topic) {
                return Some(status_reply(
                    StatusLevel::Warning,
                    format!("publish on {} without advertise", p.topic),
                    None,
                ));
            }
            drop(hub);
            let _ = shared.to_scenario.send((p.topic.clone(), p.msg.clone()));
            shared.publish(&p.topic, p.msg);
        }
        BridgeOp::Status(s) => log::info!("client {id} status ({:?}): {}", s.level, s.msg),
    }
    None
}

async fn scenario_loop(
    shared: Arc<Shared>,
    mut scenario: Scenario,
    clock: SimClock,
    period: Duration,
    mut inbound: mpsc::UnboundedReceiver<(String, Value)>,
    mut stop: watch::Receiver<bool>,
) {
    let mut tick = tokio::time::interval(period);
    tick.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
    loop {
        tokio::select! {
            _ = stop.changed() => return,
            _ = tick.tick() => {}
        }
        while let Ok((topic, msg)) = inbound.try_recv() {
            if let Err(e) = scenario.on_publish(&topic, &msg) {
                log::warn!("scenario rejected message on {topic}: {e}");
            }
        }
        match scenario.step(clock.elapsed()) {
            Ok(out) => {
                for e in out {
                    shared.publish(&e.topic, e.msg);
                }
            }
            Err(e) => log::error!("scenario produced an unencodable message: {e}"),
        }
        *shared.status.lock() = scenario.status().clone();
    }
}
