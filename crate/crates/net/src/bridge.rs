//! rosbridge client.
//!
//! A supervisor task owns the socket. Incoming publishes are routed into one bounded queue
//! per subscription, each drained by its own dispatch task, so a slow handler never stalls
//! the reader or other topics. Subscriptions and advertisements are tracked so they can be
//! re-issued after a reconnect.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use holoviz_core::msgs::{decode_str, encode_string, BridgeOp, EncodeError, MessageKind, RosMessage, Status};
use parking_lot::Mutex;
use serde_json::Value;
use tokio::runtime::Handle;
use tokio::sync::{broadcast, mpsc, oneshot};

use crate::queue::DropOldest;
use crate::transport::{self, Endpoint, Frame, FrameRx, FrameTx};

#[derive(Debug, Clone)]
pub struct BridgeConfig {
    pub url: String,
    /// Attempts made by [`BridgeClient::connect`] before giving up.
    pub connect_attempts: u32,
    pub initial_backoff: Duration,
    pub max_backoff: Duration,
    /// Per-subscription queue depth.
    pub queue_depth: usize,
}

impl BridgeConfig {
    pub fn new(url: impl Into<String>) -> Self {
        Self {
            url: url.into(),
            connect_attempts: 5,
            initial_backoff: Duration::from_millis(500),
            max_backoff: Duration::from_secs(8),
            queue_depth: 64,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum BridgeError {
    #[error(transparent)]
    Endpoint(#[from] transport::EndpointError),
    #[error("could not connect to {url} after {attempts} attempts: {reason}")]
    ConnectRefused { url: String, attempts: u32, reason: String },
    #[error(transparent)]
    Encode(#[from] EncodeError),
    #[error("topic {topic} is already in use with type {existing}")]
    TypeConflict { topic: String, existing: String },
    #[error("bridge client is closed")]
    Closed,
}

/// Connection lifecycle and server notices, for display to the user.
#[derive(Debug, Clone, PartialEq)]
pub enum BridgeEvent {
    Connected {
        url: String,
    },
    Disconnected {
        reason: String,
    },
    /// A reconnect attempt failed; another follows after `retry_in`.
    RetryScheduled {
        attempt: u32,
        retry_in: Duration,
    },
    ServerStatus(Status),
}

/// Counters for the whole client.
#[derive(Debug, Default)]
pub struct BridgeStats {
    pub frames_in: AtomicU64,
    pub frames_out: AtomicU64,
    pub undecodable: AtomicU64,
    /// Publishes discarded because the socket was down.
    pub offline_drops: AtomicU64,
    pub reconnects: AtomicU64,
}

enum Cmd {
    Send(BridgeOp),
    Close,
}

type Handler = Box<dyn FnMut(Value) -> Result<(), String> + Send>;

struct Slot {
    id: u64,
    queue: DropOldest<Value>,
    mismatched: AtomicU64,
    delivered: AtomicU64,
}

struct TopicEntry {
    msg_type: String,
    slots: Vec<Arc<Slot>>,
}

#[derive(Default)]
struct State {
    topics: BTreeMap<String, TopicEntry>,
    adverts: BTreeMap<String, String>,
    next_id: u64,
    closed: bool,
}

struct Shared {
    state: Mutex<State>,
    connected: AtomicBool,
    stats: BridgeStats,
    events: broadcast::Sender<BridgeEvent>,
    queue_depth: usize,
}

impl Shared {
    /// Envelopes that recreate the current subscriptions and advertisements.
    fn replay(&self) -> Vec<BridgeOp> {
        let s = self.state.lock();
        let subs = s.topics.iter().map(|(t, e)| subscribe_op(t, &e.msg_type));
        let ads = s
            .adverts
            .iter()
            .map(|(t, ty)| BridgeOp::advertise(t.clone(), ty.clone()));
        subs.chain(ads).collect()
    }

    fn route(&self, topic: &str, msg: Value) {
        let s = self.state.lock();
        let Some(entry) = s.topics.get(topic) else {
            log::debug!("publish on unsubscribed topic {topic}");
            return;
        };
        match entry.slots.as_slice() {
            [only] => {
                only.queue.push(msg);
            }
            many => {
                for slot in many {
                    slot.queue.push(msg.clone());
                }
            }
        }
    }

    fn emit(&self, ev: BridgeEvent) {
        let _ = self.events.send(ev);
    }
}

fn subscribe_op(topic: &str, msg_type: &str) -> BridgeOp {
    let mut op = BridgeOp::subscribe(topic, msg_type);
    if let BridgeOp::Subscribe(s) = &mut op {
        s.id = Some(format!("subscribe:{topic}"));
    }
    op
}

/// Handle to a live rosbridge connection. Cheap to clone; every method may be called from
/// any thread.
#[derive(Clone)]
pub struct BridgeClient {
    shared: Arc<Shared>,
    cmd: mpsc::UnboundedSender<Cmd>,
    runtime: Handle,
    url: String,
}

impl BridgeClient {
    /// Connects, retrying with backoff up to `connect_attempts` times. Once connected the
    /// client reconnects on its own whenever the socket drops.
    pub async fn connect(config: BridgeConfig) -> Result<BridgeClient, BridgeError> {
        let ep: Endpoint = config.url.parse()?;
        let (events, _) = broadcast::channel(256);
        let shared = Arc::new(Shared {
            state: Mutex::new(State::default()),
            connected: AtomicBool::new(false),
            stats: BridgeStats::default(),
            events,
            queue_depth: config.queue_depth.max(1),
        });
        let (cmd_tx, cmd_rx) = mpsc::unbounded_channel();
        let (ready_tx, ready_rx) = oneshot::channel();
        tokio::spawn(supervise(shared.clone(), ep, config.clone(), cmd_rx, ready_tx));
        ready_rx.await.map_err(|_| BridgeError::Closed)??;
        Ok(BridgeClient {
            shared,
            cmd: cmd_tx,
            runtime: Handle::current(),
            url: config.url,
        })
    }

    pub fn url(&self) -> &str {
        &self.url
    }

    pub fn is_connected(&self) -> bool {
        self.shared.connected.load(Ordering::Acquire)
    }

    pub fn events(&self) -> broadcast::Receiver<BridgeEvent> {
        self.shared.events.subscribe()
    }

    pub fn stats(&self) -> &BridgeStats {
        &self.shared.stats
    }

    /// Topics currently subscribed, with their ROS type names.
    pub fn subscriptions(&self) -> BTreeMap<String, String> {
        let s = self.shared.state.lock();
        s.topics.iter().map(|(t, e)| (t.clone(), e.msg_type.clone())).collect()
    }

    pub fn advertisements(&self) -> BTreeMap<String, String> {
        self.shared.state.lock().adverts.clone()
    }

    fn send(&self, op: BridgeOp) -> Result<(), BridgeError> {
        self.cmd.send(Cmd::Send(op)).map_err(|_| BridgeError::Closed)
    }

    /// Subscribes `handler` to `topic`, decoding each payload as `M`. Payloads that fail to
    /// decode are dropped and counted on the handle.
    pub fn subscribe<M, F>(&self, topic: &str, mut handler: F) -> Result<SubscriptionHandle, BridgeError>
    where
        M: RosMessage + 'static,
        F: FnMut(M) + Send + 'static,
    {
        self.subscribe_with(
            topic,
            M::TYPE,
            Box::new(move |v| {
                let m = M::from_json(&v).map_err(|e| e.to_string())?;
                handler(m);
                Ok(())
            }),
        )
    }

    /// Subscribes with a handler taking the raw payload, after it validates as `kind`.
    pub fn subscribe_value<F>(
        &self,
        topic: &str,
        kind: MessageKind,
        mut handler: F,
    ) -> Result<SubscriptionHandle, BridgeError>
    where
        F: FnMut(Value) + Send + 'static,
    {
        self.subscribe_with(
            topic,
            kind.type_name(),
            Box::new(move |v| {
                kind.validate(&v).map_err(|e| e.to_string())?;
                handler(v);
                Ok(())
            }),
        )
    }

    fn subscribe_with(
        &self,
        topic: &str,
        msg_type: &str,
        mut handler: Handler,
    ) -> Result<SubscriptionHandle, BridgeError> {
        let slot;
        {
            let mut s = self.shared.state.lock();
            if s.closed {
                return Err(BridgeError::Closed);
            }
            if let Some(entry) = s.topics.get(topic) {
                if entry.msg_type != msg_type {
                    return Err(BridgeError::TypeConflict {
                        topic: topic.into(),
                        existing: entry.msg_type.clone(),
                    });
                }
            }
            s.next_id += 1;
            slot = Arc::new(Slot {
                id: s.next_id,
                queue: DropOldest::new(self.shared.queue_depth),
                mismatched: AtomicU64::new(0),
                delivered: AtomicU64::new(0),
            });
            let fresh = !s.topics.contains_key(topic);
            s.topics
                .entry(topic.to_string())
                .or_insert_with(|| TopicEntry {
                    msg_type: msg_type.to_string(),
                    slots: Vec::new(),
                })
                .slots
                .push(slot.clone());
            if fresh {
                self.send(subscribe_op(topic, msg_type))?;
            }
        }
        let worker = slot.clone();
        let name = topic.to_string();
        self.runtime.spawn(async move {
            while let Some(v) = worker.queue.pop().await {
                match handler(v) {
                    Ok(()) => {
                        worker.delivered.fetch_add(1, Ordering::Relaxed);
                    }
                    Err(e) => {
                        worker.mismatched.fetch_add(1, Ordering::Relaxed);
                        log::warn!("dropping message on {name}: {e}");
                    }
                }
            }
        });
        Ok(SubscriptionHandle {
            client: self.clone(),
            topic: topic.to_string(),
            slot,
        })
    }

    fn unsubscribe_slot(&self, topic: &str, id: u64) {
        let mut s = self.shared.state.lock();
        let Some(entry) = s.topics.get_mut(topic) else { return };
        entry.slots.retain(|slot| {
            if slot.id == id {
                slot.queue.close();
                false
            } else {
                true
            }
        });
        if entry.slots.is_empty() {
            s.topics.remove(topic);
            let _ = self.send(BridgeOp::unsubscribe(topic));
        }
    }

    /// Advertises `topic` on first use, then publishes `msg` on it.
    pub fn advertise_publish<M: RosMessage>(&self, topic: &str, msg: &M) -> Result<(), BridgeError> {
        let value = msg.to_json()?;
        self.publish_value(topic, M::TYPE, value)
    }

    /// Like [`advertise_publish`](Self::advertise_publish) for an already encoded payload.
    pub fn publish_value(&self, topic: &str, msg_type: &str, msg: Value) -> Result<(), BridgeError> {
        {
            let mut s = self.shared.state.lock();
            if s.closed {
                return Err(BridgeError::Closed);
            }
            match s.adverts.get(topic) {
                Some(existing) if existing != msg_type => {
                    return Err(BridgeError::TypeConflict {
                        topic: topic.into(),
                        existing: existing.clone(),
                    })
                }
                Some(_) => {}
                None => {
                    s.adverts.insert(topic.to_string(), msg_type.to_string());
                    self.send(BridgeOp::advertise(topic, msg_type))?;
                }
            }
        }
        self.send(BridgeOp::publish(topic, msg))
    }

    pub fn unadvertise(&self, topic: &str) -> Result<(), BridgeError> {
        if self.shared.state.lock().adverts.remove(topic).is_some() {
            self.send(BridgeOp::unadvertise(topic))?;
        }
        Ok(())
    }

    /// Closes the socket and stops reconnecting. Pending handler queues are drained first.
    pub fn close(&self) {
        let mut s = self.shared.state.lock();
        s.closed = true;
        for entry in s.topics.values() {
            for slot in &entry.slots {
                slot.queue.close();
            }
        }
        let _ = self.cmd.send(Cmd::Close);
    }
}

/// A live subscription. Dropping the handle leaves the subscription in place; call
/// [`unsubscribe`](Self::unsubscribe) to end it.
pub struct SubscriptionHandle {
    client: BridgeClient,
    topic: String,
    slot: Arc<Slot>,
}

impl SubscriptionHandle {
    pub fn topic(&self) -> &str {
        &self.topic
    }

    /// Payloads that failed to decode as the subscribed type.
    pub fn type_mismatches(&self) -> u64 {
        self.slot.mismatched.load(Ordering::Relaxed)
    }

    /// Payloads discarded because the handler fell more than the queue depth behind.
    pub fn overflowed(&self) -> u64 {
        self.slot.queue.evicted()
    }

    pub fn delivered(&self) -> u64 {
        self.slot.delivered.load(Ordering::Relaxed)
    }

    pub fn unsubscribe(self) {
        self.client.unsubscribe_slot(&self.topic, self.slot.id);
    }
}

enum Ended {
    Dropped(String),
    Closed,
}

async fn supervise(
    shared: Arc<Shared>,
    ep: Endpoint,
    cfg: BridgeConfig,
    mut cmd_rx: mpsc::UnboundedReceiver<Cmd>,
    ready: oneshot::Sender<Result<(), BridgeError>>,
) {
    let url = ep.to_string();
    let mut backoff = cfg.initial_backoff;
    let mut attempts = 0;
    let mut conn = loop {
        attempts += 1;
        match transport::connect(&ep).await {
            Ok(c) => break c,
            Err(e) if attempts >= cfg.connect_attempts.max(1) => {
                let _ = ready.send(Err(BridgeError::ConnectRefused {
                    url,
                    attempts,
                    reason: e.to_string(),
                }));
                return;
            }
            Err(e) => {
                log::info!("connect to {url} failed ({e}); retrying in {backoff:?}");
                tokio::time::sleep(backoff).await;
                backoff = (backoff * 2).min(cfg.max_backoff);
            }
        }
    };
    let _ = ready.send(Ok(()));
    loop {
        shared.connected.store(true, Ordering::Release);
        shared.emit(BridgeEvent::Connected { url: url.clone() });
        log::info!("connected to {url}");
        let ended = serve(&shared, conn, &mut cmd_rx).await;
        shared.connected.store(false, Ordering::Release);
        let reason = match ended {
            Ended::Closed => return,
            Ended::Dropped(r) => r,
        };
        log::warn!("connection to {url} lost: {reason}");
        shared.emit(BridgeEvent::Disconnected { reason });

        let mut backoff = cfg.initial_backoff;
        let mut attempt = 0;
        conn = loop {
            attempt += 1;
            let sleep = tokio::time::sleep(backoff);
            tokio::pin!(sleep);
            // discard traffic queued while offline; subscriptions are replayed on reconnect
            loop {
                tokio::select! {
                    _ = &mut sleep => break,
                    cmd = cmd_rx.recv() => match cmd {
                        None | Some(Cmd::Close) => return,
                        Some(Cmd::Send(BridgeOp::Publish(_))) => {
                            shared.stats.offline_drops.fetch_add(1, Ordering::Relaxed);
                        }
                        Some(Cmd::Send(_)) => {}
                    },
                }
            }
            match transport::connect(&ep).await {
                Ok(c) => break c,
                Err(e) => {
                    log::debug!("reconnect attempt {attempt} failed: {e}");
                    backoff = (backoff * 2).min(cfg.max_backoff);
                    shared.emit(BridgeEvent::RetryScheduled {
                        attempt,
                        retry_in: backoff,
                    });
                }
            }
        };
        shared.stats.reconnects.fetch_add(1, Ordering::Relaxed);
    }
}

async fn serve(
    shared: &Shared,
    (mut tx, mut rx): (FrameTx, FrameRx),
    cmd_rx: &mut mpsc::UnboundedReceiver<Cmd>,
) -> Ended {
    for op in shared.replay() {
        if let Err(e) = tx.send(&encode_string(&op)).await {
            return Ended::Dropped(e.to_string());
        }
        shared.stats.frames_out.fetch_add(1, Ordering::Relaxed);
    }
    loop {
        tokio::select! {
            frame = rx.recv() => match frame {
                None => return Ended::Dropped("server closed the connection".into()),
                Some(Err(e)) => return Ended::Dropped(e.to_string()),
                Some(Ok(Frame::Control)) => {}
                Some(Ok(Frame::Text(text))) => {
                    shared.stats.frames_in.fetch_add(1, Ordering::Relaxed);
                    match decode_str(&text) {
                        Ok(BridgeOp::Publish(p)) => shared.route(&p.topic, p.msg),
                        Ok(BridgeOp::Status(s)) => {
                            log::info!("server status ({:?}): {}", s.level, s.msg);
                            shared.emit(BridgeEvent::ServerStatus(s));
                        }
                        Ok(other) => log::debug!("ignoring {} from server", other.op_name()),
                        Err(e) => {
                            shared.stats.undecodable.fetch_add(1, Ordering::Relaxed);
                            log::warn!("undecodable frame from server: {e}");
                        }
                    }
                }
            },
            cmd = cmd_rx.recv() => match cmd {
                None | Some(Cmd::Close) => {
                    tx.close("client closing").await;
                    return Ended::Closed;
                }
                Some(Cmd::Send(op)) => {
                    if let Err(e) = tx.send(&encode_string(&op)).await {
                        if matches!(op, BridgeOp::Publish(_)) {
                            shared.stats.offline_drops.fetch_add(1, Ordering::Relaxed);
                        }
                        return Ended::Dropped(e.to_string());
                    }
                    shared.stats.frames_out.fetch_add(1, Ordering::Relaxed);
                }
            },
        }
    }
}
