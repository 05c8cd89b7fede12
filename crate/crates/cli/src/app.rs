//! Composition root: bridge, engine and session server wired into one tick loop.
//!
//! Startup goes bridge, then plugins and their subscriptions, then sessions. Shutdown runs
//! in reverse. The engine lives on its own thread and ticks at `tick_hz`; everything else
//! talks to it through its inbox.

use std::collections::{BTreeMap, BTreeSet};
use std::net::SocketAddr;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use holoviz_core::engine::Engine;
use holoviz_core::msgs::{MessageKind, PoseStamped, RosMessage, StatusLevel};
use holoviz_core::plugins::{Outgoing, RegistryError, StatusNotice};
use holoviz_core::scene::{SceneDiff, Snapshot};
use holoviz_core::Stamp;
use holoviz_net::session::{SessionConfig, SessionServer};
use holoviz_net::{BridgeClient, BridgeConfig, BridgeError, BridgeEvent, SubscriptionHandle};
use parking_lot::Mutex;
use serde_json::Value;
use tokio::sync::watch;

use crate::config::{Config, ConfigError};
use crate::script::{Action, EndWhen, GoalReached, Player, Script};

#[derive(Debug, thiserror::Error)]
pub enum AppError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Bridge(#[from] BridgeError),
    #[error("plugin setup failed: {0}")]
    Plugin(#[from] RegistryError),
    #[error("cannot open session port: {0}")]
    Session(std::io::Error),
}

/// What one tick produced, handed to the observer.
pub struct TickReport<'a> {
    pub epoch: u64,
    pub at: Instant,
    pub diff: &'a SceneDiff,
    /// The engine's scene after this tick.
    pub scene: &'a Snapshot,
    /// Topics of the bridge messages this tick consumed (or, rarely, that arrived just after).
    pub received: &'a [String],
    pub outgoing: &'a [Outgoing],
    pub statuses: &'a [StatusNotice],
}

pub type Observer = Arc<dyn Fn(&TickReport<'_>) + Send + Sync>;

pub struct AppOptions {
    /// Run without the session server.
    pub headless: bool,
    pub script: Option<Script>,
    /// Script seconds per wall-clock second.
    pub time_scale: f64,
    pub connect_attempts: u32,
    pub observer: Option<Observer>,
}

impl Default for AppOptions {
    fn default() -> Self {
        Self {
            headless: false,
            script: None,
            time_scale: 1.0,
            connect_attempts: 5,
            observer: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Exit {
    /// Stopped from outside.
    Stopped,
    /// The script's end event was satisfied.
    ScriptEnded,
    ScriptTimedOut(String),
}

impl Exit {
    pub fn is_success(&self) -> bool {
        !matches!(self, Exit::ScriptTimedOut(_))
    }
}

pub struct App {
    bridge: BridgeClient,
    sessions: Option<Arc<SessionServer>>,
    forwarder: Option<tokio::task::JoinHandle<()>>,
    stop: Arc<AtomicBool>,
    ticker: Option<JoinHandle<()>>,
    exit: watch::Receiver<Option<Exit>>,
}

fn wall_stamp() -> Stamp {
    let d = SystemTime::now().duration_since(UNIX_EPOCH).unwrap_or_default();
    Stamp::new(d.as_secs() as u32, d.subsec_nanos())
}

impl App {
    pub async fn start(config: Config, opts: AppOptions) -> Result<App, AppError> {
        config.validate()?;
        let mut bridge_cfg = BridgeConfig::new(config.bridge_url.clone());
        bridge_cfg.connect_attempts = opts.connect_attempts;
        let bridge = BridgeClient::connect(bridge_cfg).await?;
        log::info!("bridge connected to {}", config.bridge_url);

        let mut engine = Engine::new(config.engine_config());
        for p in &config.plugins {
            engine.register(p.clone())?;
        }
        let watch_topic = opts.script.as_ref().and_then(|s| match s.end().map(|e| &e.action) {
            Some(Action::End(EndWhen::GoalReached(g))) => Some(g.pose_topic.clone()),
            _ => None,
        });
        let mut wiring = Wiring {
            bridge: bridge.clone(),
            handles: BTreeMap::new(),
            adverts: BTreeSet::new(),
            received: Arc::new(Mutex::new(Vec::new())),
            latest_pose: Arc::new(Mutex::new(None)),
            pose_watch: None,
        };
        wiring.sync(&engine)?;
        if let Some(topic) = watch_topic {
            let latest = wiring.latest_pose.clone();
            wiring.pose_watch = Some(bridge.subscribe::<PoseStamped, _>(&topic, move |p| *latest.lock() = Some(p))?);
        }

        let sessions = if opts.headless {
            None
        } else {
            let cfg = SessionConfig {
                bind: SocketAddr::from(([0, 0, 0, 0], config.session_port)),
                assets_dir: config.assets_dir.clone(),
                ..SessionConfig::default()
            };
            let server = SessionServer::bind_with_scene(cfg, engine.inbox(), engine.scene().snapshot().clone())
                .await
                .map_err(AppError::Session)?;
            server.broadcast_plugins(engine.registry().plugins());
            log::info!("viewer sessions on {}", server.local_addr());
            Some(Arc::new(server))
        };
        let forwarder = sessions
            .as_ref()
            .map(|s| tokio::spawn(forward_bridge_events(bridge.events(), s.clone())));

        let stop = Arc::new(AtomicBool::new(false));
        let (exit_tx, exit) = watch::channel(None);
        let ticker = Ticker {
            engine,
            wiring,
            sessions: sessions.clone(),
            player: opts.script.map(Player::new),
            time_scale: opts.time_scale,
            period: Duration::from_secs_f64(1.0 / config.tick_hz),
            observer: opts.observer,
            stop: stop.clone(),
            exit: exit_tx,
            last_goal: None,
            waiting: None,
        };
        let ticker = std::thread::Builder::new()
            .name("engine-tick".into())
            .spawn(move || ticker.run())
            .expect("spawn tick thread");
        Ok(App {
            bridge,
            sessions,
            forwarder,
            stop,
            ticker: Some(ticker),
            exit,
        })
    }

    pub fn bridge(&self) -> &BridgeClient {
        &self.bridge
    }

    pub fn session_addr(&self) -> Option<SocketAddr> {
        self.sessions.as_ref().map(|s| s.local_addr())
    }

    /// Resolves once the script has ended, or never without an end event.
    pub async fn finished(&mut self) -> Exit {
        match self.exit.wait_for(Option::is_some).await {
            Ok(v) => v.clone().expect("waited for Some"),
            Err(_) => Exit::Stopped,
        }
    }

    /// Stops sessions, then the engine, then the bridge.
    pub async fn shutdown(mut self) -> Exit {
        if let Some(f) = self.forwarder.take() {
            f.abort();
            let _ = f.await;
        }
        self.stop.store(true, Ordering::Release);
        if let Some(t) = self.ticker.take() {
            let _ = tokio::task::spawn_blocking(move || t.join()).await;
        }
        if let Some(s) = self.sessions.take() {
            match Arc::try_unwrap(s) {
                Ok(server) => server.shutdown().await,
                Err(_) => log::warn!("session server still referenced at shutdown"),
            }
        }
        self.bridge.close();
        let exit = self.exit.borrow().clone();
        exit.unwrap_or(Exit::Stopped)
    }
}

async fn forward_bridge_events(
    mut events: tokio::sync::broadcast::Receiver<BridgeEvent>,
    sessions: Arc<SessionServer>,
) {
    use tokio::sync::broadcast::error::RecvError;
    loop {
        let ev = match events.recv().await {
            Ok(ev) => ev,
            Err(RecvError::Lagged(_)) => continue,
            Err(RecvError::Closed) => return,
        };
        let notice = match ev {
            BridgeEvent::Connected { url } => {
                StatusNotice::new(StatusLevel::Info, "bridge", format!("connected to {url}"))
            }
            BridgeEvent::Disconnected { reason } => {
                StatusNotice::new(StatusLevel::Warning, "bridge", format!("connection lost: {reason}"))
            }
            BridgeEvent::RetryScheduled { attempt, retry_in } => StatusNotice::new(
                StatusLevel::Warning,
                "bridge",
                format!("reconnect attempt {attempt} failed, retrying in {retry_in:?}"),
            ),
            BridgeEvent::ServerStatus(s) => StatusNotice::new(s.level, "rosbridge", s.msg),
        };
        sessions.broadcast_status(&notice);
    }
}

/// Keeps bridge subscriptions and advertisements in line with the registry.
struct Wiring {
    bridge: BridgeClient,
    handles: BTreeMap<(String, MessageKind), SubscriptionHandle>,
    adverts: BTreeSet<String>,
    received: Arc<Mutex<Vec<String>>>,
    latest_pose: Arc<Mutex<Option<PoseStamped>>>,
    pose_watch: Option<SubscriptionHandle>,
}

impl Wiring {
    fn sync(&mut self, engine: &Engine) -> Result<(), BridgeError> {
        let wanted = engine.subscriptions();
        let stale: Vec<_> = self.handles.keys().filter(|k| !wanted.contains(*k)).cloned().collect();
        for key in stale {
            if let Some(h) = self.handles.remove(&key) {
                log::info!("unsubscribing {}", key.0);
                h.unsubscribe();
            }
        }
        for (topic, kind) in wanted {
            let key = (topic.clone(), kind);
            if self.handles.contains_key(&key) {
                continue;
            }
            let inbox = engine.inbox();
            let received = self.received.clone();
            let t = topic.clone();
            let handle = self.bridge.subscribe_value(&topic, kind, move |msg: Value| {
                received.lock().push(t.clone());
                inbox.post_message(t.clone(), msg);
            })?;
            log::info!("subscribed {topic} as {}", kind.type_name());
            self.handles.insert(key, handle);
        }
        let advertised: BTreeSet<String> = engine.advertisements().into_iter().map(|(t, _)| t).collect();
        for gone in self.adverts.difference(&advertised) {
            self.bridge.unadvertise(gone)?;
        }
        self.adverts = advertised;
        Ok(())
    }
}

struct Ticker {
    engine: Engine,
    wiring: Wiring,
    sessions: Option<Arc<SessionServer>>,
    player: Option<Player>,
    time_scale: f64,
    period: Duration,
    observer: Option<Observer>,
    stop: Arc<AtomicBool>,
    exit: watch::Sender<Option<Exit>>,
    last_goal: Option<PoseStamped>,
    /// Goal-reached condition and its script-time deadline.
    waiting: Option<(GoalReached, f64)>,
}

impl Ticker {
    fn run(mut self) {
        let start = Instant::now();
        let mut next = start;
        while !self.stop.load(Ordering::Acquire) {
            let now = Instant::now();
            if next > now {
                std::thread::sleep(next - now);
            }
            next += self.period;
            // after a stall, resume the schedule instead of bursting to catch up
            if Instant::now() > next + self.period {
                next = Instant::now() + self.period;
            }
            let script_t = start.elapsed().as_secs_f64() * self.time_scale;
            self.feed_script(script_t);
            self.tick();
            if self.exit.borrow().is_none() {
                if let Some(exit) = self.check_end(script_t) {
                    log::info!("script finished: {exit:?}");
                    self.exit.send_replace(Some(exit));
                }
            }
        }
    }

    fn feed_script(&mut self, script_t: f64) {
        let Some(player) = self.player.as_mut() else { return };
        let inbox = self.engine.inbox();
        for ev in player.due(script_t) {
            match ev.action {
                Action::Input(input) => inbox.post_input(input),
                Action::Detection(det) => inbox.post_detection(det),
                Action::End(EndWhen::Now(_)) => {
                    self.exit.send_replace(Some(Exit::ScriptEnded));
                }
                Action::End(EndWhen::GoalReached(g)) => {
                    let deadline = ev.t + g.timeout;
                    self.waiting = Some((g, deadline));
                }
            }
        }
    }

    fn check_end(&self, script_t: f64) -> Option<Exit> {
        let (cond, deadline) = self.waiting.as_ref()?;
        let goal = self.last_goal.as_ref();
        let pose = self.wiring.latest_pose.lock().clone();
        if let (Some(goal), Some(pose)) = (goal, pose) {
            let (g, p) = (goal.pose.translation, pose.pose.translation);
            let d = ((g.x - p.x).powi(2) + (g.y - p.y).powi(2)).sqrt();
            if d <= cond.tolerance {
                return Some(Exit::ScriptEnded);
            }
        }
        (script_t > *deadline).then(|| {
            Exit::ScriptTimedOut(match goal {
                None => "no goal was published".into(),
                Some(_) => format!("robot not within {} m of the goal in time", cond.tolerance),
            })
        })
    }

    fn tick(&mut self) {
        let out = self.engine.tick(wall_stamp());
        let received = std::mem::take(&mut *self.wiring.received.lock());
        if let Some(s) = &self.sessions {
            if let Err(e) = s.broadcast_diff(&out.diff) {
                log::error!("session scene out of step: {e}");
            }
        }
        for o in &out.outgoing {
            if o.kind == MessageKind::PoseStamped {
                if let Ok(goal) = PoseStamped::from_json(&o.msg) {
                    self.last_goal = Some(goal);
                }
            }
            if let Err(e) = self
                .wiring
                .bridge
                .publish_value(&o.topic, o.kind.type_name(), o.msg.clone())
            {
                log::warn!("publish on {} failed: {e}", o.topic);
            }
        }
        for s in &out.statuses {
            match s.level {
                StatusLevel::Error => log::error!("[{}] {}", s.source, s.message),
                StatusLevel::Warning => log::warn!("[{}] {}", s.source, s.message),
                _ => log::info!("[{}] {}", s.source, s.message),
            }
            if let Some(sessions) = &self.sessions {
                sessions.broadcast_status(s);
            }
        }
        if out.registry_changed {
            if let Err(e) = self.wiring.sync(&self.engine) {
                log::error!("resubscribe failed: {e}");
            }
            if let Some(s) = &self.sessions {
                s.broadcast_plugins(self.engine.registry().plugins());
            }
        }
        if let Some(observe) = &self.observer {
            observe(&TickReport {
                epoch: out.diff.epoch,
                at: Instant::now(),
                diff: &out.diff,
                scene: self.engine.scene().snapshot(),
                received: &received,
                outgoing: &out.outgoing,
                statuses: &out.statuses,
            });
        }
    }
}
