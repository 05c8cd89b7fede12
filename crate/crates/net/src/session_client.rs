//! Rust viewer-side session client: folds the diff stream the same way a UI does.

use holoviz_core::plugins::{InputEvent, PluginInfo, StatusNotice};
use holoviz_core::scene::{SceneError, Snapshot};

use crate::session::SessionMessage;
use crate::transport::{self, Endpoint, Frame, FrameRx, FrameTx, Scheme, TransportError};

#[derive(Debug, thiserror::Error)]
pub enum SessionClientError {
    #[error(transparent)]
    Endpoint(#[from] transport::EndpointError),
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error("sessions use ws:// endpoints")]
    NotWebSocket,
    #[error("unreadable message from server: {0}")]
    Protocol(String),
}

/// What one received message did to the local view.
#[derive(Debug, Clone, PartialEq)]
pub enum Update {
    /// A diff was applied; the view is now at `epoch`.
    Applied {
        epoch: u64,
        reset: bool,
    },
    /// A diff did not follow on; a resync has been requested and the view is unchanged.
    Gap(SceneError),
    Status(StatusNotice),
    Plugins(Vec<PluginInfo>),
}

pub struct SessionClient {
    tx: FrameTx,
    rx: FrameRx,
    /// Scene folded from every diff received so far.
    pub view: Snapshot,
    pub plugins: Vec<PluginInfo>,
    /// Digest carried by the last applied diff, if the server sent one.
    pub last_digest: String,
}

impl SessionClient {
    pub async fn connect(url: &str) -> Result<SessionClient, SessionClientError> {
        let ep: Endpoint = url.parse()?;
        if ep.scheme != Scheme::Ws {
            return Err(SessionClientError::NotWebSocket);
        }
        let (tx, rx) = transport::connect(&ep).await?;
        Ok(SessionClient {
            tx,
            rx,
            view: Snapshot::new(),
            plugins: Vec::new(),
            last_digest: String::new(),
        })
    }

    pub async fn send(&mut self, msg: &SessionMessage) -> Result<(), SessionClientError> {
        Ok(self.tx.send(&msg.to_text()).await?)
    }

    pub async fn send_input(&mut self, ev: InputEvent) -> Result<(), SessionClientError> {
        self.send(&SessionMessage::Input(ev)).await
    }

    pub async fn request_resync(&mut self) -> Result<(), SessionClientError> {
        self.send(&SessionMessage::Resync).await
    }

    /// Receives and applies the next server message. `None` once the server has closed.
    pub async fn next(&mut self) -> Option<Result<Update, SessionClientError>> {
        loop {
            let text = match self.rx.recv().await? {
                Ok(Frame::Text(t)) => t,
                Ok(Frame::Control) => continue,
                Err(e) => return Some(Err(e.into())),
            };
            let msg = match serde_json::from_str::<SessionMessage>(&text) {
                Ok(m) => m,
                Err(e) => return Some(Err(SessionClientError::Protocol(e.to_string()))),
            };
            return Some(Ok(match msg {
                SessionMessage::Diff(diff) => match self.view.apply_diff(&diff) {
                    Ok(()) => {
                        self.last_digest = diff.digest;
                        Update::Applied {
                            epoch: diff.epoch,
                            reset: diff.reset,
                        }
                    }
                    Err(gap) => {
                        if let Err(e) = self.request_resync().await {
                            return Some(Err(e));
                        }
                        Update::Gap(gap)
                    }
                },
                SessionMessage::Status(s) => Update::Status(s),
                SessionMessage::Plugins(p) => {
                    self.plugins = p.clone();
                    Update::Plugins(p)
                }
                other => {
                    return Some(Err(SessionClientError::Protocol(format!(
                        "client-only message from server: {other:?}"
                    ))))
                }
            }));
        }
    }

    /// Whether the folded view hashes to the digest the server sent with the last diff.
    pub fn digest_matches(&self) -> bool {
        self.last_digest.is_empty() || self.view.digest() == self.last_digest
    }

    pub async fn close(mut self) {
        self.tx.close("bye").await;
    }
}
