//! Networking for the holoviz engine: the rosbridge client that feeds it and the session
//! server that streams its scene to viewers.

pub mod bridge;
pub mod queue;
pub mod session;
pub mod session_client;
pub mod transport;

pub use bridge::{BridgeClient, BridgeConfig, BridgeError, BridgeEvent, SubscriptionHandle};
pub use session::{SessionConfig, SessionEvent, SessionMessage, SessionServer};
pub use session_client::SessionClient;
pub use transport::Endpoint;
