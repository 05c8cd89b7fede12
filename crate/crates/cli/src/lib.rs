//! Launcher for the visualization engine: configuration, wiring and replay scripts.

pub mod app;
pub mod config;
pub mod script;

pub use app::{App, AppError, AppOptions, Exit, Observer, TickReport};
pub use config::{Config, ConfigError, Overrides};
pub use script::{Script, ScriptError};
