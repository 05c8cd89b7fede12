use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use holoviz::{App, AppOptions, Config, Exit, Overrides, Script};

/// Runs the visualization engine against a rosbridge server.
#[derive(Debug, Parser)]
#[command(name = "holoviz", version)]
struct Args {
    /// JSON config file. Falls back to $HOLOVIZ_CONFIG, then built-in defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// rosbridge endpoint, ws://host:port or tcp://host:port.
    #[arg(long)]
    url: Option<String>,
    #[arg(long)]
    session_port: Option<u16>,
    /// Run without the viewer session server.
    #[arg(long)]
    headless: bool,
    /// Replay recorded input events from this file.
    #[arg(long)]
    script: Option<PathBuf>,
    /// Script seconds per wall-clock second.
    #[arg(long, default_value_t = 1.0)]
    time_scale: f64,
    #[arg(long)]
    log_level: Option<String>,
}

fn load(args: &Args) -> Result<(Config, Option<Script>), String> {
    let path = args
        .config
        .clone()
        .or_else(|| std::env::var_os("HOLOVIZ_CONFIG").map(PathBuf::from));
    let mut config = match &path {
        Some(p) => Config::load(p).map_err(|e| format!("config {}: {e}", p.display()))?,
        None => Config::default(),
    };
    let overrides = Overrides {
        bridge_url: args.url.clone(),
        session_port: args.session_port,
        log_level: args.log_level.clone(),
    };
    config.apply(&overrides).map_err(|e| format!("config: {e}"))?;
    if !(args.time_scale.is_finite() && args.time_scale > 0.0) {
        return Err("--time-scale must be positive".into());
    }
    let script = match &args.script {
        Some(p) => Some(Script::load(p).map_err(|e| format!("script {}: {e}", p.display()))?),
        None => None,
    };
    Ok((config, script))
}

#[tokio::main]
async fn main() -> ExitCode {
    let args = Args::parse();
    let (config, script) = match load(&args) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("holoviz: {e}");
            return ExitCode::from(2);
        }
    };
    env_logger::Builder::new().parse_filters(&config.log_level).init();
    let has_end = script.as_ref().is_some_and(|s| s.end().is_some());
    let opts = AppOptions {
        headless: args.headless,
        script,
        time_scale: args.time_scale,
        ..AppOptions::default()
    };
    let mut app = match App::start(config, opts).await {
        Ok(app) => app,
        Err(e) => {
            eprintln!("holoviz: {e}");
            return ExitCode::FAILURE;
        }
    };
    tokio::select! {
        r = tokio::signal::ctrl_c() => {
            if let Err(e) = r {
                log::error!("cannot wait for signal: {e}");
            }
        }
        exit = app.finished(), if has_end => log::info!("{exit:?}"),
    }
    match app.shutdown().await {
        Exit::ScriptTimedOut(why) => {
            eprintln!("holoviz: script failed: {why}");
            ExitCode::FAILURE
        }
        _ => ExitCode::SUCCESS,
    }
}
