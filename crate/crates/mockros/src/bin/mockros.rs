use std::net::SocketAddr;
use std::process::ExitCode;

use clap::Parser;
use holoviz_mockros::{MockServer, ScenarioName, ScenarioScript, ServerConfig};

/// Mock rosbridge server running a scripted robot.
#[derive(Debug, Parser)]
#[command(name = "mockros", version)]
struct Args {
    /// nav, occluded_intent or handover.
    #[arg(long, default_value = "nav")]
    scenario: ScenarioName,
    #[arg(long, default_value = "0.0.0.0:9090")]
    bind: SocketAddr,
    /// Robot speed in m/s.
    #[arg(long, default_value_t = 0.5)]
    speed: f64,
    /// Simulated seconds per wall-clock second.
    #[arg(long, default_value_t = 1.0)]
    time_scale: f64,
    /// /tf broadcast rate in simulated Hz.
    #[arg(long, default_value_t = 30.0)]
    tf_rate: f64,
    #[arg(long, default_value = "info")]
    log_level: String,
}

#[tokio::main]
async fn main() -> ExitCode {
    let args = Args::parse();
    env_logger::Builder::new().parse_filters(&args.log_level).init();
    if !(args.time_scale > 0.0 && args.time_scale.is_finite()) {
        eprintln!("mockros: --time-scale must be positive");
        return ExitCode::from(2);
    }
    let mut script = ScenarioScript::new(args.scenario);
    script.robot.speed = args.speed;
    script.tf_rate_hz = args.tf_rate;
    let mut cfg = ServerConfig::new(args.bind, script);
    cfg.time_scale = args.time_scale;
    let server = match MockServer::start(cfg).await {
        Ok(s) => s,
        Err(e) => {
            eprintln!("mockros: {e}");
            return ExitCode::FAILURE;
        }
    };
    println!("mockros listening on {}", server.local_addr());
    if let Err(e) = tokio::signal::ctrl_c().await {
        eprintln!("mockros: cannot wait for signal: {e}");
    }
    server.shutdown().await;
    ExitCode::SUCCESS
}
