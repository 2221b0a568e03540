//! `multimapper`: build Mappers, diagnose them, and rescale regions.
//!
//! Exit codes: 0 success, 2 usage or configuration error, 3 I/O failure or
//! corrupt session.

mod local;
mod remote;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "multimapper", version, about = "Mapper complexes, nerve-violation diagnostics and Multimapper rescaling")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a Mapper complex from a point cloud.
    Mapper(local::MapperArgs),
    /// Check a session's simplices for disconnected cluster intersections.
    Diagnose(local::DiagnoseArgs),
    /// Re-cluster selected nodes under a finer local cover.
    Magnify(local::RescaleArgs),
    /// Re-cluster selected nodes under a coarser local cover.
    Coarsen(local::RescaleArgs),
    /// Write a synthetic point cloud as CSV.
    Fixtures(local::FixtureArgs),
    /// Run the HTTP session service.
    Serve(ServeArgs),
    /// Talk to a running service.
    Remote(remote::RemoteArgs),
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    #[arg(long)]
    data_dir: PathBuf,
    /// Hours a session may stay idle before it is deleted.
    #[arg(long, default_value_t = 24.0)]
    ttl_hours: f64,
    /// Directory of built UI assets to serve under /ui.
    #[arg(long)]
    ui_dir: Option<PathBuf>,
}

/// Failure with the exit code it maps to.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Io(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Io(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Io(m) => f.write_str(m),
        }
    }
}

impl From<multimapper_core::Error> for CliError {
    fn from(e: multimapper_core::Error) -> Self {
        if e.is_io() {
            CliError::Io(e.to_string())
        } else {
            CliError::Usage(e.to_string())
        }
    }
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(value) = std::env::var("MULTIMAPPER_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .map_err(|_| CliError::Usage(format!("MULTIMAPPER_THREADS must be a non-negative integer, got {value:?}")))?;
    if n > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    Ok(())
}

fn serve(args: ServeArgs) -> Result<(), CliError> {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .init();
    if args.ttl_hours.is_nan() || args.ttl_hours <= 0.0 {
        return Err(CliError::Usage("--ttl-hours must be positive".into()));
    }
    let mut config = multimapper_service::ServiceConfig::new(args.data_dir);
    config.idle_ttl = std::time::Duration::from_secs_f64(args.ttl_hours * 3600.0);
    config.ui_dir = args.ui_dir;
    let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::Io(e.to_string()))?;
    runtime.block_on(async {
        let addr = format!("{}:{}", args.host, args.port);
        let listener = tokio::net::TcpListener::bind(&addr)
            .await
            .map_err(|e| CliError::Io(format!("cannot bind {addr}: {e}")))?;
        eprintln!("listening on http://{}", listener.local_addr().map_err(|e| CliError::Io(e.to_string()))?);
        multimapper_service::serve(listener, config)
            .await
            .map_err(|e| CliError::Io(e.to_string()))
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = configure_threads().and_then(|()| match cli.command {
        Command::Mapper(a) => local::mapper(a),
        Command::Diagnose(a) => local::diagnose(a),
        Command::Magnify(a) => local::rescale(a, local::Direction::Finer),
        Command::Coarsen(a) => local::rescale(a, local::Direction::Coarser),
        Command::Fixtures(a) => local::fixtures(a),
        Command::Serve(a) => serve(a),
        Command::Remote(a) => remote::run(a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
