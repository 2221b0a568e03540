use std::path::PathBuf;

use clap::{Args, Subcommand};
use multimapper_client::{Client, ClientError};
use multimapper_core::api::{CreateSessionRequest, DiagnoseRequest, FixtureRequest};
use multimapper_core::cover::CoverSpec;
use multimapper_core::multimapper::MagnifyRequest;
use multimapper_core::session::canonical_json;

use crate::CliError;

#[derive(Args)]
pub struct RemoteArgs {
    #[arg(long, env = "MULTIMAPPER_URL", default_value = "http://127.0.0.1:8080")]
    url: String,
    #[command(subcommand)]
    command: RemoteCommand,
}

#[derive(Args)]
struct CoverArgs {
    #[arg(long, default_value = "brick")]
    cover: String,
    #[arg(long, default_value_t = 10)]
    bins: usize,
    #[arg(long, default_value_t = 0.25)]
    overlap: f64,
    #[arg(long, default_value = "dbscan:auto,min_pts=4")]
    cluster: String,
}

#[derive(Subcommand)]
enum RemoteCommand {
    /// Create a session from a CSV file or a fixture.
    Create {
        #[arg(long, conflicts_with = "fixture")]
        points: Option<PathBuf>,
        #[arg(long)]
        fixture: Option<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long, default_value = "coord:0,1")]
        lens: String,
        #[command(flatten)]
        cover: CoverArgs,
        #[arg(long, default_value_t = multimapper_core::complex::DEFAULT_DIM_CAP)]
        dim_cap: usize,
    },
    /// Print a session snapshot.
    Get { id: String },
    /// Magnify or coarsen selected nodes; coarsening is magnifying with fewer bins.
    Magnify {
        id: String,
        #[arg(long, allow_hyphen_values = true)]
        select: String,
        #[command(flatten)]
        cover: CoverArgs,
    },
    /// Check a session for disconnected cluster intersections.
    Diagnose {
        id: String,
        #[arg(long, default_value = "persistence")]
        method: String,
        #[arg(long)]
        levels: Option<usize>,
        #[arg(long)]
        max_dim: Option<usize>,
    },
}

fn from_client(e: ClientError) -> CliError {
    match e.status() {
        Some(s) if s.is_client_error() => CliError::Usage(e.to_string()),
        _ => CliError::Io(e.to_string()),
    }
}

fn parse<T: std::str::FromStr>(s: &str) -> Result<T, CliError>
where
    T::Err: ToString,
{
    s.parse().map_err(|e: T::Err| CliError::Usage(e.to_string()))
}

impl CoverArgs {
    fn spec(&self) -> Result<CoverSpec, CliError> {
        Ok(CoverSpec {
            scheme: parse(&self.cover)?,
            bins_per_axis: self.bins,
            g: self.overlap,
        })
    }
}

pub fn run(a: RemoteArgs) -> Result<(), CliError> {
    let client = Client::new(a.url);
    let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::Io(e.to_string()))?;
    let text = runtime.block_on(async {
        let out = match a.command {
            RemoteCommand::Create {
                points,
                fixture,
                seed,
                n,
                lens,
                cover,
                dim_cap,
            } => {
                let points_csv = points
                    .map(|p| std::fs::read_to_string(&p).map_err(|e| CliError::Io(format!("{}: {e}", p.display()))))
                    .transpose()?;
                let req = CreateSessionRequest {
                    points_csv,
                    fixture: fixture.map(|name| FixtureRequest { name, seed, n }),
                    lens: parse(&lens)?,
                    cover: cover.spec()?,
                    cluster: parse(&cover.cluster)?,
                    dim_cap,
                };
                canonical_json(&client.create_session(&req).await.map_err(from_client)?)
            }
            RemoteCommand::Get { id } => canonical_json(&client.session(&id).await.map_err(from_client)?),
            RemoteCommand::Magnify { id, select, cover } => {
                let node_ids = select
                    .split(',')
                    .map(str::trim)
                    .filter(|t| !t.is_empty())
                    .map(parse)
                    .collect::<Result<Vec<usize>, _>>()?;
                let req = MagnifyRequest {
                    node_ids,
                    cover: cover.spec()?,
                    cluster: parse(&cover.cluster)?,
                };
                canonical_json(&client.magnify(&id, &req).await.map_err(from_client)?)
            }
            RemoteCommand::Diagnose {
                id,
                method,
                levels,
                max_dim,
            } => {
                let req = DiagnoseRequest {
                    method,
                    levels,
                    max_dim,
                    cluster: None,
                };
                canonical_json(&client.diagnose(&id, &req).await.map_err(from_client)?)
            }
        };
        out.map_err(CliError::from)
    })?;
    print!("{text}");
    Ok(())
}
