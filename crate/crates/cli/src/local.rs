use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{ArgGroup, Args};

use multimapper_core::api::DiagnoseResponse;
use multimapper_core::clustering::ClusterParams;
use multimapper_core::complex::{graph_betti, homology_betti, one_skeleton};
use multimapper_core::cover::{CoverScheme, CoverSpec};
use multimapper_core::diagnostics::{diagnose as run_diagnosis, suggest_action, Method};
use multimapper_core::fixtures::Fixture;
use multimapper_core::geometry::PointCloud;
use multimapper_core::multimapper::{AnalysisState, MagnifyRequest};
use multimapper_core::session::{canonical_json, DatasetSource, LensSpec, Session};
use multimapper_core::tower::TowerConfig;

use crate::CliError;

#[derive(Args)]
#[command(group(ArgGroup::new("lens_source").required(true).args(["lens", "lens_csv"])))]
pub struct MapperArgs {
    /// Point cloud CSV, one point per row.
    #[arg(long)]
    points: PathBuf,
    /// Built-in lens: coord:i[,j] or pca:d.
    #[arg(long)]
    lens: Option<String>,
    /// Precomputed lens values, one row per point.
    #[arg(long)]
    lens_csv: Option<PathBuf>,
    /// brick or cuboidal; brick for 2-D lenses and cuboidal for 1-D when omitted.
    #[arg(long)]
    cover: Option<String>,
    #[arg(long, default_value_t = 10)]
    bins: usize,
    #[arg(long, default_value_t = 0.25)]
    overlap: f64,
    /// dbscan:eps=E,min_pts=M | dbscan:auto[,min_pts=M] | single:threshold=T | single:auto
    #[arg(long, default_value = "dbscan:auto,min_pts=4")]
    cluster: String,
    #[arg(long, default_value_t = multimapper_core::complex::DEFAULT_DIM_CAP)]
    dim_cap: usize,
    /// Complex JSON output.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Session file to create for later diagnose/magnify calls.
    #[arg(long)]
    session: Option<PathBuf>,
    /// Build report JSON output.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
pub struct DiagnoseArgs {
    #[arg(long)]
    session: PathBuf,
    /// clustering or persistence.
    #[arg(long, default_value = "persistence")]
    method: String,
    /// Tower levels for the persistence method.
    #[arg(long, default_value_t = 5)]
    levels: usize,
    #[arg(long, default_value_t = multimapper_core::diagnostics::DEFAULT_MAX_DIM)]
    max_dim: usize,
    /// Clusterer for the clustering method; the session's when omitted.
    #[arg(long)]
    cluster: Option<String>,
    /// Violations JSON output; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Store the result in the session file.
    #[arg(long)]
    record: bool,
}

#[derive(Args)]
pub struct RescaleArgs {
    #[arg(long)]
    session: PathBuf,
    /// Comma-separated node ids of the current complex.
    #[arg(long, allow_hyphen_values = true)]
    select: String,
    /// Local cover scheme; that of the first selected node when omitted.
    #[arg(long)]
    cover: Option<String>,
    /// Bins per axis, or `Nx` for bins N times smaller (magnify) or larger
    /// (coarsen) than the selected nodes' bins. Defaults to 2x.
    #[arg(long)]
    bins: Option<String>,
    #[arg(long)]
    overlap: Option<f64>,
    #[arg(long)]
    cluster: Option<String>,
    /// New session file; the input session is overwritten when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Complex JSON output.
    #[arg(long)]
    complex_out: Option<PathBuf>,
}

#[derive(Args)]
pub struct FixtureArgs {
    /// circle, two_blob, blob_ring, parallel_segments or blobsK.
    name: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    n: Option<usize>,
    /// CSV output; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy)]
pub enum Direction {
    Finer,
    Coarser,
}

fn usage(e: impl ToString) -> CliError {
    CliError::Usage(e.to_string())
}

fn write_output(path: Option<&Path>, text: &str) -> Result<(), CliError> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| CliError::Io(format!("{}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn absolute(path: &Path) -> Result<PathBuf, CliError> {
    std::fs::canonicalize(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn parse_params(s: &str) -> Result<ClusterParams, CliError> {
    s.parse().map_err(usage)
}

fn parse_scheme(s: &str) -> Result<CoverScheme, CliError> {
    s.parse().map_err(usage)
}

pub fn summary(state: &AnalysisState) -> String {
    let c = &state.complex;
    let (b0, b1) = graph_betti(&one_skeleton(c));
    let (_, h1) = homology_betti(c, None);
    let dims: Vec<String> = c
        .dim_counts()
        .iter()
        .enumerate()
        .skip(1)
        .map(|(d, n)| format!("dim{d}={n}"))
        .collect();
    let mut out = format!(
        "nodes: {}\nsimplices: {}\nbeta0: {b0}\nbeta1: {b1}\nbeta1_filled: {h1}\ntruncated: {}\n",
        c.nodes.len(),
        dims.join(" "),
        c.truncated
    );
    let r = &state.report;
    out.push_str(&format!(
        "points: {} clustered, {} noise, {} empty bins\n",
        r.points_clustered, r.noise_dropped, r.bins_empty
    ));
    if r.overlap_warning {
        out.push_str("warning: overlap >= 0.5, brick covers may have 4-fold intersections\n");
    }
    out
}

pub fn mapper(a: MapperArgs) -> Result<(), CliError> {
    let points_path = absolute(&a.points)?;
    let points = PointCloud::from_csv_path(&points_path)?;
    let lens_spec = match (&a.lens, &a.lens_csv) {
        (Some(l), None) => {
            let spec: LensSpec = l.parse().map_err(usage)?;
            if let LensSpec::Csv(p) = spec {
                LensSpec::Csv(absolute(&p)?)
            } else {
                spec
            }
        }
        (None, Some(p)) => LensSpec::Csv(absolute(p)?),
        _ => return Err(usage("give exactly one of --lens and --lens-csv")),
    };
    let lens = lens_spec.compute(&points)?;
    let scheme = match &a.cover {
        Some(s) => parse_scheme(s)?,
        None if lens.dim() == 2 => CoverScheme::Brick,
        None => CoverScheme::Cuboidal,
    };
    let spec = CoverSpec {
        scheme,
        bins_per_axis: a.bins,
        g: a.overlap,
    };
    let params = parse_params(&a.cluster)?;
    let state = AnalysisState::new(Arc::new(points), Arc::new(lens), spec, params, a.dim_cap)?;
    if let Some(out) = &a.out {
        write_output(Some(out), &canonical_json(&state.complex)?)?;
    }
    if let Some(report) = &a.report {
        write_output(Some(report), &canonical_json(&state.report)?)?;
    }
    let text = summary(&state);
    if let Some(path) = &a.session {
        let session = Session {
            state,
            source: DatasetSource::File { path: points_path },
            lens: lens_spec,
            diagnostics: None,
        };
        session.save(path)?;
    }
    print!("{text}");
    Ok(())
}

pub fn diagnose(a: DiagnoseArgs) -> Result<(), CliError> {
    let method: Method = a.method.parse().map_err(usage)?;
    let params = a.cluster.as_deref().map(parse_params).transpose()?;
    let tower = TowerConfig::with_levels(a.levels);
    tower.validate().map_err(usage)?;
    let mut session = Session::load(&a.session)?;
    let report = run_diagnosis(&session.state, method, &tower, params.as_ref(), a.max_dim)?;
    let suggestions = report
        .violations
        .iter()
        .map(|v| suggest_action(v, &session.state))
        .collect::<multimapper_core::Result<Vec<_>>>()?;
    let response = DiagnoseResponse {
        report: report.clone(),
        suggestions,
    };
    write_output(a.out.as_deref(), &canonical_json(&response)?)?;
    if a.out.is_some() {
        println!(
            "bad: {}\nviolations: {}\nskipped: {}",
            report.bad,
            report.violations.len(),
            report.skipped
        );
    }
    if a.record {
        session.record_diagnostics(report);
        session.save(&a.session)?;
    }
    Ok(())
}

fn parse_selection(s: &str) -> Result<Vec<usize>, CliError> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| t.parse().map_err(|_| usage(format!("invalid node id {t:?} in --select"))))
        .collect()
}

/// Absolute bin count, or a scale factor when written as `Nx`.
fn resolve_bins(
    arg: Option<&str>,
    direction: Direction,
    state: &AnalysisState,
    nodes: &[usize],
) -> Result<usize, CliError> {
    let arg = arg.unwrap_or("2x");
    if let Some(rel) = arg.strip_suffix('x') {
        let n: f64 = rel
            .parse()
            .ok()
            .filter(|n: &f64| *n > 0.0 && n.is_finite())
            .ok_or_else(|| usage(format!("invalid --bins {arg:?}")))?;
        let factor = match direction {
            Direction::Finer => n,
            Direction::Coarser => 1.0 / n,
        };
        Ok(state.scaled_bins(nodes, factor)?)
    } else {
        arg.parse().map_err(|_| usage(format!("invalid --bins {arg:?}")))
    }
}

pub fn rescale(a: RescaleArgs, direction: Direction) -> Result<(), CliError> {
    let node_ids = parse_selection(&a.select)?;
    let mut session = Session::load(&a.session)?;
    let state = &session.state;
    let region = match node_ids.first() {
        Some(&v) => {
            state
                .clusters
                .get(v)
                .ok_or(multimapper_core::Error::UnknownNode(v))?
                .region
        }
        None => 0,
    };
    let template = state.region_cover(region).map_or(state.base_spec, |c| CoverSpec {
        scheme: c.scheme,
        bins_per_axis: state.base_spec.bins_per_axis,
        g: c.g,
    });
    let req = MagnifyRequest {
        cover: CoverSpec {
            scheme: a.cover.as_deref().map(parse_scheme).transpose()?.unwrap_or(template.scheme),
            bins_per_axis: resolve_bins(a.bins.as_deref(), direction, state, &node_ids)?,
            g: a.overlap.unwrap_or(template.g),
        },
        cluster: match &a.cluster {
            Some(c) => parse_params(c)?,
            None => state.region_params(region),
        },
        node_ids,
    };
    let degenerate = state.degeneracy_guard(&req)?;
    let before = state.complex.nodes.len();
    let next = state.magnify(&req)?;
    let after = next.complex.nodes.len();
    session.advance(next);
    if let Some(path) = &a.complex_out {
        write_output(Some(path), &canonical_json(&session.state.complex)?)?;
    }
    session.save(a.out.as_ref().unwrap_or(&a.session))?;
    println!(
        "nodes: {before} -> {after} ({:+})\nregion: {}\nbins_per_axis: {}\ndegeneracy_points: {}",
        after as i64 - before as i64,
        session.state.region_log.len(),
        req.cover.bins_per_axis,
        degenerate.len()
    );
    Ok(())
}

pub fn fixtures(a: FixtureArgs) -> Result<(), CliError> {
    let fixture: Fixture = a.name.parse().map_err(usage)?;
    let points = fixture.generate(a.seed, a.n);
    write_output(a.out.as_deref(), &points.to_csv_string())
}
