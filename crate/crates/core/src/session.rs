//! Session files: everything needed to resume an analysis, with point
//! coordinates referenced by content hash rather than embedded.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::clustering::{Cluster, ClusterParams};
use crate::complex::{BuildReport, MapperComplex};
use crate::cover::{Cover, CoverSpec};
use crate::diagnostics::DiagnosticsReport;
use crate::error::{Error, Result};
use crate::fixtures::Fixture;
use crate::geometry::{lens_coordinate, lens_pca, load_lens_csv, LensMap, PointCloud};
use crate::multimapper::{AnalysisState, RegionRecord};

pub const SESSION_VERSION: u32 = 1;

/// How lens values are obtained from the points.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum LensSpec {
    Coordinate(Vec<usize>),
    Pca(usize),
    Csv(PathBuf),
}

impl FromStr for LensSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Parse(format!("invalid lens spec {s:?}; expected coord:i[,j], pca:d or csv:path"));
        let (kind, rest) = s.split_once(':').ok_or_else(bad)?;
        match kind {
            "coord" => {
                let axes = rest
                    .split(',')
                    .map(|a| a.trim().parse::<usize>().map_err(|_| bad()))
                    .collect::<Result<Vec<_>>>()?;
                Ok(LensSpec::Coordinate(axes))
            }
            "pca" => rest.trim().parse().map(LensSpec::Pca).map_err(|_| bad()),
            "csv" if !rest.is_empty() => Ok(LensSpec::Csv(PathBuf::from(rest))),
            _ => Err(bad()),
        }
    }
}

impl fmt::Display for LensSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LensSpec::Coordinate(axes) => {
                let axes: Vec<String> = axes.iter().map(usize::to_string).collect();
                write!(f, "coord:{}", axes.join(","))
            }
            LensSpec::Pca(d) => write!(f, "pca:{d}"),
            LensSpec::Csv(p) => write!(f, "csv:{}", p.display()),
        }
    }
}

impl TryFrom<String> for LensSpec {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<LensSpec> for String {
    fn from(l: LensSpec) -> String {
        l.to_string()
    }
}

impl LensSpec {
    pub fn compute(&self, points: &PointCloud) -> Result<LensMap> {
        match self {
            LensSpec::Coordinate(axes) => lens_coordinate(points, axes),
            LensSpec::Pca(d) => lens_pca(points, *d),
            LensSpec::Csv(path) => load_lens_csv(path, points.len()),
        }
    }
}

/// Where the points came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetSource {
    File { path: PathBuf },
    Fixture { name: String, seed: u64, n: Option<usize> },
    /// Stored by the caller under its hash, e.g. by the HTTP service.
    Stored,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetRef {
    /// SHA-256 of the normalized CSV rendering of the points.
    pub hash: String,
    pub source: DatasetSource,
}

impl DatasetSource {
    pub fn load(&self) -> Result<PointCloud> {
        match self {
            DatasetSource::File { path } => PointCloud::from_csv_path(path),
            DatasetSource::Fixture { name, seed, n } => Ok(name.parse::<Fixture>()?.generate(*seed, *n)),
            DatasetSource::Stored => Err(Error::CorruptSession("stored dataset must be supplied by the caller".into())),
        }
    }
}

pub fn dataset_hash(points: &PointCloud) -> String {
    hex::encode(Sha256::digest(points.to_csv_string().as_bytes()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionFile {
    pub version: u32,
    pub dataset: DatasetRef,
    pub lens: LensSpec,
    pub dim_cap: usize,
    pub base_spec: CoverSpec,
    pub base_params: ClusterParams,
    pub base_cover: Cover,
    pub clusters: Vec<Cluster>,
    pub region_log: Vec<RegionRecord>,
    pub complex: MapperComplex,
    pub report: BuildReport,
    #[serde(default)]
    pub diagnostics: Option<DiagnosticsReport>,
}

/// A live analysis together with the provenance needed to save it.
#[derive(Debug, Clone)]
pub struct Session {
    pub state: AnalysisState,
    pub source: DatasetSource,
    pub lens: LensSpec,
    pub diagnostics: Option<DiagnosticsReport>,
}

impl Session {
    pub fn to_file(&self) -> SessionFile {
        let s = &self.state;
        SessionFile {
            version: SESSION_VERSION,
            dataset: DatasetRef {
                hash: dataset_hash(&s.points),
                source: self.source.clone(),
            },
            lens: self.lens.clone(),
            dim_cap: s.dim_cap,
            base_spec: s.base_spec,
            base_params: s.base_params,
            base_cover: s.base_cover.clone(),
            clusters: s.clusters.clone(),
            region_log: s.region_log.clone(),
            complex: s.complex.clone(),
            report: s.report.clone(),
            diagnostics: self.diagnostics.clone(),
        }
    }

    /// Replaces the analysis after a mutation; earlier diagnostics no longer apply.
    pub fn advance(&mut self, state: AnalysisState) {
        self.state = state;
        self.diagnostics = None;
    }

    pub fn record_diagnostics(&mut self, report: DiagnosticsReport) {
        self.state.report.bad = Some(report.bad);
        self.diagnostics = Some(report);
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, canonical_json(&self.to_file())?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Session> {
        let file = SessionFile::read(path)?;
        let points = file.dataset.source.load().map_err(corrupt)?;
        file.restore(points)
    }
}

fn corrupt(e: Error) -> Error {
    match e {
        Error::Io { .. } | Error::CorruptSession(_) => e,
        other => Error::CorruptSession(other.to_string()),
    }
}

impl SessionFile {
    pub fn read(path: impl AsRef<Path>) -> Result<SessionFile> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::CorruptSession(format!("{}: {e}", path.display())))
    }

    /// Rebuilds the analysis from the given points, checking the dataset
    /// hash and that the stored complex matches the recomputed nerve.
    pub fn restore(self, points: PointCloud) -> Result<Session> {
        if self.version != SESSION_VERSION {
            return Err(Error::CorruptSession(format!("unsupported session version {}", self.version)));
        }
        let hash = dataset_hash(&points);
        if hash != self.dataset.hash {
            return Err(Error::CorruptSession(format!(
                "dataset hash mismatch: session has {}, data has {hash}",
                self.dataset.hash
            )));
        }
        let lens = self.lens.compute(&points).map_err(corrupt)?;
        let state = AnalysisState::from_parts(
            Arc::new(points),
            Arc::new(lens),
            self.dim_cap,
            self.base_spec,
            self.base_params,
            self.base_cover,
            self.clusters,
            self.region_log,
            self.report,
        )
        .map_err(corrupt)?;
        if state.complex != self.complex {
            return Err(Error::CorruptSession("stored complex does not match its clusters".into()));
        }
        Ok(Session {
            state,
            source: self.dataset.source,
            lens: self.lens,
            diagnostics: self.diagnostics,
        })
    }
}

/// Pretty JSON with object keys sorted and floats in shortest round-trip form.
pub fn canonical_json<T: Serialize>(value: &T) -> Result<String> {
    let value = serde_json::to_value(value)?;
    let mut out = serde_json::to_string_pretty(&value)?;
    out.push('\n');
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cover::CoverScheme;
    use crate::multimapper::MagnifyRequest;

    fn session() -> Session {
        let source = DatasetSource::Fixture {
            name: "two_blob".into(),
            seed: 3,
            n: None,
        };
        let points = source.load().unwrap();
        let lens = LensSpec::Coordinate(vec![0, 1]);
        let lens_map = lens.compute(&points).unwrap();
        let spec = CoverSpec {
            scheme: CoverScheme::Brick,
            bins_per_axis: 4,
            g: 0.2,
        };
        let state = AnalysisState::new(Arc::new(points), Arc::new(lens_map), spec, ClusterParams::single(2.0), 3).unwrap();
        Session {
            state,
            source,
            lens,
            diagnostics: None,
        }
    }

    #[test]
    fn lens_spec_round_trip() {
        for s in ["coord:0", "coord:0,1", "pca:2", "csv:lens.csv"] {
            assert_eq!(s.parse::<LensSpec>().unwrap().to_string(), s);
        }
        for s in ["coord:", "pca:x", "tsne:2", "csv:"] {
            assert!(s.parse::<LensSpec>().is_err(), "{s}");
        }
    }

    #[test]
    fn save_load_round_trip_after_magnify() {
        let mut s = session();
        let req = MagnifyRequest {
            node_ids: vec![0],
            cover: CoverSpec {
                scheme: CoverScheme::Cuboidal,
                bins_per_axis: 3,
                g: 0.1,
            },
            cluster: ClusterParams::single(1.0),
        };
        let next = s.state.magnify(&req).unwrap();
        s.advance(next);
        let dir = std::env::temp_dir().join(format!("mm-session-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("s.json");
        s.save(&path).unwrap();
        let back = Session::load(&path).unwrap();
        assert_eq!(back.state.complex, s.state.complex);
        assert_eq!(back.state.region_log, s.state.region_log);
        assert_eq!(back.to_file(), s.to_file());
        let again = canonical_json(&back.to_file()).unwrap();
        assert_eq!(again, std::fs::read_to_string(&path).unwrap());
        std::fs::remove_dir_all(dir).unwrap();
    }

    #[test]
    fn tampered_sessions_are_rejected() {
        let s = session();
        let mut file = s.to_file();
        file.dataset.hash = "00".into();
        let points = s.state.points.as_ref().clone();
        assert!(matches!(file.restore(points.clone()), Err(Error::CorruptSession(_))));

        let mut file = s.to_file();
        file.complex.simplices.clear();
        let err = file.restore(points).unwrap_err();
        assert!(matches!(err, Error::CorruptSession(_)) && err.is_io());
    }

    #[test]
    fn canonical_json_sorts_keys() {
        #[derive(Serialize)]
        struct T {
            zeta: f64,
            alpha: u8,
        }
        let s = canonical_json(&T { zeta: 0.1, alpha: 1 }).unwrap();
        assert!(s.find("alpha").unwrap() < s.find("zeta").unwrap());
        assert!(s.contains("0.1"));
    }
}
