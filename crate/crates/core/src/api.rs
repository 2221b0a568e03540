//! Request and response bodies of the HTTP session service.

use serde::{Deserialize, Serialize};

use crate::clustering::ClusterParams;
use crate::complex::{BuildReport, MapperComplex, DEFAULT_DIM_CAP};
use crate::cover::CoverSpec;
use crate::diagnostics::{DiagnosticsReport, DEFAULT_MAX_DIM};
use crate::multimapper::MagnifyRequest;
use crate::session::{LensSpec, SessionFile};
use crate::tower::TowerConfig;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixtureRequest {
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub n: Option<usize>,
}

/// Exactly one of `points_csv` and `fixture` must be given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CreateSessionRequest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points_csv: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixture: Option<FixtureRequest>,
    pub lens: LensSpec,
    pub cover: CoverSpec,
    #[serde(default)]
    pub cluster: ClusterParams,
    #[serde(default = "default_dim_cap")]
    pub dim_cap: usize,
}

fn default_dim_cap() -> usize {
    DEFAULT_DIM_CAP
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CreateSessionResponse {
    pub session_id: String,
    pub complex: MapperComplex,
    pub report: BuildReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MagnifyResponse {
    pub complex: MapperComplex,
    /// Points outside the selection whose lens values fall in the local cover.
    pub degeneracy_points: Vec<usize>,
    pub node_delta: i64,
    pub report: BuildReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnoseRequest {
    /// `clustering` or `persistence`.
    pub method: String,
    #[serde(default)]
    pub levels: Option<usize>,
    #[serde(default)]
    pub max_dim: Option<usize>,
    /// Clusterer for the clustering method; defaults to the session's.
    #[serde(default)]
    pub cluster: Option<ClusterParams>,
}

impl DiagnoseRequest {
    pub fn tower_config(&self) -> TowerConfig {
        self.levels.map_or_else(TowerConfig::default, TowerConfig::with_levels)
    }

    pub fn max_dim(&self) -> usize {
        self.max_dim.unwrap_or(DEFAULT_MAX_DIM)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnoseResponse {
    #[serde(flatten)]
    pub report: DiagnosticsReport,
    /// One suggested request per violation, in the same order.
    pub suggestions: Vec<MagnifyRequest>,
}

/// What the service stores and returns for a session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSnapshot {
    pub session_id: String,
    /// Unix seconds.
    pub created_at: u64,
    pub updated_at: u64,
    pub session: SessionFile,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
}
