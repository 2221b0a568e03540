//! Detection of simplices whose cluster intersection is disconnected.
//!
//! If the intersection of the clusters spanning a simplex has more than one
//! connected component, it is not contractible and the Mapper disagrees with
//! the Reeb space there. Two detectors estimate the component count: one
//! clusters the intersection directly, the other takes the most frequent β₀
//! along a tower of covers of the intersection.

use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clustering::{cluster_bin, ClusterParams};
use crate::complex::{one_skeleton, Simplex};
use crate::cover::{widen_degenerate, CoverSpec};
use crate::error::{Error, Result};
use crate::multimapper::{AnalysisState, MagnifyRequest};
use crate::tower::{persistence0, tower_mappers, TowerConfig, TowerOfCovers};

pub const DEFAULT_MAX_DIM: usize = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Clustering,
    Persistence,
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "clustering" => Ok(Method::Clustering),
            "persistence" => Ok(Method::Persistence),
            other => Err(Error::Parse(format!("unknown diagnosis method {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActionKind {
    Refine,
    Coarsen,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SuggestedAction {
    pub kind: ActionKind,
    /// Bin size divisor: 2 halves the bins, 0.5 doubles them.
    pub factor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViolationReport {
    pub simplex: Simplex,
    pub method: Method,
    #[serde(rename = "beta0")]
    pub beta0_found: usize,
    /// Smallest points of the first two components.
    pub witness: [usize; 2],
    pub suggested_action: SuggestedAction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub bad: bool,
    pub method: Method,
    pub violations: Vec<ViolationReport>,
    /// Simplices whose intersection was too small to examine.
    pub skipped: usize,
    pub checked: usize,
}

/// Points shared by every node of the simplex, ascending.
pub fn intersection(state: &AnalysisState, simplex: &[usize]) -> Vec<usize> {
    let mut iter = simplex.iter().map(|&v| &state.clusters[v].members);
    let Some(first) = iter.next() else {
        return Vec::new();
    };
    iter.fold(first.clone(), |acc, m| {
        acc.into_iter().filter(|p| m.binary_search(p).is_ok()).collect()
    })
}

fn simplices_to_check(state: &AnalysisState, max_dim: usize) -> Result<Vec<Simplex>> {
    if max_dim == 0 {
        return Err(Error::InvalidResolution("max_dim must be at least 1".into()));
    }
    Ok(state
        .complex
        .simplices
        .iter()
        .filter(|s| s.len() - 1 <= max_dim)
        .cloned()
        .collect())
}

fn finish(method: Method, checked: usize, results: Vec<Outcome>) -> DiagnosticsReport {
    let skipped = results.iter().filter(|r| matches!(r, Outcome::Skipped)).count();
    let violations: Vec<ViolationReport> = results
        .into_iter()
        .filter_map(|r| match r {
            Outcome::Violation(v) => Some(v),
            _ => None,
        })
        .collect();
    DiagnosticsReport {
        bad: !violations.is_empty(),
        method,
        violations,
        skipped,
        checked,
    }
}

enum Outcome {
    Clean,
    Skipped,
    Violation(ViolationReport),
}

/// Clusters each simplex's intersection with `params` and reports the
/// simplices where more than one cluster comes out.
pub fn check_clustering(state: &AnalysisState, params: &ClusterParams, max_dim: usize) -> Result<DiagnosticsReport> {
    let simplices = simplices_to_check(state, max_dim)?;
    let results = simplices
        .par_iter()
        .map(|s| {
            let shared = intersection(state, s);
            let radius = state
                .lens
                .subset_bounds(&shared)
                .map_or(0.0, |b| widen_degenerate(&b).diameter());
            let components = cluster_bin(&state.points, &shared, params, radius);
            if components.len() > 1 {
                Outcome::Violation(violation(state, s, Method::Clustering, &components))
            } else {
                Outcome::Clean
            }
        })
        .collect();
    Ok(finish(Method::Clustering, simplices.len(), results))
}

/// For each simplex, builds a tower of covers over the lens bounds of its
/// intersection (scales relative to the largest bin among its nodes) and
/// reports it when the most frequent β₀ along the tower exceeds one.
/// Clustering inside tower bins uses the Mapper's own parameters.
pub fn check_persistence(state: &AnalysisState, config: &TowerConfig, max_dim: usize) -> Result<DiagnosticsReport> {
    config.validate()?;
    let simplices = simplices_to_check(state, max_dim)?;
    let results = simplices
        .par_iter()
        .map(|s| persistence_outcome(state, config, s))
        .collect::<Result<Vec<_>>>()?;
    Ok(finish(Method::Persistence, simplices.len(), results))
}

fn persistence_outcome(state: &AnalysisState, config: &TowerConfig, simplex: &[usize]) -> Result<Outcome> {
    let shared = intersection(state, simplex);
    if shared.len() < 2 {
        return Ok(Outcome::Skipped);
    }
    let bounds = state.lens.subset_bounds(&shared).expect("non-empty intersection");
    let bins: Vec<&crate::cover::Bin> = simplex.iter().filter_map(|&v| state.node_bin(v)).collect();
    let reference: Vec<f64> = (0..bounds.dim())
        .map(|k| bins.iter().map(|b| b.base_width(k)).fold(0.0, f64::max))
        .collect();
    let g = state
        .region_cover(state.clusters[simplex[0]].region)
        .map_or(0.0, |c| c.g);
    let tower = TowerOfCovers::with_reference_size(&bounds, &reference, g, config)?;
    let mappers = tower_mappers(&state.points, &state.lens, &shared, &tower, &state.base_params, 1)?;
    let report = persistence0(&mappers)?;
    if report.beta0_mode <= 1 {
        return Ok(Outcome::Clean);
    }
    let level = report
        .beta0
        .iter()
        .position(|&b| b == report.beta0_mode)
        .expect("the mode occurs");
    let complex = &mappers.complexes[level];
    let mut components: Vec<Vec<usize>> = one_skeleton(complex)
        .components()
        .into_iter()
        .map(|nodes| {
            let mut pts: Vec<usize> = nodes
                .iter()
                .flat_map(|&v| complex.nodes[v].members.iter().copied())
                .collect();
            pts.sort_unstable();
            pts.dedup();
            pts
        })
        .collect();
    components.sort();
    Ok(Outcome::Violation(violation(state, simplex, Method::Persistence, &components)))
}

fn violation(state: &AnalysisState, simplex: &[usize], method: Method, components: &[Vec<usize>]) -> ViolationReport {
    ViolationReport {
        simplex: simplex.to_vec(),
        method,
        beta0_found: components.len(),
        witness: [components[0][0], components[1][0]],
        suggested_action: choose_action(state, simplex, components),
    }
}

/// Coarsen when each component already sits inside its own node outside the
/// simplex: the split is then an artefact of bins that are too fine for the
/// local density. Otherwise refine so the components separate into nodes.
fn choose_action(state: &AnalysisState, simplex: &[usize], components: &[Vec<usize>]) -> SuggestedAction {
    let mut homes = Vec::new();
    for comp in components {
        let home = state.clusters.iter().enumerate().find(|(v, c)| {
            !simplex.contains(v)
                && !homes.contains(v)
                && comp.iter().all(|p| c.members.binary_search(p).is_ok())
        });
        match home {
            Some((v, _)) => homes.push(v),
            None => {
                return SuggestedAction {
                    kind: ActionKind::Refine,
                    factor: 2.0,
                }
            }
        }
    }
    SuggestedAction {
        kind: ActionKind::Coarsen,
        factor: 0.5,
    }
}

/// Magnification request acting on a violation: its simplex's nodes under
/// the cover scheme and clustering of its first node, with bins rescaled
/// by the suggested factor.
pub fn suggest_action(v: &ViolationReport, state: &AnalysisState) -> Result<MagnifyRequest> {
    let first = *v
        .simplex
        .first()
        .ok_or_else(|| Error::Empty("violation has no vertices".into()))?;
    let cluster = state.clusters.get(first).ok_or(Error::UnknownNode(first))?;
    let cover = state
        .region_cover(cluster.region)
        .ok_or_else(|| Error::CorruptSession(format!("no cover for region {}", cluster.region)))?;
    let bins = state.scaled_bins(&v.simplex, v.suggested_action.factor)?;
    Ok(MagnifyRequest {
        node_ids: v.simplex.clone(),
        cover: CoverSpec {
            scheme: cover.scheme,
            bins_per_axis: bins,
            g: cover.g,
        },
        cluster: state.region_params(cluster.region),
    })
}

/// Runs the chosen detector.
pub fn diagnose(
    state: &AnalysisState,
    method: Method,
    config: &TowerConfig,
    params: Option<&ClusterParams>,
    max_dim: usize,
) -> Result<DiagnosticsReport> {
    match method {
        Method::Clustering => check_clustering(state, params.unwrap_or(&state.base_params), max_dim),
        Method::Persistence => check_persistence(state, config, max_dim),
    }
}
