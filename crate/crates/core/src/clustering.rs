//! Clustering inside pullback bins: the discrete stand-in for the path
//! components of each bin's preimage.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cover::Cover;
use crate::error::{Error, Result};
use crate::geometry::{LensMap, PointCloud};
use crate::union_find::DisjointSet;

/// Neighbour rank used when a single-linkage threshold is derived from data.
pub const AUTO_K: usize = 10;
pub const DEFAULT_MIN_PTS: usize = 4;
/// Percentile of k-NN distances used for automatic radii.
pub const AUTO_PERCENTILE: f64 = 0.9;
/// Stride between the cluster id blocks of successive regions.
pub const REGION_ID_STRIDE: u64 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Radius {
    Fixed(f64),
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum ClusterParams {
    Dbscan { eps: Radius, min_pts: usize },
    SingleLinkage { threshold: Radius },
}

impl Default for ClusterParams {
    fn default() -> Self {
        ClusterParams::Dbscan {
            eps: Radius::Auto,
            min_pts: DEFAULT_MIN_PTS,
        }
    }
}

impl ClusterParams {
    pub fn single(threshold: f64) -> Self {
        ClusterParams::SingleLinkage {
            threshold: Radius::Fixed(threshold),
        }
    }

    pub fn dbscan(eps: f64, min_pts: usize) -> Self {
        ClusterParams::Dbscan {
            eps: Radius::Fixed(eps),
            min_pts,
        }
    }

    fn validate(self) -> Result<Self> {
        let (radius, min_pts) = match self {
            ClusterParams::Dbscan { eps, min_pts } => (eps, min_pts),
            ClusterParams::SingleLinkage { threshold } => (threshold, 1),
        };
        if let Radius::Fixed(r) = radius {
            if !(r > 0.0 && r.is_finite()) {
                return Err(Error::InvalidClusterParams(format!("radius must be positive, got {r}")));
            }
        }
        if min_pts == 0 {
            return Err(Error::InvalidClusterParams("min_pts must be at least 1".into()));
        }
        Ok(self)
    }
}

impl FromStr for ClusterParams {
    type Err = Error;

    /// Accepts `dbscan:eps=0.5,min_pts=4`, `dbscan:auto[,min_pts=N]`,
    /// `single:threshold=1.2` and `single:auto`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = |why: &str| Error::InvalidClusterParams(format!("{s:?}: {why}"));
        let (algo, args) = s.trim().split_once(':').unwrap_or((s.trim(), ""));
        let mut radius = None;
        let mut min_pts = None;
        for arg in args.split(',').map(str::trim).filter(|a| !a.is_empty()) {
            match arg.split_once('=') {
                None if arg == "auto" => radius = Some(Radius::Auto),
                Some(("eps", v)) if algo == "dbscan" => {
                    radius = Some(Radius::Fixed(v.parse().map_err(|_| bad("eps is not a number"))?))
                }
                Some(("threshold", v)) if algo == "single" => {
                    radius = Some(Radius::Fixed(
                        v.parse().map_err(|_| bad("threshold is not a number"))?,
                    ))
                }
                Some(("min_pts", v)) if algo == "dbscan" => {
                    min_pts = Some(v.parse().map_err(|_| bad("min_pts is not an integer"))?)
                }
                _ => return Err(bad(&format!("unexpected argument {arg:?}"))),
            }
        }
        let radius = radius.ok_or_else(|| bad("missing radius (or `auto`)"))?;
        match algo {
            "dbscan" => ClusterParams::Dbscan {
                eps: radius,
                min_pts: min_pts.unwrap_or(DEFAULT_MIN_PTS),
            },
            "single" => ClusterParams::SingleLinkage { threshold: radius },
            _ => return Err(bad("algorithm must be `dbscan` or `single`")),
        }
        .validate()
    }
}

impl fmt::Display for ClusterParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            ClusterParams::Dbscan { eps: Radius::Auto, min_pts } => {
                write!(f, "dbscan:auto,min_pts={min_pts}")
            }
            ClusterParams::Dbscan { eps: Radius::Fixed(e), min_pts } => {
                write!(f, "dbscan:eps={e},min_pts={min_pts}")
            }
            ClusterParams::SingleLinkage { threshold: Radius::Auto } => write!(f, "single:auto"),
            ClusterParams::SingleLinkage { threshold: Radius::Fixed(t) } => {
                write!(f, "single:threshold={t}")
            }
        }
    }
}

impl TryFrom<String> for ClusterParams {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<ClusterParams> for String {
    fn from(p: ClusterParams) -> String {
        p.to_string()
    }
}

/// A set of points clustered together inside one bin.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cluster {
    /// Stable id: `region * REGION_ID_STRIDE + local index`.
    pub id: u64,
    /// Ascending point indices.
    pub members: Vec<usize>,
    pub bin_id: usize,
    pub level: u32,
    /// 0 for the original Mapper, `k` for clusters made by the k-th magnification.
    pub region: usize,
}

/// 90th percentile (nearest rank) of k-th nearest-neighbour distances
/// within `members`. `None` when there are not more than `k` members.
pub fn auto_eps(pc: &PointCloud, members: &[usize], k: usize) -> Option<f64> {
    if k == 0 || members.len() <= k {
        return None;
    }
    let mut kth: Vec<f64> = members
        .iter()
        .map(|&i| {
            let mut d: Vec<f64> = members
                .iter()
                .filter(|&&j| j != i)
                .map(|&j| pc.distance(i, j))
                .collect();
            d.select_nth_unstable_by(k - 1, f64::total_cmp);
            d[k - 1]
        })
        .collect();
    kth.sort_by(f64::total_cmp);
    Some(nearest_rank(&kth, AUTO_PERCENTILE))
}

/// Nearest-rank percentile of an ascending, non-empty slice.
pub fn nearest_rank(sorted: &[f64], p: f64) -> f64 {
    let rank = (p * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

/// Clusters the given points. Returned groups are ascending and ordered by
/// their smallest member. DBSCAN noise is left out; single linkage assigns
/// every member.
///
/// `fallback_radius` replaces an automatic radius when the member set is too
/// small to estimate one.
pub fn cluster_bin(
    pc: &PointCloud,
    member_ids: &[usize],
    params: &ClusterParams,
    fallback_radius: f64,
) -> Vec<Vec<usize>> {
    if member_ids.is_empty() {
        return Vec::new();
    }
    let mut members = member_ids.to_vec();
    members.sort_unstable();
    members.dedup();

    let resolve = |r: Radius, k: usize| match r {
        Radius::Fixed(v) => v,
        Radius::Auto => auto_eps(pc, &members, k)
            .filter(|&v| v > 0.0)
            .unwrap_or(fallback_radius),
    };
    let mut groups = match *params {
        ClusterParams::SingleLinkage { threshold } => {
            single_linkage(pc, &members, resolve(threshold, AUTO_K))
        }
        ClusterParams::Dbscan { eps, min_pts } => {
            dbscan(pc, &members, resolve(eps, min_pts), min_pts)
        }
    };
    groups.sort_by_key(|g| g[0]);
    groups
}

fn single_linkage(pc: &PointCloud, members: &[usize], threshold: f64) -> Vec<Vec<usize>> {
    let mut ds = DisjointSet::new(members.len());
    for a in 0..members.len() {
        for b in a + 1..members.len() {
            if pc.distance(members[a], members[b]) <= threshold {
                ds.union(a, b);
            }
        }
    }
    ds.groups()
        .into_iter()
        .map(|g| g.into_iter().map(|i| members[i]).collect())
        .collect()
}

/// Core points have at least `min_pts` neighbours within `eps`, counting
/// themselves. Clusters grow from cores in ascending point order and a
/// border point stays with the first cluster that reaches it.
fn dbscan(pc: &PointCloud, members: &[usize], eps: f64, min_pts: usize) -> Vec<Vec<usize>> {
    let n = members.len();
    let neighbours: Vec<Vec<usize>> = (0..n)
        .map(|a| {
            (0..n)
                .filter(|&b| pc.distance(members[a], members[b]) <= eps)
                .collect()
        })
        .collect();
    let core: Vec<bool> = neighbours.iter().map(|nb| nb.len() >= min_pts).collect();

    let mut label: Vec<Option<usize>> = vec![None; n];
    let mut clusters: Vec<Vec<usize>> = Vec::new();
    for seed in 0..n {
        if !core[seed] || label[seed].is_some() {
            continue;
        }
        let id = clusters.len();
        let mut group = Vec::new();
        let mut stack = vec![seed];
        label[seed] = Some(id);
        while let Some(p) = stack.pop() {
            group.push(members[p]);
            if !core[p] {
                continue;
            }
            for &q in &neighbours[p] {
                if label[q].is_none() {
                    label[q] = Some(id);
                    stack.push(q);
                }
            }
        }
        group.sort_unstable();
        clusters.push(group);
    }
    clusters
}

/// Result of clustering every bin of a cover.
#[derive(Debug, Clone, Default)]
pub struct PullbackClusters {
    pub clusters: Vec<Cluster>,
    pub bins_empty: usize,
}

/// Clusters the preimage of every bin, restricted to `subset` when given.
/// Cluster ids are assigned in (bin id, intra-bin) order inside the region's block.
pub fn cluster_pullback(
    pc: &PointCloud,
    lens: &LensMap,
    cover: &Cover,
    params: &ClusterParams,
    subset: Option<&[usize]>,
    region: usize,
    level_offset: u32,
) -> PullbackClusters {
    let members = cover.pullback(lens, subset);
    let bins_empty = members.iter().filter(|m| m.is_empty()).count();
    let per_bin: Vec<Vec<Vec<usize>>> = cover
        .bins
        .par_iter()
        .zip(members.par_iter())
        .map(|(bin, ids)| cluster_bin(pc, ids, params, bin.diameter()))
        .collect();

    let mut clusters = Vec::new();
    for (bin, groups) in cover.bins.iter().zip(per_bin) {
        for members in groups {
            clusters.push(Cluster {
                id: region as u64 * REGION_ID_STRIDE + clusters.len() as u64,
                members,
                bin_id: bin.id,
                level: bin.level + level_offset,
                region,
            });
        }
    }
    PullbackClusters {
        clusters,
        bins_empty,
    }
}
