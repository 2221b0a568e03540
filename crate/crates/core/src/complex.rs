//! Nerves of cluster collections and the Mapper pipeline built on them.

use std::collections::{BTreeSet, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clustering::{cluster_pullback, Cluster, ClusterParams};
use crate::cover::Cover;
use crate::error::{Error, Result};
use crate::geometry::{LensMap, PointCloud};
use crate::union_find::DisjointSet;

pub const DEFAULT_DIM_CAP: usize = 3;

/// Ascending vertex list; dimension is `len - 1`.
pub type Simplex = Vec<usize>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: usize,
    pub size: usize,
    pub members: Vec<usize>,
    pub bin_id: usize,
    pub level: u32,
    pub lens_centroid: Vec<f64>,
    pub cluster_id: u64,
    pub region: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapperComplex {
    pub nodes: Vec<Node>,
    /// Simplices of dimension 1..=dim_cap in lexicographic order.
    pub simplices: Vec<Simplex>,
    pub dim_cap: usize,
    /// Some point lay in more than `dim_cap + 1` clusters.
    pub truncated: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuildReport {
    pub points_total: usize,
    pub points_clustered: usize,
    pub noise_dropped: usize,
    pub bins_empty: usize,
    pub truncated_simplices_count: usize,
    #[serde(default)]
    pub overlap_warning: bool,
    /// Set once diagnostics have run: whether any violation was found.
    #[serde(default)]
    pub bad: Option<bool>,
}

/// Simplices of a nerve, before node metadata is attached.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Nerve {
    pub simplices: BTreeSet<Simplex>,
    pub truncated: bool,
    /// Distinct `(dim_cap + 1)`-simplices that were dropped.
    pub truncated_count: usize,
}

/// Nerve of a family of point sets, up to `dim_cap`.
///
/// Every nonempty intersection is witnessed by a point, so the simplices are
/// exactly the subsets (of size 2..=dim_cap+1) of the sets of clusters
/// containing each point.
pub fn nerve(clusters: &[Cluster], dim_cap: usize) -> Nerve {
    let witnesses = witness_sets(clusters);
    let max_size = dim_cap + 1;
    let simplices: BTreeSet<Simplex> = witnesses
        .par_iter()
        .flat_map_iter(|w| {
            let mut out = Vec::new();
            for size in 2..=w.len().min(max_size) {
                subsets(w, size, &mut out);
            }
            out
        })
        .collect::<Vec<_>>()
        .into_iter()
        .collect();
    let over: Vec<&Vec<usize>> = witnesses.iter().filter(|w| w.len() > max_size).collect();
    let mut dropped = HashSet::new();
    for w in &over {
        let mut out = Vec::new();
        subsets(w, max_size + 1, &mut out);
        dropped.extend(out);
    }
    Nerve {
        simplices,
        truncated: !over.is_empty(),
        truncated_count: dropped.len(),
    }
}

/// Distinct sets (of size >= 2) of cluster indices sharing a point.
fn witness_sets(clusters: &[Cluster]) -> Vec<Vec<usize>> {
    let n_points = clusters
        .iter()
        .filter_map(|c| c.members.last())
        .max()
        .map_or(0, |m| m + 1);
    let mut containing: Vec<Vec<usize>> = vec![Vec::new(); n_points];
    for (ci, c) in clusters.iter().enumerate() {
        for &p in &c.members {
            containing[p].push(ci);
        }
    }
    let distinct: BTreeSet<Vec<usize>> = containing.into_iter().filter(|w| w.len() >= 2).collect();
    distinct.into_iter().collect()
}

fn subsets(items: &[usize], size: usize, out: &mut Vec<Simplex>) {
    fn rec(items: &[usize], size: usize, start: usize, cur: &mut Vec<usize>, out: &mut Vec<Simplex>) {
        if cur.len() == size {
            out.push(cur.clone());
            return;
        }
        let need = size - cur.len();
        for i in start..=items.len() - need {
            cur.push(items[i]);
            rec(items, size, i + 1, cur, out);
            cur.pop();
        }
    }
    if size <= items.len() {
        rec(items, size, 0, &mut Vec::with_capacity(size), out);
    }
}

impl MapperComplex {
    /// Nerve of `clusters` with node metadata. Node ids are positions in `clusters`.
    pub fn from_clusters(clusters: &[Cluster], lens: &LensMap, dim_cap: usize) -> Self {
        let nerve = nerve(clusters, dim_cap);
        Self::assemble(clusters, lens, dim_cap, nerve)
    }

    pub(crate) fn assemble(clusters: &[Cluster], lens: &LensMap, dim_cap: usize, nerve: Nerve) -> Self {
        let nodes = clusters
            .iter()
            .enumerate()
            .map(|(id, c)| Node {
                id,
                size: c.members.len(),
                members: c.members.clone(),
                bin_id: c.bin_id,
                level: c.level,
                lens_centroid: lens.centroid(&c.members),
                cluster_id: c.id,
                region: c.region,
            })
            .collect();
        MapperComplex {
            nodes,
            simplices: nerve.simplices.into_iter().collect(),
            dim_cap,
            truncated: nerve.truncated,
        }
    }

    pub fn empty(dim_cap: usize) -> Self {
        MapperComplex {
            nodes: Vec::new(),
            simplices: Vec::new(),
            dim_cap,
            truncated: false,
        }
    }

    pub fn simplices_of_dim(&self, dim: usize) -> impl Iterator<Item = &Simplex> {
        self.simplices.iter().filter(move |s| s.len() == dim + 1)
    }

    /// Highest simplex dimension present (0 for a bare vertex set).
    pub fn max_dim(&self) -> usize {
        self.simplices.iter().map(|s| s.len() - 1).max().unwrap_or(0)
    }

    /// Counts of simplices by dimension, index 0 being the node count.
    pub fn dim_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.dim_cap + 1];
        counts[0] = self.nodes.len();
        for s in &self.simplices {
            counts[s.len() - 1] += 1;
        }
        counts
    }

    pub fn canonical(&self) -> CanonicalComplex {
        canonical_form(self)
    }
}

/// Runs the Mapper pipeline: pull back every bin, cluster, take the nerve.
pub fn build_mapper(
    pc: &PointCloud,
    lens: &LensMap,
    cover: &Cover,
    params: &ClusterParams,
    dim_cap: usize,
) -> Result<(MapperComplex, BuildReport)> {
    lens.check_matches(pc)?;
    if lens.dim() != cover.dim() {
        return Err(Error::InvalidLensDimension(lens.dim()));
    }
    if dim_cap == 0 {
        return Err(Error::InvalidResolution("dim_cap must be at least 1".into()));
    }
    cover.check_coverage(lens, None)?;
    let pulled = cluster_pullback(pc, lens, cover, params, None, 0, 0);
    let nerve = nerve(&pulled.clusters, dim_cap);
    let truncated_count = nerve.truncated_count;
    let complex = MapperComplex::assemble(&pulled.clusters, lens, dim_cap, nerve);

    let clustered = clustered_points(&pulled.clusters, pc.len());
    let report = BuildReport {
        points_total: pc.len(),
        points_clustered: clustered,
        noise_dropped: pc.len() - clustered,
        bins_empty: pulled.bins_empty,
        truncated_simplices_count: truncated_count,
        overlap_warning: cover.overlap_warning,
        bad: None,
    };
    Ok((complex, report))
}

pub(crate) fn clustered_points(clusters: &[Cluster], n: usize) -> usize {
    let mut seen = vec![false; n];
    for c in clusters {
        for &p in &c.members {
            seen[p] = true;
        }
    }
    seen.into_iter().filter(|&s| s).count()
}

/// Nodes and edges of a complex.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Graph {
    pub node_count: usize,
    pub edges: Vec<(usize, usize)>,
}

impl Graph {
    /// Subgraph induced on `keep`, relabelled by position in `keep`.
    pub fn induced(&self, keep: &[usize]) -> Graph {
        let mut index = vec![None; self.node_count];
        for (new, &old) in keep.iter().enumerate() {
            index[old] = Some(new);
        }
        let edges = self
            .edges
            .iter()
            .filter_map(|&(a, b)| Some((index[a]?, index[b]?)))
            .collect();
        Graph {
            node_count: keep.len(),
            edges,
        }
    }

    /// Node sets of the connected components, ordered by smallest node.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let mut ds = DisjointSet::new(self.node_count);
        for &(a, b) in &self.edges {
            ds.union(a, b);
        }
        ds.groups()
    }
}

pub fn one_skeleton(mc: &MapperComplex) -> Graph {
    Graph {
        node_count: mc.nodes.len(),
        edges: mc.simplices_of_dim(1).map(|s| (s[0], s[1])).collect(),
    }
}

/// `(β₀, β₁)` of a graph: components, and independent cycles `E - V + β₀`.
pub fn graph_betti(g: &Graph) -> (usize, usize) {
    let mut ds = DisjointSet::new(g.node_count);
    for &(a, b) in &g.edges {
        ds.union(a, b);
    }
    let b0 = ds.count();
    (b0, g.edges.len() + b0 - g.node_count)
}

/// `(β₀, β₁)` over GF(2) of the subcomplex induced on `keep` (all nodes when
/// `None`), with triangles filled in. Unlike [`graph_betti`], cycles that
/// bound 2-simplices are not counted.
pub fn homology_betti(mc: &MapperComplex, keep: Option<&[usize]>) -> (usize, usize) {
    let all: Vec<usize>;
    let keep = match keep {
        Some(k) => k,
        None => {
            all = (0..mc.nodes.len()).collect();
            &all
        }
    };
    let graph = one_skeleton(mc).induced(keep);
    let (b0, cycles) = graph_betti(&graph);
    let mut inside = vec![false; mc.nodes.len()];
    for &v in keep {
        inside[v] = true;
    }
    let edge_index: std::collections::HashMap<(usize, usize), usize> = mc
        .simplices_of_dim(1)
        .filter(|s| inside[s[0]] && inside[s[1]])
        .enumerate()
        .map(|(i, s)| ((s[0], s[1]), i))
        .collect();
    let words = edge_index.len().div_ceil(64);
    let mut pivots: Vec<Option<Vec<u64>>> = vec![None; edge_index.len()];
    let mut rank = 0;
    for t in mc.simplices_of_dim(2).filter(|s| s.iter().all(|&v| inside[v])) {
        let mut row = vec![0u64; words];
        for (a, b) in [(t[0], t[1]), (t[0], t[2]), (t[1], t[2])] {
            let e = edge_index[&(a, b)];
            row[e / 64] ^= 1 << (e % 64);
        }
        while let Some(lead) = leading_bit(&row) {
            match &pivots[lead] {
                Some(p) => row.iter_mut().zip(p).for_each(|(r, q)| *r ^= q),
                None => {
                    pivots[lead] = Some(row);
                    rank += 1;
                    break;
                }
            }
        }
    }
    (b0, cycles - rank)
}

fn leading_bit(row: &[u64]) -> Option<usize> {
    row.iter()
        .enumerate()
        .rev()
        .find(|(_, w)| **w != 0)
        .map(|(i, w)| i * 64 + 63 - w.leading_zeros() as usize)
}

/// Complex described by member sets only, independent of node numbering.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CanonicalComplex {
    pub nodes: Vec<Vec<usize>>,
    pub simplices: Vec<Simplex>,
}

/// Relabels nodes by the sorted order of their member lists. Nodes with
/// equal member lists are interchangeable in the nerve, so ties do not
/// affect the result.
pub fn canonical_form(mc: &MapperComplex) -> CanonicalComplex {
    let mut order: Vec<usize> = (0..mc.nodes.len()).collect();
    order.sort_by(|&a, &b| mc.nodes[a].members.cmp(&mc.nodes[b].members));
    let mut rank = vec![0; order.len()];
    for (r, &i) in order.iter().enumerate() {
        rank[i] = r;
    }
    let mut simplices: Vec<Simplex> = mc
        .simplices
        .iter()
        .map(|s| {
            let mut v: Vec<usize> = s.iter().map(|&i| rank[i]).collect();
            v.sort_unstable();
            v
        })
        .collect();
    simplices.sort();
    CanonicalComplex {
        nodes: order.iter().map(|&i| mc.nodes[i].members.clone()).collect(),
        simplices,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cover::build_cuboidal_cover;
    use crate::geometry::BoundingBox;

    pub(crate) fn clusters(sets: &[&[usize]]) -> Vec<Cluster> {
        sets.iter()
            .enumerate()
            .map(|(i, s)| Cluster {
                id: i as u64,
                members: s.to_vec(),
                bin_id: i,
                level: 0,
                region: 0,
            })
            .collect()
    }

    fn simplices(n: &Nerve) -> Vec<Simplex> {
        n.simplices.iter().cloned().collect()
    }

    #[test]
    fn chain_has_no_triangle() {
        let n = nerve(&clusters(&[&[1, 2], &[2, 3], &[3, 4]]), 3);
        assert_eq!(simplices(&n), vec![vec![0, 1], vec![1, 2]]);
        assert!(!n.truncated);
    }

    #[test]
    fn common_witness_gives_triangle_and_faces() {
        let n = nerve(&clusters(&[&[1, 2], &[1, 3], &[1, 4]]), 3);
        assert_eq!(
            simplices(&n),
            vec![vec![0, 1], vec![0, 1, 2], vec![0, 2], vec![1, 2]]
        );
    }

    #[test]
    fn disjoint_clusters_are_isolated() {
        let n = nerve(&clusters(&[&[1], &[2]]), 3);
        assert!(n.simplices.is_empty());
    }

    #[test]
    fn cap_truncates_and_counts() {
        let n = nerve(&clusters(&[&[0], &[0], &[0], &[0]]), 2);
        assert!(n.truncated);
        assert_eq!(n.truncated_count, 1);
        assert_eq!(n.simplices.iter().filter(|s| s.len() == 3).count(), 4);
    }

    #[test]
    fn skeleton_and_betti() {
        let lens = LensMap::new(vec![vec![0.0]; 5]).unwrap();
        let mc = MapperComplex::from_clusters(&clusters(&[&[1, 2], &[1, 3], &[1, 4]]), &lens, 3);
        let g = one_skeleton(&mc);
        assert_eq!(g.edges.len(), 3);
        assert_eq!(graph_betti(&g), (1, 1));

        let empty = one_skeleton(&MapperComplex::empty(3));
        assert_eq!(empty, Graph::default());
        assert_eq!(graph_betti(&empty), (0, 0));

        let two = Graph { node_count: 2, edges: vec![] };
        assert_eq!(graph_betti(&two), (2, 0));
        let path = Graph {
            node_count: 5,
            edges: vec![(0, 1), (1, 2), (2, 3), (3, 4)],
        };
        assert_eq!(graph_betti(&path), (1, 0));
    }

    #[test]
    fn filled_triangles_do_not_count_as_cycles() {
        let lens = LensMap::new(vec![vec![0.0]; 8]).unwrap();
        let filled = MapperComplex::from_clusters(&clusters(&[&[1, 2], &[1, 3], &[1, 4]]), &lens, 3);
        assert_eq!(graph_betti(&one_skeleton(&filled)), (1, 1));
        assert_eq!(homology_betti(&filled, None), (1, 0));

        let hollow = MapperComplex::from_clusters(&clusters(&[&[1, 2], &[2, 3], &[3, 1]]), &lens, 3);
        assert_eq!(homology_betti(&hollow, None), (1, 1));

        // a square of two filled triangles sharing a diagonal, plus a pendant edge
        let square = MapperComplex::from_clusters(
            &clusters(&[&[1, 2], &[1, 2, 3, 5], &[3, 4, 5], &[2, 4, 5, 6], &[6, 7]]),
            &lens,
            3,
        );
        assert_eq!(homology_betti(&square, None), (1, 0));
        assert_eq!(homology_betti(&square, Some(&[0, 2, 4])), (3, 0));
    }

    #[test]
    fn single_point_single_bin() {
        let pc = PointCloud::new(vec![vec![0.5, 0.5]]).unwrap();
        let lens = LensMap::new(vec![vec![0.5, 0.5]]).unwrap();
        let cover =
            build_cuboidal_cover(&BoundingBox::new(vec![0.0, 0.0], vec![1.0, 1.0]), 1, 0.1).unwrap();
        let (mc, report) = build_mapper(&pc, &lens, &cover, &ClusterParams::single(1.0), 3).unwrap();
        assert_eq!(mc.nodes.len(), 1);
        assert!(mc.simplices.is_empty());
        assert_eq!(report.points_clustered, 1);
        assert_eq!(report.noise_dropped, 0);
    }

    #[test]
    fn uncovered_lens_is_rejected() {
        let pc = PointCloud::new(vec![vec![0.5], vec![3.0]]).unwrap();
        let lens = LensMap::new(vec![vec![0.5], vec![3.0]]).unwrap();
        let cover = build_cuboidal_cover(&BoundingBox::new(vec![0.0], vec![1.0]), 2, 0.1).unwrap();
        assert!(matches!(
            build_mapper(&pc, &lens, &cover, &ClusterParams::single(1.0), 3),
            Err(Error::CoverageError { point: 1 })
        ));
    }

    #[test]
    fn canonical_form_ignores_node_order() {
        let lens = LensMap::new(vec![vec![0.0]; 6]).unwrap();
        let a = MapperComplex::from_clusters(&clusters(&[&[1, 2], &[2, 3], &[3, 4, 5]]), &lens, 2);
        let b = MapperComplex::from_clusters(&clusters(&[&[3, 4, 5], &[1, 2], &[2, 3]]), &lens, 2);
        assert_ne!(a.simplices, b.simplices);
        assert_eq!(a.canonical(), b.canonical());
    }

    #[test]
    fn complex_json_shape() {
        let lens = LensMap::new(vec![vec![0.0, 1.0]; 3]).unwrap();
        let mc = MapperComplex::from_clusters(&clusters(&[&[0, 1], &[1, 2]]), &lens, 3);
        let v = serde_json::to_value(&mc).unwrap();
        assert_eq!(v["simplices"], serde_json::json!([[0, 1]]));
        assert_eq!(v["nodes"][1]["members"], serde_json::json!([1, 2]));
        assert_eq!(v["nodes"][1]["size"], 2);
        assert_eq!(v["nodes"][0]["lens_centroid"], serde_json::json!([0.0, 1.0]));
        assert_eq!(v["dim_cap"], 3);
        assert_eq!(v["truncated"], false);
    }
}
