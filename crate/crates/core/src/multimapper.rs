//! Region-local rescaling of a Mapper.
//!
//! Magnifying a set of nodes `S` takes the points they cover, `X̃`, keeps
//! every cluster that still reaches outside `X̃`, re-clusters `X̃` under a
//! new cover built on the bounds of its lens values, and takes the nerve of
//! the union. Coarsening is the same operation with larger bins.

use std::collections::BTreeSet;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::clustering::{cluster_pullback, Cluster, ClusterParams};
use crate::complex::{build_mapper, clustered_points, BuildReport, MapperComplex};
use crate::cover::{Cover, CoverSpec};
use crate::error::{Error, Result};
use crate::geometry::{lens_bounds, BoundingBox, LensMap, PointCloud};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MagnifyRequest {
    pub node_ids: Vec<usize>,
    pub cover: CoverSpec,
    pub cluster: ClusterParams,
}

/// One magnification step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionRecord {
    /// Region tag given to the clusters this step created.
    pub region: usize,
    pub node_ids: Vec<usize>,
    /// Stable ids of the selected clusters.
    pub cluster_ids: Vec<u64>,
    pub cover_spec: CoverSpec,
    pub params: ClusterParams,
    /// Local cover on the selection's lens bounds; absent for an empty selection.
    pub cover: Option<Cover>,
    pub clusters_removed: usize,
    pub clusters_added: usize,
    pub degeneracy_points: usize,
}

#[derive(Debug, Clone)]
pub struct AnalysisState {
    pub points: Arc<PointCloud>,
    pub lens: Arc<LensMap>,
    pub dim_cap: usize,
    pub base_spec: CoverSpec,
    pub base_params: ClusterParams,
    pub base_cover: Cover,
    pub clusters: Vec<Cluster>,
    /// Points in no cluster, ascending.
    pub noise: Vec<usize>,
    pub complex: MapperComplex,
    pub region_log: Vec<RegionRecord>,
    pub report: BuildReport,
}

impl AnalysisState {
    /// Builds the initial Mapper over the full lens bounds.
    pub fn new(
        points: Arc<PointCloud>,
        lens: Arc<LensMap>,
        spec: CoverSpec,
        params: ClusterParams,
        dim_cap: usize,
    ) -> Result<Self> {
        lens.check_matches(&points)?;
        let cover = spec.build(&lens_bounds(&lens))?;
        let (complex, report) = build_mapper(&points, &lens, &cover, &params, dim_cap)?;
        let clusters = clusters_of(&complex);
        let noise = noise_of(&clusters, points.len());
        Ok(AnalysisState {
            points,
            lens,
            dim_cap,
            base_spec: spec,
            base_params: params,
            base_cover: cover,
            clusters,
            noise,
            complex,
            region_log: Vec::new(),
            report,
        })
    }

    /// Reassembles a state from stored clusters, recomputing the nerve.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        points: Arc<PointCloud>,
        lens: Arc<LensMap>,
        dim_cap: usize,
        base_spec: CoverSpec,
        base_params: ClusterParams,
        base_cover: Cover,
        clusters: Vec<Cluster>,
        region_log: Vec<RegionRecord>,
        report: BuildReport,
    ) -> Result<Self> {
        lens.check_matches(&points)?;
        if let Some(bad) = clusters
            .iter()
            .find(|c| c.members.is_empty() || c.members.iter().any(|&p| p >= points.len()))
        {
            return Err(Error::CorruptSession(format!("cluster {} has invalid members", bad.id)));
        }
        let complex = MapperComplex::from_clusters(&clusters, &lens, dim_cap);
        let noise = noise_of(&clusters, points.len());
        Ok(AnalysisState {
            points,
            lens,
            dim_cap,
            base_spec,
            base_params,
            base_cover,
            clusters,
            noise,
            complex,
            region_log,
            report,
        })
    }

    /// Cover a cluster of the given region came from.
    pub fn region_cover(&self, region: usize) -> Option<&Cover> {
        match region {
            0 => Some(&self.base_cover),
            r => self.region_log.get(r - 1)?.cover.as_ref(),
        }
    }

    pub fn region_params(&self, region: usize) -> ClusterParams {
        match region {
            0 => self.base_params,
            r => self.region_log[r - 1].params,
        }
    }

    /// Bin a node's cluster was drawn from.
    pub fn node_bin(&self, node: usize) -> Option<&crate::cover::Bin> {
        let c = self.clusters.get(node)?;
        self.region_cover(c.region)?.bin(c.bin_id)
    }

    fn check_nodes(&self, ids: &[usize]) -> Result<Vec<usize>> {
        let set: BTreeSet<usize> = ids.iter().copied().collect();
        if let Some(&bad) = set.iter().find(|&&id| id >= self.clusters.len()) {
            return Err(Error::UnknownNode(bad));
        }
        Ok(set.into_iter().collect())
    }

    /// Points covered by the selected nodes, ascending.
    pub fn selection_points(&self, node_ids: &[usize]) -> Result<Vec<usize>> {
        let nodes = self.check_nodes(node_ids)?;
        let mut pts: Vec<usize> = nodes
            .iter()
            .flat_map(|&v| self.clusters[v].members.iter().copied())
            .collect();
        pts.sort_unstable();
        pts.dedup();
        Ok(pts)
    }

    fn local_cover(&self, selected_points: &[usize], spec: &CoverSpec) -> Result<Option<Cover>> {
        match self.lens.subset_bounds(selected_points) {
            Some(bounds) => spec.build(&bounds).map(Some),
            None => Ok(None),
        }
    }

    /// Bins per axis giving bins `factor` times smaller than those of the
    /// selected nodes, over the bounds of the selection's lens values.
    /// A factor below 1 gives larger bins.
    pub fn scaled_bins(&self, node_ids: &[usize], factor: f64) -> Result<usize> {
        if !(factor > 0.0 && factor.is_finite()) {
            return Err(Error::InvalidResolution(format!("scale factor must be positive, got {factor}")));
        }
        let nodes = self.check_nodes(node_ids)?;
        let pts = self.selection_points(&nodes)?;
        let Some(bounds) = self.lens.subset_bounds(&pts) else {
            return Ok(self.base_spec.bins_per_axis);
        };
        let bounds = crate::cover::widen_degenerate(&bounds);
        let mut bins = 1usize;
        for k in 0..bounds.dim() {
            let current = nodes
                .iter()
                .filter_map(|&v| self.node_bin(v))
                .map(|b| b.base_width(k))
                .fold(0.0, f64::max);
            if current > 0.0 {
                let n = (bounds.extent(k) * factor / current - 1e-9).ceil();
                bins = bins.max(n.max(1.0) as usize);
            }
        }
        Ok(bins)
    }

    /// Points outside the selection whose lens values fall in the local
    /// cover the request would build. They share lens values with the
    /// selection but are not re-clustered.
    pub fn degeneracy_guard(&self, req: &MagnifyRequest) -> Result<Vec<usize>> {
        let selected = self.selection_points(&req.node_ids)?;
        let Some(cover) = self.local_cover(&selected, &req.cover)? else {
            return Ok(Vec::new());
        };
        Ok(outside_in_cover(&self.lens, &cover, &selected))
    }

    /// Replaces the sub-complex on the selected nodes by a Mapper of their
    /// points under the requested local cover and clustering, and glues it
    /// to the remaining clusters through the nerve. Returns a new state.
    pub fn magnify(&self, req: &MagnifyRequest) -> Result<AnalysisState> {
        let nodes = self.check_nodes(&req.node_ids)?;
        let selected = self.selection_points(&nodes)?;
        let region = self.region_log.len() + 1;
        let local = self.local_cover(&selected, &req.cover)?;

        let mut in_selection = vec![false; self.points.len()];
        for &p in &selected {
            in_selection[p] = true;
        }
        let (kept, removed): (Vec<Cluster>, Vec<Cluster>) = self
            .clusters
            .iter()
            .cloned()
            .partition(|c| c.members.iter().any(|&p| !in_selection[p]));

        let level = nodes
            .iter()
            .map(|&v| self.clusters[v].level)
            .max()
            .map_or(0, |l| l + 1);
        let fresh = match &local {
            Some(cover) => cluster_pullback(&self.points, &self.lens, cover, &req.cluster, Some(&selected), region, 0)
                .clusters
                .into_iter()
                .map(|c| Cluster { level, ..c })
                .collect(),
            None => Vec::new(),
        };
        let degeneracy = local
            .as_ref()
            .map_or(0, |c| outside_in_cover(&self.lens, c, &selected).len());

        let record = RegionRecord {
            region,
            node_ids: nodes.clone(),
            cluster_ids: nodes.iter().map(|&v| self.clusters[v].id).collect(),
            cover_spec: req.cover,
            params: req.cluster,
            cover: local,
            clusters_removed: removed.len(),
            clusters_added: fresh.len(),
            degeneracy_points: degeneracy,
        };

        let mut clusters = kept;
        clusters.extend(fresh);
        let nerve = crate::complex::nerve(&clusters, self.dim_cap);
        let nerve_dropped = nerve.truncated_count;
        let complex = MapperComplex::assemble(&clusters, &self.lens, self.dim_cap, nerve);
        let noise = noise_of(&clusters, self.points.len());
        let mut region_log = self.region_log.clone();
        region_log.push(record);
        let report = BuildReport {
            points_total: self.points.len(),
            points_clustered: clustered_points(&clusters, self.points.len()),
            noise_dropped: noise.len(),
            bins_empty: self.report.bins_empty,
            truncated_simplices_count: nerve_dropped,
            overlap_warning: self.report.overlap_warning
                || region_log.iter().any(|r| r.cover.as_ref().is_some_and(|c| c.overlap_warning)),
            bad: None,
        };
        Ok(AnalysisState {
            points: Arc::clone(&self.points),
            lens: Arc::clone(&self.lens),
            dim_cap: self.dim_cap,
            base_spec: self.base_spec,
            base_params: self.base_params,
            base_cover: self.base_cover.clone(),
            clusters,
            noise,
            complex,
            region_log,
            report,
        })
    }

    /// Magnification with a coarser local cover.
    pub fn coarsen(&self, req: &MagnifyRequest) -> Result<AnalysisState> {
        self.magnify(req)
    }

    pub fn lens_bounds(&self) -> BoundingBox {
        lens_bounds(&self.lens)
    }
}

fn clusters_of(complex: &MapperComplex) -> Vec<Cluster> {
    complex
        .nodes
        .iter()
        .map(|n| Cluster {
            id: n.cluster_id,
            members: n.members.clone(),
            bin_id: n.bin_id,
            level: n.level,
            region: n.region,
        })
        .collect()
}

fn noise_of(clusters: &[Cluster], n: usize) -> Vec<usize> {
    let mut seen = vec![false; n];
    for c in clusters {
        for &p in &c.members {
            seen[p] = true;
        }
    }
    (0..n).filter(|&p| !seen[p]).collect()
}

fn outside_in_cover(lens: &LensMap, cover: &Cover, selected: &[usize]) -> Vec<usize> {
    let mut inside = vec![false; lens.len()];
    for &p in selected {
        inside[p] = true;
    }
    (0..lens.len())
        .filter(|&p| !inside[p] && cover.bins.iter().any(|b| b.contains(lens.value(p))))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cover::CoverScheme;
    use crate::fixtures::Fixture;
    use crate::geometry::lens_coordinate;

    fn state(points: PointCloud, axes: &[usize], spec: CoverSpec, params: ClusterParams) -> AnalysisState {
        let lens = lens_coordinate(&points, axes).unwrap();
        AnalysisState::new(Arc::new(points), Arc::new(lens), spec, params, 3).unwrap()
    }

    fn cuboidal(bins: usize, g: f64) -> CoverSpec {
        CoverSpec {
            scheme: CoverScheme::Cuboidal,
            bins_per_axis: bins,
            g,
        }
    }

    #[test]
    fn empty_selection_only_logs() {
        let s = state(Fixture::Circle.generate(7, Some(300)), &[0, 1], cuboidal(4, 0.3), ClusterParams::single(0.2));
        let req = MagnifyRequest {
            node_ids: vec![],
            cover: cuboidal(8, 0.3),
            cluster: ClusterParams::single(0.2),
        };
        let next = s.magnify(&req).unwrap();
        assert_eq!(next.complex.canonical(), s.complex.canonical());
        assert_eq!(next.region_log.len(), 1);
        assert!(next.region_log[0].cover.is_none());
        assert!(s.degeneracy_guard(&req).unwrap().is_empty());
    }

    #[test]
    fn unknown_node_is_rejected() {
        let s = state(Fixture::TwoBlob.generate(1, None), &[0, 1], cuboidal(2, 0.2), ClusterParams::single(2.0));
        let req = MagnifyRequest {
            node_ids: vec![999],
            cover: cuboidal(2, 0.2),
            cluster: ClusterParams::single(2.0),
        };
        assert!(matches!(s.magnify(&req), Err(Error::UnknownNode(999))));
    }

    #[test]
    fn parallel_segments_expose_degeneracy() {
        let pc = Fixture::ParallelSegments.generate(3, Some(50));
        let s = state(pc, &[0], cuboidal(5, 0.2), ClusterParams::single(0.5));
        let lower: Vec<usize> = (0..s.clusters.len())
            .filter(|&v| s.clusters[v].members.iter().all(|&p| p < 50))
            .collect();
        assert!(!lower.is_empty());
        let req = MagnifyRequest {
            node_ids: lower,
            cover: cuboidal(10, 0.2),
            cluster: ClusterParams::single(0.5),
        };
        let hidden = s.degeneracy_guard(&req).unwrap();
        assert_eq!(hidden, (50..100).collect::<Vec<_>>());

        let next = s.magnify(&req).unwrap();
        // The upper segment's clusters are untouched.
        let upper = |st: &AnalysisState| -> Vec<Vec<usize>> {
            let mut v: Vec<Vec<usize>> = st
                .clusters
                .iter()
                .filter(|c| c.members[0] >= 50)
                .map(|c| c.members.clone())
                .collect();
            v.sort();
            v
        };
        assert_eq!(upper(&s), upper(&next));
        assert_eq!(next.region_log[0].degeneracy_points, 50);
    }

    #[test]
    fn injective_lens_has_no_degeneracy() {
        let s = state(Fixture::Circle.generate(7, Some(200)), &[0, 1], cuboidal(4, 0.3), ClusterParams::single(0.2));
        let req = MagnifyRequest {
            node_ids: (0..s.clusters.len()).collect(),
            cover: cuboidal(6, 0.3),
            cluster: ClusterParams::single(0.2),
        };
        assert!(s.degeneracy_guard(&req).unwrap().is_empty());
    }

    #[test]
    fn points_are_conserved() {
        let s = state(
            Fixture::BlobRing.generate(7, None),
            &[0, 1],
            cuboidal(6, 0.25),
            ClusterParams::default(),
        );
        let req = MagnifyRequest {
            node_ids: vec![0, 1, 2],
            cover: cuboidal(4, 0.3),
            cluster: ClusterParams::default(),
        };
        let next = s.magnify(&req).unwrap();
        let mut covered = vec![false; next.points.len()];
        for c in &next.clusters {
            c.members.iter().for_each(|&p| covered[p] = true);
        }
        next.noise.iter().for_each(|&p| covered[p] = true);
        assert!(covered.into_iter().all(|c| c));
        assert_eq!(next.report.noise_dropped, next.noise.len());
        let region = &next.region_log[0];
        assert_eq!(
            next.clusters.len(),
            s.clusters.len() - region.clusters_removed + region.clusters_added
        );
        assert!(next.clusters.iter().filter(|c| c.region == 1).all(|c| c.id >= 1_000_000));
    }

    #[test]
    fn scaled_bins_follow_selected_bin_size() {
        let s = state(Fixture::Circle.generate(7, Some(300)), &[0, 1], cuboidal(4, 0.3), ClusterParams::single(0.2));
        let all: Vec<usize> = (0..s.clusters.len()).collect();
        assert_eq!(s.scaled_bins(&all, 2.0).unwrap(), 8);
        assert_eq!(s.scaled_bins(&all, 0.5).unwrap(), 2);
        assert_eq!(s.scaled_bins(&[], 2.0).unwrap(), 4);
    }
}
