//! Towers of covers, the Mappers they induce, and 0-dimensional persistence
//! along the tower.
//!
//! Every level shares one grid of cells anchored at the lower corner of the
//! bounds. Level `i` grows each cell to a bin of size `ε_i`; scales increase
//! with the level, so a bin is always contained in the bin of the same cell
//! one level up and the map of covers is the identity on cell indices.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clustering::{cluster_pullback, Cluster, ClusterParams};
use crate::complex::{one_skeleton, MapperComplex};
use crate::cover::{widen_degenerate, Bin, Cover, CoverScheme};
use crate::error::{Error, Result};
use crate::geometry::{BoundingBox, LensMap, PointCloud};

/// Number of scales and their range, as fractions of the reference bin size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TowerConfig {
    pub levels: usize,
    pub lo_fraction: f64,
    pub hi_fraction: f64,
}

impl Default for TowerConfig {
    fn default() -> Self {
        TowerConfig {
            levels: 5,
            lo_fraction: 0.5,
            hi_fraction: 1.0,
        }
    }
}

impl TowerConfig {
    pub fn with_levels(levels: usize) -> Self {
        TowerConfig {
            levels,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.levels < 2 {
            return Err(Error::InvalidTower(format!("need at least 2 levels, got {}", self.levels)));
        }
        if !(self.lo_fraction > 0.0 && self.lo_fraction < self.hi_fraction && self.hi_fraction.is_finite()) {
            return Err(Error::InvalidTower(format!(
                "scale range must satisfy 0 < lo < hi, got [{}, {}]",
                self.lo_fraction, self.hi_fraction
            )));
        }
        Ok(())
    }

    /// Linearly spaced scale fractions from `lo_fraction` to `hi_fraction`.
    pub fn scales(&self) -> Vec<f64> {
        let k = self.levels;
        (0..k)
            .map(|i| {
                if i + 1 == k {
                    self.hi_fraction
                } else {
                    self.lo_fraction + (self.hi_fraction - self.lo_fraction) * i as f64 / (k - 1) as f64
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TowerOfCovers {
    /// Scale of each level as a multiple of `reference_size`; ascending.
    pub levels: Vec<f64>,
    /// Per-axis bin size that scale 1.0 stands for.
    pub reference_size: Vec<f64>,
    pub cells_per_axis: Vec<usize>,
    pub covers: Vec<Cover>,
    /// `maps[i][bin]`: bin at level `i + 1` receiving `bin` of level `i`.
    pub maps: Vec<Vec<usize>>,
}

/// Tower over `bounds` whose reference size is one bin of a
/// `base_cells_per_axis` grid.
pub fn build_tower(
    bounds: &BoundingBox,
    base_cells_per_axis: usize,
    g: f64,
    config: &TowerConfig,
) -> Result<TowerOfCovers> {
    if base_cells_per_axis == 0 {
        return Err(Error::InvalidResolution("base_cells_per_axis must be at least 1".into()));
    }
    let bounds = widen_degenerate(bounds);
    let reference: Vec<f64> = (0..bounds.dim())
        .map(|k| bounds.extent(k) / base_cells_per_axis as f64)
        .collect();
    TowerOfCovers::with_reference_size(&bounds, &reference, g, config)
}

impl TowerOfCovers {
    pub fn with_reference_size(
        bounds: &BoundingBox,
        reference_size: &[f64],
        g: f64,
        config: &TowerConfig,
    ) -> Result<Self> {
        config.validate()?;
        if !(0.0..1.0).contains(&g) {
            return Err(Error::InvalidOverlap(g));
        }
        let d = bounds.dim();
        if reference_size.len() != d || reference_size.iter().any(|&r| r.is_nan() || r <= 0.0) {
            return Err(Error::InvalidTower("reference size must be positive on every axis".into()));
        }
        let bounds = widen_degenerate(bounds);
        let steps: Vec<f64> = reference_size.iter().map(|r| r * config.lo_fraction).collect();
        let cells_per_axis: Vec<usize> = (0..d)
            .map(|k| ((bounds.extent(k) / steps[k]) - 1e-9).ceil().max(1.0) as usize)
            .collect();
        let cell_lo: Vec<Vec<f64>> = (0..d)
            .map(|k| {
                (0..=cells_per_axis[k])
                    .map(|i| bounds.lo[k] + steps[k] * i as f64)
                    .collect()
            })
            .collect();
        let total: usize = cells_per_axis.iter().product();
        let levels = config.scales();

        let covers: Vec<Cover> = levels
            .iter()
            .map(|&scale| {
                let bins = (0..total)
                    .map(|id| {
                        let mut rest = id;
                        let mut base_lo = Vec::with_capacity(d);
                        let mut base_hi = Vec::with_capacity(d);
                        let mut grown_hi = Vec::with_capacity(d);
                        for k in 0..d {
                            let i = rest % cells_per_axis[k];
                            rest /= cells_per_axis[k];
                            let size = scale * reference_size[k];
                            let lo = cell_lo[k][i];
                            let hi = (lo + size).max(cell_lo[k][i + 1]);
                            let mut top = hi + g * size;
                            if hi >= bounds.hi[k] && top <= bounds.hi[k] {
                                top = bounds.hi[k].next_up();
                            }
                            base_lo.push(lo);
                            base_hi.push(hi);
                            grown_hi.push(top);
                        }
                        Bin {
                            id,
                            base_lo,
                            base_hi,
                            grown_hi,
                            level: 0,
                        }
                    })
                    .collect();
                Cover {
                    scheme: CoverScheme::Cuboidal,
                    g,
                    bins,
                    bounds: bounds.clone(),
                    overlap_warning: false,
                }
            })
            .collect();
        let maps = vec![(0..total).collect::<Vec<_>>(); levels.len() - 1];
        let tower = TowerOfCovers {
            levels,
            reference_size: reference_size.to_vec(),
            cells_per_axis,
            covers,
            maps,
        };
        tower.verify_containment()?;
        Ok(tower)
    }

    /// Checks `U_a ⊆ V_ξ(a)` for every bin of every adjacent pair of levels.
    pub fn verify_containment(&self) -> Result<()> {
        for (level, map) in self.maps.iter().enumerate() {
            for bin in &self.covers[level].bins {
                let target = &self.covers[level + 1].bins[map[bin.id]];
                if !bin.is_within(target) {
                    return Err(Error::TowerContainment { level, bin: bin.id });
                }
            }
        }
        Ok(())
    }

    /// Composite bin map from level `from` to level `to >= from`.
    pub fn bin_map(&self, from: usize, to: usize, bin: usize) -> usize {
        (from..to).fold(bin, |b, level| self.maps[level][b])
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }
}

/// Mappers of every level of a tower, with node maps between adjacent levels.
#[derive(Debug, Clone)]
pub struct MapperTower {
    pub levels: Vec<f64>,
    pub clusters: Vec<Vec<Cluster>>,
    pub complexes: Vec<MapperComplex>,
    /// `node_maps[i][v]`: node of level `i + 1` receiving node `v` of level `i`.
    pub node_maps: Vec<Vec<Option<usize>>>,
    /// Nodes whose image had to be found outside the image bin.
    pub soft_warnings: usize,
    bin_maps: Vec<Vec<usize>>,
}

/// Builds the Mapper of the points in `subset` at every level of `tower`.
pub fn tower_mappers(
    pc: &PointCloud,
    lens: &LensMap,
    subset: &[usize],
    tower: &TowerOfCovers,
    params: &ClusterParams,
    dim_cap: usize,
) -> Result<MapperTower> {
    if subset.is_empty() {
        return Err(Error::Empty("tower Mapper needs at least one point".into()));
    }
    lens.check_matches(pc)?;
    tower.covers[0].check_coverage(lens, Some(subset))?;
    let clusters: Vec<Vec<Cluster>> = tower
        .covers
        .par_iter()
        .map(|cover| cluster_pullback(pc, lens, cover, params, Some(subset), 0, 0).clusters)
        .collect();
    let complexes = clusters
        .iter()
        .map(|c| MapperComplex::from_clusters(c, lens, dim_cap))
        .collect();

    let mut soft_warnings = 0;
    let node_maps = (0..tower.len() - 1)
        .map(|i| {
            let (map, warned) = plurality_map(&clusters[i], &clusters[i + 1], |b| tower.maps[i][b]);
            soft_warnings += warned;
            map
        })
        .collect();
    Ok(MapperTower {
        levels: tower.levels.clone(),
        clusters,
        complexes,
        node_maps,
        soft_warnings,
        bin_maps: tower.maps.clone(),
    })
}

/// Sends each source cluster to the target cluster in its image bin sharing
/// the most members (lowest index on ties). Clusters sharing nothing with
/// their image bin fall back to the best match anywhere.
fn plurality_map(
    source: &[Cluster],
    target: &[Cluster],
    bin_map: impl Fn(usize) -> usize,
) -> (Vec<Option<usize>>, usize) {
    let mut warned = 0;
    let map = source
        .iter()
        .map(|c| {
            let image_bin = bin_map(c.bin_id);
            let best = |in_bin: bool| {
                target
                    .iter()
                    .enumerate()
                    .filter(|(_, t)| !in_bin || t.bin_id == image_bin)
                    .map(|(j, t)| (shared(&c.members, &t.members), j))
                    .filter(|&(n, _)| n > 0)
                    .max_by(|a, b| a.0.cmp(&b.0).then(b.1.cmp(&a.1)))
                    .map(|(_, j)| j)
            };
            best(true).or_else(|| {
                warned += 1;
                best(false)
            })
        })
        .collect();
    (map, warned)
}

fn shared(a: &[usize], b: &[usize]) -> usize {
    let (mut i, mut j, mut n) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                n += 1;
                i += 1;
                j += 1;
            }
        }
    }
    n
}

impl MapperTower {
    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    /// Node map from level `from` to level `to` obtained by composing adjacent maps.
    pub fn compose(&self, from: usize, to: usize) -> Vec<Option<usize>> {
        (0..self.complexes[from].nodes.len())
            .map(|v| (from..to).try_fold(v, |node, level| self.node_maps[level][node]))
            .collect()
    }

    /// Node map from level `from` to level `to` computed directly by
    /// plurality membership in the composite image bin.
    pub fn direct_map(&self, from: usize, to: usize) -> Vec<Option<usize>> {
        let maps = &self.bin_maps;
        plurality_map(&self.clusters[from], &self.clusters[to], |b| {
            (from..to).fold(b, |bin, level| maps[level][bin])
        })
        .0
    }

    /// Whether the map from level `level` to `level + 1` sends every simplex
    /// to a simplex (or a vertex).
    pub fn is_simplicial(&self, level: usize) -> bool {
        let map = &self.node_maps[level];
        let next = &self.complexes[level + 1];
        self.complexes[level].simplices.iter().all(|s| {
            let Some(mut image) = s.iter().map(|&v| map[v]).collect::<Option<Vec<usize>>>() else {
                return false;
            };
            image.sort_unstable();
            image.dedup();
            image.len() == 1 || next.simplices.binary_search(&image).is_ok()
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersistenceReport {
    pub levels: Vec<f64>,
    pub beta0: Vec<usize>,
    /// `[birth, death]` scale of every tracked component.
    pub pairs: Vec<[f64; 2]>,
    pub beta0_mode: usize,
}

/// The most frequent β₀ value; ties go to the smaller value.
pub fn beta0_mode(beta0: &[usize]) -> usize {
    let mut counts = std::collections::BTreeMap::new();
    for &b in beta0 {
        *counts.entry(b).or_insert(0usize) += 1;
    }
    counts
        .into_iter()
        .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
        .map_or(0, |(b, _)| b)
}

/// Tracks connected components through the tower.
///
/// A component class is born at the first scale where it is not the image
/// of an earlier class. When several classes land in one component, the
/// oldest survives and the rest die at the previous scale, which is the
/// last scale where they were still distinct.
pub fn persistence0(mt: &MapperTower) -> Result<PersistenceReport> {
    if mt.len() < 2 {
        return Err(Error::InvalidTower("persistence needs at least 2 levels".into()));
    }
    let components: Vec<Vec<Vec<usize>>> = mt
        .complexes
        .iter()
        .map(|c| one_skeleton(c).components())
        .collect();
    let component_of: Vec<Vec<usize>> = mt
        .complexes
        .iter()
        .zip(&components)
        .map(|(c, comps)| {
            let mut of = vec![0; c.nodes.len()];
            for (ci, comp) in comps.iter().enumerate() {
                for &v in comp {
                    of[v] = ci;
                }
            }
            of
        })
        .collect();

    let mut births: Vec<f64> = Vec::new();
    let mut deaths: Vec<Option<f64>> = Vec::new();
    let mut class_of: Vec<usize> = components[0]
        .iter()
        .map(|_| {
            births.push(mt.levels[0]);
            deaths.push(None);
            births.len() - 1
        })
        .collect();

    for level in 0..mt.len() - 1 {
        let map = &mt.node_maps[level];
        let mut incoming: Vec<Vec<usize>> = vec![Vec::new(); components[level + 1].len()];
        for (ci, comp) in components[level].iter().enumerate() {
            let class = class_of[ci];
            let mut votes = std::collections::BTreeMap::new();
            for &v in comp {
                if let Some(w) = map[v] {
                    *votes.entry(component_of[level + 1][w]).or_insert(0usize) += 1;
                }
            }
            match votes.into_iter().max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0))) {
                Some((target, _)) => incoming[target].push(class),
                None => deaths[class] = Some(mt.levels[level]),
            }
        }
        class_of = incoming
            .into_iter()
            .map(|classes| {
                let Some(&survivor) = classes
                    .iter()
                    .min_by(|&&a, &&b| births[a].total_cmp(&births[b]).then(a.cmp(&b)))
                else {
                    births.push(mt.levels[level + 1]);
                    deaths.push(None);
                    return births.len() - 1;
                };
                for &c in &classes {
                    if c != survivor {
                        deaths[c] = Some(mt.levels[level]);
                    }
                }
                survivor
            })
            .collect();
    }
    let last = *mt.levels.last().expect("non-empty tower");
    let pairs = births
        .iter()
        .zip(&deaths)
        .map(|(&b, d)| [b, d.unwrap_or(last)])
        .collect();
    let beta0: Vec<usize> = components.iter().map(Vec::len).collect();
    Ok(PersistenceReport {
        levels: mt.levels.clone(),
        beta0_mode: beta0_mode(&beta0),
        beta0,
        pairs,
    })
}
