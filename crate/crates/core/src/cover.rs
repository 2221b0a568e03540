//! Overlapping box covers of lens space.
//!
//! A cover is built in two steps: a partition of the lens bounding box into
//! base boxes, then growth of every base box towards the top-right by a
//! fraction `g` of its nominal size. Membership is the half-open test
//! `base_lo <= z < grown_hi` on every axis.
//!
//! Two partitions are supported. The cuboidal grid lets up to `2^d` bins
//! meet at a corner. The brick layout offsets every odd row by half a brick,
//! so partition corners are where three bricks meet and, for `g < 0.5`, no
//! point lies in more than three bins.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{BoundingBox, LensMap};

/// Width given to lens axes with no spread.
pub const DEGENERATE_WIDTH: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CoverScheme {
    Cuboidal,
    Brick,
}

impl CoverScheme {
    pub fn as_str(self) -> &'static str {
        match self {
            CoverScheme::Cuboidal => "cuboidal",
            CoverScheme::Brick => "brick",
        }
    }
}

impl std::str::FromStr for CoverScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cuboidal" => Ok(CoverScheme::Cuboidal),
            "brick" => Ok(CoverScheme::Brick),
            other => Err(Error::Parse(format!("unknown cover scheme {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bin {
    pub id: usize,
    pub base_lo: Vec<f64>,
    pub base_hi: Vec<f64>,
    pub grown_hi: Vec<f64>,
    pub level: u32,
}

impl Bin {
    pub fn contains(&self, z: &[f64]) -> bool {
        z.iter()
            .enumerate()
            .all(|(k, &v)| self.base_lo[k] <= v && v < self.grown_hi[k])
    }

    /// Whether this bin's grown box lies inside `other`'s grown box.
    pub fn is_within(&self, other: &Bin) -> bool {
        (0..self.base_lo.len())
            .all(|k| other.base_lo[k] <= self.base_lo[k] && self.grown_hi[k] <= other.grown_hi[k])
    }

    pub fn base_width(&self, axis: usize) -> f64 {
        self.base_hi[axis] - self.base_lo[axis]
    }

    /// Length of the grown box diagonal.
    pub fn diameter(&self) -> f64 {
        crate::geometry::euclidean(&self.base_lo, &self.grown_hi)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cover {
    pub scheme: CoverScheme,
    pub g: f64,
    pub bins: Vec<Bin>,
    pub bounds: BoundingBox,
    /// Set for brick covers with `g >= 0.5`, where the three-bin bound no longer holds.
    #[serde(default)]
    pub overlap_warning: bool,
}

/// Scheme, resolution and overlap: everything needed to build a cover once
/// the lens bounds are known.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoverSpec {
    pub scheme: CoverScheme,
    pub bins_per_axis: usize,
    pub g: f64,
}

impl CoverSpec {
    pub fn build(&self, bounds: &BoundingBox) -> Result<Cover> {
        match self.scheme {
            CoverScheme::Cuboidal => build_cuboidal_cover(bounds, self.bins_per_axis, self.g),
            CoverScheme::Brick => build_brick_cover(bounds, self.bins_per_axis, self.g),
        }
    }
}

/// Bin ids selected for refinement.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PartitionSelector {
    pub bin_ids: BTreeSet<usize>,
}

impl PartitionSelector {
    pub fn new(ids: impl IntoIterator<Item = usize>) -> Self {
        Self {
            bin_ids: ids.into_iter().collect(),
        }
    }
}

fn check_overlap(g: f64) -> Result<()> {
    if (0.0..1.0).contains(&g) {
        Ok(())
    } else {
        Err(Error::InvalidOverlap(g))
    }
}

/// Widens zero-width axes so every bin has positive extent.
pub fn widen_degenerate(bounds: &BoundingBox) -> BoundingBox {
    let mut hi = bounds.hi.clone();
    for (k, h) in hi.iter_mut().enumerate() {
        let lo = bounds.lo[k];
        if *h - lo < DEGENERATE_WIDTH {
            *h = lo + DEGENERATE_WIDTH;
            if *h <= lo {
                *h = lo.next_up();
            }
        }
    }
    BoundingBox::new(bounds.lo.clone(), hi)
}

/// `n + 1` cut positions splitting `[lo, hi]` into `n` equal pieces. The end
/// points are exact so neighbouring pieces share their seams bit-for-bit.
fn cuts(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let mut c: Vec<f64> = (0..=n)
        .map(|i| lo + (hi - lo) * i as f64 / n as f64)
        .collect();
    c[0] = lo;
    c[n] = hi;
    c
}

/// Top edge of a bin after growth. Bins touching the cover's upper bound
/// must reach past it, otherwise the half-open test would miss lens points
/// sitting exactly on the bound when `g = 0`.
fn grow(base_hi: f64, nominal: f64, g: f64, bound_hi: f64) -> f64 {
    let grown = base_hi + g * nominal;
    if base_hi >= bound_hi && grown <= bound_hi {
        bound_hi.next_up()
    } else {
        grown
    }
}

pub fn build_cuboidal_cover(bounds: &BoundingBox, bins_per_axis: usize, g: f64) -> Result<Cover> {
    check_overlap(g)?;
    if bins_per_axis == 0 {
        return Err(Error::InvalidResolution("bins_per_axis must be at least 1".into()));
    }
    let d = bounds.dim();
    if !(1..=2).contains(&d) {
        return Err(Error::InvalidLensDimension(d));
    }
    let bounds = widen_degenerate(bounds);
    let axis_cuts: Vec<Vec<f64>> = (0..d)
        .map(|k| cuts(bounds.lo[k], bounds.hi[k], bins_per_axis))
        .collect();

    let total = bins_per_axis.pow(d as u32);
    let mut bins = Vec::with_capacity(total);
    for id in 0..total {
        let mut rest = id;
        let mut base_lo = Vec::with_capacity(d);
        let mut base_hi = Vec::with_capacity(d);
        let mut grown_hi = Vec::with_capacity(d);
        for (k, c) in axis_cuts.iter().enumerate() {
            let i = rest % bins_per_axis;
            rest /= bins_per_axis;
            base_lo.push(c[i]);
            base_hi.push(c[i + 1]);
            grown_hi.push(grow(c[i + 1], c[i + 1] - c[i], g, bounds.hi[k]));
        }
        bins.push(Bin {
            id,
            base_lo,
            base_hi,
            grown_hi,
            level: 0,
        });
    }
    Ok(Cover {
        scheme: CoverScheme::Cuboidal,
        g,
        bins,
        bounds,
        overlap_warning: false,
    })
}

/// Brick cover with `bins_per_axis` bricks per row and as many rows.
pub fn build_brick_cover(bounds: &BoundingBox, bins_per_axis: usize, g: f64) -> Result<Cover> {
    build_brick_cover_with_rows(bounds, bins_per_axis, bins_per_axis, g)
}

/// Brick cover with explicit column and row counts. Odd rows are shifted by
/// half a brick; the partial bricks at their ends are clipped to the bounds.
pub fn build_brick_cover_with_rows(
    bounds: &BoundingBox,
    columns: usize,
    rows: usize,
    g: f64,
) -> Result<Cover> {
    if bounds.dim() != 2 {
        return Err(Error::BrickCoverDimension(bounds.dim()));
    }
    check_overlap(g)?;
    if columns == 0 || rows == 0 {
        return Err(Error::InvalidResolution("brick counts must be at least 1".into()));
    }
    let bounds = widen_degenerate(bounds);
    let half = cuts(bounds.lo[0], bounds.hi[0], 2 * columns);
    let ys = cuts(bounds.lo[1], bounds.hi[1], rows);
    let width = bounds.extent(0) / columns as f64;
    let height = bounds.extent(1) / rows as f64;

    let mut bins = Vec::new();
    for row in 0..rows {
        let spans: Vec<(f64, f64)> = if row % 2 == 0 {
            (0..columns).map(|i| (half[2 * i], half[2 * i + 2])).collect()
        } else {
            let mut s = vec![(half[0], half[1])];
            s.extend((1..columns).map(|i| (half[2 * i - 1], half[2 * i + 1])));
            s.push((half[2 * columns - 1], half[2 * columns]));
            s
        };
        for (x0, x1) in spans {
            bins.push(Bin {
                id: bins.len(),
                base_lo: vec![x0, ys[row]],
                base_hi: vec![x1, ys[row + 1]],
                grown_hi: vec![
                    grow(x1, width, g, bounds.hi[0]),
                    grow(ys[row + 1], height, g, bounds.hi[1]),
                ],
                level: 0,
            });
        }
    }
    Ok(Cover {
        scheme: CoverScheme::Brick,
        g,
        bins,
        bounds,
        overlap_warning: g >= 0.5,
    })
}

/// Replaces each selected bin by `m^d` children tiling its base box. The
/// children are grown by `g` times their own width.
pub fn slice_refine(cover: &Cover, sel: &PartitionSelector, m: usize) -> Result<Cover> {
    if cover.scheme != CoverScheme::Cuboidal {
        return Err(Error::UnsupportedScheme(cover.scheme.as_str()));
    }
    if m < 2 {
        return Err(Error::InvalidResolution("refinement factor must be at least 2".into()));
    }
    if let Some(&bad) = sel.bin_ids.iter().find(|&&id| id >= cover.bins.len()) {
        return Err(Error::UnknownBin(bad));
    }
    let d = cover.bounds.dim();
    let mut bins = Vec::new();
    for bin in &cover.bins {
        if !sel.bin_ids.contains(&bin.id) {
            bins.push(Bin {
                id: bins.len(),
                ..bin.clone()
            });
            continue;
        }
        let axis_cuts: Vec<Vec<f64>> = (0..d)
            .map(|k| cuts(bin.base_lo[k], bin.base_hi[k], m))
            .collect();
        for child in 0..m.pow(d as u32) {
            let mut rest = child;
            let mut base_lo = Vec::with_capacity(d);
            let mut base_hi = Vec::with_capacity(d);
            let mut grown_hi = Vec::with_capacity(d);
            for (k, c) in axis_cuts.iter().enumerate() {
                let i = rest % m;
                rest /= m;
                base_lo.push(c[i]);
                base_hi.push(c[i + 1]);
                grown_hi.push(grow(c[i + 1], c[i + 1] - c[i], cover.g, cover.bounds.hi[k]));
            }
            bins.push(Bin {
                id: bins.len(),
                base_lo,
                base_hi,
                grown_hi,
                level: bin.level + 1,
            });
        }
    }
    Ok(Cover {
        bins,
        ..cover.clone()
    })
}

/// Drops bins that contain no lens value of `member_ids`; ids are renumbered densely.
pub fn restrict_cover(cover: &Cover, lens: &LensMap, member_ids: &[usize]) -> Cover {
    let bins = cover
        .bins
        .iter()
        .filter(|bin| member_ids.iter().any(|&i| bin.contains(lens.value(i))))
        .enumerate()
        .map(|(id, bin)| Bin { id, ..bin.clone() })
        .collect();
    Cover {
        bins,
        ..cover.clone()
    }
}

impl Cover {
    pub fn dim(&self) -> usize {
        self.bounds.dim()
    }

    pub fn is_empty(&self) -> bool {
        self.bins.is_empty()
    }

    pub fn bin(&self, id: usize) -> Option<&Bin> {
        self.bins.get(id)
    }

    /// Number of bins containing `z`.
    pub fn multiplicity(&self, z: &[f64]) -> usize {
        self.bins.iter().filter(|b| b.contains(z)).count()
    }

    pub fn bins_containing<'a>(&'a self, z: &'a [f64]) -> impl Iterator<Item = usize> + 'a {
        self.bins.iter().filter(move |b| b.contains(z)).map(|b| b.id)
    }

    /// Point indices of `subset` (or of every lens point) falling in each bin.
    pub fn pullback(&self, lens: &LensMap, subset: Option<&[usize]>) -> Vec<Vec<usize>> {
        let mut members = vec![Vec::new(); self.bins.len()];
        let mut visit = |i: usize| {
            for b in self.bins_containing(lens.value(i)) {
                members[b].push(i);
            }
        };
        match subset {
            Some(ids) => ids.iter().copied().for_each(&mut visit),
            None => (0..lens.len()).for_each(&mut visit),
        }
        members
    }

    /// First lens point (of `subset`, or of all points) covered by no bin.
    pub fn check_coverage(&self, lens: &LensMap, subset: Option<&[usize]>) -> Result<()> {
        let uncovered = |i: &usize| !self.bins.iter().any(|b| b.contains(lens.value(*i)));
        let missing = match subset {
            Some(ids) => ids.iter().copied().find(|i| uncovered(i)),
            None => (0..lens.len()).find(|i| uncovered(i)),
        };
        match missing {
            Some(point) => Err(Error::CoverageError { point }),
            None => Ok(()),
        }
    }

    /// Largest multiplicity over a regular probe grid spanning the bounds,
    /// with a probe achieving it.
    pub fn max_grid_multiplicity(&self, per_axis: usize) -> (usize, Vec<f64>) {
        let d = self.dim();
        let steps = per_axis.max(2);
        let mut best = (0, self.bounds.lo.clone());
        let total = steps.pow(d as u32);
        for idx in 0..total {
            let mut rest = idx;
            let probe: Vec<f64> = (0..d)
                .map(|k| {
                    let i = rest % steps;
                    rest /= steps;
                    self.bounds.lo[k] + self.bounds.extent(k) * i as f64 / (steps - 1) as f64
                })
                .collect();
            let m = self.multiplicity(&probe);
            if m > best.0 {
                best = (m, probe);
            }
        }
        best
    }
}
