//! Point clouds, lens values and the built-in lens functions.

use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Raw data: `len` points in R^dim, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    dim: usize,
    coords: Vec<f64>,
}

impl PointCloud {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let first = rows
            .first()
            .ok_or_else(|| Error::Empty("point cloud has no points".into()))?;
        let dim = first.len();
        if dim == 0 {
            return Err(Error::Empty("points have zero dimension".into()));
        }
        let mut coords = Vec::with_capacity(rows.len() * dim);
        for (row, p) in rows.iter().enumerate() {
            if p.len() != dim {
                return Err(Error::RaggedPoints {
                    row,
                    found: p.len(),
                    expected: dim,
                });
            }
            coords.extend_from_slice(p);
        }
        Ok(Self { dim, coords })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.coords.chunks_exact(self.dim)
    }

    pub fn distance(&self, a: usize, b: usize) -> f64 {
        euclidean(self.point(a), self.point(b))
    }

    pub fn from_csv_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv_str(&text)
    }

    pub fn from_csv_str(text: &str) -> Result<Self> {
        Self::new(parse_numeric_csv(text)?)
    }

    /// Writes the cloud as header-less CSV with shortest round-trip floats.
    pub fn to_csv_string(&self) -> String {
        rows_to_csv(self.iter())
    }
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Image of the point cloud under a lens function, one 1D or 2D value per point.
#[derive(Debug, Clone, PartialEq)]
pub struct LensMap {
    dim: usize,
    values: Vec<f64>,
}

impl LensMap {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let dim = rows
            .first()
            .ok_or_else(|| Error::Empty("lens has no values".into()))?
            .len();
        if !(1..=2).contains(&dim) {
            return Err(Error::InvalidLensDimension(dim));
        }
        let mut values = Vec::with_capacity(rows.len() * dim);
        for (row, v) in rows.iter().enumerate() {
            if v.len() != dim {
                return Err(Error::RaggedPoints {
                    row,
                    found: v.len(),
                    expected: dim,
                });
            }
            values.extend_from_slice(v);
        }
        Ok(Self { dim, values })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn value(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.dim)
    }

    pub fn check_matches(&self, pc: &PointCloud) -> Result<()> {
        if self.len() != pc.len() {
            return Err(Error::LensSizeMismatch {
                lens: self.len(),
                points: pc.len(),
            });
        }
        Ok(())
    }

    /// Mean lens value over the given point indices.
    pub fn centroid(&self, ids: &[usize]) -> Vec<f64> {
        let mut c = vec![0.0; self.dim];
        for &i in ids {
            for (acc, v) in c.iter_mut().zip(self.value(i)) {
                *acc += v;
            }
        }
        if !ids.is_empty() {
            let n = ids.len() as f64;
            c.iter_mut().for_each(|x| *x /= n);
        }
        c
    }

    /// Bounding box of the lens values of a subset. `None` when the subset is empty.
    pub fn subset_bounds(&self, ids: &[usize]) -> Option<BoundingBox> {
        let (&first, rest) = ids.split_first()?;
        let mut lo = self.value(first).to_vec();
        let mut hi = lo.clone();
        for &i in rest {
            for (k, &v) in self.value(i).iter().enumerate() {
                lo[k] = lo[k].min(v);
                hi[k] = hi[k].max(v);
            }
        }
        Some(BoundingBox { lo, hi })
    }

    pub fn to_csv_string(&self) -> String {
        rows_to_csv(self.iter())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl BoundingBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Self {
        debug_assert_eq!(lo.len(), hi.len());
        Self { lo, hi }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn extent(&self, axis: usize) -> f64 {
        self.hi[axis] - self.lo[axis]
    }

    pub fn diameter(&self) -> f64 {
        euclidean(&self.lo, &self.hi)
    }

    pub fn contains(&self, z: &[f64]) -> bool {
        z.iter()
            .enumerate()
            .all(|(k, &v)| self.lo[k] <= v && v <= self.hi[k])
    }
}

/// Projects every point onto the selected coordinate axes.
pub fn lens_coordinate(pc: &PointCloud, axes: &[usize]) -> Result<LensMap> {
    if !(1..=2).contains(&axes.len()) {
        return Err(Error::InvalidLensDimension(axes.len()));
    }
    if let Some(&axis) = axes.iter().find(|&&a| a >= pc.dim()) {
        return Err(Error::InvalidLensAxis {
            axis,
            dim: pc.dim(),
        });
    }
    let rows = pc
        .iter()
        .map(|p| axes.iter().map(|&a| p[a]).collect())
        .collect();
    LensMap::new(rows)
}

/// Projects the centered cloud onto its top `d` principal axes.
///
/// Eigenvector signs are fixed so the largest-magnitude component of each
/// axis is positive, which makes the output reproducible.
pub fn lens_pca(pc: &PointCloud, d: usize) -> Result<LensMap> {
    if !(1..=2).contains(&d) {
        return Err(Error::InvalidLensDimension(d));
    }
    if d > pc.dim() {
        return Err(Error::DegenerateLens(format!(
            "{d} principal axes requested from {}-dimensional data",
            pc.dim()
        )));
    }
    let n = pc.len();
    let dim = pc.dim();
    let mut mean = vec![0.0; dim];
    for p in pc.iter() {
        for (m, v) in mean.iter_mut().zip(p) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);

    let centered = DMatrix::from_fn(n, dim, |i, k| pc.point(i)[k] - mean[k]);
    let cov = centered.transpose() * &centered / (n as f64);
    let eig = SymmetricEigen::new(cov);

    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let top = eig.eigenvalues[order[0]];
    let last = eig.eigenvalues[order[d - 1]];
    if top <= 0.0 || last <= top * 1e-12 {
        return Err(Error::DegenerateLens(format!(
            "data has fewer than {d} directions of non-zero variance"
        )));
    }

    let axes: Vec<Vec<f64>> = order[..d]
        .iter()
        .map(|&c| {
            let mut v: Vec<f64> = eig.eigenvectors.column(c).iter().copied().collect();
            let pivot = v
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()).then(b.0.cmp(&a.0)))
                .map(|(i, _)| i)
                .unwrap_or(0);
            if v[pivot] < 0.0 {
                v.iter_mut().for_each(|x| *x = -*x);
            }
            v
        })
        .collect();

    let rows = (0..n)
        .map(|i| {
            let row = centered.row(i);
            axes.iter()
                .map(|axis| row.iter().zip(axis).map(|(a, b)| a * b).sum())
                .collect()
        })
        .collect();
    LensMap::new(rows)
}

pub fn lens_bounds(lens: &LensMap) -> BoundingBox {
    let ids: Vec<usize> = (0..lens.len()).collect();
    lens.subset_bounds(&ids)
        .expect("lens maps are never empty")
}

/// Reads a lens CSV and checks it has one row per point.
pub fn load_lens_csv(path: impl AsRef<Path>, points: usize) -> Result<LensMap> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_lens_csv(&text, points)
}

pub fn parse_lens_csv(text: &str, points: usize) -> Result<LensMap> {
    let lens = LensMap::new(parse_numeric_csv(text)?)?;
    if lens.len() != points {
        return Err(Error::LensSizeMismatch {
            lens: lens.len(),
            points,
        });
    }
    Ok(lens)
}

/// Parses comma-separated decimals. A first row whose first cell is not a
/// number is treated as a header and skipped.
fn parse_numeric_csv(text: &str) -> Result<Vec<Vec<f64>>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Parse(e.to_string()))?;
        if record.iter().all(str::is_empty) {
            continue;
        }
        if line == 0
            && record
                .get(0)
                .is_some_and(|cell| cell.parse::<f64>().is_err())
        {
            continue;
        }
        let row = record
            .iter()
            .map(|cell| {
                cell.parse::<f64>().map_err(|_| {
                    Error::Parse(format!("row {}: {cell:?} is not a number", line + 1))
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::Parse(format!("row {}: non-finite value", line + 1)));
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Empty("CSV contains no data rows".into()));
    }
    Ok(rows)
}

fn rows_to_csv<'a>(rows: impl Iterator<Item = &'a [f64]>) -> String {
    let mut out = String::new();
    for row in rows {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn cloud(rows: &[&[f64]]) -> PointCloud {
        PointCloud::new(rows.iter().map(|r| r.to_vec()).collect()).unwrap()
    }

    #[test]
    fn coordinate_projection() {
        let pc = cloud(&[&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]]);
        let lens = lens_coordinate(&pc, &[0, 2]).unwrap();
        assert_eq!(lens.value(0), &[1.0, 3.0]);
        assert_eq!(lens.value(1), &[4.0, 6.0]);

        let single = lens_coordinate(&cloud(&[&[7.0]]), &[0]).unwrap();
        assert_eq!(single.value(0), &[7.0]);

        assert!(matches!(
            lens_coordinate(&pc, &[3]),
            Err(Error::InvalidLensAxis { axis: 3, dim: 3 })
        ));
    }

    #[test]
    fn circle_x_projection_stays_in_unit_range() {
        let rows = (0..100)
            .map(|i| {
                let t = std::f64::consts::TAU * i as f64 / 100.0;
                vec![t.cos(), t.sin()]
            })
            .collect();
        let pc = PointCloud::new(rows).unwrap();
        let lens = lens_coordinate(&pc, &[0]).unwrap();
        assert_eq!(lens.len(), 100);
        assert!(lens.iter().all(|v| (-1.0..=1.0).contains(&v[0])));
    }

    #[test]
    fn pca_of_collinear_points_recovers_line_parameter() {
        let dir = 1.0 / 3f64.sqrt();
        let ts = [-2.0, -0.5, 0.0, 1.0, 4.0];
        let rows = ts.iter().map(|t| vec![t * dir, t * dir, t * dir]).collect();
        let lens = lens_pca(&PointCloud::new(rows).unwrap(), 1).unwrap();
        let mean = ts.iter().sum::<f64>() / ts.len() as f64;
        for (i, t) in ts.iter().enumerate() {
            assert!(((t - mean).abs() - lens.value(i)[0].abs()).abs() < 1e-9);
        }
    }

    #[test]
    fn pca_rejects_zero_variance() {
        let pc = cloud(&[&[1.0, 1.0], &[1.0, 1.0], &[1.0, 1.0]]);
        assert!(matches!(lens_pca(&pc, 1), Err(Error::DegenerateLens(_))));
        let line = cloud(&[&[0.0, 0.0], &[1.0, 1.0], &[2.0, 2.0]]);
        assert!(lens_pca(&line, 1).is_ok());
        assert!(matches!(lens_pca(&line, 2), Err(Error::DegenerateLens(_))));
    }

    #[test]
    fn pca_first_axis_follows_dominant_spread() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let nx = Normal::new(0.0, 10.0).unwrap();
        let ny = Normal::new(0.0, 1.0).unwrap();
        let rows: Vec<Vec<f64>> = (0..400)
            .map(|_| vec![nx.sample(&mut rng), ny.sample(&mut rng)])
            .collect();
        let xs: Vec<f64> = rows.iter().map(|r| r[0]).collect();
        let lens = lens_pca(&PointCloud::new(rows).unwrap(), 2).unwrap();
        let first: Vec<f64> = lens.iter().map(|v| v[0]).collect();
        assert!(correlation(&xs, &first).abs() > 0.99);
    }

    #[test]
    fn pca_is_translation_invariant_up_to_sign() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let rows: Vec<Vec<f64>> = (0..50)
            .map(|_| (0..3).map(|_| rng.random_range(-5.0..5.0)).collect())
            .collect();
        let shifted: Vec<Vec<f64>> = rows
            .iter()
            .map(|r| vec![r[0] + 12.5, r[1] - 3.0, r[2] + 100.0])
            .collect();
        let a = lens_pca(&PointCloud::new(rows).unwrap(), 2).unwrap();
        let b = lens_pca(&PointCloud::new(shifted).unwrap(), 2).unwrap();
        for (u, v) in a.iter().zip(b.iter()) {
            for k in 0..2 {
                assert!((u[k].abs() - v[k].abs()).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn bounds() {
        let lens = LensMap::new(vec![vec![0.0, 0.0], vec![2.0, 3.0]]).unwrap();
        let b = lens_bounds(&lens);
        assert_eq!((b.lo, b.hi), (vec![0.0, 0.0], vec![2.0, 3.0]));

        let b = lens_bounds(&LensMap::new(vec![vec![5.0]]).unwrap());
        assert_eq!((b.lo, b.hi), (vec![5.0], vec![5.0]));

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let rows = (0..1000)
            .map(|_| vec![rng.random::<f64>(), rng.random::<f64>()])
            .collect();
        let b = lens_bounds(&LensMap::new(rows).unwrap());
        assert!(b.lo.iter().all(|&v| v >= 0.0) && b.hi.iter().all(|&v| v <= 1.0));
    }

    #[test]
    fn coordinate_lens_bounds_match_raw_coordinates() {
        let pc = cloud(&[&[1.0, -2.0, 3.0], &[4.0, 5.0, -6.0], &[0.5, 9.0, 0.0]]);
        let b = lens_bounds(&lens_coordinate(&pc, &[2, 0]).unwrap());
        assert_eq!(b.lo, vec![-6.0, 0.5]);
        assert_eq!(b.hi, vec![3.0, 4.0]);
    }

    #[test]
    fn lens_csv_parsing() {
        let lens = parse_lens_csv("0.5\n0.7\n", 2).unwrap();
        assert_eq!(lens.value(1), &[0.7]);
        assert!(matches!(
            parse_lens_csv("1\n2\n3\n", 2),
            Err(Error::LensSizeMismatch { lens: 3, points: 2 })
        ));
        let lens = parse_lens_csv("1,2\n3,4\n", 2).unwrap();
        assert_eq!(lens.value(0), &[1.0, 2.0]);
        assert_eq!(lens.value(1), &[3.0, 4.0]);
        assert!(matches!(
            parse_lens_csv("1\nabc\n", 2),
            Err(Error::Parse(_))
        ));
    }

    #[test]
    fn header_row_is_skipped() {
        let pc = PointCloud::from_csv_str("x,y\n1,2\n3,4\n").unwrap();
        assert_eq!(pc.len(), 2);
        assert!(PointCloud::from_csv_str("").is_err());
        assert!(matches!(
            PointCloud::from_csv_str("1,2\n3\n"),
            Err(Error::RaggedPoints { row: 1, .. })
        ));
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let pc = cloud(&[&[0.1, -1e-17], &[1.0 / 3.0, 2.5e300]]);
        assert_eq!(PointCloud::from_csv_str(&pc.to_csv_string()).unwrap(), pc);
    }

    fn correlation(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len() as f64;
        let ma = a.iter().sum::<f64>() / n;
        let mb = b.iter().sum::<f64>() / n;
        let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
        let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
        cov / (va * vb).sqrt()
    }
}
