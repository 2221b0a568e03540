//! Seeded synthetic point clouds with known topology.

use std::f64::consts::TAU;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::PointCloud;

pub const BLOB_RING_BLOB: usize = 500;
pub const BLOB_RING_RING: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fixture {
    /// Unit circle, evenly spaced angles, Gaussian noise σ = 0.02. Default 500 points.
    Circle,
    /// Blobs of `n` points (default 50) with σ = 0.5 at (0, 0) and (10, 10).
    TwoBlob,
    /// Dense blob (500 points, σ = 0.3) at the origin, then a sparse ring
    /// (100 points, radius 5, σ = 0.2). Blob indices come first.
    BlobRing,
    /// Segments y = 0 and y = 3 over x ∈ [0, 10], `n` points each (default 100).
    ParallelSegments,
    /// `k` blobs of 50 points (σ = 0.5) centred at (10 i, 0).
    Blobs { k: usize },
}

impl FromStr for Fixture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "circle" => Ok(Fixture::Circle),
            "two_blob" => Ok(Fixture::TwoBlob),
            "blob_ring" => Ok(Fixture::BlobRing),
            "parallel_segments" => Ok(Fixture::ParallelSegments),
            other => other
                .strip_prefix("blobs")
                .and_then(|k| k.parse().ok())
                .filter(|&k| k >= 1)
                .map(|k| Fixture::Blobs { k })
                .ok_or_else(|| Error::UnknownFixture(other.to_string())),
        }
    }
}

impl std::fmt::Display for Fixture {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Fixture::Circle => f.write_str("circle"),
            Fixture::TwoBlob => f.write_str("two_blob"),
            Fixture::BlobRing => f.write_str("blob_ring"),
            Fixture::ParallelSegments => f.write_str("parallel_segments"),
            Fixture::Blobs { k } => write!(f, "blobs{k}"),
        }
    }
}

impl Fixture {
    pub fn generate(self, seed: u64, n: Option<usize>) -> PointCloud {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows = match self {
            Fixture::Circle => circle(&mut rng, n.unwrap_or(500), 1.0, 0.02, (0.0, 0.0)),
            Fixture::TwoBlob => {
                let n = n.unwrap_or(50);
                let mut rows = blob(&mut rng, n, (0.0, 0.0), 0.5);
                rows.extend(blob(&mut rng, n, (10.0, 10.0), 0.5));
                rows
            }
            Fixture::BlobRing => {
                let mut rows = blob(&mut rng, BLOB_RING_BLOB, (0.0, 0.0), 0.3);
                rows.extend(circle(&mut rng, BLOB_RING_RING, 5.0, 0.2, (0.0, 0.0)));
                rows
            }
            Fixture::ParallelSegments => {
                let n = n.unwrap_or(100);
                let noise = Normal::new(0.0, 0.01).expect("valid sigma");
                [0.0, 3.0]
                    .iter()
                    .flat_map(|&y| {
                        (0..n)
                            .map(|i| {
                                let x = 10.0 * i as f64 / (n.max(2) - 1) as f64;
                                vec![x, y + noise.sample(&mut rng)]
                            })
                            .collect::<Vec<_>>()
                    })
                    .collect()
            }
            Fixture::Blobs { k } => (0..k)
                .flat_map(|i| blob(&mut rng, n.unwrap_or(50), (10.0 * i as f64, 0.0), 0.5))
                .collect(),
        };
        PointCloud::new(rows).expect("fixtures are non-empty")
    }
}

fn circle(rng: &mut ChaCha8Rng, n: usize, radius: f64, sigma: f64, centre: (f64, f64)) -> Vec<Vec<f64>> {
    let noise = Normal::new(0.0, sigma).expect("valid sigma");
    (0..n)
        .map(|i| {
            let t = TAU * i as f64 / n as f64;
            vec![
                centre.0 + radius * t.cos() + noise.sample(rng),
                centre.1 + radius * t.sin() + noise.sample(rng),
            ]
        })
        .collect()
}

fn blob(rng: &mut ChaCha8Rng, n: usize, centre: (f64, f64), sigma: f64) -> Vec<Vec<f64>> {
    let noise = Normal::new(0.0, sigma).expect("valid sigma");
    (0..n)
        .map(|_| vec![centre.0 + noise.sample(rng), centre.1 + noise.sample(rng)])
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for f in [
            Fixture::Circle,
            Fixture::TwoBlob,
            Fixture::BlobRing,
            Fixture::ParallelSegments,
            Fixture::Blobs { k: 3 },
        ] {
            assert_eq!(f.to_string().parse::<Fixture>().unwrap(), f);
        }
        assert!("torus".parse::<Fixture>().is_err());
        assert!("blobs0".parse::<Fixture>().is_err());
    }

    #[test]
    fn deterministic_and_sized() {
        let a = Fixture::Circle.generate(7, Some(500));
        assert_eq!(a.len(), 500);
        assert_eq!(a, Fixture::Circle.generate(7, Some(500)));
        assert_ne!(a, Fixture::Circle.generate(8, Some(500)));
        let radii: Vec<f64> = a.iter().map(|p| p[0].hypot(p[1])).collect();
        assert!(radii.iter().all(|r| (r - 1.0).abs() < 0.15));

        assert_eq!(Fixture::BlobRing.generate(7, None).len(), 600);
        assert_eq!(Fixture::TwoBlob.generate(1, None).len(), 100);
        assert_eq!(Fixture::Blobs { k: 3 }.generate(1, None).len(), 150);
        assert_eq!(Fixture::ParallelSegments.generate(1, Some(20)).len(), 40);
    }
}
