use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    /// Sum of squared distances.
    Means,
    /// Sum of distances.
    Median,
}

impl std::str::FromStr for Objective {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "means" | "kmeans" => Ok(Objective::Means),
            "median" | "kmedian" => Ok(Objective::Median),
            other => Err(Error::Config(format!("unknown objective {other:?}"))),
        }
    }
}

impl Objective {
    /// Per-point cost given the squared distance to its center.
    #[inline]
    pub fn from_sq(self, d2: f64) -> f64 {
        match self {
            Objective::Means => d2,
            Objective::Median => d2.sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedPoint {
    pub coords: Vec<f64>,
    pub weight: f64,
}

impl WeightedPoint {
    pub fn new(coords: Vec<f64>, weight: f64) -> Result<Self> {
        if !(weight > 0.0 && weight.is_finite()) {
            return Err(Error::Input(format!("weight {weight} must be positive")));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::Input("non-finite coordinate".into()));
        }
        Ok(Self { coords, weight })
    }

    pub fn unit(coords: Vec<f64>) -> Self {
        Self { coords, weight: 1.0 }
    }
}

#[inline]
pub(crate) fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index of the nearest center (lowest index on ties) and its squared distance.
#[inline]
pub fn nearest_center(p: &[f64], centers: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centers.iter().enumerate() {
        let d = dist_sq(p, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

/// Weighted k-means or k-median cost of `points` against `centers`.
pub fn clustering_cost(points: &[WeightedPoint], centers: &[Vec<f64>], objective: Objective) -> Result<f64> {
    if centers.is_empty() {
        return Err(Error::Contract("cost needs at least one center".into()));
    }
    Ok(points
        .iter()
        .map(|p| p.weight * objective.from_sq(nearest_center(&p.coords, centers).1))
        .sum())
}

/// Smallest total weight (rounded down) assigned to any center.
pub fn min_cluster_size(points: &[WeightedPoint], centers: &[Vec<f64>]) -> Result<u64> {
    if centers.is_empty() {
        return Err(Error::Contract("assignment needs at least one center".into()));
    }
    let mut mass = vec![0.0; centers.len()];
    for p in points {
        mass[nearest_center(&p.coords, centers).0] += p.weight;
    }
    Ok(mass.iter().map(|m| m.floor() as u64).min().unwrap_or(0))
}
