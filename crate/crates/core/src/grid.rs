//! Radius grids shared by certificates, profiles and reports.

use serde::{Deserialize, Serialize};

use crate::logmath::{dyadic_radius, log_radius};

/// One grid radius together with its log, kept exact near `r = 1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub r: f64,
    pub s: f64,
}

impl GridPoint {
    pub fn from_s(s: f64) -> Self {
        GridPoint { r: s.exp(), s }
    }

    pub fn from_r(r: f64) -> Self {
        GridPoint { r, s: log_radius(r) }
    }
}

/// Sorted, de-duplicated set of radii in `[0, 1)`.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct RadiusGrid {
    points: Vec<GridPoint>,
}

impl RadiusGrid {
    /// `r_j = 1 - 2^-j` for `j = 0..=j_max` (so `r_0 = 0`).
    pub fn dyadic(j_max: u32) -> Self {
        Self::dyadic_range(0, j_max)
    }

    pub fn dyadic_range(j_min: u32, j_max: u32) -> Self {
        let points = (j_min..=j_max)
            .map(|j| {
                let (r, s) = dyadic_radius(j);
                GridPoint { r, s }
            })
            .collect();
        RadiusGrid { points }
    }

    pub fn from_points(points: impl IntoIterator<Item = GridPoint>) -> Self {
        let mut g = RadiusGrid { points: points.into_iter().collect() };
        g.normalize();
        g
    }

    pub fn from_radii(radii: &[f64]) -> Self {
        Self::from_points(radii.iter().map(|&r| GridPoint::from_r(r)))
    }

    pub fn extend(&mut self, extra: impl IntoIterator<Item = GridPoint>) {
        self.points.extend(extra);
        self.normalize();
    }

    fn normalize(&mut self) {
        self.points.retain(|p| p.r >= 0.0 && p.s < 0.0 && !p.s.is_nan());
        self.points.sort_by(|a, b| a.s.total_cmp(&b.s));
        self.points.dedup_by(|a, b| a.s == b.s);
    }

    pub fn points(&self) -> &[GridPoint] {
        &self.points
    }

    pub fn positive(&self) -> impl Iterator<Item = &GridPoint> {
        self.points.iter().filter(|p| p.r > 0.0)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}
