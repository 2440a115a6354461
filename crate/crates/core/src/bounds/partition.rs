//! ρ_* from a smooth partition of unity: products along itineraries and
//! sampled sup-norms.

use std::collections::HashMap;

use serde::Serialize;

use super::{grid_points, orbit_exponents, sample_points, BoundsError};
use crate::map_model::{smooth_step, MapError, MapSystem, Point, SplittingField};
use crate::numerics::ksum;
use crate::par;

/// Products below this are dropped from the itinerary expansion.
const PRUNE: f64 = 1e-14;

/// Tensor partition of the torus: k smooth periodic pieces per axis, each
/// switching on over a window of half-width `delta` (in torus units).
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct AxisPartition {
    pub k: usize,
    pub delta: f64,
}

impl AxisPartition {
    pub fn new(k: usize, delta: f64) -> Self {
        assert!(k >= 1);
        assert!(k == 1 || (delta > 0.0 && delta * (k as f64) < 0.5), "transition windows must not overlap");
        AxisPartition { k, delta }
    }

    fn step(&self, u: f64) -> f64 {
        let w = self.delta * self.k as f64;
        smooth_step((u + w) / (2.0 * w))
    }

    /// Nonzero values (index, a_i(s)) of the one-dimensional pieces at s.
    fn axis(&self, s: f64) -> Vec<(usize, f64)> {
        if self.k == 1 {
            return vec![(0, 1.0)];
        }
        let k = self.k as f64;
        let t = s.rem_euclid(1.0) * k;
        let base = t.floor() as i64;
        let mut out = Vec::with_capacity(2);
        for i in [base - 1, base, base + 1] {
            let u = t - i as f64;
            let v = self.step(u) - self.step(u - 1.0);
            if v > 0.0 {
                out.push((i.rem_euclid(self.k as i64) as usize, v));
            }
        }
        out
    }

    /// Nonzero elements φ_{ij}(x) = a_i(x₁)·a_j(x₂), indexed i·k + j.
    pub fn values(&self, x: Point) -> Vec<(u16, f64)> {
        let a = self.axis(x[0]);
        let b = self.axis(x[1]);
        let mut out = Vec::with_capacity(a.len() * b.len());
        for &(i, va) in &a {
            for &(j, vb) in &b {
                out.push(((i * self.k + j) as u16, va * vb));
            }
        }
        out
    }

    pub fn len(&self) -> usize {
        self.k * self.k
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// max |Σφ − 1| over an n×n grid.
    pub fn defect(&self, n: usize) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                let x = [(i as f64 + 0.37) / n as f64, (j as f64 + 0.61) / n as f64];
                let s: f64 = self.values(x).iter().map(|v| v.1).sum();
                worst = worst.max((s - 1.0).abs());
            }
        }
        worst
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PartitionResult {
    pub m: usize,
    pub value: f64,
    pub n_itineraries: usize,
    pub n_points: usize,
}

fn expand(sys: &MapSystem, part: &AxisPartition, x: Point, m: usize) -> Vec<(Vec<u16>, f64)> {
    let mut cur: Vec<(Vec<u16>, f64)> = vec![(Vec::with_capacity(m), 1.0)];
    let mut y = x;
    for _ in 0..m {
        let vals = part.values(y);
        let mut next = Vec::with_capacity(cur.len() * vals.len());
        for (it, w) in &cur {
            for &(i, v) in &vals {
                let w2 = w * v;
                if w2 >= PRUNE {
                    let mut n = it.clone();
                    n.push(i);
                    next.push((n, w2));
                }
            }
        }
        cur = next;
        y = sys.forward(y);
    }
    cur
}

/// Itinerary words of one start point with their weights.
type Expansion = Vec<(Vec<u16>, f64)>;

/// ρ_*^{p,q}(m) = Σ_{φ∈Φ^m} sup |φ·g^(m)·λ^{(p,q,m)}/det(DT^m|E^u)|, sups
/// sampled on a regular grid plus `n_random` seeded points.
#[allow(clippy::too_many_arguments)]
pub fn rho_star_partition(
    sys: &MapSystem,
    split: &SplittingField,
    p: f64,
    q: f64,
    part: &AxisPartition,
    m: usize,
    n_grid: usize,
    n_random: usize,
    seed: u64,
) -> Result<PartitionResult, BoundsError> {
    if !sys.is_torus() {
        return Err(BoundsError::Map(MapError::NotTorus));
    }
    let defect = part.defect(97);
    if defect > 1e-10 {
        return Err(BoundsError::InvalidPartition(defect));
    }
    let mut pts = grid_points(sys, n_grid);
    pts.extend(sample_points(sys, n_random, seed));
    let per: Vec<Result<(Expansion, f64), MapError>> = par::map_slice(&pts, |x| {
        let f = orbit_exponents(sys, split, *x, m)?.cover_integrand(p, q, m);
        Ok((expand(sys, part, *x, m), f))
    });
    let mut sup: HashMap<Vec<u16>, f64> = HashMap::new();
    for r in per {
        let (its, f) = r?;
        for (it, w) in its {
            let e = sup.entry(it).or_insert(0.0);
            *e = e.max(w * f);
        }
    }
    let mut items: Vec<(Vec<u16>, f64)> = sup.into_iter().collect();
    items.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(PartitionResult {
        m,
        value: ksum(items.iter().map(|v| v.1)),
        n_itineraries: items.len(),
        n_points: pts.len(),
    })
}
