//! Q_* from a finite cover: itineraries witnessed by forward-propagated
//! samples, sup estimates per itinerary, greedy weighted set cover.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};

use rand::Rng;
use serde::Serialize;

use super::{orbit_exponents, BoundsError};
use crate::map_model::{Domain, MapError, MapSystem, Point, SplittingField};
use crate::numerics::{ksum, rng};
use crate::par;

/// Sup-norm ball: [center − radius, center + radius) per axis, taken mod 1 on the torus.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TorusBox {
    pub center: Point,
    pub radius: f64,
}

impl TorusBox {
    fn offset(&self, x: f64, c: f64, wrap: bool) -> f64 {
        let d = x - (c - self.radius);
        if wrap {
            d.rem_euclid(1.0)
        } else {
            d
        }
    }

    pub fn contains(&self, x: Point, wrap: bool) -> bool {
        let w = 2.0 * self.radius;
        (0..2).all(|i| {
            let d = self.offset(x[i], self.center[i], wrap);
            (0.0..w).contains(&d)
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CoverSpec {
    pub cover: Vec<TorusBox>,
    /// Depth at which the refined cover elements are below the sampling scale.
    pub generating_depth: usize,
}

impl CoverSpec {
    /// k×k grid of boxes on the unit torus; `overlap` widens each box by that
    /// fraction of the cell size on every side.
    pub fn grid(k: usize, overlap: f64) -> Self {
        let h = 1.0 / k as f64;
        let cover = (0..k * k)
            .map(|i| TorusBox {
                center: [((i / k) as f64 + 0.5) * h, ((i % k) as f64 + 0.5) * h],
                radius: 0.5 * h * (1.0 + 2.0 * overlap),
            })
            .collect();
        CoverSpec { cover, generating_depth: 1 }
    }

    pub fn members(&self, x: Point, wrap: bool) -> Vec<u16> {
        (0..self.cover.len()).filter(|&i| self.cover[i].contains(x, wrap)).map(|i| i as u16).collect()
    }

    /// Grid check that the union covers the domain.
    pub fn validate(&self, sys: &MapSystem, n_grid: usize) -> Result<(), BoundsError> {
        let wrap = sys.is_torus();
        for x in super::grid_points(sys, n_grid) {
            if self.members(x, wrap).is_empty() {
                return Err(BoundsError::InvalidCover(x));
            }
        }
        if let Domain::Chart { half_width } = sys.domain {
            // elements must stay inside the enlarged box V′ = 2V
            for b in &self.cover {
                if b.center.iter().any(|c| c.abs() + b.radius > 2.0 * half_width) {
                    return Err(BoundsError::InvalidCover(b.center));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CoverOptions {
    /// Initial witnesses per cover element.
    pub per_element: usize,
    pub max_points: usize,
    pub itinerary_cap: usize,
    /// Itineraries with fewer witnesses are reported as uncertain.
    pub min_witnesses: usize,
    /// Witnesses per itinerary at which the integrand is evaluated for the sup.
    pub sup_samples: usize,
    pub seed: u64,
}

impl Default for CoverOptions {
    fn default() -> Self {
        CoverOptions { per_element: 64, max_points: 1 << 23, itinerary_cap: 1 << 20, min_witnesses: 2, sup_samples: 6, seed: 7 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CoverResult {
    pub m: usize,
    /// Greedy subcover sum (upper bound for the minimum).
    pub greedy: f64,
    /// Sum over every witnessed itinerary.
    pub full_sum: f64,
    pub n_itineraries: usize,
    pub n_selected: usize,
    pub n_points: usize,
    /// Itineraries with fewer than `min_witnesses` samples.
    pub uncertain: usize,
}

/// Itinerary codes Σ i_k·|W|^k of x (several when cover elements overlap).
fn itineraries(sys: &MapSystem, cover: &CoverSpec, x: Point, m: usize) -> Vec<u128> {
    let wrap = sys.is_torus();
    let base = cover.cover.len() as u128;
    let mut codes = vec![0u128];
    let mut scale = 1u128;
    let mut y = x;
    for _ in 0..m {
        let mem = cover.members(y, wrap);
        if mem.is_empty() {
            return Vec::new();
        }
        if mem.len() == 1 {
            let d = mem[0] as u128 * scale;
            codes.iter_mut().for_each(|c| *c += d);
        } else {
            codes = codes.iter().flat_map(|&c| mem.iter().map(move |&i| c + i as u128 * scale)).collect();
        }
        scale = scale.saturating_mul(base);
        y = sys.forward(y);
    }
    codes
}

fn sample_cover(cover: &CoverSpec, per_element: usize, seed: u64, wrap: bool) -> Vec<Point> {
    let mut r = rng(seed);
    let mut out = Vec::with_capacity(per_element * cover.cover.len());
    for b in &cover.cover {
        for _ in 0..per_element {
            let mut x = [0.0; 2];
            for (xi, c) in x.iter_mut().zip(b.center) {
                let v = c + b.radius * (2.0 * r.gen::<f64>() - 1.0);
                *xi = if wrap { v.rem_euclid(1.0) } else { v };
            }
            out.push(x);
        }
    }
    out
}

#[derive(PartialEq)]
struct Cand {
    ratio: f64,
    idx: usize,
}

impl Eq for Cand {}

impl Ord for Cand {
    // min-heap on ratio, ties by index
    fn cmp(&self, o: &Self) -> Ordering {
        o.ratio.total_cmp(&self.ratio).then(o.idx.cmp(&self.idx))
    }
}

impl PartialOrd for Cand {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}

/// Greedy weighted set cover; returns (sum of chosen weights, number chosen).
pub(super) fn greedy_cover(weights: &[f64], members: &[Vec<usize>], n_points: usize) -> (f64, usize) {
    let mut covered = vec![false; n_points];
    let mut left = n_points;
    let mut heap: BinaryHeap<Cand> =
        members.iter().enumerate().map(|(i, m)| Cand { ratio: weights[i] / m.len() as f64, idx: i }).collect();
    let mut chosen = Vec::new();
    while left > 0 {
        let Some(c) = heap.pop() else { break };
        let fresh = members[c.idx].iter().filter(|&&j| !covered[j]).count();
        if fresh == 0 {
            continue;
        }
        let ratio = weights[c.idx] / fresh as f64;
        if ratio > c.ratio {
            // stale entry: costs only grow, so reinsert and retry
            heap.push(Cand { ratio, idx: c.idx });
            continue;
        }
        for &j in &members[c.idx] {
            if !covered[j] {
                covered[j] = true;
                left -= 1;
            }
        }
        chosen.push(c.idx);
    }
    chosen.sort_unstable();
    (ksum(chosen.iter().map(|&i| weights[i])), chosen.len())
}

/// Q_*^{p,q}(m) for the refined cover W^m, witnessed by samples that are
/// doubled until fewer than 1% new itineraries appear.
#[allow(clippy::too_many_arguments)]
pub fn q_star_cover(
    sys: &MapSystem,
    split: &SplittingField,
    p: f64,
    q: f64,
    cover: &CoverSpec,
    m: usize,
    opts: &CoverOptions,
) -> Result<CoverResult, BoundsError> {
    cover.validate(sys, 64)?;
    let bits = (cover.cover.len() as f64).log2() * m as f64;
    if bits >= 127.0 {
        return Err(BoundsError::BudgetExceeded { found: usize::MAX, cap: opts.itinerary_cap });
    }
    let wrap = sys.is_torus();
    let mut index: HashMap<u128, usize> = HashMap::new();
    let mut members: Vec<Vec<usize>> = Vec::new();
    let mut points: Vec<Point> = Vec::new();
    let mut batch = opts.per_element;
    let mut round = 0u64;
    loop {
        let pts = sample_cover(cover, batch, opts.seed.wrapping_add(round), wrap);
        let its: Vec<Vec<u128>> = par::map_slice(&pts, |x| itineraries(sys, cover, *x, m));
        let before = index.len();
        for (x, its) in pts.into_iter().zip(its) {
            if its.is_empty() {
                continue;
            }
            let pid = points.len();
            points.push(x);
            for it in its {
                let k = *index.entry(it).or_insert_with(|| {
                    members.push(Vec::new());
                    members.len() - 1
                });
                members[k].push(pid);
            }
            if index.len() > opts.itinerary_cap {
                return Err(BoundsError::BudgetExceeded { found: index.len(), cap: opts.itinerary_cap });
            }
        }
        let grown = index.len() - before;
        round += 1;
        if round > 1 && grown * 100 <= before {
            break;
        }
        if points.len() * 2 > opts.max_points {
            break;
        }
        // double the total sample count
        batch = (points.len() / cover.cover.len()).max(1);
    }
    let n_points = points.len();
    // integrand at the first few witnesses of every itinerary
    let mut need = vec![false; n_points];
    for mem in &members {
        for &j in mem.iter().take(opts.sup_samples.max(1)) {
            need[j] = true;
        }
    }
    let eval_ids: Vec<usize> = (0..n_points).filter(|&j| need[j]).collect();
    let vals: Vec<Result<f64, MapError>> =
        par::map_slice(&eval_ids, |&j| Ok(orbit_exponents(sys, split, points[j], m)?.cover_integrand(p, q, m)));
    let mut value = vec![0.0; n_points];
    for (&j, v) in eval_ids.iter().zip(vals) {
        value[j] = v?;
    }
    let sups: Vec<f64> = members
        .iter()
        .map(|mem| mem.iter().take(opts.sup_samples.max(1)).map(|&j| value[j]).fold(0.0, f64::max))
        .collect();
    // fixed order by itinerary key for deterministic summation
    let mut keys: Vec<(&u128, &usize)> = index.iter().collect();
    keys.sort();
    let order: Vec<usize> = keys.iter().map(|(_, &i)| i).collect();
    let weights: Vec<f64> = order.iter().map(|&i| sups[i]).collect();
    let mem: Vec<Vec<usize>> = order.iter().map(|&i| members[i].clone()).collect();
    let full_sum = ksum(weights.iter().cloned());
    let (greedy, n_selected) = greedy_cover(&weights, &mem, n_points);
    let uncertain = mem.iter().filter(|v| v.len() < opts.min_witnesses).count();
    Ok(CoverResult { m, greedy, full_sum, n_itineraries: weights.len(), n_selected, n_points, uncertain })
}
