//! The exponents h₊, h₋ of a chart map and the linkage relation between
//! input bands (ℓ, τ) and output bands (n, σ).

use std::f64::consts::PI;

use serde::Serialize;

use super::{AnisoError, DyadicIndex};
use crate::map_model::{Domain, Mat2, MapError, MapSystem, Point, Polarization, Sign, Vec2};

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct HExponents {
    pub h_plus: i32,
    pub h_minus: i32,
    /// sup ‖DT^tr ξ‖ over unit ξ with DT^tr ξ ∉ C′₋.
    pub sup_plus: f64,
    /// inf ‖DT^tr ξ‖ over unit ξ ∉ C₊.
    pub inf_minus: f64,
}

impl HExponents {
    /// h₊ < 0 < h₋: linked blocks strictly lower σ·n.
    pub fn is_triangular(&self) -> bool {
        self.h_plus < 0 && self.h_minus > 0
    }
}

fn unit(a: f64) -> Vec2 {
    Vec2::new(a.cos(), a.sin())
}

fn angle(v: &Vec2) -> f64 {
    v[1].atan2(v[0])
}

/// Constrained sup/inf over `sphere_samples` directions in [0, π) plus the
/// preimages of the cone boundary rays nudged to the admissible side.
pub fn h_exponents_from_jacobians(
    jacs: &[Mat2],
    theta: &Polarization,
    theta_out: &Polarization,
    sphere_samples: usize,
) -> Result<HExponents, AnisoError> {
    let cp = theta.cone_plus;
    let cm = theta_out.cone_minus;
    let nudge = 1e-9;
    let mut sup = f64::NEG_INFINITY;
    let mut inf = f64::INFINITY;
    for j in jacs {
        let jt = j.transpose();
        let mut dirs: Vec<f64> = (0..sphere_samples).map(|k| PI * k as f64 / sphere_samples as f64).collect();
        if let Some(inv) = jt.try_inverse() {
            for edge in [cm.center + cm.half_angle, cm.center - cm.half_angle] {
                let a = angle(&(inv * unit(edge)));
                dirs.extend([a - nudge, a + nudge]);
            }
        }
        for edge in [cp.center + cp.half_angle, cp.center - cp.half_angle] {
            dirs.extend([edge - nudge, edge + nudge]);
        }
        for a in dirs {
            let v = jt * unit(a);
            let norm = v.norm();
            if !cm.contains(angle(&v)) {
                sup = sup.max(norm);
            }
            if !cp.contains(a) {
                inf = inf.min(norm);
            }
        }
    }
    if !sup.is_finite() || !inf.is_finite() {
        return Err(AnisoError::EmptyConstraintSet);
    }
    Ok(HExponents {
        h_plus: sup.log2().floor() as i32 + 6,
        h_minus: inf.log2().floor() as i32 - 6,
        sup_plus: sup,
        inf_minus: inf,
    })
}

/// Grid points of supp(g) for a chart map; the grid is squeezed in x₂ for
/// iterates, whose weight lives on a strip of width ~2^{1−m}.
pub fn chart_support_points(sys: &MapSystem, k: usize) -> Result<Vec<Point>, AnisoError> {
    let hw = match sys.domain {
        Domain::Chart { half_width } => half_width,
        Domain::Torus => return Err(MapError::NotChart.into()),
    };
    let iter = match sys.kind {
        crate::map_model::MapKind::Chart { iterate, .. } => iterate,
        _ => 1,
    };
    let mut w2 = hw * 1.5f64.powi(1 - iter as i32);
    for _ in 0..8 {
        let pts: Vec<Point> = (0..k * k)
            .map(|i| {
                let a = -hw + 2.0 * hw * (i / k) as f64 / (k - 1) as f64;
                let b = -w2 + 2.0 * w2 * (i % k) as f64 / (k - 1) as f64;
                [a, b]
            })
            .filter(|x| sys.weight_at(*x) > 0.0)
            .collect();
        if pts.len() >= k {
            return Ok(pts);
        }
        w2 /= 4.0;
    }
    Ok(Vec::new())
}

/// h₊ = ⌊log₂ sup_{x ∈ supp G, |ξ| = 1, DT^tr ξ ∉ C′₋} ‖DT^tr ξ‖⌋ + 6 and
/// h₋ = ⌊log₂ inf_{x ∈ supp G, ξ ∉ C₊} ‖DT^tr ξ‖⌋ − 6.
pub fn h_exponents(
    sys: &MapSystem,
    theta: &Polarization,
    theta_out: &Polarization,
    sphere_samples: usize,
) -> Result<HExponents, AnisoError> {
    let pts = chart_support_points(sys, 41)?;
    if pts.is_empty() {
        // degenerate weight: no block is linked through the support, keep the
        // exponents of the map itself at its origin
        return h_exponents_from_jacobians(&[sys.jacobian([0.0, 0.0])], theta, theta_out, sphere_samples);
    }
    let jacs: Vec<Mat2> = crate::par::map_slice(&pts, |x| sys.jacobian(*x));
    h_exponents_from_jacobians(&jacs, theta, theta_out, sphere_samples)
}

/// (ℓ,τ) ↪ (n,σ): (+,+) with n ≤ ℓ + h₊, (−,−) with ℓ + h₋ ≤ n, or
/// (+,−) with n ≥ h₋ or ℓ ≥ −h₊.
pub fn hook(input: DyadicIndex, output: DyadicIndex, h_plus: i32, h_minus: i32) -> bool {
    let (l, n) = (input.n as i64, output.n as i64);
    let (hp, hm) = (h_plus as i64, h_minus as i64);
    match (input.sigma, output.sigma) {
        (Sign::Plus, Sign::Plus) => n <= l + hp,
        (Sign::Minus, Sign::Minus) => l + hm <= n,
        (Sign::Plus, Sign::Minus) => n >= hm || l >= -hp,
        (Sign::Minus, Sign::Plus) => false,
    }
}

/// Boolean block pattern over labels n ≤ n_max: `linked[out][in]`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LinkMask {
    pub labels: Vec<DyadicIndex>,
    pub linked: Vec<Vec<bool>>,
}

impl LinkMask {
    pub fn from_fn(n_max: u32, f: impl Fn(DyadicIndex, DyadicIndex) -> bool) -> Self {
        let labels = DyadicIndex::all(n_max);
        let linked = labels.iter().map(|&o| labels.iter().map(|&i| f(i, o)).collect()).collect();
        LinkMask { labels, linked }
    }

    /// Pattern of M_b for given exponents.
    pub fn linked(n_max: u32, h: &HExponents) -> Self {
        Self::from_fn(n_max, |i, o| hook(i, o, h.h_plus, h.h_minus))
    }

    /// Complementary pattern (M_c).
    pub fn complement(&self) -> Self {
        LinkMask {
            labels: self.labels.clone(),
            linked: self.linked.iter().map(|r| r.iter().map(|b| !b).collect()).collect(),
        }
    }

    pub fn position(&self, d: DyadicIndex) -> Option<usize> {
        self.labels.iter().position(|&l| l == d)
    }

    pub fn get(&self, input: DyadicIndex, output: DyadicIndex) -> bool {
        match (self.position(input), self.position(output)) {
            (Some(i), Some(o)) => self.linked[o][i],
            _ => false,
        }
    }

    pub fn count(&self) -> usize {
        self.linked.iter().flatten().filter(|b| **b).count()
    }

    /// Pattern of the product self·other (apply `other` first).
    pub fn compose(&self, other: &LinkMask) -> LinkMask {
        assert_eq!(self.labels, other.labels);
        let k = self.labels.len();
        let linked = (0..k)
            .map(|o| (0..k).map(|i| (0..k).any(|mid| self.linked[o][mid] && other.linked[mid][i])).collect())
            .collect();
        LinkMask { labels: self.labels.clone(), linked }
    }

    pub fn diagonal(&self) -> Vec<DyadicIndex> {
        (0..self.labels.len()).filter(|&i| self.linked[i][i]).map(|i| self.labels[i]).collect()
    }

    /// Every linked pair strictly lowers σ·n.
    pub fn strictly_lowers_key(&self) -> bool {
        self.labels.iter().enumerate().all(|(o, lo)| {
            self.labels.iter().enumerate().all(|(i, li)| !self.linked[o][i] || lo.key() < li.key())
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TriangularityReport {
    pub factors: usize,
    /// Labels ζ whose diagonal block of the product pattern is occupied.
    pub diagonal_hits: Vec<DyadicIndex>,
    pub pass: bool,
}

/// Diagonal of ∏_j (M^{m_j})_b by mask algebra alone.
pub fn triangularity_product_check(masks: &[LinkMask]) -> TriangularityReport {
    assert!(!masks.is_empty());
    let prod = masks[1..].iter().fold(masks[0].clone(), |acc, m| m.compose(&acc));
    let diagonal_hits = prod.diagonal();
    TriangularityReport { factors: masks.len(), pass: diagonal_hits.is_empty(), diagonal_hits }
}
