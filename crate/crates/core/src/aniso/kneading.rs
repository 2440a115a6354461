//! Finite kneading identity
//! det(Id − zM) = det(Id − zM_c(Id − zM_b)⁻¹)·det(Id − zM_b)
//! and a weighted singular-value proxy for approximation numbers.

use nalgebra::DMatrix;
use serde::Serialize;

use super::{AnisoError, DyadicIndex};
use crate::map_model::Sign;
use crate::numerics::{condition_1, linear_fit, LineFit, C64};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KneadingRow {
    pub z: [f64; 2],
    pub lhs: [f64; 2],
    pub rhs: [f64; 2],
    pub det_b: [f64; 2],
    pub rel_err: f64,
    pub cond: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KneadingReport {
    pub rows: Vec<KneadingRow>,
    pub max_rel_err: f64,
    pub pass: bool,
}

const COND_MAX: f64 = 1e12;

fn pair(z: C64) -> [f64; 2] {
    [z.re, z.im]
}

pub fn kneading_check(
    mb: &DMatrix<C64>,
    mc: &DMatrix<C64>,
    z_samples: &[C64],
) -> Result<KneadingReport, AnisoError> {
    let k = mb.nrows();
    assert!(mb.is_square() && mc.shape() == mb.shape());
    let id = DMatrix::<C64>::identity(k, k);
    let m = mb + mc;
    let mut rows = Vec::with_capacity(z_samples.len());
    for &z in z_samples {
        let r = &id - &mb.scale_c(z);
        let cond = condition_1(&r);
        if !(cond <= COND_MAX) {
            return Err(AnisoError::SingularResolvent { z: format!("{z}"), cond });
        }
        let rinv = r.clone().try_inverse().ok_or(AnisoError::SingularResolvent { z: format!("{z}"), cond })?;
        let lhs = (&id - &m.scale_c(z)).determinant();
        let det_b = r.determinant();
        let rhs = (&id - mc.scale_c(z) * rinv).determinant() * det_b;
        let rel_err = (lhs - rhs).norm() / lhs.norm().max(rhs.norm()).max(f64::MIN_POSITIVE);
        rows.push(KneadingRow { z: pair(z), lhs: pair(lhs), rhs: pair(rhs), det_b: pair(det_b), rel_err, cond });
    }
    let max_rel_err = rows.iter().map(|r| r.rel_err).fold(0.0, f64::max);
    Ok(KneadingReport { rows, max_rel_err, pass: max_rel_err <= 1e-8 })
}

trait ScaleC {
    fn scale_c(&self, z: C64) -> DMatrix<C64>;
}

impl ScaleC for DMatrix<C64> {
    fn scale_c(&self, z: C64) -> DMatrix<C64> {
        self.map(|v| v * z)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ApproxReport {
    /// Singular values, nonincreasing.
    pub singular: Vec<f64>,
    /// Slope of log s_k against log k over the fitted range.
    pub exponent: f64,
    /// Slope of log s_k against k (geometric rate).
    pub rate: f64,
    pub fit: LineFit,
    pub k_range: (usize, usize),
}

/// Singular values of D·M_c·D⁻¹ with D = diag(2^{c(σ)n}), c(+) = p, c(−) = q;
/// a proxy for approximation numbers in the weighted norm, fitted over
/// k ∈ [k_lo, k_hi] (1-based, zeros excluded).
pub fn approx_number_proxy(
    mc: &DMatrix<C64>,
    labels: &[DyadicIndex],
    p: f64,
    q: f64,
    k_range: (usize, usize),
) -> ApproxReport {
    assert_eq!(labels.len(), mc.nrows());
    let w: Vec<f64> = labels
        .iter()
        .map(|l| {
            let c = match l.sigma {
                Sign::Plus => p,
                Sign::Minus => q,
            };
            2f64.powf(c * l.n as f64)
        })
        .collect();
    let weighted = DMatrix::from_fn(mc.nrows(), mc.ncols(), |r, c| mc[(r, c)] * (w[r] / w[c]));
    let mut singular: Vec<f64> = weighted.singular_values().iter().cloned().collect();
    singular.sort_by(|a, b| b.total_cmp(a));
    let top = singular.first().cloned().unwrap_or(0.0);
    let (lo, hi) = (k_range.0.max(1), k_range.1.min(singular.len()));
    let pts: Vec<(f64, f64, f64)> = (lo..=hi)
        .filter(|&k| singular[k - 1] > top * 1e-14 && singular[k - 1] > 0.0)
        .map(|k| ((k as f64).ln(), k as f64, singular[k - 1].ln()))
        .collect();
    let xs: Vec<f64> = pts.iter().map(|t| t.0).collect();
    let ks: Vec<f64> = pts.iter().map(|t| t.1).collect();
    let ys: Vec<f64> = pts.iter().map(|t| t.2).collect();
    let (fit, rate) = if pts.len() >= 2 {
        (linear_fit(&xs, &ys), linear_fit(&ks, &ys).slope)
    } else {
        (LineFit { slope: 0.0, intercept: 0.0, residual: 0.0 }, 0.0)
    };
    ApproxReport { singular, exponent: fit.slope, rate, fit, k_range: (lo, hi) }
}
