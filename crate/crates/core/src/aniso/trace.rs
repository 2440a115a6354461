//! Flat traces of diagonal blocks, tr♭ = ∫ ψ̌_{n,σ}(T(x) − x)·G(x) dx.
//!
//! Substituting z = Φ(x) = T(x) − x turns the integral into ∫ ψ̌(z)·H(z) dz
//! with H = (G/|det DΦ|)∘Φ⁻¹, which on the periodic box is Σ_ξ ψ(ξ)·c_ξ for
//! the Fourier coefficients c_ξ = (4B²)⁻¹ ∫ H(z) e^{iξ·z} dz.

use serde::Serialize;

use super::blocks::BlockOperator;
use super::grid::{BoxGrid, Spectral};
use super::hook::chart_support_points;
use super::{chi_n, AnisoError, DyadicIndex};
use crate::map_model::{Mat2, MapSystem, Point, Polarization, Sign, Vec2};
use crate::numerics::{KahanSum, C64};
use crate::par;

/// Default trace grid: B = 4, 2048² points (|ξ| resolved up to ~1600).
pub const TRACE_GRID: BoxGrid = BoxGrid { half_width: 4.0, n: 2048 };

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TraceRow {
    pub label: DyadicIndex,
    pub value: f64,
}

#[derive(Clone, Debug)]
pub struct TraceData {
    pub grid: BoxGrid,
    coeffs: Vec<C64>,
}

fn phi_jac(sys: &MapSystem, x: Point) -> Mat2 {
    sys.jacobian(x) - Mat2::identity()
}

fn phi(sys: &MapSystem, x: Point) -> Vec2 {
    let t = sys.forward(x);
    Vec2::new(t[0] - x[0], t[1] - x[1])
}

/// Solves T(x) − x = z by Newton from the linearization at the origin.
fn phi_inverse(sys: &MapSystem, z: Point, a0: &Mat2) -> Option<Point> {
    let zv = Vec2::new(z[0], z[1]);
    let mut x = a0 * zv;
    for _ in 0..50 {
        let r = phi(sys, [x[0], x[1]]) - zv;
        if r.norm() < 1e-14 {
            return Some([x[0], x[1]]);
        }
        let j = phi_jac(sys, [x[0], x[1]]).try_inverse()?;
        x -= j * r;
    }
    let r = phi(sys, [x[0], x[1]]) - zv;
    (r.norm() < 1e-12).then_some([x[0], x[1]])
}

impl TraceData {
    pub fn new(sys: &MapSystem, grid: BoxGrid) -> Result<TraceData, AnisoError> {
        let supp = chart_support_points(sys, 101)?;
        let g = grid;
        let mut h_vals = vec![C64::new(0.0, 0.0); g.len()];
        if !supp.is_empty() {
            let a0 = phi_jac(sys, [0.0, 0.0]).try_inverse().ok_or(AnisoError::InverseFailed([0.0, 0.0]))?;
            // Φ(supp G) bounding box, padded by a few support-grid cells
            let imgs: Vec<Vec2> = supp.iter().map(|x| phi(sys, *x)).collect();
            let pad = 0.1;
            let lo = [0, 1].map(|c| imgs.iter().map(|v| v[c]).fold(f64::INFINITY, f64::min) - pad);
            let hi = [0, 1].map(|c| imgs.iter().map(|v| v[c]).fold(f64::NEG_INFINITY, f64::max) + pad);
            if (0..2).any(|c| lo[c] <= -0.75 * g.half_width || hi[c] >= 0.75 * g.half_width) {
                return Err(AnisoError::SupportMarginViolated { fraction: 1.0 });
            }
            let idx: Vec<usize> = (0..g.len())
                .filter(|&i| {
                    let z = g.point(i);
                    (0..2).all(|c| z[c] >= lo[c] && z[c] <= hi[c])
                })
                .collect();
            let vals: Vec<Result<f64, AnisoError>> = par::map_slice(&idx, |&i| {
                let z = g.point(i);
                match phi_inverse(sys, z, &a0) {
                    Some(x) => {
                        let w = sys.weight_at(x);
                        if w == 0.0 {
                            Ok(0.0)
                        } else {
                            Ok(w / phi_jac(sys, x).determinant().abs())
                        }
                    }
                    None => {
                        // only a failure if the preimage would carry weight
                        let guess = a0 * Vec2::new(z[0], z[1]);
                        if sys.weight_at([guess[0], guess[1]]) == 0.0 {
                            Ok(0.0)
                        } else {
                            Err(AnisoError::InverseFailed(z))
                        }
                    }
                }
            });
            for (&i, v) in idx.iter().zip(vals) {
                h_vals[i] = C64::new(v?, 0.0);
            }
        }
        // Σ_j H(z_j)·e^{iξ·z_j}: inverse DFT times n², times the phase (−1)^{k₁+k₂} of z₀ = −B
        let sp = Spectral::new(g.n);
        sp.inverse(&mut h_vals);
        let scale = (g.n * g.n) as f64 * g.h() * g.h() / (4.0 * g.half_width * g.half_width);
        let coeffs = par::map_range(g.len(), |i| {
            let k = g.signed(i / g.n) + g.signed(i % g.n);
            let s = if k.rem_euclid(2) == 0 { scale } else { -scale };
            h_vals[i] * s
        });
        Ok(TraceData { grid: g, coeffs })
    }

    fn check_resolution(&self, n0: u32) -> Result<(), AnisoError> {
        let needed = 2f64.powi(n0 as i32 + 1);
        if self.grid.nyquist() < needed {
            return Err(AnisoError::GridTooCoarse { nyquist: self.grid.nyquist(), needed });
        }
        Ok(())
    }

    /// tr♭ of every diagonal block with n ≤ n0.
    pub fn block_traces(&self, theta: &Polarization, n0: u32) -> Result<Vec<TraceRow>, AnisoError> {
        self.check_resolution(n0)?;
        let labels = DyadicIndex::all(n0);
        let g = self.grid;
        let r_max = 2f64.powi(n0 as i32 + 1);
        let parts: Vec<Vec<KahanSum>> = par::map_range(g.n, |i| {
            let mut acc = vec![KahanSum::default(); labels.len()];
            for j in 0..g.n {
                let idx = i * g.n + j;
                let xi = g.freq(idx);
                let r = xi[0].hypot(xi[1]);
                if r >= r_max {
                    continue;
                }
                let c = self.coeffs[idx].re;
                let th = xi[1].atan2(xi[0]);
                let fp = theta.phi(Sign::Plus, th);
                let fm = theta.phi(Sign::Minus, th);
                let mut prev = chi_n(0, r);
                acc[0].add(0.5 * prev * c);
                acc[1].add(0.5 * prev * c);
                for n in 1..=n0 {
                    let cur = chi_n(n, r);
                    let rad = cur - prev;
                    if rad != 0.0 {
                        acc[2 * n as usize].add(rad * fp * c);
                        acc[2 * n as usize + 1].add(rad * fm * c);
                    }
                    prev = cur;
                }
            }
            acc
        });
        Ok(labels
            .iter()
            .enumerate()
            .map(|(k, &label)| {
                let mut s = KahanSum::default();
                parts.iter().for_each(|p| s.add(p[k].value()));
                TraceRow { label, value: s.value() }
            })
            .collect())
    }

    /// ∫ χ̌_{n0}(T(x) − x)·G(x) dx.
    pub fn chi_trace(&self, n0: u32) -> Result<f64, AnisoError> {
        self.check_resolution(n0)?;
        let g = self.grid;
        let mut s = KahanSum::default();
        for (idx, c) in self.coeffs.iter().enumerate() {
            let xi = g.freq(idx);
            let w = chi_n(n0, xi[0].hypot(xi[1]));
            if w != 0.0 {
                s.add(w * c.re);
            }
        }
        Ok(s.value())
    }
}

/// Partial sums Σ_{n(ζ) ≤ k} tr♭ for k = 0..=n0.
pub fn partial_trace_sums(rows: &[TraceRow], n0: u32) -> Vec<f64> {
    (0..=n0)
        .map(|k| {
            let mut s = KahanSum::default();
            rows.iter().filter(|r| r.label.n <= k).for_each(|r| s.add(r.value));
            s.value()
        })
        .collect()
}

/// tr♭ of the diagonal block ζ, on the operator's trace grid.
pub fn block_flat_trace(b: &BlockOperator, zeta: DyadicIndex) -> Result<f64, AnisoError> {
    let data = b.trace_data()?;
    let rows = data.block_traces(&b.theta, zeta.n)?;
    Ok(rows.iter().find(|r| r.label == zeta).map(|r| r.value).unwrap_or(0.0))
}

/// Σ_{T(x) = x} G(x)/|det(Id − DT(x))| over fixed points in supp G, found by
/// Newton from a seed grid on the support.
pub fn fixed_point_sum(sys: &MapSystem) -> Result<f64, AnisoError> {
    let supp = chart_support_points(sys, 41)?;
    let mut found: Vec<Point> = Vec::new();
    for s in supp.iter().step_by(7) {
        let mut x = Vec2::new(s[0], s[1]);
        let mut ok = false;
        for _ in 0..60 {
            let r = phi(sys, [x[0], x[1]]);
            if r.norm() < 1e-14 {
                ok = true;
                break;
            }
            let Some(j) = phi_jac(sys, [x[0], x[1]]).try_inverse() else { break };
            x -= j * r;
            if !x.iter().all(|v| v.is_finite() && v.abs() < 10.0) {
                break;
            }
        }
        let p = [x[0], x[1]];
        if ok && !found.iter().any(|q| (q[0] - p[0]).hypot(q[1] - p[1]) < 1e-9) {
            found.push(p);
        }
    }
    found.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    Ok(found
        .iter()
        .map(|x| {
            let w = sys.weight_at(*x);
            if w == 0.0 {
                0.0
            } else {
                w / phi_jac(sys, *x).determinant().abs()
            }
        })
        .sum())
}
