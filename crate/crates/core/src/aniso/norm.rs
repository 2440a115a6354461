//! Mixed norm sup_F ∫_F |u| over straight lines whose conormal lies in C₊,
//! and the Young-type inequality for convolutions in that norm.

use serde::Serialize;

use super::grid::{GridFn, Spectral};
use crate::map_model::Polarization;
use crate::numerics::{ksum, C64};
use crate::par;

/// Deterministic line family: `n_dir` conormals spread over C₊ (endpoints
/// included) and `n_off` offsets spanning [−B, B].
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LineSamples {
    pub n_dir: usize,
    pub n_off: usize,
}

impl Default for LineSamples {
    fn default() -> Self {
        LineSamples { n_dir: 17, n_off: 129 }
    }
}

impl LineSamples {
    fn normals(&self, theta: &Polarization) -> Vec<[f64; 2]> {
        let c = theta.cone_plus;
        (0..self.n_dir)
            .map(|k| {
                let t = if self.n_dir == 1 { 0.0 } else { 2.0 * k as f64 / (self.n_dir - 1) as f64 - 1.0 };
                let a = c.center + c.half_angle * t;
                [a.cos(), a.sin()]
            })
            .collect()
    }

    fn offsets(&self, b: f64) -> Vec<f64> {
        (0..self.n_off)
            .map(|k| if self.n_off == 1 { 0.0 } else { b * (2.0 * k as f64 / (self.n_off - 1) as f64 - 1.0) })
            .collect()
    }
}

/// Trapezoid rule for ∫|u| along {c·ν + s·ν^⊥}, step h/2, zero outside the box.
fn line_integral(u: &GridFn, nu: [f64; 2], c: f64) -> f64 {
    let g = u.grid;
    let b = g.half_width;
    let ds = 0.5 * g.h();
    let s_max = b * std::f64::consts::SQRT_2;
    let k = (s_max / ds).ceil() as i64;
    let d = [-nu[1], nu[0]];
    let vals = (-k..=k).filter_map(|i| {
        let s = i as f64 * ds;
        let p = [c * nu[0] + s * d[0], c * nu[1] + s * d[1]];
        if p[0].abs() >= b || p[1].abs() >= b {
            None
        } else {
            Some(u.interp(p).norm())
        }
    });
    // the integrand vanishes near the box edge, so endpoint weights do not matter
    ksum(vals) * ds
}

/// Line integrals for every (direction, offset), row-major by direction.
fn line_table(u: &GridFn, theta: &Polarization, lines: &LineSamples) -> Vec<Vec<f64>> {
    let normals = lines.normals(theta);
    let offs = lines.offsets(u.grid.half_width);
    par::map_slice(&normals, |nu| offs.iter().map(|&c| line_integral(u, *nu, c)).collect())
}

/// ‖u‖_{L¹(F)} over the sampled line family.
pub fn mixed_norm_l1f(u: &GridFn, theta: &Polarization, lines: &LineSamples) -> f64 {
    line_table(u, theta, lines).iter().flatten().cloned().fold(0.0, f64::max)
}

/// Half the largest jump between neighbouring samples: how far the sampled
/// sup can sit below the sup over the continuous family.
fn sampling_gap(table: &[Vec<f64>]) -> f64 {
    let mut gap: f64 = 0.0;
    for (i, row) in table.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            if j + 1 < row.len() {
                gap = gap.max((row[j + 1] - v).abs());
            }
            if i + 1 < table.len() {
                gap = gap.max((table[i + 1][j] - v).abs());
            }
        }
    }
    0.5 * gap
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct YoungReport {
    pub lhs: f64,
    pub rhs: f64,
    pub a_l1: f64,
    /// Quadrature allowance added to the right side.
    pub slack: f64,
    pub pass: bool,
}

/// (A*u)(x_j) = h²·Σ_k A(y_k)·u(x_j − y_k) on the periodic grid.
pub fn convolve(a: &GridFn, u: &GridFn) -> GridFn {
    let g = u.grid;
    assert_eq!(a.grid, g);
    let sp = Spectral::new(g.n);
    let mut fa = a.data.clone();
    let mut fu = u.data.clone();
    sp.forward(&mut fa);
    sp.forward(&mut fu);
    let mut prod: Vec<C64> = fa.iter().zip(&fu).map(|(x, y)| x * y).collect();
    sp.inverse(&mut prod);
    let n = g.n;
    let h2 = g.h() * g.h();
    // x_j − y_k sits at index j − k + n/2
    let data = (0..g.len())
        .map(|idx| {
            let (i, j) = (idx / n, idx % n);
            prod[((i + n / 2) % n) * n + (j + n / 2) % n] * h2
        })
        .collect();
    GridFn { grid: g, data }
}

/// Compares ‖A*u‖_{L¹(F)} with ‖A‖_{L¹}·‖u‖_{L¹(F)} on shared line samples.
pub fn young_check(a: &GridFn, u: &GridFn, theta: &Polarization, lines: &LineSamples) -> YoungReport {
    let conv = convolve(a, u);
    let a_l1 = a.l1();
    let tu = line_table(u, theta, lines);
    let lhs = mixed_norm_l1f(&conv, theta, lines);
    let nu = tu.iter().flatten().cloned().fold(0.0, f64::max);
    let rhs = a_l1 * nu;
    let slack = a_l1 * sampling_gap(&tu);
    YoungReport { lhs, rhs, a_l1, slack, pass: lhs <= rhs * (1.0 + 1e-6) + slack }
}
