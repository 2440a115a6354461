//! Decay of unlinked blocks with frequency.
//!
//! The size of a block is measured by its largest matrix entry
//! |ψ_{n,σ}(η)·L̂(η,ξ)·ψ̃_{ℓ,τ}(ξ)|/(4B²) on the frequency lattice, where
//! L̂(η,ξ) = ∫ G(z) e^{i(ξ·T(z) − η·z)} dz comes from a spectrally accurate
//! quadrature. Candidates are the lattice pairs for which η sits closest to
//! DT^tr ξ, where the phase is nearest to stationary.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::Serialize;

use super::blocks::{max_stretch, BlockOperator, Quadrature};
use super::hook::hook;
use super::{dyadic_partition_eval, dyadic_partition_tilde, AnisoError, DyadicIndex};
use crate::map_model::Vec2;
use crate::numerics::{linear_fit, LineFit};
use crate::par;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KernelPoint {
    pub input: DyadicIndex,
    pub output: DyadicIndex,
    pub max_entry: f64,
    pub n_entries: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KernelFit {
    pub points: Vec<KernelPoint>,
    /// (max{n,ℓ}, largest block size at that level).
    pub envelope: Vec<(u32, f64)>,
    /// Slope of log₂ envelope against max{n,ℓ}, over levels above the floor.
    pub slope: f64,
    pub fit: LineFit,
    /// Rounding floor of the quadrature; smaller values are left out of the fit.
    pub floor: f64,
    pub levels_used: usize,
}

fn radial_range(l: u32, tilde: bool) -> (f64, f64) {
    match (l, tilde) {
        (0, true) => (0.0, 4.0),
        (0, false) => (0.0, 2.0),
        (l, true) => (2f64.powi(l as i32 - 2), 2f64.powi(l as i32 + 2)),
        (l, false) => (2f64.powi(l as i32 - 1), 2f64.powi(l as i32 + 1)),
    }
}

fn polar(lo: f64, hi: f64, n_r: usize, n_a: usize) -> Vec<[f64; 2]> {
    let mut out = Vec::with_capacity(n_r * n_a);
    for i in 0..n_r {
        let r = lo + (hi - lo) * (i as f64 + 0.5) / n_r as f64;
        for k in 0..n_a {
            let a = PI * k as f64 / n_a as f64;
            out.push([r * a.cos(), r * a.sin()]);
        }
    }
    out
}

fn snap(x: [f64; 2], step: f64) -> [f64; 2] {
    [(x[0] / step).round() * step, (x[1] / step).round() * step]
}

/// Lattice pairs (η, ξ) ranked by |η − DT^tr ξ| within two multiplier levels.
fn candidates(b: &BlockOperator, input: DyadicIndex, output: DyadicIndex, per_pair: usize) -> Vec<([f64; 2], [f64; 2])> {
    let step = PI / b.grid.half_width;
    let jt = b.sys.jacobian([0.0, 0.0]).transpose();
    let (il, ih) = radial_range(input.n, true);
    let (ol, oh) = radial_range(output.n, false);
    let xis: Vec<([f64; 2], f64)> = polar(il, ih, 8, 36)
        .into_iter()
        .map(|x| snap(x, step))
        .map(|x| (x, dyadic_partition_tilde(&b.theta, input, x)))
        .filter(|v| v.1 > 0.0)
        .collect();
    let etas: Vec<([f64; 2], f64)> = polar(ol, oh, 8, 72)
        .into_iter()
        .map(|x| snap(x, step))
        .map(|x| (x, dyadic_partition_eval(&b.theta_out, output, x)))
        .filter(|v| v.1 > 0.0)
        .collect();
    let mut scored: Vec<(f64, f64, [f64; 2], [f64; 2])> = Vec::new();
    for (xi, wx) in &xis {
        let v = jt * Vec2::new(xi[0], xi[1]);
        for sgn in [1.0, -1.0] {
            for (eta, we) in &etas {
                let e = [sgn * eta[0], sgn * eta[1]];
                let d = (e[0] - v[0]).hypot(e[1] - v[1]);
                scored.push((d, wx * we, e, *xi));
            }
        }
    }
    let mut out: Vec<([f64; 2], [f64; 2])> = Vec::new();
    for level in [0.5, 0.01] {
        let mut s: Vec<&(f64, f64, [f64; 2], [f64; 2])> = scored.iter().filter(|c| c.1 >= level).collect();
        s.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut taken = 0;
        for c in s {
            if taken == per_pair {
                break;
            }
            if !out.contains(&(c.2, c.3)) {
                out.push((c.2, c.3));
                taken += 1;
            }
        }
    }
    out
}

/// Block sizes for unlinked pairs (input, output) and the log₂-linear fit of
/// their envelope against max{n, ℓ} over levels ≥ 2.
pub fn kernel_decay_fit(
    b: &BlockOperator,
    pairs: &[(DyadicIndex, DyadicIndex)],
    per_pair: usize,
) -> Result<KernelFit, AnisoError> {
    for &(i, o) in pairs {
        if hook(i, o, b.h.h_plus, b.h.h_minus) {
            return Err(AnisoError::LinkedPair { input: i, output: o });
        }
    }
    let stretch = max_stretch(&b.sys)?;
    let area = 4.0 * b.grid.half_width * b.grid.half_width;
    let work: Vec<_> = pairs
        .iter()
        .enumerate()
        .map(|(k, &(i, o))| {
            let c = candidates(b, i, o, per_pair);
            let f = c
                .iter()
                .map(|(e, x)| x[0].hypot(x[1]) * stretch + e[0].hypot(e[1]))
                .fold(1.0, f64::max);
            (k, c, f)
        })
        .collect();
    // one quadrature per power-of-two frequency level
    let mut quads: BTreeMap<i32, Quadrature> = BTreeMap::new();
    for (_, _, f) in &work {
        let lvl = f.log2().ceil() as i32;
        if let std::collections::btree_map::Entry::Vacant(e) = quads.entry(lvl) {
            e.insert(Quadrature::new(&b.sys, 2f64.powi(lvl))?);
        }
    }
    let mass: f64 = quads.values().next().map(|q| q.column([0.0, 0.0]).iter().map(|w| w.norm()).sum::<f64>()).unwrap_or(0.0);
    let cell = quads.values().next().map(|q| q.cell()).unwrap_or(0.0);
    let floor = 1e-13 * mass * cell / area;
    let mut points = Vec::with_capacity(pairs.len());
    for (k, cands, f) in work {
        let (i, o) = pairs[k];
        let q = &quads[&(f.log2().ceil() as i32)];
        let vals = par::map_slice(&cands, |(eta, xi)| {
            let w = dyadic_partition_eval(&b.theta_out, o, *eta) * dyadic_partition_tilde(&b.theta, i, *xi);
            (q.symbol(*eta, *xi) * (w / area)).norm()
        });
        points.push(KernelPoint {
            input: i,
            output: o,
            max_entry: vals.iter().cloned().fold(0.0, f64::max),
            n_entries: vals.len(),
        });
    }
    let mut env: BTreeMap<u32, f64> = BTreeMap::new();
    for p in &points {
        let m = p.input.n.max(p.output.n);
        let e = env.entry(m).or_insert(0.0);
        *e = e.max(p.max_entry);
    }
    let envelope: Vec<(u32, f64)> = env.into_iter().collect();
    let used: Vec<&(u32, f64)> = envelope.iter().filter(|(m, v)| *m >= 2 && *v > floor).collect();
    let xs: Vec<f64> = used.iter().map(|(m, _)| *m as f64).collect();
    let ys: Vec<f64> = used.iter().map(|(_, v)| v.log2()).collect();
    let fit = if xs.len() >= 2 { linear_fit(&xs, &ys) } else { LineFit { slope: 0.0, intercept: 0.0, residual: 0.0 } };
    Ok(KernelFit { points, envelope, slope: fit.slope, fit, floor, levels_used: xs.len() })
}
