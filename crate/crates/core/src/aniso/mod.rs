//! Anisotropic Littlewood–Paley machinery on a single chart: dyadic
//! frequency bands split by cones, the mixed norm along admissible lines,
//! operator blocks with their linkage relation, flat traces of diagonal
//! blocks and the finite kneading identity.

use serde::Serialize;
use thiserror::Error;

use crate::map_model::{MapError, Polarization, Sign};

mod blocks;
mod dump;
mod grid;
mod hook;
mod kernel;
mod kneading;
mod norm;
mod suite;
mod trace;

#[cfg(test)]
mod tests;

pub use blocks::{assemble_blocks, lattice_matrix, split_bc, BlockOperator, Lattice, LatticeSite, LinkSplit, Quadrature};
pub use dump::{read_dense_dump, write_dense_dump};
pub use grid::{band_project, band_project_periodic, BandFunction, BoxGrid, GridFn, Spectral};
pub use hook::{
    chart_support_points, h_exponents, h_exponents_from_jacobians, hook, triangularity_product_check, HExponents,
    LinkMask, TriangularityReport,
};
pub use kernel::{kernel_decay_fit, KernelFit, KernelPoint};
pub use kneading::{approx_number_proxy, kneading_check, ApproxReport, KneadingReport, KneadingRow};
pub use norm::{convolve, mixed_norm_l1f, young_check, LineSamples, YoungReport};
pub use suite::{
    run_aniso_suite, wraparound_survey, young_trials, AnisoSuiteConfig, AnisoSuiteReport, TraceSummary, WraparoundSummary,
    YoungSummary,
};
pub use trace::{block_flat_trace, fixed_point_sum, partial_trace_sums, TraceData, TraceRow, TRACE_GRID};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnisoError {
    #[error("input has {fraction:.3e} of its mass within the box margin")]
    SupportMarginViolated { fraction: f64 },
    #[error("grid resolves |ξ| ≤ {nyquist:.1} but bands need {needed:.1}")]
    GridTooCoarse { nyquist: f64, needed: f64 },
    #[error("no sampled covector satisfies the cone constraint")]
    EmptyConstraintSet,
    #[error("resolvent at z = {z} has condition {cond:.3e}")]
    SingularResolvent { z: String, cond: f64 },
    #[error("pair {input:?} -> {output:?} is linked")]
    LinkedPair { input: DyadicIndex, output: DyadicIndex },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("inverting T − id failed near {0:?}")]
    InverseFailed([f64; 2]),
    #[error(transparent)]
    Map(#[from] MapError),
    #[error("dump i/o: {0}")]
    Io(String),
}

/// Band label (n, σ).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct DyadicIndex {
    pub n: u32,
    pub sigma: Sign,
}

impl DyadicIndex {
    pub fn new(n: u32, sigma: Sign) -> Self {
        DyadicIndex { n, sigma }
    }

    /// σ·n; linked blocks strictly lower it when h₊ < 0 < h₋.
    pub fn key(&self) -> i64 {
        self.sigma.value() * self.n as i64
    }

    /// All labels with n ≤ n_max, ordered by n then + before −.
    pub fn all(n_max: u32) -> Vec<DyadicIndex> {
        (0..=n_max).flat_map(|n| [DyadicIndex::new(n, Sign::Plus), DyadicIndex::new(n, Sign::Minus)]).collect()
    }

    pub fn label(&self) -> String {
        let s = match self.sigma {
            Sign::Plus => '+',
            Sign::Minus => '-',
        };
        format!("{}{}", self.n, s)
    }
}

fn f_exp(t: f64) -> f64 {
    if t > 0.0 {
        (-1.0 / t).exp()
    } else {
        0.0
    }
}

/// χ(s) = f(2 − s)/(f(2 − s) + f(s − 1)), f(t) = e^{−1/t} for t > 0.
pub fn mollifier_chi(s: f64) -> f64 {
    if s <= 1.0 {
        return 1.0;
    }
    if s >= 2.0 {
        return 0.0;
    }
    let a = f_exp(2.0 - s);
    a / (a + f_exp(s - 1.0))
}

/// χ_n(ξ) = χ(2^{−n}|ξ|).
pub fn chi_n(n: u32, r: f64) -> f64 {
    mollifier_chi(r * 0.5f64.powi(n as i32))
}

/// Radial band ψ_n(|ξ|) = χ_n − χ_{n−1}; ψ₀ = χ₀.
pub fn psi_radial(n: u32, r: f64) -> f64 {
    if n == 0 {
        chi_n(0, r)
    } else {
        chi_n(n, r) - chi_n(n - 1, r)
    }
}

/// Widened radial band ψ̃_ℓ(|ξ|) = χ(2^{−ℓ−1}|ξ|) − χ(2^{−ℓ+2}|ξ|); ψ̃₀ = χ(|ξ|/2).
pub fn psi_tilde_radial(l: u32, r: f64) -> f64 {
    if l == 0 {
        mollifier_chi(r / 2.0)
    } else {
        mollifier_chi(r * 0.5f64.powi(l as i32 + 1)) - mollifier_chi(r * 2f64.powi(2 - l as i32))
    }
}

/// ψ_{Θ,n,σ}(ξ); the n = 0 piece is χ₀/2 for either σ.
pub fn dyadic_partition_eval(theta: &Polarization, idx: DyadicIndex, xi: [f64; 2]) -> f64 {
    let r = xi[0].hypot(xi[1]);
    if idx.n == 0 {
        return 0.5 * chi_n(0, r);
    }
    let rad = psi_radial(idx.n, r);
    if rad == 0.0 {
        return 0.0;
    }
    rad * theta.phi(idx.sigma, xi[1].atan2(xi[0]))
}

/// ψ̃_{Θ,ℓ,τ}(ξ), equal to 1 on the support of ψ_{Θ,ℓ,τ}.
pub fn dyadic_partition_tilde(theta: &Polarization, idx: DyadicIndex, xi: [f64; 2]) -> f64 {
    let r = xi[0].hypot(xi[1]);
    let rad = psi_tilde_radial(idx.n, r);
    if idx.n == 0 || rad == 0.0 {
        return rad;
    }
    rad * theta.phi_tilde(idx.sigma, xi[1].atan2(xi[0]))
}

/// Max |Σ_{n ≤ n_max, σ} ψ_{n,σ}(ξ) − 1| over a k×k grid filling |ξ|∞ ≤ 2^{n_max}
/// (points outside the disc are skipped).
pub fn partition_defect(theta: &Polarization, n_max: u32, k: usize) -> f64 {
    let r_max = 2f64.powi(n_max as i32);
    let labels = DyadicIndex::all(n_max);
    let rows = crate::par::map_range(k, |i| {
        let mut worst: f64 = 0.0;
        for j in 0..k {
            let xi = [
                r_max * (2.0 * i as f64 / (k - 1) as f64 - 1.0),
                r_max * (2.0 * j as f64 / (k - 1) as f64 - 1.0),
            ];
            if xi[0].hypot(xi[1]) > r_max {
                continue;
            }
            let s: f64 = labels.iter().map(|&l| dyadic_partition_eval(theta, l, xi)).sum();
            worst = worst.max((s - 1.0).abs());
        }
        worst
    });
    rows.into_iter().fold(0.0, f64::max)
}
