//! Functions on the periodic box [−B, B)², FFT multipliers and cubic
//! interpolation.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::{Fft, FftPlanner};
use serde::Serialize;

use super::{dyadic_partition_eval, AnisoError, DyadicIndex};
use crate::map_model::{Point, Polarization};
use crate::numerics::C64;
use crate::par;

/// Uniform n×n grid x_j = −B + j·h, h = 2B/n, with dual lattice (π/B)·Z².
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BoxGrid {
    pub half_width: f64,
    pub n: usize,
}

impl BoxGrid {
    pub fn new(half_width: f64, n: usize) -> Self {
        assert!(n >= 8 && n.is_power_of_two(), "grid size must be a power of two");
        assert!(half_width > 0.0);
        BoxGrid { half_width, n }
    }

    pub fn h(&self) -> f64 {
        2.0 * self.half_width / self.n as f64
    }

    pub fn len(&self) -> usize {
        self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn coord(&self, j: usize) -> f64 {
        -self.half_width + j as f64 * self.h()
    }

    /// Row-major: index i·n + j is the point (x_i, x_j).
    pub fn point(&self, idx: usize) -> Point {
        [self.coord(idx / self.n), self.coord(idx % self.n)]
    }

    pub fn freq_step(&self) -> f64 {
        PI / self.half_width
    }

    pub fn signed(&self, j: usize) -> i64 {
        if j >= self.n / 2 {
            j as i64 - self.n as i64
        } else {
            j as i64
        }
    }

    /// Lattice frequency at DFT index idx.
    pub fn freq(&self, idx: usize) -> [f64; 2] {
        let s = self.freq_step();
        [s * self.signed(idx / self.n) as f64, s * self.signed(idx % self.n) as f64]
    }

    /// Largest |ξ| resolved along the axes.
    pub fn nyquist(&self) -> f64 {
        self.freq_step() * (self.n / 2 - 1) as f64
    }
}

/// Forward/inverse 2D DFT plans for one grid size.
#[derive(Clone)]
pub struct Spectral {
    n: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Spectral {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Spectral({})", self.n)
    }
}

fn transpose(data: &[C64], n: usize) -> Vec<C64> {
    let mut out = vec![C64::new(0.0, 0.0); n * n];
    par::for_each_chunk_mut(&mut out, n, |i, row| {
        for (j, v) in row.iter_mut().enumerate() {
            *v = data[j * n + i];
        }
    });
    out
}

impl Spectral {
    pub fn new(n: usize) -> Self {
        let mut p = FftPlanner::new();
        Spectral { n, fwd: p.plan_fft_forward(n), inv: p.plan_fft_inverse(n) }
    }

    fn rows(&self, data: &mut [C64], inverse: bool) {
        let plan = if inverse { &self.inv } else { &self.fwd };
        let n = self.n;
        // a block of rows per task keeps scratch allocation off the hot path
        let block = n * (n / 8).max(1);
        par::for_each_chunk_mut(data, block, |_, chunk| {
            let mut scratch = vec![C64::new(0.0, 0.0); plan.get_inplace_scratch_len()];
            plan.process_with_scratch(chunk, &mut scratch);
        });
    }

    fn transform(&self, data: &mut Vec<C64>, inverse: bool) {
        assert_eq!(data.len(), self.n * self.n);
        self.rows(data, inverse);
        let mut t = transpose(data, self.n);
        self.rows(&mut t, inverse);
        *data = transpose(&t, self.n);
    }

    /// Unnormalized forward DFT.
    pub fn forward(&self, data: &mut Vec<C64>) {
        self.transform(data, false);
    }

    /// Inverse DFT including the 1/n² factor.
    pub fn inverse(&self, data: &mut Vec<C64>) {
        self.transform(data, true);
        let s = 1.0 / (self.n * self.n) as f64;
        data.iter_mut().for_each(|v| *v *= s);
    }
}

/// Samples of a function on a box grid.
#[derive(Clone, Debug, PartialEq)]
pub struct GridFn {
    pub grid: BoxGrid,
    pub data: Vec<C64>,
}

impl GridFn {
    pub fn zeros(grid: BoxGrid) -> Self {
        GridFn { grid, data: vec![C64::new(0.0, 0.0); grid.len()] }
    }

    pub fn sample(grid: BoxGrid, f: impl Fn(Point) -> C64 + Sync + Send) -> Self {
        GridFn { grid, data: par::map_range(grid.len(), |i| f(grid.point(i))) }
    }

    pub fn sample_real(grid: BoxGrid, f: impl Fn(Point) -> f64 + Sync + Send) -> Self {
        Self::sample(grid, |x| C64::new(f(x), 0.0))
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// ∫|u| by the grid sum.
    pub fn l1(&self) -> f64 {
        let h = self.grid.h();
        crate::numerics::ksum(self.data.iter().map(|v| v.norm())) * h * h
    }

    pub fn scaled(&self, c: C64) -> GridFn {
        GridFn { grid: self.grid, data: self.data.iter().map(|v| v * c).collect() }
    }

    pub fn add(&self, o: &GridFn) -> GridFn {
        GridFn { grid: self.grid, data: self.data.iter().zip(&o.data).map(|(a, b)| a + b).collect() }
    }

    pub fn max_diff(&self, o: &GridFn) -> f64 {
        self.data.iter().zip(&o.data).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
    }

    /// Fraction of Σ|u|² carried by points with |x|∞ > B − margin.
    pub fn edge_fraction(&self, margin: f64) -> f64 {
        let lim = self.grid.half_width - margin;
        let mut edge = 0.0;
        let mut total = 0.0;
        for (i, v) in self.data.iter().enumerate() {
            let x = self.grid.point(i);
            let w = v.norm_sqr();
            total += w;
            if x[0].abs() > lim || x[1].abs() > lim {
                edge += w;
            }
        }
        if total == 0.0 {
            0.0
        } else {
            edge / total
        }
    }

    /// ψ(D)u for a multiplier given on lattice frequencies.
    pub fn multiply(&self, sp: &Spectral, m: &(dyn Fn([f64; 2]) -> f64 + Sync)) -> GridFn {
        let mut d = self.data.clone();
        sp.forward(&mut d);
        let g = self.grid;
        par::for_each_chunk_mut(&mut d, g.n, |i, row| {
            for (j, v) in row.iter_mut().enumerate() {
                *v *= m(g.freq(i * g.n + j));
            }
        });
        sp.inverse(&mut d);
        GridFn { grid: g, data: d }
    }

    /// Same with a precomputed table of multiplier values.
    pub fn multiply_table(&self, sp: &Spectral, table: &[f64]) -> GridFn {
        let mut d = self.data.clone();
        sp.forward(&mut d);
        d.iter_mut().zip(table).for_each(|(v, m)| *v *= m);
        sp.inverse(&mut d);
        GridFn { grid: self.grid, data: d }
    }

    /// Periodic Keys cubic interpolation at an arbitrary point.
    pub fn interp(&self, p: Point) -> C64 {
        let g = self.grid;
        let n = g.n as i64;
        let h = g.h();
        let t0 = (p[0] + g.half_width) / h;
        let t1 = (p[1] + g.half_width) / h;
        let (i0, f0) = (t0.floor(), t0 - t0.floor());
        let (j0, f1) = (t1.floor(), t1 - t1.floor());
        let w0 = keys_weights(f0);
        let w1 = keys_weights(f1);
        let mut acc = C64::new(0.0, 0.0);
        for (a, wa) in w0.iter().enumerate() {
            let i = (i0 as i64 + a as i64 - 1).rem_euclid(n) as usize;
            let row = &self.data[i * g.n..(i + 1) * g.n];
            let mut s = C64::new(0.0, 0.0);
            for (b, wb) in w1.iter().enumerate() {
                let j = (j0 as i64 + b as i64 - 1).rem_euclid(n) as usize;
                s += row[j] * wb;
            }
            acc += s * wa;
        }
        acc
    }

    /// Σ|û_ξ|² outside |ξ| < r, relative to the total.
    pub fn spectral_mass_outside(&self, sp: &Spectral, r: f64) -> f64 {
        let mut d = self.data.clone();
        sp.forward(&mut d);
        let mut out = 0.0;
        let mut total = 0.0;
        for (i, v) in d.iter().enumerate() {
            let xi = self.grid.freq(i);
            let w = v.norm_sqr();
            total += w;
            if xi[0].hypot(xi[1]) >= r {
                out += w;
            }
        }
        if total == 0.0 {
            0.0
        } else {
            out / total
        }
    }
}

/// Keys cubic convolution weights (a = −1/2) for offsets −1, 0, 1, 2.
fn keys_weights(t: f64) -> [f64; 4] {
    let a = -0.5;
    let w = |x: f64| {
        let x = x.abs();
        if x <= 1.0 {
            (a + 2.0) * x * x * x - (a + 3.0) * x * x + 1.0
        } else if x < 2.0 {
            a * x * x * x - 5.0 * a * x * x + 8.0 * a * x - 4.0 * a
        } else {
            0.0
        }
    };
    [w(1.0 + t), w(t), w(1.0 - t), w(2.0 - t)]
}

/// Band-limited piece with its declared label.
#[derive(Clone, Debug, PartialEq)]
pub struct BandFunction {
    pub samples: GridFn,
    pub band: DyadicIndex,
}

impl BandFunction {
    /// Spectral mass outside supp χ_{n+3}, relative.
    pub fn outside_mass(&self, sp: &Spectral) -> f64 {
        self.samples.spectral_mass_outside(sp, 2f64.powi(self.band.n as i32 + 4))
    }

    /// Relative mass in the outer B/4 strip, a wraparound indicator.
    pub fn wraparound_mass(&self) -> f64 {
        self.samples.edge_fraction(self.samples.grid.half_width / 4.0)
    }
}

/// u_{n,σ} = ψ_{Θ,n,σ}(D)u; u must vanish within B/4 of the box edge.
pub fn band_project(u: &GridFn, theta: &Polarization, band: DyadicIndex) -> Result<BandFunction, AnisoError> {
    let frac = u.edge_fraction(u.grid.half_width / 4.0);
    if frac > 1e-28 {
        return Err(AnisoError::SupportMarginViolated { fraction: frac });
    }
    let sp = Spectral::new(u.grid.n);
    Ok(BandFunction { samples: u.multiply(&sp, &|xi| dyadic_partition_eval(theta, band, xi)), band })
}

/// Same projection for data read as periodic on the box (no margin check).
pub fn band_project_periodic(u: &GridFn, theta: &Polarization, band: DyadicIndex) -> BandFunction {
    let sp = Spectral::new(u.grid.n);
    BandFunction { samples: u.multiply(&sp, &|xi| dyadic_partition_eval(theta, band, xi)), band }
}
