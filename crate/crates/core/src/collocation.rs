//! Fourier collocation of L u = g·(u∘T) on torus modes k ∈ [−N, N]², its
//! resolution-stable spectrum, and the match against determinant zeros.

use std::collections::HashMap;
use std::f64::consts::TAU;
use std::sync::{Arc, OnceLock};

use nalgebra::DMatrix;
use rand::Rng;
use rustfft::{Fft, FftPlanner};
use serde::Serialize;
use thiserror::Error;

use crate::determinant::Zero;
use crate::map_model::{MapKind, MapSystem, Point};
use crate::numerics::{eigen_with_residuals, hessenberg_eigenvalues, hessenberg_eigenvector, hessenberg_residual, rng, EigError, C64};
use crate::par;

/// Entries below this modulus are not stored.
pub const DROP_TOL: f64 = 1e-14;
/// Largest demodulation grid tried before giving up on the tail criterion.
const MAX_GRID: usize = 1024;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CollocationError {
    #[error("collocation needs a torus map of the form Ax + P(x)")]
    NotTorus,
    #[error("eigensolver failed: {0}")]
    EigenSolverFailure(#[from] EigError),
    #[error("stored entry disagrees with direct quadrature by {max_err:.3e}")]
    QuadratureMismatch { max_err: f64 },
}

/// Frequency-space matrix of L in compressed-column form; column index
/// encodes k, row index encodes k′, entry = ⟨e_{k′}, g·e_k∘T⟩.
#[derive(Clone, Debug, PartialEq)]
pub struct TransferMatrix {
    pub n_freq: usize,
    pub grid_factor: usize,
    col_ptr: Vec<usize>,
    rows: Vec<u32>,
    vals: Vec<C64>,
    /// Set when grid_factor < 4.
    pub aliasing_risk: bool,
    /// Largest relative spectral tail left on any demodulation grid.
    pub max_tail: f64,
}

pub fn freq_index(n: usize, k: [i64; 2]) -> Option<usize> {
    let n = n as i64;
    if k[0].abs() > n || k[1].abs() > n {
        return None;
    }
    Some(((k[0] + n) * (2 * n + 1) + (k[1] + n)) as usize)
}

pub fn freq_of(n: usize, idx: usize) -> [i64; 2] {
    let w = 2 * n + 1;
    [(idx / w) as i64 - n as i64, (idx % w) as i64 - n as i64]
}

fn a_transpose(a: [[i64; 2]; 2], k: [i64; 2]) -> [i64; 2] {
    [a[0][0] * k[0] + a[1][0] * k[1], a[0][1] * k[0] + a[1][1] * k[1]]
}

impl TransferMatrix {
    pub fn dim(&self) -> usize {
        self.col_ptr.len() - 1
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn column(&self, c: usize) -> impl Iterator<Item = (usize, C64)> + '_ {
        (self.col_ptr[c]..self.col_ptr[c + 1]).map(move |i| (self.rows[i] as usize, self.vals[i]))
    }

    /// Stored entry at (k′, k); zero when dropped or outside the box.
    pub fn entry(&self, kp: [i64; 2], k: [i64; 2]) -> C64 {
        let (Some(r), Some(c)) = (freq_index(self.n_freq, kp), freq_index(self.n_freq, k)) else {
            return C64::new(0.0, 0.0);
        };
        self.column(c).find(|(i, _)| *i == r).map(|e| e.1).unwrap_or(C64::new(0.0, 0.0))
    }

    pub fn matvec(&self, x: &[C64]) -> Vec<C64> {
        let mut y = vec![C64::new(0.0, 0.0); self.dim()];
        for (c, xc) in x.iter().enumerate() {
            if *xc == C64::new(0.0, 0.0) {
                continue;
            }
            for (r, v) in self.column(c) {
                y[r] += v * xc;
            }
        }
        y
    }

    pub fn to_dense(&self) -> DMatrix<C64> {
        let n = self.dim();
        let mut m = DMatrix::from_element(n, n, C64::new(0.0, 0.0));
        for c in 0..n {
            for (r, v) in self.column(c) {
                m[(r, c)] = v;
            }
        }
        m
    }

    /// Wraps a dense square matrix of dimension (2N+1)².
    pub fn from_dense(m: &DMatrix<C64>, n_freq: usize) -> TransferMatrix {
        let dim = m.nrows();
        assert_eq!(dim, (2 * n_freq + 1).pow(2));
        let mut col_ptr = vec![0];
        let mut rows = Vec::new();
        let mut vals = Vec::new();
        for c in 0..dim {
            for r in 0..dim {
                if m[(r, c)].norm() > DROP_TOL {
                    rows.push(r as u32);
                    vals.push(m[(r, c)]);
                }
            }
            col_ptr.push(rows.len());
        }
        TransferMatrix { n_freq, grid_factor: 4, col_ptr, rows, vals, aliasing_risk: false, max_tail: 0.0 }
    }

    pub fn scaled(&self, s: f64) -> TransferMatrix {
        let mut t = self.clone();
        t.vals.iter_mut().for_each(|v| *v *= s);
        t
    }
}

struct Fft2 {
    plans: HashMap<usize, Arc<dyn Fft<f64>>>,
}

impl Fft2 {
    fn new() -> Self {
        let mut planner = FftPlanner::new();
        let mut plans = HashMap::new();
        let mut g = 16;
        while g <= MAX_GRID {
            plans.insert(g, planner.plan_fft_forward(g));
            g *= 2;
        }
        Fft2 { plans }
    }

    /// Forward 2D DFT of a g×g row-major array, in place.
    fn forward(&self, data: &mut [C64], g: usize) {
        let fft = &self.plans[&g];
        let mut scratch = vec![C64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
        fft.process_with_scratch(data, &mut scratch);
        let mut col = vec![C64::new(0.0, 0.0); g];
        for j in 0..g {
            for i in 0..g {
                col[i] = data[i * g + j];
            }
            fft.process_with_scratch(&mut col, &mut scratch);
            for i in 0..g {
                data[i * g + j] = col[i];
            }
        }
    }
}

/// Perturbation and weight sampled on a g×g grid, built once per grid size.
struct GridSamples {
    pert: Vec<[f64; 2]>,
    weight: Vec<C64>,
}

struct SampleCache<'a> {
    sys: &'a MapSystem,
    weight: &'a (dyn Fn(Point) -> C64 + Sync),
    grids: Vec<(usize, OnceLock<GridSamples>)>,
}

impl<'a> SampleCache<'a> {
    fn new(sys: &'a MapSystem, weight: &'a (dyn Fn(Point) -> C64 + Sync)) -> Self {
        let mut grids = Vec::new();
        let mut g = 16;
        while g <= MAX_GRID {
            grids.push((g, OnceLock::new()));
            g *= 2;
        }
        SampleCache { sys, weight, grids }
    }

    fn get(&self, g: usize) -> &GridSamples {
        let cell = &self.grids.iter().find(|e| e.0 == g).expect("power-of-two grid").1;
        cell.get_or_init(|| {
            let pts: Vec<Point> = (0..g * g).map(|i| [(i / g) as f64 / g as f64, (i % g) as f64 / g as f64]).collect();
            GridSamples {
                pert: pts.iter().map(|x| {
                    let p = self.sys.perturbation(*x);
                    [p[0], p[1]]
                }).collect(),
                weight: pts.iter().map(|x| (self.weight)(*x)).collect(),
            }
        })
    }
}

/// Fourier coefficients of g·e^{2πi k·P} on a g×g grid, index (j₁ mod g, j₂ mod g).
fn coefficients(fft: &Fft2, cache: &SampleCache, k: [i64; 2], g: usize) -> Vec<C64> {
    let smp = cache.get(g);
    let (k0, k1) = (k[0] as f64, k[1] as f64);
    let mut data: Vec<C64> = smp
        .pert
        .iter()
        .zip(&smp.weight)
        .map(|(p, w)| w * C64::from_polar(1.0, TAU * (k0 * p[0] + k1 * p[1])))
        .collect();
    fft.forward(&mut data, g);
    let s = 1.0 / (g * g) as f64;
    data.iter_mut().for_each(|v| *v *= s);
    data
}

fn signed(j: usize, g: usize) -> i64 {
    if j >= g / 2 {
        j as i64 - g as i64
    } else {
        j as i64
    }
}

/// max |ĥ| on the outer eighth of the spectrum relative to max |ĥ|.
fn tail_ratio(c: &[C64], g: usize) -> f64 {
    let edge = (g / 2 - g / 8) as i64;
    let mut top: f64 = 0.0;
    let mut tail: f64 = 0.0;
    for (i, v) in c.iter().enumerate() {
        let a = v.norm();
        top = top.max(a);
        let (j1, j2) = (signed(i / g, g), signed(i % g, g));
        if j1.abs() >= edge || j2.abs() >= edge {
            tail = tail.max(a);
        }
    }
    if top == 0.0 {
        0.0
    } else {
        tail / top
    }
}

fn initial_grid(phase: f64) -> usize {
    // Bessel tails J_n(x) drop below 1e-16 once n exceeds x + 10·x^{1/3} + 10
    let spread = phase + 10.0 * phase.cbrt() + 10.0;
    let need = (2.0 * spread + 2.0) as usize;
    need.next_power_of_two().clamp(16, MAX_GRID)
}

/// Transfer matrix for the map's own real weight g.
pub fn build_transfer_matrix(sys: &MapSystem, n_freq: usize, grid_factor: usize) -> Result<TransferMatrix, CollocationError> {
    let w = sys.weight.clone();
    build_transfer_matrix_weighted(sys, n_freq, grid_factor, &move |x| C64::new(w.eval(x), 0.0))
}

/// Transfer matrix for an arbitrary complex weight. Column k is obtained by
/// demodulation: g·e_k∘T = e_{Aᵀk}·(g·e^{2πi k·P}), and the smooth factor is
/// FFT-projected on a grid grown until its spectral tail is negligible.
pub fn build_transfer_matrix_weighted(
    sys: &MapSystem,
    n_freq: usize,
    grid_factor: usize,
    weight: &(dyn Fn(Point) -> C64 + Sync),
) -> Result<TransferMatrix, CollocationError> {
    let (a, eps, terms) = match &sys.kind {
        MapKind::Toral { a, eps, terms } if sys.is_torus() => (*a, *eps, terms.clone()),
        _ => return Err(CollocationError::NotTorus),
    };
    let fft = Fft2::new();
    let cache = SampleCache::new(sys, weight);
    let dim = (2 * n_freq + 1).pow(2);
    let cols: Vec<(Vec<(u32, C64)>, f64)> = par::map_range(dim, |c| {
        let k = freq_of(n_freq, c);
        let phase: f64 = TAU * terms.iter().map(|t| (eps * t.amp).abs() * k[t.component].abs() as f64).sum::<f64>();
        let mut g = initial_grid(phase);
        let mut coef = coefficients(&fft, &cache, k, g);
        let mut tail = tail_ratio(&coef, g);
        while tail > 1e-15 && g < MAX_GRID {
            g *= 2;
            coef = coefficients(&fft, &cache, k, g);
            tail = tail_ratio(&coef, g);
        }
        let shift = a_transpose(a, k);
        let mut col: Vec<(u32, C64)> = coef
            .iter()
            .enumerate()
            .filter(|(_, v)| v.norm() > DROP_TOL)
            .filter_map(|(i, v)| {
                let kp = [shift[0] + signed(i / g, g), shift[1] + signed(i % g, g)];
                freq_index(n_freq, kp).map(|r| (r as u32, *v))
            })
            .collect();
        col.sort_by_key(|e| e.0);
        (col, tail)
    });
    let mut col_ptr = Vec::with_capacity(dim + 1);
    col_ptr.push(0);
    let mut rows = Vec::new();
    let mut vals = Vec::new();
    let mut max_tail: f64 = 0.0;
    for (col, tail) in cols {
        max_tail = max_tail.max(tail);
        for (r, v) in col {
            rows.push(r);
            vals.push(v);
        }
        col_ptr.push(rows.len());
    }
    Ok(TransferMatrix { n_freq, grid_factor, col_ptr, rows, vals, aliasing_risk: grid_factor < 4, max_tail })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SpotEntry {
    pub row: [i64; 2],
    pub col: [i64; 2],
    pub stored: C64,
    pub direct: C64,
}

/// Compares `n` seeded entries with direct quadrature on the
/// (grid_factor·(2N+1))² grid.
pub fn spot_check(
    sys: &MapSystem,
    tm: &TransferMatrix,
    weight: &(dyn Fn(Point) -> C64 + Sync),
    n: usize,
    seed: u64,
    tol: f64,
) -> Result<Vec<SpotEntry>, CollocationError> {
    let a = sys.linear_part().ok_or(CollocationError::NotTorus)?;
    let big = tm.grid_factor * (2 * tm.n_freq + 1);
    let nf = tm.n_freq as i64;
    let mut r = rng(seed);
    let mut picks = Vec::with_capacity(n);
    while picks.len() < n {
        let k = [r.gen_range(-nf..=nf), r.gen_range(-nf..=nf)];
        let s = a_transpose(a, k);
        let kp = [s[0] + r.gen_range(-3..=3), s[1] + r.gen_range(-3..=3)];
        let kp = if freq_index(tm.n_freq, kp).is_some() { kp } else { [r.gen_range(-nf..=nf), r.gen_range(-nf..=nf)] };
        picks.push((kp, k));
    }
    let out: Vec<SpotEntry> = par::map_slice(&picks, |&(kp, k)| {
        let terms = (0..big * big).map(|i| {
            let x = [(i / big) as f64 / big as f64, (i % big) as f64 / big as f64];
            let y = sys.forward_lift(x);
            let ph = k[0] as f64 * y[0] + k[1] as f64 * y[1] - kp[0] as f64 * x[0] - kp[1] as f64 * x[1];
            weight(x) * C64::from_polar(1.0, TAU * ph)
        });
        let direct = crate::numerics::ksum_c(terms) / (big * big) as f64;
        SpotEntry { row: kp, col: k, stored: tm.entry(kp, k), direct }
    });
    let max_err = out.iter().map(|e| (e.stored - e.direct).norm()).fold(0.0, f64::max);
    if max_err > tol {
        return Err(CollocationError::QuadratureMismatch { max_err });
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Resonance {
    pub mu: C64,
    pub residual: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct EigenOptions {
    /// Dense eigensolve up to this dimension, Arnoldi above it.
    pub dense_limit: usize,
    pub krylov_dim: usize,
    pub seed: u64,
}

impl Default for EigenOptions {
    fn default() -> Self {
        EigenOptions { dense_limit: 625, krylov_dim: 150, seed: 17 }
    }
}

fn dot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn norm(a: &[C64]) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Ritz pairs from a seeded Arnoldi run with full reorthogonalization.
fn arnoldi(tm: &TransferMatrix, opts: &EigenOptions) -> Result<Vec<Resonance>, CollocationError> {
    let n = tm.dim();
    let kmax = opts.krylov_dim.min(n);
    let mut r = rng(opts.seed);
    let mut v0: Vec<C64> = (0..n).map(|_| C64::new(r.gen::<f64>() - 0.5, r.gen::<f64>() - 0.5)).collect();
    let n0 = norm(&v0);
    v0.iter_mut().for_each(|z| *z /= n0);
    let mut basis = vec![v0];
    let mut h = DMatrix::from_element(kmax + 1, kmax, C64::new(0.0, 0.0));
    let mut k = 0;
    let scale_tol = 1e-13;
    while k < kmax {
        let mut w = tm.matvec(&basis[k]);
        let wn0 = norm(&w);
        for _pass in 0..2 {
            for (j, b) in basis.iter().enumerate() {
                let c = dot(b, &w);
                h[(j, k)] += c;
                w.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
            }
        }
        let wn = norm(&w);
        h[(k + 1, k)] = C64::new(wn, 0.0);
        k += 1;
        if wn <= scale_tol * wn0.max(1e-300) || wn == 0.0 {
            // invariant subspace found
            break;
        }
        w.iter_mut().for_each(|z| *z /= wn);
        basis.push(w);
    }
    let hk = h.view((0, 0), (k, k)).into_owned();
    let beta = h[(k, k - 1)].norm();
    let eigs = hessenberg_eigenvalues(hk.clone())?;
    Ok(eigs
        .into_iter()
        .map(|mu| {
            let y = hessenberg_eigenvector(&hk, mu);
            let residual = beta * y[k - 1].norm() + hessenberg_residual(&hk, mu, &y);
            Resonance { mu, residual }
        })
        .collect())
}

/// Eigenvalues of the truncated operator, sorted by decreasing modulus,
/// each with a residual estimate.
pub fn eigen_resonances(tm: &TransferMatrix, opts: &EigenOptions) -> Result<Vec<Resonance>, CollocationError> {
    let mut out = if tm.dim() <= opts.dense_limit {
        eigen_with_residuals(&tm.to_dense())?.into_iter().map(|(mu, residual)| Resonance { mu, residual }).collect()
    } else {
        arnoldi(tm, opts)?
    };
    out.sort_by(|a, b| b.mu.norm().total_cmp(&a.mu.norm()).then(a.mu.re.total_cmp(&b.mu.re)).then(a.mu.im.total_cmp(&b.mu.im)));
    Ok(out)
}

/// Greedy nearest-neighbor pairing of `a` with `b`, each partner used once,
/// accepting |a − b| ≤ tol·max(|a|, |b|). Returns index pairs.
fn greedy_pairs(a: &[C64], b: &[C64], tol: f64) -> Vec<(usize, usize)> {
    let mut cand: Vec<(f64, usize, usize)> = Vec::new();
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            let d = (x - y).norm();
            if d <= tol * x.norm().max(y.norm()) {
                cand.push((d, i, j));
            }
        }
    }
    cand.sort_by(|p, q| p.0.total_cmp(&q.0).then(p.1.cmp(&q.1)).then(p.2.cmp(&q.2)));
    let mut ua = vec![false; a.len()];
    let mut ub = vec![false; b.len()];
    let mut out = Vec::new();
    for (_, i, j) in cand {
        if !ua[i] && !ub[j] {
            ua[i] = true;
            ub[j] = true;
            out.push((i, j));
        }
    }
    out.sort_unstable();
    out
}

/// Eigenvalues at resolution N that have a partner at 2N within relative `tol`.
pub fn stability_filter(eigs_n: &[C64], eigs_2n: &[C64], tol: f64) -> Vec<C64> {
    greedy_pairs(eigs_n, eigs_2n, tol).into_iter().map(|(i, _)| eigs_n[i]).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MatchPair {
    pub zero: C64,
    pub inverse: C64,
    pub eigenvalue: C64,
    pub gap: f64,
    pub zero_multiplicity: usize,
    pub eigen_multiplicity: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MatchReport {
    pub radius: f64,
    pub tol: f64,
    pub pairs: Vec<MatchPair>,
    pub unmatched_zeros: Vec<C64>,
    pub unmatched_eigenvalues: Vec<C64>,
    /// Zeros inside the radius skipped for backward error above threshold.
    pub ill_conditioned_zeros: Vec<C64>,
    pub bijective: bool,
    pub multiplicities_agree: bool,
}

fn cluster(vals: &[C64], rel: f64) -> Vec<(C64, usize)> {
    let mut used = vec![false; vals.len()];
    let mut out = Vec::new();
    for i in 0..vals.len() {
        if used[i] {
            continue;
        }
        let mut group = vec![vals[i]];
        used[i] = true;
        for j in i + 1..vals.len() {
            if !used[j] && (vals[j] - vals[i]).norm() <= rel * vals[i].norm() {
                used[j] = true;
                group.push(vals[j]);
            }
        }
        out.push((group.iter().sum::<C64>() / group.len() as f64, group.len()));
    }
    out
}

/// Pairs determinant zeros z (|z| < radius) with stable eigenvalues μ
/// (|1/μ| < radius) by |μ − 1/z| ≤ tol.
pub fn match_resonances_to_zeros(stable: &[C64], zeros: &[Zero], radius: f64, tol: f64) -> MatchReport {
    let inside: Vec<&Zero> = zeros.iter().filter(|z| z.z.norm() < radius).collect();
    let ill_conditioned_zeros: Vec<C64> = inside.iter().filter(|z| z.ill_conditioned).map(|z| z.z).collect();
    let good: Vec<&Zero> = inside.into_iter().filter(|z| !z.ill_conditioned).collect();
    let eig_in: Vec<C64> = stable.iter().cloned().filter(|m| m.norm() > 0.0 && 1.0 / m.norm() < radius).collect();
    let eig_clusters = cluster(&eig_in, 1e-6);
    let inv: Vec<C64> = good.iter().map(|z| 1.0 / z.z).collect();
    let ev: Vec<C64> = eig_clusters.iter().map(|c| c.0).collect();
    let mut cand: Vec<(f64, usize, usize)> = Vec::new();
    for (i, a) in inv.iter().enumerate() {
        for (j, b) in ev.iter().enumerate() {
            let d = (a - b).norm();
            if d <= tol {
                cand.push((d, i, j));
            }
        }
    }
    cand.sort_by(|p, q| p.0.total_cmp(&q.0).then(p.1.cmp(&q.1)).then(p.2.cmp(&q.2)));
    let mut ui = vec![false; inv.len()];
    let mut uj = vec![false; ev.len()];
    let mut pairs = Vec::new();
    for (d, i, j) in cand {
        if !ui[i] && !uj[j] {
            ui[i] = true;
            uj[j] = true;
            pairs.push(MatchPair {
                zero: good[i].z,
                inverse: inv[i],
                eigenvalue: ev[j],
                gap: d,
                zero_multiplicity: good[i].multiplicity,
                eigen_multiplicity: eig_clusters[j].1,
            });
        }
    }
    pairs.sort_by(|a, b| b.eigenvalue.norm().total_cmp(&a.eigenvalue.norm()));
    let unmatched_zeros: Vec<C64> = (0..inv.len()).filter(|&i| !ui[i]).map(|i| good[i].z).collect();
    let unmatched_eigenvalues: Vec<C64> = (0..ev.len()).filter(|&j| !uj[j]).map(|j| ev[j]).collect();
    let multiplicities_agree = pairs.iter().all(|p| p.zero_multiplicity == p.eigen_multiplicity);
    MatchReport {
        radius,
        tol,
        bijective: unmatched_zeros.is_empty() && unmatched_eigenvalues.is_empty(),
        pairs,
        unmatched_zeros,
        unmatched_eigenvalues,
        ill_conditioned_zeros,
        multiplicities_agree,
    }
}

/// Resolution-stable spectrum from runs at N and 2N; only Ritz values with
/// residual ≤ `max_residual` take part.
pub fn stable_spectrum(
    at_n: &[Resonance],
    at_2n: &[Resonance],
    max_residual: f64,
    tol: f64,
) -> Vec<C64> {
    let a: Vec<C64> = at_n.iter().filter(|r| r.residual <= max_residual).map(|r| r.mu).collect();
    let b: Vec<C64> = at_2n.iter().filter(|r| r.residual <= max_residual).map(|r| r.mu).collect();
    stability_filter(&a, &b, tol)
}
