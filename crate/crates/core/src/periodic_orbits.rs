//! Fixed points of T^m: exact lattice enumeration for toral automorphisms and
//! Newton homotopy continuation for their perturbations.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::map_model::{torus_diff, torus_dist, Mat2, MapError, MapSystem, Point, Vec2};
use crate::par;

/// Points closer than this (torus metric) count as the same point.
pub const DEDUPE_RADIUS: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OrbitError {
    #[error("matrix has an eigenvalue on the unit circle")]
    NonHyperbolicMatrix,
    #[error("Newton iteration diverged for reference point {point:?} at homotopy step {step}")]
    NewtonDiverged { point: Point, step: usize },
    #[error("linearization singular at {point:?}: ‖(I − DT^m)⁻¹‖ = {norm:.3e}")]
    SingularLinearization { point: Point, norm: f64 },
    #[error("continued points {a:?} and {b:?} collided")]
    CollisionDetected { a: Point, b: Point },
    #[error("map is not a torus map")]
    NotTorus,
    #[error(transparent)]
    Map(#[from] MapError),
    #[error("cache i/o: {0}")]
    Cache(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    LatticeExact,
    NewtonContinued,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeriodicPoint {
    pub x: Point,
    /// DT^m(x), row-major.
    pub dtm: [[f64; 2]; 2],
    /// g^(m)(x).
    pub gm: f64,
}

impl PeriodicPoint {
    pub fn dtm(&self) -> Mat2 {
        Mat2::new(self.dtm[0][0], self.dtm[0][1], self.dtm[1][0], self.dtm[1][1])
    }
}

fn to_rows(m: &Mat2) -> [[f64; 2]; 2] {
    [[m[(0, 0)], m[(0, 1)]], [m[(1, 0)], m[(1, 1)]]]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeriodicPointSet {
    pub period: usize,
    pub points: Vec<PeriodicPoint>,
    pub method: Method,
}

// ---------------------------------------------------------------------------
// Integer linear algebra

pub type IMat = Vec<Vec<i128>>;

pub fn imat_mul(a: &IMat, b: &IMat) -> IMat {
    let n = a.len();
    let k = b.len();
    let m = b[0].len();
    (0..n).map(|i| (0..m).map(|j| (0..k).map(|l| a[i][l] * b[l][j]).sum()).collect()).collect()
}

pub fn imat_pow(a: &IMat, m: usize) -> IMat {
    let n = a.len();
    let mut r: IMat = (0..n).map(|i| (0..n).map(|j| (i == j) as i128).collect()).collect();
    for _ in 0..m {
        r = imat_mul(&r, a);
    }
    r
}

/// Smith normal form: returns (diagonal d₁ | d₂ | …, V unimodular) with U·M·V = diag(d).
pub fn smith_normal_form(m: &IMat) -> (Vec<i128>, IMat) {
    let n = m.len();
    let mut a = m.clone();
    let mut v: IMat = (0..n).map(|i| (0..n).map(|j| (i == j) as i128).collect()).collect();
    let swap_cols = |a: &mut IMat, v: &mut IMat, i: usize, j: usize| {
        for row in a.iter_mut() {
            row.swap(i, j);
        }
        for row in v.iter_mut() {
            row.swap(i, j);
        }
    };
    // col_j -= q·col_i
    let col_op = |a: &mut IMat, v: &mut IMat, j: usize, i: usize, q: i128| {
        for row in a.iter_mut() {
            row[j] -= q * row[i];
        }
        for row in v.iter_mut() {
            row[j] -= q * row[i];
        }
    };
    for t in 0..n {
        loop {
            // pivot: smallest nonzero |entry| in the trailing block
            let mut best: Option<(usize, usize)> = None;
            for i in t..n {
                for j in t..n {
                    if a[i][j] != 0 && best.is_none_or(|(bi, bj)| a[i][j].abs() < a[bi][bj].abs()) {
                        best = Some((i, j));
                    }
                }
            }
            let Some((pi, pj)) = best else { break };
            a.swap(t, pi);
            swap_cols(&mut a, &mut v, t, pj);
            let p = a[t][t];
            let mut clean = true;
            for i in t + 1..n {
                let q = a[i][t].div_euclid(p);
                if q != 0 {
                    let rt = a[t].clone();
                    for (x, y) in a[i].iter_mut().zip(rt) {
                        *x -= q * y;
                    }
                }
                clean &= a[i][t] == 0;
            }
            for j in t + 1..n {
                let q = a[t][j].div_euclid(p);
                if q != 0 {
                    col_op(&mut a, &mut v, j, t, q);
                }
                clean &= a[t][j] == 0;
            }
            if !clean {
                continue;
            }
            // divisibility of the trailing block
            let bad = (t + 1..n).flat_map(|i| (t + 1..n).map(move |j| (i, j))).find(|&(i, j)| a[i][j] % p != 0);
            match bad {
                Some((i, _)) => {
                    let ri = a[i].clone();
                    for (x, y) in a[t].iter_mut().zip(ri) {
                        *x += y;
                    }
                }
                None => break,
            }
        }
    }
    let d = (0..n).map(|i| a[i][i].abs()).collect();
    (d, v)
}

fn to_imat(a: [[i64; 2]; 2]) -> IMat {
    a.iter().map(|r| r.iter().map(|&x| x as i128).collect()).collect()
}

fn is_hyperbolic(a: [[i64; 2]; 2]) -> bool {
    let m = Mat2::new(a[0][0] as f64, a[0][1] as f64, a[1][0] as f64, a[1][1] as f64);
    eig2_moduli(&m).iter().all(|&e| (e - 1.0).abs() > 1e-12)
}

/// Moduli of the eigenvalues of a real 2×2 matrix.
pub fn eig2_moduli(m: &Mat2) -> [f64; 2] {
    let tr = m.trace();
    let det = m.determinant();
    let disc = tr * tr / 4.0 - det;
    if disc >= 0.0 {
        let s = disc.sqrt();
        [(tr / 2.0 + s).abs(), (tr / 2.0 - s).abs()]
    } else {
        let r = det.abs().sqrt();
        [r, r]
    }
}

/// Exact fixed points of x ↦ Ax (mod 1) iterated m times, as integer
/// numerators over a common denominator.
pub fn lattice_fixed_points(a: [[i64; 2]; 2], m: usize) -> Result<(Vec<[i128; 2]>, i128), OrbitError> {
    if !is_hyperbolic(a) {
        return Err(OrbitError::NonHyperbolicMatrix);
    }
    let mut am = imat_pow(&to_imat(a), m);
    for (i, row) in am.iter_mut().enumerate() {
        row[i] -= 1;
    }
    let (d, v) = smith_normal_form(&am);
    if d.contains(&0) {
        return Err(OrbitError::NonHyperbolicMatrix);
    }
    let den = *d.last().unwrap();
    let mut out = Vec::with_capacity((d[0] * d[1]) as usize);
    for w0 in 0..d[0] {
        for w1 in 0..d[1] {
            let y = [w0 * (den / d[0]), w1 * (den / d[1])];
            let num = [
                (v[0][0] * y[0] + v[0][1] * y[1]).rem_euclid(den),
                (v[1][0] * y[0] + v[1][1] * y[1]).rem_euclid(den),
            ];
            out.push(num);
        }
    }
    out.sort();
    Ok((out, den))
}

pub fn fixed_points_linear_toral(a: [[i64; 2]; 2], m: usize) -> Result<PeriodicPointSet, OrbitError> {
    fixed_points_with_weight(a, m, &|_| 1.0)
}

/// Lattice fixed points of T^m for a pure automorphism with weight g.
pub fn fixed_points_for(sys: &MapSystem, m: usize) -> Result<PeriodicPointSet, OrbitError> {
    let a = sys.linear_part().ok_or(OrbitError::NotTorus)?;
    let w = |x: Point| sys.weight.eval(x);
    fixed_points_with_weight(a, m, &w)
}

fn fixed_points_with_weight(
    a: [[i64; 2]; 2],
    m: usize,
    g: &(dyn Fn(Point) -> f64 + Sync),
) -> Result<PeriodicPointSet, OrbitError> {
    assert!(m >= 1);
    let (nums, den) = lattice_fixed_points(a, m)?;
    let ai = to_imat(a);
    let am = imat_pow(&ai, m);
    let dtm = Mat2::new(am[0][0] as f64, am[0][1] as f64, am[1][0] as f64, am[1][1] as f64);
    let dtm = to_rows(&dtm);
    let df = den as f64;
    let points = par::map_slice(&nums, |n| {
        // exact orbit on numerators
        let mut y = *n;
        let mut gm = 1.0;
        for _ in 0..m {
            gm *= g([y[0] as f64 / df, y[1] as f64 / df]);
            y = [
                (ai[0][0] * y[0] + ai[0][1] * y[1]).rem_euclid(den),
                (ai[1][0] * y[0] + ai[1][1] * y[1]).rem_euclid(den),
            ];
        }
        PeriodicPoint { x: [n[0] as f64 / df, n[1] as f64 / df], dtm, gm }
    });
    Ok(PeriodicPointSet { period: m, points, method: Method::LatticeExact })
}

// ---------------------------------------------------------------------------
// Continuation

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NewtonOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions { tol: 1e-12, max_iter: 50 }
    }
}

/// Homotopy schedule 0 → eps with steps of at most `max_step`.
pub fn default_path(eps: f64, max_step: f64) -> Vec<f64> {
    let n = ((eps.abs() / max_step).ceil() as usize).max(1);
    (1..=n).map(|k| eps * k as f64 / n as f64).collect()
}

fn wrap_point(x: Vec2) -> Point {
    let w = |v: f64| {
        let r = v.rem_euclid(1.0);
        if r >= 1.0 {
            0.0
        } else {
            r
        }
    };
    [w(x[0]), w(x[1])]
}

/// Multiple-shooting Newton solve for a period-m orbit on the torus.
///
/// Unknowns are the m orbit points; equations x_{k+1} = T(x_k) with x_m = x_0.
/// Each equation involves a single map step, so the basin of convergence does
/// not shrink with m the way single shooting on T^m does. Returns the orbit
/// and the final max-norm residual.
pub fn newton_periodic_orbit(
    sys: &MapSystem,
    orbit: &[Point],
    opts: &NewtonOptions,
    polish: bool,
) -> Result<(Vec<Point>, f64), Option<f64>> {
    let m = orbit.len();
    let mut xs: Vec<Vec2> = orbit.iter().map(|p| Vec2::new(p[0], p[1])).collect();
    let mut polished = false;
    for _ in 0..opts.max_iter {
        let pts: Vec<Point> = xs.iter().map(|v| [v[0], v[1]]).collect();
        let r: Vec<Vec2> = (0..m).map(|k| torus_diff(sys.forward(pts[k]), pts[(k + 1) % m])).collect();
        let rnorm = r.iter().map(|v| v.amax()).fold(0.0, f64::max);
        if polished || rnorm <= opts.tol * 1e-3 {
            return Ok((pts.iter().map(|p| wrap_point(Vec2::new(p[0], p[1]))).collect(), rnorm));
        }
        if rnorm <= opts.tol && !polish {
            return Ok((pts.iter().map(|p| wrap_point(Vec2::new(p[0], p[1]))).collect(), rnorm));
        }
        polished = rnorm <= opts.tol;
        // δ_{k+1} − J_k δ_k = r_k, δ_m = δ_0
        let js: Vec<Mat2> = pts.iter().map(|p| sys.jacobian(*p)).collect();
        let mut phi = Mat2::identity();
        let mut s = Vec2::zeros();
        for k in 0..m {
            phi = js[k] * phi;
            s = js[k] * s + r[k];
        }
        let lin = Mat2::identity() - phi;
        let inv = lin.try_inverse().ok_or(Some(f64::INFINITY))?;
        let n = inv.amax() * 2.0;
        if n > 1e10 {
            return Err(Some(n));
        }
        let mut d = inv * s;
        for k in 0..m {
            xs[k] += d;
            d = js[k] * d + r[k];
        }
    }
    Err(None)
}

/// Single-point convenience wrapper: orbit of x0 under `sys`, then
/// multiple-shooting Newton. Returns (x, residual).
pub fn newton_periodic(
    sys: &MapSystem,
    x0: Point,
    m: usize,
    opts: &NewtonOptions,
) -> Result<(Point, f64), Option<f64>> {
    let orbit: Vec<Point> = (0..m).scan(x0, |y, _| {
        let cur = *y;
        *y = sys.forward(cur);
        Some(cur)
    }).collect();
    newton_periodic_orbit(sys, &orbit, opts, true).map(|(o, r)| (o[0], r))
}

/// Continues every reference point of the unperturbed map along `eps_path`.
pub fn continue_periodic_points(
    sys: &MapSystem,
    reference: &PeriodicPointSet,
    eps_path: &[f64],
    opts: &NewtonOptions,
) -> Result<PeriodicPointSet, OrbitError> {
    if !sys.is_torus() {
        return Err(OrbitError::NotTorus);
    }
    let m = reference.period;
    let target = eps_path.last().copied().unwrap_or(0.0);
    if target == 0.0 && sys.eps() == 0.0 {
        return Ok(reference.clone());
    }
    let stages: Vec<MapSystem> = eps_path.iter().map(|&e| sys.at_eps(e)).collect();
    let base = sys.at_eps(0.0);
    let results = par::map_slice(&reference.points, |pp| {
        let mut orbit: Vec<Point> = Vec::with_capacity(m);
        let mut y = pp.x;
        for _ in 0..m {
            orbit.push(y);
            y = base.forward(y);
        }
        let last = stages.len() - 1;
        let loose = NewtonOptions { tol: opts.tol.max(1e-9), ..*opts };
        for (step, s) in stages.iter().enumerate() {
            let res = if step == last {
                newton_periodic_orbit(s, &orbit, opts, true)
            } else {
                newton_periodic_orbit(s, &orbit, &loose, false)
            };
            match res {
                Ok((o, _)) => orbit = o,
                Err(Some(norm)) => return Err(OrbitError::SingularLinearization { point: pp.x, norm }),
                Err(None) => return Err(OrbitError::NewtonDiverged { point: pp.x, step }),
            }
        }
        Ok(orbit[0])
    });
    let fin = sys.at_eps(target);
    let mut pts = Vec::with_capacity(results.len());
    for r in results {
        pts.push(r?);
    }
    let mut points = par::map_slice(&pts, |x| {
        let j = fin.jacobian_cocycle(*x, m).expect("torus cocycle");
        PeriodicPoint { x: *x, dtm: to_rows(&j), gm: fin.weight_product(*x, m) }
    });
    points.sort_by(|a, b| a.x.partial_cmp(&b.x).unwrap());
    if let Some((a, b)) = find_collision(&points) {
        return Err(OrbitError::CollisionDetected { a, b });
    }
    Ok(PeriodicPointSet { period: m, points, method: Method::NewtonContinued })
}

/// First pair closer than the dedupe radius, via a hashed grid.
fn find_collision(points: &[PeriodicPoint]) -> Option<(Point, Point)> {
    let cells = (1.0 / DEDUPE_RADIUS) as i64;
    let key = |x: Point| ((x[0] * cells as f64) as i64 % cells, (x[1] * cells as f64) as i64 % cells);
    let mut grid: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    for (i, p) in points.iter().enumerate() {
        grid.entry(key(p.x)).or_default().push(i);
    }
    for (i, p) in points.iter().enumerate() {
        let (a, b) = key(p.x);
        for da in -1..=1 {
            for db in -1..=1 {
                let k = ((a + da).rem_euclid(cells), (b + db).rem_euclid(cells));
                if let Some(v) = grid.get(&k) {
                    for &j in v {
                        if j > i && torus_dist(p.x, points[j].x) < DEDUPE_RADIUS {
                            return Some((p.x, points[j].x));
                        }
                    }
                }
            }
        }
    }
    None
}

/// Fixed points of T^m for any builtin torus map: lattice enumeration for
/// the linear part, then continuation to the actual perturbation.
pub fn periodic_points(sys: &MapSystem, m: usize, opts: &NewtonOptions) -> Result<PeriodicPointSet, OrbitError> {
    let a = sys.linear_part().ok_or(OrbitError::NotTorus)?;
    if sys.eps() == 0.0 {
        return fixed_points_for(sys, m);
    }
    let reference = fixed_points_linear_toral(a, m)?;
    continue_periodic_points(sys, &reference, &default_path(sys.eps(), 0.0025), opts)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CountReport {
    pub ok: bool,
    pub expected: u128,
    pub found: usize,
}

/// Lefschetz count check |Fix T^m| = |det(A^m − I)|.
pub fn verify_count(set: &PeriodicPointSet, a: [[i64; 2]; 2]) -> CountReport {
    let mut am = imat_pow(&to_imat(a), set.period);
    am[0][0] -= 1;
    am[1][1] -= 1;
    let det = (am[0][0] * am[1][1] - am[0][1] * am[1][0]).unsigned_abs();
    CountReport { ok: det == set.points.len() as u128, expected: det, found: set.points.len() }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SetCheck {
    pub max_residual: f64,
    pub min_unit_circle_gap: f64,
    pub collision: bool,
}

/// Residual, hyperbolicity and separation invariants of a point set.
pub fn check_set(sys: &MapSystem, set: &PeriodicPointSet) -> SetCheck {
    let res = par::map_slice(&set.points, |p| {
        let r = torus_dist(sys.iterate(p.x, set.period), p.x);
        let gap = eig2_moduli(&p.dtm()).iter().map(|e| (e - 1.0).abs()).fold(f64::INFINITY, f64::min);
        (r, gap)
    });
    SetCheck {
        max_residual: res.iter().map(|r| r.0).fold(0.0, f64::max),
        min_unit_circle_gap: res.iter().map(|r| r.1).fold(f64::INFINITY, f64::min),
        collision: find_collision(&set.points).is_some(),
    }
}

// ---------------------------------------------------------------------------
// Cache

/// Cache key (map id, eps, m, tol).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CacheKey {
    pub map_id: String,
    pub eps: f64,
    pub m: usize,
    pub tol: f64,
}

#[derive(Serialize, Deserialize)]
struct CacheFile {
    key: CacheKey,
    set: PeriodicPointSet,
}

pub fn cache_path(dir: &Path, key: &CacheKey) -> PathBuf {
    dir.join(format!("orbits_{}_eps{:e}_m{}_tol{:e}.json", key.map_id, key.eps, key.m, key.tol))
}

pub fn save_cache(dir: &Path, key: &CacheKey, set: &PeriodicPointSet) -> Result<PathBuf, OrbitError> {
    std::fs::create_dir_all(dir).map_err(|e| OrbitError::Cache(e.to_string()))?;
    let path = cache_path(dir, key);
    let body = serde_json::to_string(&CacheFile { key: key.clone(), set: set.clone() })
        .map_err(|e| OrbitError::Cache(e.to_string()))?;
    std::fs::write(&path, body).map_err(|e| OrbitError::Cache(e.to_string()))?;
    Ok(path)
}

/// Loads a cached set when present and its stored key matches exactly.
pub fn load_cache(dir: &Path, key: &CacheKey) -> Option<PeriodicPointSet> {
    let body = std::fs::read_to_string(cache_path(dir, key)).ok()?;
    let f: CacheFile = serde_json::from_str(&body).ok()?;
    (f.key == *key).then_some(f.set)
}

/// `periodic_points` through an optional cache directory.
pub fn periodic_points_cached(
    sys: &MapSystem,
    m: usize,
    opts: &NewtonOptions,
    cache: Option<&Path>,
) -> Result<PeriodicPointSet, OrbitError> {
    let key = CacheKey { map_id: format!("{}-{}", sys.id, sys.weight.id()), eps: sys.eps(), m, tol: opts.tol };
    if let Some(dir) = cache {
        if let Some(s) = load_cache(dir, &key) {
            return Ok(s);
        }
    }
    let s = periodic_points(sys, m, opts)?;
    if let Some(dir) = cache {
        save_cache(dir, &key, &s)?;
    }
    Ok(s)
}
