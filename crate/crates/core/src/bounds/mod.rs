//! Spectral-radius bound expressions: integral growth rates ρ^{p,q}, sup
//! bounds R^{p,q,t}, cover sums Q_*, partition sums ρ_*, periodic-orbit
//! pressures and the variational Q^{p,q}.

mod cover;
mod partition;

pub use cover::{q_star_cover, CoverOptions, CoverResult, CoverSpec, TorusBox};
pub use partition::{rho_star_partition, AxisPartition, PartitionResult};

use rand::Rng;
use serde::Serialize;
use thiserror::Error;

use crate::map_model::{weight_floor, MapError, MapSystem, Mat2, Point, SplittingField};
use crate::numerics::{ksum, linear_fit, log_sum_exp, rng, LineFit};
use crate::par;
use crate::periodic_orbits::{eig2_moduli, OrbitError, PeriodicPoint, PeriodicPointSet};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BoundsError {
    #[error("fewer than 4 rows for the growth-rate fit")]
    TooFewRows,
    #[error("sup bound violated at m = {m}: ρ = {rho:.6e} > min_t R = {r:.6e} + 3σ ({sigma:.3e})")]
    InequalityViolated { m: usize, rho: f64, r: f64, sigma: f64 },
    #[error("itinerary budget exceeded: {found} > {cap}")]
    BudgetExceeded { found: usize, cap: usize },
    #[error("growth-rate cross-check failed: ρ route {rho:.6}, variational route {q:.6}, |log gap| {gap:.4} > {tol}")]
    CrossCheckFailed { rho: f64, q: f64, gap: f64, tol: f64 },
    #[error("no periodic points of period {0}")]
    EmptyFixedSet(usize),
    #[error("partition of unity defect {0:.3e}")]
    InvalidPartition(f64),
    #[error("cover does not cover the domain (uncovered sample {0:?})")]
    InvalidCover(Point),
    #[error(transparent)]
    Map(#[from] MapError),
    #[error(transparent)]
    Orbit(#[from] OrbitError),
}

/// Monte Carlo mean with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct McEstimate {
    pub mean: f64,
    pub std_err: f64,
    pub n: usize,
}

/// Growth rate from a log-linear fit, with the fit attached.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Extrapolation {
    pub estimate: f64,
    pub fit: LineFit,
    pub poor_fit: bool,
    pub ms: Vec<usize>,
}

/// Per-point exponent data along one orbit: (λ_x(T^m), ν_x(T^m), |det DT^m|) for m = 1..=m_max.
#[derive(Clone, Debug)]
pub struct OrbitExponents {
    pub lambda: Vec<f64>,
    pub nu: Vec<f64>,
    pub det: Vec<f64>,
    pub gm: Vec<f64>,
}

/// Exponents for all m ≤ m_max at once, sharing the unstable direction at x.
pub fn orbit_exponents(
    sys: &MapSystem,
    split: &SplittingField,
    x: Point,
    m_max: usize,
) -> Result<OrbitExponents, MapError> {
    let u = split.unstable(sys, x)?;
    let mut dm = Mat2::identity();
    let mut y = x;
    let mut g = 1.0;
    let mut out = OrbitExponents {
        lambda: Vec::with_capacity(m_max),
        nu: Vec::with_capacity(m_max),
        det: Vec::with_capacity(m_max),
        gm: Vec::with_capacity(m_max),
    };
    for _ in 0..m_max {
        g *= sys.weight_at(y);
        dm = sys.jacobian(y) * dm;
        y = sys.forward(y);
        let s = split.stable(sys, y)?;
        let inv = dm.try_inverse().ok_or(MapError::DegenerateDirection { point: x, angle: 0.0 })?;
        out.lambda.push(1.0 / (inv * s).norm());
        out.nu.push((dm * u).norm());
        out.det.push(dm.determinant().abs());
        out.gm.push(g);
    }
    Ok(out)
}

impl OrbitExponents {
    /// |g^(m)|·λ^{(p,q,m)} at this point.
    pub fn rho_integrand(&self, p: f64, q: f64, m: usize) -> f64 {
        self.gm[m - 1].abs() * crate::map_model::lambda_pq(self.lambda[m - 1], self.nu[m - 1], p, q)
    }

    /// |g^(m)|·λ^{(p,q,m)}/|det DT^m|_{E^u}|.
    pub fn cover_integrand(&self, p: f64, q: f64, m: usize) -> f64 {
        self.rho_integrand(p, q, m) / self.nu[m - 1]
    }
}

/// Uniform samples of the domain (torus, or the chart box V).
pub fn sample_points(sys: &MapSystem, n: usize, seed: u64) -> Vec<Point> {
    let mut r = rng(seed);
    match sys.domain {
        crate::map_model::Domain::Torus => (0..n).map(|_| [r.gen::<f64>(), r.gen::<f64>()]).collect(),
        crate::map_model::Domain::Chart { half_width: h } => {
            (0..n).map(|_| [r.gen_range(-h..h), r.gen_range(-h..h)]).collect()
        }
    }
}

/// Regular k×k grid of cell centers over the domain.
pub fn grid_points(sys: &MapSystem, k: usize) -> Vec<Point> {
    let (lo, w) = match sys.domain {
        crate::map_model::Domain::Torus => (0.0, 1.0),
        crate::map_model::Domain::Chart { half_width: h } => (-h, 2.0 * h),
    };
    (0..k * k)
        .map(|i| [lo + w * ((i / k) as f64 + 0.5) / k as f64, lo + w * ((i % k) as f64 + 0.5) / k as f64])
        .collect()
}

fn mc(values: &[f64]) -> McEstimate {
    let n = values.len() as f64;
    let mean = ksum(values.iter().cloned()) / n;
    let var = ksum(values.iter().map(|v| (v - mean) * (v - mean))) / (n - 1.0).max(1.0);
    McEstimate { mean, std_err: (var / n).sqrt(), n: values.len() }
}

/// Exponent data at a shared set of sample points.
pub fn exponent_samples(
    sys: &MapSystem,
    split: &SplittingField,
    pts: &[Point],
    m_max: usize,
) -> Result<Vec<OrbitExponents>, MapError> {
    par::map_slice(pts, |x| orbit_exponents(sys, split, *x, m_max)).into_iter().collect()
}

/// Monte Carlo ρ^{p,q}(m) = ∫ |g^(m)|·λ^{(p,q,m)} dx over the normalized domain.
pub fn rho_pq_m(
    sys: &MapSystem,
    split: &SplittingField,
    p: f64,
    q: f64,
    m: usize,
    n_samples: usize,
    seed: u64,
) -> Result<McEstimate, BoundsError> {
    let pts = sample_points(sys, n_samples, seed);
    let ex = exponent_samples(sys, split, &pts, m)?;
    Ok(rho_from_samples(&ex, p, q, m))
}

pub fn rho_from_samples(ex: &[OrbitExponents], p: f64, q: f64, m: usize) -> McEstimate {
    let v: Vec<f64> = ex.iter().map(|e| e.rho_integrand(p, q, m)).collect();
    mc(&v)
}

/// Exponentiated least-squares slope of log value vs m over the largest 4 m.
pub fn rho_pq_estimate(rows: &[(usize, f64)]) -> Result<Extrapolation, BoundsError> {
    if rows.len() < 4 {
        return Err(BoundsError::TooFewRows);
    }
    let mut r = rows.to_vec();
    r.sort_by_key(|x| x.0);
    let tail = &r[r.len() - 4..];
    let xs: Vec<f64> = tail.iter().map(|x| x.0 as f64).collect();
    let ys: Vec<f64> = tail.iter().map(|x| x.1.ln()).collect();
    let fit = linear_fit(&xs, &ys);
    Ok(Extrapolation { estimate: fit.slope.exp(), poor_fit: fit.residual > 0.1, fit, ms: tail.iter().map(|x| x.0).collect() })
}

/// Sampled sup of |det DT^m|^{−1/t}·|g^(m)|·λ^{(p,q,m)}; t = ∞ drops the determinant.
pub fn r_from_samples(ex: &[OrbitExponents], p: f64, q: f64, t: f64, m: usize) -> f64 {
    ex.iter()
        .map(|e| {
            let d = if t.is_infinite() { 1.0 } else { e.det[m - 1].powf(-1.0 / t) };
            d * e.rho_integrand(p, q, m)
        })
        .fold(0.0, f64::max)
}

/// R^{p,q,t}(m) sampled over a deterministic 64×64 grid plus `n_samples` random points.
#[allow(clippy::too_many_arguments)]
pub fn r_pqt_m(
    sys: &MapSystem,
    split: &SplittingField,
    p: f64,
    q: f64,
    t: f64,
    m: usize,
    n_samples: usize,
    seed: u64,
) -> Result<f64, BoundsError> {
    let mut pts = grid_points(sys, 64);
    pts.extend(sample_points(sys, n_samples, seed));
    let ex = exponent_samples(sys, split, &pts, m)?;
    Ok(r_from_samples(&ex, p, q, t, m))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SupBoundRow {
    pub m: usize,
    pub rho: f64,
    pub rho_se: f64,
    /// min over the t grid of R^{p,q,t}(m).
    pub r_min: f64,
    pub r_by_t: Vec<f64>,
    pub pass: bool,
}

/// Checks ρ^{p,q}(m) ≤ min_t R^{p,q,t}(m) + 3σ for m = 1..=m_max on shared samples.
#[allow(clippy::too_many_arguments)]
pub fn sup_bound_check(
    sys: &MapSystem,
    split: &SplittingField,
    p: f64,
    q: f64,
    m_max: usize,
    t_grid: &[f64],
    n_samples: usize,
    seed: u64,
) -> Result<Vec<SupBoundRow>, BoundsError> {
    let rows = sup_bound_rows(sys, split, p, q, m_max, t_grid, n_samples, seed)?;
    if let Some(bad) = rows.iter().find(|r| !r.pass) {
        return Err(BoundsError::InequalityViolated { m: bad.m, rho: bad.rho, r: bad.r_min, sigma: bad.rho_se });
    }
    Ok(rows)
}

/// Rows of the sup inequality with per-row verdicts, failing rows included.
#[allow(clippy::too_many_arguments)]
pub fn sup_bound_rows(
    sys: &MapSystem,
    split: &SplittingField,
    p: f64,
    q: f64,
    m_max: usize,
    t_grid: &[f64],
    n_samples: usize,
    seed: u64,
) -> Result<Vec<SupBoundRow>, BoundsError> {
    let pts = sample_points(sys, n_samples, seed);
    let mut sup_pts = grid_points(sys, 64);
    sup_pts.extend(pts.iter().cloned());
    let ex_mc = exponent_samples(sys, split, &pts, m_max)?;
    let ex_sup = exponent_samples(sys, split, &sup_pts, m_max)?;
    let mut rows = Vec::new();
    for m in 1..=m_max {
        let rho = rho_from_samples(&ex_mc, p, q, m);
        let r_by_t: Vec<f64> = t_grid.iter().map(|&t| r_from_samples(&ex_sup, p, q, t, m)).collect();
        let r_min = r_by_t.iter().cloned().fold(f64::INFINITY, f64::min);
        // rounding slack for the constant-integrand case
        let pass = rho.mean <= r_min + 3.0 * rho.std_err + 1e-12 * r_min.abs();
        rows.push(SupBoundRow { m, rho: rho.mean, rho_se: rho.std_err, r_min, r_by_t, pass });
    }
    Ok(rows)
}

/// P_m = (1/m) log Σ_{T^m x = x} exp(S_m φ(x)) for each supplied period.
pub fn pressure_periodic(
    sys: &MapSystem,
    sets: &[PeriodicPointSet],
    phi: &(dyn Fn(Point) -> f64 + Sync),
) -> Result<Vec<(usize, f64)>, BoundsError> {
    sets.iter()
        .map(|s| {
            if s.points.is_empty() {
                return Err(BoundsError::EmptyFixedSet(s.period));
            }
            let birk: Vec<f64> = par::map_slice(&s.points, |pp| {
                let mut y = pp.x;
                let mut acc = 0.0;
                for _ in 0..s.period {
                    acc += phi(y);
                    y = sys.forward(y);
                }
                acc
            });
            Ok((s.period, log_sum_exp(&birk) / s.period as f64))
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct QVariational {
    /// (m, (1/m)·log Z_m).
    pub per_m: Vec<(usize, f64)>,
    pub extrapolation: Extrapolation,
    /// Z_{m_max}^{1/m_max}.
    pub mth_root: f64,
    /// Floor level n when the weight had to be replaced by sqrt(g² + 1/n²).
    pub floor_level: Option<u32>,
}

impl QVariational {
    pub fn estimate(&self) -> f64 {
        self.extrapolation.estimate
    }
}

/// (λ, ν) at a point of period m. E^u and E^s are the eigenlines of DT^m
/// there, so ν = |μ_u| and λ = |μ_s|; μ_s is taken as det(DT^m)/μ_u with the
/// determinant multiplied up along the orbit, which avoids the cancellation
/// in the small root of the characteristic polynomial.
pub fn periodic_exponents(sys: &MapSystem, pp: &PeriodicPoint, m: usize) -> (f64, f64) {
    let nu = eig2_moduli(&pp.dtm())[0];
    let mut y = pp.x;
    let mut det = 1.0;
    for _ in 0..m {
        det *= sys.jacobian(y).determinant();
        y = sys.forward(y);
    }
    (det.abs() / nu, nu)
}

/// Floor level used when g vanishes at a periodic point.
pub const DEFAULT_FLOOR: u32 = 1000;

/// Pressure route to Q^{p,q}: Z_m = Σ_{Fix T^m} |g^(m)|·λ^{(p,q,m)}/|det DT^m|_{E^u}|.
pub fn q_variational(
    sys: &MapSystem,
    p: f64,
    q: f64,
    sets: &[PeriodicPointSet],
) -> Result<QVariational, BoundsError> {
    let vanishes = sets.iter().any(|s| s.points.iter().any(|pp| pp.gm == 0.0));
    let floored;
    let (sys, floor_level) = if vanishes {
        floored = sys.clone().with_weight(weight_floor(&sys.weight, DEFAULT_FLOOR));
        (&floored, Some(DEFAULT_FLOOR))
    } else {
        (sys, None)
    };
    let mut per_m = Vec::new();
    let mut log_z = Vec::new();
    for s in sets {
        if s.points.is_empty() {
            return Err(BoundsError::EmptyFixedSet(s.period));
        }
        let m = s.period;
        let terms: Vec<f64> = par::map_slice(&s.points, |pp| {
            let (l, n) = periodic_exponents(sys, pp, m);
            let gm = if vanishes { sys.weight_product(pp.x, m) } else { pp.gm };
            gm.abs().ln() + crate::map_model::lambda_pq(l, n, p, q).ln() - n.ln()
        });
        let lz = log_sum_exp(&terms);
        per_m.push((m, lz / m as f64));
        log_z.push((m, lz));
    }
    let rows: Vec<(usize, f64)> = log_z.iter().map(|(m, l)| (*m, l.exp())).collect();
    let extrapolation = if rows.iter().all(|r| r.1 > 0.0 && r.1.is_finite()) {
        rho_pq_estimate(&rows)?
    } else {
        // fit in log space directly when Z_m under/overflows
        let tail = &log_z[log_z.len().saturating_sub(4)..];
        let xs: Vec<f64> = tail.iter().map(|x| x.0 as f64).collect();
        let ys: Vec<f64> = tail.iter().map(|x| x.1).collect();
        let fit = linear_fit(&xs, &ys);
        Extrapolation { estimate: fit.slope.exp(), poor_fit: fit.residual > 0.1, fit, ms: tail.iter().map(|x| x.0).collect() }
    };
    let mth_root = per_m.last().map(|x| x.1.exp()).unwrap_or(f64::NAN);
    Ok(QVariational { per_m, extrapolation, mth_root, floor_level })
}

/// Radius of the disc where the determinant is controlled.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ValidityRadius {
    /// 1/Q^{p,q}.
    pub radius: f64,
    /// 1/Q^{0,0}.
    pub coarse: f64,
    pub floor_level: Option<u32>,
}

pub fn validity_radius(
    sys: &MapSystem,
    p: f64,
    q: f64,
    sets: &[PeriodicPointSet],
) -> Result<ValidityRadius, BoundsError> {
    let fine = q_variational(sys, p, q, sets)?;
    let coarse = q_variational(sys, 0.0, 0.0, sets)?;
    Ok(ValidityRadius {
        radius: 1.0 / fine.estimate(),
        coarse: 1.0 / coarse.estimate(),
        floor_level: fine.floor_level,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct KitaevConfig {
    pub m_max: usize,
    pub n_samples: usize,
    pub seed: u64,
    pub tol_cross: f64,
    /// Halve p on the variational route (negative control).
    pub negative_control: bool,
}

impl Default for KitaevConfig {
    fn default() -> Self {
        KitaevConfig { m_max: 10, n_samples: 2000, seed: 1, tol_cross: 0.05, negative_control: false }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct KitaevReport {
    pub rho_rows: Vec<(usize, McEstimate)>,
    pub rho: Extrapolation,
    pub variational: QVariational,
    pub log_gap: f64,
    pub pass: bool,
}

/// |log ρ^{p,q} − log Q^{p,q}| ≤ tol with both routes computed independently.
pub fn kitaev_crosscheck(
    sys: &MapSystem,
    split: &SplittingField,
    p: f64,
    q: f64,
    sets: &[PeriodicPointSet],
    cfg: &KitaevConfig,
) -> Result<KitaevReport, BoundsError> {
    let report = kitaev_report(sys, split, p, q, sets, cfg)?;
    if !report.pass {
        return Err(BoundsError::CrossCheckFailed {
            rho: report.rho.estimate,
            q: report.variational.estimate(),
            gap: report.log_gap,
            tol: cfg.tol_cross,
        });
    }
    Ok(report)
}

/// Both routes and their gap, without turning a failed comparison into an error.
pub fn kitaev_report(
    sys: &MapSystem,
    split: &SplittingField,
    p: f64,
    q: f64,
    sets: &[PeriodicPointSet],
    cfg: &KitaevConfig,
) -> Result<KitaevReport, BoundsError> {
    let pts = sample_points(sys, cfg.n_samples, cfg.seed);
    let ex = exponent_samples(sys, split, &pts, cfg.m_max)?;
    let rho_rows: Vec<(usize, McEstimate)> = (1..=cfg.m_max).map(|m| (m, rho_from_samples(&ex, p, q, m))).collect();
    let rho = rho_pq_estimate(&rho_rows.iter().map(|(m, e)| (*m, e.mean)).collect::<Vec<_>>())?;
    let p_var = if cfg.negative_control { 0.5 * p } else { p };
    let variational = q_variational(sys, p_var, q, sets)?;
    let log_gap = (rho.estimate.ln() - variational.estimate().ln()).abs();
    Ok(KitaevReport { rho_rows, rho, variational, log_gap, pass: log_gap <= cfg.tol_cross })
}

/// Closed form of Q^{p,q} for a linear hyperbolic automorphism with constant weight c:
/// |c|·max(|λ_s|^p, |λ_u|^q).
pub fn linear_q_closed_form(a: [[i64; 2]; 2], c: f64, p: f64, q: f64) -> f64 {
    let m = Mat2::new(a[0][0] as f64, a[0][1] as f64, a[1][0] as f64, a[1][1] as f64);
    let [e1, e2] = crate::periodic_orbits::eig2_moduli(&m);
    let (lu, ls) = if e1 >= e2 { (e1, e2) } else { (e2, e1) };
    c.abs() * ls.powf(p).max(lu.powf(q))
}

/// Contraction constant λ = max(|λ_s|, 1/|λ_u|) of a linear automorphism.
pub fn linear_contraction(a: [[i64; 2]; 2]) -> f64 {
    let m = Mat2::new(a[0][0] as f64, a[0][1] as f64, a[1][0] as f64, a[1][1] as f64);
    let [e1, e2] = crate::periodic_orbits::eig2_moduli(&m);
    let (lu, ls) = if e1 >= e2 { (e1, e2) } else { (e2, e1) };
    ls.max(1.0 / lu)
}
