//! The combined check run by the CLI and the acceptance test.

use std::f64::consts::TAU;

use rand::Rng;
use serde::Serialize;

use super::blocks::{lattice_matrix, Lattice, LinkSplit};
use super::grid::{band_project, BoxGrid, GridFn};
use super::hook::{h_exponents, triangularity_product_check, HExponents, LinkMask, TriangularityReport};
use super::kneading::{approx_number_proxy, kneading_check, ApproxReport, KneadingReport};
use super::norm::{young_check, LineSamples};
use super::trace::{fixed_point_sum, partial_trace_sums, TraceData, TraceRow, TRACE_GRID};
use super::{partition_defect, AnisoError, DyadicIndex};
use crate::map_model::{builtin_chart_model, Bump, Polarization, Weight, CHART_G};
use crate::numerics::{rng, C64};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AnisoSuiteConfig {
    pub eps: f64,
    /// Chart weight G (the builtin bump by default).
    pub weight: Bump,
    pub n_max: u32,
    pub matrix_n_max: u32,
    pub per_band: usize,
    pub young_trials: usize,
    pub trace_n0: u32,
    pub iterates: Vec<usize>,
    pub z_samples: usize,
    pub z_radius: f64,
    pub p: f64,
    pub q: f64,
    pub seed: u64,
}

impl Default for AnisoSuiteConfig {
    fn default() -> Self {
        AnisoSuiteConfig {
            eps: 0.0,
            weight: CHART_G,
            n_max: 8,
            matrix_n_max: 6,
            per_band: 3,
            young_trials: 100,
            trace_n0: 8,
            iterates: vec![10, 12, 10],
            z_samples: 8,
            z_radius: 0.1,
            p: 1.0,
            q: -1.0,
            seed: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct YoungSummary {
    pub trials: usize,
    pub passed: usize,
    /// Largest lhs/(rhs + slack) over the trials.
    pub worst_ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TraceSummary {
    pub rows: Vec<TraceRow>,
    pub partial_sums: Vec<f64>,
    pub chi_trace: f64,
    pub telescoping_gap: f64,
    pub target: f64,
    pub gap: f64,
    pub pass: bool,
}

/// Edge-strip mass of band projections of a centred Gaussian, per band.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WraparoundSummary {
    pub grid: BoxGrid,
    pub bands: Vec<(DyadicIndex, f64)>,
    pub max: f64,
    /// Whether every band stays under 1e−8 (reported, not part of `pass`).
    pub within_tolerance: bool,
}

pub fn wraparound_survey(theta: &Polarization, grid: BoxGrid, n_max: u32) -> Result<WraparoundSummary, AnisoError> {
    let u = GridFn::sample_real(grid, |x| (-(x[0] * x[0] + x[1] * x[1]) / 0.25).exp());
    let bands = DyadicIndex::all(n_max)
        .into_iter()
        .map(|l| Ok((l, band_project(&u, theta, l)?.wraparound_mass())))
        .collect::<Result<Vec<_>, AnisoError>>()?;
    let max = bands.iter().map(|b| b.1).fold(0.0, f64::max);
    Ok(WraparoundSummary { grid, bands, max, within_tolerance: max <= 1e-8 })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AnisoSuiteReport {
    pub config: AnisoSuiteConfig,
    pub h_base: HExponents,
    pub partition_defect: f64,
    pub partition_pass: bool,
    pub wraparound: WraparoundSummary,
    pub young: YoungSummary,
    pub young_pass: bool,
    pub iterate_h: Vec<(usize, HExponents)>,
    pub triangularity: TriangularityReport,
    pub trace: TraceSummary,
    pub lattice_size: usize,
    pub split_defect: f64,
    pub kneading: KneadingReport,
    pub approx: ApproxReport,
    pub pass: bool,
}

fn gaussian(c: [f64; 2], w: [f64; 2], amp: f64) -> impl Fn([f64; 2]) -> f64 {
    move |x| amp * (-((x[0] - c[0]) / w[0]).powi(2) - ((x[1] - c[1]) / w[1]).powi(2)).exp()
}

/// Random sums of anisotropic Gaussians for A (signed, narrow) and u.
fn young_trial(grid: BoxGrid, seed: u64) -> (GridFn, GridFn) {
    let mut r = rng(seed);
    let mut draw = |n: usize, cmax: f64, wmin: f64, wmax: f64, signed: bool| {
        let terms: Vec<([f64; 2], [f64; 2], f64)> = (0..n)
            .map(|_| {
                let c = [r.gen_range(-cmax..cmax), r.gen_range(-cmax..cmax)];
                let w = [r.gen_range(wmin..wmax), r.gen_range(wmin..wmax)];
                let a = if signed { r.gen_range(-1.0..1.0) } else { r.gen_range(0.2..1.0) };
                (c, w, a)
            })
            .collect();
        GridFn::sample_real(grid, move |x| terms.iter().map(|(c, w, a)| gaussian(*c, *w, *a)(x)).sum())
    };
    let na = 1 + (seed % 3) as usize;
    let nu = 1 + ((seed / 3) % 3) as usize;
    let a = draw(na, 0.5, 0.05, 0.3, true);
    let u = draw(nu, 0.8, 0.1, 0.4, false);
    (a, u)
}

pub fn young_trials(theta: &Polarization, trials: usize, seed: u64) -> YoungSummary {
    let grid = BoxGrid::new(4.0, 128);
    let lines = LineSamples::default();
    let mut passed = 0;
    let mut worst: f64 = 0.0;
    for t in 0..trials {
        let (a, u) = young_trial(grid, seed.wrapping_mul(1000).wrapping_add(t as u64));
        let rep = young_check(&a, &u, theta, &lines);
        if rep.pass {
            passed += 1;
        }
        let denom = rep.rhs + rep.slack;
        if denom > 0.0 {
            worst = worst.max(rep.lhs / denom);
        }
    }
    YoungSummary { trials, passed, worst_ratio: worst }
}

pub fn run_aniso_suite(cfg: &AnisoSuiteConfig) -> Result<AnisoSuiteReport, AnisoError> {
    let (sys, theta, theta_out) = builtin_chart_model(cfg.eps)?;
    let sys = sys.with_weight(Weight::Bump(cfg.weight));
    let h_base = h_exponents(&sys, &theta, &theta_out, 720)?;

    let defect = partition_defect(&theta, cfg.n_max, 512);

    let wraparound = wraparound_survey(&theta, BoxGrid::new(4.0, 256), 5)?;
    let young = young_trials(&theta, cfg.young_trials, cfg.seed);

    let mut iterate_h = Vec::new();
    let mut masks = Vec::new();
    for &m in &cfg.iterates {
        let it = sys.chart_iterate(m)?;
        let h = h_exponents(&it, &theta, &theta_out, 720)?;
        masks.push(LinkMask::linked(cfg.n_max, &h));
        iterate_h.push((m, h));
    }
    let mut triangularity = triangularity_product_check(&masks);
    if iterate_h.iter().any(|(_, h)| !h.is_triangular()) {
        triangularity.pass = false;
    }

    let data = TraceData::new(&sys, TRACE_GRID)?;
    let rows = data.block_traces(&theta, cfg.trace_n0)?;
    let partial_sums = partial_trace_sums(&rows, cfg.trace_n0);
    let chi_trace = data.chi_trace(cfg.trace_n0)?;
    let last = *partial_sums.last().unwrap_or(&0.0);
    let target = fixed_point_sum(&sys)?;
    let telescoping_gap = (last - chi_trace).abs();
    let gap = (last - target).abs();
    let trace = TraceSummary {
        rows,
        partial_sums,
        chi_trace,
        telescoping_gap,
        target,
        gap,
        pass: gap <= 1e-3 && telescoping_gap <= 1e-8,
    };

    let lattice = Lattice::sample(&theta, cfg.matrix_n_max, cfg.per_band, 4.0, cfg.seed);
    let m = lattice_matrix(&sys, &theta, &theta_out, &lattice)?;
    let split = LinkSplit::new(&m, &lattice, &LinkMask::linked(cfg.matrix_n_max, &h_base));
    let split_defect = split.defect(&m);
    let zs: Vec<C64> = (0..cfg.z_samples)
        .map(|k| C64::from_polar(cfg.z_radius, TAU * (k as f64 + 0.25) / cfg.z_samples as f64))
        .collect();
    let kneading = kneading_check(&split.mb, &split.mc, &zs)?;
    let labels: Vec<_> = lattice.sites.iter().map(|s| s.label).collect();
    let approx = approx_number_proxy(&split.mc, &labels, cfg.p, cfg.q, (1, lattice.len()));

    let partition_pass = defect <= 1e-12;
    let young_pass = young.passed == young.trials;
    let pass = partition_pass && young_pass && triangularity.pass && trace.pass && kneading.pass;
    Ok(AnisoSuiteReport {
        config: cfg.clone(),
        h_base,
        partition_defect: defect,
        partition_pass,
        wraparound,
        young,
        young_pass,
        iterate_h,
        triangularity,
        trace,
        lattice_size: lattice.len(),
        split_defect,
        kneading,
        approx,
        pass,
    })
}
