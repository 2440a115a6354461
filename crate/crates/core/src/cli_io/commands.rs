use std::path::{Path, PathBuf};

use serde::Serialize;

use super::output::{write_json, Cell, Meta, Table};
use super::{Check, CliError, MapId, Outcome, RunConfig};
use crate::aniso::{run_aniso_suite, AnisoSuiteConfig, AnisoSuiteReport};
use crate::bounds::{
    kitaev_report, pressure_periodic, q_star_cover, rho_star_partition, sup_bound_rows, validity_radius, AxisPartition,
    CoverOptions, CoverResult, CoverSpec, KitaevConfig, KitaevReport, PartitionResult, SupBoundRow, ValidityRadius,
};
use crate::collocation::{
    build_transfer_matrix, eigen_resonances, match_resonances_to_zeros, stable_spectrum, EigenOptions, MatchReport,
    Resonance,
};
use crate::determinant::{
    det_coeffs_from_traces, det_zeros, orbit_data, trace_series_from_sets, zeta_direct, zeta_product, Zero,
};
use crate::map_model::{MapSystem, SplittingField};
use crate::numerics::C64;
use crate::periodic_orbits::{NewtonOptions, PeriodicPointSet};

fn name_of(p: &Path) -> PathBuf {
    p.file_name().map(PathBuf::from).unwrap_or_default()
}

fn prepare(cfg: &RunConfig) -> Result<Vec<String>, CliError> {
    let warnings = cfg.validate()?;
    std::fs::create_dir_all(&cfg.output_dir)?;
    Ok(warnings)
}

fn torus_system(cfg: &RunConfig, command: &str) -> Result<MapSystem, CliError> {
    let sys = cfg.system()?;
    if !sys.is_torus() {
        return Err(CliError::Config(format!("`{command}` needs a torus map (cat or perturbed-cat)")));
    }
    Ok(sys)
}

fn orbits(cfg: &RunConfig, sys: &MapSystem, n: usize) -> Result<Vec<PeriodicPointSet>, CliError> {
    orbit_data(sys, n, &NewtonOptions::default(), cfg.resonances.orbit_cache.as_deref()).map_err(CliError::numerical)
}

#[derive(Serialize)]
struct DeterminantArtifact<'a> {
    meta: &'a Meta,
    warnings: &'a [String],
    n_det: usize,
    traces: &'a [f64],
    coeffs: &'a [f64],
    validity: Option<ValidityRadius>,
    radius: f64,
    zeros: &'a [Zero],
    zeta_direct: Vec<f64>,
    zeta_product: Vec<f64>,
}

#[derive(Serialize)]
struct MatchArtifact<'a> {
    meta: &'a Meta,
    n_freq: [usize; 2],
    dims: [usize; 2],
    resonances_n: &'a [Resonance],
    resonances_2n: &'a [Resonance],
    stable: &'a [C64],
    report: &'a MatchReport,
}

/// Determinant from periodic orbits, collocation spectrum at N and 2N, and
/// their matching inside the configured disc.
pub fn cmd_resonances(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let mut warnings = prepare(cfg)?;
    let sys = torus_system(cfg, "resonances")?;
    let meta = Meta::new("resonances", cfg, &sys.id);
    let rs = &cfg.resonances;

    let sets = orbits(cfg, &sys, cfg.n_det)?;
    let ts = trace_series_from_sets(&sys, &sets).map_err(CliError::numerical)?;
    let mut dp = det_coeffs_from_traces(&ts);
    let validity = if cfg.n_det >= 4 {
        match validity_radius(&sys, cfg.p, cfg.q, &sets) {
            Ok(v) => Some(v),
            Err(e) => {
                warnings.push(format!("validity radius unavailable: {e}"));
                None
            }
        }
    } else {
        warnings.push("n_det < 4: validity radius not estimated".into());
        None
    };
    if let Some(v) = validity {
        dp.validity_radius = Some(v.radius);
        if rs.radius > v.radius {
            warnings.push(format!("matching radius {} exceeds the validity radius {:.6}", rs.radius, v.radius));
        }
    }
    let zeros = det_zeros(&dp, rs.radius).map_err(CliError::numerical)?;
    let zd = zeta_direct(&sets);
    let zp = zeta_product(&sets).map_err(CliError::numerical)?;

    let tm_n = build_transfer_matrix(&sys, cfg.n_freq, rs.grid_factor).map_err(CliError::numerical)?;
    let tm_2n = build_transfer_matrix(&sys, 2 * cfg.n_freq, rs.grid_factor).map_err(CliError::numerical)?;
    let opts = EigenOptions { seed: cfg.seed.wrapping_add(17), ..EigenOptions::default() };
    let res_n = eigen_resonances(&tm_n, &opts).map_err(CliError::numerical)?;
    let res_2n = eigen_resonances(&tm_2n, &opts).map_err(CliError::numerical)?;
    let stable = stable_spectrum(&res_n, &res_2n, rs.max_residual, rs.stability_tol);
    let report = match_resonances_to_zeros(&stable, &zeros, rs.radius, rs.match_tol);

    let dir = &cfg.output_dir;
    let mut t = Table::new(&meta.config_hash, meta.seed, &["m", "trace", "n_points"], ",");
    for (s, tr) in sets.iter().zip(&ts.traces) {
        t.row(&[Cell::I(s.period as i64), Cell::F(*tr), Cell::I(s.points.len() as i64)]);
    }
    let mut files = vec![t.write(&dir.join("traces.csv"))?];
    files.push(write_json(
        &dir.join("determinant.json"),
        &DeterminantArtifact {
            meta: &meta,
            warnings: &warnings,
            n_det: cfg.n_det,
            traces: &ts.traces,
            coeffs: &dp.coeffs,
            validity,
            radius: rs.radius,
            zeros: &zeros,
            zeta_direct: zd,
            zeta_product: zp,
        },
    )?);
    files.push(write_json(
        &dir.join("match.json"),
        &MatchArtifact {
            meta: &meta,
            n_freq: [cfg.n_freq, 2 * cfg.n_freq],
            dims: [tm_n.dim(), tm_2n.dim()],
            resonances_n: &res_n,
            resonances_2n: &res_2n,
            stable: &stable,
            report: &report,
        },
    )?);

    let unmatched = report.unmatched_zeros.len() + report.unmatched_eigenvalues.len();
    let checks = vec![Check::new(
        "resonance_match",
        report.bijective,
        format!(
            "{} pairs, {} unmatched zeros, {} unmatched eigenvalues, {} ill-conditioned zeros skipped",
            report.pairs.len(),
            report.unmatched_zeros.len(),
            report.unmatched_eigenvalues.len(),
            report.ill_conditioned_zeros.len()
        ),
    )];
    debug_assert_eq!(report.bijective, unmatched == 0);
    Ok(Outcome { command: "resonances".into(), files: files.iter().map(|p| name_of(p)).collect(), checks, warnings })
}

/// One row of the per-m bound table; absent entries were not computed.
#[derive(Clone, Debug, Serialize)]
pub struct BoundRow {
    pub m: usize,
    pub rho: f64,
    pub rho_se: f64,
    pub r_by_t: Option<Vec<f64>>,
    pub r_min: Option<f64>,
    pub q_star: Option<f64>,
    pub rho_star: Option<f64>,
    /// Topological pressure (φ ≡ 0) from period-m points.
    pub pressure: f64,
    /// (1/m)·log Z_m of the variational route.
    pub log_z_over_m: f64,
}

#[derive(Serialize)]
struct BoundsArtifact<'a> {
    meta: &'a Meta,
    warnings: &'a [String],
    p: f64,
    q: f64,
    t_grid: &'a [f64],
    per_m: &'a [BoundRow],
    kitaev: &'a KitaevReport,
    kitaev_tol: f64,
    negative_control: bool,
    sup_bound: &'a [SupBoundRow],
    q_star: &'a [CoverResult],
    rho_star: &'a [PartitionResult],
    checks: &'a [Check],
}

/// Growth-rate cross-check, sup inequality, and the per-m bound table.
pub fn cmd_bounds(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let warnings = prepare(cfg)?;
    let sys = torus_system(cfg, "bounds")?;
    let meta = Meta::new("bounds", cfg, &sys.id);
    let b = &cfg.bounds;
    let split = SplittingField::default();
    let num = CliError::numerical;

    let sets = orbits(cfg, &sys, cfg.m_max)?;
    let kcfg = KitaevConfig {
        m_max: cfg.m_max,
        n_samples: cfg.mc_samples,
        seed: cfg.seed,
        tol_cross: b.tol_cross,
        negative_control: b.negative_control,
    };
    let kitaev = kitaev_report(&sys, &split, cfg.p, cfg.q, &sets, &kcfg).map_err(num)?;
    let sup = sup_bound_rows(&sys, &split, cfg.p, cfg.q, b.sup_m_max, &b.t_grid, cfg.mc_samples, cfg.seed).map_err(num)?;
    let pressure = pressure_periodic(&sys, &sets, &|_| 0.0).map_err(num)?;

    let cover = CoverSpec::grid(b.cover_boxes, 0.0);
    let copts = CoverOptions { seed: cfg.seed.wrapping_add(7), ..CoverOptions::default() };
    let q_star = (1..=b.cover_m_max.min(cfg.m_max))
        .map(|m| q_star_cover(&sys, &split, cfg.p, cfg.q, &cover, m, &copts))
        .collect::<Result<Vec<_>, _>>()
        .map_err(num)?;
    let part = AxisPartition::new(b.partition_pieces, 0.01);
    let rho_star = (1..=b.partition_m_max.min(cfg.m_max))
        .map(|m| rho_star_partition(&sys, &split, cfg.p, cfg.q, &part, m, 256, 0, cfg.seed))
        .collect::<Result<Vec<_>, _>>()
        .map_err(num)?;

    let per_m: Vec<BoundRow> = kitaev
        .rho_rows
        .iter()
        .map(|(m, est)| {
            let s = sup.iter().find(|r| r.m == *m);
            BoundRow {
                m: *m,
                rho: est.mean,
                rho_se: est.std_err,
                r_by_t: s.map(|r| r.r_by_t.clone()),
                r_min: s.map(|r| r.r_min),
                q_star: q_star.iter().find(|c| c.m == *m).map(|c| c.greedy),
                rho_star: rho_star.iter().find(|c| c.m == *m).map(|c| c.value),
                pressure: pressure.iter().find(|x| x.0 == *m).map_or(f64::NAN, |x| x.1),
                log_z_over_m: kitaev.variational.per_m.iter().find(|x| x.0 == *m).map_or(f64::NAN, |x| x.1),
            }
        })
        .collect();

    let sup_fail: Vec<usize> = sup.iter().filter(|r| !r.pass).map(|r| r.m).collect();
    let checks = vec![
        Check::new(
            "kitaev_crosscheck",
            kitaev.pass,
            format!(
                "rho route {:.6}, variational route {:.6}, |log gap| {:.4} (tol {})",
                kitaev.rho.estimate,
                kitaev.variational.estimate(),
                kitaev.log_gap,
                b.tol_cross
            ),
        ),
        Check::new(
            "sup_bound_check",
            sup_fail.is_empty(),
            if sup_fail.is_empty() {
                format!("rho(m) <= min_t R(m) + 3 sigma for m = 1..{}", b.sup_m_max)
            } else {
                format!("violated at m = {sup_fail:?}")
            },
        ),
    ];

    let dir = &cfg.output_dir;
    let mut cols: Vec<String> = vec!["m".into(), "rho".into(), "rho_se".into(), "r_min".into()];
    cols.extend(b.t_grid.iter().map(|t| format!("r_t{t}")));
    cols.extend(["q_star", "rho_star", "pressure", "log_z_over_m"].map(String::from));
    let col_refs: Vec<&str> = cols.iter().map(|s| s.as_str()).collect();
    let mut t = Table::new(&meta.config_hash, meta.seed, &col_refs, ",");
    for r in &per_m {
        let mut cells = vec![Cell::I(r.m as i64), Cell::F(r.rho), Cell::F(r.rho_se), r.r_min.into()];
        match &r.r_by_t {
            Some(v) => cells.extend(v.iter().map(|x| Cell::F(*x))),
            None => cells.extend(b.t_grid.iter().map(|_| Cell::Missing)),
        }
        cells.extend([r.q_star.into(), r.rho_star.into(), Cell::F(r.pressure), Cell::F(r.log_z_over_m)]);
        t.row(&cells);
    }
    let mut files = vec![t.write(&dir.join("bounds.csv"))?];
    files.push(write_json(
        &dir.join("bounds.json"),
        &BoundsArtifact {
            meta: &meta,
            warnings: &warnings,
            p: cfg.p,
            q: cfg.q,
            t_grid: &b.t_grid,
            per_m: &per_m,
            kitaev: &kitaev,
            kitaev_tol: b.tol_cross,
            negative_control: b.negative_control,
            sup_bound: &sup,
            q_star: &q_star,
            rho_star: &rho_star,
            checks: &checks,
        },
    )?);
    Ok(Outcome { command: "bounds".into(), files: files.iter().map(|p| name_of(p)).collect(), checks, warnings })
}

#[derive(Serialize)]
struct AnisoArtifact<'a> {
    meta: &'a Meta,
    warnings: &'a [String],
    report: &'a AnisoSuiteReport,
}

/// The anisotropic block suite on the chart model.
pub fn cmd_aniso(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let warnings = prepare(cfg)?;
    if cfg.map.id != MapId::Chart {
        return Err(CliError::Config("`aniso` runs on the chart model (map.id = \"chart\")".into()));
    }
    let a = &cfg.aniso;
    let suite = AnisoSuiteConfig {
        eps: cfg.map.eps,
        weight: cfg.chart_weight()?,
        n_max: cfg.n_max_aniso,
        matrix_n_max: a.matrix_n_max,
        per_band: a.per_band,
        young_trials: a.young_trials,
        trace_n0: a.trace_n0,
        iterates: a.iterates.clone(),
        z_samples: a.z_samples,
        z_radius: a.z_radius,
        p: cfg.p,
        q: cfg.q,
        seed: cfg.seed,
    };
    let report = run_aniso_suite(&suite).map_err(CliError::numerical)?;
    let meta = Meta::new("aniso", cfg, "chart");

    let dir = &cfg.output_dir;
    let mut t = Table::new(&meta.config_hash, meta.seed, &["n", "sigma", "block_trace", "partial_sum"], ",");
    for (row, s) in report.trace.rows.iter().zip(&report.trace.partial_sums) {
        let sigma = if row.label.sigma == crate::map_model::Sign::Plus { "+" } else { "-" };
        t.row(&[Cell::I(row.label.n as i64), Cell::S(sigma.into()), Cell::F(row.value), Cell::F(*s)]);
    }
    let mut files = vec![t.write(&dir.join("aniso_traces.csv"))?];
    files.push(write_json(&dir.join("aniso.json"), &AnisoArtifact { meta: &meta, warnings: &warnings, report: &report })?);

    let checks = vec![
        Check::new("partition_of_unity", report.partition_pass, format!("defect {:e}", report.partition_defect)),
        Check::new(
            "young_inequality",
            report.young_pass,
            format!("{}/{} trials, worst ratio {:.4}", report.young.passed, report.young.trials, report.young.worst_ratio),
        ),
        Check::new(
            "triangularity",
            report.triangularity.pass,
            format!("{} diagonal hits", report.triangularity.diagonal_hits.len()),
        ),
        Check::new(
            "flat_trace",
            report.trace.pass,
            format!("gap {:e}, telescoping {:e}", report.trace.gap, report.trace.telescoping_gap),
        ),
        Check::new("kneading_identity", report.kneading.pass, format!("max rel err {:e}", report.kneading.max_rel_err)),
    ];
    debug_assert_eq!(checks.iter().all(|c| c.pass), report.pass);
    Ok(Outcome { command: "aniso".into(), files: files.iter().map(|p| name_of(p)).collect(), checks, warnings })
}
