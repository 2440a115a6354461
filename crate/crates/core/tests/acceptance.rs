//! End-to-end acceptance run. Each criterion is timed, printed as a PASS/FAIL
//! line and collected; the test fails at the end if any line failed. The
//! lines are also written to `$CARGO_TARGET_TMPDIR/acceptance.txt`.
//!
//! Run with `cargo test --test acceptance -- --nocapture` to see the lines.

use std::path::{Path, PathBuf};
use std::time::Instant;

use resonance_lab::aniso::TRACE_GRID;
use resonance_lab::bounds::{kitaev_report, pressure_periodic, q_variational, sup_bound_check, KitaevConfig};
use resonance_lab::cli_io::{cmd_aniso, cmd_bounds, cmd_report, cmd_resonances, MapId, MapSpec, RunConfig, PLOT_FILES};
use resonance_lab::determinant::{
    det_coeffs_from_traces, det_zeros, orbit_data, trace_series_from_sets, zeta_direct, zeta_product,
};
use resonance_lab::map_model::{builtin_cat_map, builtin_perturbed_cat, MapSystem, SplittingField};
use resonance_lab::periodic_orbits::NewtonOptions;
use serde_json::Value;

struct Ledger {
    lines: Vec<String>,
    failed: usize,
}

impl Ledger {
    fn record(&mut self, id: &str, pass: bool, secs: f64, budget: f64, detail: String) {
        let in_time = secs < budget;
        let ok = pass && in_time;
        let line = format!(
            "{} [{id}] {detail} | {secs:.2} s{}",
            if ok { "PASS" } else { "FAIL" },
            match (budget.is_finite(), in_time) {
                (false, _) => String::new(),
                (true, true) => format!(" (budget {budget} s)"),
                (true, false) => format!(" (budget {budget} s, over budget)"),
            }
        );
        println!("{line}");
        self.lines.push(line);
        if !ok {
            self.failed += 1;
        }
    }
}

fn scratch(name: &str) -> PathBuf {
    let d = Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance").join(name);
    let _ = std::fs::remove_dir_all(&d);
    d
}

fn config(id: MapId, eps: f64, out: &Path) -> RunConfig {
    let mut c = RunConfig::from_toml("p = 1.0\nq = -1.0\nseed = 1\n[map]\nid = \"cat\"\n").unwrap();
    c.map = MapSpec { id, eps, seed: 0, smoothness: None };
    c.output_dir = out.to_path_buf();
    c
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn cplx(v: &Value) -> (f64, f64) {
    (v[0].as_f64().unwrap(), v[1].as_f64().unwrap())
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn orbits(sys: &MapSystem, n: usize) -> Vec<resonance_lab::periodic_orbits::PeriodicPointSet> {
    orbit_data(sys, n, &NewtonOptions::default(), None).unwrap()
}

fn same_bytes(a: &Path, b: &Path) -> Result<usize, String> {
    let mut names: Vec<_> = std::fs::read_dir(a).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    for n in &names {
        let x = std::fs::read(a.join(n)).unwrap();
        let y = std::fs::read(b.join(n)).map_err(|e| format!("{n:?}: {e}"))?;
        if x != y {
            return Err(format!("{n:?} differs"));
        }
    }
    Ok(names.len())
}

fn cat_determinant(l: &mut Ledger) {
    let t = Instant::now();
    let sys = builtin_cat_map();
    let sets = orbits(&sys, 12);
    let ts = trace_series_from_sets(&sys, &sets).unwrap();
    let dp = det_coeffs_from_traces(&ts);
    let zeros = det_zeros(&dp, 1e6).unwrap();
    let secs = t.elapsed().as_secs_f64();
    let tr_err = ts.traces.iter().map(|x| (x - 1.0).abs()).fold(0.0, f64::max);
    let c_err = dp
        .coeffs
        .iter()
        .enumerate()
        .map(|(k, c)| (c - [1.0, -1.0].get(k).copied().unwrap_or(0.0)).abs())
        .fold(0.0, f64::max);
    let unique = zeros.len() == 1 && zeros[0].multiplicity == 1 && (zeros[0].z - 1.0).norm() <= 1e-10;
    l.record(
        "1 cat determinant",
        tr_err <= 1e-10 && c_err <= 1e-10 && unique,
        secs,
        5.0,
        format!("max |tr_m - 1| = {tr_err:.1e}, max coeff err = {c_err:.1e}, zeros = {}", zeros.len()),
    );
}

fn kitaev(l: &mut Ledger) {
    let t = Instant::now();
    let sys = builtin_cat_map();
    let sets = orbits(&sys, 10);
    let r = kitaev_report(&sys, &SplittingField::default(), 1.0, -1.0, &sets, &KitaevConfig::default()).unwrap();
    let secs = t.elapsed().as_secs_f64();
    let target = (3.0 - 5f64.sqrt()) / 2.0;
    let (a, b) = (r.rho.estimate, r.variational.estimate());
    l.record(
        "2 growth-rate routes",
        rel(a, target) <= 0.02 && rel(b, target) <= 0.02 && r.log_gap <= 0.05,
        secs,
        30.0,
        format!("rho route {a:.6}, variational {b:.6}, target {target:.6}, log gap {:.2e}", r.log_gap),
    );
}

fn pressure(l: &mut Ledger) {
    let t = Instant::now();
    let sys = builtin_cat_map();
    let sets = orbits(&sys, 10);
    let q = q_variational(&sys, 0.0, 0.0, &sets).unwrap();
    let p = pressure_periodic(&sys, &sets, &|_| 0.0).unwrap();
    let secs = t.elapsed().as_secs_f64();
    let q10 = q.per_m.iter().find(|x| x.0 == 10).unwrap().1.exp();
    let p10 = p.iter().find(|x| x.0 == 10).unwrap().1;
    let target = ((3.0 + 5f64.sqrt()) / 2.0).ln();
    l.record(
        "3 pressure route",
        rel(q10, 1.0) <= 0.02 && rel(q.estimate(), 1.0) <= 0.02 && rel(p10, target) <= 0.02,
        secs,
        20.0,
        format!("Z_10^(1/10) = {q10:.6}, fitted Q = {:.6}, P_10 = {p10:.6} vs {target:.6}", q.estimate()),
    );
}

fn resonances(l: &mut Ledger) -> RunConfig {
    let mut cfg = config(MapId::PerturbedCat, 0.01, &scratch("resonances"));
    cfg.n_det = 12;
    cfg.n_freq = 32;
    let t = Instant::now();
    let out = cmd_resonances(&cfg).unwrap();
    let secs = t.elapsed().as_secs_f64();
    let m = json(&cfg.output_dir.join("match.json"));
    let d = json(&cfg.output_dir.join("determinant.json"));
    let rep = &m["report"];
    let in_disc: Vec<&Value> = d["zeros"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|z| {
            let (re, im) = cplx(&z["z"]);
            re.hypot(im) <= 1.5 && z["backward_error"].as_f64().unwrap() <= 1e-6
        })
        .collect();
    let pairs = rep["pairs"].as_array().unwrap();
    let max_gap = pairs.iter().map(|p| p["gap"].as_f64().unwrap()).fold(0.0, f64::max);
    let unit = pairs.iter().any(|p| {
        let (zr, zi) = cplx(&p["zero"]);
        let (mr, mi) = cplx(&p["eigenvalue"]);
        (zr - 1.0).hypot(zi) <= 1e-8 && (mr - 1.0).hypot(mi) <= 1e-8
    });
    let bij = rep["bijective"].as_bool().unwrap() && pairs.len() == in_disc.len();
    l.record(
        "4 determinant vs collocation",
        bij && max_gap <= 1e-4 && unit && out.exit_code() == 0,
        secs,
        60.0,
        format!(
            "{} zeros in disc, {} pairs, max gap {max_gap:.1e}, (1,1) pair: {unit}, N_det = {}, N_freq = 32/64",
            in_disc.len(),
            pairs.len(),
            cfg.n_det
        ),
    );
    cfg
}

fn zeta(l: &mut Ledger) {
    let t = Instant::now();
    let mut worst: f64 = 0.0;
    for sys in [builtin_cat_map(), builtin_perturbed_cat(0.01, 0).unwrap()] {
        let sets = orbits(&sys, 8);
        let a = zeta_direct(&sets);
        let b = zeta_product(&sets).unwrap();
        worst = worst.max(a.iter().zip(&b).take(8).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max));
    }
    let secs = t.elapsed().as_secs_f64();
    l.record("5 zeta product", worst <= 1e-8, secs, 20.0, format!("max coefficient gap {worst:.1e} over 8 coefficients, both maps"));
}

fn sup_bound(l: &mut Ledger) {
    let t = Instant::now();
    let split = SplittingField::default();
    let mut detail = Vec::new();
    let mut ok = true;
    for sys in [builtin_cat_map(), builtin_perturbed_cat(0.01, 0).unwrap()] {
        match sup_bound_check(&sys, &split, 1.0, -1.0, 6, &[0.5, 1.0, 2.0, 4.0], 2000, 1) {
            Ok(rows) => {
                let margin = rows.iter().map(|r| r.r_min + 3.0 * r.rho_se - r.rho).fold(f64::INFINITY, f64::min);
                detail.push(format!("{}: min margin {margin:.2e}", sys.id));
            }
            Err(e) => {
                ok = false;
                detail.push(format!("{}: {e}", sys.id));
            }
        }
    }
    let secs = t.elapsed().as_secs_f64();
    l.record("6 sup inequality m = 1..6", ok, secs, 20.0, detail.join("; "));
}

fn aniso(l: &mut Ledger) -> RunConfig {
    let mut cfg = config(MapId::Chart, 0.0, &scratch("aniso"));
    cfg.n_max_aniso = 8;
    cfg.aniso.matrix_n_max = 6;
    let t = Instant::now();
    let out = cmd_aniso(&cfg).unwrap();
    let secs = t.elapsed().as_secs_f64();
    let r = &json(&cfg.output_dir.join("aniso.json"))["report"];
    let defect = r["partition_defect"].as_f64().unwrap();
    let young = (r["young"]["passed"].as_u64().unwrap(), r["young"]["trials"].as_u64().unwrap());
    let hooks_ok = r["iterate_h"].as_array().unwrap().iter().all(|e| {
        e[1]["h_plus"].as_i64().unwrap() < 0 && e[1]["h_minus"].as_i64().unwrap() > 0
    });
    let diag_empty = r["triangularity"]["diagonal_hits"].as_array().unwrap().is_empty();
    let target = r["trace"]["target"].as_f64().unwrap();
    let gap = r["trace"]["gap"].as_f64().unwrap();
    let kn = r["kneading"]["max_rel_err"].as_f64().unwrap();
    let kn_rows = r["kneading"]["rows"].as_array().unwrap().len();
    let ok = defect <= 1e-12
        && young == (100, 100)
        && hooks_ok
        && diag_empty
        && (target - 2.0).abs() <= 1e-12
        && gap <= 1e-3
        && kn <= 1e-8
        && kn_rows == 8
        && out.exit_code() == 0;
    l.record(
        "7 aniso suite",
        ok,
        secs,
        90.0,
        format!(
            "partition defect {defect:.1e}, Young {}/{}, diagonal empty {diag_empty}, trace gap {gap:.1e} to {target}, \
             kneading {kn:.1e} on {kn_rows} z, trace grid {}²",
            young.0, young.1, TRACE_GRID.n
        ),
    );
    cfg
}

fn determinism(l: &mut Ledger, res: &RunConfig, ani: &RunConfig) {
    let t = Instant::now();
    let mut detail = Vec::new();
    let mut ok = true;
    let mut check = |name: &str, a: &Path, b: &Path| match same_bytes(a, b) {
        Ok(n) => detail.push(format!("{name}: {n} files identical")),
        Err(e) => {
            ok = false;
            detail.push(format!("{name}: {e}"));
        }
    };

    let mut r2 = res.clone();
    r2.output_dir = scratch("resonances-rerun");
    cmd_resonances(&r2).unwrap();
    check("resonances", &res.output_dir, &r2.output_dir);

    let mut a2 = ani.clone();
    a2.output_dir = scratch("aniso-rerun");
    cmd_aniso(&a2).unwrap();
    check("aniso", &ani.output_dir, &a2.output_dir);

    let b1 = config(MapId::Cat, 0.0, &scratch("bounds"));
    let mut b2 = b1.clone();
    b2.output_dir = scratch("bounds-rerun");
    cmd_bounds(&b1).unwrap();
    cmd_bounds(&b2).unwrap();
    check("bounds", &b1.output_dir, &b2.output_dir);

    // report over a directory holding all three commands' artifacts, twice
    let merged = [scratch("merged-a"), scratch("merged-b")];
    for m in &merged {
        std::fs::create_dir_all(m).unwrap();
        for src in [&res.output_dir, &ani.output_dir, &b1.output_dir] {
            for e in std::fs::read_dir(src).unwrap() {
                let e = e.unwrap();
                std::fs::copy(e.path(), m.join(e.file_name())).unwrap();
            }
        }
        cmd_report(m).unwrap();
    }
    check("report", &merged[0], &merged[1]);
    let plots_ok = PLOT_FILES.iter().all(|p| merged[0].join(p).exists()) && merged[0].join("summary.json").exists();
    ok &= plots_ok;
    let secs = t.elapsed().as_secs_f64();
    l.record("8 determinism", ok, secs, f64::INFINITY, detail.join("; "));
}

#[test]
fn acceptance() {
    let mut l = Ledger { lines: Vec::new(), failed: 0 };
    cat_determinant(&mut l);
    kitaev(&mut l);
    pressure(&mut l);
    let res = resonances(&mut l);
    zeta(&mut l);
    sup_bound(&mut l);
    let ani = aniso(&mut l);
    determinism(&mut l, &res, &ani);
    let summary = format!("{} of {} criteria passed", l.lines.len() - l.failed, l.lines.len());
    println!("{summary}");
    l.lines.push(summary);
    let _ = std::fs::write(Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance.txt"), l.lines.join("\n") + "\n");
    assert_eq!(l.failed, 0, "{}", l.lines.join("\n"));
}
