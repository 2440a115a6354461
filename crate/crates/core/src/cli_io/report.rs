//! Merges the artifacts of earlier runs into `summary.json` plus plot data.

use std::path::Path;

use serde_json::{json, Value};

use super::output::{write_json, Cell, Table};
use super::{Check, CliError, Outcome};

/// JSON artifacts the report looks for.
pub const ARTIFACTS: [&str; 4] = ["determinant.json", "match.json", "bounds.json", "aniso.json"];

/// Plot-data files written by the report (always all four; gaps are marked).
pub const PLOT_FILES: [&str; 4] =
    ["bounds_curves.dat", "spectrum_scatter.dat", "aniso_partial_sums.dat", "aniso_singular_values.dat"];

fn read(dir: &Path, name: &str) -> Result<Option<Value>, CliError> {
    let p = dir.join(name);
    if !p.exists() {
        return Ok(None);
    }
    let text = std::fs::read_to_string(&p)?;
    serde_json::from_str(&text).map(Some).map_err(|e| CliError::Io(format!("{name}: {e}")))
}

fn f(v: &Value) -> Option<f64> {
    v.as_f64()
}

fn c(v: &Value) -> Option<(f64, f64)> {
    Some((v.get(0)?.as_f64()?, v.get(1)?.as_f64()?))
}

fn log(x: Option<f64>) -> Cell {
    match x {
        Some(v) if v > 0.0 => Cell::F(v.ln()),
        _ => Cell::Missing,
    }
}

/// Reads whatever artifacts exist in `dir`; fails only when none do.
pub fn cmd_report(dir: &Path) -> Result<Outcome, CliError> {
    let docs: Vec<(&str, Option<Value>)> =
        ARTIFACTS.iter().map(|n| read(dir, n).map(|v| (*n, v))).collect::<Result<_, _>>()?;
    if docs.iter().all(|d| d.1.is_none()) {
        return Err(CliError::MissingArtifacts {
            dir: dir.display().to_string(),
            expected: ARTIFACTS.iter().map(|s| s.to_string()).collect(),
        });
    }
    let get = |n: &str| docs.iter().find(|d| d.0 == n).and_then(|d| d.1.as_ref());
    let gaps: Vec<&str> = docs.iter().filter(|d| d.1.is_none()).map(|d| d.0).collect();

    let mut hashes: Vec<String> = Vec::new();
    let mut seed = None;
    let mut artifacts = serde_json::Map::new();
    for (name, doc) in &docs {
        let entry = match doc {
            Some(v) => {
                let h = v["meta"]["config_hash"].as_str().unwrap_or("").to_string();
                if !hashes.contains(&h) {
                    hashes.push(h.clone());
                }
                seed = seed.or(v["meta"]["seed"].as_u64());
                json!({ "present": true, "config_hash": h, "seed": v["meta"]["seed"], "command": v["meta"]["command"] })
            }
            None => json!({ "present": false }),
        };
        artifacts.insert(name.to_string(), entry);
    }
    let hash = if hashes.len() == 1 { hashes[0].clone() } else { "mixed".to_string() };
    let seed = seed.unwrap_or(0);

    let resonances = get("match.json").map(|m| {
        let r = &m["report"];
        json!({
            "bijective": r["bijective"],
            "pairs": r["pairs"].as_array().map_or(0, |a| a.len()),
            "unmatched_zeros": r["unmatched_zeros"],
            "unmatched_eigenvalues": r["unmatched_eigenvalues"],
            "max_gap": r["pairs"].as_array().map(|a| a.iter().filter_map(|p| p["gap"].as_f64()).fold(0.0, f64::max)),
            "validity": get("determinant.json").map(|d| d["validity"].clone()),
        })
    });
    let bounds = get("bounds.json").map(|b| {
        json!({
            "rho_estimate": b["kitaev"]["rho"]["estimate"],
            "variational_estimate": b["kitaev"]["variational"]["extrapolation"]["estimate"],
            "log_gap": b["kitaev"]["log_gap"],
            "checks": b["checks"],
        })
    });
    let aniso = get("aniso.json").map(|a| {
        let r = &a["report"];
        json!({
            "pass": r["pass"],
            "partition_pass": r["partition_pass"],
            "young_pass": r["young_pass"],
            "triangularity": r["triangularity"]["pass"],
            "trace_gap": r["trace"]["gap"],
            "kneading_max_rel_err": r["kneading"]["max_rel_err"],
            "approx_rate": r["approx"]["rate"],
            "wraparound_max": r["wraparound"]["max"],
        })
    });

    let mut files = Vec::new();

    let mut t = Table::new(&hash, seed, &["m", "log_rho", "log_r_min", "log_q_star", "log_rho_star", "pressure"], " ");
    match get("bounds.json").and_then(|b| b["per_m"].as_array()) {
        Some(rows) => {
            for r in rows {
                t.row(&[
                    Cell::I(r["m"].as_i64().unwrap_or(0)),
                    log(f(&r["rho"])),
                    log(f(&r["r_min"])),
                    log(f(&r["q_star"])),
                    log(f(&r["rho_star"])),
                    f(&r["pressure"]).into(),
                ]);
            }
        }
        None => t.comment("gap: bounds.json missing"),
    }
    files.push(t.write(&dir.join(PLOT_FILES[0]))?);

    let mut t = Table::new(&hash, seed, &["kind", "re", "im"], " ");
    if let Some(d) = get("determinant.json") {
        for z in d["zeros"].as_array().into_iter().flatten() {
            if let Some((re, im)) = c(&z["z"]) {
                let n = re * re + im * im;
                t.row(&[Cell::S("zero".into()), Cell::F(re), Cell::F(im)]);
                t.row(&[Cell::S("zero_inverse".into()), Cell::F(re / n), Cell::F(-im / n)]);
            }
        }
    } else {
        t.comment("gap: determinant.json missing");
    }
    if let Some(m) = get("match.json") {
        for v in m["stable"].as_array().into_iter().flatten() {
            if let Some((re, im)) = c(v) {
                t.row(&[Cell::S("stable_eigenvalue".into()), Cell::F(re), Cell::F(im)]);
            }
        }
        for r in m["resonances_n"].as_array().into_iter().flatten() {
            if let Some((re, im)) = c(&r["mu"]) {
                t.row(&[Cell::S("eigenvalue_n".into()), Cell::F(re), Cell::F(im)]);
            }
        }
    } else {
        t.comment("gap: match.json missing");
    }
    files.push(t.write(&dir.join(PLOT_FILES[1]))?);

    let aniso_doc = get("aniso.json");
    let mut t = Table::new(&hash, seed, &["k", "partial_sum", "target"], " ");
    match aniso_doc {
        Some(a) => {
            let target = f(&a["report"]["trace"]["target"]);
            for (k, s) in a["report"]["trace"]["partial_sums"].as_array().into_iter().flatten().enumerate() {
                t.row(&[Cell::I(k as i64), f(s).into(), target.into()]);
            }
        }
        None => t.comment("gap: aniso.json missing"),
    }
    files.push(t.write(&dir.join(PLOT_FILES[2]))?);

    let mut t = Table::new(&hash, seed, &["k", "singular_value"], " ");
    match aniso_doc {
        Some(a) => {
            for (k, s) in a["report"]["approx"]["singular"].as_array().into_iter().flatten().enumerate() {
                t.row(&[Cell::I(k as i64 + 1), f(s).into()]);
            }
        }
        None => t.comment("gap: aniso.json missing"),
    }
    files.push(t.write(&dir.join(PLOT_FILES[3]))?);

    let summary = json!({
        "meta": { "command": "report", "config_hash": hash, "seed": seed, "version": env!("CARGO_PKG_VERSION") },
        "artifacts": artifacts,
        "gaps": gaps,
        "mixed_configs": hashes.len() > 1,
        "resonances": resonances,
        "bounds": bounds,
        "aniso": aniso,
        "plots": PLOT_FILES,
    });
    files.push(write_json(&dir.join("summary.json"), &summary)?);

    let mut warnings: Vec<String> = gaps.iter().map(|g| format!("gap: {g} missing")).collect();
    if hashes.len() > 1 {
        warnings.push("artifacts come from different configurations".into());
    }
    let checks = vec![Check::new("artifacts_present", true, format!("{} of {} present", ARTIFACTS.len() - gaps.len(), ARTIFACTS.len()))];
    Ok(Outcome {
        command: "report".into(),
        files: files.iter().filter_map(|p| p.file_name().map(Into::into)).collect(),
        checks,
        warnings,
    })
}
