//! `reslab`: run the resonance, bound and anisotropic-block checks from a TOML config.
//!
//! Exit codes: 0 all checks pass, 2 a check failed, 3 configuration error or
//! missing inputs, 4 numerical failure. On any nonzero exit a one-line JSON
//! record with the reason goes to stderr.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use resonance_lab::cli_io::{cmd_report, load_config, run_with_config, CliError, Command, Outcome, RunConfig, EXIT_CONFIG};

#[derive(Parser)]
#[command(name = "reslab", version, about = "Transfer-operator resonances and spectral bounds for hyperbolic maps")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Determinant zeros vs collocation eigenvalues (traces.csv, determinant.json, match.json).
    Resonances(RunArgs),
    /// Growth-rate cross-check and the sup inequality (bounds.csv, bounds.json).
    Bounds(RunArgs),
    /// Anisotropic block suite on the chart model (aniso.json, aniso_traces.csv).
    Aniso(RunArgs),
    /// Merge existing artifacts into summary.json and plot data.
    Report(ReportArgs),
}

#[derive(Args)]
struct RunArgs {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the config output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    quiet: bool,
}

#[derive(Args)]
struct ReportArgs {
    /// Directory holding earlier artifacts (defaults to the config's output_dir).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    quiet: bool,
}

fn print_outcome(out: &Outcome, dir: &Path) {
    for c in &out.checks {
        println!("{} {}: {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    for w in &out.warnings {
        println!("warning: {w}");
    }
    for f in &out.files {
        println!("wrote {}", dir.join(f).display());
    }
}

fn finish(name: &str, res: Result<Outcome, CliError>, dir: &Path, quiet: bool) -> ExitCode {
    match res {
        Ok(out) => {
            if !quiet {
                print_outcome(&out, dir);
            }
            let code = out.exit_code();
            if code != 0 {
                eprintln!("{}", out.to_json());
            }
            ExitCode::from(code as u8)
        }
        Err(e) => {
            eprintln!("{}", e.to_json(name));
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            // keep 2 reserved for failed checks
            return ExitCode::from(if e.use_stderr() { EXIT_CONFIG as u8 } else { 0 });
        }
    };
    let (cmd, args) = match cli.cmd {
        Cmd::Resonances(a) => (Command::Resonances, a),
        Cmd::Bounds(a) => (Command::Bounds, a),
        Cmd::Aniso(a) => (Command::Aniso, a),
        Cmd::Report(r) => {
            let dir = match (r.out, r.config) {
                (Some(d), _) => Ok(d),
                (None, Some(c)) => RunConfig::load(&c).map(|cfg| cfg.output_dir),
                (None, None) => Err(CliError::Config("report needs --out or --config".into())),
            };
            return match dir {
                Ok(d) => finish("report", cmd_report(&d), &d, r.quiet),
                Err(e) => finish("report", Err(e), Path::new("."), r.quiet),
            };
        }
    };
    match load_config(&args.config, args.seed, args.out.as_deref()) {
        Ok(cfg) => finish(cmd.name(), run_with_config(cmd, &cfg), &cfg.output_dir, args.quiet),
        Err(e) => finish(cmd.name(), Err(e), Path::new("."), args.quiet),
    }
}
