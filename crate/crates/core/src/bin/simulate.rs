use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::Parser;
use log::{error, info, warn};

use patch_fdtd::config::{parse_config, ConfigError, RunConfig};
use patch_fdtd::pipeline::{build_base_scene, design_table, run_design, run_pipeline};

/// Environment variable naming the default output root.
const OUT_ENV: &str = "PATCH_FDTD_OUT";

const EXIT_CONFIG: u8 = 1;
const EXIT_UNCONVERGED: u8 = 3;

/// Simulate the split-ring-slotted patch antenna in its switch states and
/// compare the bands with the published ones.
#[derive(Parser, Debug)]
#[command(version, about)]
struct Args {
    /// run configuration file (an empty file selects the reference defaults)
    config: PathBuf,
    /// output directory; overrides `run.output_dir` and the PATCH_FDTD_OUT root
    #[arg(long)]
    out: Option<PathBuf>,
    /// print the design parameter block and exit without simulating
    #[arg(long)]
    design_only: bool,
    /// solver threads (0 = machine default)
    #[arg(long)]
    threads: Option<usize>,
    /// FDTD cell size in millimetres
    #[arg(long)]
    cell_size_mm: Option<f64>,
}

fn load(args: &Args) -> Result<RunConfig, String> {
    let text = std::fs::read_to_string(&args.config).map_err(|e| format!("{}: {e}", args.config.display()))?;
    let mut cfg = parse_config(&text).map_err(|e| format!("{}: {e}", args.config.display()))?;
    if let Some(t) = args.threads {
        cfg.solver.threads = t;
    }
    if let Some(c) = args.cell_size_mm {
        cfg.solver.cell_size_mm = c;
    }
    cfg.validate().map_err(|e: ConfigError| format!("command line: {e}"))?;
    Ok(cfg)
}

fn output_dir(args: &Args, cfg: &RunConfig) -> PathBuf {
    if let Some(o) = &args.out {
        return o.clone();
    }
    if !cfg.run.output_dir.is_empty() {
        return PathBuf::from(&cfg.run.output_dir);
    }
    let stem = args.config.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "run".into());
    let root = std::env::var_os(OUT_ENV).map(PathBuf::from).unwrap_or_else(|| Path::new("results").to_path_buf());
    root.join(stem)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args = Args::parse();
    let cfg = match load(&args) {
        Ok(c) => c,
        Err(e) => {
            error!("{e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };

    if args.design_only {
        let table = run_design(&cfg).and_then(|d| build_base_scene(&cfg).map(|s| design_table(&cfg, &d, &s)));
        return match table {
            Ok(t) => {
                print!("{t}");
                ExitCode::SUCCESS
            }
            Err(e) => {
                error!("{e}");
                ExitCode::from(e.exit_code() as u8)
            }
        };
    }

    let out = output_dir(&args, &cfg);
    info!("config hash {}, writing to {}", cfg.short_hash(), out.display());
    match run_pipeline(&cfg, &out) {
        Ok(outcome) => {
            for r in &outcome.results {
                if r.bands.is_empty() {
                    warn!("switch {}: no band", r.state);
                }
            }
            print!("{}", outcome.report.to_text());
            println!("wrote {} files to {}", outcome.files.len(), out.display());
            if outcome.all_converged() {
                ExitCode::SUCCESS
            } else {
                error!("at least one state did not converge; results are truncated");
                ExitCode::from(EXIT_UNCONVERGED)
            }
        }
        Err(e) => {
            error!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
