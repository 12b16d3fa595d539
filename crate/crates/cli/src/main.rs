//! `pdm-lab`: runs a named experiment and writes its CSV tables.
//!
//! Exit codes: 0 success, 1 runtime failure (bad config, I/O, divergence),
//! 2 usage error or unknown experiment, 3 outputs written but an invariant
//! violation was flagged.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use pdm_core::config::load_config;
use pdm_core::experiments::{run_experiment, Experiment};
use pdm_core::gssa::Side;

#[derive(Debug, Clone, Copy, ValueEnum)]
enum NtfArg {
    First,
    Notch,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SideArg {
    Primary,
    Secondary,
}

#[derive(Debug, Parser)]
#[command(
    name = "pdm-lab",
    version,
    about = "Delta-sigma PDM wireless power experiments"
)]
struct Args {
    /// dynamic-response | ntf-compare | ripple-sweep | deviation-study |
    /// sinusoid-tracking | gssa-bode
    experiment: String,

    /// Key-value configuration file
    #[arg(long)]
    config: PathBuf,

    /// Output directory, created if missing
    #[arg(long)]
    out: PathBuf,

    #[arg(long, value_enum)]
    ntf: Option<NtfArg>,

    /// Notch frequency as a fraction of the switching frequency
    #[arg(long)]
    notch_ratio: Option<f64>,

    #[arg(long, value_enum)]
    side: Option<SideArg>,
}

fn main() -> ExitCode {
    let args = Args::parse();

    if let Err(e) = args.experiment.parse::<Experiment>() {
        eprintln!("pdm-lab: {e}");
        return ExitCode::from(2);
    }

    let mut cfg = match load_config(&args.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("pdm-lab: {e}");
            return ExitCode::from(1);
        }
    };
    let ntf = args.ntf.map(|n| match n {
        NtfArg::First => "first",
        NtfArg::Notch => "notch",
    });
    let side = args.side.map(|s| match s {
        SideArg::Primary => Side::Primary,
        SideArg::Secondary => Side::Secondary,
    });
    if let Err(e) = cfg.apply_overrides(ntf, args.notch_ratio, side) {
        eprintln!("pdm-lab: {e}");
        return ExitCode::from(1);
    }

    match run_experiment(&args.experiment, &cfg, &args.out) {
        Ok(outcome) => {
            for line in &outcome.summary {
                println!("{line}");
            }
            for f in &outcome.files {
                println!("wrote {}", f.display());
            }
            if outcome.is_clean() {
                ExitCode::SUCCESS
            } else {
                for v in &outcome.violations {
                    eprintln!("pdm-lab: invariant violation: {v}");
                }
                ExitCode::from(3)
            }
        }
        Err(e) => {
            eprintln!("pdm-lab: {}: {e}", args.experiment);
            ExitCode::from(1)
        }
    }
}
