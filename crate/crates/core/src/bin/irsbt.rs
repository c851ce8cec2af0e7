use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use irsbt::experiments::figures::run_figure;
use irsbt::experiments::validate::run_all;
use irsbt::experiments::{run_trial, trial_seed, ExperimentConfig};

#[derive(Parser)]
#[command(name = "irsbt", version, about = "IRS-assisted mmWave beam training and positioning simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML configuration; defaults apply to missing keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Base seed; trial i uses seed + i.
    #[arg(long)]
    seed: Option<u64>,
    /// Trials per sweep point (overrides every figure).
    #[arg(long)]
    trials: Option<usize>,
    /// Output directory for CSV files.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (0 = one per core).
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Direct-link angle MSE and CRB against transmit power.
    Fig5(Common),
    /// Blocked-link histogram per user count.
    Fig6(Common),
    /// Beam misalignment rate against training length.
    Fig7(Common),
    /// Position error against transmit power.
    Fig8(Common),
    /// Blockage detection error rate.
    Fig9(Common),
    /// Raw against refined angle MSE.
    Fig10(Common),
    /// Objective landscape and peak gaps.
    Contour(Common),
    /// Runs the property checks.
    Validate(Common),
    /// Prints the effective configuration as TOML.
    Config(Common),
    /// Runs one full trial and prints its record as JSON.
    Trial {
        #[command(flatten)]
        common: Common,
        /// Trial index.
        #[arg(long, default_value_t = 0)]
        index: usize,
        #[arg(long, default_value_t = 15.0)]
        tx_power_dbm: f64,
        #[arg(long)]
        training_length: Option<usize>,
    },
}

fn load(c: &Common) -> irsbt::Result<ExperimentConfig> {
    let mut cfg = match &c.config {
        Some(p) => ExperimentConfig::from_file(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = c.seed {
        cfg.run.seed = s;
    }
    if let Some(t) = c.trials {
        cfg.run.trials = t;
        cfg.fig5.trials = Some(t);
        cfg.fig7.trials = Some(t);
        cfg.fig8.trials = Some(t);
        cfg.fig9.trials = Some(t);
        cfg.fig10.trials = Some(t);
    }
    if let Some(o) = &c.out {
        cfg.run.output = o.clone();
    }
    if let Some(w) = c.workers {
        cfg.run.workers = w;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn figure(name: &str, c: &Common) -> irsbt::Result<()> {
    let cfg = load(c)?;
    for (stem, table) in run_figure(name, &cfg)? {
        let path = cfg.run.output.join(format!("{stem}.csv"));
        table.write_to(&path)?;
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}

fn run(cli: Cli) -> irsbt::Result<bool> {
    match &cli.command {
        Command::Fig5(c) => figure("fig5", c)?,
        Command::Fig6(c) => figure("fig6", c)?,
        Command::Fig7(c) => figure("fig7", c)?,
        Command::Fig8(c) => figure("fig8", c)?,
        Command::Fig9(c) => figure("fig9", c)?,
        Command::Fig10(c) => figure("fig10", c)?,
        Command::Contour(c) => figure("contour", c)?,
        Command::Validate(c) => {
            let cfg = load(c)?;
            let mut ok = true;
            for check in run_all(&cfg)? {
                println!("{} {}: {}", if check.passed { "PASS" } else { "FAIL" }, check.name, check.detail);
                ok &= check.passed;
            }
            return Ok(ok);
        }
        Command::Config(c) => print!("{}", load(c)?.to_toml_string()?),
        Command::Trial { common, index, tx_power_dbm, training_length } => {
            let cfg = load(common)?;
            let n = training_length.unwrap_or(cfg.sounding.training_length);
            let rec = run_trial(&cfg, *index, trial_seed(cfg.run.seed, *index), *tx_power_dbm, n)?;
            println!("{}", rec.to_json());
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
