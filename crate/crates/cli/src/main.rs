use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use cqlab_core::report::{
    run_compare, run_experiment, selftest, ExperimentConfig, Protocol, RunSummary,
};
use cqlab_core::{Error, Result};

/// Hybrid classical/quantum continual-learning experiments.
#[derive(Parser)]
#[command(name = "cqlab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one model without sample injection.
    Train(RunArgs),
    /// Train with mid-run sample injection and forgetting diagnostics.
    Continual(RunArgs),
    /// Run all five models on the same task and write compare.csv.
    Compare(RunArgs),
    /// Train a network and write GradCAM overlays for the whole test set.
    Explain(RunArgs),
    /// Run the built-in oracle checks.
    Selftest,
}

#[derive(Args)]
struct RunArgs {
    /// JSON experiment config; defaults apply to every missing key.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seed to run; repeat for several. Replaces the config's seed list.
    #[arg(long = "seed")]
    seeds: Vec<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// cqural, cnn, svm, hybrid_svm or qnn.
    #[arg(long)]
    model: Option<String>,
}

impl RunArgs {
    fn config(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        if !self.seeds.is_empty() {
            cfg.seeds = self.seeds.clone();
        }
        if let Some(out) = &self.out {
            cfg.out = out.clone();
        }
        if let Some(m) = &self.model {
            cfg.model = m.parse()?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn print_run(r: &RunSummary) {
    let auc = r.auc.map_or("-".to_string(), |a| format!("{a:.4}"));
    let spike = r.spike.map_or("-".to_string(), |d| format!("{d:+.6}"));
    println!(
        "seed {} {:<10} accuracy {:>8.4}%  auc {auc}  spike {spike}  -> {}",
        r.seed,
        r.model.as_str(),
        100.0 * r.test.accuracy,
        r.dir.display()
    );
}

fn run(cli: Cli) -> Result<bool> {
    let runs = match cli.command {
        Command::Selftest => {
            let checks = selftest();
            for c in &checks {
                println!("{} {:<28} {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            return Ok(checks.iter().all(|c| c.passed));
        }
        Command::Train(a) => {
            let mut cfg = a.config()?;
            cfg.protocol = Protocol::Plain;
            run_experiment(&cfg)?
        }
        Command::Continual(a) => {
            let mut cfg = a.config()?;
            cfg.protocol = Protocol::Continual;
            run_experiment(&cfg)?
        }
        Command::Compare(a) => {
            let cfg = a.config()?;
            let runs = run_compare(&cfg)?;
            println!("wrote {}", cfg.out.join("compare.csv").display());
            runs
        }
        Command::Explain(a) => {
            let mut cfg = a.config()?;
            if !cfg.model.is_network() {
                return Err(Error::Usage(format!(
                    "explain needs a network model (cqural or cnn), got {}",
                    cfg.model
                )));
            }
            cfg.explain.enabled = true;
            cfg.explain.max_images = None;
            run_experiment(&cfg)?
        }
    };
    runs.iter().for_each(print_run);
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(4),
        Err(e) => {
            eprintln!("cqlab: {}", e.to_string().replace('\n', " "));
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
