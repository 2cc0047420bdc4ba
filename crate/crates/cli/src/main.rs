use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use linksteal::experiment::{
    analyze_run, run_defense_sweep, run_experiment, run_transfer, train_models, write_analysis, write_pair_scores,
    write_run_artifacts, write_run_report, write_sweep_report, ExperimentConfig, RunReport,
};

#[derive(Parser, Debug)]
#[command(name = "linksteal", version, about = "Link stealing attacks against inductive GNNs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train target and shadow models; write accuracies, splits and checkpoints.
    Train(Options),
    /// Run the full attack pipeline and write per-attack AUCs.
    Attack(Options),
    /// Retrain the target under a privacy budget sweep.
    Sweep(Options),
    /// Attack with a shadow model trained on a different dataset.
    Transfer(Options),
    /// Attack pipeline plus robustness, correlation and surprising-link analysis.
    Report(Options),
}

#[derive(Args, Debug)]
struct Options {
    /// Flat `key = value` config file, applied before any flag.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset directory, or `planted:nodes=..,communities=..,...`.
    #[arg(long)]
    dataset: Option<String>,
    #[arg(long)]
    shadow_dataset: Option<String>,
    /// gcn, sage, gat or gin.
    #[arg(long)]
    arch: Option<String>,
    #[arg(long)]
    shadow_arch: Option<String>,
    /// Comma list of attack ids (b0..b2, a0..a9) or `all`.
    #[arg(long)]
    attack: Option<String>,
    /// Comma list of query depths.
    #[arg(long)]
    hop: Option<String>,
    /// none, label, soft, edgerand or lapgraph.
    #[arg(long)]
    defense: Option<String>,
    /// Privacy budget(s): a comma list or a range like `1..10`.
    #[arg(long)]
    epsilon: Option<String>,
    #[arg(long)]
    temperature: Option<String>,
    #[arg(long)]
    shadow_fraction: Option<String>,
    #[arg(long)]
    runs: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

impl Options {
    fn config(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path).with_context(|| format!("loading {}", path.display()))?,
            None => ExperimentConfig::default(),
        };
        let flags = [
            ("dataset", &self.dataset),
            ("shadow_dataset", &self.shadow_dataset),
            ("arch", &self.arch),
            ("shadow_arch", &self.shadow_arch),
            ("attack", &self.attack),
            ("hop", &self.hop),
            ("defense", &self.defense),
            ("epsilon", &self.epsilon),
            ("temperature", &self.temperature),
            ("shadow_fraction", &self.shadow_fraction),
            ("runs", &self.runs),
            ("seed", &self.seed),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                cfg.set(key, v)
                    .with_context(|| format!("--{}", key.replace('_', "-")))?;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn print_written(paths: &[PathBuf]) {
    for p in paths {
        println!("wrote {}", p.display());
    }
}

fn write_attack_outputs(report: &RunReport, out: &Path) -> Result<Vec<PathBuf>> {
    let mut written = write_run_report(report, out)?;
    written.push(write_pair_scores(report, out)?);
    written.extend(write_run_artifacts(report, out)?);
    Ok(written)
}

fn summarize(report: &RunReport) {
    println!(
        "target accuracy {:.4}, shadow accuracy {:.4}, {} run(s)",
        report.mean_target_accuracy(),
        report.mean_shadow_accuracy(),
        report.runs.len()
    );
    for id in report.attacks() {
        if let Some(auc) = report.mean_auc(id) {
            println!("{id:>4}  mean AUC {auc:.4}");
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(o) => {
            let report = train_models(&o.config()?)?;
            summarize(&report);
            let mut written = write_run_report(&report, &o.out)?;
            written.extend(write_run_artifacts(&report, &o.out)?);
            print_written(&written);
        }
        Command::Attack(o) => {
            let report = run_experiment(&o.config()?)?;
            summarize(&report);
            print_written(&write_attack_outputs(&report, &o.out)?);
        }
        Command::Transfer(o) => {
            let report = run_transfer(&o.config()?)?;
            summarize(&report);
            print_written(&write_attack_outputs(&report, &o.out)?);
        }
        Command::Sweep(o) => {
            let cfg = o.config()?;
            let report = run_defense_sweep(&cfg, &cfg.epsilons)?;
            println!("{} sweep, attack {}", report.defense, report.attack);
            for (eps, acc, auc) in report.means() {
                let eps = eps.map_or_else(|| "none".to_string(), |e| e.to_string());
                println!("epsilon {eps:>5}  accuracy {acc:.4}  AUC {auc:.4}");
            }
            print_written(&write_sweep_report(&report, &o.out)?);
        }
        Command::Report(o) => {
            let report = run_experiment(&o.config()?)?;
            summarize(&report);
            let mut written = write_attack_outputs(&report, &o.out)?;
            for r in &report.runs {
                let analysis = analyze_run(r).with_context(|| format!("analysing run {}", r.run))?;
                written.extend(write_analysis(
                    &analysis,
                    &o.out.join(format!("run{}", r.run)).join("analysis"),
                )?);
            }
            print_written(&written);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
