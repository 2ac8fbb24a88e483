use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use promptcast::config::ExperimentConfig;
use promptcast::pipeline::{self, Overrides};
use promptcast::Error;

#[derive(Parser)]
#[command(name = "promptcast", version, about = "Prompt-based time series forecasting toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Ingest raw records and write numerical train/val/test datasets.
    Build(Common),
    /// Render input/output prompt files from the numerical datasets.
    Prompt(Common),
    /// Concatenate train prompts for the zero-shot protocol.
    AssembleZeroShot(Common),
    /// Run backends and write prediction files.
    Forecast(Common),
    /// Decode predictions and write RMSE/MAE/Missing Rate reports.
    Eval(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    scenario: Option<String>,
    #[arg(long)]
    backend: Option<String>,
    #[arg(long)]
    split: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn load(&self) -> Result<(ExperimentConfig, Overrides), Error> {
        let ov = Overrides {
            scenario: self.scenario.clone(),
            backend: self.backend.clone(),
            split: self.split.as_deref().map(str::parse).transpose()?,
            seed: self.seed,
            out_dir: self.out.clone(),
        };
        let mut cfg = ExperimentConfig::load(&self.config)?;
        ov.apply(&mut cfg);
        Ok((cfg, ov))
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Build(c) => {
            let (cfg, ov) = c.load()?;
            for count in pipeline::cmd_build(&cfg, &ov)? {
                println!("{}\t{}\t{}", count.scenario, count.split, count.instances);
            }
        }
        Command::Prompt(c) => {
            let (cfg, ov) = c.load()?;
            for count in pipeline::cmd_prompt(&cfg, &ov)? {
                println!("{}\t{}\t{}", count.scenario, count.split, count.instances);
            }
        }
        Command::AssembleZeroShot(c) => {
            let (cfg, _) = c.load()?;
            let (dir, prov) = pipeline::cmd_assemble_zero_shot(&cfg)?;
            println!(
                "{}\ttrain={}\ttest={}",
                dir.display(),
                prov.combined_train_lines,
                prov.test.lines
            );
        }
        Command::Forecast(c) => {
            let (cfg, ov) = c.load()?;
            for out in pipeline::cmd_forecast(&cfg, &ov)? {
                println!("{}\t{}", out.path.display(), out.predictions);
            }
        }
        Command::Eval(c) => {
            let (cfg, ov) = c.load()?;
            let (path, report) = pipeline::cmd_eval(&cfg, &ov)?;
            print!("{}", report.to_table());
            eprintln!("report written to {}", path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
