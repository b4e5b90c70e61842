use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fbst::config::{EpsilonSpec, ExperimentConfig, MeasureSpec, Overrides, Preset, ResolvedConfig};
use fbst::runner::{self, load_for};
use fbst::{CliError, Result};

#[derive(Parser)]
#[command(name = "fbst", version, about = "Full Bayesian Significance Test for linear models under a GP prior")]
struct Cli {
    /// More log output (repeat for debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Reproduce the water-droplet experiment.
    Droplet(Common),
    /// Run all tests on a user dataset.
    Test(Common),
    /// Derive the radius tolerance from the velocity column.
    Threshold(Common),
    /// Write prior and posterior GP paths only.
    Draws(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: Option<PathBuf>,
    /// CSV data file (overrides `data` in the config).
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    alpha: Option<f64>,
    /// A positive number or `stokes`.
    #[arg(long)]
    epsilon: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// `uniform` or `dp:TAU:LO:HI`.
    #[arg(long)]
    measure: Option<String>,
}

impl Common {
    fn resolve(&self, preset: Preset) -> Result<ResolvedConfig> {
        let file = match &self.config {
            Some(p) => ExperimentConfig::load(p).map_err(|e| match e {
                CliError::Io { path, source } => {
                    CliError::Config(format!("cannot read {}: {source}", path.display()))
                }
                other => other,
            })?,
            None => ExperimentConfig::default(),
        };
        let ov = Overrides {
            data: self.data.clone(),
            alpha: self.alpha,
            epsilon: self.epsilon.as_deref().map(str::parse::<EpsilonSpec>).transpose()?,
            seed: self.seed,
            output_dir: self.out.clone(),
            measure: self.measure.as_deref().map(str::parse::<MeasureSpec>).transpose()?,
        };
        file.resolve(preset, &ov)
    }

    /// Custom settings when data is given, the droplet preset otherwise.
    fn resolve_any(&self) -> Result<ResolvedConfig> {
        match self.resolve(Preset::Custom) {
            Err(CliError::Config(m)) if m.starts_with("no data file") => self.resolve(Preset::Droplet),
            other => other,
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Droplet(c) => report(&c.resolve(Preset::Droplet)?),
        Command::Test(c) => report(&c.resolve(Preset::Custom)?),
        Command::Threshold(c) => {
            let cfg = c.resolve_any()?;
            let data = load_for(&cfg)?.canonical();
            let domain = runner::finite_domain(&cfg, &data)?;
            let th = runner::stokes_from_data(&cfg, &data, domain.len())?;
            println!("eps_inf = {}", th.eps_inf);
            println!("eps_l2 = {}", th.eps_l2);
            println!("n = {}", th.n);
            Ok(())
        }
        Command::Draws(c) => {
            let cfg = c.resolve_any()?;
            let data = load_for(&cfg)?.canonical();
            let domain = runner::finite_domain(&cfg, &data)?;
            let grid = runner::draw_grid(&cfg, &domain);
            let (prior, post) = runner::draws(&cfg, &data, &grid)?;
            let dir = &cfg.output_dir;
            let io = |p: PathBuf| move |source| CliError::Io { path: p, source };
            std::fs::create_dir_all(dir).map_err(io(dir.clone()))?;
            for (name, m) in [("paths_prior.csv", &prior), ("paths_posterior.csv", &post)] {
                let p = dir.join(name);
                std::fs::write(&p, runner::paths_csv(&grid, m)).map_err(io(p.clone()))?;
            }
            println!("wrote {} paths on {} points to {}", cfg.draws.count, grid.len(), dir.display());
            Ok(())
        }
    }
}

fn report(cfg: &ResolvedConfig) -> Result<()> {
    let rep = if cfg.preset == "droplet" { runner::run_droplet(cfg)? } else { runner::run_custom(cfg)? };
    runner::write_report(&rep, &cfg.output_dir)?;
    println!("epsilon = {}", rep.epsilon.value);
    println!("{:<16} {:<9} {:<9} {:>12} reject", "hypothesis", "domain", "pragmatic", "e-value");
    for r in &rep.rows {
        println!(
            "{:<16} {:<9} {:<9} {:>12.6} {}",
            r.hypothesis,
            r.domain.label(),
            r.pragmatic,
            r.outcome.e_value,
            r.outcome.reject
        );
    }
    println!("report written to {}", cfg.output_dir.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                e.exit();
            }
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
