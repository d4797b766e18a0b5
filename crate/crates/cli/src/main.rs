use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use twomode::hamiltonian::Transition;
use twomode_cli::{commands, load, output_dir, Overrides};

#[derive(Parser)]
#[command(name = "twomode", version, about = "Charge-dispersion simulations of a two-mode transmon")]
struct Cli {
    #[command(subcommand)]
    verb: Verb,
    /// TOML run configuration; defaults apply without one.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output root; results go to `<out>/<verb>`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Sensitivity map file, replacing the configured map source.
    #[arg(long, global = true)]
    map: Option<PathBuf>,
    /// Ramsey transition: sigma, delta or 01-11.
    #[arg(long, global = true)]
    mode: Option<Transition>,
}

#[derive(Subcommand, Clone, Copy)]
enum Verb {
    /// Labeled levels and mode parameters at the sweet spot.
    Spectrum,
    /// Dispersion of the four lowest levels versus E_J/E_C.
    DispersionSweep,
    /// One synthetic (or loaded) Ramsey trace: spectrum, fit, offsets.
    Ramsey,
    /// Offset-charge time series of a scripted scenario.
    Track,
    /// Charge position from one offset pair.
    Localize,
    /// Scenario, tracking, localization and scoring.
    End2end,
}

impl Verb {
    fn name(self) -> &'static str {
        match self {
            Verb::Spectrum => "spectrum",
            Verb::DispersionSweep => "dispersion-sweep",
            Verb::Ramsey => "ramsey",
            Verb::Track => "track",
            Verb::Localize => "localize",
            Verb::End2end => "end2end",
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let verb = cli.verb.name();
    if cli.mode.is_some() && !matches!(cli.verb, Verb::Ramsey | Verb::Track | Verb::End2end) {
        eprintln!("error: --mode applies to ramsey, track and end2end only");
        return ExitCode::from(2);
    }
    let ov = Overrides {
        seed: cli.seed,
        out: cli.out,
        map: cli.map,
        transition: cli.mode,
    };
    let cfg = match load(cli.config.as_deref(), &ov) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let dir = output_dir(&cfg, verb);
    let result = commands::execute(verb, &cfg).and_then(|b| {
        b.write(&dir)?;
        Ok(b)
    });
    match result {
        Ok(b) => {
            log::info!("{verb}: wrote {} tables to {} (config {})", b.tables.len(), dir.display(), &b.config_hash[..12]);
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
