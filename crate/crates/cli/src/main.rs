use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ddiqkd_cli::{
    cmd_keyrate_curve, cmd_session, cmd_theory_table, cmd_verify_appendix, parse_distances, CliError, CliResult,
    Config, Overrides,
};

#[derive(Parser)]
#[command(name = "ddiqkd", version, about = "Key-rate curves, protocol sessions and consistency checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML file with run parameters; flags below override it.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output file; stdout when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Seed of the random streams.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Fiber lengths in km, e.g. `0,50,100`.
    #[arg(long, global = true, value_name = "LIST")]
    distances: Option<String>,
    /// Mean photon number; optimised per distance when omitted.
    #[arg(long, global = true, value_name = "X")]
    mu: Option<f64>,
    /// Pulses sent in a session.
    #[arg(long, global = true, value_name = "N")]
    pulses: Option<u64>,
    /// Path-interferometer visibility for the theory table.
    #[arg(long, global = true, value_name = "V")]
    visibility: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Optimised key rate of both receivers against distance, as CSV.
    KeyrateCurve,
    /// Monte Carlo run of the protocol at the first distance, as JSON.
    Session,
    /// Register-state identities and BSM model agreement.
    VerifyAppendix {
        /// Use a deliberately broken path network.
        #[arg(long, hide = true)]
        inject_fault: bool,
    },
    /// Detector click probabilities for the eight basis-matched settings.
    TheoryTable,
}

fn run(cli: Cli) -> CliResult<()> {
    let mut cfg = Config::load(cli.config.as_deref())?;
    cfg.apply(&Overrides {
        seed: cli.seed,
        distances: cli
            .distances
            .as_deref()
            .map(parse_distances)
            .transpose()
            .map_err(|e| CliError::Usage(format!("--distances: {e}")))?,
        mu: cli.mu,
        pulses: cli.pulses,
        visibility: cli.visibility,
    });
    let out = cli.out.as_deref();
    match cli.command {
        Command::KeyrateCurve => {
            let summary = cmd_keyrate_curve(&cfg, out)?;
            let json = serde_json::to_string(&summary).expect("summary serialises");
            // Keep stdout clean for the CSV when it goes there.
            if out.is_some() {
                println!("{json}");
            } else {
                eprintln!("{json}");
            }
        }
        Command::Session => {
            let s = cmd_session(&cfg, out)?;
            if out.is_some() {
                let r = &s.report;
                println!(
                    "pulses {} sifted {} qber {:.6} secret bits {}",
                    r.n_pulses, r.sifted_length, r.qber, r.secret_key_length
                );
            }
        }
        Command::VerifyAppendix { inject_fault } => {
            let results = cmd_verify_appendix(&cfg, inject_fault, out)?;
            for r in &results {
                println!(
                    "{} {}: max deviation {:.3e} (tolerance {:.0e})",
                    if r.passed { "PASS" } else { "FAIL" },
                    r.name,
                    r.max_deviation,
                    r.tolerance
                );
            }
            let failed: Vec<&str> = results.iter().filter(|r| !r.passed).map(|r| r.name).collect();
            if !failed.is_empty() {
                return Err(CliError::CheckFailed(failed.join(", ")));
            }
        }
        Command::TheoryTable => cmd_theory_table(&cfg, out)?,
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}
