use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use critlift::commands::{
    cmd_certify, cmd_epsilon_curve, cmd_fig1, cmd_fig2, cmd_fig3, cmd_probe, cmd_synthesize,
    cmd_verify, Target,
};
use critlift::scenario::Scenario;
use critlift_core::Error;

/// Construct, verify and certify lifted critical points of fully-connected
/// network loss landscapes.
#[derive(Parser)]
#[command(name = "critlift", version, about)]
struct Cli {
    /// Scenario JSON file (defaults to the bundled reference scenario).
    #[arg(long, global = true)]
    scenario: Option<PathBuf>,

    /// Override the scenario's seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory for emitted CSV/JSON files.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate the residual curve ε(t) and its kernel residual.
    EpsilonCurve {
        #[arg(long, default_value_t = 0.0)]
        t: f64,
    },
    /// Vector field (∂R/∂a1, (1/a1)∂R/∂w1) over an (a1, a2) grid.
    Fig1 {
        /// Curve parameters, comma separated.
        #[arg(long, value_delimiter = ',', default_value = "-4,0,3")]
        t_values: Vec<f64>,
        #[arg(long, default_value_t = 0.1)]
        min: f64,
        #[arg(long, default_value_t = 0.9)]
        max: f64,
        #[arg(long, default_value_t = 81)]
        steps: usize,
    },
    /// Loss surface over the (w2, a2)-plane plus marked critical points.
    Fig2 {
        #[arg(long, default_value_t = -2.0)]
        w_min: f64,
        #[arg(long, default_value_t = 2.0)]
        w_max: f64,
        #[arg(long, default_value_t = 161)]
        w_steps: usize,
        #[arg(long, default_value_t = -0.5)]
        a_min: f64,
        #[arg(long, default_value_t = 0.5)]
        a_max: f64,
        #[arg(long, default_value_t = 41)]
        a_steps: usize,
    },
    /// φ(t, w) grid plus extracted zero curves.
    Fig3 {
        #[arg(long, default_value_t = -0.5)]
        t_min: f64,
        #[arg(long, default_value_t = 0.5)]
        t_max: f64,
        #[arg(long, default_value_t = 201)]
        t_steps: usize,
        #[arg(long, default_value_t = -0.8)]
        w_min: f64,
        #[arg(long, default_value_t = 0.8)]
        w_max: f64,
        #[arg(long, default_value_t = 161)]
        w_steps: usize,
    },
    /// Synthesize sample outputs making the target parameter critical.
    Synthesize {
        #[arg(long, default_value = "narrow")]
        target: String,
    },
    /// Verify criticality of the target parameter on the scenario samples.
    Verify {
        #[arg(long, default_value = "narrow")]
        target: String,
    },
    /// Certify the scenario's wide form as a saddle.
    Certify,
    /// Probe the wide form for sample independence.
    Probe,
}

fn print_json<T: serde::Serialize>(value: &T) {
    match serde_json::to_string_pretty(value) {
        Ok(text) => println!("{text}"),
        Err(e) => eprintln!("output serialization failed: {e}"),
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    if let Ok(threads) = std::env::var("CRITLIFT_THREADS") {
        let n: usize = threads.parse().map_err(|_| {
            Error::Config(format!("CRITLIFT_THREADS must be a number, got {threads:?}"))
        })?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .ok();
    }

    let scenario = match &cli.scenario {
        Some(path) => Scenario::load(path)?,
        None => Scenario::bundled(),
    };
    let seed = cli.seed.unwrap_or(scenario.seed);
    let out_owned = cli
        .out
        .clone()
        .or_else(|| scenario.out_dir.as_ref().map(PathBuf::from));
    let out = out_owned.as_deref();

    match cli.command {
        Command::EpsilonCurve { t } => {
            let result = cmd_epsilon_curve(&scenario, t, out)?;
            print_json(&result);
        }
        Command::Fig1 { t_values, min, max, steps } => {
            let result = cmd_fig1(&scenario, &t_values, min, max, steps, out)?;
            print_json(&result.summaries);
        }
        Command::Fig2 { w_min, w_max, w_steps, a_min, a_max, a_steps } => {
            let result = cmd_fig2(&scenario, w_min, w_max, w_steps, a_min, a_max, a_steps, out)?;
            print_json(&result.roots);
        }
        Command::Fig3 { t_min, t_max, t_steps, w_min, w_max, w_steps } => {
            let result = cmd_fig3(&scenario, t_min, t_max, t_steps, w_min, w_max, w_steps, out)?;
            let summary: Vec<_> = result
                .branches
                .iter()
                .map(|b| {
                    serde_json::json!({
                        "id": b.id,
                        "points": b.points.len(),
                        "t_range": [b.t_min, b.t_max],
                        "w_span": b.w_span,
                        "is_zero_line": b.is_zero_line,
                    })
                })
                .collect();
            print_json(&summary);
        }
        Command::Synthesize { target } => {
            let result = cmd_synthesize(&scenario, Target::parse(&target)?, seed, out)?;
            print_json(&result);
        }
        Command::Verify { target } => {
            let result = cmd_verify(&scenario, Target::parse(&target)?, seed, out)?;
            print_json(&result);
        }
        Command::Certify => {
            let result = cmd_certify(&scenario, seed, out)?;
            print_json(&result);
        }
        Command::Probe => {
            let result = cmd_probe(&scenario, seed, out)?;
            print_json(&result);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let code = match e {
                Error::CertificationFailed(_) => 2,
                Error::Io(_) | Error::Csv(_) => 1,
                _ => 3,
            };
            ExitCode::from(code)
        }
    }
}
