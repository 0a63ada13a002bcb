use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use qdisc::calibsim::Shots;
use qdisc::helstrom;
use qdisc::runner::{self, SweepConfig};
use qdisc::states::{make_state, Axis, Sign, StateParams};

#[derive(Parser)]
#[command(name = "qdisc", version, about = "Two-state discrimination from calibration data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Helstrom error rate for ρ(α, d1, +) against ρ(α, d2, −).
    Helstrom {
        #[arg(long)]
        alpha: f64,
        #[arg(long)]
        d1: f64,
        #[arg(long)]
        d2: f64,
    },
    /// Run an α sweep and write a CSV.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Simulate calibration data for one state of the family.
    Simulate {
        #[arg(long)]
        alpha: f64,
        #[arg(long)]
        d: f64,
        #[arg(long, allow_hyphen_values = true)]
        sign: Sign,
        #[arg(long, value_delimiter = ',', default_value = "x,y")]
        settings: Vec<Axis>,
        #[arg(long, default_value = "1000")]
        shots: Shots,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Estimate states and design a POVM from a problem file.
    Solve {
        #[arg(long)]
        problem: PathBuf,
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long)]
        max_iter: Option<usize>,
    },
    /// Brute-force the best projective qubit measurement on a (θ, φ) grid.
    Oracle {
        #[arg(long)]
        alpha: f64,
        #[arg(long)]
        d1: f64,
        #[arg(long)]
        d2: f64,
        #[arg(long, default_value_t = 400)]
        grid: usize,
    },
}

fn family_pair(alpha: f64, d1: f64, d2: f64) -> qdisc::Result<[qdisc::DensityMatrix; 2]> {
    Ok([
        make_state(StateParams::new(alpha, d1, Sign::Plus)?)?,
        make_state(StateParams::new(alpha, d2, Sign::Minus)?)?,
    ])
}

/// `Ok(false)` when a solve did not converge.
fn run(cli: Cli) -> qdisc::Result<bool> {
    match cli.command {
        Command::Helstrom { alpha, d1, d2 } => {
            let [a, b] = family_pair(alpha, d1, d2)?;
            let report = helstrom::helstrom_two_state(&a, &b)?;
            println!("error_rate: {}", report.error_rate);
            println!("extremal_residual: {:e}", report.extremal_residual);
            for (j, pi) in report.povm.elements().iter().enumerate() {
                println!("povm[{j}]:");
                print!("{}", runner::format_operator(pi));
            }
            Ok(true)
        }
        Command::Sweep { config, out } => {
            let cfg = SweepConfig::load(&config)?;
            let rows = runner::run_sweep(&cfg)?;
            runner::write_sweep_csv(&rows, BufWriter::new(File::create(&out)?))?;
            let failed = rows.iter().filter(|r| !r.converged()).count();
            if failed > 0 {
                eprintln!("{failed} of {} rows did not converge", rows.len());
            }
            Ok(true)
        }
        Command::Simulate {
            alpha,
            d,
            sign,
            settings,
            shots,
            seed,
            out,
        } => {
            let ds = runner::simulate_dataset(StateParams::new(alpha, d, sign)?, settings, shots, seed)?;
            let text = ds.to_toml()?;
            match out {
                Some(path) => std::fs::write(path, text)?,
                None => io::stdout().write_all(text.as_bytes())?,
            }
            Ok(true)
        }
        Command::Solve { problem, tol, max_iter } => {
            let report = runner::solve_problem_file(&problem, tol, max_iter)?;
            print!("{report}");
            Ok(report.converged())
        }
        Command::Oracle { alpha, d1, d2, grid } => {
            let [a, b] = family_pair(alpha, d1, d2)?;
            let best = helstrom::brute_force_oracle(&a, &b, grid)?;
            println!("{best}");
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("error: iteration did not converge");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
