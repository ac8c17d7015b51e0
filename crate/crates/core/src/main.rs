use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use hrom::config::ExperimentConfig;
use hrom::experiment::{cmd_adapt, cmd_greedy, cmd_verify, cmd_work};
use hrom::sampler::SamplerMode;
use hrom::RomError;

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Rom,
    Hrom,
    HromHyperdwr,
    Greedy,
}

impl From<ModeArg> for SamplerMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Rom => SamplerMode::Rom,
            ModeArg::Hrom => SamplerMode::HromNoHyperDwr,
            ModeArg::HromHyperdwr => SamplerMode::HromHyperDwr,
            ModeArg::Greedy => SamplerMode::Greedy,
        }
    }
}

/// Hyperreduced LSPG reduced-order models with goal-oriented sampling.
#[derive(Debug, Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Configuration file (key = value with [sections]); defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides `output.dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Sampler mode; overrides `sampling.mode`.
    #[arg(long, global = true, value_enum)]
    mode: Option<ModeArg>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fixed-basis hyperreduction study (ROM plus residual/Jacobian ECSW models).
    Verify,
    /// Goal-oriented adaptive sampling.
    Adapt,
    /// Greedy residual-norm sampling at a matched work budget.
    Greedy,
    /// Rebuild work-unit ledgers for the run in the output directory.
    Work,
}

fn exit_code(e: &RomError) -> u8 {
    match e {
        RomError::Config(_) | RomError::Parse(_) | RomError::Io(_) | RomError::Csv(_) => 2,
        RomError::BudgetExceeded { .. } => 4,
        _ => 3,
    }
}

fn run(cli: Cli) -> Result<(), RomError> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(m) = cli.mode {
        cfg.mode = m.into();
    }
    if let Some(o) = &cli.out {
        cfg.out_dir = o.clone();
    }
    let out = cfg.out_dir.clone();
    match cli.command {
        Command::Verify => {
            let r = cmd_verify(&cfg, &out)?;
            for row in &r.rows {
                println!(
                    "{:<16} |E~|={:<6} state={:.4e} functional={:.4e} mean_rom_point={:.4e} {}",
                    row.model,
                    row.mesh_size.map_or("-".to_string(), |n| n.to_string()),
                    row.state_error,
                    row.functional_error,
                    row.mean_rom_point_error,
                    row.status
                );
            }
            println!("wrote {}", r.csv.display());
        }
        Command::Adapt => {
            let s = cmd_adapt(&cfg, cfg.mode, &out)?;
            println!(
                "{}: cycles={} n={} |E~|={} work={} mean_rom_point_error={:.4e} max_lattice_error={:.4e}",
                s.mode, s.cycles, s.basis_dim, s.mesh_size, s.total_work, s.mean_rom_point_error, s.max_lattice_error
            );
            if s.budget_exceeded {
                return Err(RomError::BudgetExceeded {
                    cycles: s.cycles,
                    max_error: s.mean_rom_point_error,
                });
            }
        }
        Command::Greedy => {
            let (s, budget) = cmd_greedy(&cfg, cfg.mode, &out)?;
            println!(
                "greedy: budget={budget:e} spent={} cycles={} n={} max_lattice_error={:.4e}",
                s.total_work, s.cycles, s.basis_dim, s.max_lattice_error
            );
        }
        Command::Work => {
            let l = cmd_work(&out)?;
            println!("{}: {} cycles, cumulative work {}", l.model, l.cycles.len(), l.total());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
