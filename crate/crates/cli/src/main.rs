use std::process::ExitCode;

use clap::Parser;

use crlplus_cli::args::{Cli, Command};
use crlplus_cli::{commands, compare, CliError, Result, RunConfig};

fn init_threads(cfg: &RunConfig) -> Result<()> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build_global()
        .map_err(|e| CliError::Config(format!("cannot start {} threads: {e}", cfg.threads)))
}

fn run(command: &Command) -> Result<()> {
    let cfg = command.resolve()?;
    init_threads(&cfg)?;
    match command {
        Command::Synth { force, .. } => {
            let s = commands::synth(&cfg, *force)?;
            println!(
                "wrote {}: {} gold and {} unlabeled training documents, {} val, {} test",
                cfg.out_dir.display(),
                s.gold,
                s.unlabeled,
                s.val,
                s.test
            );
        }
        Command::Pretrain { .. } => {
            let s = commands::pretrain(&cfg)?;
            println!(
                "contrastive phase: {} steps, {} skipped, mean loss {:.4}",
                s.steps, s.skipped, s.mean_loss
            );
        }
        Command::Train { .. } => {
            let s = commands::train(&cfg)?;
            println!(
                "head phase: {} steps, mean loss {:.4}; validation accuracy {:.4}",
                s.stats.steps, s.stats.mean_loss, s.val_accuracy
            );
        }
        Command::Loop { .. } => {
            let s = commands::run_loop(&cfg, &mut |_| Ok(()))?;
            println!(
                "{} stopped after {} iterations ({:?}): {} labeled, {} left in the pool, validation accuracy {:.4}",
                cfg.method.0, s.iterations, s.stop, s.labeled, s.unlabeled, s.val_accuracy
            );
            println!("checkpoint sha256 {}", s.checkpoint_hash);
        }
        Command::Eval { .. } => {
            print!("{}", commands::eval(&cfg)?.to_text());
        }
        Command::Compare { .. } => {
            print!(
                "{}",
                compare::compare(&cfg, &mut |_, _, _| Ok(()))?.to_text()
            );
        }
        Command::Predict { .. } => {
            let p = commands::predict_file(&cfg)?;
            println!(
                "wrote {} predictions to {}",
                p.len(),
                cfg.out_dir.join("predictions.jsonl").display()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
