use std::process::ExitCode;

use anyhow::Context;
use clap::Parser;
use dynsuite_cli::{cmd_eval, cmd_generate, cmd_train, thread_limit, Cli, Command};

fn run(cli: Cli) -> anyhow::Result<()> {
    if let Some(n) = thread_limit()? {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the worker pool")?;
    }
    match cli.command {
        Command::Generate(args) => {
            let m = cmd_generate(&args)?;
            println!(
                "wrote {} train and {} test trajectories of {} to {}",
                m.n_train,
                m.n_test,
                m.system.kind,
                args.out.display()
            );
        }
        Command::Train(args) => {
            let s = cmd_train(&args)?;
            match (s.initial_loss, s.final_loss) {
                (Some(a), Some(b)) => println!("loss {a:.6e} -> {b:.6e}"),
                _ => println!("no training steps taken"),
            }
            println!("checkpoint {}", s.checkpoint.display());
            println!("loss curve {}", s.loss_csv.display());
        }
        Command::Eval(args) => {
            let out = cmd_eval(&args)?;
            println!("{}", out.to_json());
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
