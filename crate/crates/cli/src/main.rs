//! `tsdh`: build relational datasets, train diffusion models, impute prompts,
//! and detect/mitigate relational hallucination.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error,
//! 3 numerical failure.

mod cli;
mod commands;
mod config;

use clap::Parser;

fn exit_code(err: &anyhow::Error) -> i32 {
    match err.downcast_ref::<tsdh_core::Error>() {
        Some(tsdh_core::Error::Config(_)) => 1,
        Some(tsdh_core::Error::Numerical(_)) | Some(tsdh_core::Error::StepOutOfRange { .. }) => 3,
        Some(_) => 2,
        // Errors without a typed cause are treated as data/environment
        // problems (missing files, bad CSVs).
        None => 2,
    }
}

fn run(command: cli::Command) -> anyhow::Result<()> {
    match command {
        cli::Command::BuildDataset(args) => commands::cmd_build_dataset(args),
        cli::Command::Train(args) => commands::cmd_train(args),
        cli::Command::Impute(args) => commands::cmd_impute(args),
        cli::Command::Score(args) => commands::cmd_score(args),
        cli::Command::Calibrate(args) => commands::cmd_calibrate(args),
        cli::Command::Classify(args) => commands::cmd_classify(args),
        cli::Command::Mitigate(args) => commands::cmd_mitigate(args),
        cli::Command::Benchmark(args) => commands::cmd_benchmark(args),
        cli::Command::Heatmap(args) => commands::cmd_heatmap(args),
    }
}

fn main() {
    let parsed = cli::Cli::try_parse();
    let cli = match parsed {
        Ok(cli) => cli,
        Err(err) => {
            use clap::error::ErrorKind;
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = err.print();
            std::process::exit(code);
        }
    };
    if let Err(err) = run(cli.command) {
        eprintln!("error: {err:#}");
        std::process::exit(exit_code(&err));
    }
}
