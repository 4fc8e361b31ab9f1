mod args;
mod commands;
mod manifest;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

use args::{Cli, Command, CriticAction};

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => tracing::Level::WARN,
        1 => tracing::Level::INFO,
        _ => tracing::Level::DEBUG,
    };
    tracing_subscriber::fmt()
        .with_max_level(level)
        .with_writer(std::io::stderr)
        .init();
}

fn run(command: &Command) -> anyhow::Result<()> {
    match command {
        Command::Segment(a) => commands::segment(a),
        Command::TreeRender(a) => commands::tree_render(a),
        Command::TreeWindows(a) => commands::tree_windows(a),
        Command::Refine(a) => commands::refine(a),
        Command::PairsBuild(a) => commands::pairs_build(a),
        Command::CriticTrain(a)
        | Command::Critic {
            action: CriticAction::Train(a),
        } => commands::critic_train(a),
        Command::CriticScore(a)
        | Command::Critic {
            action: CriticAction::Score(a),
        } => commands::critic_score(a),
        Command::PlanSys1(a) => commands::plan_sys1(a),
        Command::PlanSys2(a) => commands::plan_sys2(a),
        Command::EvalGad(a) => commands::eval_gad_cmd(a),
        Command::EvalVpa(a) => commands::eval_vpa_cmd(a),
        Command::EvalWp(a) => commands::eval_wp_cmd(a),
        Command::CurvesExport(a) => commands::curves_export(a),
        Command::ArenaServe(a) => commands::arena_serve(a),
        Command::ArenaReport(a) => commands::arena_report(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(2),
            };
        }
    };
    init_logging(cli.verbose);
    match run(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<commands::Usage>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
