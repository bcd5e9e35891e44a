//! `pharmlab`: config-driven experiment runner.
//!
//! ```text
//! pharmlab run <config>          execute one experiment
//! pharmlab list-tasks [--json]   print the task names
//! ```
//!
//! Exit codes: 0 all certifications passed (inverted for configs with
//! `expect = fail`), 2 a certification failed, 1 execution or config error.

mod config;
mod tasks;

use std::path::Path;
use std::process::ExitCode;

const USAGE: &str = "usage:
  pharmlab run <config>          run the experiment described by a config file
  pharmlab list-tasks [--json]   list the available task names";

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    match args.first().map(String::as_str) {
        Some("run") => {
            if args.len() != 2 {
                eprintln!("{USAGE}");
                return ExitCode::from(1);
            }
            run(Path::new(&args[1]))
        }
        Some("list-tasks") => match args.get(1).map(String::as_str) {
            None => {
                for t in config::TASKS {
                    println!("{t}");
                }
                ExitCode::SUCCESS
            }
            Some("--json") if args.len() == 2 => {
                let quoted: Vec<String> =
                    config::TASKS.iter().map(|t| format!("\"{t}\"")).collect();
                println!("[{}]", quoted.join(","));
                ExitCode::SUCCESS
            }
            _ => {
                eprintln!("{USAGE}");
                ExitCode::from(1)
            }
        },
        _ => {
            eprintln!("{USAGE}");
            ExitCode::from(1)
        }
    }
}

fn run(path: &Path) -> ExitCode {
    let cfg = match config::load(path) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("config error: {e:#}");
            return ExitCode::from(1);
        }
    };
    let expect_fail = cfg.expect_fail;
    match tasks::run(&cfg) {
        Ok(outcome) => {
            for line in &outcome.summary {
                println!("{line}");
            }
            let effective = outcome.pass != expect_fail;
            println!(
                "{}: {}{}",
                cfg.task,
                if outcome.pass { "PASS" } else { "FAIL" },
                if expect_fail { " (expected failure)" } else { "" }
            );
            if effective {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(2)
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
