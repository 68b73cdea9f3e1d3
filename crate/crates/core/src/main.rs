use std::process::ExitCode;

use ddal::harness::{self, HarnessError};

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();

    let req = match harness::parse_cli(std::env::args_os()) {
        Ok(r) => r,
        Err(HarnessError::Clap(e)) => e.exit(),
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(e.exit_code() as u8);
        }
    };

    match harness::execute(&req) {
        Ok(summary) => {
            let mut failed = false;
            for a in &summary.outcome.agents {
                match &a.error {
                    None => println!("agent {}: {} epochs", a.agent_id, a.records.len()),
                    Some(e) => {
                        failed = true;
                        println!(
                            "agent {}: stopped after {} epochs: {e}",
                            a.agent_id,
                            a.records.len()
                        );
                    }
                }
            }
            if let Some(report) = &summary.stability {
                for s in &report.agents {
                    println!(
                        "agent {}: fraction_at_max {:.4} over epochs {}..={} ({})",
                        s.agent_id,
                        s.fraction_at_max,
                        s.window.0,
                        s.window.1,
                        if s.stable { "stable" } else { "unstable" }
                    );
                }
            }
            println!("manifest: {}", summary.manifest.display());
            if failed {
                ExitCode::from(3)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
