use std::path::PathBuf;
use std::process::ExitCode;

use tractor_forge_cli::config::Overrides;
use tractor_forge_cli::run_command;

const USAGE: &str = "\
usage: tractor-forge <command> --config <path> [--out <path>] [--seed <int>] [--tol <float>] [--grid <int>]

commands:
  describe           curvature summary (Ricci, scalar, Schouten or Gauss, Einstein fit)
  verify-ambient     closed-form ambient connection and Ricci restriction vs the numeric oracle
  verify-immersion   Weingarten, second fundamental form, mean curvature, compatibility residual
  tractor            parallel sections: residual | transport | holonomy | einstein (config \"action\")

The config file is JSON with \"schema\": \"tractor-forge/1\"; the report is a
single JSON object on stdout with a human summary on stderr.

exit codes: 0 pass, 1 check failure, 2 config error, 3 unsupported dimension";

struct Args {
    command: String,
    config: PathBuf,
    out: Option<PathBuf>,
    overrides: Overrides,
}

fn parse_args() -> Result<Args, String> {
    let mut argv = std::env::args().skip(1);
    let command = match argv.next() {
        Some(c) if c == "--help" || c == "-h" => return Err(String::new()),
        Some(c) => c,
        None => return Err("missing command".into()),
    };
    let mut config = None;
    let mut out = None;
    let mut overrides = Overrides::default();
    while let Some(flag) = argv.next() {
        let mut value_for = |name: &str| -> Result<String, String> {
            argv.next().ok_or_else(|| format!("{name} needs a value"))
        };
        match flag.as_str() {
            "--config" => config = Some(PathBuf::from(value_for("--config")?)),
            "--out" => out = Some(PathBuf::from(value_for("--out")?)),
            "--seed" => {
                overrides.seed = Some(
                    value_for("--seed")?
                        .parse()
                        .map_err(|e| format!("--seed: {e}"))?,
                )
            }
            "--tol" => {
                overrides.tol = Some(
                    value_for("--tol")?
                        .parse()
                        .map_err(|e| format!("--tol: {e}"))?,
                )
            }
            "--grid" => {
                overrides.grid = Some(
                    value_for("--grid")?
                        .parse()
                        .map_err(|e| format!("--grid: {e}"))?,
                )
            }
            "--help" | "-h" => return Err(String::new()),
            other => return Err(format!("unknown flag `{other}`")),
        }
    }
    let config = config.ok_or("--config <path> is required")?;
    Ok(Args {
        command,
        config,
        out,
        overrides,
    })
}

fn main() -> ExitCode {
    let args = match parse_args() {
        Ok(args) => args,
        Err(msg) => {
            if msg.is_empty() {
                eprintln!("{USAGE}");
                return ExitCode::from(0);
            }
            eprintln!("error: {msg}\n\n{USAGE}");
            return ExitCode::from(2);
        }
    };
    let config_text = match std::fs::read_to_string(&args.config) {
        Ok(text) => text,
        Err(err) => {
            eprintln!("error: cannot read {}: {err}", args.config.display());
            return ExitCode::from(2);
        }
    };

    let (report, code) = run_command(&args.command, &config_text, &args.overrides);
    let json = report.to_json();
    println!("{json}");
    if let Some(out) = &args.out {
        if let Err(err) = std::fs::write(out, format!("{json}\n")) {
            eprintln!("error: cannot write {}: {err}", out.display());
            return ExitCode::from(2);
        }
    }
    eprint!("{}", report.summary());
    ExitCode::from(code as u8)
}
