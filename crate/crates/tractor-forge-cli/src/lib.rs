//! Library surface of the verification CLI, exposed for integration tests.

pub mod commands;
pub mod config;
pub mod report;

use std::time::Instant;

use config::{ConfigError, Overrides, RunConfig};
use report::Report;

/// Run a command against a config JSON string. Returns the report and the
/// process exit code.
pub fn run_command(command: &str, config_text: &str, overrides: &Overrides) -> (Report, i32) {
    let started = Instant::now();
    let config_echo: serde_json::Value =
        serde_json::from_str(config_text).unwrap_or(serde_json::Value::Null);

    let fail = |kind: &str, message: String, code: i32| -> (Report, i32) {
        let mut report = Report::new(command, config_echo.clone(), 0, 0);
        report.fail_with(kind, message, None);
        (report, code)
    };

    let parsed = match RunConfig::parse(config_text) {
        Ok(cfg) => cfg,
        Err(err) => return fail("ConfigError", err.to_string(), 2),
    };
    let need_family = matches!(command, "verify-ambient" | "verify-immersion" | "tractor");
    let resolved = match parsed.resolve(overrides, need_family) {
        Ok(res) => res,
        Err(err @ ConfigError::Invalid(_)) => return fail("ConfigError", err.to_string(), 2),
        Err(err @ ConfigError::Dimension(_)) => {
            return fail("UnsupportedDimension", err.to_string(), 3)
        }
    };

    let mut report = Report::new(command, config_echo, resolved.seed, resolved.grid);
    let outcome = match command {
        "describe" => commands::cmd_describe(&resolved, &mut report),
        "verify-ambient" => commands::cmd_verify_ambient(&resolved, &mut report),
        "verify-immersion" => commands::cmd_verify_immersion(&resolved, &mut report),
        "tractor" => commands::cmd_tractor(&resolved, &mut report),
        other => {
            report.fail_with("ConfigError", format!("unknown command `{other}`"), None);
            report.wall_ms = started.elapsed().as_millis() as u64;
            return (report, 2);
        }
    };

    let code = match outcome {
        Ok(()) => {
            if report.pass {
                0
            } else {
                1
            }
        }
        Err(err) => {
            let residual = match &err {
                tractor_forge::Error::NotEinstein { residual, .. } => Some(*residual),
                tractor_forge::Error::RequiresNormalizedFamily { residual } => Some(*residual),
                _ => None,
            };
            let kind = match &err {
                tractor_forge::Error::NotEinstein { .. } => "NotEinstein",
                tractor_forge::Error::SchoutenUndefined { .. } => "UnsupportedDimension",
                tractor_forge::Error::StepSizeUnderflow { .. } => "StepSizeUnderflow",
                _ => "Error",
            };
            report.fail_with(kind, err.to_string(), residual);
            commands::exit_code_for(&err)
        }
    };
    report.wall_ms = started.elapsed().as_millis() as u64;
    (report, code)
}
