//! Batch front end for the mixloc laboratory: scenario configs in, CSV and
//! JSON reports out.

pub mod config;
pub mod output;
pub mod run;

use std::path::Path;
use std::time::Instant;

pub use config::ScenarioConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
}

/// Exit status of a run: 0 when every check passes, 2 when one exceeds its tolerance.
pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 2;
pub const EXIT_ERROR: i32 = 1;

pub struct Outcome {
    pub exit_code: i32,
    pub result: run::RunResult,
    pub written: output::Written,
}

/// Hash of the resolved config, the identity of a run.
pub fn config_hash(cfg: &ScenarioConfig) -> String {
    output::sha256_hex(serde_json::to_string(cfg).expect("config serializes").as_bytes())
}

/// Executes `cfg` and writes its reports under `out`.
pub fn run_scenario(cfg: &ScenarioConfig, out: &Path) -> anyhow::Result<Outcome> {
    let t0 = Instant::now();
    let result = run::execute(cfg, config_hash(cfg))?;
    let exit_code = if result.body.passed { EXIT_OK } else { EXIT_CHECK_FAILED };
    let written = output::write_all(
        out,
        &result,
        exit_code,
        rayon::current_num_threads(),
        t0.elapsed().as_secs_f64(),
    )?;
    Ok(Outcome {
        exit_code,
        result,
        written,
    })
}
