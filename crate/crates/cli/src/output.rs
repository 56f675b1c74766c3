//! CSV/JSON report bodies, the run manifest and atomic file writes.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::run::{RunBody, RunResult};

/// Stable CSV column set; new columns are only ever appended.
pub const CSV_COLUMNS: [&str; 13] = [
    "row",
    "identity",
    "N",
    "h",
    "lhs",
    "rhs",
    "residual_abs",
    "residual_rel",
    "order",
    "extrapolated",
    "monotone",
    "status",
    "warnings",
];

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

fn num(v: f64) -> String {
    if v.is_finite() {
        format!("{v:e}")
    } else {
        String::new()
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

/// One `grid` row per grid and check, then one `study` row per check for
/// multi-grid runs.
pub fn csv_body(body: &RunBody) -> anyhow::Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(CSV_COLUMNS)?;
    for run in &body.grids {
        for c in &run.checks {
            let (lhs, rhs, abs, rel, warn) = match (&c.report, &c.blowup) {
                (Some(r), _) => (r.lhs, r.rhs, r.residual_abs, r.residual_rel, r.warnings.join("; ")),
                // blow-up rows: fitted slope against the bound exponent, residual = shortfall
                (None, Some(b)) => (
                    b.profile.slope.unwrap_or(f64::NAN),
                    b.bound_exponent,
                    b.shortfall,
                    b.shortfall,
                    String::new(),
                ),
                (None, None) => (f64::NAN, f64::NAN, f64::NAN, f64::NAN, String::new()),
            };
            let status = match &c.error {
                Some(e) => format!("error: {e}"),
                None => "ok".into(),
            };
            w.write_record([
                "grid".to_string(),
                c.name.clone(),
                run.n.to_string(),
                num(run.h),
                num(lhs),
                num(rhs),
                num(abs),
                num(rel),
                String::new(),
                String::new(),
                String::new(),
                status,
                warn,
            ])?;
        }
    }
    for s in &body.studies {
        let st = &s.study;
        let status = serde_json::to_value(st.status)?
            .as_str()
            .unwrap_or_default()
            .to_string();
        let last = st.residuals.last().copied().flatten();
        w.write_record([
            "study".to_string(),
            s.name.clone(),
            st.grids.iter().map(|n| n.to_string()).collect::<Vec<_>>().join(" "),
            String::new(),
            String::new(),
            String::new(),
            String::new(),
            opt(last),
            opt(st.order),
            opt(st.extrapolated),
            st.monotone.to_string(),
            status,
            st.errors.join("; "),
        ])?;
    }
    Ok(w.into_inner()?)
}

pub fn json_body(body: &RunBody) -> anyhow::Result<Vec<u8>> {
    let mut out = serde_json::to_vec_pretty(body)?;
    out.push(b'\n');
    Ok(out)
}

#[derive(Debug, Serialize)]
pub struct FileRef {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct GridTiming {
    #[serde(rename = "N")]
    pub n: usize,
    pub seconds: f64,
}

/// Run manifest. Timings live here only, outside the report bodies.
#[derive(Debug, Serialize)]
pub struct Manifest {
    pub artifact: &'static str,
    pub version: &'static str,
    pub scenario: String,
    pub config_sha256: String,
    pub csv: FileRef,
    pub json: FileRef,
    pub checks: Vec<(String, bool)>,
    pub exit_code: i32,
    pub threads: usize,
    pub timings: Vec<GridTiming>,
    pub total_seconds: f64,
}

/// Writes `bytes` to a sibling temp file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let name = path
        .file_name()
        .ok_or_else(|| std::io::Error::new(std::io::ErrorKind::InvalidInput, "output path has no file name"))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(name);
    tmp_name.push(".tmp");
    let tmp = path.with_file_name(tmp_name);
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)
}

pub struct Written {
    pub csv: PathBuf,
    pub json: PathBuf,
    pub manifest: PathBuf,
}

pub fn write_all(
    out: &Path,
    result: &RunResult,
    exit_code: i32,
    threads: usize,
    total_seconds: f64,
) -> anyhow::Result<Written> {
    fs::create_dir_all(out)?;
    let cfg = &result.body.config;
    let csv = csv_body(&result.body)?;
    let json = json_body(&result.body)?;
    let csv_path = out.join(&cfg.outputs.csv);
    let json_path = out.join(&cfg.outputs.json);
    let manifest_path = out.join(&cfg.outputs.manifest);
    write_atomic(&csv_path, &csv)?;
    write_atomic(&json_path, &json)?;
    let manifest = Manifest {
        artifact: result.body.artifact,
        version: result.body.version,
        scenario: cfg.name.clone(),
        config_sha256: result.body.config_sha256.clone(),
        csv: FileRef {
            path: cfg.outputs.csv.clone(),
            sha256: sha256_hex(&csv),
        },
        json: FileRef {
            path: cfg.outputs.json.clone(),
            sha256: sha256_hex(&json),
        },
        checks: result
            .body
            .verdicts
            .iter()
            .map(|v| (v.name.clone(), v.passed))
            .collect(),
        exit_code,
        threads,
        timings: result
            .timings
            .iter()
            .map(|&(n, seconds)| GridTiming { n, seconds })
            .collect(),
        total_seconds,
    };
    let mut m = serde_json::to_vec_pretty(&manifest)?;
    m.push(b'\n');
    write_atomic(&manifest_path, &m)?;
    Ok(Written {
        csv: csv_path,
        json: json_path,
        manifest: manifest_path,
    })
}
