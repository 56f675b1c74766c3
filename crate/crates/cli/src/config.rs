//! Scenario configuration: strict JSON parsing, defaults and validation.

use std::collections::BTreeMap;

use mixloc::geometry::{Domain, DomainKind};
use mixloc::pohozaev::{validate_dyadic, Identity};
use mixloc::solvers::{Continuation, Nonlinearity, SystemNonlinearity};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Name of the boundary blow-up diagnostic in `checks`.
pub const BLOWUP_CHECK: &str = "blowup_profile";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub domain: DomainSpec,
    pub grid: GridSpec,
    #[serde(default)]
    pub operator: OperatorSpec,
    /// operator of the second component (systems only); defaults to `operator`
    #[serde(default)]
    pub second_operator: Option<OperatorSpec>,
    #[serde(default)]
    pub nonlinearity: Option<Nonlinearity>,
    #[serde(default)]
    pub system: Option<SystemNonlinearity>,
    pub solver: SolverKind,
    /// start amplitudes: numbers for scalar solves, `[μ_u, μ_v]` pairs for systems
    #[serde(default)]
    pub starts: Vec<Start>,
    #[serde(default)]
    pub continuation: Option<Continuation>,
    #[serde(default)]
    pub lambda_units: LambdaUnits,
    /// profile for `solver = "manufactured"`
    #[serde(default)]
    pub profile: Option<Profile>,
    pub checks: Vec<CheckSpec>,
    #[serde(default = "default_boundary_nodes")]
    pub boundary_nodes: usize,
    #[serde(default)]
    pub outputs: OutputSpec,
}

fn default_boundary_nodes() -> usize {
    256
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSpec {
    pub kind: String,
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    #[serde(rename = "N", default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(rename = "N_list", default, skip_serializing_if = "Option::is_none")]
    pub n_list: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct OperatorSpec {
    #[serde(default)]
    pub a: f64,
    #[serde(default)]
    pub s: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    Linear,
    Eigen,
    Semilinear,
    System,
    Manufactured,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Start {
    Single(f64),
    Pair([f64; 2]),
}

/// Whether λ values (nonlinearity and continuation) are absolute or
/// multiples of the grid's principal eigenvalue of the assembled operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LambdaUnits {
    #[default]
    Absolute,
    PrincipalEigenvalue,
}

/// Manufactured profiles, all vanishing on ∂Ω (`ρ = |x|/R`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    /// `1 - ρ²`
    Parabola,
    /// `(1 - ρ²)²`
    ParabolaSquared,
    /// `(1 - ρ²)^{1/2}`
    HalfPower,
}

impl Profile {
    pub fn eval(self, rho2: f64) -> f64 {
        let t = (1.0 - rho2).max(0.0);
        match self {
            Profile::Parabola => t,
            Profile::ParabolaSquared => t * t,
            Profile::HalfPower => t.sqrt(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    #[default]
    ResidualRel,
    ResidualAbs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckSpec {
    /// an identity name, or `blowup_profile`
    pub name: String,
    /// pass threshold on the finest grid; for `blowup_profile` the allowed
    /// shortfall of the fitted slope below `min(0, 1 - 2s)`
    pub tolerance: f64,
    #[serde(default)]
    pub metric: Metric,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default = "default_csv")]
    pub csv: String,
    #[serde(default = "default_json")]
    pub json: String,
    #[serde(default = "default_manifest")]
    pub manifest: String,
}

fn default_csv() -> String {
    "report.csv".into()
}

fn default_json() -> String {
    "report.json".into()
}

fn default_manifest() -> String {
    "manifest.json".into()
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self {
            csv: default_csv(),
            json: default_json(),
            manifest: default_manifest(),
        }
    }
}

/// Bundled scenarios, in catalog order.
pub const SCENARIOS: [(&str, &str); 8] = [
    ("torsion1d", include_str!("../scenarios/torsion1d.json")),
    ("mixed_torsion1d", include_str!("../scenarios/mixed_torsion1d.json")),
    (
        "dilation_manufactured",
        include_str!("../scenarios/dilation_manufactured.json"),
    ),
    ("eigen_flux", include_str!("../scenarios/eigen_flux.json")),
    ("disk_torsion2d", include_str!("../scenarios/disk_torsion2d.json")),
    ("bn_radial3d", include_str!("../scenarios/bn_radial3d.json")),
    (
        "system_subcritical1d",
        include_str!("../scenarios/system_subcritical1d.json"),
    ),
    ("blowup_probe", include_str!("../scenarios/blowup_probe.json")),
];

pub fn bundled(name: &str) -> Result<&'static str, CliError> {
    SCENARIOS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, text)| *text)
        .ok_or_else(|| CliError::Config(format!("no bundled scenario named '{name}'")))
}

impl ScenarioConfig {
    /// Parses and validates a config.
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: ScenarioConfig = serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn domain(&self) -> Result<Domain, CliError> {
        let kind = DomainKind::parse(&self.domain.kind).map_err(|e| CliError::Config(e.to_string()))?;
        Domain::new(kind, self.domain.radius).map_err(|e| CliError::Config(format!("domain.radius: {e}")))
    }

    pub fn grids(&self) -> Vec<usize> {
        match (&self.grid.n, &self.grid.n_list) {
            (Some(n), None) => vec![*n],
            (None, Some(list)) => list.clone(),
            _ => Vec::new(),
        }
    }

    pub fn second(&self) -> OperatorSpec {
        self.second_operator.unwrap_or(self.operator)
    }

    pub fn tolerances(&self) -> BTreeMap<String, f64> {
        self.checks.iter().map(|c| (c.name.clone(), c.tolerance)).collect()
    }

    /// Replaces the tolerance of check `name`.
    pub fn override_tolerance(&mut self, name: &str, value: f64) -> Result<(), CliError> {
        if !(value >= 0.0) {
            return Err(CliError::Config(format!(
                "tolerance override for '{name}' must be nonnegative"
            )));
        }
        let check = self
            .checks
            .iter_mut()
            .find(|c| c.name == name)
            .ok_or_else(|| CliError::Config(format!("tolerance override names unknown check '{name}'")))?;
        check.tolerance = value;
        Ok(())
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |key: &str, msg: String| Err(CliError::Config(format!("{key}: {msg}")));
        let domain = self.domain()?;
        match (&self.grid.n, &self.grid.n_list) {
            (Some(_), Some(_)) | (None, None) => return bad("grid", "give exactly one of N and N_list".into()),
            (None, Some(list)) => {
                if let Err(e) = validate_dyadic(list) {
                    return bad("grid.N_list", e.to_string());
                }
            }
            _ => {}
        }
        if self.boundary_nodes < 2 {
            return bad("boundary_nodes", "need at least 2".into());
        }
        for (key, op) in [
            ("operator", Some(self.operator)),
            ("second_operator", self.second_operator),
        ] {
            let Some(op) = op else { continue };
            if !(op.a >= 0.0) {
                return bad(key, format!("a = {} must be nonnegative", op.a));
            }
            if op.a > 0.0 && op.s.is_none() {
                return bad(key, "a > 0 needs s".into());
            }
        }
        if self.second_operator.is_some() && self.solver != SolverKind::System {
            return bad("second_operator", "only used by the system solver".into());
        }
        if let Some(nl) = &self.nonlinearity {
            if let Err(e) = nl.validate() {
                return bad("nonlinearity", e.to_string());
            }
        }
        if let Some(snl) = &self.system {
            if let Err(e) = snl.validate() {
                return bad("system", e.to_string());
            }
        }
        if self.checks.is_empty() {
            return bad("checks", "at least one check is required".into());
        }
        let pairs = self.starts.iter().filter(|s| matches!(s, Start::Pair(_))).count();
        match self.solver {
            SolverKind::Linear => {
                if !matches!(self.nonlinearity, Some(Nonlinearity::ConstantSource { .. })) {
                    return bad(
                        "nonlinearity",
                        "the linear solver needs the constant_source family".into(),
                    );
                }
            }
            SolverKind::Semilinear => {
                if self.nonlinearity.is_none() {
                    return bad("nonlinearity", "required by the semilinear solver".into());
                }
                if pairs > 0 {
                    return bad("starts", "scalar solves take amplitudes, not pairs".into());
                }
            }
            SolverKind::System => {
                if self.system.is_none() {
                    return bad("system", "required by the system solver".into());
                }
                if pairs != self.starts.len() || self.starts.is_empty() {
                    return bad("starts", "the system solver takes [μ_u, μ_v] pairs".into());
                }
            }
            SolverKind::Manufactured => {
                if self.profile.is_none() {
                    return bad("profile", "required by the manufactured solver".into());
                }
            }
            SolverKind::Eigen => {}
        }
        if self.solver != SolverKind::Semilinear
            && (self.continuation.is_some() || self.lambda_units != LambdaUnits::Absolute)
        {
            return bad("continuation", "only used by the semilinear solver".into());
        }
        if self.solver != SolverKind::Manufactured && self.profile.is_some() {
            return bad("profile", "only used by the manufactured solver".into());
        }
        let mut seen = Vec::new();
        for c in &self.checks {
            if seen.contains(&c.name) {
                return bad("checks", format!("'{}' listed twice", c.name));
            }
            seen.push(c.name.clone());
            if !(c.tolerance >= 0.0) {
                return bad("checks", format!("tolerance of '{}' must be nonnegative", c.name));
            }
            self.check_compatible(&c.name, &domain).or_else(|m| bad("checks", m))?;
        }
        Ok(())
    }

    fn check_compatible(&self, name: &str, domain: &Domain) -> Result<(), String> {
        let solved = matches!(self.solver, SolverKind::Linear | SolverKind::Semilinear);
        if name == BLOWUP_CHECK {
            if !solved || self.operator.s.is_none() || self.operator.a == 0.0 {
                return Err(format!("'{name}' needs a linear or semilinear solve with a > 0 and s"));
            }
            return Ok(());
        }
        let id = Identity::parse(name).map_err(|e| e.to_string())?;
        let ok = match id {
            Identity::Pohozaev | Identity::PohozaevEquivalent => solved,
            Identity::DilationNonlocal => self.solver == SolverKind::Manufactured && self.operator.s.is_some(),
            Identity::DilationLocal => self.solver == SolverKind::Manufactured,
            Identity::SystemPohozaev => self.solver == SolverKind::System,
            Identity::SystemNonexistence => self.solver == SolverKind::System,
            Identity::EigenFlux => self.solver == SolverKind::Eigen,
            Identity::CriticalThreshold => {
                self.solver == SolverKind::Semilinear && domain.kind == DomainKind::Ball3dRadial
            }
        };
        if ok {
            Ok(())
        } else {
            Err(format!("'{name}' does not apply to solver '{:?}' on this domain", self.solver).to_lowercase())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_bundled_scenario_parses_and_round_trips() {
        for (name, text) in SCENARIOS {
            let cfg = ScenarioConfig::parse(text).unwrap_or_else(|e| panic!("{name}: {e}"));
            assert_eq!(cfg.name, name);
            let again = ScenarioConfig::parse(&cfg.to_json()).unwrap();
            assert_eq!(again, cfg);
        }
    }

    #[test]
    fn unknown_keys_are_named() {
        let text = SCENARIOS[0].1.replacen("\"boundary_nodes\"", "\"boundry_nodes\"", 1);
        let err = ScenarioConfig::parse(&text).unwrap_err().to_string();
        assert!(err.contains("boundry_nodes"), "{err}");
    }

    #[test]
    fn cube_is_rejected() {
        let text = SCENARIOS[0].1.replacen("\"interval\"", "\"cube\"", 1);
        let err = ScenarioConfig::parse(&text).unwrap_err().to_string();
        assert!(err.contains("unsupported domain kind"), "{err}");
    }

    #[test]
    fn tolerance_overrides() {
        let mut cfg = ScenarioConfig::parse(SCENARIOS[0].1).unwrap();
        cfg.override_tolerance("pohozaev", 0.5).unwrap();
        assert_eq!(cfg.tolerances()["pohozaev"], 0.5);
        assert!(cfg.override_tolerance("nope", 0.5).is_err());
    }
}
