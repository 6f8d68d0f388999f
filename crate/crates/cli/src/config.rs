//! Run configurations: TOML files (or a previous run's JSON manifest) overlaid with flags.

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use wgphase::experiments::{ErrorDistribution, ErrorModel};
use wgphase::model::{build_optimized_array, build_uniform_pairs, EmitterArray, PulseShape, PulseSpec};
use wgphase::{Error, GridSpec};

fn default_output_dir() -> PathBuf {
    PathBuf::from("wgphase-out")
}
fn default_phi_d() -> f64 {
    0.75 * PI
}
fn default_gamma() -> f64 {
    1.0
}
fn one() -> usize {
    1
}
fn yes() -> bool {
    true
}

/// Loads `path` (TOML, or JSON with a `config` object), applies `overrides`, and
/// deserializes, rejecting unknown keys.
pub fn load<T: DeserializeOwned>(path: Option<&Path>, overrides: toml::Table) -> Result<T, Error> {
    let mut table = match path {
        None => toml::Table::new(),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", p.display())))?;
            if p.extension().is_some_and(|e| e == "json") {
                let v: serde_json::Value =
                    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
                let mut cfg = v.get("config").cloned().unwrap_or(v);
                drop_nulls(&mut cfg);
                toml::Table::try_from(cfg).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
            } else {
                text.parse::<toml::Table>()
                    .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
            }
        }
    };
    table.extend(overrides);
    T::deserialize(toml::Value::Table(table)).map_err(|e| Error::Config(e.to_string()))
}

/// TOML has no null; an absent key means the same thing.
fn drop_nulls(v: &mut serde_json::Value) {
    match v {
        serde_json::Value::Object(m) => {
            m.retain(|_, x| !x.is_null());
            m.values_mut().for_each(drop_nulls);
        }
        serde_json::Value::Array(a) => a.iter_mut().for_each(drop_nulls),
        _ => {}
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Design {
    /// Repeating `(φ_d, φ_d/3, φ_d)` cell.
    Optimized,
    /// Identical pairs `phi_a` apart.
    Uniform,
    /// Explicit `phases` and `delta`.
    Custom,
    /// Pairs with direct exchange; two-photon runs only.
    Interacting,
}

/// Array description shared by the single- and two-photon commands.
#[derive(Clone, Debug, PartialEq)]
pub struct ArrayConfig {
    pub design: Design,
    pub n_pairs: usize,
    pub phi_d: f64,
    pub phi_a: Option<f64>,
    pub phases: Option<Vec<f64>>,
    pub delta: Option<f64>,
}

impl ArrayConfig {
    pub fn build(&self) -> Result<EmitterArray, Error> {
        match self.design {
            Design::Optimized => build_optimized_array(self.n_pairs, self.phi_d),
            Design::Uniform => {
                let phi_a = self
                    .phi_a
                    .ok_or_else(|| Error::Config("design \"uniform\" needs phi_a".into()))?;
                build_uniform_pairs(self.n_pairs, self.phi_d, phi_a)
            }
            Design::Custom => {
                let (Some(x), Some(d)) = (&self.phases, self.delta) else {
                    return Err(Error::Config("design \"custom\" needs phases and delta".into()));
                };
                EmitterArray::non_interacting(x.clone(), d)
            }
            Design::Interacting => Err(Error::Config("the interacting design has no emitter-array form here".into())),
        }
    }
}

pub fn pulse(shape: PulseShape, gamma_over_sigma: f64) -> Result<PulseSpec, Error> {
    if !(gamma_over_sigma > 0.0 && gamma_over_sigma.is_finite()) {
        return Err(Error::Config(format!("gamma_over_sigma must be positive, got {gamma_over_sigma}")));
    }
    let p = match shape {
        PulseShape::Gaussian => PulseSpec::gaussian(1.0 / gamma_over_sigma),
        PulseShape::Lorentzian => PulseSpec::lorentzian(1.0 / gamma_over_sigma),
    };
    p.validate()?;
    Ok(p)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PropagationMode {
    Markovian,
    Exact,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SinglePhotonConfig {
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_design")]
    pub design: Design,
    #[serde(default = "one")]
    pub n_pairs: usize,
    #[serde(default = "default_phi_d")]
    pub phi_d: f64,
    pub phi_a: Option<f64>,
    pub phases: Option<Vec<f64>>,
    pub delta: Option<f64>,
    #[serde(default = "default_propagation")]
    pub propagation: PropagationMode,
    /// `σ_ω z/c` between pairs (exact propagation only).
    #[serde(default)]
    pub sigma_z_over_c: f64,
    /// Sets `σ_ω` for exact propagation.
    #[serde(default = "default_gs")]
    pub gamma_over_sigma: f64,
    #[serde(default = "default_omega_min")]
    pub omega_min: f64,
    #[serde(default = "default_omega_max")]
    pub omega_max: f64,
    #[serde(default = "default_points")]
    pub points: usize,
}

fn default_design() -> Design {
    Design::Optimized
}
fn default_propagation() -> PropagationMode {
    PropagationMode::Markovian
}
fn default_gs() -> f64 {
    10.0
}
fn default_omega_min() -> f64 {
    -3.0
}
fn default_omega_max() -> f64 {
    3.0
}
fn default_points() -> usize {
    601
}

impl SinglePhotonConfig {
    pub fn array(&self) -> ArrayConfig {
        ArrayConfig {
            design: self.design,
            n_pairs: self.n_pairs,
            phi_d: self.phi_d,
            phi_a: self.phi_a,
            phases: self.phases.clone(),
            delta: self.delta,
        }
    }

    pub fn validate(&self) -> Result<(), Error> {
        if !(self.omega_max > self.omega_min) || self.points < 2 {
            return Err(Error::Config("need omega_min < omega_max and at least 2 points".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TwoPhotonConfig {
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
    pub grid: Option<GridSpec>,
    #[serde(default = "default_design")]
    pub design: Design,
    #[serde(default = "one")]
    pub n_pairs: usize,
    #[serde(default = "default_phi_d")]
    pub phi_d: f64,
    pub phi_a: Option<f64>,
    pub phases: Option<Vec<f64>>,
    pub delta: Option<f64>,
    #[serde(default = "default_gs")]
    pub gamma_over_sigma: f64,
    #[serde(default = "default_shape")]
    pub pulse_shape: PulseShape,
    /// Interacting design only.
    #[serde(default)]
    pub sigma_z_over_c: f64,
    /// Node-doubling certification.
    #[serde(default = "yes")]
    pub certify: bool,
    #[serde(default)]
    pub write_spectrum: bool,
}

fn default_shape() -> PulseShape {
    PulseShape::Gaussian
}

impl TwoPhotonConfig {
    pub fn array(&self) -> ArrayConfig {
        ArrayConfig {
            design: self.design,
            n_pairs: self.n_pairs,
            phi_d: self.phi_d,
            phi_a: self.phi_a,
            phases: self.phases.clone(),
            delta: self.delta,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepNiConfig {
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
    pub grid: Option<GridSpec>,
    #[serde(default = "default_ni_pairs")]
    pub n_pairs: Vec<usize>,
    #[serde(default = "default_ni_gs")]
    pub gamma_over_sigma: Vec<f64>,
    #[serde(default = "default_shape")]
    pub pulse_shape: PulseShape,
    /// Refine the per-N optimum and fit power laws to the optima.
    #[serde(default)]
    pub optimize: bool,
}

fn default_ni_pairs() -> Vec<usize> {
    vec![4, 8, 16]
}
fn default_ni_gs() -> Vec<f64> {
    (0..12).map(|k| 4.0 * 1.25f64.powi(k)).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepIntConfig {
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
    pub grid: Option<GridSpec>,
    #[serde(default = "default_int_pairs")]
    pub n_pairs: usize,
    #[serde(default = "default_int_gs")]
    pub gamma_over_sigma: Vec<f64>,
    #[serde(default = "default_int_z")]
    pub sigma_z_over_c: Vec<f64>,
    #[serde(default = "default_shape")]
    pub pulse_shape: PulseShape,
}

fn default_int_pairs() -> usize {
    12
}
fn default_int_gs() -> Vec<f64> {
    (0..10).map(|k| 4.0 + 1.5 * k as f64).collect()
}
fn default_int_z() -> Vec<f64> {
    vec![0.0, 0.25, 0.5, 1.0]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpacingConfig {
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_level")]
    pub level: usize,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "default_gamma")]
    pub delta: f64,
}

fn default_level() -> usize {
    2
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ErrorCase {
    pub eps_intra: f64,
    pub eps_inter: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbConfig {
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
    pub grid: Option<GridSpec>,
    #[serde(default = "default_mc_pairs")]
    pub n_pairs: usize,
    /// Defaults to the optimum for `n_pairs`.
    pub gamma_over_sigma: Option<f64>,
    #[serde(default = "default_cases")]
    pub cases: Vec<ErrorCase>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub distribution: ErrorDistribution,
}

fn default_mc_pairs() -> usize {
    14
}
fn default_trials() -> usize {
    200
}
fn default_cases() -> Vec<ErrorCase> {
    [(0.001, 0.001), (0.001, 0.1), (0.01, 0.01), (0.1, 0.1)]
        .into_iter()
        .map(|(a, b)| ErrorCase {
            eps_intra: a,
            eps_inter: b,
        })
        .collect()
}

impl PerturbConfig {
    pub fn models(&self) -> Vec<ErrorModel> {
        self.cases
            .iter()
            .map(|c| ErrorModel {
                eps_intra: c.eps_intra,
                eps_inter: c.eps_inter,
                distribution: self.distribution,
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
    pub input: PathBuf,
    #[serde(default = "default_x")]
    pub x_column: String,
    #[serde(default = "default_y")]
    pub y_column: String,
}

fn default_x() -> String {
    "n_pairs".into()
}
fn default_y() -> String {
    "infidelity".into()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidateConfig {
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReflectionConfig {
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_refl_pairs")]
    pub n_pairs: usize,
    #[serde(default = "default_refl_gs")]
    pub gamma_over_sigma: Vec<f64>,
}

fn default_refl_pairs() -> usize {
    32
}
fn default_refl_gs() -> Vec<f64> {
    vec![10.0, 20.0, 50.0, 100.0]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.toml");
        std::fs::write(&p, "n_pairs = 3\ngamma_over_sigma = 7.0\n").unwrap();
        let mut o = toml::Table::new();
        o.insert("n_pairs".into(), toml::Value::Integer(5));
        let c: TwoPhotonConfig = load(Some(&p), o).unwrap();
        assert_eq!(c.n_pairs, 5);
        assert_eq!(c.gamma_over_sigma, 7.0);
        assert!(c.certify);
    }

    #[test]
    fn manifest_config_is_accepted() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.json");
        std::fs::write(&p, r#"{"config": {"level": 4, "gamma": 1.0, "delta": null}, "results": {}}"#).unwrap();
        let c: SpacingConfig = load(Some(&p), toml::Table::new()).unwrap();
        assert_eq!(c.level, 4);
        assert_eq!(c.delta, 1.0);
    }

    #[test]
    fn uniform_design_needs_phi_a() {
        let mut a = TwoPhotonConfig {
            design: Design::Uniform,
            ..load(None, toml::Table::new()).unwrap()
        }
        .array();
        assert!(a.build().is_err());
        a.phi_a = Some(PI);
        assert_eq!(a.build().unwrap().n_atoms(), 2);
    }
}
