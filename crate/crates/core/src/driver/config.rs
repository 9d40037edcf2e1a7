use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::ci::CiOptions;
use crate::eigensolver::SpectrumWindow;
use crate::error::{Error, Result};
use crate::fields::FieldOptions;
use crate::hartree_fock::{ScfControls, SpinConfiguration};
use crate::lattice::DeviceGeometry;
use crate::tb::{ParameterFile, SurfaceTreatment, TbParameterSet};
use crate::units::DEFAULT_CCC_TARGET_EV;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParameterSource {
    /// Path to a parameter table or a `builtin:` name.
    pub file: String,
    /// Expected sha256 of the table; checked before any compute.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checksum: Option<String>,
    #[serde(default)]
    pub spin_orbit: bool,
    #[serde(default)]
    pub surface: SurfaceTreatment,
}

impl ParameterSource {
    pub fn resolve(&self) -> Result<TbParameterSet> {
        let file = ParameterFile::load(&self.file)?;
        if let Some(expected) = &self.checksum {
            if !expected.eq_ignore_ascii_case(&file.checksum) {
                return Err(Error::Parameters(format!(
                    "{}: checksum {} does not match the expected {expected}",
                    self.file, file.checksum
                )));
            }
        }
        Ok(TbParameterSet::from_file(&file)
            .with_spin_orbit(self.spin_orbit)
            .with_surface(self.surface))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
#[derive(Default)]
pub struct CiRequest {
    /// Full CI over the bare TB window.
    pub over_tb: bool,
    /// CI over the converged HF orbitals.
    pub over_hf: bool,
    pub options: CiOptions,
}


#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum EdgeRequest {
    None,
    /// Lowest level of the donor-free box.
    #[default]
    FiniteBox,
    Extrapolated { asymptote_ev: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ObservableRequest {
    /// Also solve the N−1 and one-electron problems for CE and BE.
    pub references: bool,
    pub band_edge: EdgeRequest,
    pub dispersion: bool,
    pub bin_width_nm: f64,
    pub overlap: bool,
    /// Write the total density and Hartree potential as field files.
    pub fields: bool,
}

impl Default for ObservableRequest {
    fn default() -> Self {
        ObservableRequest {
            references: true,
            band_edge: EdgeRequest::FiniteBox,
            dispersion: true,
            bin_width_nm: 0.1,
            overlap: true,
            fields: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CalibrationSettings {
    /// Ground-state depth below the box band edge.
    pub target_depth_ev: f64,
    pub tolerance_ev: f64,
    /// Step of the bracketing search away from the starting correction.
    pub step_ev: f64,
    pub max_steps: usize,
    pub max_bisections: usize,
    /// Spin-orbitals listed when reporting the bound manifold.
    pub manifold_states: usize,
}

impl Default for CalibrationSettings {
    fn default() -> Self {
        CalibrationSettings {
            target_depth_ev: DEFAULT_CCC_TARGET_EV,
            tolerance_ev: 1e-5,
            step_ev: 0.5,
            max_steps: 40,
            max_bisections: 60,
            manifold_states: 24,
        }
    }
}

fn default_output() -> PathBuf {
    PathBuf::from("runs")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub geometry: DeviceGeometry,
    pub parameters: ParameterSource,
    /// `window.seed` is replaced by the top-level `seed`.
    pub window: SpectrumWindow,
    pub spins: SpinConfiguration,
    #[serde(default)]
    pub fields: FieldOptions,
    #[serde(default)]
    pub scf: ScfControls,
    #[serde(default)]
    pub ci: CiRequest,
    #[serde(default)]
    pub observables: ObservableRequest,
    #[serde(default)]
    pub calibration: CalibrationSettings,
    /// Not part of the run id.
    #[serde(default = "default_output")]
    pub output: PathBuf,
    #[serde(default)]
    pub seed: u64,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Configuration(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Configuration(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    /// Checks everything that can fail before compute, including the
    /// parameter checksum, and returns the resolved parameters.
    pub fn validate(&self) -> Result<TbParameterSet> {
        self.geometry.validate()?;
        self.window.validate()?;
        self.scf.validate()?;
        if !(self.observables.bin_width_nm > 0.0) {
            return Err(Error::Configuration("observables.bin_width_nm must be positive".into()));
        }
        if self.spins.electrons() > self.window.count {
            return Err(Error::Configuration(format!(
                "{} electrons do not fit a window of {} spin-orbitals",
                self.spins.electrons(),
                self.window.count
            )));
        }
        self.parameters.resolve()
    }

    pub fn effective_window(&self) -> SpectrumWindow {
        let mut w = self.window.clone();
        w.seed = self.seed;
        w
    }

    /// Sorted-key JSON of everything but the output directory.
    pub fn canonical_json(&self) -> Result<String> {
        let mut v = serde_json::to_value(self)?;
        if let Value::Object(map) = &mut v {
            map.remove("output");
        }
        Ok(serde_json::to_string(&v)?)
    }

    /// Content hash of the canonical config and the resolved parameter
    /// table checksum.
    pub fn run_id(&self, parameters_checksum: &str) -> Result<String> {
        let mut h = Sha256::new();
        h.update(self.canonical_json()?.as_bytes());
        h.update(b"\n");
        h.update(parameters_checksum.as_bytes());
        Ok(hex::encode(h.finalize())[..16].to_string())
    }
}

fn flatten(prefix: &str, v: &Value, out: &mut BTreeMap<String, String>) {
    match v {
        Value::Object(map) => {
            for (k, x) in map {
                let p = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(&p, x, out);
            }
        }
        Value::Array(items) => {
            for (i, x) in items.iter().enumerate() {
                flatten(&format!("{prefix}[{i}]"), x, out);
            }
            if items.is_empty() {
                out.insert(prefix.to_string(), "[]".into());
            }
        }
        x => {
            out.insert(prefix.to_string(), x.to_string());
        }
    }
}

/// Keys whose values differ, as `key: old -> new` lines; the output
/// directory is ignored.
pub fn config_diff(old: &RunConfig, new: &RunConfig) -> Result<Vec<String>> {
    let mut a = BTreeMap::new();
    let mut b = BTreeMap::new();
    flatten("", &serde_json::from_str(&old.canonical_json()?)?, &mut a);
    flatten("", &serde_json::from_str(&new.canonical_json()?)?, &mut b);
    let mut keys: Vec<&String> = a.keys().chain(b.keys()).collect();
    keys.sort();
    keys.dedup();
    let missing = "(absent)".to_string();
    Ok(keys
        .into_iter()
        .filter_map(|k| {
            let x = a.get(k).unwrap_or(&missing);
            let y = b.get(k).unwrap_or(&missing);
            (x != y).then(|| format!("{k}: {x} -> {y}"))
        })
        .collect())
}
