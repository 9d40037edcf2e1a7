//! Versioned plain-text parameter files: one `name value` pair per line.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const FORMAT_TAG: &str = "tbhf-params";
pub const FORMAT_VERSION: u32 = 1;

pub const BUILTIN_SILICON: &str = "builtin:si-sp3d5s-star";
pub const BUILTIN_SINGLE_S: &str = "builtin:single-s";

const SILICON_TEXT: &str = include_str!("../../data/si_sp3d5s_star.tbp");
const SINGLE_S_TEXT: &str = include_str!("../../data/single_s.tbp");

/// Two-centre nearest-neighbour parameters of the 10-orbital model, eV.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SkParameters {
    pub onsite_s: f64,
    pub onsite_p: f64,
    pub onsite_d: f64,
    pub onsite_sstar: f64,
    /// Δ/3, the coefficient of L·σ on the p shell.
    pub spin_orbit_lambda: f64,
    pub ss_sigma: f64,
    pub sstar_sstar_sigma: f64,
    pub s_sstar_sigma: f64,
    pub s_p_sigma: f64,
    pub sstar_p_sigma: f64,
    pub s_d_sigma: f64,
    pub sstar_d_sigma: f64,
    pub pp_sigma: f64,
    pub pp_pi: f64,
    pub p_d_sigma: f64,
    pub p_d_pi: f64,
    pub dd_sigma: f64,
    pub dd_pi: f64,
    pub dd_delta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum ModelKind {
    Sp3d5sStar(SkParameters),
    SingleS { onsite: f64, hopping: f64 },
}

impl ModelKind {
    pub fn orbitals_per_atom(&self) -> usize {
        match self {
            ModelKind::Sp3d5sStar(_) => 10,
            ModelKind::SingleS { .. } => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParameterFile {
    pub kind: ModelKind,
    /// SHA-256 of the file bytes, hex.
    pub checksum: String,
    pub source: String,
}

pub fn checksum_of(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl ParameterFile {
    pub fn parse(text: &str, source: &str) -> Result<Self> {
        let mut values: BTreeMap<String, f64> = BTreeMap::new();
        let mut model = None;
        let mut version_seen = false;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            let bad = || Error::Parameters(format!("{source}:{}: cannot parse `{raw}`", lineno + 1));
            match fields.as_slice() {
                ["format", tag, version] => {
                    let v: u32 = version.parse().map_err(|_| bad())?;
                    if *tag != FORMAT_TAG || v != FORMAT_VERSION {
                        return Err(Error::Parameters(format!(
                            "{source}: unsupported format `{tag} {version}`"
                        )));
                    }
                    version_seen = true;
                }
                ["model", name] => model = Some(name.to_string()),
                [name, value] => {
                    let v: f64 = value.parse().map_err(|_| bad())?;
                    if !v.is_finite() {
                        return Err(bad());
                    }
                    if values.insert(name.to_string(), v).is_some() {
                        return Err(Error::Parameters(format!(
                            "{source}:{}: duplicate parameter `{name}`",
                            lineno + 1
                        )));
                    }
                }
                _ => return Err(bad()),
            }
        }
        if !version_seen {
            return Err(Error::Parameters(format!("{source}: missing format line")));
        }
        let model = model.ok_or_else(|| Error::Parameters(format!("{source}: missing model line")))?;
        let mut take = |name: &str| {
            values
                .remove(name)
                .ok_or_else(|| Error::Parameters(format!("{source}: missing parameter `{name}`")))
        };
        let kind = match model.as_str() {
            "sp3d5s_star" => ModelKind::Sp3d5sStar(SkParameters {
                onsite_s: take("onsite_s")?,
                onsite_p: take("onsite_p")?,
                onsite_d: take("onsite_d")?,
                onsite_sstar: take("onsite_sstar")?,
                spin_orbit_lambda: take("spin_orbit_lambda")?,
                ss_sigma: take("ss_sigma")?,
                sstar_sstar_sigma: take("sstar_sstar_sigma")?,
                s_sstar_sigma: take("s_sstar_sigma")?,
                s_p_sigma: take("s_p_sigma")?,
                sstar_p_sigma: take("sstar_p_sigma")?,
                s_d_sigma: take("s_d_sigma")?,
                sstar_d_sigma: take("sstar_d_sigma")?,
                pp_sigma: take("pp_sigma")?,
                pp_pi: take("pp_pi")?,
                p_d_sigma: take("p_d_sigma")?,
                p_d_pi: take("p_d_pi")?,
                dd_sigma: take("dd_sigma")?,
                dd_pi: take("dd_pi")?,
                dd_delta: take("dd_delta")?,
            }),
            "single_s" => ModelKind::SingleS {
                onsite: take("onsite_s")?,
                hopping: take("ss_sigma")?,
            },
            other => return Err(Error::Parameters(format!("{source}: unknown model `{other}`"))),
        };
        if let Some(extra) = values.keys().next() {
            return Err(Error::Parameters(format!("{source}: unknown parameter `{extra}`")));
        }
        Ok(ParameterFile {
            kind,
            checksum: checksum_of(text.as_bytes()),
            source: source.to_string(),
        })
    }

    /// Loads a file path or one of the `builtin:` names.
    pub fn load(reference: &str) -> Result<Self> {
        match reference {
            BUILTIN_SILICON => Self::parse(SILICON_TEXT, reference),
            BUILTIN_SINGLE_S => Self::parse(SINGLE_S_TEXT, reference),
            path => {
                let text = std::fs::read_to_string(Path::new(path)).map_err(|e| {
                    Error::Parameters(format!("cannot read parameter file {path}: {e}"))
                })?;
                Self::parse(&text, path)
            }
        }
    }

    pub fn silicon() -> Self {
        Self::parse(SILICON_TEXT, BUILTIN_SILICON).expect("bundled silicon table parses")
    }

    pub fn single_s() -> Self {
        Self::parse(SINGLE_S_TEXT, BUILTIN_SINGLE_S).expect("bundled single-s table parses")
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("format {FORMAT_TAG} {FORMAT_VERSION}\n");
        match &self.kind {
            ModelKind::Sp3d5sStar(p) => {
                out.push_str("model sp3d5s_star\n");
                let v = serde_json::to_value(p).expect("plain struct serializes");
                for (name, value) in v.as_object().expect("object") {
                    out.push_str(&format!("{name} {}\n", value.as_f64().expect("number")));
                }
            }
            ModelKind::SingleS { onsite, hopping } => {
                out.push_str(&format!("model single_s\nonsite_s {onsite}\nss_sigma {hopping}\n"));
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_tables_parse() {
        let si = ParameterFile::silicon();
        assert_eq!(si.kind.orbitals_per_atom(), 10);
        match si.kind {
            ModelKind::Sp3d5sStar(p) => {
                assert_eq!(p.onsite_s, -2.15168);
                assert_eq!(p.dd_delta, -1.81400);
            }
            _ => panic!("wrong model"),
        }
        assert_eq!(si.checksum.len(), 64);
        assert_eq!(ParameterFile::single_s().kind.orbitals_per_atom(), 1);
    }

    #[test]
    fn text_round_trip_preserves_values() {
        let si = ParameterFile::silicon();
        let again = ParameterFile::parse(&si.to_text(), "mem").unwrap();
        assert_eq!(si.kind, again.kind);
    }

    #[test]
    fn rejects_unknown_and_missing_names() {
        let text = "format tbhf-params 1\nmodel single_s\nonsite_s 1\nss_sigma -1\nbogus 2\n";
        assert!(ParameterFile::parse(text, "t").unwrap_err().to_string().contains("bogus"));
        let text = "format tbhf-params 1\nmodel single_s\nonsite_s 1\n";
        assert!(ParameterFile::parse(text, "t").unwrap_err().to_string().contains("ss_sigma"));
        let text = "format tbhf-params 2\nmodel single_s\nonsite_s 1\nss_sigma -1\n";
        assert!(ParameterFile::parse(text, "t").is_err());
    }

    #[test]
    fn checksum_tracks_bytes() {
        let a = ParameterFile::parse("format tbhf-params 1\nmodel single_s\nonsite_s 1\nss_sigma -1\n", "a").unwrap();
        let b = ParameterFile::parse("format tbhf-params 1\nmodel single_s\nonsite_s 1\nss_sigma -1.0\n", "b").unwrap();
        assert_eq!(a.kind, b.kind);
        assert_ne!(a.checksum, b.checksum);
    }
}
