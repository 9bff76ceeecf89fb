//! Flat `key=value` configuration grammar.
//!
//! One `key=value` pair per line; `#` starts a comment; blank lines are
//! ignored. List values are comma-separated. Example experiment config:
//!
//! ```text
//! # enhancer + scorer selection
//! enhancer=ras
//! scorer=ebo
//! temperature=1
//! profile=profile.ooda
//! seeds=1,2,3
//! ```

use std::collections::BTreeMap;

use crate::error::{OodError, Result};

/// Registered enhancer names accepted in configs.
pub const ENHANCER_NAMES: &[&str] = &[
    "ras",
    "ras_inhibit",
    "ras_excite",
    "react",
    "ash_p",
    "ash_b",
    "ash_s",
    "scale",
    "dice",
    "l2norm",
    "identity",
];

/// Registered scorer names accepted in configs.
pub const SCORER_NAMES: &[&str] = &[
    "ebo",
    "msp",
    "mls",
    "tempscale",
    "gen",
    "mds",
    "rmds",
    "vim",
];

/// Parses the grammar into ordered (key, value) pairs.
pub fn parse_kv(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = match raw.find('#') {
            Some(i) => &raw[..i],
            None => raw,
        };
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let Some(eq) = line.find('=') else {
            return Err(OodError::BadConfig {
                key: format!("line {}", lineno + 1),
                reason: format!("expected key=value, got `{line}`"),
            });
        };
        let key = line[..eq].trim();
        let value = line[eq + 1..].trim();
        if key.is_empty() {
            return Err(OodError::BadConfig {
                key: format!("line {}", lineno + 1),
                reason: "empty key".into(),
            });
        }
        out.push((key.to_string(), value.to_string()));
    }
    Ok(out)
}

/// Typed access over parsed pairs. Later occurrences of a key win.
#[derive(Debug, Clone, Default)]
pub struct KvMap {
    map: BTreeMap<String, String>,
}

impl KvMap {
    pub fn parse(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (k, v) in parse_kv(text)? {
            map.insert(k, v);
        }
        Ok(KvMap { map })
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.map.get(key).map(String::as_str)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.map.keys().map(String::as_str)
    }

    pub fn get_f64(&self, key: &str) -> Result<Option<f64>> {
        match self.map.get(key) {
            None => Ok(None),
            Some(v) => v.parse().map(Some).map_err(|_| OodError::BadConfig {
                key: key.into(),
                reason: format!("not a number: `{v}`"),
            }),
        }
    }

    pub fn get_usize(&self, key: &str) -> Result<Option<usize>> {
        match self.map.get(key) {
            None => Ok(None),
            Some(v) => v.parse().map(Some).map_err(|_| OodError::BadConfig {
                key: key.into(),
                reason: format!("not an integer: `{v}`"),
            }),
        }
    }

    pub fn get_u64(&self, key: &str) -> Result<Option<u64>> {
        match self.map.get(key) {
            None => Ok(None),
            Some(v) => v.parse().map(Some).map_err(|_| OodError::BadConfig {
                key: key.into(),
                reason: format!("not an integer: `{v}`"),
            }),
        }
    }

    pub fn get_bool(&self, key: &str) -> Result<Option<bool>> {
        match self.map.get(key).map(String::as_str) {
            None => Ok(None),
            Some("true") | Some("1") => Ok(Some(true)),
            Some("false") | Some("0") => Ok(Some(false)),
            Some(v) => Err(OodError::BadConfig {
                key: key.into(),
                reason: format!("not a boolean: `{v}`"),
            }),
        }
    }

    pub fn get_list<T: std::str::FromStr>(&self, key: &str) -> Result<Vec<T>> {
        let Some(v) = self.map.get(key) else {
            return Ok(Vec::new());
        };
        if v.trim().is_empty() {
            return Ok(Vec::new());
        }
        v.split(',')
            .map(|s| {
                s.trim().parse::<T>().map_err(|_| OodError::BadConfig {
                    key: key.into(),
                    reason: format!("bad list element `{}`", s.trim()),
                })
            })
            .collect()
    }

    /// Path values must be non-empty when present.
    pub fn get_path(&self, key: &str) -> Result<Option<String>> {
        match self.map.get(key) {
            None => Ok(None),
            Some(v) if v.is_empty() => Err(OodError::BadConfig {
                key: key.into(),
                reason: "path must be a non-empty string".into(),
            }),
            Some(v) => Ok(Some(v.clone())),
        }
    }
}

/// File locations referenced by an experiment config. CLI flags override
/// these when both are given.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigPaths {
    pub id: Option<String>,
    pub ood: Vec<String>,
    pub head: Option<String>,
    pub profile: Option<String>,
    /// ID training dump used to calibrate ReAct/DICE/l2norm when their
    /// parameters are not given directly.
    pub calibration: Option<String>,
    pub out: Option<String>,
}

/// Parsed experiment configuration: enhancer and scorer selection with their
/// parameters, layer targets for multi-layer shifting, seeds and paths.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub enhancer: String,
    pub scorer: String,
    pub percentile_p: Option<f64>,
    pub react_threshold_c: Option<f64>,
    pub dice_sparsity_p: Option<f64>,
    pub l2_target: Option<f64>,
    pub temperature: Option<f64>,
    pub gen_gamma: Option<f64>,
    pub gen_top_m: Option<usize>,
    pub mds_ridge: Option<f64>,
    pub vim_subspace_dim: Option<usize>,
    pub layer_targets: Vec<usize>,
    pub seeds: Vec<u64>,
    pub paths: ConfigPaths,
}

const KNOWN_KEYS: &[&str] = &[
    "enhancer",
    "scorer",
    "percentile_p",
    "react_threshold_c",
    "dice_sparsity_p",
    "l2_target",
    "temperature",
    "gen_gamma",
    "gen_top_m",
    "mds_ridge",
    "vim_subspace_dim",
    "layer_targets",
    "seeds",
    "id",
    "ood",
    "head",
    "profile",
    "calibration",
    "out",
];

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let kv = KvMap::parse(text)?;
        for key in kv.keys() {
            if !KNOWN_KEYS.contains(&key) {
                return Err(OodError::BadConfig {
                    key: key.into(),
                    reason: "unknown key".into(),
                });
            }
        }
        let enhancer = kv.get("enhancer").unwrap_or("identity").to_string();
        if !ENHANCER_NAMES.contains(&enhancer.as_str()) {
            return Err(OodError::BadConfig {
                key: "enhancer".into(),
                reason: format!("`{enhancer}` is not a registered enhancer"),
            });
        }
        let scorer = kv.get("scorer").unwrap_or("ebo").to_string();
        if !SCORER_NAMES.contains(&scorer.as_str()) {
            return Err(OodError::BadConfig {
                key: "scorer".into(),
                reason: format!("`{scorer}` is not a registered scorer"),
            });
        }
        let ood = match kv.get("ood") {
            Some(_) => kv.get_list::<String>("ood")?,
            None => Vec::new(),
        };
        if ood.iter().any(String::is_empty) {
            return Err(OodError::BadConfig {
                key: "ood".into(),
                reason: "path must be a non-empty string".into(),
            });
        }
        Ok(ExperimentConfig {
            enhancer,
            scorer,
            percentile_p: kv.get_f64("percentile_p")?,
            react_threshold_c: kv.get_f64("react_threshold_c")?,
            dice_sparsity_p: kv.get_f64("dice_sparsity_p")?,
            l2_target: kv.get_f64("l2_target")?,
            temperature: kv.get_f64("temperature")?,
            gen_gamma: kv.get_f64("gen_gamma")?,
            gen_top_m: kv.get_usize("gen_top_m")?,
            mds_ridge: kv.get_f64("mds_ridge")?,
            vim_subspace_dim: kv.get_usize("vim_subspace_dim")?,
            layer_targets: kv.get_list("layer_targets")?,
            seeds: kv.get_list("seeds")?,
            paths: ConfigPaths {
                id: kv.get_path("id")?,
                ood,
                head: kv.get_path("head")?,
                profile: kv.get_path("profile")?,
                calibration: kv.get_path("calibration")?,
                out: kv.get_path("out")?,
            },
        })
    }
}
