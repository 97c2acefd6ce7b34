//! Layered settings: flag > config file > `GRIDSYNTH_*` environment > default.
//!
//! Every layer is a set of `key = value` strings over one fixed key list;
//! typed parsing happens once, after merging.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;

use crate::datagen::{GeneratorSpec, TileSource};
use crate::error::{Error, Result};
use crate::grid::{DistanceConfig, Rgb};
use crate::synthesis::SynthesisConfig;

pub const ENV_PREFIX: &str = "GRIDSYNTH_";

/// Recognized keys, in echo order.
pub const KEYS: &[&str] = &[
    "grid_n",
    "cell_m",
    "k",
    "eps",
    "lambda",
    "min_cover",
    "early_stop",
    "hist_bins",
    "w_emd",
    "w_struct",
    "ignore_color",
    "oracle_budget",
    "seed",
    "threads",
    "background",
    "tol",
    "extend_backward",
    "extend_single",
    "noise",
    "tiles_per_label",
    "axis_maximal",
    "tile_dir",
    "spec",
    "count",
    "occlusion",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Env,
    File,
    Flag,
}

impl std::fmt::Display for Source {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Source::Env => "environment",
            Source::File => "config file",
            Source::Flag => "flag",
        })
    }
}

/// Merged raw values with their origin.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Settings {
    values: BTreeMap<&'static str, (String, Source)>,
}

fn known_key(key: &str) -> Option<&'static str> {
    KEYS.iter().copied().find(|k| *k == key)
}

/// `key = value` lines; `#` starts a comment; blank lines are skipped.
pub fn parse_config_file(text: &str) -> Result<Vec<(&'static str, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or_default().trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::parse(i + 1, "line", "expected `key = value`"))?;
        let key = key.trim();
        let known = known_key(key).ok_or_else(|| Error::parse(i + 1, key, "unknown key"))?;
        if out.iter().any(|(k, _)| *k == known) {
            return Err(Error::parse(i + 1, key, "key given twice"));
        }
        out.push((known, value.trim().to_string()));
    }
    Ok(out)
}

impl Settings {
    pub fn merge(
        env: impl Fn(&str) -> Option<String>,
        file: Option<&Path>,
        flags: Vec<(&'static str, String)>,
    ) -> Result<Self> {
        let mut s = Settings::default();
        for key in KEYS {
            if let Some(v) = env(&format!("{ENV_PREFIX}{}", key.to_ascii_uppercase())) {
                s.values.insert(key, (v, Source::Env));
            }
        }
        if let Some(path) = file {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            for (k, v) in parse_config_file(&text).map_err(|e| match e {
                Error::Parse { line, field, message } => Error::Config(format!(
                    "{}: line {line}: `{field}`: {message}",
                    path.display()
                )),
                other => other,
            })? {
                s.values.insert(k, (v, Source::File));
            }
        }
        for (k, v) in flags {
            s.values.insert(known_key(k).expect("flags map to known keys"), (v, Source::Flag));
        }
        Ok(s)
    }

    pub fn is_set(&self, key: &str) -> bool {
        self.values.contains_key(key)
    }

    pub fn source(&self, key: &str) -> Option<Source> {
        self.values.get(key).map(|(_, s)| *s)
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(|(v, _)| v.as_str())
    }

    fn parsed<T>(&self, key: &str, parse: impl Fn(&str) -> Option<T>, expected: &str) -> Result<Option<T>> {
        match self.values.get(key) {
            None => Ok(None),
            Some((v, src)) => parse(v).map(Some).ok_or_else(|| {
                Error::Config(format!("`{key}` (from {src}): expected {expected}, got `{v}`"))
            }),
        }
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.parsed(key, |v| v.parse().ok(), std::any::type_name::<T>())
    }

    pub fn get_bool(&self, key: &str) -> Result<Option<bool>> {
        self.parsed(key, parse_bool, "a boolean")
    }

    pub fn get_rgb(&self, key: &str) -> Result<Option<Rgb>> {
        self.parsed(key, parse_rgb, "`r,g,b`")
    }

    /// `none` clears the color.
    pub fn get_optional_rgb(&self, key: &str) -> Result<Option<Option<Rgb>>> {
        self.parsed(
            key,
            |v| if v.eq_ignore_ascii_case("none") { Some(None) } else { parse_rgb(v).map(Some) },
            "`r,g,b` or `none`",
        )
    }

    pub fn require<T: FromStr>(&self, key: &str, flag: &str) -> Result<T> {
        self.get(key)?
            .ok_or_else(|| Error::Config(format!("`{flag}` is required (or `{key}` in the config file)")))
    }

    pub fn synthesis_config(&self) -> Result<SynthesisConfig> {
        let d = SynthesisConfig::default();
        let dd = DistanceConfig::default();
        let cfg = SynthesisConfig {
            k: self.get("k")?.unwrap_or(d.k),
            eps: self.get("eps")?.unwrap_or(d.eps),
            lambda: self.get("lambda")?.unwrap_or(d.lambda),
            distance: DistanceConfig {
                hist_bins: self.get("hist_bins")?.unwrap_or(dd.hist_bins),
                w_emd: self.get("w_emd")?.unwrap_or(dd.w_emd),
                w_struct: self.get("w_struct")?.unwrap_or(dd.w_struct),
            },
            min_cover: self.get("min_cover")?.unwrap_or(d.min_cover),
            early_stop: self.get_bool("early_stop")?.unwrap_or(d.early_stop),
            ignore_color: self.get_optional_rgb("ignore_color")?.unwrap_or(d.ignore_color),
            oracle_budget: self.get("oracle_budget")?.unwrap_or(d.oracle_budget),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Starts from the `spec` JSON file when given; explicit keys override it.
    pub fn generator_spec(&self) -> Result<GeneratorSpec> {
        let mut spec = match self.get::<PathBuf>("spec")? {
            Some(path) => {
                let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
                serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
            }
            None => GeneratorSpec::default(),
        };
        if let Some(v) = self.get("grid_n")? {
            spec.grid_n = v;
        }
        if let Some(v) = self.get("cell_m")? {
            spec.cell_m = v;
        }
        if let Some(v) = self.get("k")? {
            spec.k = v;
        }
        if let Some(v) = self.get_bool("noise")? {
            spec.noise = v;
        }
        if let Some(v) = self.get("seed")? {
            spec.seed = v;
        }
        if let Some(v) = self.get("tiles_per_label")? {
            spec.tiles_per_label = v;
        }
        if let Some(v) = self.get_rgb("background")? {
            spec.background = v;
        }
        if let Some(v) = self.get_bool("axis_maximal")? {
            spec.axis_maximal = v;
        }
        if let Some(v) = self.get::<PathBuf>("tile_dir")? {
            spec.tile_source = TileSource::Directory(v);
        }
        spec.validate()?;
        Ok(spec)
    }

    /// Explicit values for output manifests. `threads` is left out so outputs
    /// do not depend on it.
    pub fn echo(&self) -> BTreeMap<String, String> {
        self.values
            .iter()
            .filter(|(k, _)| **k != "threads")
            .map(|(k, (v, _))| (k.to_string(), v.clone()))
            .collect()
    }
}

pub fn parse_bool(v: &str) -> Option<bool> {
    match v.to_ascii_lowercase().as_str() {
        "true" | "1" | "yes" | "on" => Some(true),
        "false" | "0" | "no" | "off" => Some(false),
        _ => None,
    }
}

pub fn parse_rgb(v: &str) -> Option<Rgb> {
    let parts: Vec<u8> = v.split(',').map(|p| p.trim().parse().ok()).collect::<Option<_>>()?;
    <[u8; 3]>::try_from(parts).ok()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn no_env(_: &str) -> Option<String> {
        None
    }

    #[test]
    fn config_file_parsing() {
        let got = parse_config_file("# comment\n\neps = 0.2   # trailing\nk=3\n").unwrap();
        assert_eq!(got, vec![("eps", "0.2".to_string()), ("k", "3".to_string())]);
        assert!(matches!(parse_config_file("nope = 1\n"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(parse_config_file("k = 1\nk = 2\n"), Err(Error::Parse { line: 2, .. })));
        assert!(parse_config_file("just words\n").is_err());
    }

    #[test]
    fn precedence_flag_file_env_default() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("c.conf");
        std::fs::write(&file, "eps = 0.2\nlambda = 0.3\n").unwrap();
        let env = |k: &str| match k {
            "GRIDSYNTH_EPS" => Some("0.1".to_string()),
            "GRIDSYNTH_LAMBDA" => Some("0.4".to_string()),
            "GRIDSYNTH_K" => Some("7".to_string()),
            _ => None,
        };
        let s = Settings::merge(env, Some(&file), vec![("eps", "0.05".into())]).unwrap();
        let cfg = s.synthesis_config().unwrap();
        assert_eq!((cfg.eps, cfg.lambda, cfg.k), (0.05, 0.3, 7));
        assert_eq!(cfg.min_cover, SynthesisConfig::default().min_cover);
        assert_eq!(s.source("eps"), Some(Source::Flag));
        assert_eq!(s.source("lambda"), Some(Source::File));
        assert_eq!(s.source("k"), Some(Source::Env));
    }

    #[test]
    fn typed_values_and_errors() {
        let flags = vec![
            ("ignore_color", "40, 40, 40".into()),
            ("early_stop", "off".into()),
            ("background", "1,2,3".into()),
        ];
        let s = Settings::merge(no_env, None, flags).unwrap();
        let cfg = s.synthesis_config().unwrap();
        assert_eq!(cfg.ignore_color, Some([40, 40, 40]));
        assert!(!cfg.early_stop);
        assert_eq!(s.get_rgb("background").unwrap(), Some([1, 2, 3]));

        let s = Settings::merge(no_env, None, vec![("ignore_color", "none".into())]).unwrap();
        assert_eq!(s.synthesis_config().unwrap().ignore_color, None);

        for (k, v) in [("eps", "abc"), ("k", "-1"), ("background", "1,2"), ("early_stop", "maybe"), ("eps", "-1")] {
            let s = Settings::merge(no_env, None, vec![(k, v.into())]).unwrap();
            let res = s.synthesis_config().and_then(|_| s.get_rgb("background")).and(Ok(()));
            assert!(matches!(res, Err(Error::Config(_))), "{k}={v}");
        }
    }

    #[test]
    fn generator_spec_layers_over_spec_file() {
        let dir = tempfile::tempdir().unwrap();
        let spec_path = dir.path().join("spec.json");
        std::fs::write(&spec_path, r#"{"grid_n": 7, "k": 5, "noise": false}"#).unwrap();
        let s = Settings::merge(
            no_env,
            None,
            vec![("spec", spec_path.display().to_string()), ("k", "4".into())],
        )
        .unwrap();
        let spec = s.generator_spec().unwrap();
        assert_eq!((spec.grid_n, spec.k, spec.noise, spec.cell_m), (7, 4, false, 16));
    }

    #[test]
    fn echo_excludes_threads() {
        let s = Settings::merge(no_env, None, vec![("threads", "4".into()), ("seed", "9".into())]).unwrap();
        let echo = s.echo();
        assert_eq!(echo.get("seed").map(String::as_str), Some("9"));
        assert!(!echo.contains_key("threads"));
    }
}
