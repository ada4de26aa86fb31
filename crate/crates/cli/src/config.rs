//! Run configuration: a JSON file plus command-line overrides, resolved to
//! a complete config that is written next to the outputs.

use std::fmt;
use std::path::{Path, PathBuf};

use bifkit::family::PresetParams;
use bifkit::words::AtomSpec;
use bifkit::{Complex64 as C, EpsilonRule, FamilySpec, ParamGrid, Window, WordMeasure};
use serde::{Deserialize, Serialize};

/// Seed used when neither the file nor the flags give one.
pub const DEFAULT_SEED: u64 = 0x5eed_b1f0;

/// Grid side used when no grid is given.
pub const DEFAULT_PIXELS: usize = 128;

/// Where the family comes from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FamilySource {
    Preset {
        preset: String,
        #[serde(default, skip_serializing_if = "is_default_params")]
        params: PresetParams,
    },
    File {
        file: PathBuf,
    },
}

fn is_default_params(p: &PresetParams) -> bool {
    *p == PresetParams::default()
}

/// Every knob of every subcommand. Absent fields take per-command
/// defaults during resolution.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family: Option<FamilySource>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub measure: Option<Vec<AtomSpec>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub word: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub with: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub words: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_field: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m_field: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bif_cache: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coarsen: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_list: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps_rule: Option<EpsilonRule>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

/// A configuration problem, tied to the field that caused it.
#[derive(Debug)]
pub struct ConfigError {
    pub field: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(field: &str, message: impl Into<String>) -> Self {
        ConfigError { field: field.to_string(), message: message.into() }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config error in `{}`: {}", self.field, self.message)
    }
}

pub type ConfigResult<T> = std::result::Result<T, ConfigError>;

impl RunConfig {
    pub fn load(path: &Path) -> ConfigResult<RunConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::new("config", format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| ConfigError::new("config", format!("{}: {e}", path.display())))
    }

    /// Fields set in `other` win.
    pub fn overlay(mut self, other: RunConfig) -> RunConfig {
        macro_rules! take {
            ($($f:ident),*) => { $( if other.$f.is_some() { self.$f = other.$f; } )* };
        }
        take!(family, measure, grid, seed, n, m, t, word, with, words, n_field, m_field, bif_cache, tol, coarsen,
              lambda, n_list, eps_rule, epsilon, gamma, out);
        self
    }

    pub fn family_spec(&self) -> ConfigResult<FamilySpec> {
        match self.family.as_ref().ok_or_else(|| ConfigError::new("family", "no family given"))? {
            FamilySource::Preset { preset, params } => {
                FamilySpec::preset(preset, params).map_err(|e| ConfigError::new("family.preset", e.to_string()))
            }
            FamilySource::File { file } => {
                if !file.exists() {
                    return Err(ConfigError::new("family.file", format!("no such file: {}", file.display())));
                }
                FamilySpec::from_file(file)
                    .map_err(|e| ConfigError::new("family.file", format!("{}: {e}", file.display())))
            }
        }
    }

    pub fn measure_for(&self, spec: &FamilySpec) -> ConfigResult<WordMeasure> {
        match &self.measure {
            None => Ok(WordMeasure::uniform_symmetric(spec.generator_count() as u16)),
            Some(atoms) => {
                WordMeasure::from_spec(atoms, spec.names()).map_err(|e| ConfigError::new("measure", e.to_string()))
            }
        }
    }

    pub fn grid_value(&self) -> ConfigResult<ParamGrid> {
        let s = self.grid.as_deref().ok_or_else(|| ConfigError::new("grid", "no grid given"))?;
        ParamGrid::parse(s).map_err(|e| ConfigError::new("grid", e.to_string()))
    }

    pub fn t_value(&self) -> ConfigResult<C> {
        parse_complex(self.t.as_deref().unwrap_or("4,0")).map_err(|m| ConfigError::new("t", m))
    }

    pub fn lambda_value(&self) -> ConfigResult<C> {
        let s = self.lambda.as_deref().ok_or_else(|| ConfigError::new("lambda", "no parameter given"))?;
        parse_complex(s).map_err(|m| ConfigError::new("lambda", m))
    }

    pub fn out_dir(&self) -> ConfigResult<&Path> {
        self.out.as_deref().ok_or_else(|| ConfigError::new("out", "no output directory given"))
    }

    /// Fills every field the command reads, so the persisted copy reruns
    /// the same computation without relying on defaults.
    pub fn resolve(mut self, cmd: Command) -> ConfigResult<RunConfig> {
        if self.family.is_none() {
            self.family = Some(FamilySource::Preset { preset: "riley".into(), params: PresetParams::default() });
        }
        if let Some(FamilySource::File { file }) = &mut self.family {
            if !file.exists() {
                return Err(ConfigError::new("family.file", format!("no such file: {}", file.display())));
            }
            *file = file
                .canonicalize()
                .map_err(|e| ConfigError::new("family.file", format!("{}: {e}", file.display())))?;
        }
        let spec = self.family_spec()?;
        self.measure_for(&spec)?;
        self.seed.get_or_insert(DEFAULT_SEED);
        self.out_dir()?;
        let window = spec.window().unwrap_or(Window::new(C::new(0.0, 0.0), 4.0, 4.0));
        let uses_grid = !matches!(cmd, Command::Stats);
        if uses_grid {
            if self.grid.is_none() {
                let c = window.center_c();
                self.grid = Some(format!(
                    "{},{},{},{},{},{}",
                    c.re, c.im, window.width, window.height, DEFAULT_PIXELS, DEFAULT_PIXELS
                ));
            }
            self.grid_value()?;
        }
        match cmd {
            Command::Lyap | Command::Bif => {
                self.n.get_or_insert(50);
                self.m.get_or_insert(200);
            }
            Command::Zeros | Command::Collide => {
                if matches!(cmd, Command::Zeros) {
                    self.t.get_or_insert_with(|| "4,0".into());
                    self.t_value()?;
                }
                self.tol.get_or_insert(1e-10);
                if self.word.is_some() {
                    if matches!(cmd, Command::Collide) && self.with.is_none() {
                        return Err(ConfigError::new("with", "an explicit collision needs a second word"));
                    }
                } else {
                    if self.with.is_some() {
                        return Err(ConfigError::new("with", "needs `word` as well"));
                    }
                    self.n.get_or_insert(15);
                    self.words.get_or_insert(10);
                    self.n_field.get_or_insert(60);
                    self.m_field.get_or_insert(400);
                    self.coarsen.get_or_insert(8);
                    if let Some(dir) = &mut self.bif_cache {
                        *dir = dir
                            .canonicalize()
                            .map_err(|e| ConfigError::new("bif_cache", format!("{}: {e}", dir.display())))?;
                    }
                }
            }
            Command::Stats => {
                if self.lambda.is_none() {
                    let c = window.center_c();
                    self.lambda = Some(format!("{},{}", c.re, c.im));
                }
                self.lambda_value()?;
                self.n_list.get_or_insert_with(|| vec![25, 50, 100, 200]);
                self.m.get_or_insert(10_000);
                self.eps_rule.get_or_insert(EpsilonRule::Power { c: 1.0, alpha: 1.0 });
                self.epsilon.get_or_insert(0.2);
                self.gamma.get_or_insert(0.1);
                self.n.get_or_insert(100);
            }
            Command::Typechange => {
                self.n.get_or_insert(20);
                self.m.get_or_insert(20);
            }
        }
        self.check_ranges()?;
        Ok(self)
    }

    fn check_ranges(&self) -> ConfigResult<()> {
        let positive = |field: &str, v: Option<usize>| match v {
            Some(0) => Err(ConfigError::new(field, "must be positive")),
            _ => Ok(()),
        };
        positive("n", self.n)?;
        positive("m", self.m)?;
        positive("words", self.words)?;
        positive("n_field", self.n_field)?;
        positive("m_field", self.m_field)?;
        positive("coarsen", self.coarsen)?;
        if let Some(list) = &self.n_list {
            if list.is_empty() || list.contains(&0) {
                return Err(ConfigError::new("n_list", "needs positive lengths"));
            }
        }
        for (field, v) in [("tol", self.tol), ("epsilon", self.epsilon), ("gamma", self.gamma)] {
            if let Some(x) = v {
                if !(x > 0.0) || !x.is_finite() {
                    return Err(ConfigError::new(field, format!("must be positive, got {x}")));
                }
            }
        }
        Ok(())
    }
}

/// Subcommand identity, used for defaults.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Lyap,
    Bif,
    Zeros,
    Collide,
    Stats,
    Typechange,
}

/// Parses `"re,im"` or a bare real number.
pub fn parse_complex(s: &str) -> std::result::Result<C, String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let num = |p: &str| p.parse::<f64>().map_err(|_| format!("bad number `{p}` in `{s}`"));
    match parts.as_slice() {
        [re] => Ok(C::new(num(re)?, 0.0)),
        [re, im] => Ok(C::new(num(re)?, num(im)?)),
        _ => Err(format!("expected `re,im`, got `{s}`")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_win_over_file() {
        let file: RunConfig = serde_json::from_str(r#"{"n": 10, "m": 5, "seed": 3}"#).unwrap();
        let flags = RunConfig { n: Some(20), ..Default::default() };
        let merged = file.overlay(flags);
        assert_eq!((merged.n, merged.m, merged.seed), (Some(20), Some(5), Some(3)));
    }

    #[test]
    fn unknown_fields_are_rejected() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"nn": 1}"#).is_err());
    }

    #[test]
    fn resolution_makes_the_seed_explicit() {
        let cfg = RunConfig { out: Some("x".into()), ..Default::default() }.resolve(Command::Lyap).unwrap();
        assert_eq!(cfg.seed, Some(DEFAULT_SEED));
        assert_eq!(cfg.grid.as_deref(), Some("-3,0,10,10,128,128"));
        let again = serde_json::from_str::<RunConfig>(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(again.resolve(Command::Lyap).unwrap(), cfg);
    }

    #[test]
    fn family_sources_parse() {
        let p: FamilySource = serde_json::from_str(r#"{"preset": "schottky", "params": {"s": 3}}"#).unwrap();
        assert!(matches!(p, FamilySource::Preset { ref preset, .. } if preset == "schottky"));
        let f: FamilySource = serde_json::from_str(r#"{"file": "fam.json"}"#).unwrap();
        assert_eq!(f, FamilySource::File { file: "fam.json".into() });
    }

    #[test]
    fn complex_parsing() {
        assert_eq!(parse_complex("4,0").unwrap(), C::new(4.0, 0.0));
        assert_eq!(parse_complex("-1.5, 2").unwrap(), C::new(-1.5, 2.0));
        assert_eq!(parse_complex("2").unwrap(), C::new(2.0, 0.0));
        assert!(parse_complex("a,b").is_err());
    }

    #[test]
    fn missing_spec_file_names_the_path() {
        let cfg = RunConfig {
            family: Some(FamilySource::File { file: "/nonexistent/fam.json".into() }),
            out: Some("x".into()),
            ..Default::default()
        };
        let err = cfg.resolve(Command::Lyap).unwrap_err();
        assert_eq!(err.field, "family.file");
        assert!(err.to_string().contains("/nonexistent/fam.json"));
    }
}
