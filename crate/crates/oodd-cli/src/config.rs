//! Experiment configuration: CLI flags, the key=value config file, and
//! validation against the mesh constraints.

use std::path::PathBuf;
use std::str::FromStr;

use oodd::coefficient::Geometry;
use oodd::error::{Error, Result};
use oodd::mesh::MeshHierarchy;
use oodd::precond::{lookup, NdCoarseMode};

#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub h: f64,
    pub coarse_h: f64,
    pub eps: f64,
    pub geometry: Geometry,
    pub mask_file: Option<PathBuf>,
    pub alpha: f64,
    pub beta: f64,
    pub p_values: Vec<f64>,
    pub n_samples: usize,
    pub base_seed: u64,
    pub tol: f64,
    pub maxit: usize,
    pub variants: Vec<String>,
    pub nd_coarse: NdCoarseMode,
    pub out_dir: PathBuf,
    /// Record wall times in samples.csv. Off by default so that repeated
    /// runs with the same config emit byte-identical files.
    pub timing: bool,
    /// Optional dictionary cache file, reused when its key matches.
    pub cache: Option<PathBuf>,
    /// Random test vectors per sample in the operator-deviation study.
    pub deviation_vectors: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            h: 1.0 / 64.0,
            coarse_h: 1.0 / 8.0,
            eps: 1.0 / 16.0,
            geometry: Geometry::Erasure,
            mask_file: None,
            alpha: 1.0,
            beta: 100.0,
            p_values: vec![0.02, 0.06, 0.10],
            n_samples: 50,
            base_seed: 7,
            tol: 1e-6,
            maxit: 200,
            variants: vec!["direct".into(), "nd".into(), "oo".into()],
            nd_coarse: NdCoarseMode::Frozen,
            out_dir: PathBuf::from("results"),
            timing: false,
            cache: None,
            deviation_vectors: 1,
        }
    }
}

/// Parses "1/64" or a plain decimal.
pub fn parse_fraction(s: &str) -> Result<f64> {
    let value = if let Some((num, den)) = s.split_once('/') {
        let num: f64 = num
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("bad fraction numerator in '{s}'")))?;
        let den: f64 = den
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("bad fraction denominator in '{s}'")))?;
        if den == 0.0 {
            return Err(Error::Config(format!("zero denominator in '{s}'")));
        }
        num / den
    } else {
        s.trim()
            .parse()
            .map_err(|_| Error::Config(format!("cannot parse number '{s}'")))?
    };
    Ok(value)
}

fn parse_list<T, F: Fn(&str) -> Result<T>>(s: &str, f: F) -> Result<Vec<T>> {
    s.split(',')
        .filter(|part| !part.trim().is_empty())
        .map(|part| f(part.trim()))
        .collect()
}

impl ExperimentConfig {
    /// Applies one key=value setting (flag name without the leading dashes).
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "h" => self.h = parse_fraction(value)?,
            "H" => self.coarse_h = parse_fraction(value)?,
            "eps" => self.eps = parse_fraction(value)?,
            "model" => self.geometry = Geometry::from_str(value)?,
            "mask-file" => self.mask_file = Some(PathBuf::from(value)),
            "alpha" => self.alpha = parse_fraction(value)?,
            "beta" => self.beta = parse_fraction(value)?,
            "p" => self.p_values = parse_list(value, parse_fraction)?,
            "samples" => {
                self.n_samples = value
                    .parse()
                    .map_err(|_| Error::Config(format!("bad sample count '{value}'")))?
            }
            "seed" => {
                self.base_seed = value
                    .parse()
                    .map_err(|_| Error::Config(format!("bad seed '{value}'")))?
            }
            "tol" => {
                self.tol = value
                    .parse()
                    .map_err(|_| Error::Config(format!("bad tolerance '{value}'")))?
            }
            "maxit" => {
                self.maxit = value
                    .parse()
                    .map_err(|_| Error::Config(format!("bad iteration cap '{value}'")))?
            }
            "variants" => self.variants = parse_list(value, |s| Ok(s.to_string()))?,
            "nd-coarse" => self.nd_coarse = NdCoarseMode::from_str(value)?,
            "out" => self.out_dir = PathBuf::from(value),
            "timing" => {
                self.timing = match value {
                    "measured" | "on" | "true" => true,
                    "off" | "false" => false,
                    other => {
                        return Err(Error::Config(format!(
                            "bad timing mode '{other}' (expected measured|off)"
                        )))
                    }
                }
            }
            "cache" => self.cache = Some(PathBuf::from(value)),
            "deviation-vectors" => {
                self.deviation_vectors = value
                    .parse()
                    .map_err(|_| Error::Config(format!("bad vector count '{value}'")))?
            }
            other => return Err(Error::Config(format!("unknown key '{other}'"))),
        }
        Ok(())
    }

    /// Loads a flat key=value file whose keys mirror the flag names.
    pub fn apply_file(&mut self, path: &std::path::Path) -> Result<()> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!(
                    "{}:{}: expected key=value, got '{line}'",
                    path.display(),
                    lineno + 1
                ))
            })?;
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    /// Validates mesh constraints and value ranges, returning the hierarchy.
    pub fn validate(&self) -> Result<MeshHierarchy> {
        let hier = MeshHierarchy::build(self.h, self.coarse_h, self.eps)?;
        if self.n_samples < 1 {
            return Err(Error::Config("samples must be >= 1".to_string()));
        }
        if self.tol.is_nan() || self.tol <= 0.0 {
            return Err(Error::Config("tol must be positive".to_string()));
        }
        if self.p_values.is_empty() {
            return Err(Error::Config("need at least one defect probability".to_string()));
        }
        for &p in &self.p_values {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("p = {p} outside [0, 1]")));
            }
        }
        if self.variants.is_empty() {
            return Err(Error::Config("need at least one variant".to_string()));
        }
        for v in &self.variants {
            if lookup(v).is_none() {
                return Err(Error::Config(format!("unknown variant '{v}'")));
            }
        }
        if self.geometry == Geometry::Custom && self.mask_file.is_none() {
            return Err(Error::Config(
                "model=custom requires --mask-file".to_string(),
            ));
        }
        Ok(hier)
    }
}

/// Parses `--flag value` pairs into a config, starting from the defaults.
/// A `--config FILE` flag applies the file's entries at that position.
pub fn parse_flags(args: &[String]) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::default();
    let mut i = 0;
    while i < args.len() {
        let flag = args[i]
            .strip_prefix("--")
            .ok_or_else(|| Error::Config(format!("expected a --flag, got '{}'", args[i])))?;
        let value = args
            .get(i + 1)
            .ok_or_else(|| Error::Config(format!("flag --{flag} is missing its value")))?;
        if flag == "config" {
            cfg.apply_file(std::path::Path::new(value))?;
        } else {
            cfg.set(flag, value)?;
        }
        i += 2;
    }
    Ok(cfg)
}
