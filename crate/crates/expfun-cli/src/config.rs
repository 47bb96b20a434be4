//! Flat key=value experiment configuration with dotted key groups
//! (step.*, f.*, mc.*, ladder.*, ...). No nesting beyond one dot; '#' starts
//! a comment. Unknown keys are rejected by name.

use expfun::steps::StepModel;
use expfun::tilt::FSpec;
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fmt;

#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl std::error::Error for ConfigError {}

/// Every key the runner understands.
const KNOWN_KEYS: &[&str] = &[
    "step.kind",
    "step.spacing",
    "step.offsets",
    "step.probs",
    "step.mu",
    "step.sigma",
    "step.up",
    "step.down",
    "step.p_up",
    "step.beta",
    "step.scale",
    "step.shift",
    "f.k0",
    "f.theta",
    "f.c0",
    "mc.seed",
    "mc.nsim",
    "mc.workers",
    "mc.eps",
    "mc.horizon_cap",
    "ladder.n0",
    "ladder.rungs",
    "tau.method",
    "tau.k_max",
    "constants.k_max",
    "constants.nsim",
    "renewal.flavor",
    "renewal.x_max",
    "renewal.points",
    "renewal.chains",
    "renewal.cap",
];

/// Keys that steer execution only and do not enter the config hash, so the
/// same experiment hashes identically for any worker count.
const EXECUTION_ONLY_KEYS: &[&str] = &["mc.workers"];

#[derive(Clone, Debug, Default)]
pub struct Config {
    entries: BTreeMap<String, String>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut entries = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| ConfigError(format!("line {}: expected key=value", lineno + 1)))?;
            let key = key.trim();
            let value = value.trim();
            if !KNOWN_KEYS.contains(&key) {
                return Err(ConfigError(format!("unknown config key: {key}")));
            }
            entries.insert(key.to_string(), value.to_string());
        }
        Ok(Config { entries })
    }

    pub fn apply_override(&mut self, kv: &str) -> Result<(), ConfigError> {
        let (key, value) = kv
            .split_once('=')
            .ok_or_else(|| ConfigError(format!("override '{kv}' is not key=value")))?;
        let key = key.trim();
        if !KNOWN_KEYS.contains(&key) {
            return Err(ConfigError(format!("unknown config key: {key}")));
        }
        self.entries.insert(key.to_string(), value.trim().to_string());
        Ok(())
    }

    fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|s| s.as_str())
    }

    pub fn f64_or(&self, key: &str, default: f64) -> Result<f64, ConfigError> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|_| ConfigError(format!("{key}: bad float '{v}'"))),
        }
    }

    pub fn f64_req(&self, key: &str) -> Result<f64, ConfigError> {
        self.get(key)
            .ok_or_else(|| ConfigError(format!("missing required key {key}")))?
            .parse()
            .map_err(|_| ConfigError(format!("{key}: bad float")))
    }

    pub fn usize_or(&self, key: &str, default: usize) -> Result<usize, ConfigError> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|_| ConfigError(format!("{key}: bad integer '{v}'"))),
        }
    }

    pub fn u64_or(&self, key: &str, default: u64) -> Result<u64, ConfigError> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|_| ConfigError(format!("{key}: bad integer '{v}'"))),
        }
    }

    pub fn str_or<'a>(&'a self, key: &str, default: &'a str) -> &'a str {
        self.get(key).unwrap_or(default)
    }

    /// Hash of the experiment definition: sorted key=value lines, execution
    /// knobs excluded.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for (k, v) in &self.entries {
            if EXECUTION_ONLY_KEYS.contains(&k.as_str()) {
                continue;
            }
            h.update(k.as_bytes());
            h.update(b"=");
            h.update(v.as_bytes());
            h.update(b"\n");
        }
        hex::encode(&h.finalize()[..8])
    }

    pub fn model(&self) -> Result<StepModel, ConfigError> {
        let kind = self
            .get("step.kind")
            .ok_or_else(|| ConfigError("missing required key step.kind".into()))?;
        let model = match kind {
            "lattice" => {
                let spacing = self.f64_or("step.spacing", 1.0)?;
                let offsets = parse_list::<i64>(self.get("step.offsets"), "step.offsets")?;
                let probs = parse_list::<f64>(self.get("step.probs"), "step.probs")?;
                StepModel::lattice(spacing, offsets, probs)
            }
            "gaussian" => StepModel::gaussian(self.f64_req("step.mu")?, self.f64_req("step.sigma")?),
            "two_point" => StepModel::two_point(
                self.f64_req("step.up")?,
                self.f64_req("step.down")?,
                self.f64_req("step.p_up")?,
            ),
            "shifted_pareto" => StepModel::shifted_pareto(
                self.f64_req("step.beta")?,
                self.f64_or("step.scale", 1.0)?,
                self.f64_or("step.shift", 0.0)?,
            ),
            other => return Err(ConfigError(format!("step.kind: unknown kind '{other}'"))),
        };
        model.map_err(|e| ConfigError(e.to_string()))
    }

    pub fn fspec(&self) -> Result<FSpec, ConfigError> {
        FSpec::new(
            self.f64_or("f.k0", 1.0)?,
            self.f64_or("f.theta", 1.0)?,
            self.f64_or("f.c0", 1.0)?,
        )
        .map_err(|e| ConfigError(e.to_string()))
    }

    pub fn seed(&self) -> Result<u64, ConfigError> {
        self.u64_or("mc.seed", 1)
    }

    pub fn ladder(&self) -> Result<Vec<usize>, ConfigError> {
        let n0 = self.usize_or("ladder.n0", 64)?;
        let rungs = self.usize_or("ladder.rungs", 5)?;
        if n0 == 0 || rungs == 0 || rungs > 24 {
            return Err(ConfigError("ladder.n0 >= 1 and 1 <= ladder.rungs <= 24 required".into()));
        }
        Ok((0..rungs).map(|j| n0 << j).collect())
    }
}

fn parse_list<T: std::str::FromStr>(raw: Option<&str>, key: &str) -> Result<Vec<T>, ConfigError> {
    let raw = raw.ok_or_else(|| ConfigError(format!("missing required key {key}")))?;
    raw.split(',')
        .map(|p| p.trim().parse::<T>().map_err(|_| ConfigError(format!("{key}: bad entry '{p}'"))))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_hashes() {
        let text = "step.kind = lattice\nstep.offsets = -1, 1\nstep.probs = 0.5, 0.5\nmc.seed = 7\n# comment\n";
        let c = Config::parse(text).unwrap();
        assert_eq!(c.seed().unwrap(), 7);
        assert!(c.model().unwrap().is_symmetric());
        let h = c.hash();
        let mut c2 = Config::parse(text).unwrap();
        c2.apply_override("mc.workers=16").unwrap();
        assert_eq!(h, c2.hash(), "worker count must not change the config hash");
        c2.apply_override("mc.seed=8").unwrap();
        assert_ne!(h, c2.hash());
    }

    #[test]
    fn unknown_key_is_named() {
        let err = Config::parse("step.kindd = lattice\n").unwrap_err();
        assert!(err.0.contains("step.kindd"), "{err}");
    }

    #[test]
    fn geometric_ladder() {
        let mut c = Config::parse("").unwrap();
        c.apply_override("ladder.n0=32").unwrap();
        c.apply_override("ladder.rungs=4").unwrap();
        assert_eq!(c.ladder().unwrap(), vec![32, 64, 128, 256]);
    }
}
