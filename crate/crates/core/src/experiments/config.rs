//! Plain-text `key = value` experiment configuration.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::spde::{MaternParams, Preconditioner, SolverConfig};
use crate::whitenoise::CouplingMode;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Experiment {
    Hierarchy,
    MaternConvergence,
    Covariance,
    Telescope,
    Rates,
    Mlmc,
    McCompare,
    PRefine,
}

impl Experiment {
    pub const ALL: [Experiment; 8] = [
        Self::Hierarchy,
        Self::MaternConvergence,
        Self::Covariance,
        Self::Telescope,
        Self::Rates,
        Self::Mlmc,
        Self::McCompare,
        Self::PRefine,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Hierarchy => "hierarchy",
            Self::MaternConvergence => "matern-convergence",
            Self::Covariance => "covariance",
            Self::Telescope => "telescope",
            Self::Rates => "rates",
            Self::Mlmc => "mlmc",
            Self::McCompare => "mc-compare",
            Self::PRefine => "p-refine",
        }
    }

    fn default_levels(self) -> LevelRange {
        match self {
            Self::Hierarchy | Self::Mlmc | Self::McCompare => LevelRange::new(1, 6),
            Self::MaternConvergence | Self::Rates => LevelRange::new(3, 6),
            Self::Covariance => LevelRange::new(5, 5),
            Self::Telescope => LevelRange::new(2, 6),
            Self::PRefine => LevelRange::new(1, 3),
        }
    }

    fn default_qoi(self) -> Qoi {
        match self {
            Self::MaternConvergence | Self::Telescope | Self::Covariance | Self::Hierarchy => Qoi::MaternNorm,
            Self::Rates | Self::Mlmc | Self::McCompare | Self::PRefine => Qoi::Darcy,
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown experiment '{s}'")))
    }
}

/// Quantity of interest sampled on each level.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Qoi {
    /// `||u||^2` over the inner domain.
    MaternNorm,
    /// `||q||^2` of the lognormal Darcy solution over the inner domain.
    Darcy,
}

impl FromStr for Qoi {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "matern" => Ok(Self::MaternNorm),
            "darcy" => Ok(Self::Darcy),
            _ => Err(Error::Config(format!("unknown qoi '{s}' (expected matern or darcy)"))),
        }
    }
}

impl fmt::Display for Qoi {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::MaternNorm => "matern",
            Self::Darcy => "darcy",
        })
    }
}

/// Inclusive level range. `"5"` means `1..=5`, `"2..6"` means `2..=6`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LevelRange {
    pub min: usize,
    pub max: usize,
}

impl LevelRange {
    pub fn new(min: usize, max: usize) -> Self {
        Self { min, max }
    }

    pub fn to_vec(self) -> Vec<usize> {
        (self.min..=self.max).collect()
    }

    pub fn len(self) -> usize {
        self.max + 1 - self.min
    }

    pub fn is_empty(self) -> bool {
        self.max < self.min
    }
}

impl FromStr for LevelRange {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("invalid level range '{s}' (expected N or A..B)"));
        let (min, max) = match s.split_once("..") {
            Some((a, b)) => (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?),
            None => (1, s.trim().parse().map_err(|_| bad())?),
        };
        if min == 0 || max < min {
            return Err(bad());
        }
        Ok(Self { min, max })
    }
}

impl fmt::Display for LevelRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}..{}", self.min, self.max)
    }
}

/// All experiment settings. Options left unset take per-experiment defaults.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub levels: Option<LevelRange>,
    pub base_nx: usize,
    pub amplitude: f64,
    pub mesh_seed: u64,
    pub seed: u64,
    pub sigma: f64,
    pub nu: f64,
    pub lambda: f64,
    /// Lagrange degree of the field; defaults to the SPDE order.
    pub degree: Option<usize>,
    /// Lagrange degree of the Darcy solution.
    pub darcy_degree: usize,
    pub qoi: Option<Qoi>,
    pub coupling: CouplingMode,
    /// Samples per level for fixed-N studies.
    pub n: usize,
    pub epsilon: Vec<f64>,
    pub start_level: usize,
    pub initial_levels: usize,
    pub initial_n: usize,
    pub max_levels: usize,
    pub mc_pilot: usize,
    pub anchor: [f64; 2],
    pub probes: usize,
    pub r_max: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub preconditioner: Preconditioner,
    pub threads: Option<usize>,
    pub out: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            levels: None,
            base_nx: 4,
            amplitude: 0.2,
            mesh_seed: 1,
            seed: 1,
            sigma: 1.0,
            nu: 1.0,
            lambda: 0.2,
            degree: None,
            darcy_degree: 1,
            qoi: None,
            coupling: CouplingMode::Supermesh,
            n: 2000,
            epsilon: vec![4e-5, 2e-5, 1e-5],
            start_level: 2,
            initial_levels: 2,
            initial_n: 20,
            max_levels: 10,
            mc_pilot: 100,
            anchor: [0.0, 0.0],
            probes: 10,
            r_max: 0.4,
            tol: 1e-10,
            max_iter: 20_000,
            preconditioner: Preconditioner::Jacobi,
            threads: None,
            out: PathBuf::from("out"),
        }
    }
}

/// Keys accepted by [`ExperimentConfig::set`].
pub const KEYS: &[&str] = &[
    "levels",
    "base_nx",
    "amplitude",
    "mesh_seed",
    "seed",
    "sigma",
    "nu",
    "lambda",
    "degree",
    "darcy_degree",
    "qoi",
    "coupling",
    "n",
    "epsilon",
    "start_level",
    "initial_levels",
    "initial_n",
    "max_levels",
    "mc_pilot",
    "anchor",
    "probes",
    "r_max",
    "tol",
    "max_iter",
    "preconditioner",
    "threads",
    "out",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("invalid value '{value}' for key '{key}'")))
}

impl ExperimentConfig {
    /// Parses `key = value` lines; `#` starts a comment. Keys may appear once.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut seen = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", i + 1)))?;
            let key = key.trim();
            if let Some(prev) = seen.insert(key.to_string(), i + 1) {
                return Err(Error::Config(format!("line {}: key '{key}' already set on line {prev}", i + 1)));
            }
            cfg.set(key, value.trim())
                .map_err(|e| Error::Config(format!("line {}: {e}", i + 1)))?;
        }
        Ok(cfg)
    }

    pub fn from_file(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Sets one key from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "levels" => self.levels = Some(value.parse()?),
            "base_nx" => self.base_nx = parse(key, value)?,
            "amplitude" => self.amplitude = parse(key, value)?,
            "mesh_seed" => self.mesh_seed = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "sigma" => self.sigma = parse(key, value)?,
            "nu" => self.nu = parse(key, value)?,
            "lambda" => self.lambda = parse(key, value)?,
            "degree" => self.degree = Some(parse(key, value)?),
            "darcy_degree" => self.darcy_degree = parse(key, value)?,
            "qoi" => self.qoi = Some(value.parse()?),
            "coupling" => self.coupling = value.parse()?,
            "n" => self.n = parse(key, value)?,
            "epsilon" => {
                self.epsilon = value
                    .split(',')
                    .map(|v| parse(key, v))
                    .collect::<Result<Vec<f64>>>()?
            }
            "start_level" => self.start_level = parse(key, value)?,
            "initial_levels" => self.initial_levels = parse(key, value)?,
            "initial_n" => self.initial_n = parse(key, value)?,
            "max_levels" => self.max_levels = parse(key, value)?,
            "mc_pilot" => self.mc_pilot = parse(key, value)?,
            "anchor" => {
                let v: Vec<f64> = value.split(',').map(|v| parse(key, v)).collect::<Result<_>>()?;
                if v.len() != 2 {
                    return Err(Error::Config(format!("anchor needs two coordinates, got '{value}'")));
                }
                self.anchor = [v[0], v[1]];
            }
            "probes" => self.probes = parse(key, value)?,
            "r_max" => self.r_max = parse(key, value)?,
            "tol" => self.tol = parse(key, value)?,
            "max_iter" => self.max_iter = parse(key, value)?,
            "preconditioner" => self.preconditioner = value.parse()?,
            "threads" => self.threads = Some(parse(key, value)?),
            "out" => self.out = PathBuf::from(value),
            _ => return Err(Error::Config(format!("unknown key '{key}'"))),
        }
        Ok(())
    }

    pub fn levels_for(&self, exp: Experiment) -> LevelRange {
        self.levels.unwrap_or_else(|| exp.default_levels())
    }

    pub fn qoi_for(&self, exp: Experiment) -> Qoi {
        self.qoi.unwrap_or_else(|| exp.default_qoi())
    }

    pub fn matern(&self) -> Result<MaternParams> {
        MaternParams::new(self.sigma, self.nu, self.lambda).map_err(|e| Error::Config(e.to_string()))
    }

    /// Field degree: explicit, else the SPDE order capped at 3.
    pub fn field_degree(&self) -> Result<usize> {
        match self.degree {
            Some(d) => Ok(d),
            None => Ok(self.matern()?.order().map_err(|e| Error::Config(e.to_string()))?.min(3)),
        }
    }

    pub fn solver(&self) -> SolverConfig {
        SolverConfig {
            tol: self.tol,
            max_iter: self.max_iter,
            preconditioner: self.preconditioner,
        }
    }

    /// Checks everything an experiment needs before any work is done.
    pub fn validate(&self, exp: Experiment) -> Result<()> {
        let cfg = |m: String| Err(Error::Config(m));
        let levels = self.levels_for(exp);
        let params = self.matern()?;
        params.order().map_err(|e| Error::Config(e.to_string()))?;
        let degree = self.field_degree()?;
        if !(1..=3).contains(&degree) || !(1..=3).contains(&self.darcy_degree) {
            return cfg(format!("degrees must lie in 1..=3 (degree {degree}, darcy_degree {})", self.darcy_degree));
        }
        self.solver().validate()?;
        if self.base_nx == 0 || self.base_nx % 4 != 0 {
            return cfg(format!("base_nx must be a positive multiple of 4, got {}", self.base_nx));
        }
        if !(0.0..0.5).contains(&self.amplitude) {
            return cfg(format!("amplitude must lie in [0, 0.5), got {}", self.amplitude));
        }
        if self.threads == Some(0) {
            return cfg("threads must be positive".into());
        }
        if levels.max > 9 {
            return cfg(format!("at most 9 levels are supported, got {}", levels.max));
        }
        match exp {
            Experiment::Hierarchy => {}
            Experiment::MaternConvergence | Experiment::Rates => {
                if levels.len() < 3 {
                    return cfg(format!("{exp} needs at least three levels, got {levels}"));
                }
                if self.n < 2 {
                    return cfg("n must be at least 2".into());
                }
            }
            Experiment::Telescope => {
                if levels.min < 2 || self.n < 2 {
                    return cfg("telescope needs levels >= 2 and n >= 2".into());
                }
            }
            Experiment::Covariance => {
                if self.n < 2 || self.probes == 0 {
                    return cfg("covariance needs n >= 2 and at least one probe".into());
                }
                let half = 1.0 - self.anchor[0].abs().max(self.anchor[1].abs());
                if !(self.r_max > 0.0 && self.r_max < half) {
                    return cfg(format!("r_max must lie in (0, {half}) for anchor {:?}", self.anchor));
                }
            }
            Experiment::Mlmc | Experiment::McCompare => {
                if self.epsilon.is_empty() || self.epsilon.iter().any(|&e| !(e > 0.0 && e.is_finite())) {
                    return cfg("epsilon must be a non-empty list of positive values".into());
                }
                if self.start_level == 0 || self.start_level > levels.max {
                    return cfg(format!("start_level {} outside 1..={}", self.start_level, levels.max));
                }
                if self.initial_levels == 0 || self.start_level + self.initial_levels - 1 > levels.max {
                    return cfg(format!(
                        "initial_levels {} from start_level {} exceeds {} levels",
                        self.initial_levels, self.start_level, levels.max
                    ));
                }
                if self.initial_n < 2 || self.mc_pilot < 2 || self.max_levels < self.initial_levels {
                    return cfg("initial_n and mc_pilot must be >= 2 and max_levels >= initial_levels".into());
                }
            }
            Experiment::PRefine => {
                if levels.max > 3 || levels.len() < 2 {
                    return cfg(format!("p-refine degrees must span at least two of 1..=3, got {levels}"));
                }
                if self.n < 2 {
                    return cfg("n must be at least 2".into());
                }
            }
        }
        Ok(())
    }

    /// `key = value` lines of the effective settings for `exp`.
    pub fn describe(&self, exp: Experiment) -> Vec<(String, String)> {
        let eps: Vec<String> = self.epsilon.iter().map(|e| format!("{e:e}")).collect();
        let degree = self.field_degree().map_or_else(|_| "invalid".into(), |d| d.to_string());
        let pairs: Vec<(&str, String)> = vec![
            ("experiment", exp.name().into()),
            ("levels", self.levels_for(exp).to_string()),
            ("base_nx", self.base_nx.to_string()),
            ("amplitude", self.amplitude.to_string()),
            ("mesh_seed", self.mesh_seed.to_string()),
            ("seed", self.seed.to_string()),
            ("sigma", self.sigma.to_string()),
            ("nu", self.nu.to_string()),
            ("lambda", self.lambda.to_string()),
            ("degree", degree),
            ("darcy_degree", self.darcy_degree.to_string()),
            ("qoi", self.qoi_for(exp).to_string()),
            ("coupling", self.coupling.to_string()),
            ("n", self.n.to_string()),
            ("epsilon", eps.join(",")),
            ("start_level", self.start_level.to_string()),
            ("initial_levels", self.initial_levels.to_string()),
            ("initial_n", self.initial_n.to_string()),
            ("max_levels", self.max_levels.to_string()),
            ("mc_pilot", self.mc_pilot.to_string()),
            ("anchor", format!("{},{}", self.anchor[0], self.anchor[1])),
            ("probes", self.probes.to_string()),
            ("r_max", self.r_max.to_string()),
            ("tol", format!("{:e}", self.tol)),
            ("max_iter", self.max_iter.to_string()),
            (
                "preconditioner",
                match self.preconditioner {
                    Preconditioner::Jacobi => "jacobi".into(),
                    Preconditioner::None => "none".into(),
                },
            ),
        ];
        pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_keys_comments_and_ranges() {
        let cfg = ExperimentConfig::parse("# demo\nlevels = 2..5\nnu = 3 # smooth\nepsilon = 1e-3, 5e-4\ncoupling = injection\n")
            .unwrap();
        assert_eq!(cfg.levels, Some(LevelRange::new(2, 5)));
        assert_eq!(cfg.nu, 3.0);
        assert_eq!(cfg.epsilon, vec![1e-3, 5e-4]);
        assert_eq!(cfg.coupling, CouplingMode::Injection);
        assert_eq!(cfg.field_degree().unwrap(), 2);
        assert_eq!("4".parse::<LevelRange>().unwrap(), LevelRange::new(1, 4));
    }

    #[test]
    fn rejects_bad_input() {
        for text in ["bogus = 1", "levels = 0", "levels = 5..2", "nu", "n = x", "seed = 1\nseed = 2", "coupling = magic"] {
            assert!(matches!(ExperimentConfig::parse(text), Err(Error::Config(_))), "{text}");
        }
        let mut cfg = ExperimentConfig {
            nu: 2.0,
            ..Default::default()
        };
        assert!(cfg.validate(Experiment::MaternConvergence).is_err());
        cfg.nu = 1.0;
        cfg.levels = Some(LevelRange::new(4, 5));
        assert!(cfg.validate(Experiment::Rates).is_err());
        assert!(cfg.validate(Experiment::Telescope).is_ok());
        cfg.levels = Some(LevelRange::new(1, 4));
        assert!(cfg.validate(Experiment::PRefine).is_err());
    }

    #[test]
    fn every_key_is_settable_and_described() {
        let cfg = ExperimentConfig::default();
        for exp in Experiment::ALL {
            assert!(cfg.validate(exp).is_ok(), "{exp}");
            assert_eq!(exp.name().parse::<Experiment>().unwrap(), exp);
        }
        let described: Vec<String> = cfg.describe(Experiment::Mlmc).into_iter().map(|(k, _)| k).collect();
        for key in KEYS {
            if !matches!(*key, "threads" | "out") {
                assert!(described.iter().any(|k| k == key), "{key}");
            }
        }
    }
}
