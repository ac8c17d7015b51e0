//! Experiment configuration: a flat `key = value` file with `[section]` headers.
//!
//! Blank lines and lines starting with `#` or `;` are ignored. Keys are looked
//! up as `section.key`; keys before the first header live in the root section.
//! Unknown keys are rejected so that typos do not silently fall back to defaults.
//!
//! ```text
//! [grid]
//! nodes = 1024
//! x_max = 100
//!
//! [sampling]
//! mode = hrom-hyperdwr
//! tol = 1e-4
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::ecsw::TrainingMode;
use crate::error::{Result, RomError};
use crate::fom::{Grid1D, DEFAULT_FOM_TOL};
use crate::lspg::DEFAULT_ROM_TOL;
use crate::rbf::ParameterDomain;
use crate::sampler::{SamplerConfig, SamplerMode, SubsetPolicy, DEFAULT_MAX_CYCLES};

const KNOWN_KEYS: &[&str] = &[
    "grid.nodes",
    "grid.x_min",
    "grid.x_max",
    "parameters.b_min",
    "parameters.b_max",
    "parameters.a_min",
    "parameters.a_max",
    "sampling.mode",
    "sampling.tol",
    "sampling.k_initial",
    "sampling.max_cycles",
    "sampling.subset",
    "hyperreduction.training",
    "hyperreduction.nnls_eps",
    "solver.fom_tol",
    "solver.rom_tol",
    "validation.lattice",
    "validation.seed",
    "validation.jitter",
    "verify.b_test",
    "verify.eps_res",
    "verify.eps_jac",
    "greedy.work_budget",
    "greedy.probes",
    "output.dir",
];

/// Drops a `#` or `;` comment that starts the line or follows whitespace.
fn strip_comment(line: &str) -> &str {
    let bytes = line.as_bytes();
    for (i, &c) in bytes.iter().enumerate() {
        if (c == b'#' || c == b';') && (i == 0 || bytes[i - 1].is_ascii_whitespace()) {
            return &line[..i];
        }
    }
    line
}

/// Parsed `section.key -> value` pairs.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawConfig {
    entries: BTreeMap<String, String>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        let mut section = String::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = strip_comment(raw).trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| RomError::Config(format!("line {}: unterminated section header", lineno + 1)))?;
                section = name.trim().to_ascii_lowercase();
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| RomError::Config(format!("line {}: expected key = value, got {line:?}", lineno + 1)))?;
            let key = k.trim().to_ascii_lowercase();
            if key.is_empty() {
                return Err(RomError::Config(format!("line {}: empty key", lineno + 1)));
            }
            let full = if section.is_empty() {
                key
            } else {
                format!("{section}.{key}")
            };
            if entries.insert(full.clone(), v.trim().to_string()).is_some() {
                return Err(RomError::Config(format!("line {}: duplicate key {full}", lineno + 1)));
            }
        }
        Ok(Self { entries })
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    fn typed<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse::<T>()
                .map(Some)
                .map_err(|_| RomError::Config(format!("{key}: cannot parse {v:?}"))),
        }
    }

    fn list(&self, key: &str) -> Result<Option<Vec<f64>>> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => v
                .split(',')
                .map(|s| {
                    s.trim()
                        .parse::<f64>()
                        .map_err(|_| RomError::Config(format!("{key}: cannot parse list entry {s:?}")))
                })
                .collect::<Result<Vec<_>>>()
                .map(Some),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub nodes: usize,
    pub x_min: f64,
    pub x_max: f64,
    /// Source-rate range `b`.
    pub b_range: (f64, f64),
    /// Optional amplitude range; makes the parameter space two-dimensional.
    pub a_range: Option<(f64, f64)>,
    pub mode: SamplerMode,
    pub tol: f64,
    pub k_initial: usize,
    pub max_cycles: usize,
    pub subset: SubsetPolicy,
    pub training: TrainingMode,
    pub nnls_eps: f64,
    pub fom_tol: f64,
    pub rom_tol: f64,
    /// Validation points per parameter dimension.
    pub lattice: usize,
    pub seed: u64,
    /// Jitter interior validation points by up to a quarter spacing.
    pub jitter: bool,
    pub b_test: f64,
    pub eps_res: Vec<f64>,
    pub eps_jac: Vec<f64>,
    /// Greedy budget in work units; `None` means take it from an adaptive run.
    pub work_budget: Option<f64>,
    /// `b` values at which the greedy run tracks the functional.
    pub probes: Vec<f64>,
    pub out_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            nodes: 1024,
            x_min: 0.0,
            x_max: 100.0,
            b_range: (0.01, 0.1),
            a_range: None,
            mode: SamplerMode::Rom,
            tol: 1e-4,
            k_initial: 3,
            max_cycles: DEFAULT_MAX_CYCLES,
            subset: SubsetPolicy::All,
            training: TrainingMode::Jacobian,
            nnls_eps: 1e-6,
            fom_tol: DEFAULT_FOM_TOL,
            rom_tol: DEFAULT_ROM_TOL,
            lattice: 20,
            seed: 0,
            jitter: false,
            b_test: 0.044,
            eps_res: vec![1e-4, 1e-6, 1e-8],
            eps_jac: vec![1e-4, 1e-6, 1e-7],
            work_budget: None,
            probes: vec![0.0325, 0.055, 0.0775],
            out_dir: PathBuf::from("out"),
        }
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(RomError::Config(format!("{name} must be positive and finite, got {v}")))
    }
}

impl ExperimentConfig {
    pub fn from_raw(raw: &RawConfig) -> Result<Self> {
        if let Some(bad) = raw.keys().find(|k| !KNOWN_KEYS.contains(k)) {
            return Err(RomError::Config(format!("unknown key {bad}")));
        }
        let d = Self::default();
        let b_range = (
            raw.typed("parameters.b_min")?.unwrap_or(d.b_range.0),
            raw.typed("parameters.b_max")?.unwrap_or(d.b_range.1),
        );
        let a_range = match (raw.typed::<f64>("parameters.a_min")?, raw.typed::<f64>("parameters.a_max")?) {
            (Some(lo), Some(hi)) => Some((lo, hi)),
            (None, None) => None,
            _ => return Err(RomError::Config("parameters.a_min and a_max must be given together".into())),
        };
        let cfg = Self {
            nodes: raw.typed("grid.nodes")?.unwrap_or(d.nodes),
            x_min: raw.typed("grid.x_min")?.unwrap_or(d.x_min),
            x_max: raw.typed("grid.x_max")?.unwrap_or(d.x_max),
            b_range,
            a_range,
            mode: raw.typed("sampling.mode")?.unwrap_or(d.mode),
            tol: raw.typed("sampling.tol")?.unwrap_or(d.tol),
            k_initial: raw.typed("sampling.k_initial")?.unwrap_or(d.k_initial),
            max_cycles: raw.typed("sampling.max_cycles")?.unwrap_or(d.max_cycles),
            subset: match raw.get("sampling.subset") {
                None => d.subset,
                Some("all") => SubsetPolicy::All,
                Some("initial") => SubsetPolicy::InitialGrid,
                Some(other) => return Err(RomError::Config(format!("sampling.subset: expected all|initial, got {other:?}"))),
            },
            training: match raw.get("hyperreduction.training") {
                None => d.training,
                Some(v) => v.parse().map_err(|_| RomError::Config(format!("hyperreduction.training: {v:?}")))?,
            },
            nnls_eps: raw.typed("hyperreduction.nnls_eps")?.unwrap_or(d.nnls_eps),
            fom_tol: raw.typed("solver.fom_tol")?.unwrap_or(d.fom_tol),
            rom_tol: raw.typed("solver.rom_tol")?.unwrap_or(d.rom_tol),
            lattice: raw.typed("validation.lattice")?.unwrap_or(d.lattice),
            seed: raw.typed("validation.seed")?.unwrap_or(d.seed),
            jitter: raw.typed("validation.jitter")?.unwrap_or(d.jitter),
            b_test: raw.typed("verify.b_test")?.unwrap_or(d.b_test),
            eps_res: raw.list("verify.eps_res")?.unwrap_or(d.eps_res),
            eps_jac: raw.list("verify.eps_jac")?.unwrap_or(d.eps_jac),
            work_budget: raw.typed("greedy.work_budget")?.or(d.work_budget),
            probes: raw.list("greedy.probes")?.unwrap_or(d.probes),
            out_dir: raw.get("output.dir").map(PathBuf::from).unwrap_or(d.out_dir),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::from_raw(&RawConfig::parse(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| RomError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.nodes < 3 {
            return Err(RomError::Config(format!("grid.nodes must be at least 3, got {}", self.nodes)));
        }
        if !(self.x_min < self.x_max) {
            return Err(RomError::Config("grid.x_min must be below grid.x_max".into()));
        }
        for (name, v) in [
            ("sampling.tol", self.tol),
            ("solver.fom_tol", self.fom_tol),
            ("solver.rom_tol", self.rom_tol),
            ("hyperreduction.nnls_eps", self.nnls_eps),
        ] {
            positive(name, v)?;
        }
        if self.nnls_eps >= 1.0 {
            return Err(RomError::Config("hyperreduction.nnls_eps must be below 1".into()));
        }
        for &e in self.eps_res.iter().chain(&self.eps_jac) {
            positive("verify eps", e)?;
            if e >= 1.0 {
                return Err(RomError::Config(format!("verify eps {e} must be below 1")));
            }
        }
        if self.eps_res.is_empty() && self.eps_jac.is_empty() {
            return Err(RomError::Config("verify needs at least one NNLS tolerance".into()));
        }
        if self.k_initial < 2 {
            return Err(RomError::Config("sampling.k_initial must be at least 2".into()));
        }
        if self.lattice < 2 {
            return Err(RomError::Config("validation.lattice must be at least 2".into()));
        }
        if let Some(b) = self.work_budget {
            positive("greedy.work_budget", b)?;
        }
        self.parameter_domain()?;
        if !self.parameter_domain()?.contains(&self.test_point(self.b_test)) {
            return Err(RomError::Config(format!("verify.b_test {} lies outside the parameter domain", self.b_test)));
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<Grid1D> {
        Grid1D::new(self.nodes, self.x_min, self.x_max)
    }

    pub fn parameter_domain(&self) -> Result<ParameterDomain> {
        let r = match self.a_range {
            None => ParameterDomain::interval(self.b_range.0, self.b_range.1),
            Some((lo, hi)) => ParameterDomain::new(vec![self.b_range.0, lo], vec![self.b_range.1, hi]),
        };
        r.map_err(|e| RomError::Config(format!("parameter domain: {e}")))
    }

    /// Parameter point for a `b` value; the amplitude sits mid-range in 2D.
    pub fn test_point(&self, b: f64) -> Vec<f64> {
        match self.a_range {
            None => vec![b],
            Some((lo, hi)) => vec![b, 0.5 * (lo + hi)],
        }
    }

    pub fn sampler_config(&self, mode: SamplerMode) -> Result<SamplerConfig> {
        Ok(SamplerConfig {
            domain: self.parameter_domain()?,
            k_initial: self.k_initial,
            mode,
            tol: self.tol,
            nnls_eps: self.nnls_eps,
            training: self.training,
            subset: self.subset,
            fom_tol: self.fom_tol,
            rom_tol: self.rom_tol,
            max_cycles: self.max_cycles,
        })
    }

    /// Canonical `key = value` rendering, readable back by [`ExperimentConfig::parse`].
    pub fn to_text(&self) -> String {
        let list = |v: &[f64]| v.iter().map(|x| format!("{x:e}")).collect::<Vec<_>>().join(",");
        let mut s = String::new();
        s += &format!("[grid]\nnodes = {}\nx_min = {}\nx_max = {}\n\n", self.nodes, self.x_min, self.x_max);
        s += &format!("[parameters]\nb_min = {}\nb_max = {}\n", self.b_range.0, self.b_range.1);
        if let Some((lo, hi)) = self.a_range {
            s += &format!("a_min = {lo}\na_max = {hi}\n");
        }
        let subset = match self.subset {
            SubsetPolicy::All => "all",
            SubsetPolicy::InitialGrid => "initial",
        };
        s += &format!(
            "\n[sampling]\nmode = {}\ntol = {:e}\nk_initial = {}\nmax_cycles = {}\nsubset = {subset}\n\n",
            self.mode, self.tol, self.k_initial, self.max_cycles
        );
        s += &format!("[hyperreduction]\ntraining = {}\nnnls_eps = {:e}\n\n", self.training, self.nnls_eps);
        s += &format!("[solver]\nfom_tol = {:e}\nrom_tol = {:e}\n\n", self.fom_tol, self.rom_tol);
        s += &format!(
            "[validation]\nlattice = {}\nseed = {}\njitter = {}\n\n",
            self.lattice, self.seed, self.jitter
        );
        s += &format!(
            "[verify]\nb_test = {}\neps_res = {}\neps_jac = {}\n\n",
            self.b_test,
            list(&self.eps_res),
            list(&self.eps_jac)
        );
        s += "[greedy]\n";
        if let Some(b) = self.work_budget {
            s += &format!("work_budget = {b:e}\n");
        }
        s += &format!("probes = {}\n\n", list(&self.probes));
        s += &format!("[output]\ndir = {}\n", self.out_dir.display());
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        assert_eq!(ExperimentConfig::parse("").unwrap(), ExperimentConfig::default());
    }

    #[test]
    fn sections_and_comments() {
        let cfg = ExperimentConfig::parse(
            "# comment\n[sampling]\nmode = hrom-hyperdwr\ntol=1e-3\n\n; other\n[verify]\neps_jac = 1e-4, 1e-5\n",
        )
        .unwrap();
        assert_eq!(cfg.mode, SamplerMode::HromHyperDwr);
        assert_eq!(cfg.tol, 1e-3);
        assert_eq!(cfg.eps_jac, vec![1e-4, 1e-5]);
    }

    #[test]
    fn rejects_bad_input() {
        for bad in [
            "[sampling\nmode = rom",
            "[sampling]\nmode rom",
            "[sampling]\nmode = bogus",
            "[sampling]\ntol = -1",
            "[sampling]\ntol = 0",
            "[sampling]\ntol = 1\ntol = 2",
            "[sampling]\ncolour = red",
            "[parameters]\na_min = 0.5",
            "[parameters]\nb_min = 0.2",
            "[hyperreduction]\nnnls_eps = 1.5",
            "[verify]\neps_res = 1e-4, x",
        ] {
            assert!(
                matches!(ExperimentConfig::parse(bad), Err(RomError::Config(_))),
                "accepted {bad:?}"
            );
        }
    }

    #[test]
    fn inline_comments() {
        let cfg = ExperimentConfig::parse("[sampling]\nmode = rom # exact solves\ntol = 1e-3 ; loose\n").unwrap();
        assert_eq!(cfg.mode, SamplerMode::Rom);
        assert_eq!(cfg.tol, 1e-3);
    }

    #[test]
    fn text_round_trip() {
        let cfg = ExperimentConfig {
            a_range: Some((0.5, 1.5)),
            work_budget: Some(1.5e9),
            subset: SubsetPolicy::InitialGrid,
            ..ExperimentConfig::default()
        };
        let back = ExperimentConfig::parse(&cfg.to_text()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.parameter_domain().unwrap().dims(), 2);
        assert_eq!(back.test_point(0.044), vec![0.044, 1.0]);
    }
}
