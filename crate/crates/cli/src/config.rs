//! Experiment configuration files.
//!
//! A config is a TOML document whose top-level `experiment` key selects one
//! of the built-in experiments; every other key is optional and falls back to
//! the defaults below. Unknown keys are rejected.

use serde::{Deserialize, Serialize};
use tdse_core::als_solver::{AlsOptions, HalfStepOptions, PreconditionerForm};
use tdse_core::block_linalg::CgOptions;
use tdse_core::gaussian::{width_from_parts, GaussianSum, GaussianTerm, C64};
use tdse_core::greedy_solver::GreedyOptions;

use crate::CliError;

pub const EXPERIMENTS: [&str; 4] = ["als-random", "als-pathological", "greedy-1d", "greedy-3d"];

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "experiment", rename_all = "kebab-case")]
pub enum Config {
    AlsRandom(AlsRandomConfig),
    AlsPathological(AlsPathologicalConfig),
    #[serde(rename = "greedy-1d")]
    Greedy1d(GreedyConfig),
    #[serde(rename = "greedy-3d")]
    Greedy3d(GreedyConfig),
}

impl Config {
    pub fn name(&self) -> &'static str {
        match self {
            Config::AlsRandom(_) => "als-random",
            Config::AlsPathological(_) => "als-pathological",
            Config::Greedy1d(_) => "greedy-1d",
            Config::Greedy3d(_) => "greedy-3d",
        }
    }

    pub fn seed(&self) -> u64 {
        match self {
            Config::AlsRandom(c) => c.seed,
            Config::AlsPathological(c) => c.seed,
            Config::Greedy1d(c) | Config::Greedy3d(c) => c.seed,
        }
    }

    pub fn set_seed(&mut self, seed: u64) {
        match self {
            Config::AlsRandom(c) => c.seed = seed,
            Config::AlsPathological(c) => c.seed = seed,
            Config::Greedy1d(c) | Config::Greedy3d(c) => {
                c.seed = seed;
                c.greedy.seed = seed;
            }
        }
    }

    /// Default configuration of a built-in experiment.
    pub fn default_for(name: &str) -> Result<Self, CliError> {
        match name {
            "als-random" => Ok(Config::AlsRandom(AlsRandomConfig::default())),
            "als-pathological" => Ok(Config::AlsPathological(AlsPathologicalConfig::default())),
            "greedy-1d" => Ok(Config::Greedy1d(GreedyConfig::one_dimensional())),
            "greedy-3d" => Ok(Config::Greedy3d(GreedyConfig::three_dimensional())),
            other => Err(CliError::UnknownExperiment(other.to_string())),
        }
    }

    /// Parses and validates a config document.
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| CliError::Parse(e.to_string()))?;
        let name = match table.remove("experiment") {
            Some(toml::Value::String(s)) => s,
            Some(_) => return Err(CliError::Parse("`experiment` must be a string".into())),
            None => return Err(CliError::Parse("missing `experiment` key".into())),
        };
        let rest = toml::Value::Table(table);
        let parse_err = |e: toml::de::Error| CliError::Parse(e.to_string());
        let config = match name.as_str() {
            "als-random" => Config::AlsRandom(rest.try_into().map_err(parse_err)?),
            "als-pathological" => Config::AlsPathological(rest.try_into().map_err(parse_err)?),
            "greedy-1d" => Config::Greedy1d(GreedyConfig::merge(GreedyConfig::one_dimensional(), rest)?),
            "greedy-3d" => Config::Greedy3d(GreedyConfig::merge(GreedyConfig::three_dimensional(), rest)?),
            other => return Err(CliError::UnknownExperiment(other.to_string())),
        };
        let mut config = config;
        // the top-level seed drives every random choice of the run
        config.set_seed(config.seed());
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        match self {
            Config::AlsRandom(c) => {
                c.horizon.validate()?;
                check_ranks(&c.ranks, 40)?;
                c.als.validate()?;
                c.dirac_frenkel.validate()?;
                check(c.reference_steps_per_interval >= 1, "reference_steps_per_interval must be at least 1")
            }
            Config::AlsPathological(c) => {
                c.horizon.validate()?;
                check_ranks(&c.ranks, tdse_core::matrix_model::PATHOLOGICAL_SIZE)?;
                c.als.validate()?;
                c.dirac_frenkel.validate()?;
                check(c.noise_levels.iter().all(|&e| e >= 0.0 && e.is_finite()), "noise levels must be non-negative")?;
                check(
                    c.als_perturbation >= 0.0 && c.als_perturbation.is_finite(),
                    "als_perturbation must be non-negative",
                )?;
                check(
                    c.rk4_steps >= 1 && c.rk4_steps % c.horizon.intervals == 0,
                    "rk4_steps must be a multiple of intervals",
                )
            }
            Config::Greedy1d(c) => c.validate(1),
            Config::Greedy3d(c) => c.validate(3),
        }
    }
}

fn check(ok: bool, msg: &str) -> Result<(), CliError> {
    if ok {
        Ok(())
    } else {
        Err(CliError::InvalidParameter(msg.to_string()))
    }
}

fn check_ranks(ranks: &[usize], max: usize) -> Result<(), CliError> {
    check(!ranks.is_empty(), "ranks must be non-empty")?;
    check(ranks.iter().all(|&r| r >= 1 && r <= max), &format!("ranks must lie in 1..={max}"))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Horizon {
    pub t_final: f64,
    pub intervals: usize,
}

impl Horizon {
    fn validate(&self) -> Result<(), CliError> {
        check(self.t_final > 0.0 && self.t_final.is_finite(), "t_final must be positive")?;
        check(self.intervals >= 2, "intervals must be at least 2")
    }
}

impl Default for Horizon {
    fn default() -> Self {
        Self { t_final: 5.0, intervals: 200 }
    }
}

/// ALS settings; `preconditioner` is `auto`, `stiffness`, `mass` or a
/// non-negative number used as a fixed shift.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlsSection {
    pub sweeps: usize,
    pub rel_tol: f64,
    pub cg_tol: f64,
    pub cg_max_iterations: usize,
    pub preconditioner: String,
    pub orthonormalize: bool,
}

impl Default for AlsSection {
    fn default() -> Self {
        let d = AlsOptions::default();
        Self {
            sweeps: d.sweeps,
            rel_tol: d.rel_tol,
            cg_tol: d.half_step.cg.tol,
            cg_max_iterations: d.half_step.cg.max_iter,
            preconditioner: "auto".into(),
            orthonormalize: d.half_step.orthonormalize,
        }
    }
}

impl AlsSection {
    fn preconditioner_form(&self) -> Result<PreconditionerForm, CliError> {
        match self.preconditioner.as_str() {
            "auto" => Ok(PreconditionerForm::Auto),
            "stiffness" => Ok(PreconditionerForm::Stiffness),
            "mass" => Ok(PreconditionerForm::Mass),
            s => match s.parse::<f64>() {
                Ok(c) if c >= 0.0 && c.is_finite() => Ok(PreconditionerForm::Shifted(c)),
                _ => Err(CliError::InvalidParameter(format!("unknown preconditioner `{s}`"))),
            },
        }
    }

    fn validate(&self) -> Result<(), CliError> {
        check(self.sweeps >= 1, "sweeps must be at least 1")?;
        check(self.cg_tol > 0.0 && self.cg_tol < 1.0, "cg_tol must lie in (0, 1)")?;
        check(self.cg_max_iterations >= 1, "cg_max_iterations must be at least 1")?;
        check(self.rel_tol >= 0.0, "rel_tol must be non-negative")?;
        self.preconditioner_form().map(|_| ())
    }

    pub fn options(&self) -> AlsOptions {
        AlsOptions {
            sweeps: self.sweeps,
            rel_tol: self.rel_tol,
            half_step: HalfStepOptions {
                cg: CgOptions { tol: self.cg_tol, max_iter: self.cg_max_iterations },
                preconditioner: self.preconditioner_form().expect("validated"),
                orthonormalize: self.orthonormalize,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DfSection {
    /// Integrator steps per comparison interval.
    pub steps_per_interval: usize,
    /// RK4 substeps inside each K, S and L substep.
    pub substeps: usize,
}

impl Default for DfSection {
    fn default() -> Self {
        Self { steps_per_interval: 10, substeps: 4 }
    }
}

impl DfSection {
    fn validate(&self) -> Result<(), CliError> {
        check(self.steps_per_interval >= 1 && self.substeps >= 1, "integrator step counts must be at least 1")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlsRandomConfig {
    pub seed: u64,
    pub horizon: Horizon,
    pub ranks: Vec<usize>,
    pub singular_values: usize,
    pub als: AlsSection,
    pub dirac_frenkel: DfSection,
    /// RK4 steps per comparison interval for the dense reference.
    pub reference_steps_per_interval: usize,
}

impl Default for AlsRandomConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            horizon: Horizon::default(),
            ranks: (1..=10).collect(),
            singular_values: 10,
            als: AlsSection::default(),
            dirac_frenkel: DfSection::default(),
            reference_steps_per_interval: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlsPathologicalConfig {
    pub seed: u64,
    pub horizon: Horizon,
    pub ranks: Vec<usize>,
    /// Perturbation sizes of the Dirac-Frenkel arms; `0` is the unperturbed arm.
    pub noise_levels: Vec<f64>,
    /// Relative size of the perturbation added to the truncated-SVD ALS start.
    pub als_perturbation: f64,
    pub als: AlsSection,
    pub dirac_frenkel: DfSection,
    /// RK4 steps on the whole horizon for the closed-form check.
    pub rk4_steps: usize,
}

impl Default for AlsPathologicalConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            horizon: Horizon { t_final: tdse_core::matrix_model::PATHOLOGICAL_T_FINAL, intervals: 200 },
            ranks: (1..=10).collect(),
            noise_levels: vec![0.0, 1e-8, 1e-4],
            als_perturbation: 1e-2,
            als: AlsSection::default(),
            dirac_frenkel: DfSection::default(),
            rk4_steps: 2000,
        }
    }
}

/// Isotropic wavepacket `a e^{-½ w |x − q|²} e^{i p·(x − q)}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PacketSpec {
    #[serde(default = "one")]
    pub amplitude: f64,
    pub center: Vec<f64>,
    #[serde(default)]
    pub momentum: Vec<f64>,
    #[serde(default = "one")]
    pub width: f64,
}

fn one() -> f64 {
    1.0
}

impl PacketSpec {
    fn new(amplitude: f64, center: &[f64], momentum: &[f64]) -> Self {
        Self { amplitude, center: center.to_vec(), momentum: momentum.to_vec(), width: 1.0 }
    }

    pub fn term(&self, d: usize) -> Result<GaussianTerm, CliError> {
        let bad = |m: &str| CliError::InvalidParameter(m.to_string());
        if self.center.len() != d {
            return Err(bad(&format!("packet center must have {d} entries")));
        }
        let momentum = if self.momentum.is_empty() { vec![0.0; d] } else { self.momentum.clone() };
        if momentum.len() != d {
            return Err(bad(&format!("packet momentum must have {d} entries")));
        }
        if !self.width.is_finite() || self.width <= 0.0 {
            return Err(bad("packet width must be positive"));
        }
        if !self.amplitude.is_finite() || self.center.iter().chain(&momentum).any(|x| !x.is_finite()) {
            return Err(bad("packet parameters must be finite"));
        }
        let a: Vec<f64> = (0..d * d).map(|i| if i % (d + 1) == 0 { self.width } else { 0.0 }).collect();
        GaussianTerm::wavepacket(
            d,
            C64::from_f64(self.amplitude, 0.0),
            &self.center,
            &momentum,
            width_from_parts(d, &a, &vec![0.0; d * d]),
        )
        .map_err(|e| bad(&e.to_string()))
    }
}

pub fn packet_sum(d: usize, packets: &[PacketSpec]) -> Result<GaussianSum, CliError> {
    let terms = packets.iter().map(|p| p.term(d)).collect::<Result<Vec<_>, _>>()?;
    GaussianSum::from_terms(d, terms).map_err(|e| CliError::InvalidParameter(e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectralSection {
    pub half_width: f64,
    /// Modes per direction of the reference solution.
    pub reference_modes: usize,
    /// Coarser spectral arms compared against the reference.
    pub comparison_modes: Vec<usize>,
    /// Strang steps on the whole horizon.
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GreedyConfig {
    pub seed: u64,
    pub dim: usize,
    pub horizon: Horizon,
    pub initial: PacketSpec,
    pub potential: Vec<PacketSpec>,
    pub greedy: GreedyOptions,
    /// Term counts at which the solution is compared with the reference.
    pub report_terms: Vec<usize>,
    pub spectral: SpectralSection,
}

impl GreedyConfig {
    pub fn one_dimensional() -> Self {
        Self {
            seed: 0,
            dim: 1,
            horizon: Horizon { t_final: 5.0, intervals: 100 },
            initial: PacketSpec::new(1.0, &[6.0], &[-1.0]),
            potential: vec![PacketSpec::new(1.5, &[-2.0], &[0.0]), PacketSpec::new(1.0, &[2.0], &[0.0])],
            greedy: GreedyOptions { max_terms: 30, ..GreedyOptions::default() },
            report_terms: vec![10, 20, 30],
            spectral: SpectralSection {
                half_width: 30.0,
                reference_modes: 1024,
                comparison_modes: vec![],
                steps: 1000,
            },
        }
    }

    pub fn three_dimensional() -> Self {
        let s = -(0.5f64).sqrt();
        Self {
            seed: 0,
            dim: 3,
            horizon: Horizon { t_final: 5.0, intervals: 100 },
            initial: PacketSpec::new(1.0, &[3.0, 3.0, 0.0], &[s, s, 0.0]),
            potential: vec![PacketSpec::new(1.0, &[0.0, 0.0, 0.0], &[0.0, 0.0, 0.0])],
            greedy: GreedyOptions { max_terms: 10, ..GreedyOptions::default() },
            report_terms: vec![1, 10],
            spectral: SpectralSection {
                half_width: 30.0,
                reference_modes: 64,
                comparison_modes: vec![32],
                steps: 1000,
            },
        }
    }

    /// Overlays the keys present in `value` onto `base`, section by section.
    fn merge(base: Self, value: toml::Value) -> Result<Self, CliError> {
        let mut merged = toml::Value::try_from(&base).map_err(|e| CliError::Parse(e.to_string()))?;
        overlay(&mut merged, value);
        merged.try_into().map_err(|e: toml::de::Error| CliError::Parse(e.to_string()))
    }

    fn validate(&self, d: usize) -> Result<(), CliError> {
        check(self.dim == d, &format!("this experiment is {d}-dimensional"))?;
        self.horizon.validate()?;
        self.initial.term(d)?;
        check(!self.potential.is_empty(), "potential needs at least one term")?;
        packet_sum(d, &self.potential)?;
        let g = &self.greedy;
        check(g.max_terms >= 1, "max_terms must be at least 1")?;
        check(g.f_stop >= 0.0, "f_stop must be non-negative")?;
        check(g.candidate_scale > 0.0 && g.candidate_scale.is_finite(), "candidate_scale must be positive")?;
        let o = &g.optimize;
        check(o.max_iterations >= 1, "max_iterations must be at least 1")?;
        check(o.alpha_max > 0.0 && o.line_search_tol > 0.0 && o.line_search_tol < 1.0, "invalid line search settings")?;
        check(
            o.epsilon_rel >= 0.0 && o.regularization >= 0.0 && o.width_floor >= 0.0,
            "tolerances must be non-negative",
        )?;
        check(self.report_terms.iter().all(|&m| m >= 1 && m <= g.max_terms), "report_terms must lie in 1..=max_terms")?;
        let s = &self.spectral;
        check(s.half_width > 0.0 && s.half_width.is_finite(), "half_width must be positive")?;
        check(s.reference_modes >= 2 && s.comparison_modes.iter().all(|&n| n >= 2), "mode counts must be at least 2")?;
        check(
            s.steps >= 1 && s.steps.is_multiple_of(self.horizon.intervals),
            "spectral steps must be a multiple of intervals",
        )
    }
}

fn overlay(base: &mut toml::Value, value: toml::Value) {
    match (base, value) {
        (toml::Value::Table(b), toml::Value::Table(v)) => {
            for (k, x) in v {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_table() && x.is_table() => overlay(slot, x),
                    _ => {
                        b.insert(k, x);
                    }
                }
            }
        }
        (b, v) => *b = v,
    }
}

/// Canonical TOML text of a config, including every default.
pub fn to_toml(config: &Config) -> String {
    toml::to_string(config).expect("configs serialize")
}
