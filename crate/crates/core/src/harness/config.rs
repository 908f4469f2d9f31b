//! Experiment configuration files.
//!
//! ```toml
//! [domain]
//! name = "gac"
//! overrides = { n_fixed_agents = 16 }
//!
//! [planner]
//! mode = "sis"
//! budget = { sims = 100 }
//! episodes = 40
//! runs = 200
//! seed = 1
//!
//! [selector]
//! lambda = [0.0, 0.7]
//! ```
//!
//! Every section is optional except `domain`; missing values fall back to the
//! per-domain defaults. Unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::domains::{DomainConfig, GacConfig, GtcConfig};
use crate::error::{Error, Result};
use crate::neural::TrainConfig;
use crate::planner::{Budget, Mode, PlannerConfig};
use crate::pomcp::SearchConfig;
use crate::selector::SelectorConfig;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    domain: RawDomain,
    #[serde(default)]
    planner: RawPlanner,
    #[serde(default)]
    search: RawSearch,
    #[serde(default)]
    selector: RawSelector,
    #[serde(default)]
    train: RawTrain,
    #[serde(default)]
    output: RawOutput,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDomain {
    name: String,
    #[serde(default)]
    overrides: toml::Table,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPlanner {
    mode: Option<Mode>,
    budget: Option<Budget>,
    episodes: Option<usize>,
    runs: Option<usize>,
    seed: Option<u64>,
    train_in_gs_only: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSearch {
    ucb_c: Option<f64>,
    gamma: Option<f64>,
    particles: Option<usize>,
    effective_horizon: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum Lambdas {
    One(f64),
    Many(Vec<f64>),
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSelector {
    lambda: Option<Lambdas>,
    c_meta: Option<f64>,
    ema_alpha: Option<f64>,
    literal_paper_sign: Option<bool>,
    literal_paper_bonus: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTrain {
    steps: Option<usize>,
    batch: Option<usize>,
    lr: Option<f64>,
    hidden: Option<usize>,
    init_scale: Option<f64>,
    grad_clip: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    dir: Option<PathBuf>,
}

/// A fully resolved experiment description.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub domain: DomainConfig,
    pub mode: Mode,
    pub budget: Budget,
    pub episodes: usize,
    pub runs: usize,
    pub seed: u64,
    pub train_in_gs_only: bool,
    pub search: SearchConfig,
    /// `selector.lambda` holds the first entry of `lambdas`.
    pub selector: SelectorConfig,
    pub lambdas: Vec<f64>,
    pub train: TrainConfig,
    pub output_dir: PathBuf,
}

const PRESETS: &[(&str, &str)] = &[
    ("gac", include_str!("../../configs/gac.toml")),
    ("gac-small", include_str!("../../configs/gac-small.toml")),
    ("gtc", include_str!("../../configs/gtc.toml")),
    ("gtc-small", include_str!("../../configs/gtc-small.toml")),
    ("tiny-gac", include_str!("../../configs/tiny-gac.toml")),
];

pub fn preset_names() -> impl Iterator<Item = &'static str> {
    PRESETS.iter().map(|(n, _)| *n)
}

/// Text of a bundled preset.
pub fn preset_text(name: &str) -> Option<&'static str> {
    PRESETS.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}

fn config_err(msg: impl std::fmt::Display) -> Error {
    Error::Config(msg.to_string())
}

impl ExperimentConfig {
    pub fn preset(name: &str) -> Result<Self> {
        let text = preset_text(name).ok_or_else(|| config_err(format!("unknown preset {name:?}")))?;
        Self::from_toml_str(text)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_err(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(config_err)?;
        let overrides = toml::Value::Table(raw.domain.overrides);
        let (domain, mut search, c_meta, mut train) = match raw.domain.name.as_str() {
            "gac" => {
                let c: GacConfig = overrides.try_into().map_err(|e| config_err(format!("domain.overrides: {e}")))?;
                c.validate()?;
                (DomainConfig::Gac(c), SearchConfig::gac(), 0.3, TrainConfig::default())
            }
            "gtc" => {
                let c: GtcConfig = overrides.try_into().map_err(|e| config_err(format!("domain.overrides: {e}")))?;
                c.validate()?;
                (DomainConfig::Gtc(c), SearchConfig::gtc(), 0.1, TrainConfig::gtc())
            }
            other => return Err(config_err(format!("unknown domain {other:?}"))),
        };

        let s = raw.search;
        if let Some(v) = s.ucb_c {
            search.ucb_c = v;
        }
        if let Some(v) = s.gamma {
            search.gamma = v;
        }
        if let Some(v) = s.particles {
            search.particles = v;
        }
        if let Some(v) = s.effective_horizon {
            search.effective_horizon = Some(v);
        }

        let sel = raw.selector;
        let lambdas = match sel.lambda {
            None => vec![SelectorConfig::default().lambda],
            Some(Lambdas::One(l)) => vec![l],
            Some(Lambdas::Many(ls)) => ls,
        };
        if lambdas.is_empty() {
            return Err(config_err("selector.lambda must not be an empty list"));
        }
        let defaults = SelectorConfig::default();
        let selector = SelectorConfig {
            lambda: lambdas[0],
            c_meta: sel.c_meta.unwrap_or(c_meta),
            ema_alpha: sel.ema_alpha.unwrap_or(defaults.ema_alpha),
            literal_paper_sign: sel.literal_paper_sign.unwrap_or(false),
            literal_paper_bonus: sel.literal_paper_bonus.unwrap_or(false),
        };

        let t = raw.train;
        if let Some(v) = t.steps {
            train.steps_per_episode = v;
        }
        if let Some(v) = t.batch {
            train.batch_size = v;
        }
        if let Some(v) = t.lr {
            train.learning_rate = v;
        }
        if let Some(v) = t.hidden {
            train.hidden = v;
        }
        train.init_scale = t.init_scale.or(train.init_scale);
        train.grad_clip = t.grad_clip.or(train.grad_clip);

        let p = raw.planner;
        let cfg = ExperimentConfig {
            domain,
            mode: p.mode.unwrap_or(Mode::Sis),
            budget: p.budget.unwrap_or(Budget::Sims(100)),
            episodes: p.episodes.unwrap_or(40),
            runs: p.runs.unwrap_or(1),
            seed: p.seed.unwrap_or(0),
            train_in_gs_only: p.train_in_gs_only.unwrap_or(false),
            search,
            selector,
            lambdas,
            train,
            output_dir: raw.output.dir.unwrap_or_else(|| PathBuf::from("results")),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.episodes == 0 {
            return Err(config_err("planner.episodes must be at least 1"));
        }
        if self.runs == 0 {
            return Err(config_err("planner.runs must be at least 1"));
        }
        for &l in &self.lambdas {
            SelectorConfig {
                lambda: l,
                ..self.selector.clone()
            }
            .validate()?;
        }
        self.planner_config(self.lambdas[0]).validate()
    }

    pub fn planner_config(&self, lambda: f64) -> PlannerConfig {
        PlannerConfig {
            mode: self.mode,
            budget: self.budget,
            search: self.search.clone(),
            selector: SelectorConfig {
                lambda,
                ..self.selector.clone()
            },
            train: self.train.clone(),
            train_in_gs_only: self.train_in_gs_only,
        }
    }

    /// Default real-time budget of the domain.
    pub fn default_seconds(&self) -> f64 {
        match self.domain {
            DomainConfig::Gac(_) => 1.0 / 64.0,
            DomainConfig::Gtc(_) => 1.0 / 16.0,
        }
    }
}
