//! Run configuration: an optional TOML file, then command-line overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use streamhar::baselines::{BaselineKind, BaselineParams};
use streamhar::correction::CorrectionConfig;
use streamhar::eval::{EvalConfig, MatchPolicy};
use streamhar::hhmm::Margins;
use streamhar::{HhmmConfig, Strictness};

use crate::Failure;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub train: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HhmmSection {
    pub beta: usize,
    pub kappa: f64,
    pub body_states: usize,
    /// Both margins fixed, or both tuned when absent.
    pub begin_margin: Option<f64>,
    pub end_margin: Option<f64>,
    pub holdout: f64,
}

impl Default for HhmmSection {
    fn default() -> Self {
        let d = HhmmConfig::default();
        Self {
            beta: d.beta,
            kappa: d.kappa,
            body_states: d.body_states,
            begin_margin: None,
            end_margin: None,
            holdout: d.holdout,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineSection {
    /// `none`, `all` or a comma-separated list of kinds.
    pub select: String,
    pub n: usize,
    pub span_secs: f64,
    pub lambda: Option<f64>,
    pub kappa: f64,
}

impl Default for BaselineSection {
    fn default() -> Self {
        let d = BaselineParams::default();
        Self {
            select: "none".into(),
            n: d.n,
            span_secs: d.span_secs,
            lambda: d.lambda,
            kappa: d.kappa,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub folds: usize,
    pub rho: f64,
    pub exclude_truncated: bool,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            folds: 5,
            rho: MatchPolicy::default().rho,
            exclude_truncated: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSection {
    pub profile: String,
    pub episodes: usize,
}

impl Default for SynthSection {
    fn default() -> Self {
        Self {
            profile: "home_a".into(),
            episodes: 400,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub strict: bool,
    pub paths: Paths,
    pub hhmm: HhmmSection,
    /// `alpha` left unset picks the profile default.
    pub correction: CorrectionSection,
    pub baseline: BaselineSection,
    pub eval: EvalSection,
    pub synth: SynthSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorrectionSection {
    pub alpha: Option<f64>,
    pub tod_bins: usize,
    pub duration_bins: usize,
    pub kappa: f64,
    pub neighbor_weight: f64,
}

impl Default for CorrectionSection {
    fn default() -> Self {
        let d = CorrectionConfig::default();
        Self {
            alpha: None,
            tod_bins: d.tod_bins,
            duration_bins: d.duration_bins,
            kappa: d.kappa,
            neighbor_weight: d.neighbor_weight,
        }
    }
}

/// Values given on the command line; `None` keeps the file's value.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub train: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub beta: Option<usize>,
    pub alpha: Option<f64>,
    pub seed: Option<u64>,
    pub folds: Option<usize>,
    pub baseline: Option<String>,
    pub strict: bool,
    pub profile: Option<String>,
    pub episodes: Option<usize>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, Failure> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| Failure::io(path, e))?;
        toml::from_str(&text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))
    }

    pub fn apply(&mut self, o: Overrides) {
        let p = &mut self.paths;
        p.train = o.train.or(p.train.take());
        p.test = o.test.or(p.test.take());
        p.model = o.model.or(p.model.take());
        p.out = o.out.or(p.out.take());
        if let Some(b) = o.beta {
            self.hhmm.beta = b;
        }
        if let Some(a) = o.alpha {
            self.correction.alpha = Some(a);
        }
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(f) = o.folds {
            self.eval.folds = f;
        }
        if let Some(b) = o.baseline {
            self.baseline.select = b;
        }
        self.strict |= o.strict;
        if let Some(p) = o.profile {
            self.synth.profile = p;
        }
        if let Some(n) = o.episodes {
            self.synth.episodes = n;
        }
    }

    pub fn validate(&self) -> Result<(), Failure> {
        let invalid = |e: &dyn std::fmt::Display| Failure::Config(e.to_string());
        self.hhmm_config().validate().map_err(|e| invalid(&e))?;
        self.correction_config().validate().map_err(|e| invalid(&e))?;
        MatchPolicy::new(self.eval.rho).map_err(|e| invalid(&e))?;
        self.baselines()?;
        if self.hhmm.begin_margin.is_some() != self.hhmm.end_margin.is_some() {
            return Err(Failure::Config("set both margins or neither".into()));
        }
        if self.eval.folds < 2 {
            return Err(Failure::Config("folds must be at least 2".into()));
        }
        if self.baseline.n == 0 || !(self.baseline.span_secs > 0.0) || !(self.baseline.kappa > 0.0) {
            return Err(Failure::Config("baseline n, span_secs and kappa must be positive".into()));
        }
        Ok(())
    }

    pub fn strictness(&self) -> Strictness {
        if self.strict {
            Strictness::Strict
        } else {
            Strictness::Lenient
        }
    }

    pub fn hhmm_config(&self) -> HhmmConfig {
        let h = &self.hhmm;
        HhmmConfig {
            beta: h.beta,
            kappa: h.kappa,
            body_states: h.body_states,
            margins: match (h.begin_margin, h.end_margin) {
                (Some(begin), Some(end)) => Margins::Fixed { begin, end },
                _ => Margins::Auto,
            },
            holdout: h.holdout,
        }
    }

    pub fn correction_config(&self) -> CorrectionConfig {
        let c = &self.correction;
        CorrectionConfig {
            alpha: c.alpha.unwrap_or_else(|| CorrectionConfig::default_alpha(&self.synth.profile)),
            tod_bins: c.tod_bins,
            duration_bins: c.duration_bins,
            kappa: c.kappa,
            neighbor_weight: c.neighbor_weight,
        }
    }

    pub fn policy(&self) -> MatchPolicy {
        MatchPolicy::new(self.eval.rho).expect("validated")
    }

    pub fn eval_config(&self) -> EvalConfig {
        EvalConfig {
            hhmm: self.hhmm_config(),
            correction: self.correction_config(),
            policy: self.policy(),
            exclude_truncated: self.eval.exclude_truncated,
        }
    }

    pub fn baseline_params(&self) -> BaselineParams {
        let b = &self.baseline;
        BaselineParams {
            n: b.n,
            span_secs: b.span_secs,
            lambda: b.lambda,
            kappa: b.kappa,
        }
    }

    /// Baselines selected for comparison, in canonical order.
    pub fn baselines(&self) -> Result<Vec<BaselineKind>, Failure> {
        let s = self.baseline.select.trim();
        match s.to_ascii_lowercase().as_str() {
            "" | "none" => return Ok(Vec::new()),
            "all" => return Ok(BaselineKind::ALL.to_vec()),
            _ => {}
        }
        let mut kinds = Vec::new();
        for part in s.split(',') {
            let k: BaselineKind = part.trim().parse().map_err(|e| Failure::Config(format!("{e}")))?;
            if !kinds.contains(&k) {
                kinds.push(k);
            }
        }
        kinds.sort_by_key(|k| BaselineKind::ALL.iter().position(|x| x == k));
        Ok(kinds)
    }
}
