//! Per-simulation choice between the global simulator and the IALS.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Domain, Origin, TrajectoryRecord};
use crate::predictor::{InfluencePredictor, SourceDistribution};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectorConfig {
    /// Extra cost charged to a global-simulator call.
    pub lambda: f64,
    pub c_meta: f64,
    pub ema_alpha: f64,
    /// Use `+L̂` in the IALS value instead of `-L̂`.
    pub literal_paper_sign: bool,
    /// Use `sqrt(ln(n_arm) / i)` as the exploration bonus.
    pub literal_paper_bonus: bool,
}

impl Default for SelectorConfig {
    fn default() -> Self {
        SelectorConfig {
            lambda: 0.7,
            c_meta: 0.3,
            ema_alpha: 0.1,
            literal_paper_sign: false,
            literal_paper_bonus: false,
        }
    }
}

impl SelectorConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("selector: {m}")));
        if !(self.lambda >= 0.0) {
            return bad("lambda must be non-negative");
        }
        if !(self.c_meta >= 0.0) {
            return bad("c_meta must be non-negative");
        }
        if !(self.ema_alpha > 0.0 && self.ema_alpha <= 1.0) {
            return bad("ema_alpha must lie in (0, 1]");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SelectorStats {
    pub cfg: SelectorConfig,
    /// Simulations so far in the current real step.
    pub i: u32,
    pub n_gs: u32,
    pub n_ials: u32,
    /// Running inaccuracy estimate in nats; absent until the first sample.
    pub lhat: Option<f64>,
}

impl SelectorStats {
    pub fn new(cfg: SelectorConfig) -> Self {
        SelectorStats {
            cfg,
            i: 0,
            n_gs: 0,
            n_ials: 0,
            lhat: None,
        }
    }

    fn bonus(&self, n_arm: u32) -> f64 {
        let (i, n) = (self.i as f64, n_arm as f64);
        let b = if self.cfg.literal_paper_bonus {
            n.ln() / i
        } else {
            i.ln() / n
        };
        self.cfg.c_meta * b.sqrt()
    }

    /// `(V_GS, V_IALS)`; both arms must have been tried this step.
    pub fn values(&self) -> (f64, f64) {
        let lhat = self.lhat.unwrap_or(0.0);
        let l_term = if self.cfg.literal_paper_sign { lhat } else { -lhat };
        (
            -self.cfg.lambda + self.bonus(self.n_gs),
            l_term + self.bonus(self.n_ials),
        )
    }

    pub fn choose(&self) -> Origin {
        if self.n_gs == 0 {
            return Origin::Global;
        }
        if self.n_ials == 0 {
            return Origin::Ials;
        }
        let (v_gs, v_ials) = self.values();
        if v_ials > v_gs {
            Origin::Ials
        } else {
            Origin::Global
        }
    }

    pub fn record(&mut self, origin: Origin) {
        self.i += 1;
        match origin {
            Origin::Global => self.n_gs += 1,
            Origin::Ials => self.n_ials += 1,
        }
    }

    pub fn update_lhat(&mut self, l: f64) {
        debug_assert!(l.is_finite());
        let a = self.cfg.ema_alpha;
        self.lhat = Some(match self.lhat {
            None => l,
            Some(prev) => (1.0 - a) * prev + a * l,
        });
    }

    /// Clears the per-step counters; `lhat` persists.
    pub fn reset_step(&mut self) {
        self.i = 0;
        self.n_gs = 0;
        self.n_ials = 0;
    }
}

/// Empirical KL upper-bound sample from one global trajectory: the mean over
/// its steps of the predictor's negative log-likelihood of the recorded source
/// value minus the source entropy at the recorded global state.
///
/// `start_hidden` is the predictor state after the trajectory's start history,
/// if already known.
pub fn kl_sample(
    traj: &TrajectoryRecord,
    predictor: &dyn InfluencePredictor,
    domain: &dyn Domain,
    start_hidden: Option<&[f64]>,
    dist: &mut SourceDistribution,
) -> Result<f64> {
    if traj.origin != Origin::Global {
        return Err(Error::WrongOrigin("kl_sample needs a global-simulator trajectory"));
    }
    if traj.entries.is_empty() {
        return Err(Error::Shape("empty trajectory".into()));
    }
    let mut hidden = match start_hidden {
        Some(h) => h.to_vec(),
        None => predictor.replay(&traj.start_history),
    };
    let mut history = traj.start_history.clone();
    let mut total = 0.0;
    for e in &traj.entries {
        let (Some(src), Some(prev)) = (&e.source, &e.prev_global) else {
            return Err(Error::WrongOrigin("global trajectory without recorded sources"));
        };
        predictor.source_distribution(&hidden, &history, dist);
        let nll = -dist.prob(src).max(f64::MIN_POSITIVE).ln();
        total += nll - domain.source_entropy(prev, e.action);
        predictor.advance(&mut hidden, Some(e.action), &e.local);
        history.push(e.action, e.local.clone());
    }
    Ok(total / traj.entries.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stats(lambda: f64, c_meta: f64, lhat: f64, n_gs: u32, n_ials: u32) -> SelectorStats {
        SelectorStats {
            cfg: SelectorConfig {
                lambda,
                c_meta,
                ..SelectorConfig::default()
            },
            i: n_gs + n_ials,
            n_gs,
            n_ials,
            lhat: Some(lhat),
        }
    }

    #[test]
    fn worked_example() {
        let s = stats(0.7, 0.3, 0.2, 6, 4);
        let (v_gs, v_ials) = s.values();
        assert!((v_ials - 0.0276).abs() < 1e-4);
        assert!((v_gs + 0.5142).abs() < 1e-4);
        assert_eq!(s.choose(), Origin::Ials);
    }

    #[test]
    fn no_exploration_picks_cheaper_arm() {
        assert_eq!(stats(0.7, 0.0, 1.0, 3, 3).choose(), Origin::Global);
        assert_eq!(stats(0.7, 0.0, 0.7, 3, 3).choose(), Origin::Global);
        assert_eq!(stats(0.7, 0.0, 0.5, 3, 3).choose(), Origin::Ials);
    }

    #[test]
    fn seeding_order() {
        let mut s = SelectorStats::new(SelectorConfig::default());
        assert_eq!(s.choose(), Origin::Global);
        s.record(Origin::Global);
        assert_eq!(s.choose(), Origin::Ials);
        s.record(Origin::Ials);
        s.update_lhat(0.3);
        s.reset_step();
        assert_eq!(s.choose(), Origin::Global);
        assert_eq!(s.lhat, Some(0.3));
        assert_eq!(s.i, 0);
    }

    #[test]
    fn ema_rules() {
        let mut s = SelectorStats::new(SelectorConfig::default());
        s.update_lhat(0.8);
        assert_eq!(s.lhat, Some(0.8));
        let mut s = stats(0.7, 0.3, 0.5, 0, 0);
        s.update_lhat(0.1);
        assert!((s.lhat.unwrap() - 0.46).abs() < 1e-12);
        for _ in 0..500 {
            s.update_lhat(0.25);
        }
        assert!((s.lhat.unwrap() - 0.25).abs() < 1e-12);
    }

    #[test]
    fn literal_flags_change_values() {
        let mut s = stats(0.7, 0.3, 0.2, 6, 4);
        s.cfg.literal_paper_sign = true;
        s.cfg.literal_paper_bonus = true;
        let (v_gs, v_ials) = s.values();
        assert!((v_ials - (0.2 + 0.3 * (4f64.ln() / 10.0).sqrt())).abs() < 1e-12);
        assert!((v_gs - (-0.7 + 0.3 * (6f64.ln() / 10.0).sqrt())).abs() < 1e-12);
    }

    #[test]
    fn counters_stay_consistent() {
        let mut s = SelectorStats::new(SelectorConfig::default());
        s.update_lhat(0.4);
        for _ in 0..50 {
            let o = s.choose();
            s.record(o);
            assert_eq!(s.i, s.n_gs + s.n_ials);
        }
    }
}
