//! Episode loop: planning with simulator selection, acting, belief update and
//! predictor training.

use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ials::IalsState;
use crate::model::{ActionId, AugmentedParticle, Domain, LocalHistory, Origin, SimRng, TrajectoryRecord};
use crate::neural::{Learner, ReplayBuffer, TrainConfig, TrainingSequence, TrainingStep};
use crate::pomcp::{advance_belief, backup, simulate_once, SearchConfig, SearchTree, SimStart};
use crate::predictor::{InfluencePredictor, SourceDistribution};
use crate::selector::{kl_sample, SelectorConfig, SelectorStats};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Choose per simulation between the global simulator and the IALS.
    Sis,
    GsOnly,
    IalsOnly,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Budget {
    /// Fixed number of simulations per real step.
    Sims(usize),
    /// Wall-clock seconds per real step, checked between simulations.
    Seconds(f64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlannerConfig {
    pub mode: Mode,
    pub budget: Budget,
    pub search: SearchConfig,
    pub selector: SelectorConfig,
    pub train: TrainConfig,
    /// Also train the predictor in `GsOnly` mode.
    pub train_in_gs_only: bool,
}

impl PlannerConfig {
    pub fn validate(&self) -> Result<()> {
        match self.budget {
            Budget::Sims(0) => return Err(Error::Config("budget: sims must be at least 1".into())),
            Budget::Seconds(s) if !(s > 0.0) => {
                return Err(Error::Config("budget: seconds must be positive".into()))
            }
            _ => {}
        }
        self.search.validate()?;
        self.selector.validate()?;
        self.train.validate()
    }
}

/// The predictor used by the IALS: either trained online or supplied fixed.
#[derive(Clone)]
pub enum PredictorSource {
    Learned(Learner),
    Fixed(Arc<dyn InfluencePredictor>),
}

impl PredictorSource {
    pub fn get(&self) -> &dyn InfluencePredictor {
        match self {
            PredictorSource::Learned(l) => &l.params,
            PredictorSource::Fixed(p) => p.as_ref(),
        }
    }

    pub fn learner(&self) -> Option<&Learner> {
        match self {
            PredictorSource::Learned(l) => Some(l),
            PredictorSource::Fixed(_) => None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct StepMetrics {
    /// Wall time of the search, excluding the belief update.
    pub wall_ms: f64,
    pub n_gs: u32,
    pub n_ials: u32,
    /// Mean of the KL samples drawn during this step.
    pub mean_l: Option<f64>,
    /// Running estimate after this step.
    pub lhat: Option<f64>,
    pub belief_gs_calls: usize,
    pub belief_ms: f64,
    pub belief_from_tree: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct EpisodeMetrics {
    pub episode: usize,
    pub total_return: f64,
    pub steps: Vec<StepMetrics>,
    pub train_loss: Option<f64>,
    pub buffer_size: usize,
    pub failed: bool,
}

fn mean(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let (mut s, mut n) = (0.0, 0usize);
    for x in xs {
        s += x;
        n += 1;
    }
    (n > 0).then(|| s / n as f64)
}

impl EpisodeMetrics {
    pub fn mean_step_time_ms(&self) -> Option<f64> {
        mean(self.steps.iter().map(|s| s.wall_ms))
    }

    pub fn mean_n_gs(&self) -> Option<f64> {
        mean(self.steps.iter().map(|s| s.n_gs as f64))
    }

    pub fn mean_n_ials(&self) -> Option<f64> {
        mean(self.steps.iter().map(|s| s.n_ials as f64))
    }

    pub fn mean_lhat(&self) -> Option<f64> {
        mean(self.steps.iter().filter_map(|s| s.lhat))
    }

    /// Share of simulations that used the IALS.
    pub fn ials_fraction(&self) -> Option<f64> {
        let gs: u64 = self.steps.iter().map(|s| s.n_gs as u64).sum();
        let ials: u64 = self.steps.iter().map(|s| s.n_ials as u64).sum();
        (gs + ials > 0).then(|| ials as f64 / (gs + ials) as f64)
    }
}

pub struct EpisodeResult {
    pub metrics: EpisodeMetrics,
    /// The real trajectory, with the source values that drove it.
    pub trajectory: TrainingSequence,
}

/// Converts a global trajectory into a buffer record: the start history as
/// the masked prefix and one target per simulated step.
pub fn extract_training_data(traj: &TrajectoryRecord) -> Result<TrainingSequence> {
    if traj.origin != Origin::Global {
        return Err(Error::WrongOrigin("training data comes from global trajectories only"));
    }
    let steps = traj
        .entries
        .iter()
        .map(|e| {
            Ok(TrainingStep {
                action: e.action,
                local: e.local.clone(),
                source: e
                    .source
                    .clone()
                    .ok_or(Error::WrongOrigin("global trajectory without recorded sources"))?,
            })
        })
        .collect::<Result<_>>()?;
    Ok(TrainingSequence {
        prefix: traj.start_history.clone(),
        steps,
    })
}

/// One planner instance: owns its model, predictor, buffer and random stream.
pub struct Planner {
    pub domain: Arc<dyn Domain>,
    pub cfg: PlannerConfig,
    pub predictor: PredictorSource,
    pub buffer: ReplayBuffer,
    pub selector: SelectorStats,
    pub rng: SimRng,
    /// When false the predictor is never trained.
    pub training_enabled: bool,
    episodes: usize,
    dist: SourceDistribution,
}

impl Planner {
    pub fn new(domain: Arc<dyn Domain>, cfg: PlannerConfig, predictor: PredictorSource, rng: SimRng) -> Self {
        let training_enabled = match cfg.mode {
            Mode::Sis => true,
            Mode::GsOnly => cfg.train_in_gs_only,
            Mode::IalsOnly => false,
        };
        Planner {
            selector: SelectorStats::new(cfg.selector.clone()),
            domain,
            cfg,
            predictor,
            buffer: ReplayBuffer::new(),
            rng,
            training_enabled,
            episodes: 0,
            dist: SourceDistribution::default(),
        }
    }

    pub fn episodes_run(&self) -> usize {
        self.episodes
    }

    fn collects_data(&self) -> bool {
        self.cfg.mode != Mode::IalsOnly
    }

    /// Runs simulations from the root belief until the budget is spent and
    /// returns the greedy action.
    pub fn plan_step(
        &mut self,
        tree: &mut SearchTree,
        belief: &[AugmentedParticle],
        t: usize,
    ) -> Result<(ActionId, StepMetrics)> {
        if belief.is_empty() {
            return Err(Error::ParticleDeprivation {
                action: usize::MAX,
                observation: usize::MAX,
            });
        }
        let start = Instant::now();
        let depth = self.cfg.search.depth(t, self.domain.horizon());
        self.selector.reset_step();
        let domain = self.domain.as_ref();
        let predictor = self.predictor.get();
        let mut hidden_cache: Vec<Option<Vec<f64>>> = vec![None; belief.len()];
        let (mut l_sum, mut l_n) = (0.0, 0usize);
        let mut sims = 0usize;
        loop {
            match self.cfg.budget {
                Budget::Sims(n) if sims >= n => break,
                Budget::Seconds(s) if sims > 0 && start.elapsed() >= Duration::from_secs_f64(s) => break,
                _ => {}
            }
            let origin = match self.cfg.mode {
                Mode::Sis => self.selector.choose(),
                Mode::GsOnly => Origin::Global,
                Mode::IalsOnly => Origin::Ials,
            };
            let idx = self.rng.random_range(0..belief.len());
            let particle = &belief[idx];
            let start_state = match origin {
                Origin::Global => SimStart::Global(particle),
                Origin::Ials => {
                    let hidden = hidden_cache[idx]
                        .get_or_insert_with(|| predictor.replay(&particle.history))
                        .clone();
                    SimStart::Ials(IalsState::with_hidden(particle.history.clone(), hidden))
                }
            };
            let traj = simulate_once(
                tree,
                domain,
                predictor,
                start_state,
                t,
                depth,
                self.cfg.search.ucb_c,
                &mut self.dist,
                &mut self.rng,
            );
            backup(tree, &traj, self.cfg.search.gamma, self.cfg.search.particles);
            self.selector.record(origin);
            if origin == Origin::Global {
                let hidden = hidden_cache[idx].get_or_insert_with(|| predictor.replay(&particle.history));
                let l = kl_sample(&traj, predictor, domain, Some(hidden), &mut self.dist)?;
                self.selector.update_lhat(l);
                l_sum += l;
                l_n += 1;
                if self.collects_data() {
                    self.buffer.add(extract_training_data(&traj)?);
                }
            }
            sims += 1;
        }
        let action = tree.best_action()?;
        let metrics = StepMetrics {
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
            n_gs: self.selector.n_gs,
            n_ials: self.selector.n_ials,
            mean_l: (l_n > 0).then(|| l_sum / l_n as f64),
            lhat: self.selector.lhat,
            ..StepMetrics::default()
        };
        Ok((action, metrics))
    }

    /// Plays one episode against the global model, then trains the predictor
    /// once if training is enabled.
    pub fn run_episode(&mut self) -> EpisodeResult {
        let domain = Arc::clone(&self.domain);
        let h = domain.horizon();
        let capacity = self.cfg.search.particles;
        let mut state = domain.sample_initial(&mut self.rng);
        let mut belief: Vec<AugmentedParticle> =
            (0..capacity).map(|_| domain.initial_particle(&mut self.rng)).collect();
        let mut tree = SearchTree::new(domain.num_actions());
        let mut real = TrainingSequence {
            prefix: LocalHistory::new(domain.project_local(&state)),
            steps: Vec::with_capacity(h),
        };
        let mut metrics = EpisodeMetrics {
            episode: self.episodes,
            ..EpisodeMetrics::default()
        };

        for t in 0..h {
            let (a, mut step_metrics) = match self.plan_step(&mut tree, &belief, t) {
                Ok(x) => x,
                Err(_) => {
                    metrics.failed = true;
                    break;
                }
            };
            let step = domain.step_global(&state, a, &mut self.rng);
            metrics.total_return += step.reward;
            real.steps.push(TrainingStep {
                action: a,
                local: domain.project_local(&step.next),
                source: step.source.clone(),
            });
            state = step.next;

            if t + 1 < h {
                let filter_start = Instant::now();
                let stored = tree
                    .child(crate::pomcp::tree::ROOT, a, step.observation)
                    .map(|c| tree.node(c).particles.as_slice())
                    .unwrap_or(&[]);
                match advance_belief(&belief, a, step.observation, domain.as_ref(), capacity, stored, &mut self.rng) {
                    Ok((next, fs)) => {
                        belief = next;
                        step_metrics.belief_gs_calls = fs.gs_calls;
                        step_metrics.belief_from_tree = fs.from_tree;
                    }
                    Err(_) => {
                        step_metrics.belief_ms = filter_start.elapsed().as_secs_f64() * 1e3;
                        metrics.steps.push(step_metrics);
                        metrics.failed = true;
                        break;
                    }
                }
                step_metrics.belief_ms = filter_start.elapsed().as_secs_f64() * 1e3;
                tree.prune(a, step.observation);
            }
            metrics.steps.push(step_metrics);
        }

        if self.training_enabled {
            if let PredictorSource::Learned(learner) = &mut self.predictor {
                metrics.train_loss = learner.train_after_episode(&self.buffer, &mut self.rng);
            }
        }
        metrics.buffer_size = self.buffer.len();
        self.episodes += 1;
        EpisodeResult {
            metrics,
            trajectory: real,
        }
    }
}

/// Two-phase baseline: train on a fixed dataset, then plan with the IALS
/// alone and a frozen predictor.
pub fn run_two_phase(
    domain: Arc<dyn Domain>,
    offline: &ReplayBuffer,
    mut learner: Learner,
    offline_steps: usize,
    mut cfg: PlannerConfig,
    episodes: usize,
    mut rng: SimRng,
) -> Result<(Vec<EpisodeMetrics>, Learner)> {
    if offline.is_empty() {
        return Err(Error::Config("two-phase planning needs a non-empty offline dataset".into()));
    }
    learner.train_steps(offline, offline_steps, &mut rng);
    cfg.mode = Mode::IalsOnly;
    let mut planner = Planner::new(domain, cfg, PredictorSource::Learned(learner), rng);
    let metrics = (0..episodes).map(|_| planner.run_episode().metrics).collect();
    let PredictorSource::Learned(learner) = planner.predictor else {
        unreachable!()
    };
    Ok((metrics, learner))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domains::gac::{GacConfig, GrabAChair};
    use crate::neural::{ParamLayout, PredictorParams};
    use rand::SeedableRng;

    fn planner(mode: Mode, budget: Budget) -> Planner {
        let domain: Arc<dyn Domain> = Arc::new(GrabAChair::new(GacConfig::tiny()).unwrap());
        let mut rng = SimRng::seed_from_u64(7);
        let cfg = PlannerConfig {
            mode,
            budget,
            search: SearchConfig {
                particles: 100,
                ..SearchConfig::gac()
            },
            selector: SelectorConfig::default(),
            train: TrainConfig {
                steps_per_episode: 4,
                batch_size: 8,
                ..TrainConfig::default()
            },
            train_in_gs_only: false,
        };
        let params = PredictorParams::init(ParamLayout::for_domain(domain.as_ref(), 8), None, &mut rng);
        let learner = Learner::new(params, cfg.train.clone());
        Planner::new(domain, cfg, PredictorSource::Learned(learner), rng)
    }

    #[test]
    fn sim_budget_is_exact() {
        let mut p = planner(Mode::Sis, Budget::Sims(100));
        let r = p.run_episode();
        assert_eq!(r.metrics.steps.len(), 5);
        for s in &r.metrics.steps {
            assert_eq!(s.n_gs + s.n_ials, 100);
            assert!(s.n_gs >= 1);
        }
        assert!(r.metrics.train_loss.is_some());
        assert_eq!(r.trajectory.steps.len(), 5);
    }

    #[test]
    fn gs_only_fills_buffer_without_training() {
        let mut p = planner(Mode::GsOnly, Budget::Sims(100));
        let mut tree = SearchTree::new(2);
        let belief: Vec<_> = (0..50).map(|_| p.domain.initial_particle(&mut p.rng)).collect();
        let (_, m) = p.plan_step(&mut tree, &belief, 0).unwrap();
        assert_eq!(m.n_ials, 0);
        assert_eq!(p.buffer.len(), 100);
        assert!(tree.is_consistent());
        let before = p.predictor.learner().unwrap().params.clone();
        let r = p.run_episode();
        assert_eq!(r.metrics.train_loss, None);
        assert_eq!(p.predictor.learner().unwrap().params, before);
    }

    #[test]
    fn ials_only_collects_nothing() {
        let mut p = planner(Mode::IalsOnly, Budget::Sims(50));
        let r = p.run_episode();
        assert!(r.metrics.steps.iter().all(|s| s.n_gs == 0 && s.n_ials == 50));
        assert_eq!(p.buffer.len(), 0);
        assert_eq!(r.metrics.mean_lhat(), None);
    }

    #[test]
    fn time_budget_runs_at_least_once() {
        let mut p = planner(Mode::Sis, Budget::Seconds(1e-9));
        let mut tree = SearchTree::new(2);
        let belief: Vec<_> = (0..10).map(|_| p.domain.initial_particle(&mut p.rng)).collect();
        let (_, m) = p.plan_step(&mut tree, &belief, 0).unwrap();
        assert_eq!(m.n_gs + m.n_ials, 1);
    }

    #[test]
    fn extraction_keeps_prefix_and_targets() {
        let mut p = planner(Mode::GsOnly, Budget::Sims(1));
        let domain = Arc::clone(&p.domain);
        let tree = SearchTree::new(2);
        let mut part = domain.initial_particle(&mut p.rng);
        for _ in 0..4 {
            let st = domain.step_global(&part.global, 0, &mut p.rng);
            part.history.push(0, domain.project_local(&st.next));
            part.global = st.next;
        }
        let traj = simulate_once(
            &tree,
            domain.as_ref(),
            p.predictor.get(),
            SimStart::Global(&part),
            4,
            2,
            1.0,
            &mut SourceDistribution::default(),
            &mut p.rng,
        );
        let seq = extract_training_data(&traj).unwrap();
        assert_eq!(seq.num_targets(), 2);
        assert_eq!(seq.prefix_steps(), 4);
        assert_eq!(seq.num_inputs(), 6);
    }
}
