//! Experiment drivers: independent runs fanned out over a worker pool.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::harness::config::ExperimentConfig;
use crate::harness::metrics::MetricsRow;
use crate::model::{Domain, LocalHistory, SimRng};
use crate::neural::{Learner, ParamLayout, PredictorParams, ReplayBuffer, TrainingSequence, TrainingStep};
use crate::planner::{Budget, Mode, Planner, PlannerConfig, PredictorSource};
use crate::predictor::UniformPredictor;

/// Per-run random stream: the master seed picks the key, the run id the
/// stream, so streams never overlap and do not depend on the worker count.
pub fn derive_rng(master_seed: u64, run_id: u64) -> SimRng {
    let mut rng = SimRng::seed_from_u64(master_seed);
    rng.set_stream(run_id);
    rng
}

/// Worker count from `SISPLAN_WORKERS`, defaulting to the available cores.
pub fn worker_count() -> usize {
    std::env::var("SISPLAN_WORKERS")
        .ok()
        .and_then(|v| v.parse().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Runs `f` inside a pool sized by [`worker_count`].
pub fn in_pool<T: Send>(f: impl FnOnce() -> T + Send) -> T {
    match rayon::ThreadPoolBuilder::new().num_threads(worker_count()).build() {
        Ok(pool) => pool.install(f),
        Err(_) => f(),
    }
}

/// How a run obtains its influence predictor.
#[derive(Clone)]
pub enum PredictorInit {
    /// Fresh random weights drawn from the run's stream.
    Fresh,
    /// The given weights, copied into every run.
    Given(PredictorParams),
    Fixed(Arc<dyn crate::predictor::InfluencePredictor>),
}

pub struct RunOutput {
    pub run_id: usize,
    pub episodes: Vec<crate::planner::EpisodeMetrics>,
    pub buffer: Option<ReplayBuffer>,
    pub learner: Option<Learner>,
}

impl RunOutput {
    pub fn rows(&self) -> impl Iterator<Item = MetricsRow> + '_ {
        self.episodes.iter().map(|m| MetricsRow::from_episode(self.run_id, m))
    }
}

pub fn make_predictor(
    init: &PredictorInit,
    domain: &dyn Domain,
    pcfg: &PlannerConfig,
    rng: &mut SimRng,
) -> PredictorSource {
    match init {
        PredictorInit::Fresh => {
            let layout = ParamLayout::for_domain(domain, pcfg.train.hidden);
            let params = PredictorParams::init(layout, pcfg.train.init_scale, rng);
            PredictorSource::Learned(Learner::new(params, pcfg.train.clone()))
        }
        PredictorInit::Given(p) => PredictorSource::Learned(Learner::new(p.clone(), pcfg.train.clone())),
        PredictorInit::Fixed(p) => PredictorSource::Fixed(Arc::clone(p)),
    }
}

/// Runs `cfg.runs` independent planner instances for `cfg.episodes` episodes.
/// Results are ordered by run id regardless of scheduling.
pub fn run_planners(
    cfg: &ExperimentConfig,
    pcfg: &PlannerConfig,
    init: &PredictorInit,
    keep_state: bool,
) -> Result<Vec<RunOutput>> {
    let domain = cfg.domain.build()?;
    pcfg.validate()?;
    if pcfg.mode == Mode::IalsOnly && matches!(init, PredictorInit::Fresh) {
        return Err(Error::Config("ials-only planning needs a trained or exact predictor".into()));
    }
    let runs: Vec<RunOutput> = in_pool(|| {
        (0..cfg.runs)
            .into_par_iter()
            .map(|run_id| {
                let mut rng = derive_rng(cfg.seed, run_id as u64);
                let predictor = make_predictor(init, domain.as_ref(), pcfg, &mut rng);
                let mut planner = Planner::new(Arc::clone(&domain), pcfg.clone(), predictor, rng);
                let episodes = (0..cfg.episodes).map(|_| planner.run_episode().metrics).collect();
                let (buffer, learner) = if keep_state {
                    let learner = match planner.predictor {
                        PredictorSource::Learned(l) => Some(l),
                        PredictorSource::Fixed(_) => None,
                    };
                    (Some(planner.buffer), learner)
                } else {
                    (None, None)
                };
                RunOutput {
                    run_id,
                    episodes,
                    buffer,
                    learner,
                }
            })
            .collect()
    });
    Ok(runs)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum CollectPolicy {
    /// Uniformly random actions in the global simulator.
    Uniform,
    /// POMCP planning with the global simulator only.
    PomcpGs,
}

/// Collects `episodes` real trajectories (with their source values).
/// Episode `e` uses stream `e` of the configured seed.
pub fn collect_offline(cfg: &ExperimentConfig, episodes: usize, policy: CollectPolicy) -> Result<ReplayBuffer> {
    let domain = cfg.domain.build()?;
    let mut pcfg = cfg.planner_config(cfg.selector.lambda);
    pcfg.mode = Mode::GsOnly;
    pcfg.validate()?;
    let seqs: Vec<TrainingSequence> = in_pool(|| {
        (0..episodes)
            .into_par_iter()
            .map(|e| {
                let mut rng = derive_rng(cfg.seed, e as u64);
                match policy {
                    CollectPolicy::Uniform => uniform_episode(domain.as_ref(), &mut rng),
                    CollectPolicy::PomcpGs => {
                        let pred = Arc::new(UniformPredictor::new(domain.source_cardinalities()));
                        let mut planner =
                            Planner::new(Arc::clone(&domain), pcfg.clone(), PredictorSource::Fixed(pred), rng);
                        planner.run_episode().trajectory
                    }
                }
            })
            .collect()
    });
    let mut buf = ReplayBuffer::new();
    buf.extend(seqs);
    Ok(buf)
}

pub fn uniform_episode(domain: &dyn Domain, rng: &mut SimRng) -> TrainingSequence {
    let mut s = domain.sample_initial(rng);
    let mut seq = TrainingSequence {
        prefix: LocalHistory::new(domain.project_local(&s)),
        steps: Vec::with_capacity(domain.horizon()),
    };
    for _ in 0..domain.horizon() {
        let a = rng.random_range(0..domain.num_actions());
        let st = domain.step_global(&s, a, rng);
        seq.steps.push(TrainingStep {
            action: a,
            local: domain.project_local(&st.next),
            source: st.source,
        });
        s = st.next;
    }
    seq
}

/// Mean loss of `params` over every sequence of `data`.
pub fn dataset_loss(params: &PredictorParams, data: &ReplayBuffer) -> f64 {
    let batch: Vec<&TrainingSequence> = data.sequences().iter().collect();
    params.loss(&batch)
}

/// Budget used by `sis-realtime`: the configured one if it is a time budget,
/// otherwise the domain default.
pub fn realtime_budget(cfg: &ExperimentConfig) -> Budget {
    match cfg.budget {
        Budget::Seconds(s) => Budget::Seconds(s),
        Budget::Sims(_) => Budget::Seconds(cfg.default_seconds()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::RngCore;

    #[test]
    fn rng_streams() {
        let draw = |seed, run| {
            let mut r = derive_rng(seed, run);
            (0..64).map(|_| r.next_u64()).collect::<Vec<_>>()
        };
        assert_eq!(draw(3, 5), draw(3, 5));
        assert_ne!(draw(3, 5), draw(3, 6));
        assert_ne!(draw(3, 5), draw(4, 5));
        let (a, b) = (draw(1, 0), draw(1, 1));
        assert!(a.iter().zip(&b).all(|(x, y)| x != y));
    }

    #[test]
    fn uniform_collection_is_deterministic() {
        let mut cfg = ExperimentConfig::preset("tiny-gac").unwrap();
        cfg.seed = 11;
        let a = collect_offline(&cfg, 6, CollectPolicy::Uniform).unwrap();
        let b = collect_offline(&cfg, 6, CollectPolicy::Uniform).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 6);
        assert!(a.sequences().iter().all(|s| s.num_targets() == 5 && s.prefix_steps() == 0));
    }
}
