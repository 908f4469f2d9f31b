use rand::SeedableRng;

use sisplan::domains::{GacConfig, GrabAChair};
use sisplan::model::{ActionId, Domain, LocalHistory, LocalState, Origin, SimRng, TrajectoryEntry, TrajectoryRecord};
use sisplan::predictor::{InfluencePredictor, SourceDistribution, UniformPredictor};
use sisplan::selector::kl_sample;
use sisplan::Error;

/// Always predicts the same joint table over two binary sources.
struct FixedTable([f64; 4]);

impl InfluencePredictor for FixedTable {
    fn hidden_size(&self) -> usize {
        0
    }
    fn advance(&self, _hidden: &mut [f64], _prev: Option<ActionId>, _local: &LocalState) {}
    fn source_distribution(&self, _hidden: &[f64], _history: &LocalHistory, out: &mut SourceDistribution) {
        out.reset_joint(&[2, 2]).copy_from_slice(&self.0);
    }
}

fn trajectory(domain: &GrabAChair, actions: &[usize], seed: u64) -> TrajectoryRecord {
    let mut rng = SimRng::seed_from_u64(seed);
    let mut s = domain.sample_initial(&mut rng);
    let start_history = LocalHistory::new(domain.project_local(&s));
    let mut entries = Vec::new();
    for &a in actions {
        let st = domain.step_global(&s, a, &mut rng);
        entries.push(TrajectoryEntry {
            action: a,
            local: domain.project_local(&st.next),
            observation: st.observation,
            reward: st.reward,
            source: Some(st.source),
            prev_global: Some(std::mem::replace(&mut s, st.next)),
        });
    }
    TrajectoryRecord {
        origin: Origin::Global,
        start_step: 0,
        start_history,
        entries,
        final_global: Some(s),
    }
}

#[test]
fn uniform_predictor_gives_log4_minus_mean_entropy() {
    let domain = GrabAChair::new(GacConfig::tiny()).unwrap();
    let traj = trajectory(&domain, &[0, 1, 1, 0, 1], 3);
    let pred = UniformPredictor::new(domain.source_cardinalities());
    let l = kl_sample(&traj, &pred, &domain, None, &mut SourceDistribution::default()).unwrap();
    let h: f64 = traj
        .entries
        .iter()
        .map(|e| domain.source_entropy(e.prev_global.as_ref().unwrap(), e.action))
        .sum::<f64>()
        / 5.0;
    assert!((l - (4f64.ln() - h)).abs() < 1e-12);
}

#[test]
fn fixed_table_matches_hand_computation() {
    let domain = GrabAChair::new(GacConfig::tiny()).unwrap();
    let table = [0.7, 0.1, 0.15, 0.05];
    let traj = trajectory(&domain, &[1, 1, 0], 9);
    let l = kl_sample(&traj, &FixedTable(table), &domain, None, &mut SourceDistribution::default()).unwrap();
    let expected: f64 = traj
        .entries
        .iter()
        .map(|e| {
            let src = e.source.as_ref().unwrap();
            let idx = src.values()[0] as usize * 2 + src.values()[1] as usize;
            -table[idx].ln() - domain.source_entropy(e.prev_global.as_ref().unwrap(), e.action)
        })
        .sum::<f64>()
        / 3.0;
    assert!((l - expected).abs() < 1e-12);
}

#[test]
fn impossible_source_is_clamped() {
    let domain = GrabAChair::new(GacConfig::tiny()).unwrap();
    let traj = trajectory(&domain, &[0], 1);
    let src = traj.entries[0].source.as_ref().unwrap();
    let mut table = [0.0; 4];
    table[3 - (src.values()[0] as usize * 2 + src.values()[1] as usize)] = 1.0;
    let l = kl_sample(&traj, &FixedTable(table), &domain, None, &mut SourceDistribution::default()).unwrap();
    assert!(l.is_finite() && l > 700.0);
}

#[test]
fn rejects_local_and_empty_trajectories() {
    let domain = GrabAChair::new(GacConfig::tiny()).unwrap();
    let pred = UniformPredictor::new(domain.source_cardinalities());
    let mut dist = SourceDistribution::default();
    let mut traj = trajectory(&domain, &[0, 1], 2);
    traj.origin = Origin::Ials;
    assert!(matches!(kl_sample(&traj, &pred, &domain, None, &mut dist), Err(Error::WrongOrigin(_))));
    let mut traj = trajectory(&domain, &[], 2);
    traj.origin = Origin::Global;
    assert!(kl_sample(&traj, &pred, &domain, None, &mut dist).is_err());
}
