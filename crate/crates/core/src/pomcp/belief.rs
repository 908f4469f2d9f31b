use rand::Rng;

use crate::error::{Error, Result};
use crate::model::{ActionId, AugmentedParticle, Domain, ObservationId, SimRng};

/// Attempts allowed per requested particle.
pub const ATTEMPTS_PER_PARTICLE: usize = 100;

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct FilterStats {
    /// Global-simulator calls made by the filter.
    pub gs_calls: usize,
    pub accepted: usize,
    /// Particles taken from the tree because the filter ran out of attempts.
    pub from_tree: usize,
}

/// Rejection particle filter: propagates random particles through the global
/// simulator and keeps those that reproduce `o`, until `capacity` particles are
/// accepted or the attempt budget is spent. On exhaustion the particles
/// stored in the matching tree node are added.
pub fn advance_belief(
    belief: &[AugmentedParticle],
    a: ActionId,
    o: ObservationId,
    domain: &dyn Domain,
    capacity: usize,
    tree_particles: &[AugmentedParticle],
    rng: &mut SimRng,
) -> Result<(Vec<AugmentedParticle>, FilterStats)> {
    let deprived = || Error::ParticleDeprivation {
        action: a,
        observation: o,
    };
    if belief.is_empty() {
        return Err(deprived());
    }
    let mut stats = FilterStats::default();
    let mut out = Vec::with_capacity(capacity);
    let budget = ATTEMPTS_PER_PARTICLE * capacity;
    while out.len() < capacity && stats.gs_calls < budget {
        let p = &belief[rng.random_range(0..belief.len())];
        let step = domain.step_global(&p.global, a, rng);
        stats.gs_calls += 1;
        if step.observation == o {
            let history = p.history.appended(a, domain.project_local(&step.next));
            out.push(AugmentedParticle {
                global: step.next,
                history,
            });
        }
    }
    stats.accepted = out.len();
    if out.len() < capacity {
        let extra = tree_particles.iter().take(capacity - out.len());
        stats.from_tree = extra.len();
        out.extend(extra.cloned());
    }
    if out.is_empty() {
        return Err(deprived());
    }
    Ok((out, stats))
}
