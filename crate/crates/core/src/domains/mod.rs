//! Concrete domains.

pub mod gac;
pub mod gtc;
pub mod oracle;
pub mod toy;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use gac::{GacConfig, GrabAChair};
pub use gtc::{GridTraffic, GtcConfig};
pub use oracle::ExactInfluence;

use crate::error::Result;
use crate::model::Domain;

/// Serializable description of a domain instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum DomainConfig {
    Gac(GacConfig),
    Gtc(GtcConfig),
}

impl DomainConfig {
    pub fn build(&self) -> Result<Arc<dyn Domain>> {
        Ok(match self {
            DomainConfig::Gac(c) => Arc::new(GrabAChair::new(c.clone())?),
            DomainConfig::Gtc(c) => Arc::new(GridTraffic::new(c.clone())?),
        })
    }

    pub fn horizon(&self) -> usize {
        match self {
            DomainConfig::Gac(c) => c.horizon,
            DomainConfig::Gtc(c) => c.horizon,
        }
    }
}
