//! Replay buffer of training sequences and its line-delimited file format.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ActionId, LocalHistory, LocalState, SimRng, SourceValue};

/// One transition after the prefix: the action taken, the local state it led
/// to, and the source value that drove it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingStep {
    pub action: ActionId,
    pub local: LocalState,
    pub source: SourceValue,
}

/// A stored sequence: a prefix `d_t` without source targets followed by
/// steps that carry them.
///
/// The predictor consumes the prefix and every step's local state except the
/// last; the target of step `i` sits at input position `t + i`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingSequence {
    pub prefix: LocalHistory,
    pub steps: Vec<TrainingStep>,
}

impl TrainingSequence {
    pub fn num_targets(&self) -> usize {
        self.steps.len()
    }

    pub fn num_inputs(&self) -> usize {
        self.prefix.len() + self.steps.len().saturating_sub(1)
    }

    /// Number of masked leading positions.
    pub fn prefix_steps(&self) -> usize {
        self.prefix.num_steps()
    }

    pub fn inputs(&self) -> impl Iterator<Item = (Option<ActionId>, &LocalState)> {
        let n = self.steps.len().saturating_sub(1);
        self.prefix
            .inputs()
            .chain(self.steps[..n].iter().map(|s| (Some(s.action), &s.local)))
    }

    /// `(input position, target)` pairs.
    pub fn targets(&self) -> impl Iterator<Item = (usize, &SourceValue)> {
        let t = self.prefix.num_steps();
        self.steps.iter().enumerate().map(move |(i, s)| (t + i, &s.source))
    }

    /// Full local history covered by the sequence.
    pub fn history(&self) -> LocalHistory {
        let mut h = self.prefix.clone();
        for s in &self.steps {
            h.push(s.action, s.local.clone());
        }
        h
    }
}

/// Stores every sequence it is given; no eviction.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ReplayBuffer {
    sequences: Vec<TrainingSequence>,
}

const BUFFER_HEADER: &str = "sisplan-buffer v1";

impl ReplayBuffer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, seq: TrainingSequence) {
        self.sequences.push(seq);
    }

    pub fn extend(&mut self, seqs: impl IntoIterator<Item = TrainingSequence>) {
        self.sequences.extend(seqs);
    }

    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    pub fn sequences(&self) -> &[TrainingSequence] {
        &self.sequences
    }

    /// Uniform draw of `batch_size` sequences with replacement.
    pub fn sample<'a>(&'a self, batch_size: usize, rng: &mut SimRng, out: &mut Vec<&'a TrainingSequence>) {
        out.clear();
        if self.sequences.is_empty() {
            return;
        }
        for _ in 0..batch_size {
            out.push(&self.sequences[rng.random_range(0..self.sequences.len())]);
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = Vec::new();
        writeln!(text, "{BUFFER_HEADER}").unwrap();
        for s in &self.sequences {
            serde_json::to_writer(&mut text, s).expect("sequence serializes");
            text.push(b'\n');
        }
        crate::harness::io::write_atomic(path, &text)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut lines = BufReader::new(file).lines();
        let bad = |line: usize, reason: String| Error::Format {
            path: path.to_path_buf(),
            line,
            reason,
        };
        match lines.next() {
            Some(Ok(h)) if h.trim_end() == BUFFER_HEADER => {}
            Some(Ok(h)) => return Err(bad(1, format!("unexpected header {h:?}"))),
            Some(Err(e)) => return Err(Error::io(path, e)),
            None => return Err(bad(1, "empty file".into())),
        }
        let mut buf = ReplayBuffer::new();
        for (i, line) in lines.enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let seq: TrainingSequence = serde_json::from_str(&line).map_err(|e| bad(i + 2, e.to_string()))?;
            buf.add(seq);
        }
        Ok(buf)
    }
}
