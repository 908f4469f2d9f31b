//! Single-layer GRU with one softmax head per influence-source variable.
//!
//! Recurrence (`h_{-1} = 0`):
//!
//! ```text
//! z = sigmoid(Wz x + Uz h + bz)
//! r = sigmoid(Wr x + Ur h + br)
//! n = tanh(Wn x + Un (r * h) + bn)
//! h' = (1 - z) * h + z * n
//! ```
//!
//! Inputs are concatenated one-hot blocks (previous action with a null code,
//! then one block per local variable), so `W x` is computed as a sum of the
//! active columns.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::error::{Error, Result};
use crate::model::{ActionId, Domain, LocalHistory, LocalState, SimRng};
use crate::neural::buffer::TrainingSequence;
use crate::predictor::{InfluencePredictor, SourceDistribution};

pub type ActiveInputs = SmallVec<[usize; 8]>;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamLayout {
    pub num_actions: usize,
    pub local_cards: Vec<usize>,
    pub source_cards: Vec<usize>,
    pub hidden: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
struct Offsets {
    // input weights are stored column-major: one contiguous hidden-sized
    // column per input feature
    wz: usize,
    wr: usize,
    wn: usize,
    uz: usize,
    ur: usize,
    un: usize,
    bz: usize,
    br: usize,
    bn: usize,
    /// `(weights, bias)` per head; weights are `card x hidden`, row-major.
    heads: Vec<(usize, usize)>,
    total: usize,
}

impl ParamLayout {
    pub fn for_domain(domain: &dyn Domain, hidden: usize) -> Self {
        ParamLayout {
            num_actions: domain.num_actions(),
            local_cards: domain.local_cardinalities().to_vec(),
            source_cards: domain.source_cardinalities().to_vec(),
            hidden,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.num_actions + 1 + self.local_cards.iter().sum::<usize>()
    }

    pub fn num_params(&self) -> usize {
        self.offsets().total
    }

    fn offsets(&self) -> Offsets {
        let (i, h) = (self.input_dim(), self.hidden);
        let mut at = 0;
        let mut take = |n: usize| {
            let o = at;
            at += n;
            o
        };
        let wz = take(i * h);
        let wr = take(i * h);
        let wn = take(i * h);
        let uz = take(h * h);
        let ur = take(h * h);
        let un = take(h * h);
        let bz = take(h);
        let br = take(h);
        let bn = take(h);
        let heads = self
            .source_cards
            .iter()
            .map(|&c| (take(c * h), take(c)))
            .collect();
        Offsets {
            wz,
            wr,
            wn,
            uz,
            ur,
            un,
            bz,
            br,
            bn,
            heads,
            total: at,
        }
    }

    /// Active feature indices for one history element.
    pub fn encode(&self, prev_action: Option<ActionId>, local: &LocalState, out: &mut ActiveInputs) {
        out.clear();
        out.push(prev_action.unwrap_or(self.num_actions));
        let mut offset = self.num_actions + 1;
        for (&v, &c) in local.values().iter().zip(&self.local_cards) {
            debug_assert!((v as usize) < c);
            out.push(offset + v as usize);
            offset += c;
        }
    }

    fn check_local(&self, local: &LocalState) -> Result<()> {
        if local.values().len() != self.local_cards.len()
            || local
                .values()
                .iter()
                .zip(&self.local_cards)
                .any(|(&v, &c)| v as usize >= c)
        {
            return Err(Error::Shape(format!(
                "local state {:?} does not fit cardinalities {:?}",
                local.values(),
                self.local_cards
            )));
        }
        Ok(())
    }
}

/// Influence-predictor weights `θ`, stored as one flat vector.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictorParams {
    layout: ParamLayout,
    offsets: Offsets,
    pub values: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct PredictorFile {
    format: String,
    version: u32,
    layout: ParamLayout,
    values: Vec<f64>,
}

const PREDICTOR_FORMAT: &str = "sisplan-predictor";
const PREDICTOR_VERSION: u32 = 1;

/// Per-step activations kept for backpropagation.
#[derive(Default)]
struct Trace {
    len: usize,
    inputs: Vec<ActiveInputs>,
    z: Vec<f64>,
    r: Vec<f64>,
    n: Vec<f64>,
    h: Vec<f64>,
}

/// Forward pass over one sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct ForwardOutput {
    /// Hidden state after each input, `len x hidden`.
    pub hidden: Vec<Vec<f64>>,
    /// Per step, per-variable log-probabilities concatenated in variable order.
    pub log_probs: Vec<Vec<f64>>,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl PredictorParams {
    pub fn zeros(layout: ParamLayout) -> Self {
        let offsets = layout.offsets();
        PredictorParams {
            values: vec![0.0; offsets.total],
            offsets,
            layout,
        }
    }

    /// Uniform init in `[-scale, scale]`; `scale = 1 / sqrt(hidden)` when not given.
    pub fn init(layout: ParamLayout, scale: Option<f64>, rng: &mut SimRng) -> Self {
        let scale = scale.unwrap_or(1.0 / (layout.hidden as f64).sqrt());
        let mut p = Self::zeros(layout);
        for v in p.values.iter_mut() {
            *v = rng.random_range(-scale..=scale);
        }
        p
    }

    pub fn from_values(layout: ParamLayout, values: Vec<f64>) -> Result<Self> {
        let offsets = layout.offsets();
        if values.len() != offsets.total {
            return Err(Error::Shape(format!(
                "expected {} parameters, got {}",
                offsets.total,
                values.len()
            )));
        }
        Ok(PredictorParams {
            layout,
            offsets,
            values,
        })
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    pub fn hidden(&self) -> usize {
        self.layout.hidden
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = PredictorFile {
            format: PREDICTOR_FORMAT.into(),
            version: PREDICTOR_VERSION,
            layout: self.layout.clone(),
            values: self.values.clone(),
        };
        let text = serde_json::to_string(&file).expect("predictor serializes");
        crate::harness::io::write_atomic(path, text.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: PredictorFile = serde_json::from_str(&text).map_err(|e| Error::Format {
            path: path.to_path_buf(),
            line: e.line(),
            reason: e.to_string(),
        })?;
        if file.format != PREDICTOR_FORMAT || file.version != PREDICTOR_VERSION {
            return Err(Error::Format {
                path: path.to_path_buf(),
                line: 1,
                reason: format!("unsupported predictor format {} v{}", file.format, file.version),
            });
        }
        Self::from_values(file.layout, file.values)
    }

    /// Computes the pre-activations and gates for one step.
    fn gates(&self, h_prev: &[f64], x: &[usize], z: &mut [f64], r: &mut [f64], n: &mut [f64]) {
        let hd = self.layout.hidden;
        let o = &self.offsets;
        let p = &self.values;
        z.copy_from_slice(&p[o.bz..o.bz + hd]);
        r.copy_from_slice(&p[o.br..o.br + hd]);
        n.copy_from_slice(&p[o.bn..o.bn + hd]);
        for &j in x {
            let col = j * hd;
            for i in 0..hd {
                z[i] += p[o.wz + col + i];
                r[i] += p[o.wr + col + i];
                n[i] += p[o.wn + col + i];
            }
        }
        for i in 0..hd {
            let (uz, ur) = (&p[o.uz + i * hd..o.uz + (i + 1) * hd], &p[o.ur + i * hd..o.ur + (i + 1) * hd]);
            let mut az = 0.0;
            let mut ar = 0.0;
            for k in 0..hd {
                az += uz[k] * h_prev[k];
                ar += ur[k] * h_prev[k];
            }
            z[i] = sigmoid(z[i] + az);
            r[i] = sigmoid(r[i] + ar);
        }
        for i in 0..hd {
            let un = &p[o.un + i * hd..o.un + (i + 1) * hd];
            let mut an = 0.0;
            for k in 0..hd {
                an += un[k] * r[k] * h_prev[k];
            }
            n[i] = (n[i] + an).tanh();
        }
    }

    /// Advances `hidden` by one input in place.
    pub fn step(&self, hidden: &mut [f64], x: &[usize]) {
        let hd = self.layout.hidden;
        let mut buf: SmallVec<[f64; 64]> = SmallVec::from_elem(0.0, 3 * hd);
        let (z, rest) = buf.split_at_mut(hd);
        let (r, n) = rest.split_at_mut(hd);
        self.gates(hidden, x, z, r, n);
        for i in 0..hd {
            hidden[i] += z[i] * (n[i] - hidden[i]);
        }
    }

    /// Log-probabilities of every head, concatenated in variable order.
    pub fn head_log_probs(&self, hidden: &[f64], out: &mut [f64]) {
        let hd = self.layout.hidden;
        let mut at = 0;
        for (&(w, b), &card) in self.offsets.heads.iter().zip(&self.layout.source_cards) {
            let logits = &mut out[at..at + card];
            for (c, logit) in logits.iter_mut().enumerate() {
                let row = &self.values[w + c * hd..w + (c + 1) * hd];
                *logit = self.values[b + c] + row.iter().zip(hidden).map(|(a, h)| a * h).sum::<f64>();
            }
            log_softmax_in_place(logits);
            at += card;
        }
    }

    /// Batch forward over a history, for tests and diagnostics.
    pub fn forward(&self, history: &LocalHistory) -> Result<ForwardOutput> {
        let mut hidden = vec![0.0; self.layout.hidden];
        let mut x = ActiveInputs::new();
        let n_out: usize = self.layout.source_cards.iter().sum();
        let mut out = ForwardOutput {
            hidden: Vec::with_capacity(history.len()),
            log_probs: Vec::with_capacity(history.len()),
        };
        for (a, l) in history.inputs() {
            self.layout.check_local(l)?;
            if let Some(a) = a {
                if a >= self.layout.num_actions {
                    return Err(Error::Shape(format!("action {a} out of range")));
                }
            }
            self.layout.encode(a, l, &mut x);
            self.step(&mut hidden, &x);
            let mut lp = vec![0.0; n_out];
            self.head_log_probs(&hidden, &mut lp);
            out.hidden.push(hidden.clone());
            out.log_probs.push(lp);
        }
        Ok(out)
    }

    /// Mean cross-entropy over every unmasked `(sequence, step)` pair.
    pub fn loss(&self, batch: &[&TrainingSequence]) -> f64 {
        self.loss_impl(batch, None)
    }

    /// Loss and its exact gradient (full backpropagation through time).
    /// `grads` is overwritten.
    pub fn loss_and_gradients(&self, batch: &[&TrainingSequence], grads: &mut Vec<f64>) -> f64 {
        grads.clear();
        grads.resize(self.values.len(), 0.0);
        self.loss_impl(batch, Some(grads))
    }

    fn loss_impl(&self, batch: &[&TrainingSequence], mut grads: Option<&mut Vec<f64>>) -> f64 {
        let count: usize = batch.iter().map(|s| s.num_targets()).sum();
        if count == 0 {
            return 0.0;
        }
        let scale = 1.0 / count as f64;
        let mut trace = Trace::default();
        let mut total = 0.0;
        for seq in batch {
            self.run_trace(seq, &mut trace);
            total += match grads.as_deref_mut() {
                Some(g) => self.backward(seq, &trace, scale, g),
                None => self.sequence_nll(seq, &trace),
            };
        }
        total * scale
    }

    fn run_trace(&self, seq: &TrainingSequence, trace: &mut Trace) {
        let hd = self.layout.hidden;
        let len = seq.num_inputs();
        trace.len = len;
        trace.inputs.resize_with(len, ActiveInputs::new);
        for buf in [&mut trace.z, &mut trace.r, &mut trace.n, &mut trace.h] {
            buf.clear();
            buf.resize(len * hd, 0.0);
        }
        let zero = vec![0.0; hd];
        for (t, (a, l)) in seq.inputs().enumerate() {
            self.layout.encode(a, l, &mut trace.inputs[t]);
            let (before, after) = trace.h.split_at_mut(t * hd);
            let h_prev: &[f64] = if t == 0 { &zero } else { &before[(t - 1) * hd..] };
            let (z, r, n) = (
                &mut trace.z[t * hd..(t + 1) * hd],
                &mut trace.r[t * hd..(t + 1) * hd],
                &mut trace.n[t * hd..(t + 1) * hd],
            );
            self.gates(h_prev, &trace.inputs[t], z, r, n);
            let h = &mut after[..hd];
            for i in 0..hd {
                h[i] = h_prev[i] + z[i] * (n[i] - h_prev[i]);
            }
        }
    }

    fn sequence_nll(&self, seq: &TrainingSequence, trace: &Trace) -> f64 {
        let hd = self.layout.hidden;
        let n_out: usize = self.layout.source_cards.iter().sum();
        let mut lp = vec![0.0; n_out];
        let mut total = 0.0;
        for (t, target) in seq.targets() {
            self.head_log_probs(&trace.h[t * hd..(t + 1) * hd], &mut lp);
            let mut at = 0;
            for (&v, &c) in target.values().iter().zip(&self.layout.source_cards) {
                total -= lp[at + v as usize];
                at += c;
            }
        }
        total
    }

    fn backward(&self, seq: &TrainingSequence, trace: &Trace, scale: f64, g: &mut [f64]) -> f64 {
        let hd = self.layout.hidden;
        let o = &self.offsets;
        let p = &self.values;
        let len = trace.len;
        let n_out: usize = self.layout.source_cards.iter().sum();

        // head gradients into dh per step
        let mut dh_head = vec![0.0; len * hd];
        let mut lp = vec![0.0; n_out];
        let mut nll = 0.0;
        for (t, target) in seq.targets() {
            let h = &trace.h[t * hd..(t + 1) * hd];
            self.head_log_probs(h, &mut lp);
            let mut at = 0;
            for (v_idx, (&v, &card)) in target.values().iter().zip(&self.layout.source_cards).enumerate() {
                let (w, b) = o.heads[v_idx];
                nll -= lp[at + v as usize];
                for c in 0..card {
                    let prob = lp[at + c].exp();
                    let dlogit = scale * (prob - if c == v as usize { 1.0 } else { 0.0 });
                    g[b + c] += dlogit;
                    for k in 0..hd {
                        g[w + c * hd + k] += dlogit * h[k];
                        dh_head[t * hd + k] += dlogit * p[w + c * hd + k];
                    }
                }
                at += card;
            }
        }

        let zero = vec![0.0; hd];
        let mut dh = vec![0.0; hd];
        let mut dh_prev = vec![0.0; hd];
        let mut daz = vec![0.0; hd];
        let mut dar = vec![0.0; hd];
        let mut dan = vec![0.0; hd];
        let mut rh = vec![0.0; hd];
        for t in (0..len).rev() {
            for k in 0..hd {
                dh[k] += dh_head[t * hd + k];
            }
            let h_prev: &[f64] = if t == 0 { &zero } else { &trace.h[(t - 1) * hd..t * hd] };
            let z = &trace.z[t * hd..(t + 1) * hd];
            let r = &trace.r[t * hd..(t + 1) * hd];
            let n = &trace.n[t * hd..(t + 1) * hd];

            for i in 0..hd {
                dh_prev[i] = dh[i] * (1.0 - z[i]);
                dan[i] = dh[i] * z[i] * (1.0 - n[i] * n[i]);
                daz[i] = dh[i] * (n[i] - h_prev[i]) * z[i] * (1.0 - z[i]);
                rh[i] = r[i] * h_prev[i];
            }
            // candidate path through Un (r * h)
            for k in 0..hd {
                let mut drh = 0.0;
                for i in 0..hd {
                    drh += p[o.un + i * hd + k] * dan[i];
                }
                dar[k] = drh * h_prev[k] * r[k] * (1.0 - r[k]);
                dh_prev[k] += drh * r[k];
            }
            for i in 0..hd {
                for k in 0..hd {
                    g[o.un + i * hd + k] += dan[i] * rh[k];
                    g[o.uz + i * hd + k] += daz[i] * h_prev[k];
                    g[o.ur + i * hd + k] += dar[i] * h_prev[k];
                    dh_prev[k] += p[o.uz + i * hd + k] * daz[i] + p[o.ur + i * hd + k] * dar[i];
                }
                g[o.bz + i] += daz[i];
                g[o.br + i] += dar[i];
                g[o.bn + i] += dan[i];
            }
            for &j in &trace.inputs[t] {
                let col = j * hd;
                for i in 0..hd {
                    g[o.wz + col + i] += daz[i];
                    g[o.wr + col + i] += dar[i];
                    g[o.wn + col + i] += dan[i];
                }
            }
            std::mem::swap(&mut dh, &mut dh_prev);
        }
        nll
    }
}

pub fn log_softmax_in_place(logits: &mut [f64]) {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|&l| (l - max).exp()).sum::<f64>().ln();
    for l in logits.iter_mut() {
        *l -= lse;
    }
}

impl InfluencePredictor for PredictorParams {
    fn hidden_size(&self) -> usize {
        self.layout.hidden
    }

    fn advance(&self, hidden: &mut [f64], prev_action: Option<ActionId>, local: &LocalState) {
        let mut x = ActiveInputs::new();
        self.layout.encode(prev_action, local, &mut x);
        self.step(hidden, &x);
    }

    fn source_distribution(&self, hidden: &[f64], _history: &LocalHistory, out: &mut SourceDistribution) {
        let slots = out.reset_factored(&self.layout.source_cards);
        self.head_log_probs(hidden, slots);
        for s in slots.iter_mut() {
            *s = s.exp();
        }
    }
}
