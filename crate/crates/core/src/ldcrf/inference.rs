//! Log-space forward–backward and the quantities built on it.

use super::{LabeledSequence, LdcrfError, LdcrfModel};
use crate::features::FeatureFrame;

/// Windowed observation vectors, `len × dim`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoded {
    pub len: usize,
    pub dim: usize,
    pub phi: Vec<f64>,
}

impl Encoded {
    pub fn row(&self, i: usize) -> &[f64] {
        &self.phi[i * self.dim..(i + 1) * self.dim]
    }
}

/// Builds `φ(x, i)` for every position: for each lag `0..=window`, the
/// values of frame `max(i - lag, 0)` with NaN as 0, then its validity bits.
pub fn encode(frames: &[FeatureFrame], window: usize) -> Encoded {
    let f = frames.first().map_or(0, |fr| fr.values.len());
    let dim = (window + 1) * 2 * f;
    let mut phi = Vec::with_capacity(frames.len() * dim);
    for i in 0..frames.len() {
        for lag in 0..=window {
            let src = &frames[i.saturating_sub(lag)].values;
            phi.extend(src.iter().map(|v| if v.is_nan() { 0.0 } else { *v }));
            phi.extend(src.iter().map(|v| if v.is_nan() { 0.0 } else { 1.0 }));
        }
    }
    Encoded { len: frames.len(), dim, phi }
}

fn log_sum_exp(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = xs.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.map(|x| (x - max).exp()).sum::<f64>().ln()
}

fn node_scores(model: &LdcrfModel, enc: &Encoded) -> Vec<f64> {
    let h = model.hidden_states();
    let d = enc.dim;
    let mut out = vec![0.0; enc.len * h];
    for i in 0..enc.len {
        let x = enc.row(i);
        for s in 0..h {
            let w = &model.state_weights[s * d..(s + 1) * d];
            out[i * h + s] = w.iter().zip(x).map(|(a, b)| a * b).sum();
        }
    }
    out
}

struct Lattice {
    h: usize,
    len: usize,
    alpha: Vec<f64>,
    beta: Vec<f64>,
    log_z: f64,
}

fn run_lattice(model: &LdcrfModel, scores: &[f64], len: usize, labels: Option<&[u8]>) -> Lattice {
    let h = model.hidden_states();
    let trans = &model.transition_weights;
    let allowed = |i: usize, s: usize| labels.is_none_or(|y| model.label_of(s) == y[i]);
    let mut alpha = vec![f64::NEG_INFINITY; len * h];
    let mut beta = vec![f64::NEG_INFINITY; len * h];

    for s in 0..h {
        if allowed(0, s) {
            alpha[s] = scores[s];
        }
    }
    for i in 1..len {
        for s in 0..h {
            if !allowed(i, s) {
                continue;
            }
            let prev = &alpha[(i - 1) * h..i * h];
            let lse = log_sum_exp((0..h).map(|p| prev[p] + trans[p * h + s]));
            alpha[i * h + s] = scores[i * h + s] + lse;
        }
    }
    for s in 0..h {
        if allowed(len - 1, s) {
            beta[(len - 1) * h + s] = 0.0;
        }
    }
    for i in (0..len - 1).rev() {
        for s in 0..h {
            if !allowed(i, s) {
                continue;
            }
            let next = i + 1;
            let lse = log_sum_exp(
                (0..h).map(|n| trans[s * h + n] + scores[next * h + n] + beta[next * h + n]),
            );
            beta[i * h + s] = lse;
        }
    }
    let log_z = log_sum_exp(alpha[(len - 1) * h..].iter().copied());
    Lattice { h, len, alpha, beta, log_z }
}

impl Lattice {
    fn marginal(&self, i: usize, s: usize) -> f64 {
        (self.alpha[i * self.h + s] + self.beta[i * self.h + s] - self.log_z).exp()
    }

    fn node_marginals(&self) -> Vec<f64> {
        (0..self.len).flat_map(|i| (0..self.h).map(move |s| (i, s))).map(|(i, s)| self.marginal(i, s)).collect()
    }

    /// Expected transition counts summed over positions.
    fn expected_transitions(&self, scores: &[f64], trans: &[f64]) -> Vec<f64> {
        let h = self.h;
        let mut out = vec![0.0; h * h];
        for i in 1..self.len {
            for p in 0..h {
                let a = self.alpha[(i - 1) * h + p];
                if a == f64::NEG_INFINITY {
                    continue;
                }
                for n in 0..h {
                    let b = self.beta[i * h + n];
                    if b == f64::NEG_INFINITY {
                        continue;
                    }
                    out[p * h + n] += (a + trans[p * h + n] + scores[i * h + n] + b - self.log_z).exp();
                }
            }
        }
        out
    }
}

/// Per-position hidden-state marginals (`len × hidden`, row-major).
#[derive(Debug, Clone, PartialEq)]
pub struct Marginals {
    pub hidden: usize,
    pub node: Vec<f64>,
    pub log_z: f64,
}

impl Marginals {
    pub fn at(&self, i: usize) -> &[f64] {
        &self.node[i * self.hidden..(i + 1) * self.hidden]
    }
}

/// Marginals and log partition function; with `labels`, position `i` is
/// restricted to the hidden states of `labels[i]`.
pub fn forward_backward(
    model: &LdcrfModel,
    frames: &[FeatureFrame],
    labels: Option<&[u8]>,
) -> Result<Marginals, LdcrfError> {
    if frames.is_empty() {
        return Err(LdcrfError::EmptySequence);
    }
    model.check_width(frames)?;
    if let Some(y) = labels {
        if y.len() != frames.len() {
            return Err(LdcrfError::LengthMismatch {
                trial_id: String::new(),
                frames: frames.len(),
                labels: y.len(),
            });
        }
    }
    let enc = encode(frames, model.hyperparams.window);
    let scores = node_scores(model, &enc);
    let lattice = run_lattice(model, &scores, enc.len, labels);
    Ok(Marginals { hidden: lattice.h, node: lattice.node_marginals(), log_z: lattice.log_z })
}

/// `log P(y | x)` of an encoded sequence, without the regularizer.
fn encoded_log_prob(model: &LdcrfModel, scores: &[f64], len: usize, labels: &[u8]) -> f64 {
    let free = run_lattice(model, scores, len, None);
    let clamped = run_lattice(model, scores, len, Some(labels));
    clamped.log_z - free.log_z
}

/// `P(y | x)` for a label sequence.
pub fn label_sequence_probability(model: &LdcrfModel, frames: &[FeatureFrame], labels: &[u8]) -> Result<f64, LdcrfError> {
    let seq = LabeledSequence::new("", frames.to_vec(), labels.to_vec());
    seq.validate(model.schema.len())?;
    let enc = encode(frames, model.hyperparams.window);
    let scores = node_scores(model, &enc);
    Ok(encoded_log_prob(model, &scores, enc.len, labels).exp())
}

/// `log P(y | x) - ||θ||² / (2σ²)`.
pub fn log_likelihood(model: &LdcrfModel, seq: &LabeledSequence) -> Result<f64, LdcrfError> {
    seq.validate(model.schema.len())?;
    let enc = encode(&seq.frames, model.hyperparams.window);
    let scores = node_scores(model, &enc);
    Ok(encoded_log_prob(model, &scores, enc.len, &seq.labels) - model.regularizer())
}

/// Gradient shaped like the model's weights.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelGradient {
    pub state: Vec<f64>,
    pub transition: Vec<f64>,
}

impl ModelGradient {
    pub fn flatten(&self) -> Vec<f64> {
        self.state.iter().chain(&self.transition).copied().collect()
    }

    pub fn max_norm(&self) -> f64 {
        self.state.iter().chain(&self.transition).fold(0.0, |m, g| m.max(g.abs()))
    }
}

/// Unregularized `log P(y|x)` and its gradient for an encoded sequence:
/// clamped minus free expectations of the feature functions.
pub(crate) fn encoded_value_and_gradient(model: &LdcrfModel, enc: &Encoded, labels: &[u8]) -> (f64, Vec<f64>) {
    let h = model.hidden_states();
    let d = enc.dim;
    let scores = node_scores(model, enc);
    let free = run_lattice(model, &scores, enc.len, None);
    let clamped = run_lattice(model, &scores, enc.len, Some(labels));
    let mut grad = vec![0.0; h * d + h * h];
    for i in 0..enc.len {
        let x = enc.row(i);
        for s in 0..h {
            let coef = clamped.marginal(i, s) - free.marginal(i, s);
            if coef != 0.0 {
                for (g, xv) in grad[s * d..(s + 1) * d].iter_mut().zip(x) {
                    *g += coef * xv;
                }
            }
        }
    }
    let trans = &model.transition_weights;
    let tc = clamped.expected_transitions(&scores, trans);
    let tf = free.expected_transitions(&scores, trans);
    for (k, g) in grad[h * d..].iter_mut().enumerate() {
        *g = tc[k] - tf[k];
    }
    (clamped.log_z - free.log_z, grad)
}

/// Gradient of [`log_likelihood`].
pub fn gradient(model: &LdcrfModel, seq: &LabeledSequence) -> Result<ModelGradient, LdcrfError> {
    seq.validate(model.schema.len())?;
    let enc = encode(&seq.frames, model.hyperparams.window);
    let (_, mut grad) = encoded_value_and_gradient(model, &enc, &seq.labels);
    let inv = 1.0 / model.hyperparams.l2_sigma2;
    for (g, w) in grad.iter_mut().zip(model.state_weights.iter().chain(&model.transition_weights)) {
        *g -= w * inv;
    }
    let transition = grad.split_off(model.state_weights.len());
    Ok(ModelGradient { state: grad, transition })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub labels: Vec<u8>,
    /// `P(label = 1)` per position.
    pub posterior: Vec<f64>,
}

/// Per-frame labels and interruptible posteriors. A label is 1 only when
/// the posterior strictly exceeds 0.5.
pub fn predict(model: &LdcrfModel, frames: &[FeatureFrame]) -> Result<Prediction, LdcrfError> {
    if frames.is_empty() {
        return Ok(Prediction { labels: Vec::new(), posterior: Vec::new() });
    }
    model.check_width(frames)?;
    let enc = encode(frames, model.hyperparams.window);
    let scores = node_scores(model, &enc);
    let lat = run_lattice(model, &scores, enc.len, None);
    let m = model.hyperparams.hidden_per_label;
    let h = lat.h;
    let mut labels = Vec::with_capacity(enc.len);
    let mut posterior = Vec::with_capacity(enc.len);
    for i in 0..enc.len {
        let at = |s: usize| lat.alpha[i * h + s] + lat.beta[i * h + s];
        let neg = log_sum_exp((0..m).map(at));
        let pos = log_sum_exp((m..h).map(at));
        let log_odds = pos - neg;
        posterior.push(1.0 / (1.0 + (-log_odds).exp()));
        labels.push((log_odds > 0.0) as u8);
    }
    Ok(Prediction { labels, posterior })
}
