//! Brute-force LDCRF oracle: enumerates every hidden path. Shares no code
//! with the library beyond the model's plain weight layout.
#![allow(dead_code)]

use interrupt_engine::features::{FeatureFrame, FeatureSchema};
use interrupt_engine::ldcrf::{LdcrfHyperparams, LdcrfModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct Instance {
    pub model: LdcrfModel,
    pub frames: Vec<FeatureFrame>,
    pub labels: Vec<u8>,
}

/// Random small instance: T in 1..=4, 1..=4 hidden states per label,
/// 1..=5 features, window 0..=2, about 15% missing values.
pub fn random_instance(seed: u64) -> Instance {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let t = r.random_range(1..=4usize);
    let features = r.random_range(1..=5usize);
    let hp = LdcrfHyperparams {
        hidden_per_label: r.random_range(1..=4),
        window: r.random_range(0..=2),
        l2_sigma2: r.random_range(0.5..4.0),
        ..LdcrfHyperparams::default()
    };
    let mut model = LdcrfModel::zeros(FeatureSchema::anonymous(features), hp);
    for w in model.state_weights.iter_mut().chain(model.transition_weights.iter_mut()) {
        *w = r.random_range(-1.5..1.5);
    }
    let frames = (0..t)
        .map(|i| {
            let values = (0..features)
                .map(|_| if r.random_bool(0.15) { f64::NAN } else { r.random_range(-2.0..2.0) })
                .collect();
            FeatureFrame::new(i as f64 * 0.5, values)
        })
        .collect();
    let labels = (0..t).map(|_| r.random_range(0..=1u8)).collect();
    Instance { model, frames, labels }
}

fn phi(frames: &[FeatureFrame], i: usize, window: usize) -> Vec<f64> {
    let mut out = Vec::new();
    for lag in 0..=window {
        let j = if lag > i { 0 } else { i - lag };
        let v = &frames[j].values;
        for x in v {
            out.push(if x.is_finite() { *x } else { 0.0 });
        }
        for x in v {
            out.push(if x.is_finite() { 1.0 } else { 0.0 });
        }
    }
    out
}

fn for_each_path(len: usize, states: usize, mut f: impl FnMut(&[usize])) {
    let mut path = vec![0usize; len];
    loop {
        f(&path);
        let mut k = 0;
        loop {
            if k == len {
                return;
            }
            path[k] += 1;
            if path[k] < states {
                break;
            }
            path[k] = 0;
            k += 1;
        }
    }
}

pub fn path_score(model: &LdcrfModel, frames: &[FeatureFrame], path: &[usize]) -> f64 {
    let d = model.observation_dim();
    let h = model.hidden_states();
    let mut s = 0.0;
    for (i, &hi) in path.iter().enumerate() {
        let x = phi(frames, i, model.hyperparams.window);
        s += (0..d).map(|k| model.state_weights[hi * d + k] * x[k]).sum::<f64>();
        if i > 0 {
            s += model.transition_weights[path[i - 1] * h + hi];
        }
    }
    s
}

fn label(model: &LdcrfModel, h: usize) -> u8 {
    u8::from(h >= model.hyperparams.hidden_per_label)
}

fn lse(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

pub struct Enumerated {
    pub log_z: f64,
    /// `log Σ exp S` over paths consistent with the instance labels.
    pub log_z_clamped: f64,
    /// `P(h_i = s)`, `len × hidden`.
    pub node: Vec<f64>,
    /// `P(y_i = 1)`.
    pub posterior: Vec<f64>,
}

pub fn enumerate(model: &LdcrfModel, frames: &[FeatureFrame], labels: &[u8]) -> Enumerated {
    let h = model.hidden_states();
    let t = frames.len();
    let mut scores = Vec::new();
    let mut paths = Vec::new();
    for_each_path(t, h, |p| {
        scores.push(path_score(model, frames, p));
        paths.push(p.to_vec());
    });
    let log_z = lse(&scores);
    let clamped: Vec<f64> = scores
        .iter()
        .zip(&paths)
        .filter(|(_, p)| p.iter().zip(labels).all(|(&hi, &y)| label(model, hi) == y))
        .map(|(s, _)| *s)
        .collect();
    let mut node = vec![0.0; t * h];
    let mut posterior = vec![0.0; t];
    for (s, p) in scores.iter().zip(&paths) {
        let w = (s - log_z).exp();
        for (i, &hi) in p.iter().enumerate() {
            node[i * h + hi] += w;
            if label(model, hi) == 1 {
                posterior[i] += w;
            }
        }
    }
    Enumerated { log_z, log_z_clamped: lse(&clamped), node, posterior }
}

/// `P(y | x)` summed over paths for every one of the `2^T` label sequences.
pub fn all_label_sequences(t: usize) -> Vec<Vec<u8>> {
    (0..1u32 << t).map(|m| (0..t).map(|i| ((m >> i) & 1) as u8).collect()).collect()
}

/// Position of the first tick completing a run of `k` ones, 1-based.
pub fn first_run(labels: &[u8], k: usize) -> Option<usize> {
    (k..=labels.len()).find(|&end| labels[end - k..end].iter().all(|&l| l == 1))
}
