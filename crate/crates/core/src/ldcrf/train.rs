//! Maximum a-posteriori training by L-BFGS on the negated objective.

use serde::{Deserialize, Serialize};

use super::inference::{encode, encoded_value_and_gradient, Encoded};
use super::lbfgs::{minimize, LbfgsOptions, LbfgsStop};
use super::{LabeledSequence, LdcrfError, LdcrfHyperparams, LdcrfModel};
use crate::features::{fit_normalizer, impute, FeatureFrame, FeatureSchema};
use crate::par;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainDiagnostics {
    /// Regularized log-likelihood at the start and after each accepted step.
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub evaluations: usize,
    pub final_gradient_norm: f64,
    pub converged: bool,
}

#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub model: LdcrfModel,
    pub diagnostics: TrainDiagnostics,
}

/// Fits normalization on the imputed training frames, then trains from a
/// seeded random start.
pub fn train(
    dataset: &[LabeledSequence],
    schema: &FeatureSchema,
    hyperparams: LdcrfHyperparams,
    seed: u64,
) -> Result<TrainedModel, LdcrfError> {
    if dataset.is_empty() {
        return Err(LdcrfError::EmptyDataset);
    }
    for seq in dataset {
        seq.validate(schema.len())?;
    }
    let imputed: Vec<Vec<FeatureFrame>> =
        dataset.iter().map(|s| impute(&s.frames, hyperparams.imputation_horizon)).collect();
    let all: Vec<FeatureFrame> = imputed.iter().flatten().cloned().collect();
    let normalization = fit_normalizer(&all, schema)?;

    let mut init = LdcrfModel::random_init(schema.clone(), hyperparams, seed);
    init.normalization = normalization;
    let prepared: Vec<LabeledSequence> = dataset
        .iter()
        .zip(imputed)
        .map(|(s, frames)| {
            let frames = frames.iter().map(|f| init.normalization.apply(f)).collect::<Result<_, _>>()?;
            Ok(LabeledSequence { trial_id: s.trial_id.clone(), frames, labels: s.labels.clone() })
        })
        .collect::<Result<_, LdcrfError>>()?;
    train_preprocessed(init, &prepared)
}

/// Trains from `init` on frames that are already imputed and normalized.
pub fn train_preprocessed(init: LdcrfModel, dataset: &[LabeledSequence]) -> Result<TrainedModel, LdcrfError> {
    if dataset.is_empty() {
        return Err(LdcrfError::EmptyDataset);
    }
    for seq in dataset {
        seq.validate(init.schema.len())?;
    }
    let window = init.hyperparams.window;
    let encoded: Vec<(Encoded, &[u8])> = dataset.iter().map(|s| (encode(&s.frames, window), &s.labels[..])).collect();

    let start = init.parameters();
    let (f0, _) = objective(&init, &encoded);
    if !f0.is_finite() {
        return Err(LdcrfError::NonFinite(f0));
    }

    let hp = init.hyperparams;
    let opts = LbfgsOptions { max_iterations: hp.max_iterations, grad_tol: hp.convergence_tol, ..Default::default() };
    let mut scratch = init.clone();
    let out = minimize(
        |theta| {
            scratch.set_parameters(theta);
            let (f, g) = objective(&scratch, &encoded);
            (-f, g.into_iter().map(|v| -v).collect())
        },
        start,
        &opts,
    );
    if out.stop == LbfgsStop::NonFinite || !out.f.is_finite() {
        return Err(LdcrfError::NonFinite(-out.f));
    }
    log::debug!("ldcrf training stopped after {} iterations: {:?}", out.iterations, out.stop);

    let final_gradient_norm = out.grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
    let diagnostics = TrainDiagnostics {
        objective_trace: out.trace.iter().map(|f| -f).collect(),
        iterations: out.iterations,
        evaluations: out.evaluations,
        final_gradient_norm,
        converged: out.stop == LbfgsStop::Converged,
    };
    Ok(TrainedModel { model: init.with_parameters(&out.x), diagnostics })
}

/// Regularized log-likelihood of a preprocessed dataset and its gradient.
pub fn dataset_objective(model: &LdcrfModel, dataset: &[LabeledSequence]) -> Result<(f64, Vec<f64>), LdcrfError> {
    for seq in dataset {
        seq.validate(model.schema.len())?;
    }
    let window = model.hyperparams.window;
    let encoded: Vec<(Encoded, &[u8])> = dataset.iter().map(|s| (encode(&s.frames, window), &s.labels[..])).collect();
    Ok(objective(model, &encoded))
}

fn objective(model: &LdcrfModel, encoded: &[(Encoded, &[u8])]) -> (f64, Vec<f64>) {
    let parts = par::map(encoded, |(enc, labels)| encoded_value_and_gradient(model, enc, labels));
    let inv = 1.0 / model.hyperparams.l2_sigma2;
    let mut grad: Vec<f64> = model.parameters().iter().map(|w| -w * inv).collect();
    let mut value = -model.regularizer();
    // Summed in input order so results do not depend on scheduling.
    for (v, g) in parts {
        value += v;
        grad.iter_mut().zip(g).for_each(|(a, b)| *a += b);
    }
    (value, grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ldcrf::predict;

    fn toy(n: usize, seed: u64) -> Vec<LabeledSequence> {
        (0..n)
            .map(|k| {
                let labels: Vec<u8> = (0..12).map(|i| ((i / 4 + k + seed as usize) % 2) as u8).collect();
                let frames = labels
                    .iter()
                    .enumerate()
                    .map(|(i, &y)| FeatureFrame::new(i as f64 * 0.5, vec![if y == 1 { 1.0 } else { -1.0 }, 0.3]))
                    .collect();
                LabeledSequence::new(format!("t{k}"), frames, labels)
            })
            .collect()
    }

    fn hp() -> LdcrfHyperparams {
        LdcrfHyperparams { hidden_per_label: 2, window: 1, ..Default::default() }
    }

    #[test]
    fn trace_is_monotone_and_fits_separable_data() {
        let data = toy(4, 0);
        let out = train(&data, &FeatureSchema::anonymous(2), hp(), 7).unwrap();
        let trace = &out.diagnostics.objective_trace;
        assert!(trace.windows(2).all(|w| w[1] >= w[0]));
        assert!(trace.last().unwrap() > trace.first().unwrap());
        for seq in &data {
            let frames = out.model.preprocess(&seq.frames).unwrap();
            assert_eq!(predict(&out.model, &frames).unwrap().labels, seq.labels);
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let data = toy(3, 1);
        let a = train(&data, &FeatureSchema::anonymous(2), hp(), 3).unwrap();
        let b = train(&data, &FeatureSchema::anonymous(2), hp(), 3).unwrap();
        assert_eq!(a.model, b.model);
    }

    #[test]
    fn rejects_empty_and_nonfinite() {
        assert!(matches!(train(&[], &FeatureSchema::anonymous(2), hp(), 0), Err(LdcrfError::EmptyDataset)));
        let mut init = LdcrfModel::zeros(FeatureSchema::anonymous(2), hp());
        init.state_weights[0] = f64::INFINITY;
        assert!(matches!(train_preprocessed(init, &toy(1, 0)), Err(LdcrfError::NonFinite(_))));
    }
}
