//! Trial-grouped k-fold cross-validation.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{predict, train, LabeledSequence, LdcrfError, LdcrfHyperparams};
use crate::analysis::Confusion;
use crate::features::FeatureSchema;
use crate::{par, rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold: usize,
    pub test_trials: Vec<String>,
    pub confusion: Confusion,
    pub f1: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossValidation {
    pub folds: Vec<FoldReport>,
    /// Confusion summed over all test frames.
    pub pooled: Confusion,
    pub f1: f64,
    pub accuracy: f64,
    pub mean_fold_f1: f64,
}

/// Fold index per sequence. Distinct trial ids are shuffled and dealt
/// round-robin, so sequences sharing an id always share a fold.
pub fn fold_assignment(trial_ids: &[&str], folds: usize, seed: u64) -> Result<Vec<usize>, LdcrfError> {
    let mut distinct: Vec<&str> = trial_ids.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
    if folds == 0 || distinct.len() < folds {
        return Err(LdcrfError::TooFewTrials { trials: distinct.len(), folds });
    }
    distinct.shuffle(&mut rng::stream(seed, &[0xCF]));
    Ok(trial_ids
        .iter()
        .map(|id| distinct.iter().position(|d| d == id).expect("id is present") % folds)
        .collect())
}

/// Trains one model per fold with normalization fit on that fold's
/// training split, and scores the held-out trials.
pub fn cross_validate(
    dataset: &[LabeledSequence],
    schema: &FeatureSchema,
    hyperparams: LdcrfHyperparams,
    folds: usize,
    seed: u64,
) -> Result<CrossValidation, LdcrfError> {
    let ids: Vec<&str> = dataset.iter().map(|s| s.trial_id.as_str()).collect();
    let assignment = fold_assignment(&ids, folds, seed)?;
    let reports = par::map_range(folds, |fold| -> Result<FoldReport, LdcrfError> {
        let (test, training): (Vec<_>, Vec<_>) =
            dataset.iter().zip(&assignment).partition(|(_, &a)| a == fold);
        let training: Vec<LabeledSequence> = training.into_iter().map(|(s, _)| s.clone()).collect();
        let trained = train(&training, schema, hyperparams, rng::derive_seed(seed, &[fold as u64]))?;
        let mut confusion = Confusion::default();
        let mut test_trials = BTreeSet::new();
        for (seq, _) in test {
            seq.validate(schema.len())?;
            test_trials.insert(seq.trial_id.clone());
            let frames = trained.model.preprocess(&seq.frames)?;
            let out = predict(&trained.model, &frames)?;
            confusion.add_all(&seq.labels, &out.labels);
        }
        Ok(FoldReport {
            fold,
            test_trials: test_trials.into_iter().collect(),
            f1: confusion.f1(),
            accuracy: confusion.accuracy(),
            confusion,
        })
    });
    let folds_out: Vec<FoldReport> = reports.into_iter().collect::<Result<_, _>>()?;
    let pooled = folds_out.iter().fold(Confusion::default(), |acc, r| acc.merged(&r.confusion));
    let mean_fold_f1 = folds_out.iter().map(|r| r.f1).sum::<f64>() / folds_out.len() as f64;
    Ok(CrossValidation { f1: pooled.f1(), accuracy: pooled.accuracy(), pooled, mean_fold_f1, folds: folds_out })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_id_same_fold() {
        let ids = ["a", "b", "a", "c", "d", "b", "e"];
        let f = fold_assignment(&ids, 3, 9).unwrap();
        assert_eq!(f[0], f[2]);
        assert_eq!(f[1], f[5]);
        assert!(f.iter().all(|&k| k < 3));
    }

    #[test]
    fn too_few_trials() {
        assert!(matches!(fold_assignment(&["a", "b"], 5, 0), Err(LdcrfError::TooFewTrials { trials: 2, folds: 5 })));
    }
}
