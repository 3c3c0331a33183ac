mod support;

use std::sync::Arc;

use approx::assert_abs_diff_eq;
use interrupt_engine::features::{FeatureFrame, FeatureSchema};
use interrupt_engine::ldcrf::*;
use proptest::prelude::*;
use support::enumeration::{all_label_sequences, enumerate, random_instance};

fn seq(inst: &support::enumeration::Instance) -> LabeledSequence {
    LabeledSequence::new("p", inst.frames.clone(), inst.labels.clone())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn matches_enumeration(seed in any::<u64>()) {
        let inst = random_instance(seed);
        let e = enumerate(&inst.model, &inst.frames, &inst.labels);
        let fb = forward_backward(&inst.model, &inst.frames, None).unwrap();
        prop_assert!((fb.log_z - e.log_z).abs() < 1e-9);
        for (a, b) in fb.node.iter().zip(&e.node) {
            prop_assert!((a - b).abs() < 1e-9);
        }
        let clamped = forward_backward(&inst.model, &inst.frames, Some(&inst.labels)).unwrap();
        prop_assert!((clamped.log_z - e.log_z_clamped).abs() < 1e-9);
        let p = label_sequence_probability(&inst.model, &inst.frames, &inst.labels).unwrap();
        prop_assert!((p - (e.log_z_clamped - e.log_z).exp()).abs() < 1e-9);
        let reg: f64 = inst.model.parameters().iter().map(|w| w * w).sum::<f64>() / (2.0 * inst.model.hyperparams.l2_sigma2);
        let ll = log_likelihood(&inst.model, &seq(&inst)).unwrap();
        prop_assert!((ll - (e.log_z_clamped - e.log_z - reg)).abs() < 1e-9);
        let pred = predict(&inst.model, &inst.frames).unwrap();
        for (i, (a, b)) in pred.posterior.iter().zip(&e.posterior).enumerate() {
            prop_assert!((a - b).abs() < 1e-9);
            if (b - 0.5).abs() > 1e-9 {
                prop_assert_eq!(pred.labels[i], u8::from(*b > 0.5));
            }
        }
    }

    #[test]
    fn label_probabilities_sum_to_one(seed in any::<u64>()) {
        let inst = random_instance(seed);
        let total: f64 = all_label_sequences(inst.frames.len())
            .iter()
            .map(|y| label_sequence_probability(&inst.model, &inst.frames, y).unwrap())
            .sum();
        prop_assert!((total - 1.0).abs() < 1e-9);
    }

    #[test]
    fn gradient_matches_central_differences(seed in any::<u64>()) {
        let inst = random_instance(seed);
        let s = seq(&inst);
        let g = gradient(&inst.model, &s).unwrap().flatten();
        let theta = inst.model.parameters();
        let h = 1e-5;
        let fd: Vec<f64> = (0..theta.len())
            .map(|k| {
                let mut up = theta.clone();
                up[k] += h;
                let mut dn = theta.clone();
                dn[k] -= h;
                let f = |t: &[f64]| log_likelihood(&inst.model.with_parameters(t), &s).unwrap();
                (f(&up) - f(&dn)) / (2.0 * h)
            })
            .collect();
        let diff: f64 = g.iter().zip(&fd).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let scale: f64 = g.iter().map(|a| a * a).sum::<f64>().sqrt().max(1e-8);
        prop_assert!(diff / scale < 1e-5, "relative error {}", diff / scale);
    }

    /// Relabeling hidden states inside a label block changes nothing.
    #[test]
    fn hidden_permutation_equivariance(seed in any::<u64>(), rot in 1usize..4) {
        let inst = random_instance(seed);
        let m = inst.model.hyperparams.hidden_per_label;
        let h = 2 * m;
        let d = inst.model.observation_dim();
        let perm: Vec<usize> = (0..h).map(|s| (s / m) * m + (s % m + rot) % m).collect();
        let mut permuted = inst.model.clone();
        for s in 0..h {
            permuted.state_weights[perm[s] * d..(perm[s] + 1) * d]
                .copy_from_slice(&inst.model.state_weights[s * d..(s + 1) * d]);
            for u in 0..h {
                permuted.transition_weights[perm[s] * h + perm[u]] = inst.model.transition_weights[s * h + u];
            }
        }
        let a = label_sequence_probability(&inst.model, &inst.frames, &inst.labels).unwrap();
        let b = label_sequence_probability(&permuted, &inst.frames, &inst.labels).unwrap();
        prop_assert!((a - b).abs() < 1e-12);
        let fa = forward_backward(&inst.model, &inst.frames, None).unwrap();
        let fb = forward_backward(&permuted, &inst.frames, None).unwrap();
        for i in 0..inst.frames.len() {
            for s in 0..h {
                prop_assert!((fa.at(i)[s] - fb.at(i)[perm[s]]).abs() < 1e-12);
            }
        }
    }

    /// Streaming classification reports the last position of a batch
    /// prediction over the current buffer.
    #[test]
    fn online_equals_batch(seed in any::<u64>(), len in 1usize..30) {
        let inst = random_instance(seed);
        let width = inst.model.schema.len();
        let frames: Vec<FeatureFrame> = (0..len).map(|i| inst.frames[i % inst.frames.len()].clone()).collect();
        let model = Arc::new(inst.model.clone());
        let mut online = OnlineSession::new(model.clone());
        for (i, f) in frames.iter().enumerate() {
            prop_assert_eq!(f.values.len(), width);
            let got = online.push(f.clone()).unwrap();
            let start = (i + 1).saturating_sub(DEFAULT_BUFFER);
            let batch = predict(&model, &frames[start..=i]).unwrap();
            prop_assert_eq!(got.label, *batch.labels.last().unwrap());
            prop_assert_eq!(got.posterior.to_bits(), batch.posterior.last().unwrap().to_bits());
        }
    }

    #[test]
    fn model_json_round_trip(seed in any::<u64>()) {
        let inst = random_instance(seed);
        let back = model_from_json(&model_to_json(&inst.model)).unwrap();
        prop_assert_eq!(back, inst.model);
    }
}

#[test]
fn zero_weights_are_uninformative() {
    for t in 1..=6 {
        let hp = LdcrfHyperparams::default();
        let model = LdcrfModel::zeros(FeatureSchema::anonymous(3), hp);
        let frames: Vec<FeatureFrame> = (0..t).map(|i| FeatureFrame::new(i as f64, vec![1.0, f64::NAN, -2.0])).collect();
        let labels: Vec<u8> = (0..t).map(|i| (i % 2) as u8).collect();
        let p = label_sequence_probability(&model, &frames, &labels).unwrap();
        assert_abs_diff_eq!(p.ln(), t as f64 * 0.5f64.ln(), epsilon = 1e-12);
        let pred = predict(&model, &frames).unwrap();
        assert!(pred.posterior.iter().all(|&q| (q - 0.5).abs() < 1e-12));
        assert!(pred.labels.iter().all(|&y| y == 0));
    }
}

#[test]
fn model_file_round_trip() {
    let inst = random_instance(17);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.json");
    save_model(&inst.model, &path).unwrap();
    assert_eq!(load_model(&path).unwrap(), inst.model);
    let text = std::fs::read_to_string(&path).unwrap();
    save_model(&load_model(&path).unwrap(), &path).unwrap();
    assert_eq!(std::fs::read_to_string(&path).unwrap(), text);
}

#[test]
fn training_improves_objective_and_is_deterministic() {
    let hp = LdcrfHyperparams { hidden_per_label: 2, window: 1, max_iterations: 60, ..Default::default() };
    let data: Vec<LabeledSequence> = (0..4)
        .map(|k| {
            let labels: Vec<u8> = (0..40).map(|i| (((i + k) / 7) % 2) as u8).collect();
            let frames = labels
                .iter()
                .enumerate()
                .map(|(i, &y)| FeatureFrame::new(i as f64 * 0.5, vec![f64::from(y) * 2.0 - 1.0 + 0.1 * (i % 3) as f64, 0.3]))
                .collect();
            LabeledSequence::new(format!("t{k}"), frames, labels)
        })
        .collect();
    let schema = FeatureSchema::anonymous(2);
    let a = train(&data, &schema, hp, 3).unwrap();
    let b = train(&data, &schema, hp, 3).unwrap();
    assert_eq!(a.model, b.model);
    let trace = &a.diagnostics.objective_trace;
    assert!(trace.windows(2).all(|w| w[1] >= w[0] - 1e-9));
    assert!(trace.last().unwrap() > trace.first().unwrap());
    for s in &data {
        let pred = predict(&a.model, &a.model.preprocess(&s.frames).unwrap()).unwrap();
        let agree = pred.labels.iter().zip(&s.labels).filter(|(p, y)| p == y).count();
        assert!(agree as f64 / s.labels.len() as f64 > 0.9);
    }
}
