use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{FeatureFrame, FeatureSchema};

pub const NORMALIZATION_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error, PartialEq)]
pub enum NormalizeError {
    #[error("frame width {got} does not match the {expected} normalization fields")]
    Width { expected: usize, got: usize },
    #[error("schema mismatch: constants are for {expected:?}, data is {got:?}")]
    Schema { expected: Vec<String>, got: Vec<String> },
    #[error("unsupported normalization format version {0}")]
    Version(u32),
}

/// Per-field divisors: the largest finite absolute value seen in training
/// (1 for fields that were never nonzero).
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizationConstants {
    pub schema: FeatureSchema,
    pub constants: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct Stored {
    format_version: u32,
    fields: Vec<String>,
    constants: BTreeMap<String, f64>,
}

impl Serialize for NormalizationConstants {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        Stored {
            format_version: NORMALIZATION_FORMAT_VERSION,
            fields: self.schema.fields.clone(),
            constants: self.schema.fields.iter().cloned().zip(self.constants.iter().copied()).collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for NormalizationConstants {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        let stored = Stored::deserialize(d)?;
        if stored.format_version != NORMALIZATION_FORMAT_VERSION {
            return Err(D::Error::custom(NormalizeError::Version(stored.format_version)));
        }
        let constants = stored
            .fields
            .iter()
            .map(|f| {
                stored.constants.get(f).copied().ok_or_else(|| D::Error::custom(format!("no constant for `{f}`")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        if stored.constants.len() != stored.fields.len() {
            return Err(D::Error::custom("constants name fields outside the field list"));
        }
        Ok(Self { schema: FeatureSchema { fields: stored.fields }, constants })
    }
}

impl NormalizationConstants {
    pub fn identity(schema: FeatureSchema) -> Self {
        let constants = vec![1.0; schema.len()];
        Self { schema, constants }
    }

    pub fn check_schema(&self, schema: &FeatureSchema) -> Result<(), NormalizeError> {
        if &self.schema != schema {
            return Err(NormalizeError::Schema {
                expected: self.schema.fields.clone(),
                got: schema.fields.clone(),
            });
        }
        Ok(())
    }

    pub fn apply(&self, frame: &FeatureFrame) -> Result<FeatureFrame, NormalizeError> {
        if frame.values.len() != self.constants.len() {
            return Err(NormalizeError::Width { expected: self.constants.len(), got: frame.values.len() });
        }
        Ok(FeatureFrame::new(
            frame.t,
            frame.values.iter().zip(&self.constants).map(|(v, c)| v / c).collect(),
        ))
    }
}

pub fn fit_normalizer(frames: &[FeatureFrame], schema: &FeatureSchema) -> Result<NormalizationConstants, NormalizeError> {
    let mut max_abs = vec![0.0f64; schema.len()];
    for f in frames {
        if f.values.len() != schema.len() {
            return Err(NormalizeError::Width { expected: schema.len(), got: f.values.len() });
        }
        for (m, v) in max_abs.iter_mut().zip(&f.values) {
            if v.is_finite() {
                *m = m.max(v.abs());
            }
        }
    }
    let constants = max_abs.into_iter().map(|m| if m > 0.0 { m } else { 1.0 }).collect();
    Ok(NormalizationConstants { schema: schema.clone(), constants })
}

/// Divides each field by its constant; NaN passes through. `schema` names
/// the layout of `frames` and must match the one the constants were fit on.
pub fn normalize(
    frames: &[FeatureFrame],
    schema: &FeatureSchema,
    constants: &NormalizationConstants,
) -> Result<Vec<FeatureFrame>, NormalizeError> {
    constants.check_schema(schema)?;
    frames.iter().map(|f| constants.apply(f)).collect()
}
