use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ModelError, ModelParams};
use crate::data::Standardizer;

const FORMAT: &str = "pavegraph-checkpoint";
const VERSION: u32 = 1;

/// Self-describing JSON container for a trained model.
///
/// Holds the variant, every dimension, all parameter tensors with their
/// shapes, the fitted standardizer, the feature column names and the seed.
/// Floats are written in shortest round-trip form, so a write/read cycle
/// reproduces every parameter bit for bit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub feature_names: Vec<String>,
    pub standardizer: Standardizer,
    pub params: ModelParams,
}

impl Checkpoint {
    pub fn new(params: ModelParams, standardizer: Standardizer, feature_names: Vec<String>) -> Self {
        Self {
            format: FORMAT.to_owned(),
            version: VERSION,
            feature_names,
            standardizer,
            params,
        }
    }

    pub fn to_json(&self) -> Result<String, ModelError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        let ck: Checkpoint = serde_json::from_str(text)?;
        if ck.format != FORMAT || ck.version != VERSION {
            return Err(ModelError::Checkpoint(format!(
                "unsupported container {} v{}",
                ck.format, ck.version
            )));
        }
        for (name, t) in ck.params.named_tensors() {
            if t.len() != t.shape().iter().product::<usize>() {
                return Err(ModelError::Checkpoint(format!("tensor {name} has a bad shape")));
            }
        }
        ck.params.check_variant()?;
        if ck.params.config.f_in != ck.feature_names.len()
            || ck.standardizer.num_features() != ck.feature_names.len()
        {
            return Err(ModelError::Checkpoint(
                "feature count disagrees between params, standardizer and names".into(),
            ));
        }
        Ok(ck)
    }

    pub fn write(&self, path: &Path) -> Result<(), ModelError> {
        std::fs::write(path, self.to_json()?).map_err(|source| ModelError::File {
            path: path.to_owned(),
            source,
        })
    }

    pub fn read(path: &Path) -> Result<Self, ModelError> {
        let text = std::fs::read_to_string(path).map_err(|source| ModelError::File {
            path: path.to_owned(),
            source,
        })?;
        Self::from_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ModelConfig, Variant};

    fn scaler(f: usize) -> Standardizer {
        Standardizer {
            feature_means: vec![0.1; f],
            feature_stds: vec![1.0 / 3.0; f],
            target_mean: 80.99,
            target_std: 9.13,
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let mut c = ModelConfig::new(3, 2);
        c.d_head = 3;
        c.gru_hidden = 4;
        c.head_hidden = 5;
        let p = ModelParams::init(c, Variant::Full, 42).unwrap();
        let ck = Checkpoint::new(p, scaler(3), vec!["a".into(), "b".into(), "c".into()]);
        let back = Checkpoint::from_json(&ck.to_json().unwrap()).unwrap();
        for ((_, a), (_, b)) in ck.params.named_tensors().iter().zip(back.params.named_tensors()) {
            let bits_a: Vec<u64> = a.data().iter().map(|v| v.to_bits()).collect();
            let bits_b: Vec<u64> = b.data().iter().map(|v| v.to_bits()).collect();
            assert_eq!(bits_a, bits_b);
        }
        assert_eq!(ck, back);
    }

    #[test]
    fn rejects_foreign_json() {
        assert!(Checkpoint::from_json("{\"format\":\"x\"}").is_err());
    }
}
