use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ExplainError;
use crate::data::{RoadGraph, TemporalSample};
use crate::model::{predict, ModelParams};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureImportance {
    pub feature_names: Vec<String>,
    /// Mean increase in MSE when the feature is shuffled across nodes.
    pub raw: Vec<f64>,
    /// Raw scores with negatives set to zero, divided by their total.
    pub normalized: Vec<f64>,
}

impl FeatureImportance {
    fn from_raw(feature_names: Vec<String>, raw: Vec<f64>) -> Self {
        Self {
            feature_names,
            normalized: normalize(&raw),
            raw,
        }
    }

    /// `(name, normalized score)` sorted by descending score, ties by name.
    pub fn ranked(&self) -> Vec<(&str, f64)> {
        let mut v: Vec<(&str, f64)> = self
            .feature_names
            .iter()
            .map(String::as_str)
            .zip(self.normalized.iter().copied())
            .collect();
        v.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        v
    }
}

pub(crate) fn normalize(raw: &[f64]) -> Vec<f64> {
    let clamped: Vec<f64> = raw.iter().map(|v| v.max(0.0)).collect();
    let total: f64 = clamped.iter().sum();
    if total > 0.0 {
        clamped.iter().map(|v| v / total).collect()
    } else {
        vec![0.0; raw.len()]
    }
}

fn mse(pred: &[f64], target: &[f64]) -> f64 {
    pred.iter().zip(target).map(|(p, y)| (p - y).powi(2)).sum::<f64>() / pred.len() as f64
}

/// Copies `sample` with column `feature` of every time step reordered so that
/// node `i` receives the value of node `perm[i]`.
fn shuffle_feature(sample: &TemporalSample, feature: usize, perm: &[usize]) -> TemporalSample {
    let mut out = sample.clone();
    for (x, src) in out.inputs.iter_mut().zip(&sample.inputs) {
        for (i, &j) in perm.iter().enumerate() {
            x.set(i, feature, src.get(j, feature));
        }
    }
    out
}

pub(crate) fn importance_with<P>(
    params: &ModelParams,
    sample: &TemporalSample,
    graph: &RoadGraph,
    repeats: usize,
    permutation: P,
) -> Result<Vec<f64>, ExplainError>
where
    P: Fn(usize, usize) -> Vec<usize> + Sync,
{
    if repeats == 0 {
        return Err(ExplainError::NoRepeats);
    }
    if sample.num_nodes() != graph.num_nodes() {
        return Err(ExplainError::NodeMismatch {
            sample: sample.num_nodes(),
            graph: graph.num_nodes(),
        });
    }
    let f = sample.num_features();
    if f != params.config.f_in {
        return Err(ExplainError::FeatureMismatch {
            expected: params.config.f_in,
            got: f,
        });
    }
    let base = mse(&predict(params, sample, graph)?, &sample.target);
    (0..f)
        .into_par_iter()
        .map(|feature| {
            let mut total = 0.0;
            for r in 0..repeats {
                let perm = permutation(feature, r);
                let shuffled = shuffle_feature(sample, feature, &perm);
                total += mse(&predict(params, &shuffled, graph)?, &sample.target);
            }
            Ok(total / repeats as f64 - base)
        })
        .collect()
}

/// Global importance of each input feature for a standardized sample.
///
/// For every feature the same node permutation is applied at all time steps.
/// Every (feature, repeat) pair draws from its own stream of `seed`, so the
/// result does not depend on thread scheduling.
pub fn permutation_importance(
    params: &ModelParams,
    sample: &TemporalSample,
    graph: &RoadGraph,
    feature_names: &[String],
    seed: u64,
    repeats: usize,
) -> Result<FeatureImportance, ExplainError> {
    if feature_names.len() != sample.num_features() {
        return Err(ExplainError::NameMismatch {
            names: feature_names.len(),
            features: sample.num_features(),
        });
    }
    let n = sample.num_nodes();
    let raw = importance_with(params, sample, graph, repeats, |feature, r| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(((feature as u64) << 32) | r as u64);
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rng);
        perm
    })?;
    Ok(FeatureImportance::from_raw(feature_names.to_vec(), raw))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tensor;
    use crate::model::{ModelConfig, Variant};

    fn setup() -> (ModelParams, TemporalSample, RoadGraph) {
        let ids: Vec<String> = (0..6).map(|i| format!("n{i}")).collect();
        let graph = RoadGraph::from_index_edges(ids, [(0, 1), (1, 2), (3, 4), (4, 5), (2, 3)]).unwrap();
        let mut c = ModelConfig::new(3, 2);
        c.heads = 1;
        c.d_head = 4;
        c.gru_hidden = 4;
        c.head_hidden = 4;
        let params = ModelParams::init(c, Variant::Full, 3).unwrap();
        let x = |k: f64| Tensor::matrix(6, 3, (0..18).map(|i| ((i as f64 + k) * 0.37).sin()).collect());
        let sample = TemporalSample {
            inputs: vec![x(0.0), x(1.0)],
            target: (0..6).map(|i| i as f64 * 0.1).collect(),
            input_years: vec![2021, 2022],
            target_year: 2023,
        };
        (params, sample, graph)
    }

    #[test]
    fn identity_permutation_scores_zero() {
        let (p, s, g) = setup();
        let raw = importance_with(&p, &s, &g, 3, |_, _| (0..6).collect()).unwrap();
        assert!(raw.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn constant_feature_scores_zero() {
        let (p, mut s, g) = setup();
        for x in &mut s.inputs {
            for i in 0..6 {
                x.set(i, 1, 0.25);
            }
        }
        let names: Vec<String> = ["a", "b", "c"].map(String::from).to_vec();
        let imp = permutation_importance(&p, &s, &g, &names, 1, 4).unwrap();
        assert_eq!(imp.raw[1], 0.0);
    }

    #[test]
    fn normalization_clamps_negatives() {
        let n = normalize(&[-1.0, 1.0, 3.0]);
        assert_eq!(n, vec![0.0, 0.25, 0.75]);
        assert_eq!(normalize(&[-1.0, 0.0]), vec![0.0, 0.0]);
    }

    #[test]
    fn deterministic_per_seed() {
        let (p, s, g) = setup();
        let names: Vec<String> = ["a", "b", "c"].map(String::from).to_vec();
        let a = permutation_importance(&p, &s, &g, &names, 9, 3).unwrap();
        let b = permutation_importance(&p, &s, &g, &names, 9, 3).unwrap();
        assert_eq!(a, b);
        assert!((a.normalized.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(permutation_importance(&p, &s, &g, &names, 9, 0).is_err());
    }
}
