use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ModelConfig, ModelError, Variant};
use crate::autodiff::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GatHead {
    /// `F_in x d_head`
    pub weight: Tensor,
    /// `2 d_head x 1`; the first half scores the receiving node, the second the sender.
    pub attention: Tensor,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GatLayerParams {
    pub heads: Vec<GatHead>,
    pub leaky_slope: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualParams {
    /// `F_in x K d_head`
    pub projection: Tensor,
    pub ln_gain: Tensor,
    pub ln_bias: Tensor,
    pub dropout: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GruParams {
    pub w_z: Tensor,
    pub w_r: Tensor,
    pub w_h: Tensor,
    pub u_z: Tensor,
    pub u_r: Tensor,
    pub u_h: Tensor,
    pub b_z: Tensor,
    pub b_r: Tensor,
    pub b_h: Tensor,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeadParams {
    pub w1: Tensor,
    pub b1: Tensor,
    pub w2: Tensor,
    pub b2: Tensor,
    pub dropout: f64,
}

/// All learnable weights of one model instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub variant: Variant,
    pub seed: u64,
    pub gat: Option<GatLayerParams>,
    pub residual: Option<ResidualParams>,
    pub gru: Option<GruParams>,
    pub head: HeadParams,
}

/// Uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
fn uniform(rng: &mut ChaCha8Rng, rows: usize, cols: usize, fan_in: usize) -> Tensor {
    let bound = 1.0 / (fan_in as f64).sqrt();
    let data = (0..rows * cols)
        .map(|_| rng.random_range(-bound..=bound))
        .collect();
    Tensor::matrix(rows, cols, data)
}

fn linear(rng: &mut ChaCha8Rng, fan_in: usize, fan_out: usize) -> Tensor {
    uniform(rng, fan_in, fan_out, fan_in)
}

impl ModelParams {
    /// Deterministic initialization from `seed`.
    pub fn init(config: ModelConfig, variant: Variant, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = config.f_in;
        let d = config.d_head;
        let spatial = config.spatial_dim();

        let gat = variant.uses_graph().then(|| GatLayerParams {
            heads: (0..config.heads)
                .map(|_| GatHead {
                    weight: linear(&mut rng, f, d),
                    attention: uniform(&mut rng, 2 * d, 1, 2 * d),
                })
                .collect(),
            leaky_slope: config.leaky_slope,
        });
        let residual = variant.uses_residual().then(|| ResidualParams {
            projection: linear(&mut rng, f, spatial),
            ln_gain: Tensor::full(&[1, spatial], 1.0),
            ln_bias: Tensor::zeros(&[1, spatial]),
            dropout: config.spatial_dropout,
        });
        let hidden = config.gru_hidden;
        let gru = variant.uses_gru().then(|| GruParams {
            w_z: linear(&mut rng, spatial, hidden),
            w_r: linear(&mut rng, spatial, hidden),
            w_h: linear(&mut rng, spatial, hidden),
            u_z: linear(&mut rng, hidden, hidden),
            u_r: linear(&mut rng, hidden, hidden),
            u_h: linear(&mut rng, hidden, hidden),
            b_z: Tensor::zeros(&[1, hidden]),
            b_r: Tensor::zeros(&[1, hidden]),
            b_h: Tensor::zeros(&[1, hidden]),
        });
        let head_in = match variant {
            Variant::Full | Variant::StGat => hidden,
            Variant::Resgat | Variant::Vanilla => spatial,
            Variant::Mlp => config.t0 * f,
        };
        let hh = config.head_hidden;
        let head = HeadParams {
            w1: linear(&mut rng, head_in, hh),
            b1: uniform(&mut rng, 1, hh, head_in),
            w2: linear(&mut rng, hh, 1),
            b2: uniform(&mut rng, 1, 1, hh),
            dropout: config.head_dropout,
        };
        Ok(Self {
            config,
            variant,
            seed,
            gat,
            residual,
            gru,
            head,
        })
    }

    /// Every parameter tensor with a stable dotted name, in a fixed order.
    pub fn named_tensors(&self) -> Vec<(String, &Tensor)> {
        let mut out: Vec<(String, &Tensor)> = Vec::new();
        if let Some(gat) = &self.gat {
            for (k, h) in gat.heads.iter().enumerate() {
                out.push((format!("gat.head{k}.weight"), &h.weight));
                out.push((format!("gat.head{k}.attention"), &h.attention));
            }
        }
        if let Some(r) = &self.residual {
            out.push(("residual.projection".into(), &r.projection));
            out.push(("residual.ln_gain".into(), &r.ln_gain));
            out.push(("residual.ln_bias".into(), &r.ln_bias));
        }
        if let Some(g) = &self.gru {
            for (name, t) in [
                ("w_z", &g.w_z),
                ("w_r", &g.w_r),
                ("w_h", &g.w_h),
                ("u_z", &g.u_z),
                ("u_r", &g.u_r),
                ("u_h", &g.u_h),
                ("b_z", &g.b_z),
                ("b_r", &g.b_r),
                ("b_h", &g.b_h),
            ] {
                out.push((format!("gru.{name}"), t));
            }
        }
        let h = &self.head;
        out.push(("head.w1".into(), &h.w1));
        out.push(("head.b1".into(), &h.b1));
        out.push(("head.w2".into(), &h.w2));
        out.push(("head.b2".into(), &h.b2));
        out
    }

    /// Mutable tensors in the same order as [`Self::named_tensors`].
    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out: Vec<&mut Tensor> = Vec::new();
        if let Some(gat) = &mut self.gat {
            for h in &mut gat.heads {
                out.push(&mut h.weight);
                out.push(&mut h.attention);
            }
        }
        if let Some(r) = &mut self.residual {
            out.push(&mut r.projection);
            out.push(&mut r.ln_gain);
            out.push(&mut r.ln_bias);
        }
        if let Some(g) = &mut self.gru {
            out.extend([
                &mut g.w_z, &mut g.w_r, &mut g.w_h, &mut g.u_z, &mut g.u_r, &mut g.u_h, &mut g.b_z,
                &mut g.b_r, &mut g.b_h,
            ]);
        }
        let h = &mut self.head;
        out.extend([&mut h.w1, &mut h.b1, &mut h.w2, &mut h.b2]);
        out
    }

    pub fn num_parameters(&self) -> usize {
        self.named_tensors().iter().map(|(_, t)| t.len()).sum()
    }

    /// Checks that the sub-parameters required by the variant are present.
    pub fn check_variant(&self) -> Result<(), ModelError> {
        let missing = |part| ModelError::VariantMismatch {
            variant: self.variant,
            part,
        };
        if self.variant.uses_graph() && self.gat.is_none() {
            return Err(missing("gat"));
        }
        if self.variant.uses_residual() && self.residual.is_none() {
            return Err(missing("residual"));
        }
        if self.variant.uses_gru() && self.gru.is_none() {
            return Err(missing("gru"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_params() {
        let c = ModelConfig::new(11, 2);
        let a = ModelParams::init(c.clone(), Variant::Full, 1).unwrap();
        let b = ModelParams::init(c.clone(), Variant::Full, 1).unwrap();
        assert_eq!(a, b);
        let other = ModelParams::init(c, Variant::Full, 2).unwrap();
        assert_ne!(a, other);
    }

    #[test]
    fn init_bounds_and_shapes() {
        let mut c = ModelConfig::new(3, 2);
        c.heads = 2;
        c.d_head = 4;
        c.gru_hidden = 5;
        c.head_hidden = 6;
        let p = ModelParams::init(c, Variant::Full, 7).unwrap();
        let gat = p.gat.as_ref().unwrap();
        assert_eq!(gat.heads.len(), 2);
        assert_eq!(gat.heads[0].weight.shape(), &[3, 4]);
        assert_eq!(gat.heads[0].attention.shape(), &[8, 1]);
        let bound = 1.0 / 3f64.sqrt();
        assert!(gat.heads[0].weight.data().iter().all(|v| v.abs() <= bound));
        let gru = p.gru.as_ref().unwrap();
        assert_eq!(gru.w_z.shape(), &[8, 5]);
        assert_eq!(gru.u_h.shape(), &[5, 5]);
        assert!(gru.b_z.data().iter().all(|&v| v == 0.0));
        assert_eq!(p.head.w1.shape(), &[5, 6]);
        assert_eq!(p.named_tensors().len(), p.clone().tensors_mut().len());
    }

    #[test]
    fn variants_select_sub_params() {
        let c = ModelConfig::new(3, 2);
        let mlp = ModelParams::init(c.clone(), Variant::Mlp, 0).unwrap();
        assert!(mlp.gat.is_none() && mlp.gru.is_none() && mlp.residual.is_none());
        assert_eq!(mlp.head.w1.rows(), 6);
        let st = ModelParams::init(c.clone(), Variant::StGat, 0).unwrap();
        assert!(st.residual.is_none() && st.gru.is_some());
        let rg = ModelParams::init(c, Variant::Resgat, 0).unwrap();
        assert!(rg.gru.is_none() && rg.residual.is_some());
        assert_eq!(rg.head.w1.rows(), 256);
    }

    #[test]
    fn zero_heads_is_an_error() {
        let mut c = ModelConfig::new(11, 2);
        c.heads = 0;
        assert!(ModelParams::init(c, Variant::Full, 1).is_err());
    }
}
