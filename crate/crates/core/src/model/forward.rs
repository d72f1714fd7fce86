use rand_chacha::ChaCha8Rng;

use super::layers::{self, GatHeadVars, GatVars, GruVars, HeadVars, ResidualVars};
use super::{GatLayerParams, ModelError, ModelParams, Variant};
use crate::autodiff::{Graph, Tensor, Var};
use crate::data::{AttentionEdges, RoadGraph, TemporalSample};

/// Parameters bound as nodes on one tape.
#[derive(Clone, Debug)]
pub struct ModelVars {
    gat: Option<GatVars>,
    residual: Option<ResidualVars>,
    gru: Option<GruVars>,
    head: HeadVars,
    all: Vec<Var>,
}

impl ModelVars {
    /// Registers every tensor of `params`; `trainable` decides whether they receive gradients.
    pub fn bind(g: &mut Graph, params: &ModelParams, trainable: bool) -> Result<Self, ModelError> {
        let mut all = Vec::new();
        let mut put = |g: &mut Graph, t: &Tensor| -> Result<Var, ModelError> {
            let v = if trainable {
                g.param(t.clone())?
            } else {
                g.constant(t.clone())?
            };
            all.push(v);
            Ok(v)
        };
        // Binding order must follow `ModelParams::named_tensors`.
        let gat = match &params.gat {
            Some(p) => {
                let mut heads = Vec::with_capacity(p.heads.len());
                for h in &p.heads {
                    heads.push(GatHeadVars {
                        weight: put(g, &h.weight)?,
                        attention: put(g, &h.attention)?,
                    });
                }
                Some(GatVars {
                    heads,
                    slope: p.leaky_slope,
                })
            }
            None => None,
        };
        let residual = match &params.residual {
            Some(p) => Some(ResidualVars {
                projection: put(g, &p.projection)?,
                ln_gain: put(g, &p.ln_gain)?,
                ln_bias: put(g, &p.ln_bias)?,
                dropout: p.dropout,
            }),
            None => None,
        };
        let gru = match &params.gru {
            Some(p) => Some(GruVars {
                w_z: put(g, &p.w_z)?,
                w_r: put(g, &p.w_r)?,
                w_h: put(g, &p.w_h)?,
                u_z: put(g, &p.u_z)?,
                u_r: put(g, &p.u_r)?,
                u_h: put(g, &p.u_h)?,
                b_z: put(g, &p.b_z)?,
                b_r: put(g, &p.b_r)?,
                b_h: put(g, &p.b_h)?,
                hidden: p.u_z.rows(),
            }),
            None => None,
        };
        let p = &params.head;
        let head = HeadVars {
            w1: put(g, &p.w1)?,
            b1: put(g, &p.b1)?,
            w2: put(g, &p.w2)?,
            b2: put(g, &p.b2)?,
            dropout: p.dropout,
        };
        Ok(Self {
            gat,
            residual,
            gru,
            head,
            all,
        })
    }

    /// Parameter nodes in `named_tensors` order.
    pub fn all(&self) -> &[Var] {
        &self.all
    }
}

/// Training mode draws dropout masks from the given generator.
pub enum ForwardMode<'a> {
    Eval,
    Train(&'a mut ChaCha8Rng),
}

impl ForwardMode<'_> {
    fn rng(&mut self) -> Option<&mut ChaCha8Rng> {
        match self {
            ForwardMode::Eval => None,
            ForwardMode::Train(r) => Some(&mut **r),
        }
    }
}

/// One forward pass configuration: model, arc list and optional explanation masks.
pub struct Forward<'a> {
    params: &'a ModelParams,
    edges: &'a AttentionEdges,
    feature_mask: Option<Var>,
    edge_mask: Option<Var>,
}

impl<'a> Forward<'a> {
    pub fn new(params: &'a ModelParams, edges: &'a AttentionEdges) -> Self {
        Self {
            params,
            edges,
            feature_mask: None,
            edge_mask: None,
        }
    }

    /// `1 x F` multiplier applied to every node at every time step.
    pub fn with_feature_mask(mut self, mask: Var) -> Self {
        self.feature_mask = Some(mask);
        self
    }

    /// `|E| x 1` multiplier on the attention coefficients of each undirected edge.
    pub fn with_edge_mask(mut self, mask: Var) -> Self {
        self.edge_mask = Some(mask);
        self
    }

    /// Returns an `N x 1` node of standardized predictions.
    pub fn run(
        &self,
        g: &mut Graph,
        vars: &ModelVars,
        inputs: &[Var],
        mut mode: ForwardMode<'_>,
    ) -> Result<Var, ModelError> {
        let p = self.params;
        p.check_variant()?;
        if inputs.len() != p.config.t0 {
            return Err(ModelError::WindowMismatch {
                expected: p.config.t0,
                got: inputs.len(),
            });
        }
        let mut steps = Vec::with_capacity(inputs.len());
        for &x in inputs {
            let f = g.shape(x)[1];
            if f != p.config.f_in {
                return Err(ModelError::FeatureMismatch {
                    expected: p.config.f_in,
                    got: f,
                });
            }
            steps.push(match self.feature_mask {
                Some(m) => g.mul_row(x, m)?,
                None => x,
            });
        }

        if p.variant == Variant::Mlp {
            let flat = if steps.len() == 1 {
                steps[0]
            } else {
                g.concat(&steps, 1)?
            };
            return Ok(layers::head(g, &vars.head, flat, mode.rng())?);
        }

        let gat = vars.gat.as_ref().ok_or(ModelError::VariantMismatch {
            variant: p.variant,
            part: "gat",
        })?;
        let arc_mult = match self.edge_mask {
            Some(m) => Some(layers::arc_mask(g, m, self.edges)?),
            None => None,
        };
        let spatial_steps: &[Var] = if p.variant.uses_gru() {
            &steps
        } else {
            &steps[steps.len() - 1..]
        };
        let mut embedded = Vec::with_capacity(spatial_steps.len());
        for &x in spatial_steps {
            let h = layers::gat_layer(g, gat, x, self.edges, arc_mult)?;
            let z = match &vars.residual {
                Some(r) => layers::residual(g, r, h, x, mode.rng())?,
                None => h,
            };
            embedded.push(z);
        }
        let summary = match &vars.gru {
            Some(gru) => layers::gru(g, gru, &embedded)?,
            None => embedded[0],
        };
        Ok(layers::head(g, &vars.head, summary, mode.rng())?)
    }
}

/// Standardized predictions for a standardized sample.
pub fn predict(
    params: &ModelParams,
    sample: &TemporalSample,
    graph: &RoadGraph,
) -> Result<Vec<f64>, ModelError> {
    let edges = graph.attention_edges(params.config.self_loops);
    let mut g = Graph::new();
    let vars = ModelVars::bind(&mut g, params, false)?;
    let inputs = sample
        .inputs
        .iter()
        .map(|x| g.constant(x.clone()))
        .collect::<Result<Vec<_>, _>>()?;
    let out = Forward::new(params, &edges).run(&mut g, &vars, &inputs, ForwardMode::Eval)?;
    Ok(g.value(out).data().to_vec())
}

/// Normalized attention coefficients of each head (`|arcs| x 1`, grouped by receiving node).
pub fn attention_coefficients(
    gat: &GatLayerParams,
    x: &Tensor,
    edges: &AttentionEdges,
) -> Result<Vec<Tensor>, ModelError> {
    let mut g = Graph::new();
    let xv = g.constant(x.clone())?;
    let mut out = Vec::with_capacity(gat.heads.len());
    for h in &gat.heads {
        let vars = GatHeadVars {
            weight: g.constant(h.weight.clone())?,
            attention: g.constant(h.attention.clone())?,
        };
        let (_, alpha) = layers::gat_head_attention(&mut g, xv, &vars, edges, gat.leaky_slope)?;
        out.push(g.value(alpha).clone());
    }
    Ok(out)
}
