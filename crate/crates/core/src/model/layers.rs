//! Layer forward passes expressed on the autodiff tape.

use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{AutodiffError, Graph, Tensor, Var, ELU_ALPHA};
use crate::data::AttentionEdges;

type Result<T> = std::result::Result<T, AutodiffError>;

pub(crate) const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Clone, Debug)]
pub struct GatHeadVars {
    pub weight: Var,
    pub attention: Var,
}

#[derive(Clone, Debug)]
pub struct GatVars {
    pub heads: Vec<GatHeadVars>,
    pub slope: f64,
}

#[derive(Clone, Debug)]
pub struct ResidualVars {
    pub projection: Var,
    pub ln_gain: Var,
    pub ln_bias: Var,
    pub dropout: f64,
}

#[derive(Clone, Debug)]
pub struct GruVars {
    pub w_z: Var,
    pub w_r: Var,
    pub w_h: Var,
    pub u_z: Var,
    pub u_r: Var,
    pub u_h: Var,
    pub b_z: Var,
    pub b_r: Var,
    pub b_h: Var,
    pub hidden: usize,
}

#[derive(Clone, Debug)]
pub struct HeadVars {
    pub w1: Var,
    pub b1: Var,
    pub w2: Var,
    pub b2: Var,
    pub dropout: f64,
}

/// Inverted dropout; identity when `rng` is `None` or `p == 0`.
pub(crate) fn dropout(g: &mut Graph, x: Var, p: f64, rng: Option<&mut ChaCha8Rng>) -> Result<Var> {
    let Some(rng) = rng else { return Ok(x) };
    if p <= 0.0 {
        return Ok(x);
    }
    let keep = 1.0 / (1.0 - p);
    let shape = g.shape(x).to_vec();
    let n: usize = shape.iter().product();
    let mask: Vec<f64> = (0..n)
        .map(|_| if rng.random::<f64>() < p { 0.0 } else { keep })
        .collect();
    let m = g.constant(Tensor::new(shape, mask)?)?;
    g.mul(x, m)
}

/// One attention head: returns the transformed features `W x` and the
/// normalized coefficients (one per arc, grouped by receiving node).
pub(crate) fn gat_head_attention(
    g: &mut Graph,
    x: Var,
    head: &GatHeadVars,
    edges: &AttentionEdges,
    slope: f64,
) -> Result<(Var, Var)> {
    let wx = g.matmul(x, head.weight)?;
    let d = g.shape(wx)[1];
    let a_dst = g.slice(head.attention, 0, 0, d)?;
    let a_src = g.slice(head.attention, 0, d, d)?;
    let s_dst = g.matmul(wx, a_dst)?;
    let s_src = g.matmul(wx, a_src)?;
    let e_dst = g.gather_rows(s_dst, &edges.targets)?;
    let e_src = g.gather_rows(s_src, &edges.sources)?;
    let e = g.add(e_dst, e_src)?;
    let e = g.leaky_relu(e, slope)?;
    let alpha = g.segment_softmax(e, &edges.targets, edges.num_nodes)?;
    Ok((wx, alpha))
}

/// Per-arc multiplier from an undirected edge mask; self-loops stay at 1.
pub(crate) fn arc_mask(g: &mut Graph, edge_mask: Var, edges: &AttentionEdges) -> Result<Var> {
    let num_edges = g.shape(edge_mask)[0];
    let one = g.constant(Tensor::scalar(1.0))?;
    let ext = g.concat(&[edge_mask, one], 0)?;
    let idx: Arc<[usize]> = edges
        .edge_ids
        .iter()
        .map(|e| e.unwrap_or(num_edges))
        .collect();
    g.gather_rows(ext, &idx)
}

/// Multi-head attention layer with ELU, heads concatenated.
pub(crate) fn gat_layer(
    g: &mut Graph,
    vars: &GatVars,
    x: Var,
    edges: &AttentionEdges,
    arc_multiplier: Option<Var>,
) -> Result<Var> {
    let mut outs = Vec::with_capacity(vars.heads.len());
    for head in &vars.heads {
        let (wx, mut alpha) = gat_head_attention(g, x, head, edges, vars.slope)?;
        if let Some(m) = arc_multiplier {
            alpha = g.mul(alpha, m)?;
        }
        let msg = g.gather_rows(wx, &edges.sources)?;
        let msg = g.mul_col(msg, alpha)?;
        let agg = g.scatter_add_rows(msg, &edges.targets, edges.num_nodes)?;
        outs.push(g.elu(agg, ELU_ALPHA)?);
    }
    if outs.len() == 1 {
        Ok(outs[0])
    } else {
        g.concat(&outs, 1)
    }
}

/// Normalizes each row to zero mean and unit variance, then applies gain and bias.
pub(crate) fn layer_norm(g: &mut Graph, z: Var, gain: Var, bias: Var) -> Result<Var> {
    let mu = g.row_mean(z)?;
    let neg_mu = g.scale(mu, -1.0)?;
    let centered = g.add_col(z, neg_mu)?;
    let sq = g.square(centered)?;
    let var = g.row_mean(sq)?;
    let var = g.add_scalar(var, LAYER_NORM_EPS)?;
    let inv = g.powf(var, -0.5)?;
    let normed = g.mul_col(centered, inv)?;
    let scaled = g.mul_row(normed, gain)?;
    g.add_row(scaled, bias)
}

/// `z = dropout(LayerNorm(ELU(h + x W_r)))`.
pub(crate) fn residual(
    g: &mut Graph,
    vars: &ResidualVars,
    attention_out: Var,
    raw: Var,
    rng: Option<&mut ChaCha8Rng>,
) -> Result<Var> {
    let r = g.matmul(raw, vars.projection)?;
    let sum = g.add(attention_out, r)?;
    let z = g.elu(sum, ELU_ALPHA)?;
    let z = layer_norm(g, z, vars.ln_gain, vars.ln_bias)?;
    dropout(g, z, vars.dropout, rng)
}

fn affine(g: &mut Graph, x: Var, w: Var, h: Var, u: Var, b: Var) -> Result<Var> {
    let xw = g.matmul(x, w)?;
    let hu = g.matmul(h, u)?;
    let s = g.add(xw, hu)?;
    g.add_row(s, b)
}

/// Runs the GRU over `sequence` from a zero state and returns the last hidden state.
pub(crate) fn gru(g: &mut Graph, vars: &GruVars, sequence: &[Var]) -> Result<Var> {
    let n = g.shape(sequence[0])[0];
    let mut h = g.constant(Tensor::zeros(&[n, vars.hidden]))?;
    for &x in sequence {
        let z = affine(g, x, vars.w_z, h, vars.u_z, vars.b_z)?;
        let z = g.sigmoid(z)?;
        let r = affine(g, x, vars.w_r, h, vars.u_r, vars.b_r)?;
        let r = g.sigmoid(r)?;
        let rh = g.mul(r, h)?;
        let cand = affine(g, x, vars.w_h, rh, vars.u_h, vars.b_h)?;
        let cand = g.tanh(cand)?;
        // h_t = (1 - z) h + z cand = h + z (cand - h)
        let delta = g.sub(cand, h)?;
        let step = g.mul(z, delta)?;
        h = g.add(h, step)?;
    }
    Ok(h)
}

/// `y = W2 dropout(ReLU(x W1 + b1)) + b2`, one output per row.
pub(crate) fn head(
    g: &mut Graph,
    vars: &HeadVars,
    x: Var,
    rng: Option<&mut ChaCha8Rng>,
) -> Result<Var> {
    let a = g.matmul(x, vars.w1)?;
    let a = g.add_row(a, vars.b1)?;
    let a = g.relu(a)?;
    let a = dropout(g, a, vars.dropout, rng)?;
    let y = g.matmul(a, vars.w2)?;
    g.add_row(y, vars.b2)
}
