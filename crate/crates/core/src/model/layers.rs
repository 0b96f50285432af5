//! Graph-level building blocks: projections, cross-attention experts, the fusion
//! gate and one encoder layer.

use super::{ExpertMode, GateMode};
use crate::numerics::{Graph, Scalar, Var};
use crate::{Error, Result};

/// Projection weights of one attention expert.
#[derive(Clone, Copy, Debug)]
pub struct ExpertVars {
    pub query: Var,
    pub key: Var,
    pub value: Var,
    /// `attn_dim → model_dim` map, present only when the two widths differ.
    pub output: Option<Var>,
}

/// Fusion gate weights.
#[derive(Clone, Copy, Debug)]
pub enum GateVars {
    Bottleneck { w1: Var, w2: Var },
    Linear { w: Var },
    None,
}

#[derive(Clone, Copy, Debug)]
pub struct LayerVars {
    pub er: ExpertVars,
    pub ir: ExpertVars,
    pub gate: GateVars,
}

/// Per-token expert weights produced by a layer.
#[derive(Clone, Copy, Debug)]
pub enum LayerGate {
    /// Learned `n×2` weights on the graph.
    Learned(Var),
    /// The same `(er, ir)` pair for every token.
    Fixed([f64; 2]),
}

/// `H_I′ = H_I · W_i`
pub fn project_image<F: Scalar>(g: &mut Graph<F>, image: Var, w_i: Var) -> Result<Var> {
    g.matmul(image, w_i)
}

/// `H_T′ = H_T · W_t`
pub fn project_text<F: Scalar>(g: &mut Graph<F>, text: Var, w_t: Var) -> Result<Var> {
    g.matmul(text, w_t)
}

/// Single-head cross-attention `softmax(Q·Kᵀ/√d_k)·V` with `Q = queries·W_Q`,
/// `K = keys_values·W_K`, `V = keys_values·W_V`.
pub fn cross_attention<F: Scalar>(
    g: &mut Graph<F>,
    queries: Var,
    keys_values: Var,
    w: &ExpertVars,
) -> Result<Var> {
    let d_k = g.value(w.query).cols();
    if d_k == 0 || g.value(w.key).cols() != d_k {
        return Err(Error::Shape(format!(
            "query width {d_k} and key width {} must agree and be positive",
            g.value(w.key).cols()
        )));
    }
    let q = g.matmul(queries, w.query)?;
    let k = g.matmul(keys_values, w.key)?;
    let v = g.matmul(keys_values, w.value)?;
    let kt = g.transpose(k)?;
    let scores = g.matmul(q, kt)?;
    let scaled = g.scale(scores, F::ONE / F::from_usize(d_k).sqrt())?;
    let attn = g.softmax_rows(scaled)?;
    let out = g.matmul(attn, v)?;
    match w.output {
        Some(o) => g.matmul(out, o),
        None => Ok(out),
    }
}

/// Fuses the two expert outputs. Returns the per-token weights (when learned) and
/// the mixed output `M_G`.
pub fn gate<F: Scalar>(
    g: &mut Graph<F>,
    m_er: Var,
    m_ir: Var,
    weights: &GateVars,
    mode: GateMode,
) -> Result<(LayerGate, Var)> {
    match (mode, weights) {
        (GateMode::ForceEr, _) => Ok((LayerGate::Fixed([1.0, 0.0]), m_er)),
        (GateMode::ForceIr, _) => Ok((LayerGate::Fixed([0.0, 1.0]), m_ir)),
        (GateMode::Off, _) => Ok((LayerGate::Fixed([0.5, 0.5]), g.add(m_er, m_ir)?)),
        (GateMode::Bottleneck, GateVars::Bottleneck { w1, w2 }) => {
            let cat = g.concat_cols(m_er, m_ir)?;
            let hidden = g.matmul(cat, *w1)?;
            let hidden = g.gelu(hidden)?;
            let logits = g.matmul(hidden, *w2)?;
            let weights = g.softmax_rows(logits)?;
            Ok((LayerGate::Learned(weights), mix(g, weights, m_er, m_ir)?))
        }
        (GateMode::Linear, GateVars::Linear { w }) => {
            let cat = g.concat_cols(m_er, m_ir)?;
            let logits = g.matmul(cat, *w)?;
            let weights = g.softmax_rows(logits)?;
            Ok((LayerGate::Learned(weights), mix(g, weights, m_er, m_ir)?))
        }
        (mode, _) => Err(Error::Config(format!(
            "gate mode {mode:?} needs weights that this model does not have"
        ))),
    }
}

fn mix<F: Scalar>(g: &mut Graph<F>, weights: Var, m_er: Var, m_ir: Var) -> Result<Var> {
    let w_er = g.select_col(weights, 0)?;
    let w_ir = g.select_col(weights, 1)?;
    let a = g.mul_col(m_er, w_er)?;
    let b = g.mul_col(m_ir, w_ir)?;
    g.add(a, b)
}

/// One encoder layer: both experts attend over the shared image tokens, the gate
/// fuses them, and the result is added to the residual stream.
///
/// `text` must already be aligned to the row count of `hidden`.
pub fn encoder_layer<F: Scalar>(
    g: &mut Graph<F>,
    hidden: Var,
    text: Var,
    image: Var,
    weights: &LayerVars,
    expert_mode: ExpertMode,
    gate_mode: GateMode,
) -> Result<(Var, LayerGate)> {
    if g.value(text).rows() != g.value(hidden).rows() {
        return Err(Error::Shape(format!(
            "internal text stream has {} rows, residual stream {}",
            g.value(text).rows(),
            g.value(hidden).rows()
        )));
    }
    let (update, layer_gate) = match expert_mode {
        ExpertMode::ErOnly => (
            cross_attention(g, hidden, image, &weights.er)?,
            LayerGate::Fixed([1.0, 0.0]),
        ),
        ExpertMode::IrOnly => (
            cross_attention(g, text, image, &weights.ir)?,
            LayerGate::Fixed([0.0, 1.0]),
        ),
        ExpertMode::Both => match gate_mode {
            GateMode::ForceEr => (
                cross_attention(g, hidden, image, &weights.er)?,
                LayerGate::Fixed([1.0, 0.0]),
            ),
            GateMode::ForceIr => (
                cross_attention(g, text, image, &weights.ir)?,
                LayerGate::Fixed([0.0, 1.0]),
            ),
            _ => {
                let m_er = cross_attention(g, hidden, image, &weights.er)?;
                let m_ir = cross_attention(g, text, image, &weights.ir)?;
                let (lg, mixed) = gate(g, m_er, m_ir, &weights.gate, gate_mode)?;
                (mixed, lg)
            }
        },
    };
    Ok((g.add(hidden, update)?, layer_gate))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Tensor;

    fn t(rows: &[Vec<f64>]) -> Tensor<f64> {
        Tensor::from_rows(rows).unwrap()
    }

    #[test]
    fn single_key_attention_returns_its_value() {
        let mut g = Graph::<f64>::new();
        let q = g.constant(t(&[vec![1.0, 2.0], vec![-3.0, 0.5]]));
        let kv = g.constant(t(&[vec![0.5, -1.0]]));
        let id = g.constant(Tensor::identity(2).unwrap());
        let w = ExpertVars {
            query: id,
            key: id,
            value: id,
            output: None,
        };
        let out = cross_attention(&mut g, q, kv, &w).unwrap();
        assert_eq!(g.value(out).data(), [0.5, -1.0, 0.5, -1.0]);
    }

    #[test]
    fn equal_scores_average_the_values() {
        let mut g = Graph::<f64>::new();
        let q = g.constant(t(&[vec![0.0, 0.0]]));
        let kv = g.constant(t(&[vec![1.0, 3.0], vec![3.0, -1.0]]));
        let id = g.constant(Tensor::identity(2).unwrap());
        let w = ExpertVars {
            query: id,
            key: id,
            value: id,
            output: None,
        };
        let out = cross_attention(&mut g, q, kv, &w).unwrap();
        assert_eq!(g.value(out).data(), [2.0, 1.0]);
    }

    #[test]
    fn learned_gate_output_is_a_convex_mix() {
        let mut g = Graph::<f64>::new();
        let er = g.constant(t(&[vec![1.0, -2.0], vec![0.0, 4.0]]));
        let ir = g.constant(t(&[vec![-1.0, 2.0], vec![3.0, 4.0]]));
        let w1 = g.constant(t(&[vec![0.3, -0.2], vec![0.1, 0.4], vec![-0.5, 0.2], vec![0.7, 0.1]]));
        let w2 = g.constant(t(&[vec![1.0, -1.0], vec![0.5, 0.2]]));
        let (gate_w, mixed) = gate(&mut g, er, ir, &GateVars::Bottleneck { w1, w2 }, GateMode::Bottleneck).unwrap();
        let LayerGate::Learned(wv) = gate_w else {
            panic!("expected learned weights")
        };
        let w = g.value(wv).data().to_vec();
        let m = g.value(mixed).data().to_vec();
        let (e, i) = (g.value(er).data().to_vec(), g.value(ir).data().to_vec());
        for r in 0..2 {
            assert!((w[2 * r] + w[2 * r + 1] - 1.0).abs() < 1e-12);
            for c in 0..2 {
                let k = 2 * r + c;
                assert!((m[k] - (w[2 * r] * e[k] + w[2 * r + 1] * i[k])).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn fixed_gates() {
        let mut g = Graph::<f64>::new();
        let er = g.constant(t(&[vec![1.0]]));
        let ir = g.constant(t(&[vec![3.0]]));
        let (_, off) = gate(&mut g, er, ir, &GateVars::None, GateMode::Off).unwrap();
        assert_eq!(g.value(off).data(), [4.0]);
        let (_, forced) = gate(&mut g, er, ir, &GateVars::None, GateMode::ForceIr).unwrap();
        assert_eq!(forced, ir);
        assert!(gate(&mut g, er, ir, &GateVars::None, GateMode::Linear).is_err());
    }
}
