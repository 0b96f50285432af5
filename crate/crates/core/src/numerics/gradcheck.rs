use super::{Graph, Tensor, Var};
use crate::{Error, Result};

/// Worst relative error between autograd and central differences, overall and per
/// parameter tensor.
#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub per_param: Vec<f64>,
    pub evaluations: usize,
}

fn evaluate<Fun>(f: &Fun, params: &[Tensor<f64>], with_grad: bool) -> Result<(f64, Vec<Vec<f64>>)>
where
    Fun: Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = params
        .iter()
        .map(|p| {
            if with_grad {
                g.param(p.clone())
            } else {
                g.constant(p.clone())
            }
        })
        .collect();
    let out = f(&mut g, &vars)?;
    let value = g.value(out);
    if value.len() != 1 {
        return Err(Error::Shape(format!(
            "grad_check needs a scalar function, got shape {:?}",
            value.shape()
        )));
    }
    let value = value.data()[0];
    if !value.is_finite() {
        return Err(Error::NonFinite {
            op: "grad_check objective".into(),
        });
    }
    if !with_grad {
        return Ok((value, Vec::new()));
    }
    g.backward(out)?;
    let grads = vars
        .iter()
        .zip(params)
        .map(|(&v, p)| g.grad(v).map_or_else(|| vec![0.0; p.len()], <[f64]>::to_vec))
        .collect();
    Ok((value, grads))
}

/// Compares reverse-mode gradients of a scalar `f` against central differences
/// `(f(p+eps) − f(p−eps)) / 2eps`, one coordinate at a time.
///
/// Relative error per coordinate is `|fd − ad| / (max(|fd|, |ad|) + 1e-8)`.
pub fn grad_check<Fun>(f: Fun, params: &[Tensor<f64>], eps: f64) -> Result<GradCheckReport>
where
    Fun: Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
{
    let (_, analytic) = evaluate(&f, params, true)?;
    let mut work: Vec<Tensor<f64>> = params.to_vec();
    let mut per_param = vec![0.0f64; params.len()];
    let mut evaluations = 1;
    for pi in 0..params.len() {
        for j in 0..params[pi].len() {
            let orig = params[pi].data()[j];
            work[pi].data_mut()[j] = orig + eps;
            let (plus, _) = evaluate(&f, &work, false)?;
            work[pi].data_mut()[j] = orig - eps;
            let (minus, _) = evaluate(&f, &work, false)?;
            work[pi].data_mut()[j] = orig;
            evaluations += 2;

            let fd = (plus - minus) / (2.0 * eps);
            let ad = analytic[pi][j];
            let rel = (fd - ad).abs() / (fd.abs().max(ad.abs()) + 1e-8);
            per_param[pi] = per_param[pi].max(rel);
        }
    }
    Ok(GradCheckReport {
        max_relative_error: per_param.iter().copied().fold(0.0, f64::max),
        per_param,
        evaluations,
    })
}
