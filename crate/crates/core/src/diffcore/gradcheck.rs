//! Central finite-difference verification of analytic gradients.

use super::{DiffError, Graph, Var};

/// Anything that owns a computation graph. Lets [`grad_check`] drive both a
/// bare [`Graph`] and higher-level contexts (a model) whose builder methods
/// need `&mut self`.
pub trait HasGraph {
    fn graph(&self) -> &Graph;
    fn graph_mut(&mut self) -> &mut Graph;
}

impl HasGraph for Graph {
    fn graph(&self) -> &Graph {
        self
    }
    fn graph_mut(&mut self) -> &mut Graph {
        self
    }
}

/// Compares the analytic gradient of a scalar function against central finite
/// differences, coordinate by coordinate, over the given parameters.
///
/// `build` must rebuild the forward computation from the graph's current
/// parameter values and return the scalar loss node; it is called twice per
/// perturbed coordinate. Parameters reached only through stop-grad edges must
/// not be listed in `params` (their analytic gradient is exactly zero while
/// the numeric difference is not).
///
/// Returns the maximum relative error with denominator
/// `max(|analytic|, |numeric|, 1e-8)`.
pub fn grad_check<C, F>(ctx: &mut C, params: &[Var], mut build: F, eps: f64) -> Result<f64, DiffError>
where
    C: HasGraph,
    F: FnMut(&mut C) -> Result<Var, DiffError>,
{
    if !(1e-7..=1e-3).contains(&eps) {
        return Err(DiffError::InvalidArg(format!(
            "grad_check: eps = {eps} outside [1e-7, 1e-3]"
        )));
    }

    fn eval<C: HasGraph, F: FnMut(&mut C) -> Result<Var, DiffError>>(
        ctx: &mut C,
        build: &mut F,
    ) -> Result<f64, DiffError> {
        ctx.graph_mut().clear_tape();
        let loss = build(ctx)?;
        if !ctx.graph().is_scalar(loss) {
            return Err(DiffError::NonScalarLoss(ctx.graph().shape(loss).to_vec()));
        }
        let v = ctx.graph().scalar(loss);
        if !v.is_finite() {
            return Err(DiffError::Numeric(format!("grad_check: loss = {v}")));
        }
        Ok(v)
    }

    // Analytic pass.
    ctx.graph_mut().clear_tape();
    ctx.graph_mut().zero_grads();
    let loss = build(ctx)?;
    if !ctx.graph().is_scalar(loss) {
        return Err(DiffError::NonScalarLoss(ctx.graph().shape(loss).to_vec()));
    }
    if !ctx.graph().scalar(loss).is_finite() {
        return Err(DiffError::Numeric(format!(
            "grad_check: loss = {}",
            ctx.graph().scalar(loss)
        )));
    }
    ctx.graph_mut().backward(loss)?;
    let analytic: Vec<Vec<f64>> = params.iter().map(|p| ctx.graph().grad(*p).to_vec()).collect();

    let mut max_rel = 0.0f64;
    for (pi, p) in params.iter().enumerate() {
        for j in 0..analytic[pi].len() {
            let orig = ctx.graph().value_at(*p, j);
            ctx.graph_mut().set_value_at(*p, j, orig + eps);
            let plus = eval(ctx, &mut build)?;
            ctx.graph_mut().set_value_at(*p, j, orig - eps);
            let minus = eval(ctx, &mut build)?;
            ctx.graph_mut().set_value_at(*p, j, orig);
            let numeric = (plus - minus) / (2.0 * eps);
            let a = analytic[pi][j];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
            if rel > max_rel {
                max_rel = rel;
            }
        }
    }
    ctx.graph_mut().clear_tape();
    ctx.graph_mut().zero_grads();
    Ok(max_rel)
}
