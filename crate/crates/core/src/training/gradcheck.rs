use crate::data::Example;
use crate::error::Result;
use crate::model::Model;
use crate::numerics::Tensor;
use crate::training::{GradTape, Var};

/// Per-tensor deviation between analytic and central-difference gradients,
/// measured as `max|a − f| / max(max|f|, max|a|)`.
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub rows: Vec<(String, f64)>,
}

impl GradCheckReport {
    pub fn max(&self) -> f64 {
        self.rows.iter().fold(0.0, |m, (_, e)| m.max(*e))
    }
}

fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff = analytic
        .iter()
        .zip(numeric)
        .fold(0.0f64, |m, (a, f)| m.max((a - f).abs()));
    let scale = analytic
        .iter()
        .chain(numeric)
        .fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

/// Checks the tape gradient of the scalar built by `f` from leaves holding
/// `params`, one relative error per tensor.
pub fn check_gradients(
    params: &[Tensor<f64>],
    f: impl Fn(&mut GradTape<f64>, &[Var]) -> Result<Var>,
    eps: f64,
) -> Result<Vec<f64>> {
    let mut tape = GradTape::new();
    let vars: Vec<Var> = params.iter().map(|p| tape.param(p.clone())).collect();
    let loss = f(&mut tape, &vars)?;
    let grads = tape.backward(loss)?;
    let eval = |ps: &[Tensor<f64>]| -> Result<f64> {
        let mut tape = GradTape::inference();
        let vars: Vec<Var> = ps.iter().map(|p| tape.param(p.clone())).collect();
        let loss = f(&mut tape, &vars)?;
        Ok(tape.value(loss).data()[0])
    };
    let mut work = params.to_vec();
    let mut out = Vec::with_capacity(params.len());
    for (i, &v) in vars.iter().enumerate() {
        let analytic = grads
            .get(v)
            .map(|g| g.data().to_vec())
            .unwrap_or_else(|| vec![0.0; params[i].len()]);
        let mut numeric = Vec::with_capacity(params[i].len());
        for j in 0..params[i].len() {
            let orig = work[i].data()[j];
            work[i].data_mut()[j] = orig + eps;
            let plus = eval(&work)?;
            work[i].data_mut()[j] = orig - eps;
            let minus = eval(&work)?;
            work[i].data_mut()[j] = orig;
            numeric.push((plus - minus) / (2.0 * eps));
        }
        out.push(relative_error(&analytic, &numeric));
    }
    Ok(out)
}

/// Central-difference check of every parameter tensor of `model` on one
/// example.
pub fn finite_diff_check(model: &Model<f64>, ex: &Example, eps: f64) -> Result<GradCheckReport> {
    let (_, grads) = model.loss_and_grads(ex)?;
    let names: Vec<String> = model.params.named().into_iter().map(|(n, _)| n).collect();
    let mut work = model.clone();
    let mut rows = Vec::with_capacity(names.len());
    for (i, name) in names.into_iter().enumerate() {
        let len = grads[i].len();
        let mut numeric = Vec::with_capacity(len);
        for j in 0..len {
            let orig = work.params.tensors_mut()[i].data()[j];
            work.params.tensors_mut()[i].data_mut()[j] = orig + eps;
            let plus = work.loss(ex)?;
            work.params.tensors_mut()[i].data_mut()[j] = orig - eps;
            let minus = work.loss(ex)?;
            work.params.tensors_mut()[i].data_mut()[j] = orig;
            numeric.push((plus - minus) / (2.0 * eps));
        }
        rows.push((name, relative_error(grads[i].data(), &numeric)));
    }
    Ok(GradCheckReport { rows })
}
