//! Finite-difference verification of [`crate::model::loss_and_grads`].

use crate::model::{loss, loss_and_grads, ModelError};
use crate::params::ModelParams;

/// Central differences `(L(p + h) - L(p - h)) / 2h` for every scalar.
pub fn numeric_grads(params: &mut ModelParams<f64>, batch: &[Vec<u32>], h: f64) -> Result<Vec<f64>, ModelError> {
    (0..params.len())
        .map(|i| {
            let orig = params.data[i];
            params.data[i] = orig + h;
            let up = loss(params, batch);
            params.data[i] = orig - h;
            let down = loss(params, batch);
            params.data[i] = orig;
            Ok((up? - down?) / (2.0 * h))
        })
        .collect()
}

/// Per tensor: `||analytic - numeric|| / max(||analytic||, ||numeric||)`.
pub fn tensor_errors(params: &ModelParams<f64>, batch: &[Vec<u32>], h: f64) -> Result<Vec<(String, f64)>, ModelError> {
    let (_, analytic) = loss_and_grads(params, batch)?;
    let numeric = numeric_grads(&mut params.clone(), batch, h)?;
    let norm = |v: &mut dyn Iterator<Item = f64>| v.map(|x| x * x).sum::<f64>().sqrt();
    Ok(params
        .layout
        .tensors()
        .into_iter()
        .map(|t| {
            let r = t.range();
            let diff = norm(&mut r.clone().map(|i| analytic[i] - numeric[i]));
            let scale = norm(&mut r.clone().map(|i| analytic[i])).max(norm(&mut r.map(|i| numeric[i])));
            let e = if scale == 0.0 { diff } else { diff / scale };
            (t.name, e)
        })
        .collect())
}
