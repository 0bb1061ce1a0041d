use ndarray::{Array2, ArrayView2, Axis};
use rayon::prelude::*;

use crate::data::Shard;
use crate::error::{Error, Result};
use crate::train::kernels::{add_regularization, data_gradient, row_pass_gradient, Loss};

/// Gradient of `k` models over a sharded training set.
///
/// Each shard's `d × k` partial gradient is computed in parallel; partials
/// are then summed in shard order so the result does not depend on
/// scheduling. Regularization `λ_j W[:, j]` is added once, after the sum.
pub fn partitioned_gradient(
    loss: Loss,
    shards: &[Shard<'_>],
    weights: ArrayView2<'_, f64>,
    lambdas: &[f64],
) -> Result<Array2<f64>> {
    if shards.is_empty() {
        return Err(Error::invalid_argument("no shards to compute a gradient over"));
    }
    let shard_gradient = |s: &Shard<'_>| -> Result<Array2<f64>> {
        if weights.ncols() == 1 {
            let g = row_pass_gradient(loss, weights.column(0), s.x, s.y)?;
            Ok(g.insert_axis(Axis(1)))
        } else {
            data_gradient(loss, weights, s.x, s.y)
        }
    };
    let partials: Vec<Array2<f64>> = if shards.len() == 1 {
        vec![shard_gradient(&shards[0])?]
    } else {
        shards
            .par_iter()
            .map(shard_gradient)
            .collect::<Result<_>>()?
    };
    let mut total = Array2::<f64>::zeros(weights.dim());
    for p in &partials {
        total += p;
    }
    add_regularization(&mut total, weights, lambdas)?;
    Ok(total)
}
