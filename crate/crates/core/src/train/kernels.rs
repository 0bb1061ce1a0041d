//! Gradient kernels for logistic regression and the linear SVM.
//!
//! Single-model kernels take a weight vector; batched kernels take a `d × k`
//! weight matrix with one model per column and compute all `k` gradients from
//! one pass over `X` using two dense matrix products.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};

use crate::error::{Error, Result};

/// Logistic function, evaluated without overflow for large `|z|`.
pub fn sigma(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Which loss a kernel differentiates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Loss {
    /// Negative log-likelihood of logistic regression.
    Logistic,
    /// Hinge loss with labels mapped to `±1`.
    Hinge,
}

fn check_shapes(d_w: usize, x: &ArrayView2<'_, f64>, y: &ArrayView1<'_, f64>) -> Result<()> {
    if x.ncols() != d_w {
        return Err(Error::invalid_argument(format!(
            "weights have {d_w} rows but X has {} columns",
            x.ncols()
        )));
    }
    if x.nrows() != y.len() {
        return Err(Error::invalid_argument(format!(
            "X has {} rows but y has {} labels",
            x.nrows(),
            y.len()
        )));
    }
    Ok(())
}

/// `Σ_i (σ(wᵀx_i) − y_i) x_i + λ w`.
pub fn logistic_gradient(
    w: ArrayView1<'_, f64>,
    x: ArrayView2<'_, f64>,
    y: ArrayView1<'_, f64>,
    lambda: f64,
) -> Result<Array1<f64>> {
    check_shapes(w.len(), &x, &y)?;
    let mut residual = x.dot(&w);
    Zip::from(&mut residual).and(&y).for_each(|r, &yi| *r = sigma(*r) - yi);
    let mut grad = x.t().dot(&residual);
    grad.scaled_add(lambda, &w);
    Ok(grad)
}

/// `λ w − Σ_{i: y_i wᵀx_i < 1} y_i x_i` with `y_i ∈ {−1, +1}` derived from the
/// stored `{0,1}` labels.
pub fn hinge_subgradient(
    w: ArrayView1<'_, f64>,
    x: ArrayView2<'_, f64>,
    y: ArrayView1<'_, f64>,
    lambda: f64,
) -> Result<Array1<f64>> {
    check_shapes(w.len(), &x, &y)?;
    let mut residual = x.dot(&w);
    Zip::from(&mut residual)
        .and(&y)
        .for_each(|r, &yi| *r = hinge_residual(*r, yi));
    let mut grad = x.t().dot(&residual);
    grad.scaled_add(lambda, &w);
    Ok(grad)
}

#[inline]
fn hinge_residual(score: f64, label01: f64) -> f64 {
    let ypm = 2.0 * label01 - 1.0;
    if ypm * score < 1.0 {
        -ypm
    } else {
        0.0
    }
}

/// Residual matrix `R` such that the unregularized gradient is `Xᵀ R`.
fn residuals(loss: Loss, w: ArrayView2<'_, f64>, x: ArrayView2<'_, f64>, y: ArrayView1<'_, f64>) -> Array2<f64> {
    let mut r = x.dot(&w);
    for mut col in r.axis_iter_mut(Axis(1)) {
        match loss {
            Loss::Logistic => Zip::from(&mut col).and(&y).for_each(|v, &yi| *v = sigma(*v) - yi),
            Loss::Hinge => Zip::from(&mut col)
                .and(&y)
                .for_each(|v, &yi| *v = hinge_residual(*v, yi)),
        }
    }
    r
}

/// `Xᵀ ℓ'(XW, y)` without the regularization term. Shape `d × k`.
pub fn data_gradient(
    loss: Loss,
    w: ArrayView2<'_, f64>,
    x: ArrayView2<'_, f64>,
    y: ArrayView1<'_, f64>,
) -> Result<Array2<f64>> {
    check_shapes(w.nrows(), &x, &y)?;
    Ok(x.t().dot(&residuals(loss, w, x, y)))
}

/// Single-model `Xᵀ ℓ'(Xw, y)` in one row-major pass, skipping the packing a
/// one-column matrix product would do.
pub(crate) fn row_pass_gradient(
    loss: Loss,
    w: ArrayView1<'_, f64>,
    x: ArrayView2<'_, f64>,
    y: ArrayView1<'_, f64>,
) -> Result<Array1<f64>> {
    check_shapes(w.len(), &x, &y)?;
    let mut grad = Array1::<f64>::zeros(w.len());
    for (row, &yi) in x.rows().into_iter().zip(&y) {
        let z = row.dot(&w);
        let r = match loss {
            Loss::Logistic => sigma(z) - yi,
            Loss::Hinge => hinge_residual(z, yi),
        };
        if r != 0.0 {
            grad.scaled_add(r, &row);
        }
    }
    Ok(grad)
}

/// Adds `λ_j W[:, j]` to column `j` of `grad`.
pub fn add_regularization(grad: &mut Array2<f64>, w: ArrayView2<'_, f64>, lambdas: &[f64]) -> Result<()> {
    if lambdas.len() != w.ncols() || grad.dim() != w.dim() {
        return Err(Error::invalid_argument(format!(
            "{} regularization weights for {} models",
            lambdas.len(),
            w.ncols()
        )));
    }
    for ((mut g, wcol), &lambda) in grad.columns_mut().into_iter().zip(w.columns()).zip(lambdas) {
        g.scaled_add(lambda, &wcol);
    }
    Ok(())
}

/// `Xᵀ(σ(XW) − Y) + λW` for `k` models at once; `Y` is `y` repeated per column.
pub fn batched_gradient(
    w: ArrayView2<'_, f64>,
    x: ArrayView2<'_, f64>,
    y: ArrayView1<'_, f64>,
    lambda: f64,
) -> Result<Array2<f64>> {
    let mut g = data_gradient(Loss::Logistic, w, x, y)?;
    g.scaled_add(lambda, &w);
    Ok(g)
}

/// Column-wise hinge subgradient for `k` models at once.
pub fn batched_hinge_subgradient(
    w: ArrayView2<'_, f64>,
    x: ArrayView2<'_, f64>,
    y: ArrayView1<'_, f64>,
    lambda: f64,
) -> Result<Array2<f64>> {
    let mut g = data_gradient(Loss::Hinge, w, x, y)?;
    g.scaled_add(lambda, &w);
    Ok(g)
}

/// Per-model, per-row loop evaluation of the logistic gradient for `k`
/// models: the unbatched baseline the matrix kernel is measured against.
/// Reads `X` twice per model.
pub fn naive_batched_gradient(
    w: ArrayView2<'_, f64>,
    x: ArrayView2<'_, f64>,
    y: ArrayView1<'_, f64>,
    lambda: f64,
) -> Result<Array2<f64>> {
    check_shapes(w.nrows(), &x, &y)?;
    let (d, k) = w.dim();
    let mut out = Array2::<f64>::zeros((d, k));
    for j in 0..k {
        let wj = w.column(j);
        let mut gj = out.column_mut(j);
        for (row, &yi) in x.rows().into_iter().zip(&y) {
            let mut z = 0.0;
            for (a, b) in row.iter().zip(&wj) {
                z += a * b;
            }
            let r = sigma(z) - yi;
            for (g, a) in gj.iter_mut().zip(&row) {
                *g += r * a;
            }
        }
        gj.scaled_add(lambda, &wj);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn sigma_basics() {
        assert_eq!(sigma(0.0), 0.5);
        assert_eq!(sigma(1e4), 1.0);
        assert_eq!(sigma(-1e4), 0.0);
        assert!(sigma(-800.0) >= 0.0 && sigma(800.0) <= 1.0);
    }

    proptest! {
        #[test]
        fn sigma_symmetry(z in -50.0f64..50.0) {
            prop_assert!((sigma(z) + sigma(-z) - 1.0).abs() < 1e-15);
        }

        #[test]
        fn sigma_monotone(a in -40.0f64..40.0, b in -40.0f64..40.0) {
            if a < b {
                prop_assert!(sigma(a) <= sigma(b));
            }
        }
    }

    #[test]
    fn logistic_gradient_at_zero() {
        let x = array![[1.0, 0.0], [0.0, 1.0]];
        let y = array![1.0, 0.0];
        let g = logistic_gradient(Array1::zeros(2).view(), x.view(), y.view(), 0.0).unwrap();
        assert_eq!(g, array![-0.5, 0.5]);
    }

    #[test]
    fn empty_data_leaves_only_regularization() {
        let w = array![1.5, -2.0];
        let x = Array2::<f64>::zeros((0, 2));
        let y = Array1::<f64>::zeros(0);
        let g = logistic_gradient(w.view(), x.view(), y.view(), 0.3).unwrap();
        assert_eq!(g, &w * 0.3);
        let g = hinge_subgradient(w.view(), x.view(), y.view(), 0.3).unwrap();
        assert_eq!(g, &w * 0.3);
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let x = Array2::<f64>::zeros((3, 2));
        let y = Array1::<f64>::zeros(3);
        assert!(logistic_gradient(Array1::zeros(3).view(), x.view(), y.view(), 0.0).is_err());
        assert!(batched_gradient(Array2::zeros((2, 4)).view(), x.view(), Array1::zeros(2).view(), 0.0).is_err());
        assert!(hinge_subgradient(Array1::zeros(1).view(), x.view(), y.view(), 0.0).is_err());
    }

    #[test]
    fn hinge_all_active_at_zero() {
        let x = array![[1.0, 2.0], [3.0, -1.0], [0.5, 0.5]];
        let y = array![1.0, 0.0, 1.0];
        let g = hinge_subgradient(Array1::zeros(2).view(), x.view(), y.view(), 0.7).unwrap();
        // −Σ y_i x_i with y = (+1, −1, +1)
        assert_eq!(g, array![-(1.0 - 3.0 + 0.5), -(2.0 + 1.0 + 0.5)]);
    }

    #[test]
    fn hinge_no_active_constraints() {
        let x = array![[2.0, 0.0], [-2.0, 0.0]];
        let y = array![1.0, 0.0];
        let w = array![1.0, 0.5];
        let g = hinge_subgradient(w.view(), x.view(), y.view(), 0.1).unwrap();
        assert_eq!(g, &w * 0.1);
    }

    #[test]
    fn batched_shape_and_single_column_reduction() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = Array2::from_shape_fn((30, 4), |_| rng.random::<f64>() - 0.5);
        let y = Array1::from_shape_fn(30, |_| f64::from(rng.random::<bool>()));
        let w = Array2::from_shape_fn((4, 3), |_| rng.random::<f64>());
        let g = batched_gradient(w.view(), x.view(), y.view(), 0.2).unwrap();
        assert_eq!(g.dim(), (4, 3));
        let one = w.slice(ndarray::s![.., 0..1]);
        let g1 = batched_gradient(one, x.view(), y.view(), 0.2).unwrap();
        let single = logistic_gradient(w.column(0), x.view(), y.view(), 0.2).unwrap();
        for (a, b) in g1.column(0).iter().zip(&single) {
            assert!((a - b).abs() <= 1e-12);
        }
        let naive = naive_batched_gradient(w.view(), x.view(), y.view(), 0.2).unwrap();
        assert!((&naive - &g).iter().all(|v| v.abs() <= 1e-10));
    }
}
