//! Contrastive and regression objectives with analytic gradients.

use super::tensor::Matrix;
use super::ModelError;
use crate::Scalar;

/// Floor on `‖a‖·‖b‖` in the cosine denominator.
pub const COSINE_EPS: f64 = 1e-8;

fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

fn norm<T: Scalar>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

pub fn cosine_similarity<T: Scalar>(a: &[T], b: &[T]) -> T {
    dot(a, b) / (norm(a) * norm(b)).max(T::of(COSINE_EPS))
}

fn check_batch<T: Scalar>(z: &Matrix<T>, temperature: T) -> Result<(), ModelError> {
    if !z.rows.is_multiple_of(2) {
        return Err(ModelError::Shape(format!("contrastive batch must hold pairs, got {} rows", z.rows)));
    }
    if z.rows < 4 {
        return Err(ModelError::Shape("contrastive batch needs at least two pairs".into()));
    }
    if temperature.is_nan() || temperature <= T::zero() {
        return Err(ModelError::InvalidConfig("temperature must be positive".into()));
    }
    if z.data.iter().any(|v| !v.is_finite()) {
        return Err(ModelError::NonFinite);
    }
    Ok(())
}

fn similarity_matrix<T: Scalar>(z: &Matrix<T>) -> (Vec<T>, Vec<T>) {
    let n = z.rows;
    let norms: Vec<T> = (0..n).map(|i| norm(z.row(i))).collect();
    let mut sim = vec![T::zero(); n * n];
    let eps = T::of(COSINE_EPS);
    for i in 0..n {
        for k in i..n {
            let s = dot(z.row(i), z.row(k)) / (norms[i] * norms[k]).max(eps);
            sim[i * n + k] = s;
            sim[k * n + i] = s;
        }
    }
    (sim, norms)
}

/// Per-anchor softmax over all other batch members; returns the anchor losses
/// and the probabilities `p[i][k]` (zero on the diagonal).
fn anchor_terms<T: Scalar>(sim: &[T], n: usize, inv_tau: T) -> (Vec<T>, Vec<T>) {
    let mut losses = Vec::with_capacity(n);
    let mut probs = vec![T::zero(); n * n];
    for i in 0..n {
        let row = &sim[i * n..(i + 1) * n];
        let max = (0..n).filter(|&k| k != i).map(|k| row[k] * inv_tau).fold(T::neg_infinity(), T::max);
        let mut denom = T::zero();
        for k in (0..n).filter(|&k| k != i) {
            let e = (row[k] * inv_tau - max).exp();
            probs[i * n + k] = e;
            denom += e;
        }
        for k in 0..n {
            probs[i * n + k] /= denom;
        }
        let j = i ^ 1;
        losses.push(max + denom.ln() - row[j] * inv_tau);
    }
    (losses, probs)
}

/// NT-Xent over `2N` vectors where rows `2k` and `2k+1` form a positive pair.
///
/// Every row is an anchor; its loss is the cross-entropy of picking its
/// partner among all other `2N - 1` rows with logits `cos/τ`. The result is
/// the mean over all anchors.
pub fn nt_xent_loss<T: Scalar>(z: &Matrix<T>, temperature: T) -> Result<T, ModelError> {
    check_batch(z, temperature)?;
    let (sim, _) = similarity_matrix(z);
    let (losses, _) = anchor_terms(&sim, z.rows, T::one() / temperature);
    Ok(losses.iter().copied().sum::<T>() / T::of_usize(z.rows))
}

/// Loss and `dL/dz`.
pub fn nt_xent_loss_grad<T: Scalar>(z: &Matrix<T>, temperature: T) -> Result<(T, Matrix<T>), ModelError> {
    check_batch(z, temperature)?;
    let n = z.rows;
    let inv_tau = T::one() / temperature;
    let (sim, norms) = similarity_matrix(z);
    let (losses, probs) = anchor_terms(&sim, n, inv_tau);
    let loss = losses.iter().copied().sum::<T>() / T::of_usize(n);

    // dL/dsim[i][k] from anchor i, then symmetrized since sim[i][k] == sim[k][i]
    let scale = inv_tau / T::of_usize(n);
    let g = |i: usize, k: usize| {
        let target = if k == (i ^ 1) { T::one() } else { T::zero() };
        (probs[i * n + k] - target) * scale
    };
    let eps = T::of(COSINE_EPS);
    let mut dz = Matrix::zeros(n, z.cols);
    for i in 0..n {
        let zi = z.row(i);
        let mut acc = vec![T::zero(); z.cols];
        for k in (0..n).filter(|&k| k != i) {
            let c = g(i, k) + g(k, i);
            let zk = z.row(k);
            let denom = norms[i] * norms[k];
            if denom > eps {
                let a = c / denom;
                let b = c * sim[i * n + k] / (norms[i] * norms[i]);
                for ((d, &xk), &xi) in acc.iter_mut().zip(zk).zip(zi) {
                    *d += a * xk - b * xi;
                }
            } else {
                let a = c / eps;
                for (d, &xk) in acc.iter_mut().zip(zk) {
                    *d += a * xk;
                }
            }
        }
        dz.row_mut(i).copy_from_slice(&acc);
    }
    Ok((loss, dz))
}

pub fn mse_loss<T: Scalar>(pred: &[T], target: &[T]) -> Result<T, ModelError> {
    if pred.is_empty() {
        return Err(ModelError::Shape("mse of empty input".into()));
    }
    if pred.len() != target.len() {
        return Err(ModelError::Shape(format!("mse length mismatch {} vs {}", pred.len(), target.len())));
    }
    let sum: T = pred.iter().zip(target).map(|(&p, &t)| (p - t) * (p - t)).sum();
    Ok(sum / T::of_usize(pred.len()))
}

/// Loss and `dL/dpred`.
pub fn mse_loss_grad<T: Scalar>(pred: &[T], target: &[T]) -> Result<(T, Vec<T>), ModelError> {
    let loss = mse_loss(pred, target)?;
    let k = T::of(2.0) / T::of_usize(pred.len());
    Ok((loss, pred.iter().zip(target).map(|(&p, &t)| k * (p - t)).collect()))
}
