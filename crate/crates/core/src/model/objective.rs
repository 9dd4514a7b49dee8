//! Full forward/backward passes for the two training stages.

use rand::Rng;

use super::encoder::EncoderCache;
use super::heads::{scaled_sigmoid, scaled_sigmoid_grad, Mlp};
use super::loss::{mse_loss_grad, nt_xent_loss_grad};
use super::params::ModelParams;
use super::tensor::{Matrix, Signal};
use super::{Mode, ModelError};
use crate::Scalar;

pub struct ContrastiveStep<T> {
    pub loss: T,
    pub grads: ModelParams<T>,
    pub cache: EncoderCache<T>,
}

/// Contrastive loss on a batch whose rows `2k`/`2k+1` are the two members of
/// pair `k`, plus gradients for the encoder and (if enabled) projection head.
///
/// The loss sees the leading half of each embedding, passed through the
/// projection head when the model has one.
pub fn contrastive_objective<T: Scalar, R: Rng + ?Sized>(
    params: &ModelParams<T>,
    waves: &Signal<T>,
    temperature: T,
    dropout_rng: Option<&mut R>,
) -> Result<ContrastiveStep<T>, ModelError> {
    let (emb, cache) = params.encoder.forward(waves, Mode::Train)?;
    let cache = cache.expect("train mode keeps a cache");
    let half = params.config.encoder.half_dim;
    let h = emb.columns(0, half);
    let mut grads = params.zeros_like();

    let (loss, d_half) = match &params.projection {
        Some(head) => {
            let (z, pcache) = head.forward(&h, Mode::Train, dropout_rng);
            let (loss, dz) = nt_xent_loss_grad(&z, temperature)?;
            let d_h = head.backward(&pcache, &dz, grads.projection.as_mut().expect("same structure"));
            (loss, d_h)
        }
        None => nt_xent_loss_grad(&h, temperature)?,
    };

    let mut d_emb = Matrix::zeros(emb.rows, emb.cols);
    for r in 0..emb.rows {
        d_emb.row_mut(r)[..half].copy_from_slice(d_half.row(r));
    }
    params.encoder.backward(&cache, &d_emb, &mut grads.encoder);
    Ok(ContrastiveStep { loss, grads, cache })
}

/// `(loss, head gradients, dL/de, predictions)`.
pub type RegressorMse<T> = (T, Mlp<T>, Matrix<T>, Vec<T>);

/// MSE between `1 + 4σ(head(e))` and `targets`, with gradients for the head
/// and `dL/de`.
pub fn regressor_mse<T: Scalar>(head: &Mlp<T>, emb: &Matrix<T>, targets: &[T]) -> Result<RegressorMse<T>, ModelError> {
    if emb.rows != targets.len() {
        return Err(ModelError::Shape(format!("{} embeddings for {} targets", emb.rows, targets.len())));
    }
    let (out, cache) = head.forward::<rand_chacha::ChaCha8Rng>(emb, Mode::Train, None);
    let preds: Vec<T> = out.data.iter().map(|&a| scaled_sigmoid(a)).collect();
    let (loss, d_pred) = mse_loss_grad(&preds, targets)?;
    let d_out = Matrix {
        rows: out.rows,
        cols: 1,
        data: d_pred.iter().zip(&out.data).map(|(&g, &a)| g * scaled_sigmoid_grad(a)).collect(),
    };
    let mut grad = head.zeros_like();
    let d_emb = head.backward(&cache, &d_out, &mut grad);
    Ok((loss, grad, d_emb, preds))
}

pub struct RegressionStep<T> {
    pub loss: T,
    pub predictions: Vec<T>,
    pub grads: ModelParams<T>,
    /// Present when the encoder ran in train mode.
    pub cache: Option<EncoderCache<T>>,
}

/// MOS regression loss and gradients. A frozen encoder runs in eval mode and
/// receives no gradient.
pub fn regression_objective<T: Scalar>(
    params: &ModelParams<T>,
    waves: &Signal<T>,
    targets: &[T],
    train_encoder: bool,
) -> Result<RegressionStep<T>, ModelError> {
    let head = params.regressor.as_ref().ok_or(ModelError::HeadDisabled("regressor"))?;
    let mode = if train_encoder { Mode::Train } else { Mode::Eval };
    let (emb, cache) = params.encoder.forward(waves, mode)?;
    let (loss, head_grad, d_emb, predictions) = regressor_mse(head, &emb, targets)?;
    let mut grads = params.zeros_like();
    grads.regressor = Some(head_grad);
    if let Some(c) = &cache {
        params.encoder.backward(c, &d_emb, &mut grads.encoder);
    }
    Ok(RegressionStep { loss, predictions, grads, cache })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{init_params, nt_xent_loss, ModelConfig, TensorKind};
    use crate::seed::rng_for;

    fn toy_batch(rows: usize, len: usize, seed: u64) -> Signal<f64> {
        let mut rng = rng_for(seed, &[]);
        let base: Vec<Vec<f64>> = (0..rows / 2).map(|_| (0..len).map(|_| rng.gen_range(-0.5..0.5)).collect()).collect();
        let waves: Vec<Vec<f64>> = (0..rows)
            .map(|r| base[r / 2].iter().map(|v| v + 0.05 * rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let refs: Vec<&[f64]> = waves.iter().map(|w| &w[..]).collect();
        Signal::from_waveforms(&refs)
    }

    fn contrastive_loss_only(p: &ModelParams<f64>, x: &Signal<f64>) -> f64 {
        let (emb, _) = p.encoder.forward(x, Mode::Train).unwrap();
        let h = emb.columns(0, p.config.encoder.half_dim);
        let z = match &p.projection {
            Some(head) => head.forward::<rand_chacha::ChaCha8Rng>(&h, Mode::Train, None).0,
            None => h,
        };
        nt_xent_loss(&z, 1.0).unwrap()
    }

    /// Spot-checks a handful of coordinates of every learnable tensor.
    #[test]
    fn full_contrastive_gradient_matches_finite_differences() {
        let mut cfg = ModelConfig::toy();
        cfg.projection.dropout_rate = 0.0;
        for enabled in [false, true] {
            let cfg = cfg.clone().with_projection(enabled);
            let p: ModelParams<f64> = init_params(&cfg, 11).unwrap();
            let x = toy_batch(4, cfg.encoder.receptive_field(), 12);
            let step = contrastive_objective::<_, rand_chacha::ChaCha8Rng>(&p, &x, 1.0, None).unwrap();
            assert!((step.loss - contrastive_loss_only(&p, &x)).abs() < 1e-12);
            let grads = step.grads.tensors();
            let h = 1e-7;
            for (ti, (_, kind, g)) in grads.iter().enumerate() {
                if *kind == TensorKind::Buffer {
                    continue;
                }
                let len = g.len();
                for idx in [0, len / 2, len - 1] {
                    let mut plus = p.clone();
                    plus.tensors_mut()[ti].2[idx] += h;
                    let mut minus = p.clone();
                    minus.tensors_mut()[ti].2[idx] -= h;
                    let fd = (contrastive_loss_only(&plus, &x) - contrastive_loss_only(&minus, &x)) / (2.0 * h);
                    let an = g[idx];
                    let tol = 1e-4 * fd.abs().max(an.abs()).max(1e-3);
                    assert!((fd - an).abs() <= tol, "{} [{idx}]: fd {fd} vs analytic {an}", grads[ti].0);
                }
            }
        }
    }

    #[test]
    fn frozen_encoder_gets_no_gradient() {
        let p: ModelParams<f64> = init_params(&ModelConfig::toy(), 3).unwrap();
        let x = toy_batch(2, p.config.encoder.receptive_field(), 4);
        let step = regression_objective(&p, &x, &[2.0, 4.0], false).unwrap();
        assert!(step.cache.is_none());
        assert!(step.grads.encoder.layers.iter().all(|l| l.conv.weight.iter().all(|v| *v == 0.0)));
        assert!(step.grads.regressor.unwrap().layers[0].weight.iter().any(|v| *v != 0.0));
    }
}
