//! Central finite-difference check of tape gradients.

use crate::autodiff::{Tape, Var};
use crate::error::Result;
use crate::nn::MlpModel;
use crate::tensor::DenseMatrix;

const DENOMINATOR_FLOOR: f64 = 1e-6;

fn loss_value<F>(model: &MlpModel, loss_fn: &F, batch: &DenseMatrix) -> Result<f64>
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    let mut tape = Tape::new();
    let x = tape.leaf(batch.clone())?;
    let (out, _) = model.forward_taped(&mut tape, x)?;
    let loss = loss_fn(&mut tape, out)?;
    Ok(tape.scalar(loss))
}

/// Largest relative disagreement between backward-pass gradients and central
/// differences over every parameter entry of `model`.
///
/// `loss_fn` maps the model's output on `batch` to a scalar loss. The error for
/// one entry is `|analytic − central| / max(|analytic| + |central|, 1e-6)`.
/// The floor keeps exactly-zero gradients, such as a bias whose contributions
/// cancel, from being judged against the rounding noise of the difference.
/// Failures (a loss that cannot be evaluated, a non-positive step) are
/// reported as an infinite error.
pub fn finite_diff_check<F>(model: &MlpModel, loss_fn: F, batch: &DenseMatrix, step: f64) -> f64
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    if !(step > 0.0) {
        return f64::INFINITY;
    }
    let analytic = (|| -> Result<Vec<DenseMatrix>> {
        let mut tape = Tape::new();
        let x = tape.leaf(batch.clone())?;
        let (out, vars) = model.forward_taped(&mut tape, x)?;
        let loss = loss_fn(&mut tape, out)?;
        let grads = tape.backward(loss, 1.0)?;
        Ok(model.collect_gradients(&grads, &vars))
    })();
    let Ok(analytic) = analytic else {
        return f64::INFINITY;
    };

    let mut worst: f64 = 0.0;
    let mut probe = model.clone();
    for (pi, grad) in analytic.iter().enumerate() {
        for k in 0..grad.len() {
            let original = probe.params()[pi].as_slice()[k];
            probe.params_mut()[pi].as_mut_slice()[k] = original + step;
            let plus = loss_value(&probe, &loss_fn, batch);
            probe.params_mut()[pi].as_mut_slice()[k] = original - step;
            let minus = loss_value(&probe, &loss_fn, batch);
            probe.params_mut()[pi].as_mut_slice()[k] = original;
            let (Ok(plus), Ok(minus)) = (plus, minus) else {
                return f64::INFINITY;
            };
            let central = (plus - minus) / (2.0 * step);
            let a = grad.as_slice()[k];
            let err = (a - central).abs() / (a.abs() + central.abs()).max(DENOMINATOR_FLOOR);
            worst = worst.max(err);
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{mlp_specs, Activation, Layer, LayerSpec};
    use crate::rng;

    #[test]
    fn quadratic_loss_on_linear_model_is_exact() {
        let mut r = rng::stream(1, 0);
        let model = MlpModel::new(&[LayerSpec::new(3, 2, Activation::Identity)], &mut r).unwrap();
        let batch = rng::standard_normal_matrix(&mut r, 5, 3);
        let err = finite_diff_check(
            &model,
            |t, out| {
                let sq = t.power(out, 2.0)?;
                t.mean(sq)
            },
            &batch,
            1e-5,
        );
        assert!(err < 1e-7, "error {err}");
    }

    #[test]
    fn leaky_relu_mlp_away_from_kinks() {
        let mut r = rng::stream(2, 0);
        let model = MlpModel::new(&mlp_specs(4, &[6, 5], 1, Activation::Sigmoid), &mut r).unwrap();
        let batch = rng::standard_normal_matrix(&mut r, 7, 4);
        let err = finite_diff_check(
            &model,
            |t, out| {
                let e = t.exp(out)?;
                t.mean(e)
            },
            &batch,
            1e-5,
        );
        assert!(err < 1e-4, "error {err}");
    }

    #[test]
    fn cancelling_bias_gradient_is_not_an_error() {
        // mean(first half) − mean(second half): the output bias gradient is 0.
        let mut r = rng::stream(4, 0);
        let model = MlpModel::new(&mlp_specs(3, &[4], 1, Activation::Identity), &mut r).unwrap();
        let batch = rng::standard_normal_matrix(&mut r, 8, 3);
        let err = finite_diff_check(
            &model,
            |t, out| {
                let a = t.slice_rows(out, 0, 4)?;
                let b = t.slice_rows(out, 4, 8)?;
                let a = t.mean(a)?;
                let b = t.mean(b)?;
                t.affine(&[(a, 1.0), (b, -1.0)], 0.0)
            },
            &batch,
            1e-5,
        );
        assert!(err < 1e-4, "error {err}");
    }

    #[test]
    fn constant_loss_has_zero_error() {
        let mut r = rng::stream(3, 0);
        let model = MlpModel::new(&mlp_specs(2, &[3], 1, Activation::Tanh), &mut r).unwrap();
        let batch = rng::standard_normal_matrix(&mut r, 4, 2);
        let err = finite_diff_check(&model, |t, _| t.leaf(DenseMatrix::scalar(3.0)), &batch, 1e-5);
        assert_eq!(err, 0.0);
    }

    #[test]
    fn failing_loss_reports_infinite_error() {
        let model = MlpModel::from_layers(vec![Layer {
            spec: LayerSpec::new(1, 1, Activation::Identity),
            weight: DenseMatrix::scalar(-1.0),
            bias: DenseMatrix::scalar(0.0),
        }])
        .unwrap();
        let batch = DenseMatrix::scalar(2.0);
        assert_eq!(finite_diff_check(&model, |t, out| t.log(out), &batch, 1e-5), f64::INFINITY);
        assert_eq!(finite_diff_check(&model, |t, out| t.mean(out), &batch, 0.0), f64::INFINITY);
    }
}
