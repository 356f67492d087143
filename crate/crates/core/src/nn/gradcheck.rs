//! Central-finite-difference verification of analytic gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::nn::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub coords_checked: usize,
    /// Flat index of the worst coordinate.
    pub worst_coord: usize,
}

impl GradCheckReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_rel_err < tolerance
    }
}

/// Compare `analytic_grad` against central differences of `loss_fn` over
/// up to `samples` randomly chosen coordinates of `values`.
///
/// `loss_fn` is evaluated at perturbed copies of `values`; the relative
/// error uses `|fd - an| / max(|fd|, |an|, 0.01)` so coordinates with tiny
/// gradients do not blow up on f32 evaluation noise.
pub fn finite_diff_check<F>(
    values: &Tensor,
    analytic_grad: &Tensor,
    mut loss_fn: F,
    samples: usize,
    seed: u64,
) -> GradCheckReport
where
    F: FnMut(&Tensor) -> f64,
{
    assert_eq!(values.shape(), analytic_grad.shape());
    let n = values.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coords: Vec<usize> = if n <= samples {
        (0..n).collect()
    } else {
        let mut picked = std::collections::BTreeSet::new();
        while picked.len() < samples {
            picked.insert(rng.gen_range(0..n));
        }
        picked.into_iter().collect()
    };

    let mut work = values.clone();
    let mut max_rel_err = 0.0f64;
    let mut worst = 0usize;
    for &i in &coords {
        let x = f64::from(values.data()[i]);
        let h = (1e-2 * x.abs()).max(1e-3);

        work.data_mut()[i] = (x + h) as f32;
        let plus = loss_fn(&work);
        work.data_mut()[i] = (x - h) as f32;
        let minus = loss_fn(&work);
        work.data_mut()[i] = x as f32;

        // effective step after f32 rounding of the perturbed coordinate
        let h_eff = (f64::from((x + h) as f32) - f64::from((x - h) as f32)) / 2.0;
        let fd = (plus - minus) / (2.0 * h_eff);
        let an = f64::from(analytic_grad.data()[i]);
        let rel = (fd - an).abs() / fd.abs().max(an.abs()).max(0.01);
        if rel > max_rel_err {
            max_rel_err = rel;
            worst = i;
        }
    }
    GradCheckReport {
        max_rel_err,
        coords_checked: coords.len(),
        worst_coord: worst,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::ops::{
        activation_backward, activation_forward, conv2d_backward, conv2d_forward, dense_backward,
        dense_forward, global_avg_pool_backward, global_avg_pool_forward, softmax_xent_backward,
        softmax_xent_forward, Activation, Padding,
    };

    fn rng_tensor(shape: &[usize], seed: u64, scale: f32) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let len: usize = shape.iter().product();
        let data = (0..len).map(|_| rng.gen_range(-scale..scale)).collect();
        Tensor::from_vec(shape, data).unwrap()
    }

    /// Weighted-sum head makes the scalar loss sensitive to every output.
    fn weighted_loss(out: &Tensor, weights: &Tensor) -> f64 {
        out.data()
            .iter()
            .zip(weights.data())
            .map(|(&o, &w)| f64::from(o) * f64::from(w))
            .sum()
    }

    #[test]
    fn dense_gradients_match_finite_differences() {
        let input = rng_tensor(&[3, 6], 1, 1.0);
        let weight = rng_tensor(&[6, 4], 2, 1.0);
        let bias = rng_tensor(&[4], 3, 0.5);
        let head = rng_tensor(&[3, 4], 4, 1.0);

        let out = dense_forward(&input, &weight, &bias).unwrap();
        let grad_out = head.clone();
        let (g_in, g_w, g_b) = dense_backward(&input, &weight, &grad_out).unwrap();

        let report = finite_diff_check(
            &weight,
            &g_w,
            |w| weighted_loss(&dense_forward(&input, w, &bias).unwrap(), &head),
            60,
            11,
        );
        assert!(report.passes(1e-3), "weight: {report:?}");

        let report = finite_diff_check(
            &input,
            &g_in,
            |x| weighted_loss(&dense_forward(x, &weight, &bias).unwrap(), &head),
            60,
            12,
        );
        assert!(report.passes(1e-3), "input: {report:?}");

        let report = finite_diff_check(
            &bias,
            &g_b,
            |b| weighted_loss(&dense_forward(&input, &weight, b).unwrap(), &head),
            60,
            13,
        );
        assert!(report.passes(1e-3), "bias: {report:?}");
        let _ = out;
    }

    #[test]
    fn conv_gradients_match_finite_differences() {
        for (stride, padding) in [(1, Padding::Valid), (2, Padding::Same)] {
            let input = rng_tensor(&[2, 5, 5, 2], 5, 1.0);
            let kernel = rng_tensor(&[3, 3, 2, 3], 6, 0.6);
            let out = conv2d_forward(&input, &kernel, stride, padding).unwrap();
            let head = rng_tensor(out.shape(), 7, 1.0);
            let (g_in, g_k) = conv2d_backward(&input, &kernel, stride, padding, &head).unwrap();

            let report = finite_diff_check(
                &kernel,
                &g_k,
                |k| weighted_loss(&conv2d_forward(&input, k, stride, padding).unwrap(), &head),
                60,
                21,
            );
            assert!(report.passes(1e-3), "kernel stride {stride}: {report:?}");

            let report = finite_diff_check(
                &input,
                &g_in,
                |x| weighted_loss(&conv2d_forward(x, &kernel, stride, padding).unwrap(), &head),
                60,
                22,
            );
            assert!(report.passes(1e-3), "input stride {stride}: {report:?}");
        }
    }

    #[test]
    fn activation_gradients_match_finite_differences() {
        for kind in [Activation::Relu, Activation::Selu] {
            // keep coordinates away from the kink at 0
            let mut input = rng_tensor(&[4, 10], 8, 1.0);
            for v in input.data_mut() {
                if v.abs() < 0.15 {
                    *v += 0.3f32.copysign(*v + 0.01);
                }
            }
            let head = rng_tensor(&[4, 10], 9, 1.0);
            let grad = activation_backward(&input, kind, &head);
            let report = finite_diff_check(
                &input,
                &grad,
                |x| weighted_loss(&activation_forward(x, kind), &head),
                60,
                23,
            );
            assert!(report.passes(1e-3), "{kind:?}: {report:?}");
        }
    }

    #[test]
    fn pool_gradients_match_finite_differences() {
        let input = rng_tensor(&[2, 4, 3, 5], 10, 1.0);
        let out = global_avg_pool_forward(&input).unwrap();
        let head = rng_tensor(out.shape(), 11, 1.0);
        let grad = global_avg_pool_backward(input.shape(), &head).unwrap();
        let report = finite_diff_check(
            &input,
            &grad,
            |x| weighted_loss(&global_avg_pool_forward(x).unwrap(), &head),
            60,
            24,
        );
        assert!(report.passes(1e-3), "{report:?}");
    }

    #[test]
    fn softmax_xent_gradient_matches_finite_differences() {
        let logits = rng_tensor(&[5, 7], 12, 2.0);
        let labels: Vec<usize> = (0..5).map(|i| (i * 3) % 7).collect();
        let fwd = softmax_xent_forward(&logits, &labels).unwrap();
        let grad = softmax_xent_backward(&fwd.probs, &labels);
        let report = finite_diff_check(
            &logits,
            &grad,
            |l| softmax_xent_forward(l, &labels).unwrap().loss,
            60,
            25,
        );
        assert!(report.passes(1e-3), "{report:?}");
    }
}
