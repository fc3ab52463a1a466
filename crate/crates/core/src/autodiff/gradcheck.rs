//! Central finite-difference verification of analytic gradients.

use std::rc::Rc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::tape::{Propagation, Tape, Var};
use super::tensor::Tensor;
use crate::error::Result;

pub const DEFAULT_EPSILON: f64 = 1e-4;

/// `|a - b| / max(|a|, |b|, floor)`; the floor keeps near-zero gradients
/// from turning rounding noise into large ratios.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

/// Compares the analytic gradient of `f` with central differences at
/// `inputs`. The output of `f` is reduced to a scalar by a fixed random
/// projection so every output element contributes. Returns the largest
/// relative error over all input elements.
pub fn grad_check<F>(inputs: &[Tensor], f: F, epsilon: f64, seed: u64) -> Result<f64>
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>>,
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9);
    let projection: Rc<Tensor> = {
        let tape = Tape::new();
        let vars: Vec<Var<'_>> = inputs.iter().map(|t| tape.constant(t.clone())).collect();
        let out = f(&tape, &vars)?.value();
        let data = (0..out.len()).map(|_| rng.sample(StandardNormal)).collect();
        Rc::new(Tensor::new(out.shape().to_vec(), data)?)
    };
    let evaluate = |values: &[Tensor]| -> Result<f64> {
        let tape = Tape::new();
        let vars: Vec<Var<'_>> = values.iter().map(|t| tape.constant(t.clone())).collect();
        let out = f(&tape, &vars)?;
        Ok(out.mul(tape.constant(Rc::clone(&projection)))?.sum().item())
    };

    let tape = Tape::new();
    let vars: Vec<Var<'_>> = inputs.iter().map(|t| tape.param(t.clone())).collect();
    let loss = f(&tape, &vars)?.mul(tape.constant(Rc::clone(&projection)))?.sum();
    tape.backward(loss)?;

    let mut worst = 0.0f64;
    let mut probe: Vec<Tensor> = inputs.to_vec();
    for (k, var) in vars.iter().enumerate() {
        let analytic = var
            .grad()
            .unwrap_or_else(|| Tensor::zeros(inputs[k].shape()));
        for i in 0..inputs[k].len() {
            let x = inputs[k].data()[i];
            probe[k].data_mut()[i] = x + epsilon;
            let up = evaluate(&probe)?;
            probe[k].data_mut()[i] = x - epsilon;
            let down = evaluate(&probe)?;
            probe[k].data_mut()[i] = x;
            let numeric = (up - down) / (2.0 * epsilon);
            worst = worst.max(relative_error(analytic.data()[i], numeric));
        }
    }
    Ok(worst)
}

fn normal(rng: &mut impl Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.sample(StandardNormal)).collect())
        .expect("shape matches data")
}

/// Values bounded away from zero so that ReLU kinks stay outside the
/// finite-difference stencil.
fn away_from_zero(rng: &mut impl Rng, shape: &[usize]) -> Tensor {
    let mut t = normal(rng, shape);
    for x in t.data_mut() {
        *x = x.signum() * (0.1 + x.abs());
    }
    t
}

fn uniform(rng: &mut impl Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(lo..hi)).collect())
        .expect("shape matches data")
}

type OpCase = (&'static str, Vec<Tensor>, Box<dyn for<'t> Fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>>>);

fn op_cases(rng: &mut ChaCha8Rng) -> Vec<OpCase> {
    let prop = Rc::new(
        Propagation::new(vec![
            vec![(0, 0.5), (1, 1.0 / 6f64.sqrt())],
            vec![(0, 1.0 / 6f64.sqrt()), (1, 1.0 / 3.0), (2, 1.0 / 6f64.sqrt())],
            vec![(1, 1.0 / 6f64.sqrt()), (2, 0.5)],
        ])
        .expect("valid propagation"),
    );
    vec![
        ("matmul", vec![normal(rng, &[3, 4]), normal(rng, &[4, 2])], Box::new(|_, v| v[0].matmul(v[1]))),
        ("transpose", vec![normal(rng, &[3, 5])], Box::new(|_, v| v[0].transpose())),
        ("add", vec![normal(rng, &[4, 3]), normal(rng, &[4, 3])], Box::new(|_, v| v[0].add(v[1]))),
        ("add_broadcast", vec![normal(rng, &[4, 3]), normal(rng, &[3])], Box::new(|_, v| v[0].add(v[1]))),
        ("mul", vec![normal(rng, &[3, 3]), normal(rng, &[3, 3])], Box::new(|_, v| v[0].mul(v[1]))),
        ("scale", vec![normal(rng, &[2, 5])], Box::new(|_, v| Ok(v[0].scale(-1.7)))),
        ("scale_by", vec![normal(rng, &[2, 5]), normal(rng, &[1])], Box::new(|_, v| v[0].scale_by(v[1]))),
        (
            "concat",
            vec![normal(rng, &[3, 2]), normal(rng, &[3, 4])],
            Box::new(|_, v| Var::concat(&[v[0], v[1]])),
        ),
        ("slice_cols", vec![normal(rng, &[3, 6])], Box::new(|_, v| v[0].slice_cols(2, 3))),
        ("row_gather", vec![normal(rng, &[5, 3])], Box::new(|_, v| v[0].row_gather(&[4, 0, 4, 2]))),
        (
            "neighbor_sum",
            vec![normal(rng, &[3, 4])],
            Box::new(move |_, v| v[0].neighbor_sum(&prop)),
        ),
        ("relu", vec![away_from_zero(rng, &[4, 4])], Box::new(|_, v| Ok(v[0].relu()))),
        ("sigmoid", vec![normal(rng, &[4, 4])], Box::new(|_, v| Ok(v[0].sigmoid()))),
        ("recip", vec![uniform(rng, &[2, 3], 0.5, 2.0)], Box::new(|_, v| Ok(v[0].recip()))),
        ("softmax", vec![normal(rng, &[4, 5])], Box::new(|_, v| v[0].softmax(None))),
        (
            // multiplier 1/tau with tau = 0.3, differentiated through tau
            "softmax_scaled",
            vec![normal(rng, &[4, 5]), Tensor::scalar(0.3)],
            Box::new(|_, v| v[0].softmax(Some(v[1].recip()))),
        ),
        (
            "layer_norm",
            vec![normal(rng, &[5, 8]), normal(rng, &[8]), normal(rng, &[8])],
            Box::new(|_, v| v[0].layer_norm(v[1], v[2])),
        ),
        ("normalize_rows", vec![normal(rng, &[3, 4])], Box::new(|_, v| Ok(v[0].normalize_rows()))),
        ("sum", vec![normal(rng, &[3, 4])], Box::new(|_, v| Ok(v[0].sum()))),
        ("mean", vec![normal(rng, &[3, 4])], Box::new(|_, v| Ok(v[0].mean()))),
        (
            "mse_loss",
            vec![normal(rng, &[2, 3]), normal(rng, &[2, 3])],
            Box::new(|_, v| v[0].mse_loss(v[1])),
        ),
        (
            "bce_loss",
            vec![uniform(rng, &[2, 3], 0.05, 0.95), uniform(rng, &[2, 3], 0.0, 1.0)],
            Box::new(|_, v| v[0].bce_loss(v[1])),
        ),
    ]
}

/// Runs [`grad_check`] on every differentiable operation with inputs drawn
/// from `seed`. Returns `(op name, max relative error)` per operation.
pub fn check_all_ops(seed: u64, epsilon: f64) -> Result<Vec<(&'static str, f64)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    op_cases(&mut rng)
        .into_iter()
        .map(|(name, inputs, f)| Ok((name, grad_check(&inputs, f, epsilon, seed)?)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_op_passes_at_one_seed() {
        for (name, err) in check_all_ops(1, DEFAULT_EPSILON).unwrap() {
            assert!(err < 1e-4, "{name}: {err}");
        }
    }

    #[test]
    fn detects_a_wrong_gradient() {
        // relu applied to a value sitting on its kink disagrees with the
        // symmetric difference quotient
        let err = grad_check(&[Tensor::scalar(0.0)], |_, v| Ok(v[0].relu()), 1e-4, 0).unwrap();
        assert!(err > 0.1);
    }
}
