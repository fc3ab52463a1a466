use infmcs::autodiff::{check_all_ops, grad_check, Tape, Tensor, DEFAULT_EPSILON};
use infmcs::Error;
use proptest::prelude::*;

#[test]
fn every_op_passes_for_ten_seeds() {
    for seed in 0..10 {
        let results = check_all_ops(seed, DEFAULT_EPSILON).unwrap();
        assert!(results.len() >= 15);
        for (name, err) in results {
            assert!(err < 1e-4, "{name} seed {seed}: {err:e}");
        }
    }
}

#[test]
fn diamond_accumulates_both_paths() {
    let tape = Tape::new();
    let x = tape.param(Tensor::scalar(3.0));
    let a = x.scale(2.0);
    let b = x.mul(x).unwrap();
    let y = a.add(b).unwrap();
    tape.backward(y).unwrap();
    assert_eq!(y.item(), 15.0);
    assert_eq!(x.grad().unwrap().item(), 8.0);
}

#[test]
fn constants_get_no_gradient() {
    let tape = Tape::new();
    let x = tape.param(Tensor::scalar(2.0));
    let c = tape.constant(Tensor::scalar(5.0));
    let y = x.mul(c).unwrap();
    tape.backward(y).unwrap();
    assert_eq!(x.grad().unwrap().item(), 5.0);
    assert!(c.grad().is_none());
}

#[test]
fn backward_needs_a_scalar() {
    let tape = Tape::new();
    let x = tape.param(Tensor::zeros(&[2, 2]));
    assert!(matches!(tape.backward(x), Err(Error::ShapeMismatch { .. })));
}

#[test]
fn shape_errors_are_reported() {
    let tape = Tape::new();
    let a = tape.param(Tensor::zeros(&[2, 3]));
    let b = tape.param(Tensor::zeros(&[2, 3]));
    assert!(matches!(a.matmul(b), Err(Error::ShapeMismatch { .. })));
    assert!(Tensor::new(vec![2, 2], vec![1.0; 3]).is_err());
}

#[test]
fn composite_attention_block() {
    let q = Tensor::from_rows(&[vec![0.2, -0.4, 0.9], vec![1.1, 0.3, -0.5]]).unwrap();
    let k = Tensor::from_rows(&[vec![0.5, 0.1, -0.3], vec![-0.7, 0.8, 0.2], vec![0.0, 0.6, 0.4]]).unwrap();
    let err = grad_check(
        &[q, k, Tensor::scalar(0.3)],
        |_, v| {
            let scores = v[0].normalize_rows().matmul(v[1].normalize_rows().transpose()?)?;
            let weights = scores.softmax(Some(v[2].sigmoid().recip()))?;
            Ok(weights.matmul(v[1])?.relu().sum())
        },
        DEFAULT_EPSILON,
        4,
    )
    .unwrap();
    assert!(err < 1e-4, "{err:e}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn softmax_rows_sum_to_one(data in prop::collection::vec(-20.0f64..20.0, 12)) {
        let tape = Tape::new();
        let x = tape.constant(Tensor::new(vec![3, 4], data).unwrap());
        let s = x.softmax(None).unwrap().value();
        for r in 0..3 {
            let total: f64 = s.row(r).iter().sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn matmul_gradient_matches(data in prop::collection::vec(-2.0f64..2.0, 12), seed in 0u64..1000) {
        let a = Tensor::new(vec![2, 3], data[..6].to_vec()).unwrap();
        let b = Tensor::new(vec![3, 2], data[6..].to_vec()).unwrap();
        let err = grad_check(&[a, b], |_, v| v[0].matmul(v[1]), DEFAULT_EPSILON, seed).unwrap();
        prop_assert!(err < 1e-6);
    }
}
