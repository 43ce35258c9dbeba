//! Dense numeric substrate: tensors, a reverse-mode tape, activations,
//! losses, dropout, L2 regularisation, Adam and gradient checking.

mod adam;
pub(crate) mod gradcheck;
mod params;
mod tape;
mod tensor;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use adam::{AdamConfig, AdamState};
pub use gradcheck::{grad_check, relative_error, GradCheckReport};
pub use params::{Param, ParamKind, ParamStore};
pub use tape::{sigmoid, softmax, Activation, Fault, Tape, Var, LOG_EPS};
pub use tensor::Tensor;

use crate::error::{Error, Result};

/// Generator for stream `stream` of a seed. Distinct streams of the same
/// seed are independent ChaCha sequences.
pub fn seeded_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn apply_activation(x: &Tensor, kind: Activation) -> Tensor {
    let data = x.data().iter().map(|&v| kind.apply(v)).collect();
    Tensor::new(x.shape().to_vec(), data).expect("activation keeps the shape")
}

/// `-ln(probs[gold] + 1e-12)`.
pub fn cross_entropy(probs: &[f64], gold: usize) -> Result<f64> {
    probs.get(gold).map(|p| -(p + LOG_EPS).ln()).ok_or_else(|| {
        Error::structural(format!(
            "gold index {gold} out of range for {} classes",
            probs.len()
        ))
    })
}

/// Inverted dropout on a plain tensor; identity outside training.
pub fn dropout<R: Rng + ?Sized>(
    x: &Tensor,
    rate: f64,
    rng: &mut R,
    training: bool,
) -> Result<Tensor> {
    tape::check_dropout_rate(rate)?;
    if !training || rate == 0.0 {
        return Ok(x.clone());
    }
    let mask = tape::dropout_mask(x.len(), rate, rng);
    let data = x.data().iter().zip(mask).map(|(v, m)| v * m).collect();
    Tensor::new(x.shape().to_vec(), data)
}

/// `lambda · Σ ‖W‖²` over the weight matrices of `store`. Biases and
/// embeddings are not penalised.
pub fn l2_penalty(store: &ParamStore, lambda: f64) -> f64 {
    lambda
        * store
            .iter()
            .filter(|p| p.kind == ParamKind::Weight)
            .map(|p| p.value.sum_squares())
            .sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn softmax_basics() {
        assert_eq!(softmax(&[0.0, 0.0]), vec![0.5, 0.5]);
        let p = softmax(&[1000.0, 0.0]);
        assert!((p[0] - 1.0).abs() < 1e-12 && p[1] >= 0.0 && p[1] < 1e-12);
        assert!(p.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn relu_is_identity_on_nonnegative() {
        let mut rng = seeded_rng(11, 0);
        let data: Vec<f64> = (0..50).map(|_| rng.gen_range(0.0..10.0)).collect();
        let x = Tensor::vector(data);
        assert_eq!(apply_activation(&x, Activation::Relu), x);
    }

    #[test]
    fn dropout_identity_cases() {
        let mut rng = seeded_rng(1, 0);
        let x = Tensor::vector(vec![1.0, -2.0, 3.0]);
        assert_eq!(dropout(&x, 0.0, &mut rng, true).unwrap(), x);
        assert_eq!(dropout(&x, 0.9, &mut rng, false).unwrap(), x);
        assert!(matches!(
            dropout(&x, 1.0, &mut rng, true),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn dropout_monte_carlo() {
        let mut rng = seeded_rng(2024, 0);
        let n = 100_000;
        let x = Tensor::vector((0..n).map(|i| 1.0 + (i % 7) as f64).collect());
        let y = dropout(&x, 0.5, &mut rng, true).unwrap();
        let zeros = y.data().iter().filter(|v| **v == 0.0).count() as f64 / n as f64;
        assert!((zeros - 0.51).abs() <= 0.02, "zero fraction {zeros}");
        let in_mean = x.data().iter().sum::<f64>() / n as f64;
        let out_mean = y.data().iter().sum::<f64>() / n as f64;
        assert!((out_mean / in_mean - 1.0).abs() < 0.03);
    }

    #[test]
    fn l2_over_weights_only() {
        let mut store = ParamStore::new();
        store.push("w", ParamKind::Weight, Tensor::vector(vec![3.0, 4.0]));
        store.push("b", ParamKind::Bias, Tensor::vector(vec![10.0]));
        store.push("e", ParamKind::Embedding, Tensor::vector(vec![10.0]));
        assert_eq!(l2_penalty(&store, 1.0), 25.0);
        assert_eq!(l2_penalty(&store, 0.0), 0.0);
    }

    fn random_logits(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.gen_range(-100.0..100.0)).collect()
    }

    proptest! {
        #[test]
        fn softmax_shift_invariant(seed in any::<u64>(), n in 1usize..12, shift in -100.0f64..100.0) {
            let mut rng = seeded_rng(seed, 0);
            let x = random_logits(&mut rng, n);
            let shifted: Vec<f64> = x.iter().map(|v| v + shift).collect();
            for (a, b) in softmax(&x).iter().zip(softmax(&shifted)) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn softmax_is_a_distribution(seed in any::<u64>(), n in 1usize..12) {
            let mut rng = seeded_rng(seed, 0);
            let p = softmax(&random_logits(&mut rng, n));
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(p.iter().all(|v| v.is_finite() && *v >= 0.0));
        }

        #[test]
        fn softmax_strictly_positive_in_moderate_range(seed in any::<u64>(), n in 1usize..12) {
            let mut rng = seeded_rng(seed, 1);
            let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-30.0..30.0)).collect();
            prop_assert!(softmax(&x).iter().all(|v| *v > 0.0));
        }

        #[test]
        fn activations_stay_finite(x in -100.0f64..100.0) {
            for kind in [Activation::Sigmoid, Activation::Tanh, Activation::Relu] {
                prop_assert!(kind.apply(x).is_finite());
            }
        }

        // Backward of a sum of losses equals the sum of separate backwards.
        #[test]
        fn backward_is_linear(seed in any::<u64>()) {
            let mut rng = seeded_rng(seed, 2);
            let w = Tensor::glorot_uniform(3, 4, &mut rng);
            let x: Vec<f64> = (0..4).map(|_| rng.gen_range(-2.0..2.0)).collect();

            let build = |tape: &mut Tape, which: u8| {
                let wv = tape.leaf(&w);
                let xv = tape.constant(&x);
                let h = tape.matvec(wv, xv);
                let a = tape.tanh(h);
                let l1 = tape.sum_squares(a);
                let s = tape.softmax(h);
                let l2 = tape.cross_entropy(s, 1).unwrap();
                let loss = match which {
                    0 => l1,
                    1 => l2,
                    _ => tape.sum(&[l1, l2]),
                };
                (wv, xv, loss)
            };

            let mut grads = Vec::new();
            for which in 0..3u8 {
                let mut tape = Tape::new();
                let (wv, xv, loss) = build(&mut tape, which);
                tape.backward(loss);
                grads.push((tape.grad(wv).to_vec(), tape.grad(xv).to_vec()));
            }
            for i in 0..12 {
                prop_assert!((grads[0].0[i] + grads[1].0[i] - grads[2].0[i]).abs() < 1e-12);
            }
            for i in 0..4 {
                prop_assert!((grads[0].1[i] + grads[1].1[i] - grads[2].1[i]).abs() < 1e-12);
            }
        }
    }
}
