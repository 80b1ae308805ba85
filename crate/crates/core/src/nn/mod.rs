//! Small dense networks with hand-written backpropagation.

pub mod adam;
pub mod checkpoint;
pub mod critic;
pub mod encoder;
pub mod gaussian;
pub mod mlp;
pub mod tensor;

pub use adam::Adam;
pub use checkpoint::{param_hash, Checkpoint};
pub use critic::CriticEnsemble;
pub use encoder::ImageEncoder;
pub use gaussian::{log_prob, GaussianPolicy, InputLayout};
pub use mlp::{Activation, Gradients, Mlp, MlpSpec, OutputHead, Tape};
pub use tensor::Matrix;

/// Largest relative error between the analytic gradient of
/// `sum(weights * net(x))` and a central finite difference, over every
/// parameter. Relative error is `|a - fd| / (|a| + 1e-8)`; entries whose
/// absolute error is below `abs_floor` count as exact.
pub fn gradient_check(net: &Mlp, x: &Matrix, weights: &Matrix, h: f64, abs_floor: f64) -> f64 {
    let loss = |n: &Mlp| -> f64 {
        let y = n.predict(x).expect("input matches net");
        y.data.iter().zip(&weights.data).map(|(a, b)| a * b).sum()
    };
    let (_, tape) = net.forward(x).expect("input matches net");
    let g = net.backward(&tape, weights).expect("fresh tape");
    let mut probe = net.clone();
    let mut worst: f64 = 0.0;
    for i in 0..net.params().len() {
        let orig = probe.params()[i];
        probe.params_mut()[i] = orig + h;
        let up = loss(&probe);
        probe.params_mut()[i] = orig - h;
        let down = loss(&probe);
        probe.params_mut()[i] = orig;
        let fd = (up - down) / (2.0 * h);
        let abs = (g.params[i] - fd).abs();
        if abs > abs_floor {
            worst = worst.max(abs / (g.params[i].abs() + 1e-8));
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;
    use proptest::prelude::*;
    use rand_distr::Distribution;

    #[test]
    fn linear_squared_loss_gradient() {
        // pred = w.x + b with one hidden identity-like layer is not linear,
        // so check the output layer directly: dL/dw_out = 2 (pred - y) h
        let spec = MlpSpec::linear(2, &[3], 1, Activation::Tanh);
        let net = Mlp::new(spec, 1.0, &mut seed::stream(4, "lin", 0));
        let x = Matrix::from_vec(1, 2, vec![0.7, -1.2]);
        let y = 0.3;
        let (pred, tape) = net.forward(&x).unwrap();
        let d = Matrix::from_vec(1, 1, vec![2.0 * (pred.data[0] - y)]);
        let g = net.backward(&tape, &d).unwrap();
        // hidden activations
        let p = net.params();
        let h: Vec<f64> = (0..3).map(|j| (p[2 * j] * 0.7 + p[2 * j + 1] * -1.2 + p[6 + j]).tanh()).collect();
        let out_w = 9;
        for j in 0..3 {
            assert!((g.params[out_w + j] - 2.0 * (pred.data[0] - y) * h[j]).abs() < 1e-12);
        }
        assert!((g.params[12] - 2.0 * (pred.data[0] - y)).abs() < 1e-12);
        // input gradient of a linear map is its weight vector times the upstream
        let dx: Vec<f64> = (0..2)
            .map(|i| (0..3).map(|j| d.data[0] * p[out_w + j] * (1.0 - h[j] * h[j]) * p[2 * j + i]).sum())
            .collect();
        assert!((g.input.data[0] - dx[0]).abs() < 1e-12 && (g.input.data[1] - dx[1]).abs() < 1e-12);
    }

    #[test]
    fn constant_loss_has_zero_gradient() {
        let net = Mlp::new(MlpSpec::linear(3, &[4, 4], 2, Activation::Relu), 1.0, &mut seed::stream(5, "c", 0));
        let x = Matrix::from_vec(2, 3, vec![0.1, 0.2, 0.3, -0.1, 0.5, 0.9]);
        let (_, tape) = net.forward(&x).unwrap();
        let g = net.backward(&tape, &Matrix::zeros(2, 2)).unwrap();
        assert!(g.params.iter().all(|v| *v == 0.0));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn randomized_two_layer_nets_pass_gradcheck(s in 0u64..10_000, tanh in any::<bool>(), ln in any::<bool>()) {
            let act = if tanh { Activation::Tanh } else { Activation::Relu };
            let mut spec = MlpSpec::linear(4, &[6, 5], 3, act);
            if ln {
                spec = spec.with_layer_norm();
            }
            let mut rng = seed::stream(s, "gc", 0);
            let mut net = Mlp::new(spec, 1.0, &mut rng);
            // random biases and gains keep pre-activations off the ReLU kink
            for p in net.params_mut() {
                let z: f64 = rand_distr::StandardNormal.sample(&mut rng);
                *p += 0.3 * z;
            }
            let x = Matrix::from_vec(3, 4, (0..12).map(|i| ((s + i) as f64 * 0.61).sin()).collect());
            let w = Matrix::from_vec(3, 3, (0..9).map(|i| ((s * 3 + i) as f64 * 0.37).cos()).collect());
            let err = gradient_check(&net, &x, &w, 1e-6, 1e-9);
            prop_assert!(err < 1e-4, "relative error {}", err);
        }
    }
}
