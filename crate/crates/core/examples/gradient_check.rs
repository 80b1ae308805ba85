//! Compares backpropagated gradients of randomly shaped networks against
//! central finite differences.
//!
//! ```text
//! cargo run --release --example gradient_check -- [n_networks]
//! ```

use rand::Rng as _;
use residrl::nn::{gradient_check, Activation, Matrix, Mlp, MlpSpec};
use residrl::seed;

fn main() {
    let n: u64 = std::env::args().nth(1).map_or(10, |s| s.parse().expect("n_networks"));
    let mut worst: f64 = 0.0;
    for i in 0..n {
        let mut rng = seed::stream(11, "gradcheck-example", i);
        let input = rng.random_range(1..6);
        let hidden: Vec<usize> = (0..rng.random_range(1..3)).map(|_| rng.random_range(2..8)).collect();
        let output = rng.random_range(1..4);
        let act = [Activation::Tanh, Activation::Relu][rng.random_range(0..2)];
        let mut spec = MlpSpec::linear(input, &hidden, output, act);
        if rng.random_bool(0.5) {
            spec = spec.with_layer_norm();
        }
        let net = Mlp::new(spec, 1.0, &mut rng);
        let rows = 4;
        let mut uniform = |n: usize| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<f64>>();
        let x = Matrix::from_vec(rows, input, uniform(rows * input));
        let w = Matrix::from_vec(rows, output, uniform(rows * output));
        let err = gradient_check(&net, &x, &w, 1e-5, 1e-9);
        worst = worst.max(err);
        println!("net {i:2}: {} max relative error {err:.2e}", net.spec().describe());
    }
    println!("worst {worst:.2e}");
}
