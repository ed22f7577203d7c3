#![allow(dead_code)]

use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;
use termlab::nn::{Activation, Init, Mlp};

/// Architectures covered by the gradient oracle: `(layer sizes, activation)`.
pub const ARCHITECTURES: [(&[usize], Activation); 5] = [
    (&[3, 1], Activation::Tanh),
    (&[3, 5, 2], Activation::Tanh),
    (&[4, 8, 8, 1], Activation::Relu),
    (&[6, 16, 16, 4], Activation::Tanh),
    (&[5, 12, 3], Activation::Relu),
];

pub fn normal_matrix(rows: usize, cols: usize, rng: &mut impl Rng) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.sample(StandardNormal))
}

fn loss(net: &Mlp, x: &Array2<f64>, g: &Array2<f64>) -> f64 {
    (net.forward_batch(x.view()).unwrap() * g).sum()
}

fn relative(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let scale: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt() + b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

/// Relative error of the analytic parameter and input gradients of
/// `L = Σ out * g` against central finite differences.
pub fn gradient_errors(net: &Mlp, x: &Array2<f64>, g: &Array2<f64>) -> (f64, f64) {
    const H: f64 = 1e-5;
    let analytic = net.backward(x.view(), g.view()).unwrap();
    let params = net.params_flat();
    let mut numeric = Vec::with_capacity(params.len());
    let mut probe = net.clone();
    for i in 0..params.len() {
        let mut p = params.clone();
        p[i] = params[i] + H;
        probe.set_params_flat(&p).unwrap();
        let up = loss(&probe, x, g);
        p[i] = params[i] - H;
        probe.set_params_flat(&p).unwrap();
        let down = loss(&probe, x, g);
        numeric.push((up - down) / (2.0 * H));
    }
    let mut numeric_in = Vec::with_capacity(x.len());
    for idx in 0..x.len() {
        let (r, c) = (idx / x.ncols(), idx % x.ncols());
        let mut xp = x.clone();
        xp[[r, c]] += H;
        let up = loss(net, &xp, g);
        xp[[r, c]] -= 2.0 * H;
        let down = loss(net, &xp, g);
        numeric_in.push((up - down) / (2.0 * H));
    }
    let analytic_in: Vec<f64> = analytic.input.iter().copied().collect();
    (relative(&analytic.flat(), &numeric), relative(&analytic_in, &numeric_in))
}

/// Worst parameter and input error over `cases` random nets per architecture.
pub fn worst_gradient_error(cases: usize, rng: &mut impl Rng) -> f64 {
    let mut worst: f64 = 0.0;
    for (sizes, act) in ARCHITECTURES {
        for _ in 0..cases {
            let net = Mlp::new(sizes, act, Init::CRITIC, rng);
            let batch = rng.random_range(1..5);
            let x = normal_matrix(batch, sizes[0], rng);
            let g = normal_matrix(batch, *sizes.last().unwrap(), rng);
            let (p, i) = gradient_errors(&net, &x, &g);
            worst = worst.max(p).max(i);
        }
    }
    worst
}
