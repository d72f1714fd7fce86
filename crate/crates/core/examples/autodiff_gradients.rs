//! The autodiff engine on its own: fit a tiny two-layer network by hand,
//! then compare one reverse-mode gradient with central finite differences.
//!
//! ```text
//! cargo run --release --example autodiff_gradients
//! ```

use pavegraph::autodiff::{Graph, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Mean squared error of `tanh(x w1) w2` against `y`, with gradients for both weights.
fn loss(x: &Tensor, y: &Tensor, w1: &Tensor, w2: &Tensor) -> (f64, Tensor, Tensor) {
    let mut g = Graph::new();
    let xv = g.constant(x.clone()).unwrap();
    let yv = g.constant(y.clone()).unwrap();
    let a = g.param(w1.clone()).unwrap();
    let b = g.param(w2.clone()).unwrap();
    let h = g.matmul(xv, a).unwrap();
    let h = g.tanh(h).unwrap();
    let out = g.matmul(h, b).unwrap();
    let diff = g.sub(out, yv).unwrap();
    let sq = g.square(diff).unwrap();
    let l = g.mean(sq).unwrap();
    let grads = g.backward(l).unwrap();
    (g.value(l).item(), grads.wrt(a), grads.wrt(b))
}

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut random = |r: usize, c: usize, s: f64| {
        Tensor::matrix(r, c, (0..r * c).map(|_| rng.random_range(-s..s)).collect())
    };
    let x = random(64, 3, 2.0);
    let y = Tensor::column((0..64).map(|i| (x.get(i, 0) - 0.5 * x.get(i, 2)).sin()).collect());
    let mut w1 = random(3, 8, 0.5);
    let mut w2 = random(8, 1, 0.5);

    for step in 0..=2000 {
        let (l, g1, g2) = loss(&x, &y, &w1, &w2);
        if step % 400 == 0 {
            println!("step {step:>4}  mse {l:.5}");
        }
        w1 = w1.zip_map(&g1, |w, g| w - 0.1 * g);
        w2 = w2.zip_map(&g2, |w, g| w - 0.1 * g);
    }

    let (_, g1, _) = loss(&x, &y, &w1, &w2);
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for k in 0..w1.len() {
        let (mut up, mut down) = (w1.clone(), w1.clone());
        up.data_mut()[k] += h;
        down.data_mut()[k] -= h;
        let numeric = (loss(&x, &y, &up, &w2).0 - loss(&x, &y, &down, &w2).0) / (2.0 * h);
        let analytic = g1.data()[k];
        worst = worst.max((numeric - analytic).abs() / numeric.abs().max(analytic.abs()).max(1e-8));
    }
    println!("largest relative gap between reverse-mode and finite-difference gradient: {worst:.2e}");
}
