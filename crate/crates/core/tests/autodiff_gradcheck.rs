use std::sync::Arc;

use pavegraph::autodiff::{AutodiffError, Graph, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Build = dyn Fn(&mut Graph, &[Var]) -> Result<Var, AutodiffError>;

fn random_tensor(rng: &mut ChaCha8Rng, rows: usize, cols: usize, lo: f64, hi: f64) -> Tensor {
    let data = (0..rows * cols).map(|_| rng.random_range(lo..hi)).collect();
    Tensor::matrix(rows, cols, data)
}

fn eval(build: &Build, inputs: &[Tensor]) -> f64 {
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.param(t.clone()).unwrap()).collect();
    let out = build(&mut g, &vars).unwrap();
    let loss = g.sum(out).unwrap();
    g.value(loss).item()
}

/// Central differences with step 1e-5 against the tape gradient of `sum(build(inputs))`.
fn check(name: &str, build: &Build, inputs: &[Tensor]) {
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.param(t.clone()).unwrap()).collect();
    let out = build(&mut g, &vars).unwrap();
    let loss = g.sum(out).unwrap();
    let grads = g.backward(loss).unwrap();
    let h = 1e-5;
    for (k, t) in inputs.iter().enumerate() {
        let analytic = grads.wrt(vars[k]);
        for i in 0..t.len() {
            let mut plus = inputs.to_vec();
            plus[k].data_mut()[i] += h;
            let mut minus = inputs.to_vec();
            minus[k].data_mut()[i] -= h;
            let numeric = (eval(build, &plus) - eval(build, &minus)) / (2.0 * h);
            let a = analytic.data()[i];
            let err = (a - numeric).abs() / numeric.abs().max(a.abs()).max(1.0);
            assert!(
                err < 1e-4,
                "{name}: input {k} element {i}: analytic {a} vs numeric {numeric}"
            );
        }
    }
}

fn unary(name: &str, lo: f64, hi: f64, f: impl Fn(&mut Graph, Var) -> Result<Var, AutodiffError> + 'static) {
    let mut rng = ChaCha8Rng::seed_from_u64(name.len() as u64);
    let build: Box<Build> = Box::new(move |g, v| f(g, v[0]));
    for _ in 0..20 {
        let r = rng.random_range(1..4);
        let c = rng.random_range(1..4);
        check(name, &*build, &[random_tensor(&mut rng, r, c, lo, hi)]);
    }
}

fn binary_same(name: &str, f: impl Fn(&mut Graph, Var, Var) -> Result<Var, AutodiffError> + 'static) {
    let mut rng = ChaCha8Rng::seed_from_u64(100 + name.len() as u64);
    let build: Box<Build> = Box::new(move |g, v| f(g, v[0], v[1]));
    for _ in 0..20 {
        let r = rng.random_range(1..4);
        let c = rng.random_range(1..4);
        let a = random_tensor(&mut rng, r, c, -2.0, 2.0);
        let b = random_tensor(&mut rng, r, c, -2.0, 2.0);
        check(name, &*build, &[a, b]);
    }
}

#[test]
fn elementwise_binary_ops() {
    binary_same("add", |g, a, b| g.add(a, b));
    binary_same("sub", |g, a, b| g.sub(a, b));
    binary_same("mul", |g, a, b| g.mul(a, b));
}

#[test]
fn elementwise_unary_ops() {
    // Sample away from the kinks so finite differences stay on one branch.
    unary("leaky_relu_pos", 0.1, 2.0, |g, a| g.leaky_relu(a, 0.2));
    unary("leaky_relu_neg", -2.0, -0.1, |g, a| g.leaky_relu(a, 0.2));
    unary("elu_pos", 0.1, 2.0, |g, a| g.elu(a, 1.0));
    unary("elu_neg", -2.0, -0.1, |g, a| g.elu(a, 1.0));
    unary("relu", 0.1, 2.0, |g, a| g.relu(a));
    unary("tanh", -2.0, 2.0, |g, a| g.tanh(a));
    unary("sigmoid", -4.0, 4.0, |g, a| g.sigmoid(a));
    unary("square", -2.0, 2.0, |g, a| g.square(a));
    unary("powf", 0.5, 2.0, |g, a| g.powf(a, -0.5));
    unary("ln", 0.5, 3.0, |g, a| g.ln(a));
    unary("scale", -2.0, 2.0, |g, a| g.scale(a, -1.7));
    unary("add_scalar", -2.0, 2.0, |g, a| g.add_scalar(a, 0.3));
    unary("clamp_inside", 0.1, 0.9, |g, a| g.clamp(a, 0.0, 1.0));
    unary("mean", -2.0, 2.0, |g, a| g.mean(a));
    unary("row_mean", -2.0, 2.0, |g, a| g.row_mean(a));
    unary("transpose", -2.0, 2.0, |g, a| {
        let t = g.transpose(a)?;
        let w = g.square(t)?;
        g.mul(w, t)
    });
}

#[test]
fn broadcast_and_matmul_ops() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..20 {
        let n = rng.random_range(1..5);
        let k = rng.random_range(1..5);
        let m = rng.random_range(1..5);
        let a = random_tensor(&mut rng, n, k, -2.0, 2.0);
        let b = random_tensor(&mut rng, k, m, -2.0, 2.0);
        let row = random_tensor(&mut rng, 1, k, -2.0, 2.0);
        let col = random_tensor(&mut rng, n, 1, -2.0, 2.0);
        check("matmul", &|g, v| g.matmul(v[0], v[1]), &[a.clone(), b]);
        check("add_row", &|g, v| {
            let s = g.add_row(v[0], v[1])?;
            g.square(s)
        }, &[a.clone(), row.clone()]);
        check("mul_row", &|g, v| g.mul_row(v[0], v[1]), &[a.clone(), row]);
        check("add_col", &|g, v| {
            let s = g.add_col(v[0], v[1])?;
            g.square(s)
        }, &[a.clone(), col.clone()]);
        check("mul_col", &|g, v| g.mul_col(v[0], v[1]), &[a, col]);
    }
}

#[test]
fn structural_ops() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..20 {
        let a = random_tensor(&mut rng, 3, 2, -2.0, 2.0);
        let b = random_tensor(&mut rng, 3, 4, -2.0, 2.0);
        let c = random_tensor(&mut rng, 2, 2, -2.0, 2.0);
        check("concat_cols", &|g, v| {
            let x = g.concat(&[v[0], v[1]], 1)?;
            g.square(x)
        }, &[a.clone(), b.clone()]);
        check("concat_rows", &|g, v| {
            let x = g.concat(&[v[0], v[1]], 0)?;
            g.square(x)
        }, &[a.clone(), c]);
        check("slice_cols", &|g, v| {
            let x = g.slice(v[0], 1, 1, 2)?;
            g.square(x)
        }, &[b.clone()]);
        check("slice_rows", &|g, v| {
            let x = g.slice(v[0], 0, 1, 2)?;
            g.square(x)
        }, &[b]);
        let idx: Arc<[usize]> = Arc::from(vec![2, 0, 0, 1]);
        check("gather_rows", &move |g, v| {
            let x = g.gather_rows(v[0], &idx)?;
            g.square(x)
        }, &[a.clone()]);
        let idx: Arc<[usize]> = Arc::from(vec![1, 1, 0]);
        check("scatter_add_rows", &move |g, v| {
            let x = g.scatter_add_rows(v[0], &idx, 3)?;
            g.square(x)
        }, &[a]);
    }
}

#[test]
fn segment_softmax_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let seg: Arc<[usize]> = Arc::from(vec![0, 0, 1, 1, 1, 2]);
    for _ in 0..20 {
        let x = random_tensor(&mut rng, 6, 1, -3.0, 3.0);
        let w = random_tensor(&mut rng, 6, 1, -1.0, 1.0);
        let s = seg.clone();
        check("segment_softmax", &move |g, v| {
            let a = g.segment_softmax(v[0], &s, 3)?;
            g.mul(a, v[1])
        }, &[x, w]);
    }
}

#[test]
fn composed_jacobian() {
    // f(x) = tanh(W x) for a 2-vector x; each output checked separately.
    let w = Tensor::matrix(2, 2, vec![0.5, -1.0, 2.0, 0.25]);
    let x = Tensor::row(vec![0.3, -0.7]);
    for out in 0..2 {
        let wc = w.clone();
        check("jacobian_row", &move |g, v| {
            let wt = g.constant(wc.clone())?;
            let y = g.matmul(v[0], wt)?;
            let y = g.tanh(y)?;
            g.slice(y, 1, out, 1)
        }, &[x.clone()]);
    }
}

#[test]
fn square_sum_gradient_example() {
    let mut g = Graph::new();
    let x = g.param(Tensor::row(vec![1.0, 2.0, 3.0])).unwrap();
    let sq = g.mul(x, x).unwrap();
    let s = g.sum(sq).unwrap();
    let grads = g.backward(s).unwrap();
    assert_eq!(grads.wrt(x).data(), &[2.0, 4.0, 6.0]);
}

#[test]
fn activation_values() {
    let mut g = Graph::new();
    let x = g.constant(Tensor::row(vec![-2.0, 0.0, 1.0])).unwrap();
    let l = g.leaky_relu(x, 0.2).unwrap();
    let s = g.sigmoid(x).unwrap();
    let e = g.elu(x, 1.0).unwrap();
    assert!((g.value(l).data()[0] + 0.4).abs() < 1e-15);
    assert_eq!(g.value(s).data()[1], 0.5);
    assert_eq!(g.value(e).data()[2], 1.0);
}

#[test]
fn segment_softmax_values() {
    let mut g = Graph::new();
    let x = g.constant(Tensor::column(vec![0.0, 3f64.ln()])).unwrap();
    let seg: Arc<[usize]> = Arc::from(vec![0, 0]);
    let a = g.segment_softmax(x, &seg, 1).unwrap();
    let v = g.value(a).data();
    assert!((v[0] - 0.25).abs() < 1e-12 && (v[1] - 0.75).abs() < 1e-12);
}

#[test]
fn segment_softmax_is_shift_stable() {
    let mut g = Graph::new();
    let x = g.constant(Tensor::column(vec![1000.0, 1000.0, -1000.0])).unwrap();
    let seg: Arc<[usize]> = Arc::from(vec![0, 0, 1]);
    let a = g.segment_softmax(x, &seg, 2).unwrap();
    assert_eq!(g.value(a).data(), &[0.5, 0.5, 1.0]);
}

#[test]
fn concat_shapes() {
    let mut g = Graph::new();
    let a = g.constant(Tensor::zeros(&[2, 3])).unwrap();
    let b = g.constant(Tensor::zeros(&[2, 5])).unwrap();
    let c = g.concat(&[a, b], 1).unwrap();
    assert_eq!(g.shape(c), &[2, 8]);
    let d = g.constant(Tensor::zeros(&[3, 3])).unwrap();
    assert!(g.concat(&[a, d], 1).is_err());
}

#[test]
fn shape_errors_name_both_shapes() {
    let mut g = Graph::new();
    let a = g.constant(Tensor::zeros(&[2, 3])).unwrap();
    let b = g.constant(Tensor::zeros(&[2, 2])).unwrap();
    let msg = g.matmul(a, b).unwrap_err().to_string();
    assert!(msg.contains("[2, 3]") && msg.contains("[2, 2]"), "{msg}");
    assert!(g.add(a, b).is_err());
}

#[test]
fn backward_requires_scalar_and_ignores_constants() {
    let mut g = Graph::new();
    let c = g.constant(Tensor::row(vec![1.0, 2.0])).unwrap();
    let p = g.param(Tensor::row(vec![3.0, 4.0])).unwrap();
    let y = g.mul(c, p).unwrap();
    assert!(g.backward(y).is_err());
    let s = g.sum(y).unwrap();
    let grads = g.backward(s).unwrap();
    assert_eq!(grads.wrt(p).data(), &[1.0, 2.0]);
    assert!(grads.get(c).is_none());
}

#[test]
fn empty_segment_is_an_error() {
    let mut g = Graph::new();
    let x = g.constant(Tensor::column(vec![0.0])).unwrap();
    let seg: Arc<[usize]> = Arc::from(vec![0]);
    assert!(g.segment_softmax(x, &seg, 2).is_err());
}
