use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

fn random_tensor(shape: [usize; 4], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

fn random_vec(n: usize, scale: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-scale..scale)).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Central differences of `f` w.r.t. every entry of `x`.
fn numeric(x: &mut [f64], f: &mut dyn FnMut(&[f64]) -> f64) -> Vec<f64> {
    let h = 1e-6;
    (0..x.len())
        .map(|i| {
            let v = x[i];
            x[i] = v + h;
            let up = f(x);
            x[i] = v - h;
            let down = f(x);
            x[i] = v;
            (up - down) / (2.0 * h)
        })
        .collect()
}

fn assert_close(analytic: &[f64], numeric: &[f64], what: &str) {
    assert_eq!(analytic.len(), numeric.len());
    for (i, (a, n)) in analytic.iter().zip(numeric).enumerate() {
        let rel = (a - n).abs() / (a.abs() + n.abs()).max(1e-6);
        assert!(rel < 1e-3, "{what}[{i}]: analytic {a} numeric {n}");
    }
}

#[test]
fn conv_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (cin, cout) = (2, 3);
    let mut x = random_tensor([2, cin, 6, 4], &mut rng);
    let mut w = random_vec(cout * cin * 16, 0.5, &mut rng);
    let mut b = random_vec(cout, 0.5, &mut rng);
    let r = random_vec(2 * cout * 3 * 2, 1.0, &mut rng);
    let (y, cols) = conv_forward(&x, &w, &b, cout);
    let mut dy = y.clone();
    dy.data.copy_from_slice(&r);
    let g = conv_backward(&dy, &cols, &w, x.shape, true);
    let shape = x.shape;
    let (w0, b0) = (w.clone(), b.clone());
    let nx = numeric(&mut x.data, &mut |d| dot(&conv_forward(&Tensor::from_vec(shape, d.to_vec()).unwrap(), &w0, &b0, cout).0.data, &r));
    let nw = numeric(&mut w, &mut |d| dot(&conv_forward(&x, d, &b0, cout).0.data, &r));
    let nb = numeric(&mut b, &mut |d| dot(&conv_forward(&x, &w0, d, cout).0.data, &r));
    assert_close(&g.dx.unwrap().data, &nx, "dx");
    assert_close(&g.dw, &nw, "dw");
    assert_close(&g.db, &nb, "db");
}

#[test]
fn deconv_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (cin, cout) = (3, 2);
    let mut x = random_tensor([2, cin, 2, 3], &mut rng);
    let mut w = random_vec(cin * cout * 16, 0.5, &mut rng);
    let mut b = random_vec(cout, 0.5, &mut rng);
    let r = random_vec(2 * cout * 4 * 6, 1.0, &mut rng);
    let y = deconv_forward(&x, &w, &b, cout);
    assert_eq!(y.shape, [2, cout, 4, 6]);
    let mut dy = y.clone();
    dy.data.copy_from_slice(&r);
    let g = deconv_backward(&dy, &x, &w, true);
    let shape = x.shape;
    let (w0, b0) = (w.clone(), b.clone());
    let nx = numeric(&mut x.data, &mut |d| dot(&deconv_forward(&Tensor::from_vec(shape, d.to_vec()).unwrap(), &w0, &b0, cout).data, &r));
    let nw = numeric(&mut w, &mut |d| dot(&deconv_forward(&x, d, &b0, cout).data, &r));
    let nb = numeric(&mut b, &mut |d| dot(&deconv_forward(&x, &w0, d, cout).data, &r));
    assert_close(&g.dx.unwrap().data, &nx, "dx");
    assert_close(&g.dw, &nw, "dw");
    assert_close(&g.db, &nb, "db");
}

#[test]
fn deconv_is_adjoint_of_conv() {
    // <conv(x), y> = <x, deconv(y)> with shared weights and zero bias
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (c1, c2) = (2, 3);
    let x = random_tensor([1, c1, 4, 4], &mut rng);
    let y = random_tensor([1, c2, 2, 2], &mut rng);
    let w = random_vec(c2 * c1 * 16, 1.0, &mut rng);
    let cx = conv_forward(&x, &w, &[0.0; 3], c2).0;
    let dy = deconv_forward(&y, &w, &[0.0; 2], c1);
    assert!((dot(&cx.data, &y.data) - dot(&x.data, &dy.data)).abs() < 1e-10);
}

#[test]
fn batchnorm_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let c = 3;
    let mut x = random_tensor([3, c, 2, 2], &mut rng);
    let mut gamma = random_vec(c, 1.0, &mut rng);
    let mut beta = random_vec(c, 1.0, &mut rng);
    let r = random_vec(x.data.len(), 1.0, &mut rng);
    let (y, cache) = batchnorm_forward_train(&x, &gamma, &beta);
    let mut dy = y.clone();
    dy.data.copy_from_slice(&r);
    let (dx, dg, db) = batchnorm_backward(&dy, &cache, &gamma);
    let shape = x.shape;
    let (g0, b0) = (gamma.clone(), beta.clone());
    let nx = numeric(&mut x.data, &mut |d| {
        dot(&batchnorm_forward_train(&Tensor::from_vec(shape, d.to_vec()).unwrap(), &g0, &b0).0.data, &r)
    });
    let ng = numeric(&mut gamma, &mut |d| dot(&batchnorm_forward_train(&x, d, &b0).0.data, &r));
    let nb = numeric(&mut beta, &mut |d| dot(&batchnorm_forward_train(&x, &g0, d).0.data, &r));
    assert_close(&dx.data, &nx, "dx");
    assert_close(&dg, &ng, "dgamma");
    assert_close(&db, &nb, "dbeta");
}

#[test]
fn batchnorm_eval_uses_running_statistics() {
    let x = Tensor::from_vec([1, 1, 1, 2], vec![1.0f64, 3.0]).unwrap();
    let y = batchnorm_forward_eval(&x, &[2.0], &[0.5], &[1.0], &[4.0 - BN_EPS]);
    assert!((y.data[0] - 0.5).abs() < 1e-12);
    assert!((y.data[1] - 2.5).abs() < 1e-12);
}

#[test]
fn rectifier_and_dropout_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut x = random_tensor([2, 2, 3, 3], &mut rng);
    let r = random_vec(x.data.len(), 1.0, &mut rng);
    for slope in [0.0, 0.2] {
        let y = leaky_forward(&x, slope);
        let mut dy = y.clone();
        dy.data.copy_from_slice(&r);
        let dx = leaky_backward(&dy, &y, slope);
        let shape = x.shape;
        let nx = numeric(&mut x.data, &mut |d| dot(&leaky_forward(&Tensor::from_vec(shape, d.to_vec()).unwrap(), slope).data, &r));
        assert_close(&dx.data, &nx, "leaky dx");
    }
    let (y, mask) = dropout_forward(&x, 0.5, &mut ChaCha8Rng::seed_from_u64(9));
    assert!(mask.iter().all(|m| *m == 0.0 || *m == 2.0));
    let mut dy = y.clone();
    dy.data.copy_from_slice(&r);
    let dx = dropout_backward(&dy, &mask);
    let shape = x.shape;
    let nx = numeric(&mut x.data, &mut |d| {
        dot(&dropout_forward(&Tensor::from_vec(shape, d.to_vec()).unwrap(), 0.5, &mut ChaCha8Rng::seed_from_u64(9)).0.data, &r)
    });
    assert_close(&dx.data, &nx, "dropout dx");
}

#[test]
fn loss_gradients_and_identities() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut logits = random_tensor([2, 4, 3, 3], &mut rng);
    let target =
        Tensor::from_vec([2, 2, 3, 3], (0..36).map(|_| if rng.random::<bool>() { 1.0 } else { 0.0 }).collect()).unwrap();
    let (_, g) = paired_cross_entropy(&logits, &target);
    let shape = logits.shape;
    let n = numeric(&mut logits.data, &mut |d| paired_cross_entropy(&Tensor::from_vec(shape, d.to_vec()).unwrap(), &target).0);
    assert_close(&g.data, &n, "dlogits");

    let flat = Tensor::<f64>::zeros([1, 2, 2, 2]);
    let (loss, _) = paired_cross_entropy(&flat, &Tensor::zeros([1, 1, 2, 2]));
    assert!((loss - std::f64::consts::LN_2).abs() < 1e-12);

    let mut sat = Tensor::<f64>::zeros([1, 2, 1, 1]);
    sat.data[1] = 50.0;
    let (loss, _) = paired_cross_entropy(&sat, &Tensor::from_vec([1, 1, 1, 1], vec![1.0]).unwrap());
    assert!(loss < 1e-20);

    let p = paired_softmax(&logits);
    assert!(p.data.iter().all(|v| *v > 0.0 && *v < 1.0));
}

fn tiny_spec(updater: bool) -> NetworkSpec {
    NetworkSpec {
        input_resolution: 16,
        encoder: vec![2, 3, 4, 4],
        decoder: vec![DecoderLayerSpec { channels: 3, dropout: true }],
        slices: 4,
        skips: vec![2],
        updater,
        leaky_slope: 0.2,
        dropout_rate: 0.5,
    }
}

fn check_network(updater: bool, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net = Network::<f64>::new(tiny_spec(updater), seed).unwrap();
    // larger weights so every layer contributes visibly to the loss
    for p in net.params_mut() {
        if p.name.ends_with("weight") {
            p.value.iter_mut().for_each(|v| *v *= 20.0);
        }
    }
    let x = random_tensor([2, 1, 16, 16], &mut rng);
    let inj = updater.then(|| {
        let n = 2 * 4 * 4 * 4;
        Tensor::from_vec([2, 4, 4, 4], (0..n).map(|_| rng.random::<f64>()).collect()).unwrap()
    });
    let target =
        Tensor::from_vec([2, 4, 4, 4], (0..128).map(|_| if rng.random::<bool>() { 1.0 } else { 0.0 }).collect()).unwrap();
    let drop_seed = seed ^ 77;
    let loss_of = |net: &Network<f64>| {
        let (logits, _) = net.forward_train(&x, inj.as_ref(), &mut ChaCha8Rng::seed_from_u64(drop_seed)).unwrap();
        paired_cross_entropy(&logits, &target).0
    };
    let (logits, tape) = net.forward_train(&x, inj.as_ref(), &mut ChaCha8Rng::seed_from_u64(drop_seed)).unwrap();
    let (_, dlogits) = paired_cross_entropy(&logits, &target);
    let grads = net.backward(&tape, &dlogits);
    for pi in 0..net.params().len() {
        let mut values = net.params()[pi].value.clone();
        let name = net.params()[pi].name.clone();
        let mut probe = net.clone();
        let n = numeric(&mut values, &mut |d| {
            probe.params_mut()[pi].value.copy_from_slice(d);
            loss_of(&probe)
        });
        assert_close(&grads[pi], &n, &name);
    }
}

#[test]
fn whole_network_gradients() {
    check_network(false, 11);
    check_network(true, 12);
}

#[test]
fn spec_shapes_and_validation() {
    for spec in [NetworkSpec::full(), NetworkSpec::toy(), NetworkSpec::full().with_updater(true), NetworkSpec::toy().with_updater(true)] {
        spec.validate().unwrap();
    }
    assert_eq!(NetworkSpec::full().output_channels(), 128);
    assert_eq!(NetworkSpec::full().injection_resolution(), 64);
    assert_eq!(NetworkSpec::toy().output_channels(), 32);
    let odd = NetworkSpec { input_resolution: 100, ..NetworkSpec::full() };
    assert!(matches!(odd.validate(), Err(crate::Error::InvalidConfig(_))));
    assert!(Network::<f32>::new(odd, 0).is_err());
}

#[test]
fn toy_forward_shapes_and_probabilities() {
    let net = Network::<f32>::new(NetworkSpec::toy(), 3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let x = Tensor::from_vec([2, 1, 64, 64], (0..2 * 4096).map(|_| if rng.random::<f64>() < 0.05 { 1.0 } else { 0.0 }).collect())
        .unwrap();
    let logits = net.forward(&x, None).unwrap();
    assert_eq!(logits.shape, [2, 32, 16, 16]);
    let p = paired_softmax(&logits);
    let mean = p.data.iter().map(|v| *v as f64).sum::<f64>() / p.data.len() as f64;
    assert!(mean > 0.3 && mean < 0.7, "mean {mean}");
    assert!(p.data.iter().all(|v| *v > 0.0 && *v < 1.0));
    assert_eq!(net.forward(&x, None).unwrap(), logits);
    assert!(net.forward(&Tensor::zeros([1, 1, 32, 32]), None).is_err());

    let up = Network::<f32>::new(NetworkSpec::toy().with_updater(true), 3).unwrap();
    let inj = Tensor::zeros([2, 16, 16, 16]);
    assert_eq!(up.forward(&x, Some(&inj)).unwrap().shape, [2, 32, 16, 16]);
    assert!(up.forward(&x, Some(&Tensor::zeros([2, 16, 8, 8]))).is_err());
    assert!(up.forward(&x, None).is_err());
}
