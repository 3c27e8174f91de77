use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use slatelab_autodiff::gradcheck::{check_gradients, primitive_suite};
use slatelab_autodiff::{gaussian_kl, gaussian_kl_value, reparameterize, Activation, Graph, Mlp, ParamStore, Tensor};

#[test]
fn every_primitive_matches_finite_differences() {
    for seed in 0..10 {
        for (name, report) in primitive_suite(seed, 1e-4).unwrap() {
            assert!(
                report.max_rel_err < 1e-4,
                "seed {seed} {name}: rel err {} at {:?} (analytic {}, numeric {})",
                report.max_rel_err,
                report.worst,
                report.analytic,
                report.numeric
            );
        }
    }
}

#[test]
fn two_layer_mlp_matches_finite_differences() {
    for seed in 0..10 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let mlp = Mlp::new(&mut store, "mlp", &[5, 7, 3], Activation::Tanh, &mut rng);
        let input = Tensor::new(vec![4, 5], (0..20).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let report = check_gradients(&store, 1e-4, |s, g| {
            let x = g.constant(input.clone());
            let y = mlp.forward(g, s, x)?;
            let l = g.softmax_cross_entropy(y, &[0, 2, 1, 2])?;
            Ok(g.sum(l))
        })
        .unwrap();
        assert!(report.max_rel_err < 1e-4, "seed {seed}: {report:?}");
        assert_eq!(report.components, store.num_values());
    }
}

#[test]
fn forward_and_backward_are_deterministic() {
    let run = || {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut store = ParamStore::new();
        let mlp = Mlp::new(&mut store, "mlp", &[4, 8, 2], Activation::Relu, &mut rng);
        let mut g = Graph::new();
        let x = g.constant(Tensor::full(&[2, 4], 0.5));
        let y = mlp.forward(&mut g, &store, x).unwrap();
        let l = g.softmax_cross_entropy(y, &[1, 0]).unwrap();
        let l = g.sum(l);
        let grads = g.backward(l).unwrap();
        let flat: Vec<u64> = grads.iter().flat_map(|(_, t)| t.data().iter().map(|x| x.to_bits())).collect();
        (g.value(l).item().to_bits(), flat)
    };
    assert_eq!(run(), run());
}

#[test]
fn kl_matches_monte_carlo() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (mu, ls, mu0, ls0) = (0.4, -0.3, -0.2, 0.25);
    let analytic = gaussian_kl_value(&[mu], &[ls], &[mu0], &[ls0]);
    let (s, s0) = (f64::exp(ls), f64::exp(ls0));
    let log_pdf = |x: f64, m: f64, sd: f64| -0.5 * ((x - m) / sd).powi(2) - sd.ln();
    let samples = 1_000_000;
    let mut acc = 0.0;
    for _ in 0..samples {
        let eps: f64 = rand_distr::Distribution::sample(&rand_distr::StandardNormal, &mut rng);
        let x = mu + s * eps;
        acc += log_pdf(x, mu, s) - log_pdf(x, mu0, s0);
    }
    let mc = acc / samples as f64;
    assert!((mc - analytic).abs() < 1e-2, "mc {mc} analytic {analytic}");

    let mut g = Graph::new();
    let v = [mu, ls, mu0, ls0].map(|x| g.constant(Tensor::scalar(x)));
    let kl = gaussian_kl(&mut g, v[0], v[1], v[2], v[3]).unwrap();
    assert!((g.value(kl).item() - analytic).abs() < 1e-14);
}

#[test]
fn reparameterized_draws_match_moments() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mu, ls) = (1.3, -0.6);
    let n = 100_000;
    let noise: Vec<f64> = (0..n)
        .map(|_| rand_distr::Distribution::sample(&rand_distr::StandardNormal, &mut rng))
        .collect();
    let mut g = Graph::new();
    let m = g.constant(Tensor::full(&[n], mu));
    let l = g.constant(Tensor::full(&[n], ls));
    let z = reparameterize(&mut g, m, l, &Tensor::new(vec![n], noise).unwrap()).unwrap();
    let draws = g.value(z).data();
    let mean = draws.iter().sum::<f64>() / n as f64;
    let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let sigma2 = (2.0 * ls).exp();
    let se_mean = (sigma2 / n as f64).sqrt();
    let se_var = sigma2 * (2.0 / (n - 1) as f64).sqrt();
    assert!((mean - mu).abs() < 3.0 * se_mean, "mean {mean}");
    assert!((var - sigma2).abs() < 3.0 * se_var, "var {var}");
}

#[test]
fn reparameterize_gradient_reaches_mu_and_log_sigma_only() {
    let mut store = ParamStore::new();
    let mu = store.add("mu", Tensor::new(vec![2], vec![0.1, 0.2]).unwrap());
    let ls = store.add("ls", Tensor::new(vec![2], vec![0.0, 0.5]).unwrap());
    let noise = Tensor::new(vec![2], vec![1.5, -0.5]).unwrap();
    let mut g = Graph::new();
    let (m, l) = (g.param(&store, mu).unwrap(), g.param(&store, ls).unwrap());
    let z = reparameterize(&mut g, m, l, &noise).unwrap();
    let s = g.sum(z);
    let grads = g.backward(s).unwrap();
    assert_eq!(grads.get(mu).unwrap().data(), &[1.0, 1.0]);
    let dls = grads.get(ls).unwrap().data();
    assert!((dls[0] - 1.5).abs() < 1e-15);
    assert!((dls[1] - (-0.5 * 0.5f64.exp())).abs() < 1e-15);
    assert_eq!(grads.iter().count(), 2);
}

proptest! {
    #[test]
    fn kl_is_non_negative_and_zero_only_when_equal(
        mu in -3.0f64..3.0, ls in -3.0f64..3.0, mu0 in -3.0f64..3.0, ls0 in -3.0f64..3.0,
    ) {
        let kl = gaussian_kl_value(&[mu], &[ls], &[mu0], &[ls0]);
        prop_assert!(kl >= -1e-12);
        prop_assert!(gaussian_kl_value(&[mu], &[ls], &[mu], &[ls]).abs() < 1e-12);
        if (mu - mu0).abs() > 1e-3 || (ls - ls0).abs() > 1e-3 {
            prop_assert!(kl > 0.0);
        }
    }
}
