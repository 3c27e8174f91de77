//! Diagonal-Gaussian helpers for variational models.

use crate::error::{shape_err, Result};
use crate::graph::{Graph, Var};
use crate::tensor::Tensor;

/// `KL[N(mu, sigma) || N(mu0, sigma0)]` summed over every element, with both
/// scales given as log standard deviations.
pub fn gaussian_kl(g: &mut Graph, mu: Var, log_sigma: Var, mu0: Var, log_sigma0: Var) -> Result<Var> {
    for v in [log_sigma, mu0, log_sigma0] {
        if g.shape(v) != g.shape(mu) {
            return Err(shape_err("gaussian_kl", format!("{:?}", g.shape(mu)), g.shape(v)));
        }
    }
    let diff = g.sub(mu, mu0)?;
    let diff2 = g.square(diff);
    let two_ls = g.scale(log_sigma, 2.0);
    let var = g.exp(two_ls);
    let num = g.add(var, diff2)?;
    let neg_two_ls0 = g.scale(log_sigma0, -2.0);
    let inv_var0 = g.exp(neg_two_ls0);
    let ratio = g.mul(num, inv_var0)?;
    let half = g.scale(ratio, 0.5);
    let log_ratio = g.sub(log_sigma0, log_sigma)?;
    let t = g.add(log_ratio, half)?;
    let t = g.add_scalar(t, -0.5);
    Ok(g.sum(t))
}

/// `mu + exp(log_sigma) * noise`; `noise` is a constant, so no gradient
/// reaches it.
pub fn reparameterize(g: &mut Graph, mu: Var, log_sigma: Var, noise: &Tensor) -> Result<Var> {
    if g.shape(mu) != g.shape(log_sigma) || g.shape(mu) != noise.shape() {
        return Err(shape_err("reparameterize", format!("{:?}", g.shape(mu)), noise.shape()));
    }
    let eps = g.constant(noise.clone());
    let sigma = g.exp(log_sigma);
    let scaled = g.mul(sigma, eps)?;
    g.add(mu, scaled)
}

/// Closed-form KL outside a graph, for scalar checks.
pub fn gaussian_kl_value(mu: &[f64], log_sigma: &[f64], mu0: &[f64], log_sigma0: &[f64]) -> f64 {
    mu.iter()
        .zip(log_sigma)
        .zip(mu0.iter().zip(log_sigma0))
        .map(|((&m, &ls), (&m0, &ls0))| {
            let (s2, s02) = ((2.0 * ls).exp(), (2.0 * ls0).exp());
            ls0 - ls + (s2 + (m - m0) * (m - m0)) / (2.0 * s02) - 0.5
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kl_of(mu: f64, ls: f64, mu0: f64, ls0: f64) -> f64 {
        let mut g = Graph::new();
        let v = [mu, ls, mu0, ls0].map(|x| g.constant(Tensor::new(vec![1], vec![x]).unwrap()));
        let kl = gaussian_kl(&mut g, v[0], v[1], v[2], v[3]).unwrap();
        g.value(kl).item()
    }

    #[test]
    fn identical_distributions_have_zero_kl() {
        assert_eq!(kl_of(0.0, 0.0, 0.0, 0.0), 0.0);
    }

    #[test]
    fn unit_shift_against_standard_normal() {
        assert!((kl_of(1.0, 0.0, 0.0, 0.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn zero_noise_returns_mean() {
        let mut g = Graph::new();
        let mu = g.constant(Tensor::new(vec![3], vec![1.0, -2.0, 0.5]).unwrap());
        let ls = g.constant(Tensor::new(vec![3], vec![0.3, 1.0, -1.0]).unwrap());
        let z = reparameterize(&mut g, mu, ls, &Tensor::zeros(&[3])).unwrap();
        assert_eq!(g.value(z).data(), &[1.0, -2.0, 0.5]);
    }

    #[test]
    fn vanishing_sigma_returns_mean() {
        let mut g = Graph::new();
        let mu = g.constant(Tensor::new(vec![2], vec![1.5, -0.25]).unwrap());
        let ls = g.constant(Tensor::full(&[2], f64::NEG_INFINITY));
        let z = reparameterize(&mut g, mu, ls, &Tensor::new(vec![2], vec![3.0, -7.0]).unwrap()).unwrap();
        assert_eq!(g.value(z).data(), &[1.5, -0.25]);
    }

    #[test]
    fn mismatched_shapes_rejected() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::zeros(&[2]));
        let b = g.constant(Tensor::zeros(&[3]));
        assert!(gaussian_kl(&mut g, a, b, a, a).is_err());
        assert!(reparameterize(&mut g, a, a, &Tensor::zeros(&[3])).is_err());
    }
}
