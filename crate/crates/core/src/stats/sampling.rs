//! Seedable draws from the distributions the toolkit simulates with.

use rand::Rng;
use rand_distr::{Distribution, Gamma, Normal, Poisson};

pub fn normal<R: Rng>(rng: &mut R, mean: f64, sd: f64) -> f64 {
    if sd <= 0.0 {
        return mean;
    }
    Normal::new(mean, sd).expect("valid normal").sample(rng)
}

pub fn poisson<R: Rng>(rng: &mut R, lambda: f64) -> u64 {
    if lambda <= 0.0 {
        return 0;
    }
    Poisson::new(lambda).expect("valid poisson").sample(rng) as u64
}

/// NB2 draw with mean `mu` and variance `mu + alpha * mu^2`, via the
/// gamma-Poisson mixture; alpha near zero degenerates to Poisson.
pub fn neg_binomial<R: Rng>(rng: &mut R, mu: f64, alpha: f64) -> u64 {
    if mu <= 0.0 {
        return 0;
    }
    if alpha < 1e-9 {
        return poisson(rng, mu);
    }
    let shape = 1.0 / alpha;
    let scale = alpha * mu;
    let lambda = Gamma::new(shape, scale).expect("valid gamma").sample(rng);
    poisson(rng, lambda)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn neg_binomial_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (mu, alpha) = (5.0, 0.4);
        let n = 60_000;
        let draws: Vec<f64> = (0..n).map(|_| neg_binomial(&mut rng, mu, alpha) as f64).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / (n - 1) as f64;
        assert!((mean - mu).abs() < 0.1, "mean {mean}");
        let expected_var = mu + alpha * mu * mu;
        assert!((var - expected_var).abs() / expected_var < 0.05, "var {var} vs {expected_var}");
    }
}
