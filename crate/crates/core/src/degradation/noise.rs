use crate::error::{Error, Result};
use crate::rng::{self, Stream};
use crate::tensor::Tensor;

/// `img + σ·n` with `n[i] = normal(derive(seed, "noise"), i)`, clipped to `[0, 1]`.
pub fn add_gaussian_noise(img: &Tensor, sigma: f64, seed: u64) -> Result<Tensor> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::param(
            "noise.sigma",
            format!("must be finite and >= 0, got {sigma}"),
        ));
    }
    if sigma == 0.0 {
        return Ok(img.clone());
    }
    let s = Stream::new(rng::derive(seed, "noise"));
    let data = img
        .data()
        .iter()
        .enumerate()
        .map(|(i, &v)| (v + sigma * s.normal(i as u64)).clamp(0.0, 1.0))
        .collect();
    Tensor::new(img.shape(), data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_sigma_is_identity_and_seed_is_deterministic() {
        let img = Tensor::full(&[3, 4, 4], 0.3);
        assert_eq!(add_gaussian_noise(&img, 0.0, 1).unwrap(), img);
        let a = add_gaussian_noise(&img, 0.05, 9).unwrap();
        let b = add_gaussian_noise(&img, 0.05, 9).unwrap();
        let c = add_gaussian_noise(&img, 0.05, 10).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn empirical_std_on_mid_gray() {
        let img = Tensor::full(&[1, 256, 256], 0.5);
        let out = add_gaussian_noise(&img, 0.1, 2024).unwrap();
        let mean = out.mean();
        let var = out
            .data()
            .iter()
            .map(|v| (v - mean) * (v - mean))
            .sum::<f64>()
            / (out.numel() - 1) as f64;
        let std = var.sqrt();
        assert!((0.098..=0.102).contains(&std), "std {std}");
    }
}
