use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};

use super::tensor::Tensor;
use crate::error::{Error, Result};

fn check_shape(shape: &[usize]) -> Result<()> {
    if shape.contains(&0) {
        return Err(Error::shape("init", format!("invalid shape {shape:?}")));
    }
    Ok(())
}

/// I.i.d. `N(0, std²)` draws.
pub fn normal_init(shape: &[usize], std: f64, rng: &mut impl Rng) -> Result<Tensor> {
    check_shape(shape)?;
    let dist = Normal::new(0.0, std).map_err(|e| Error::invalid(e.to_string()))?;
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| dist.sample(rng)).collect())
}

/// He-normal initialization, standard deviation `sqrt(2 / fan_in)`.
pub fn kaiming_init(shape: &[usize], fan_in: usize, rng: &mut impl Rng) -> Result<Tensor> {
    if fan_in == 0 {
        return Err(Error::invalid("kaiming_init: fan_in must be positive"));
    }
    normal_init(shape, (2.0 / fan_in as f64).sqrt(), rng)
}

/// Glorot-uniform initialization on `[-b, b]`, `b = sqrt(6 / (fan_in + fan_out))`.
pub fn xavier_init(shape: &[usize], fan_in: usize, fan_out: usize, rng: &mut impl Rng) -> Result<Tensor> {
    check_shape(shape)?;
    if fan_in + fan_out == 0 {
        return Err(Error::invalid("xavier_init: fans must not both be zero"));
    }
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let dist = Uniform::new_inclusive(-bound, bound).map_err(|e| Error::invalid(e.to_string()))?;
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| dist.sample(rng)).collect())
}
