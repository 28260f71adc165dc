use rand::distributions::{Distribution, Uniform};
use rand::Rng;

use super::tensor::{Param, Real};
use crate::error::{Error, Result};

/// Bound of the Glorot uniform distribution.
pub fn glorot_limit(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

/// Uniform samples in `[-L, L]` with `L = sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_init<T: Real, R: Rng>(
    fan_in: usize,
    fan_out: usize,
    dims: &[usize],
    rng: &mut R,
) -> Result<Param<T>> {
    if fan_in == 0 || fan_out == 0 {
        return Err(Error::InvalidParam("Glorot fans must be >= 1".into()));
    }
    let l = glorot_limit(fan_in, fan_out);
    let dist = Uniform::new_inclusive(-l, l);
    let n = dims.iter().product();
    Ok(Param {
        dims: dims.to_vec(),
        data: (0..n).map(|_| T::from_f64(dist.sample(rng))).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;

    #[test]
    fn bound_and_variance() {
        assert_eq!(glorot_limit(3, 3), 1.0);
        let p: Param<f64> = glorot_init(3, 3, &[100_000], &mut seed::rng(1)).unwrap();
        assert!(p.data.iter().all(|v| v.abs() <= 1.0));
        let m = p.data.iter().sum::<f64>() / p.len() as f64;
        let var = p.data.iter().map(|v| (v - m).powi(2)).sum::<f64>() / p.len() as f64;
        assert!((var / (1.0 / 3.0) - 1.0).abs() < 0.05, "var {var}");
    }

    #[test]
    fn seeded() {
        let a: Param<f32> = glorot_init(9, 72, &[8, 1, 3, 3], &mut seed::rng(5)).unwrap();
        let b: Param<f32> = glorot_init(9, 72, &[8, 1, 3, 3], &mut seed::rng(5)).unwrap();
        assert_eq!(a, b);
        assert!(glorot_init::<f32, _>(0, 1, &[1], &mut seed::rng(5)).is_err());
    }
}
