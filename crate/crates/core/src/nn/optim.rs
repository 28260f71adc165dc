use super::tensor::{Param, Real};
use crate::error::{Error, Result};

/// Stochastic gradient descent with momentum and L2 weight decay.
#[derive(Clone, Debug)]
pub struct Sgdm<T> {
    pub learning_rate: f64,
    pub momentum: f64,
    pub l2_lambda: f64,
    velocity: Vec<Param<T>>,
}

impl<T: Real> Sgdm<T> {
    pub fn new(learning_rate: f64, momentum: f64, l2_lambda: f64) -> Result<Self> {
        if !(learning_rate > 0.0 && learning_rate.is_finite()) {
            return Err(Error::InvalidParam(format!(
                "learning rate must be > 0, got {learning_rate}"
            )));
        }
        if !(0.0..1.0).contains(&momentum) {
            return Err(Error::InvalidParam(format!(
                "momentum must be in [0, 1), got {momentum}"
            )));
        }
        if !(l2_lambda >= 0.0 && l2_lambda.is_finite()) {
            return Err(Error::InvalidParam(format!(
                "L2 lambda must be >= 0, got {l2_lambda}"
            )));
        }
        Ok(Self {
            learning_rate,
            momentum,
            l2_lambda,
            velocity: Vec::new(),
        })
    }

    pub fn velocity(&self) -> &[Param<T>] {
        &self.velocity
    }

    /// `v = momentum*v - lr*(g + l2*p); p += v`. The decay term is applied
    /// only where `decay[i]` is set.
    pub fn step(&mut self, params: &mut [&mut Param<T>], grads: &[Param<T>], decay: &[bool]) -> Result<()> {
        if params.len() != grads.len() || params.len() != decay.len() {
            return Err(Error::Shape(format!(
                "{} params, {} grads, {} decay flags",
                params.len(),
                grads.len(),
                decay.len()
            )));
        }
        for (p, g) in params.iter().zip(grads) {
            if !p.same_shape(g) || p.len() != g.len() {
                return Err(Error::Shape(format!(
                    "parameter {:?} vs gradient {:?}",
                    p.dims, g.dims
                )));
            }
        }
        if self.velocity.is_empty() {
            self.velocity = params.iter().map(|p| Param::zeros(&p.dims)).collect();
        } else if self.velocity.len() != params.len()
            || self.velocity.iter().zip(params.iter()).any(|(v, p)| !v.same_shape(p))
        {
            return Err(Error::Shape("optimizer state does not match parameters".into()));
        }
        let mu = T::from_f64(self.momentum);
        let lr = T::from_f64(self.learning_rate);
        for ((p, g), (v, &d)) in params.iter_mut().zip(grads).zip(self.velocity.iter_mut().zip(decay)) {
            let l2 = T::from_f64(if d { self.l2_lambda } else { 0.0 });
            for ((pv, &gv), vv) in p.data.iter_mut().zip(&g.data).zip(v.data.iter_mut()) {
                *vv = mu * *vv - lr * (gv + l2 * *pv);
                *pv += *vv;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(v: &[f64]) -> Param<f64> {
        Param {
            dims: vec![v.len()],
            data: v.to_vec(),
        }
    }

    #[test]
    fn plain_sgd_reduction() {
        let mut opt = Sgdm::new(0.1, 0.0, 0.0).unwrap();
        let mut a = p(&[1.0, -2.0]);
        opt.step(&mut [&mut a], &[p(&[0.5, 1.0])], &[true]).unwrap();
        assert!((a.data[0] - 0.95).abs() < 1e-15);
        assert!((a.data[1] + 2.1).abs() < 1e-15);
    }

    #[test]
    fn zero_gradient_is_noop() {
        let mut opt = Sgdm::new(0.1, 0.9, 0.0).unwrap();
        let mut a = p(&[1.5]);
        opt.step(&mut [&mut a], &[p(&[0.0])], &[true]).unwrap();
        assert_eq!(a.data, vec![1.5]);
    }

    #[test]
    fn two_steps_with_momentum() {
        // v1 = -lr g, p1 = p0 - lr g; v2 = -mu lr g - lr g, p2 = p0 - lr g (2 + mu)
        let (lr, mu, g, p0) = (0.01, 0.9, 2.0, 1.0);
        let mut opt = Sgdm::new(lr, mu, 0.0).unwrap();
        let mut a = p(&[p0]);
        for _ in 0..2 {
            opt.step(&mut [&mut a], &[p(&[g])], &[true]).unwrap();
        }
        assert!((a.data[0] - (p0 - lr * g * (2.0 + mu))).abs() < 1e-15);
    }

    #[test]
    fn decay_mask() {
        let mut opt = Sgdm::new(0.1, 0.0, 0.5).unwrap();
        let (mut a, mut b) = (p(&[2.0]), p(&[2.0]));
        opt.step(&mut [&mut a, &mut b], &[p(&[0.0]), p(&[0.0])], &[true, false])
            .unwrap();
        assert!((a.data[0] - 1.9).abs() < 1e-15);
        assert_eq!(b.data[0], 2.0);
    }

    #[test]
    fn validation() {
        assert!(Sgdm::<f64>::new(0.0, 0.9, 0.0).is_err());
        assert!(Sgdm::<f64>::new(0.1, 1.0, 0.0).is_err());
        assert!(Sgdm::<f64>::new(0.1, 0.9, -1.0).is_err());
        let mut opt = Sgdm::new(0.1, 0.9, 0.0).unwrap();
        assert!(opt.step(&mut [&mut p(&[1.0])], &[p(&[1.0, 2.0])], &[true]).is_err());
    }
}
