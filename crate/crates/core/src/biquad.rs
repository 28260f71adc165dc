use num_complex::Complex64;

/// Second-order IIR section, `a0 = 1`, transposed direct form II.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 2],
}

impl Biquad {
    pub fn new(b: [f64; 3], a: [f64; 2]) -> Self {
        Self { b, a }
    }

    /// First-order section `(1 - zero z^-1) / (1 - pole z^-1)`.
    pub fn first_order(zero: f64, pole: f64) -> Self {
        Self::new([1.0, -zero, 0.0], [-pole, 0.0])
    }

    pub fn process(&self, x: &mut [f64]) {
        let [b0, b1, b2] = self.b;
        let [a1, a2] = self.a;
        let (mut z1, mut z2) = (0.0, 0.0);
        for v in x.iter_mut() {
            let input = *v;
            let y = b0 * input + z1;
            z1 = b1 * input - a1 * y + z2;
            z2 = b2 * input - a2 * y;
            *v = y;
        }
    }

    /// Transfer function at normalized angular frequency `omega` (rad/sample).
    pub fn response(&self, omega: f64) -> Complex64 {
        let z1 = Complex64::from_polar(1.0, -omega);
        let z2 = z1 * z1;
        let num = self.b[0] + self.b[1] * z1 + self.b[2] * z2;
        let den = 1.0 + self.a[0] * z1 + self.a[1] * z2;
        num / den
    }
}


pub fn cascade_process(sections: &[Biquad], x: &mut [f64]) {
    for s in sections {
        s.process(x);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn impulse_response_of_one_pole() {
        let s = Biquad::first_order(0.0, 0.5);
        let mut x = vec![1.0, 0.0, 0.0, 0.0];
        s.process(&mut x);
        assert_eq!(x, vec![1.0, 0.5, 0.25, 0.125]);
        assert!((s.response(0.0).norm() - 2.0).abs() < 1e-12);
    }
}
