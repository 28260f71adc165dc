use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::biquad::Biquad;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::signal::AudioClip;

/// Equivalent rectangular bandwidth (Glasberg & Moore) in Hz.
pub fn erb(f_c: f64) -> f64 {
    24.7 * (4.37 * f_c / 1000.0 + 1.0)
}

/// ERB-number (Cams) of a frequency.
pub fn erb_number(f: f64) -> f64 {
    21.4 * (4.37 * f / 1000.0 + 1.0).log10()
}

pub fn erb_number_to_hz(e: f64) -> f64 {
    (10f64.powf(e / 21.4) - 1.0) * 1000.0 / 4.37
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FilterbankConfig {
    pub n_channels: usize,
    pub f_min: f64,
    pub f_max: f64,
    pub order: u32,
    /// Channel bandwidth as a multiple of ERB(f_c).
    pub bandwidth_scale: f64,
    pub sample_rate: u32,
}

impl FilterbankConfig {
    pub fn new(sample_rate: u32) -> Self {
        Self {
            n_channels: 128,
            f_min: 50.0,
            f_max: 8000.0,
            order: 4,
            bandwidth_scale: 1.019,
            sample_rate,
        }
    }

    /// `f_max` capped just below Nyquist.
    pub fn effective_f_max(&self) -> f64 {
        self.f_max.min(0.5 * f64::from(self.sample_rate) * 0.999)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParam(m));
        if self.sample_rate == 0 {
            return bad("sample rate must be positive".into());
        }
        if self.n_channels == 0 {
            return bad("filterbank needs at least one channel".into());
        }
        if self.order == 0 {
            return bad("gammatone order must be >= 1".into());
        }
        if !(self.bandwidth_scale > 0.0 && self.bandwidth_scale.is_finite()) {
            return bad(format!("bandwidth scale must be positive, got {}", self.bandwidth_scale));
        }
        if !(self.f_min > 0.0 && self.f_min < self.effective_f_max()) {
            return bad(format!(
                "need 0 < f_min < f_max (got {} and effective {})",
                self.f_min,
                self.effective_f_max()
            ));
        }
        Ok(())
    }

    /// Center frequencies equally spaced in ERB-number between `f_min` and
    /// the effective `f_max`. A single channel sits at the ERB midpoint.
    pub fn center_freqs(&self) -> Vec<f64> {
        let lo = erb_number(self.f_min);
        let hi = erb_number(self.effective_f_max());
        if self.n_channels == 1 {
            return vec![erb_number_to_hz(0.5 * (lo + hi))];
        }
        let step = (hi - lo) / (self.n_channels - 1) as f64;
        (0..self.n_channels)
            .map(|i| erb_number_to_hz(lo + step * i as f64))
            .collect()
    }
}

/// One gammatone channel, the exact impulse-invariant transform of
/// `t^(n-1) e^(-2 pi w t) cos(2 pi f t)` for `t >= 1` sample:
/// `n` cascaded all-pole resonators sharing one denominator, followed by a
/// feed-forward polynomial of degree `2n`.
///
/// Gain is normalized to 0 dB at the center frequency. Away from Nyquist that
/// is also the response maximum; for channels within about two bandwidths of
/// Nyquist the aliased image of the sampled response pulls the maximum off
/// `f_c` by up to one dB.
#[derive(Clone, Debug, PartialEq)]
pub struct GammatoneChannel {
    pub center_freq: f64,
    pub bandwidth: f64,
    resonator: Biquad,
    order: u32,
    numerator: Vec<f64>,
    gain: f64,
    /// Envelope group delay removed by [`GammatoneFilterbank::filter_signal`].
    pub delay_samples: usize,
}

fn binomial(n: u32, k: u32) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * f64::from(n - i) / f64::from(i + 1))
}

fn poly_mul(a: &[Complex64], b: &[Complex64]) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        for (j, &y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

impl GammatoneChannel {
    fn design(center_freq: f64, bandwidth: f64, order: u32, sample_rate: u32) -> Self {
        let fs = f64::from(sample_rate);
        let r = (-2.0 * PI * bandwidth / fs).exp();
        let theta = 2.0 * PI * center_freq / fs;
        let pole = Complex64::from_polar(r, theta);
        let n = order;

        // sum_{k>=1} k^(n-1) x^k = q(x) / (1-x)^n with deg q <= n
        let s = |k: u32| if k == 0 { 0.0 } else { f64::from(k).powi(n as i32 - 1) };
        let q: Vec<f64> = (0..=n)
            .map(|j| {
                (0..=j)
                    .map(|i| binomial(n, i) * if i % 2 == 0 { 1.0 } else { -1.0 } * s(j - i))
                    .sum()
            })
            .collect();
        // With x = p z^-1, multiply through by (1 - conj(p) z^-1)^n so the
        // denominator becomes the real resonator (1 - 2r cos(theta) z^-1 + r^2 z^-2)^n.
        let a: Vec<Complex64> = q
            .iter()
            .enumerate()
            .map(|(j, &qj)| qj * pole.powu(j as u32))
            .collect();
        let b: Vec<Complex64> = (0..=n)
            .map(|k| binomial(n, k) * (-pole.conj()).powu(k))
            .collect();
        let numerator: Vec<f64> = poly_mul(&a, &b).iter().map(|c| c.re).collect();

        let resonator = Biquad::new([1.0, 0.0, 0.0], [-2.0 * r * theta.cos(), r * r]);
        let delay_samples = ((f64::from(n) - 1.0) / (2.0 * PI * bandwidth) * fs).round() as usize;
        let mut ch = Self {
            center_freq,
            bandwidth,
            resonator,
            order: n,
            numerator,
            gain: 1.0,
            delay_samples,
        };
        ch.gain = 1.0 / ch.response(theta).norm();
        ch
    }

    /// Complex response at angular frequency `omega` (rad/sample), including gain.
    pub fn response(&self, omega: f64) -> Complex64 {
        let z1 = Complex64::from_polar(1.0, -omega);
        let num = self
            .numerator
            .iter()
            .rev()
            .fold(Complex64::new(0.0, 0.0), |acc, &c| acc * z1 + c);
        self.gain * num * self.resonator.response(omega).powu(self.order)
    }

    /// Location (rad/sample) and value of the magnitude-response maximum.
    pub fn peak_response(&self) -> (f64, f64) {
        let mag = |w: f64| self.response(w).norm();
        let n_grid = 4096;
        let grid = |i: usize| PI * (i as f64 + 0.5) / n_grid as f64;
        let best = (0..n_grid)
            .max_by(|&a, &b| mag(grid(a)).total_cmp(&mag(grid(b))))
            .unwrap_or(0);
        let (mut lo, mut hi) = (
            grid(best.saturating_sub(1)).max(1e-9),
            grid((best + 1).min(n_grid - 1)),
        );
        if best == 0 {
            lo = 1e-9;
        }
        // golden-section refinement
        let g = 0.5 * (5f64.sqrt() - 1.0);
        let mut c = hi - g * (hi - lo);
        let mut d = lo + g * (hi - lo);
        for _ in 0..100 {
            if mag(c) > mag(d) {
                hi = d;
            } else {
                lo = c;
            }
            c = hi - g * (hi - lo);
            d = lo + g * (hi - lo);
        }
        let w = 0.5 * (lo + hi);
        (w, mag(w))
    }

    /// Filters `x` without delay compensation.
    pub fn process(&self, x: &[f64]) -> Vec<f64> {
        let mut v = x.to_vec();
        for _ in 0..self.order {
            self.resonator.process(&mut v);
        }
        (0..v.len())
            .map(|t| {
                let acc: f64 = self
                    .numerator
                    .iter()
                    .enumerate()
                    .take(t + 1)
                    .map(|(j, &c)| c * v[t - j])
                    .sum();
                self.gain * acc
            })
            .collect()
    }

    pub fn impulse_response(&self, len: usize) -> Vec<f64> {
        let mut x = vec![0.0; len];
        if let Some(first) = x.first_mut() {
            *first = 1.0;
        }
        self.process(&x)
    }
}

/// ERB-spaced bank of gammatone channels. Immutable once built; every call
/// that filters allocates its own state, so one bank can serve many threads.
#[derive(Clone, Debug, PartialEq)]
pub struct GammatoneFilterbank {
    pub config: FilterbankConfig,
    pub channels: Vec<GammatoneChannel>,
}

pub fn make_filterbank(config: &FilterbankConfig) -> Result<GammatoneFilterbank> {
    GammatoneFilterbank::new(config)
}

impl GammatoneFilterbank {
    pub fn new(config: &FilterbankConfig) -> Result<Self> {
        config.validate()?;
        let channels = config
            .center_freqs()
            .into_iter()
            .map(|fc| {
                let w = config.bandwidth_scale * erb(fc);
                GammatoneChannel::design(fc, w, config.order, config.sample_rate)
            })
            .collect();
        Ok(Self {
            config: *config,
            channels,
        })
    }

    pub fn n_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn center_freqs(&self) -> Vec<f64> {
        self.channels.iter().map(|c| c.center_freq).collect()
    }

    /// Gain in dB of every channel at each query frequency (Hz).
    pub fn magnitude_response(&self, freqs: &[f64]) -> Result<Matrix> {
        let fs = f64::from(self.config.sample_rate);
        if let Some(f) = freqs.iter().find(|&&f| !(f > 0.0 && f < fs / 2.0)) {
            return Err(Error::InvalidParam(format!(
                "query frequency {f} Hz outside (0, Nyquist)"
            )));
        }
        let mut out = Matrix::zeros(self.channels.len(), freqs.len());
        for (m, ch) in self.channels.iter().enumerate() {
            for (j, &f) in freqs.iter().enumerate() {
                out.set(m, j, 20.0 * ch.response(2.0 * PI * f / fs).norm().log10());
            }
        }
        Ok(out)
    }

    /// Per-channel outputs `[n_channels x n_samples]`, each row advanced by
    /// its envelope delay and zero-padded at the tail.
    pub fn filter_signal(&self, clip: &AudioClip) -> Result<Matrix> {
        if clip.sample_rate != self.config.sample_rate {
            return Err(Error::RateMismatch(clip.sample_rate, self.config.sample_rate));
        }
        let n = clip.len();
        let rows: Vec<Vec<f64>> = self
            .channels
            .par_iter()
            .map(|ch| {
                let y = ch.process(&clip.samples);
                let d = ch.delay_samples.min(n);
                let mut row = y[d..].to_vec();
                row.resize(n, 0.0);
                row
            })
            .collect();
        if rows.is_empty() {
            return Ok(Matrix::zeros(0, n));
        }
        Ok(Matrix::from_rows(rows))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn erb_values() {
        assert!((erb(1000.0) - 132.639).abs() < 1e-9);
        assert!((erb(1e-12) - 24.7).abs() < 1e-9);
        assert!(erb(2000.0) > erb(1000.0));
        for f in [50.0, 440.0, 3999.0] {
            assert!((erb_number_to_hz(erb_number(f)) - f).abs() < 1e-9);
        }
    }

    #[test]
    fn config_validation() {
        let ok = FilterbankConfig::new(8000);
        assert!(ok.validate().is_ok());
        assert!((ok.effective_f_max() - 3996.0).abs() < 1e-9);
        for bad in [
            FilterbankConfig { n_channels: 0, ..ok },
            FilterbankConfig { order: 0, ..ok },
            FilterbankConfig { f_min: 0.0, ..ok },
            FilterbankConfig { f_min: 5000.0, ..ok },
            FilterbankConfig { bandwidth_scale: 0.0, ..ok },
        ] {
            assert!(make_filterbank(&bad).is_err());
        }
    }

    #[test]
    fn single_channel_sits_at_erb_midpoint() {
        let cfg = FilterbankConfig {
            n_channels: 1,
            ..FilterbankConfig::new(16000)
        };
        let fb = make_filterbank(&cfg).unwrap();
        let mid = erb_number_to_hz(0.5 * (erb_number(50.0) + erb_number(7992.0)));
        assert!((fb.channels[0].center_freq - mid).abs() < 1e-9);
    }

    #[test]
    fn order_four_numerator_has_known_shape() {
        // for n = 4 the series numerator is x + 4x^2 + x^3
        let ch = GammatoneChannel::design(1000.0, 132.0, 4, 8000);
        assert_eq!(ch.numerator.len(), 9);
        assert_eq!(ch.numerator[0], 0.0);
    }

    #[test]
    fn first_order_channel_is_a_damped_cosine() {
        let ch = GammatoneChannel::design(500.0, 100.0, 1, 8000);
        let h = ch.impulse_response(50);
        let r = (-2.0 * PI * 100.0 / 8000.0).exp();
        let theta = 2.0 * PI * 500.0 / 8000.0;
        assert_eq!(h[0], 0.0);
        for k in 1..50 {
            let expect = ch.gain * r.powi(k as i32) * (theta * k as f64).cos();
            assert!((h[k] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn delay_compensation_rounds_envelope_delay() {
        let fb = make_filterbank(&FilterbankConfig::new(8000)).unwrap();
        let ch = &fb.channels[0];
        let expect = (3.0 / (2.0 * PI * ch.bandwidth) * 8000.0).round() as usize;
        assert_eq!(ch.delay_samples, expect);
    }

    #[test]
    fn zeros_in_zeros_out_and_rate_check() {
        let fb = make_filterbank(&FilterbankConfig {
            n_channels: 8,
            ..FilterbankConfig::new(8000)
        })
        .unwrap();
        let z = AudioClip::new(vec![0.0; 500], 8000).unwrap();
        let y = fb.filter_signal(&z).unwrap();
        assert_eq!((y.rows(), y.cols()), (8, 500));
        assert!(y.as_slice().iter().all(|&v| v == 0.0));
        let wrong = AudioClip::new(vec![0.0; 10], 16000).unwrap();
        assert!(fb.filter_signal(&wrong).is_err());
    }

    #[test]
    fn magnitude_response_rejects_out_of_band() {
        let fb = make_filterbank(&FilterbankConfig::new(8000)).unwrap();
        assert!(fb.magnitude_response(&[0.0]).is_err());
        assert!(fb.magnitude_response(&[4000.0]).is_err());
    }
}
