//! Synthetic room impulse responses with an exponentially decaying Gaussian tail.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::seed;
use crate::signal::AudioClip;

#[derive(Clone, Debug, PartialEq)]
pub struct RoomImpulseResponse {
    pub taps: Vec<f64>,
    pub sample_rate: u32,
    pub t60_ms: f64,
}

pub const DEFAULT_DURATION_FACTOR: f64 = 1.5;

/// Unit direct path followed by Gaussian taps whose energy falls 60 dB over
/// `t60_ms`. The response is `duration_factor * t60_ms` long.
pub fn synth_rir(
    t60_ms: f64,
    duration_factor: f64,
    sample_rate: u32,
    seed: u64,
) -> Result<RoomImpulseResponse> {
    if !(t60_ms > 0.0 && t60_ms.is_finite()) {
        return Err(Error::InvalidParam(format!("t60 must be positive, got {t60_ms}")));
    }
    if !(duration_factor > 0.0 && duration_factor.is_finite()) {
        return Err(Error::InvalidParam("duration factor must be positive".into()));
    }
    let t60_samples = t60_ms * f64::from(sample_rate) / 1000.0;
    let len = ((duration_factor * t60_samples).ceil() as usize).max(1);
    let decay = 3.0 * std::f64::consts::LN_10 / t60_samples;
    let mut rng = seed::rng(seed);
    let mut taps = Vec::with_capacity(len);
    taps.push(1.0);
    for k in 1..len {
        let eps: f64 = rng.sample(StandardNormal);
        taps.push(eps * (-(k as f64) * decay).exp());
    }
    Ok(RoomImpulseResponse {
        taps,
        sample_rate,
        t60_ms,
    })
}

/// Schroeder backward-integrated energy decay curve in dB, 0 dB at index 0.
pub fn schroeder_decay_db(taps: &[f64]) -> Vec<f64> {
    let mut edc = vec![0.0; taps.len()];
    let mut acc = 0.0;
    for (k, t) in taps.iter().enumerate().rev() {
        acc += t * t;
        edc[k] = acc;
    }
    let total = edc.first().copied().unwrap_or(0.0);
    edc.iter().map(|e| 10.0 * (e / total).log10()).collect()
}

/// Time (ms) at which the Schroeder curve first falls to `level_db` or below.
pub fn decay_time_ms(rir: &RoomImpulseResponse, level_db: f64) -> Option<f64> {
    schroeder_decay_db(&rir.taps)
        .iter()
        .position(|&d| d <= level_db)
        .map(|k| k as f64 * 1000.0 / f64::from(rir.sample_rate))
}

/// Linear convolution with the RIR, truncated to the input length.
pub fn add_reverb(clip: &AudioClip, rir: &RoomImpulseResponse) -> Result<AudioClip> {
    if clip.sample_rate != rir.sample_rate {
        return Err(Error::RateMismatch(clip.sample_rate, rir.sample_rate));
    }
    let x = &clip.samples;
    let mut y = vec![0.0; x.len()];
    for (k, &h) in rir.taps.iter().enumerate() {
        if h == 0.0 || k >= x.len() {
            continue;
        }
        for (out, &inp) in y[k..].iter_mut().zip(x) {
            *out += h * inp;
        }
    }
    Ok(clip.with_samples(y))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rir(taps: Vec<f64>) -> RoomImpulseResponse {
        RoomImpulseResponse {
            taps,
            sample_rate: 8000,
            t60_ms: 1.0,
        }
    }

    #[test]
    fn tap_count_and_direct_path() {
        let r = synth_rir(200.0, DEFAULT_DURATION_FACTOR, 8000, 1).unwrap();
        assert_eq!(r.taps.len(), 2400);
        assert_eq!(r.taps[0], 1.0);
        assert!(r.taps.iter().all(|t| t.is_finite()));
        assert!(synth_rir(0.0, 1.5, 8000, 1).is_err());
        assert!(synth_rir(-3.0, 1.5, 8000, 1).is_err());
    }

    #[test]
    fn envelope_is_60_db_down_at_t60() {
        let t60_samples = 800.0 * 8.0;
        let decay = 3.0 * std::f64::consts::LN_10 / t60_samples;
        let drop_db = 20.0 * (-(t60_samples) * decay).exp().log10();
        assert!((drop_db + 60.0).abs() < 1e-9);
    }

    #[test]
    fn unit_impulse_is_identity() {
        let c = AudioClip::new(vec![0.3, -0.2, 0.9, 0.0], 8000).unwrap();
        assert_eq!(add_reverb(&c, &rir(vec![1.0])).unwrap(), c);
    }

    #[test]
    fn hand_convolution() {
        let c = AudioClip::new(vec![1.0, 0.0, 0.0], 8000).unwrap();
        let y = add_reverb(&c, &rir(vec![1.0, 0.5])).unwrap();
        assert_eq!(y.samples, vec![1.0, 0.5, 0.0]);
    }

    #[test]
    fn rate_mismatch() {
        let c = AudioClip::new(vec![1.0], 16000).unwrap();
        assert!(add_reverb(&c, &rir(vec![1.0])).is_err());
    }

    #[test]
    fn schroeder_of_single_tap() {
        assert_eq!(schroeder_decay_db(&[2.0]), vec![0.0]);
        let d = schroeder_decay_db(&[1.0, 0.1]);
        assert!((d[1] - 10.0 * (0.01f64 / 1.01).log10()).abs() < 1e-12);
    }
}
