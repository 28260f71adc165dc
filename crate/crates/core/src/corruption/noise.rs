//! Generated and recorded noise, and additive mixing at a target SNR.

use std::fmt;
use std::str::FromStr;
use std::path::PathBuf;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::biquad::{cascade_process, Biquad};
use crate::error::{Error, Result};
use crate::seed;
use crate::signal::{load_wav, mean_square, resample, AudioClip};

#[derive(Clone, Debug, PartialEq)]
pub enum NoiseKind {
    White,
    Pink,
    /// Recorded noise (babble, car, street, ...) read from a WAV file.
    File(PathBuf),
}

#[derive(Clone, Debug, PartialEq)]
pub struct NoiseSource {
    pub kind: NoiseKind,
    /// Mixed into every seed used to realize this source.
    pub seed: u64,
}

impl NoiseSource {
    pub fn white() -> Self {
        Self {
            kind: NoiseKind::White,
            seed: 0,
        }
    }

    pub fn pink() -> Self {
        Self {
            kind: NoiseKind::Pink,
            seed: 0,
        }
    }

    pub fn file(path: impl Into<PathBuf>) -> Self {
        Self {
            kind: NoiseKind::File(path.into()),
            seed: 0,
        }
    }

    /// Short label used in reports: `white`, `pink` or the file stem.
    pub fn label(&self) -> String {
        match &self.kind {
            NoiseKind::White => "white".into(),
            NoiseKind::Pink => "pink".into(),
            NoiseKind::File(p) => p
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| p.display().to_string()),
        }
    }

    /// Produces exactly `n_samples` of noise at `sample_rate`.
    ///
    /// Generated kinds are drawn fresh from `stream_seed`. File noise is
    /// resampled if needed, then tiled from a seeded circular offset when too
    /// short, or cropped at a seeded offset when too long.
    pub fn realize(&self, n_samples: usize, sample_rate: u32, stream_seed: u64) -> Result<AudioClip> {
        let s = seed::derive(stream_seed, &["noise", &self.seed.to_string()]);
        match &self.kind {
            NoiseKind::White => gen_white_noise(n_samples, sample_rate, s),
            NoiseKind::Pink => gen_pink_noise(n_samples, sample_rate, s),
            NoiseKind::File(path) => {
                let mut clip = load_wav(path)?;
                if clip.sample_rate != sample_rate {
                    clip = resample(&clip, sample_rate)?;
                }
                if clip.is_empty() || clip.samples.iter().all(|&v| v == 0.0) {
                    return Err(Error::ZeroPower("noise"));
                }
                Ok(fit_length(&clip, n_samples, &mut seed::rng(s)))
            }
        }
    }
}

impl FromStr for NoiseSource {
    type Err = Error;

    /// `white`, `pink` or `file:<path>`.
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "white" => Ok(NoiseSource::white()),
            "pink" => Ok(NoiseSource::pink()),
            other => match other.strip_prefix("file:") {
                Some(p) if !p.is_empty() => Ok(NoiseSource::file(PathBuf::from(p))),
                _ => Err(Error::InvalidParam(format!("unknown noise source {other:?}"))),
            },
        }
    }
}

impl fmt::Display for NoiseSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            NoiseKind::White => write!(f, "white"),
            NoiseKind::Pink => write!(f, "pink"),
            NoiseKind::File(p) => write!(f, "file:{}", p.display()),
        }
    }
}

fn fit_length(noise: &AudioClip, n: usize, rng: &mut impl Rng) -> AudioClip {
    let len = noise.len();
    let start = if len > n {
        rng.gen_range(0..=len - n)
    } else {
        rng.gen_range(0..len)
    };
    let samples = (0..n).map(|i| noise.samples[(start + i) % len]).collect();
    noise.with_samples(samples)
}

fn check_len(n_samples: usize) -> Result<()> {
    if n_samples == 0 {
        return Err(Error::InvalidParam("noise length must be positive".into()));
    }
    Ok(())
}

/// I.i.d. standard Gaussian samples.
pub fn gen_white_noise(n_samples: usize, sample_rate: u32, seed: u64) -> Result<AudioClip> {
    check_len(n_samples)?;
    let mut rng = seed::rng(seed);
    let samples = (0..n_samples).map(|_| rng.sample(StandardNormal)).collect();
    AudioClip::new(samples, sample_rate)
}

// Pole/zero radii of a three-pole 1/f approximation (J. O. Smith), valid from
// roughly 7e-4 of the sample rate up to Nyquist.
const PINK_POLES: [f64; 3] = [0.995_727_54, 0.947_906_49, 0.535_675_05];
const PINK_ZEROS: [f64; 3] = [0.984_436_04, 0.833_923_34, 0.075_683_59];
const DC_CORNER_HZ: f64 = 2.0;
const PINK_WARMUP: usize = 1 << 14;

fn pink_sections(sample_rate: u32) -> [Biquad; 3] {
    let dc_pole = (-2.0 * std::f64::consts::PI * DC_CORNER_HZ / f64::from(sample_rate)).exp();
    // first section also carries the DC blocker: zeros {1, z0}, poles {r, p0}
    let first = Biquad::new(
        [1.0, -(1.0 + PINK_ZEROS[0]), PINK_ZEROS[0]],
        [-(dc_pole + PINK_POLES[0]), dc_pole * PINK_POLES[0]],
    );
    [
        first,
        Biquad::first_order(PINK_ZEROS[1], PINK_POLES[1]),
        Biquad::first_order(PINK_ZEROS[2], PINK_POLES[2]),
    ]
}

/// Gain giving unit output variance for unit-variance white input.
fn pink_gain(sections: &[Biquad]) -> f64 {
    let mut h = vec![0.0; 1 << 17];
    h[0] = 1.0;
    cascade_process(sections, &mut h);
    1.0 / h.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// 1/f noise: white Gaussian noise through a three-section pole/zero cascade,
/// scaled to unit variance.
pub fn gen_pink_noise(n_samples: usize, sample_rate: u32, seed: u64) -> Result<AudioClip> {
    check_len(n_samples)?;
    let white = gen_white_noise(n_samples + PINK_WARMUP, sample_rate, seed)?;
    let sections = pink_sections(sample_rate);
    let mut x = white.samples;
    cascade_process(&sections, &mut x);
    let g = pink_gain(&sections);
    let samples = x[PINK_WARMUP..].iter().map(|v| v * g).collect();
    AudioClip::new(samples, sample_rate)
}

/// Noise gain `g` such that `speech + g * noise` has the requested SNR.
pub fn snr_gain(speech_power: f64, noise_power: f64, snr_db: f64) -> f64 {
    (speech_power / (noise_power * 10f64.powf(snr_db / 10.0))).sqrt()
}

/// Mixture together with the scaled noise that was added.
#[derive(Clone, Debug)]
pub struct Mix {
    pub mixture: AudioClip,
    pub scaled_noise: Vec<f64>,
    pub gain: f64,
}

impl Mix {
    /// SNR re-measured from the speech and the scaled noise actually added.
    pub fn measured_snr_db(&self, speech: &AudioClip) -> f64 {
        let ps = mean_square(&speech.samples).unwrap_or(0.0);
        let pn = mean_square(&self.scaled_noise).unwrap_or(0.0);
        10.0 * (ps / pn).log10()
    }
}

pub fn mix_at_snr_detailed(speech: &AudioClip, noise: &AudioClip, snr_db: f64) -> Result<Mix> {
    if speech.sample_rate != noise.sample_rate {
        return Err(Error::RateMismatch(speech.sample_rate, noise.sample_rate));
    }
    if !snr_db.is_finite() {
        return Err(Error::InvalidParam(format!("SNR must be finite, got {snr_db}")));
    }
    if noise.is_empty() {
        return Err(Error::ZeroPower("noise"));
    }
    // tile or truncate the noise to the speech length before measuring power
    let n = speech.len();
    let fitted: Vec<f64> = (0..n).map(|i| noise.samples[i % noise.len()]).collect();
    let ps = mean_square(&speech.samples).unwrap_or(0.0);
    let pn = mean_square(&fitted).unwrap_or(0.0);
    if ps <= 0.0 {
        return Err(Error::ZeroPower("speech"));
    }
    if pn <= 0.0 {
        return Err(Error::ZeroPower("noise"));
    }
    let gain = snr_gain(ps, pn, snr_db);
    let scaled_noise: Vec<f64> = fitted.iter().map(|v| gain * v).collect();
    let mixture = speech
        .samples
        .iter()
        .zip(&scaled_noise)
        .map(|(s, v)| s + v)
        .collect();
    Ok(Mix {
        mixture: speech.with_samples(mixture),
        scaled_noise,
        gain,
    })
}

/// `speech + g * noise` at exactly `snr_db`. The result is not renormalized.
pub fn mix_at_snr(speech: &AudioClip, noise: &AudioClip, snr_db: f64) -> Result<AudioClip> {
    mix_at_snr_detailed(speech, noise, snr_db).map(|m| m.mixture)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn white_noise_statistics() {
        let w = gen_white_noise(1_000_000, 8000, 1).unwrap();
        let n = w.len() as f64;
        let mean = w.samples.iter().sum::<f64>() / n;
        let var = w.samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        assert!(mean.abs() < 0.005, "mean {mean}");
        assert!((var - 1.0).abs() < 0.01, "var {var}");
    }

    #[test]
    fn white_noise_determinism() {
        let a = gen_white_noise(1000, 8000, 9).unwrap();
        let b = gen_white_noise(1000, 8000, 9).unwrap();
        let c = gen_white_noise(1000, 8000, 10).unwrap();
        assert_eq!(a, b);
        assert!(a.samples.iter().zip(&c.samples).any(|(x, y)| x != y));
        assert!(gen_white_noise(0, 8000, 1).is_err());
    }

    #[test]
    fn pink_noise_zero_mean_and_deterministic() {
        let p = gen_pink_noise(1_000_000, 8000, 3).unwrap();
        let mean = p.samples.iter().sum::<f64>() / p.len() as f64;
        assert!(mean.abs() < 0.01, "mean {mean}");
        let var = p.samples.iter().map(|v| v * v).sum::<f64>() / p.len() as f64;
        assert!((var - 1.0).abs() < 0.1, "var {var}");
        assert_eq!(p, gen_pink_noise(1_000_000, 8000, 3).unwrap());
    }

    #[test]
    fn unit_powers_at_zero_db_give_unit_gain() {
        let speech = AudioClip::new(vec![1.0, -1.0, 1.0, -1.0], 8000).unwrap();
        let noise = AudioClip::new(vec![-1.0, -1.0, 1.0, 1.0], 8000).unwrap();
        let m = mix_at_snr_detailed(&speech, &noise, 0.0).unwrap();
        assert!((m.gain - 1.0).abs() < 1e-15);
        assert_eq!(m.mixture.samples, vec![0.0, -2.0, 2.0, 0.0]);
    }

    #[test]
    fn mix_errors() {
        let speech = AudioClip::new(vec![0.0; 4], 8000).unwrap();
        let noise = AudioClip::new(vec![1.0; 4], 8000).unwrap();
        assert!(matches!(
            mix_at_snr(&speech, &noise, 0.0),
            Err(Error::ZeroPower("speech"))
        ));
        assert!(matches!(
            mix_at_snr(&noise, &speech, 0.0),
            Err(Error::ZeroPower("noise"))
        ));
        let other_rate = AudioClip::new(vec![1.0; 4], 16000).unwrap();
        assert!(mix_at_snr(&noise, &other_rate, 0.0).is_err());
        assert!(mix_at_snr(&noise, &noise, f64::INFINITY).is_err());
    }

    #[test]
    fn short_noise_is_tiled() {
        let speech = AudioClip::new(vec![0.5; 7], 8000).unwrap();
        let noise = AudioClip::new(vec![1.0, -1.0], 8000).unwrap();
        let m = mix_at_snr_detailed(&speech, &noise, 10.0).unwrap();
        assert_eq!(m.scaled_noise.len(), 7);
        assert!((m.measured_snr_db(&speech) - 10.0).abs() < 1e-9);
    }

    #[test]
    fn fit_length_crops_and_tiles() {
        let noise = AudioClip::new((0..10).map(f64::from).collect(), 8000).unwrap();
        let mut rng = seed::rng(5);
        let cropped = fit_length(&noise, 4, &mut rng);
        let s0 = cropped.samples[0];
        assert_eq!(cropped.samples, vec![s0, s0 + 1.0, s0 + 2.0, s0 + 3.0]);
        let tiled = fit_length(&noise, 25, &mut rng);
        assert_eq!(tiled.len(), 25);
        assert_eq!(tiled.samples[0], tiled.samples[10]);
    }
}
