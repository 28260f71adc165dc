//! Audio ingestion and basic signal processing.

use std::f64::consts::PI;
use std::path::Path;

use crate::error::{Error, Result};

/// Mono audio signal. All processing happens in double precision; 16-bit
/// quantization only happens in [`save_wav`].
#[derive(Clone, Debug, PartialEq)]
pub struct AudioClip {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl AudioClip {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::InvalidParam("sample rate must be positive".into()));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::InvalidParam(format!("non-finite sample at index {i}")));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / f64::from(self.sample_rate)
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0f64, |m, s| m.max(s.abs()))
    }

    /// New clip at the same rate. Samples are not checked.
    pub fn with_samples(&self, samples: Vec<f64>) -> Self {
        Self {
            samples,
            sample_rate: self.sample_rate,
        }
    }
}

/// Reads a PCM16 or float32 RIFF/WAVE file, averaging channels to mono.
pub fn load_wav(path: impl AsRef<Path>) -> Result<AudioClip> {
    let path = path.as_ref();
    let reader = hound::WavReader::open(path).map_err(|e| match e {
        hound::Error::IoError(io) if io.kind() != std::io::ErrorKind::UnexpectedEof => {
            Error::io(path, io)
        }
        other => Error::Wav(format!("{}: {other}", path.display())),
    })?;
    let spec = reader.spec();
    let channels = usize::from(spec.channels.max(1));
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, 16) => reader
            .into_samples::<i16>()
            .map(|s| s.map(|v| f64::from(v) / 32768.0))
            .collect::<std::result::Result<_, _>>(),
        (hound::SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<std::result::Result<_, _>>(),
        (fmt, bits) => {
            return Err(Error::Wav(format!(
                "{}: unsupported sample format {fmt:?}/{bits} bit",
                path.display()
            )))
        }
    }
    .map_err(|e| Error::Wav(format!("{}: {e}", path.display())))?;

    if interleaved.len() < channels {
        return Err(Error::Wav(format!("{}: zero-length audio", path.display())));
    }
    let samples: Vec<f64> = interleaved
        .chunks_exact(channels)
        .map(|frame| frame.iter().sum::<f64>() / channels as f64)
        .collect();
    AudioClip::new(samples, spec.sample_rate)
        .map_err(|e| Error::Wav(format!("{}: {e}", path.display())))
}

/// Quantizes one sample to 16-bit PCM after clamping to [-1, 1].
pub fn quantize_pcm16(x: f64) -> i16 {
    (x.clamp(-1.0, 1.0) * 32768.0)
        .round()
        .clamp(f64::from(i16::MIN), f64::from(i16::MAX)) as i16
}

/// Writes 16-bit PCM mono.
pub fn save_wav(clip: &AudioClip, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: clip.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let to_err = |e: hound::Error| match e {
        hound::Error::IoError(io) => Error::io(path, io),
        other => Error::Wav(other.to_string()),
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(to_err)?;
    for &s in &clip.samples {
        writer.write_sample(quantize_pcm16(s)).map_err(to_err)?;
    }
    writer.finalize().map_err(to_err)
}

/// Mean of squared samples.
pub fn rms_power(clip: &AudioClip) -> Result<f64> {
    mean_square(&clip.samples).ok_or_else(|| Error::InvalidParam("empty clip".into()))
}

pub(crate) fn mean_square(x: &[f64]) -> Option<f64> {
    if x.is_empty() {
        None
    } else {
        Some(x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64)
    }
}

const KAISER_BETA: f64 = 8.6;
const TAPS_PER_PHASE: usize = 64;

/// Zeroth-order modified Bessel function of the first kind (power series).
pub(crate) fn bessel_i0(x: f64) -> f64 {
    let half = x / 2.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..200 {
        term *= (half / k as f64) * (half / k as f64);
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Rational-ratio polyphase resampler with a Kaiser-windowed sinc kernel.
pub fn resample(clip: &AudioClip, target_rate: u32) -> Result<AudioClip> {
    if target_rate == 0 {
        return Err(Error::InvalidParam("target rate must be positive".into()));
    }
    if target_rate == clip.sample_rate {
        return Ok(clip.clone());
    }
    let src = u64::from(clip.sample_rate);
    let dst = u64::from(target_rate);
    let g = gcd(src, dst);
    let (up, down) = (dst / g, src / g);

    // cutoff relative to the input Nyquist frequency
    let cut = (up as f64 / down as f64).min(1.0);
    let half = (TAPS_PER_PHASE / 2) as f64;
    let i0_beta = bessel_i0(KAISER_BETA);

    // Phase p places the output at input position i + p/up; tap j reads input
    // sample i + j - (TAPS_PER_PHASE/2 - 1).
    let offset = TAPS_PER_PHASE as i64 / 2 - 1;
    let table: Vec<Vec<f64>> = (0..up)
        .map(|p| {
            let frac = p as f64 / up as f64;
            let mut taps: Vec<f64> = (0..TAPS_PER_PHASE)
                .map(|j| {
                    let tau = frac - (j as i64 - offset) as f64;
                    let r = tau / half;
                    let w = if r.abs() >= 1.0 {
                        0.0
                    } else {
                        bessel_i0(KAISER_BETA * (1.0 - r * r).sqrt()) / i0_beta
                    };
                    cut * sinc(cut * tau) * w
                })
                .collect();
            let sum: f64 = taps.iter().sum();
            taps.iter_mut().for_each(|t| *t /= sum);
            taps
        })
        .collect();

    let n_in = clip.samples.len() as u64;
    let n_out = ((n_in * up) as f64 / down as f64).round() as u64;
    let x = &clip.samples;
    let samples = (0..n_out)
        .map(|n| {
            let pos = n * down;
            let base = (pos / up) as i64;
            let taps = &table[(pos % up) as usize];
            taps.iter()
                .enumerate()
                .map(|(j, &h)| {
                    let k = base + j as i64 - offset;
                    if k < 0 || k >= x.len() as i64 {
                        0.0
                    } else {
                        h * x[k as usize]
                    }
                })
                .sum()
        })
        .collect();
    Ok(AudioClip {
        samples,
        sample_rate: target_rate,
    })
}

/// Energy-VAD settings. The threshold is relative to the loudest frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VadParams {
    pub frame_ms: f64,
    pub hop_ms: f64,
    pub energy_floor_db: f64,
    pub min_speech_frames: usize,
}

impl Default for VadParams {
    fn default() -> Self {
        Self {
            frame_ms: 20.0,
            hop_ms: 10.0,
            energy_floor_db: -40.0,
            min_speech_frames: 3,
        }
    }
}

impl VadParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.hop_ms > 0.0 && self.frame_ms >= self.hop_ms) {
            return Err(Error::InvalidParam(
                "VAD needs frame_ms >= hop_ms > 0".into(),
            ));
        }
        if self.min_speech_frames < 1 {
            return Err(Error::InvalidParam("min_speech_frames must be >= 1".into()));
        }
        Ok(())
    }
}

/// Per-frame speech decisions, after gap closing. Frame `j` covers
/// `[j*hop, min(j*hop + frame, n))`; the last frame may be short so that
/// every sample belongs to some frame.
fn speech_frames(x: &[f64], frame: usize, hop: usize, params: &VadParams) -> Option<Vec<bool>> {
    let n = x.len();
    let n_frames = (n - frame).div_ceil(hop) + 1;
    let energies: Vec<f64> = (0..n_frames)
        .map(|j| {
            let start = j * hop;
            let end = (start + frame).min(n);
            mean_square(&x[start..end]).unwrap_or(0.0)
        })
        .collect();
    let peak = energies.iter().cloned().fold(0.0f64, f64::max);
    if peak <= 0.0 {
        return None;
    }
    let threshold = peak * 10f64.powf(params.energy_floor_db / 10.0);
    let mut speech: Vec<bool> = energies.iter().map(|&e| e > threshold).collect();

    // close short non-speech gaps bounded by speech on both sides
    let mut j = 0;
    while j < n_frames {
        if speech[j] {
            j += 1;
            continue;
        }
        let start = j;
        while j < n_frames && !speech[j] {
            j += 1;
        }
        let bounded = start > 0 && j < n_frames;
        if bounded && j - start < params.min_speech_frames {
            speech[start..j].iter_mut().for_each(|s| *s = true);
        }
    }
    Some(speech)
}

/// Drops low-energy frames and concatenates the rest in order.
///
/// Clips no longer than one frame, and clips in which no frame rises above the
/// floor, come back unchanged.
pub fn vad_trim(clip: &AudioClip, params: &VadParams) -> Result<AudioClip> {
    params.validate()?;
    let sr = f64::from(clip.sample_rate);
    let frame = ((params.frame_ms * sr / 1000.0).round() as usize).max(1);
    let hop = ((params.hop_ms * sr / 1000.0).round() as usize).clamp(1, frame);
    let x = &clip.samples;
    if x.len() <= frame {
        return Ok(clip.clone());
    }
    let Some(speech) = speech_frames(x, frame, hop, params) else {
        return Ok(clip.clone());
    };
    if !speech.iter().any(|&s| s) {
        return Ok(clip.clone());
    }
    let mut keep = vec![false; x.len()];
    for (j, _) in speech.iter().enumerate().filter(|(_, &s)| s) {
        let start = j * hop;
        let end = (start + frame).min(x.len());
        keep[start..end].iter_mut().for_each(|k| *k = true);
    }
    let samples = x
        .iter()
        .zip(&keep)
        .filter_map(|(&s, &k)| k.then_some(s))
        .collect();
    Ok(clip.with_samples(samples))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sine(freq: f64, amp: f64, n: usize, sr: u32) -> Vec<f64> {
        (0..n)
            .map(|i| amp * (2.0 * PI * freq * i as f64 / f64::from(sr)).sin())
            .collect()
    }

    #[test]
    fn rejects_bad_clips() {
        assert!(AudioClip::new(vec![0.0], 0).is_err());
        assert!(AudioClip::new(vec![f64::NAN], 8000).is_err());
        assert!(AudioClip::new(vec![f64::INFINITY], 8000).is_err());
    }

    #[test]
    fn rms_power_examples() {
        let c = AudioClip::new(vec![0.5; 100], 8000).unwrap();
        assert_eq!(rms_power(&c).unwrap(), 0.25);
        let z = AudioClip::new(vec![0.0; 10], 8000).unwrap();
        assert_eq!(rms_power(&z).unwrap(), 0.0);
        let s = AudioClip::new(sine(100.0, 1.0, 8000, 8000), 8000).unwrap();
        assert!((rms_power(&s).unwrap() - 0.5).abs() < 1e-9);
        let e = AudioClip::new(vec![], 8000).unwrap();
        assert!(rms_power(&e).is_err());
    }

    #[test]
    fn quantization_clamps() {
        assert_eq!(quantize_pcm16(2.0), 32767);
        assert_eq!(quantize_pcm16(-2.0), -32768);
        assert_eq!(quantize_pcm16(0.5), 16384);
        assert_eq!(quantize_pcm16(0.0), 0);
    }

    #[test]
    fn bessel_matches_known_values() {
        assert!((bessel_i0(0.0) - 1.0).abs() < 1e-15);
        // I0(1) = 1.2660658777520082
        assert!((bessel_i0(1.0) - 1.266_065_877_752_008_2).abs() < 1e-13);
    }

    #[test]
    fn resample_identity_and_length() {
        let c = AudioClip::new(sine(440.0, 0.3, 1234, 16000), 16000).unwrap();
        assert_eq!(resample(&c, 16000).unwrap(), c);
        let c = AudioClip::new(vec![0.1; 16000], 16000).unwrap();
        assert_eq!(resample(&c, 8000).unwrap().len(), 8000);
        let c = AudioClip::new(vec![0.1; 4410], 44100).unwrap();
        let r = resample(&c, 8000).unwrap();
        assert!((r.duration_secs() - c.duration_secs()).abs() <= 1.0 / 8000.0);
        assert!(resample(&c, 0).is_err());
    }

    #[test]
    fn resample_preserves_dc_in_the_interior() {
        let c = AudioClip::new(vec![0.25; 3000], 12000).unwrap();
        let r = resample(&c, 8000).unwrap();
        for &v in &r.samples[100..r.len() - 100] {
            assert!((v - 0.25).abs() < 1e-9);
        }
    }

    #[test]
    fn vad_all_zero_is_unchanged() {
        let c = AudioClip::new(vec![0.0; 8000], 8000).unwrap();
        assert_eq!(vad_trim(&c, &VadParams::default()).unwrap(), c);
    }

    #[test]
    fn vad_keeps_continuous_tone() {
        let c = AudioClip::new(sine(300.0, 0.5, 8123, 8000), 8000).unwrap();
        let t = vad_trim(&c, &VadParams::default()).unwrap();
        assert_eq!(t.len(), c.len());
    }

    #[test]
    fn vad_short_clip_unchanged() {
        let c = AudioClip::new(vec![0.3; 100], 8000).unwrap();
        assert_eq!(vad_trim(&c, &VadParams::default()).unwrap(), c);
    }

    #[test]
    fn vad_closes_short_gaps() {
        let sr = 8000;
        // 80-sample frames (10 ms frame, 10 ms hop): 5 loud, 2 silent, 5 loud
        let p = VadParams {
            frame_ms: 10.0,
            hop_ms: 10.0,
            energy_floor_db: -40.0,
            min_speech_frames: 3,
        };
        let mut x = sine(500.0, 0.5, 400, sr);
        x.extend(vec![0.0; 160]);
        x.extend(sine(500.0, 0.5, 400, sr));
        let c = AudioClip::new(x.clone(), sr).unwrap();
        assert_eq!(vad_trim(&c, &p).unwrap().len(), x.len());
        let p1 = VadParams {
            min_speech_frames: 2,
            ..p
        };
        assert_eq!(vad_trim(&c, &p1).unwrap().len(), 800);
    }

    #[test]
    fn vad_rejects_bad_params() {
        let c = AudioClip::new(vec![0.3; 1000], 8000).unwrap();
        let p = VadParams {
            frame_ms: 5.0,
            hop_ms: 10.0,
            ..VadParams::default()
        };
        assert!(vad_trim(&c, &p).is_err());
    }
}
