//! Synthetic speaker corpus: harmonic voices with speaker-specific pitch and
//! formants, for runs that cannot use a licensed corpus.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;

use super::manifest::{write_manifest, DatasetManifest, ManifestEntry, Split};
use crate::biquad::Biquad;
use crate::error::{Error, Result};
use crate::seed;
use crate::signal::{save_wav, AudioClip};

/// Fundamental frequency range shared out among speakers, Hz.
const F0_RANGE: (f64, f64) = (85.0, 255.0);
/// Formant ranges for F1, F2, F3, Hz.
const FORMANT_RANGES: [(f64, f64); 3] = [(300.0, 900.0), (900.0, 2300.0), (2300.0, 3400.0)];
/// Formant bandwidth ranges, Hz.
const BANDWIDTH_RANGES: [(f64, f64); 3] = [(50.0, 90.0), (70.0, 130.0), (100.0, 180.0)];
/// Peak amplitude of every generated utterance.
const PEAK: f64 = 0.5;

#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub n_speakers: usize,
    pub utts_per_speaker: usize,
    pub utt_seconds: f64,
    pub sample_rate: u32,
    pub seed: u64,
}

impl Default for SynthConfig {
    /// Desk scale: 10 speakers, 12 utterances of 2 s at 8 kHz.
    fn default() -> Self {
        Self {
            n_speakers: 10,
            utts_per_speaker: 12,
            utt_seconds: 2.0,
            sample_rate: 8000,
            seed: 42,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_speakers < 2 {
            return Err(Error::InvalidParam("need at least 2 speakers".into()));
        }
        if self.utts_per_speaker < 2 {
            return Err(Error::InvalidParam(
                "need at least 2 utterances per speaker to fill both splits".into(),
            ));
        }
        if !(self.utt_seconds >= 0.5 && self.utt_seconds.is_finite()) {
            return Err(Error::InvalidParam("utterances must last at least 0.5 s".into()));
        }
        if self.sample_rate < 8000 {
            return Err(Error::InvalidParam("sample rate must be >= 8000 Hz".into()));
        }
        Ok(())
    }
}

/// Utterances held out for test: 20% rounded to nearest, at least one.
pub fn n_test_utterances(utts: usize) -> usize {
    let n_train = (0.8 * utts as f64).round() as usize;
    (utts - n_train.min(utts)).max(1)
}

/// Fixed voice of one synthetic speaker.
#[derive(Clone, Debug, PartialEq)]
pub struct SpeakerSignature {
    pub f0: f64,
    pub formants: [f64; 3],
    pub bandwidths: [f64; 3],
}

/// Each speaker gets its own sub-range of every parameter: the ranges are
/// cut into `n` bins and bins are dealt to speakers by independent seeded
/// permutations, so no two speakers share a pitch or formant bin.
pub fn speaker_signatures(n: usize, seed: u64) -> Vec<SpeakerSignature> {
    let mut rng = seed::rng(seed::derive(seed, &["signatures"]));
    let deal = |rng: &mut rand_chacha::ChaCha8Rng| {
        let mut p: Vec<usize> = (0..n).collect();
        p.shuffle(rng);
        p
    };
    let f0_bins = deal(&mut rng);
    let formant_bins: Vec<Vec<usize>> = (0..3).map(|_| deal(&mut rng)).collect();
    let in_bin = |(lo, hi): (f64, f64), bin: usize, rng: &mut rand_chacha::ChaCha8Rng| {
        let w = (hi - lo) / n as f64;
        // stay off the bin edges so neighbours never coincide
        lo + w * (bin as f64 + rng.gen_range(0.15..0.85))
    };
    (0..n)
        .map(|s| SpeakerSignature {
            f0: in_bin(F0_RANGE, f0_bins[s], &mut rng),
            formants: std::array::from_fn(|k| in_bin(FORMANT_RANGES[k], formant_bins[k][s], &mut rng)),
            bandwidths: std::array::from_fn(|k| {
                let (lo, hi) = BANDWIDTH_RANGES[k];
                rng.gen_range(lo..hi)
            }),
        })
        .collect()
}

/// Two-pole resonator with unit gain at DC.
fn resonator(freq: f64, bandwidth: f64, sample_rate: f64) -> Biquad {
    let r = (-PI * bandwidth / sample_rate).exp();
    let a1 = -2.0 * r * (2.0 * PI * freq / sample_rate).cos();
    let a2 = r * r;
    Biquad::new([1.0 + a1 + a2, 0.0, 0.0], [a1, a2])
}

/// Syllable-like on/off pattern: voiced stretches of 120-320 ms separated by
/// 40-160 ms pauses, with 100 ms of silence at both ends. Returns half-open
/// sample ranges.
fn syllables<R: Rng>(n: usize, sr: f64, rng: &mut R) -> Vec<(usize, usize)> {
    let ms = |v: f64| (v * sr / 1000.0) as usize;
    let end = n.saturating_sub(ms(100.0));
    let mut t = ms(100.0);
    let mut out = Vec::new();
    while t + ms(120.0) <= end {
        let len = ms(rng.gen_range(120.0..320.0)).min(end - t);
        out.push((t, t + len));
        t += len + ms(rng.gen_range(40.0..160.0));
    }
    out
}

/// One utterance of `speaker`: a band-limited harmonic pulse train with a
/// smooth +-10% pitch contour, shaped by the speaker's formant cascade and a
/// syllable envelope, then peak-normalized.
pub fn synth_utterance(sig: &SpeakerSignature, seconds: f64, sample_rate: u32, seed: u64) -> Result<AudioClip> {
    let sr = f64::from(sample_rate);
    let n = (seconds * sr).round() as usize;
    let mut rng = seed::rng(seed);
    let f0 = sig.f0 * rng.gen_range(0.97..1.03);
    let (r1, r2) = (rng.gen_range(0.5..2.0), rng.gen_range(2.0..5.0));
    let (p1, p2) = (rng.gen_range(0.0..2.0 * PI), rng.gen_range(0.0..2.0 * PI));
    let n_harmonics = ((0.45 * sr / (1.1 * f0)).floor() as usize).max(1);

    let mut x = vec![0.0; n];
    let mut phase = 0.0;
    for (i, v) in x.iter_mut().enumerate() {
        let t = i as f64 / sr;
        let contour = 0.6 * (2.0 * PI * r1 * t + p1).sin() + 0.4 * (2.0 * PI * r2 * t + p2).sin();
        phase += 2.0 * PI * f0 * (1.0 + 0.1 * contour) / sr;
        *v = (1..=n_harmonics).map(|k| (k as f64 * phase).cos()).sum::<f64>() / n_harmonics as f64;
    }
    for (&f, &b) in sig.formants.iter().zip(&sig.bandwidths) {
        if f < 0.45 * sr {
            resonator(f, b, sr).process(&mut x);
        }
    }

    let mut env = vec![0.0; n];
    let ramp = (0.02 * sr) as usize;
    for (start, end) in syllables(n, sr, &mut rng) {
        let amp = rng.gen_range(0.5..1.0);
        let len = end - start;
        for (j, e) in env[start..end].iter_mut().enumerate() {
            let edge = j.min(len - 1 - j);
            let w = if edge < ramp {
                0.5 - 0.5 * (PI * edge as f64 / ramp as f64).cos()
            } else {
                1.0
            };
            *e = amp * w;
        }
    }
    for (v, e) in x.iter_mut().zip(&env) {
        *v *= e;
    }
    let peak = x.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if peak > 0.0 {
        x.iter_mut().for_each(|v| *v *= PEAK / peak);
    }
    AudioClip::new(x, sample_rate)
}

/// Writes `wav/<utterance>.wav` files and `manifest.csv` under `out_dir`.
/// The last utterances of each speaker form the test split.
pub fn synth_speaker_dataset(out_dir: &Path, cfg: &SynthConfig) -> Result<DatasetManifest> {
    cfg.validate()?;
    let wav_dir = out_dir.join("wav");
    std::fs::create_dir_all(&wav_dir).map_err(|e| Error::io(&wav_dir, e))?;
    let sigs = speaker_signatures(cfg.n_speakers, cfg.seed);
    let width = cfg.n_speakers.saturating_sub(1).to_string().len().max(2);
    let uwidth = cfg.utts_per_speaker.saturating_sub(1).to_string().len().max(2);
    let n_test = n_test_utterances(cfg.utts_per_speaker);
    let mut entries = Vec::with_capacity(cfg.n_speakers * cfg.utts_per_speaker);
    for (s, sig) in sigs.iter().enumerate() {
        let speaker_id = format!("spk{s:0width$}");
        for u in 0..cfg.utts_per_speaker {
            let utterance_id = format!("{speaker_id}_u{u:0uwidth$}");
            let clip = synth_utterance(
                sig,
                cfg.utt_seconds,
                cfg.sample_rate,
                seed::derive(cfg.seed, &["utterance", &utterance_id]),
            )?;
            let wav_path: PathBuf = wav_dir.join(format!("{utterance_id}.wav"));
            save_wav(&clip, &wav_path)?;
            entries.push(ManifestEntry {
                speaker_id: speaker_id.clone(),
                utterance_id,
                wav_path,
                split: if u + n_test >= cfg.utts_per_speaker {
                    Split::Test
                } else {
                    Split::Train
                },
            });
        }
    }
    let manifest = DatasetManifest::new("synthetic", Some(cfg.sample_rate), entries);
    write_manifest(&manifest, &out_dir.join("manifest.csv"))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_arithmetic() {
        assert_eq!(n_test_utterances(12), 2);
        assert_eq!(n_test_utterances(10), 2);
        assert_eq!(n_test_utterances(2), 1);
        assert_eq!(n_test_utterances(3), 1);
    }

    #[test]
    fn signatures_use_disjoint_bins() {
        let n = 10;
        let sigs = speaker_signatures(n, 7);
        let bin = |v: f64, (lo, hi): (f64, f64)| ((v - lo) / ((hi - lo) / n as f64)) as usize;
        let mut f0: Vec<usize> = sigs.iter().map(|s| bin(s.f0, F0_RANGE)).collect();
        f0.sort_unstable();
        assert_eq!(f0, (0..n).collect::<Vec<_>>());
        for k in 0..3 {
            let mut b: Vec<usize> = sigs.iter().map(|s| bin(s.formants[k], FORMANT_RANGES[k])).collect();
            b.sort_unstable();
            assert_eq!(b, (0..n).collect::<Vec<_>>());
        }
        assert_eq!(sigs, speaker_signatures(n, 7));
        assert_ne!(sigs, speaker_signatures(n, 8));
    }

    #[test]
    fn utterance_shape() {
        let sig = &speaker_signatures(2, 1)[0];
        let clip = synth_utterance(sig, 2.0, 8000, 3).unwrap();
        assert_eq!(clip.len(), 16000);
        assert!((clip.peak() - PEAK).abs() < 1e-12);
        // leading silence
        assert!(clip.samples[..700].iter().all(|&v| v.abs() < 1e-3));
        assert_eq!(clip, synth_utterance(sig, 2.0, 8000, 3).unwrap());
    }

    #[test]
    fn rejects_bad_config() {
        let bad = SynthConfig { n_speakers: 1, ..SynthConfig::default() };
        assert!(bad.validate().is_err());
        let bad = SynthConfig { utts_per_speaker: 1, ..SynthConfig::default() };
        assert!(bad.validate().is_err());
    }
}
