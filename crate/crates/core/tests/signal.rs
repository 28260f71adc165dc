use std::f64::consts::PI;

use cochsid::corruption::gen_white_noise;
use cochsid::signal::{load_wav, resample, rms_power, save_wav, vad_trim, VadParams};
use cochsid::AudioClip;
use proptest::prelude::*;

fn sine(freq: f64, amp: f64, n: usize, sr: u32) -> Vec<f64> {
    (0..n)
        .map(|i| amp * (2.0 * PI * freq * i as f64 / f64::from(sr)).sin())
        .collect()
}

/// Magnitude of the DFT of `x` at bin `k`.
fn dft_mag(x: &[f64], k: usize) -> f64 {
    let n = x.len() as f64;
    let (re, im) = x.iter().enumerate().fold((0.0, 0.0), |(re, im), (t, &v)| {
        let a = 2.0 * PI * k as f64 * t as f64 / n;
        (re + v * a.cos(), im - v * a.sin())
    });
    (re * re + im * im).sqrt()
}

#[test]
fn wav_round_trip_of_white_noise_is_within_one_lsb() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("noise.wav");
    let raw = gen_white_noise(8000, 8000, 1).unwrap();
    // keep the signal in range so clamping does not enter
    let peak = raw.peak();
    let clip = raw.with_samples(raw.samples.iter().map(|v| 0.9 * v / peak).collect());
    save_wav(&clip, &path).unwrap();
    let back = load_wav(&path).unwrap();
    assert_eq!(back.sample_rate, 8000);
    assert_eq!(back.len(), clip.len());
    let worst = clip
        .samples
        .iter()
        .zip(&back.samples)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    assert!(worst <= 1.0 / 32768.0, "worst error {worst}");
}

#[test]
fn resampled_tone_keeps_frequency_and_amplitude() {
    let clip = AudioClip::new(sine(1000.0, 0.5, 16000, 16000), 16000).unwrap();
    let out = resample(&clip, 8000).unwrap();
    assert_eq!(out.sample_rate, 8000);
    // interior half second: 4000 samples, 2 Hz bins, whole periods of 1 kHz
    let mid = &out.samples[2000..6000];
    let mags: Vec<f64> = (1..2000).map(|k| dft_mag(mid, k)).collect();
    let best = mags.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0 + 1;
    assert_eq!(best * 2, 1000);
    let amp = 2.0 * mags[best - 1] / mid.len() as f64;
    assert!((amp - 0.5).abs() / 0.5 < 0.01, "amplitude {amp}");
}

#[test]
fn vad_drops_surrounding_silence() {
    let sr = 8000;
    let mut x: Vec<f64> = (0..sr).map(|i| if i % 2 == 0 { 1e-6 } else { -1e-6 }).collect();
    x.extend(sine(440.0, 0.5, sr as usize, sr));
    x.extend((0..sr).map(|i| if i % 2 == 0 { 1e-6 } else { -1e-6 }));
    let clip = AudioClip::new(x, sr).unwrap();
    let out = vad_trim(&clip, &VadParams::default()).unwrap();
    let frame = 0.02;
    assert!((out.duration_secs() - 1.0).abs() <= 2.0 * frame, "{}", out.duration_secs());
}

#[test]
fn sine_power_is_one_half() {
    let clip = AudioClip::new(sine(100.0, 1.0, 8000, 8000), 8000).unwrap();
    assert!((rms_power(&clip).unwrap() - 0.5).abs() < 1e-9);
}

fn bursty() -> impl Strategy<Value = Vec<f64>> {
    // alternating loud and quiet runs so the VAD has something to cut
    prop::collection::vec((0.0f64..1.0, 50usize..600, any::<bool>()), 1..12).prop_map(|runs| {
        let mut x = Vec::new();
        for (i, (amp, len, loud)) in runs.into_iter().enumerate() {
            let a = if loud { amp } else { amp * 1e-4 };
            x.extend((0..len).map(|t| a * ((t + i) as f64 * 0.37).sin()));
        }
        x
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn vad_is_idempotent_and_never_lengthens(x in bursty()) {
        let clip = AudioClip::new(x, 8000).unwrap();
        let p = VadParams::default();
        let once = vad_trim(&clip, &p).unwrap();
        prop_assert!(once.len() <= clip.len());
        let twice = vad_trim(&once, &p).unwrap();
        prop_assert_eq!(twice, once);
    }

    #[test]
    fn resampling_preserves_tone_energy(freq in 100.0f64..3000.0, amp in 0.1f64..0.9) {
        let clip = AudioClip::new(sine(freq, amp, 16000, 16000), 16000).unwrap();
        let out = resample(&clip, 8000).unwrap();
        // compare away from the filter edges
        let inner = |s: &[f64]| s[s.len() / 8..s.len() * 7 / 8].iter().map(|v| v * v).sum::<f64>() / (s.len() * 3 / 4) as f64;
        let (pi, po) = (inner(&clip.samples), inner(&out.samples));
        prop_assert!((po - pi).abs() / pi < 0.01, "in {} out {}", pi, po);
    }
}
