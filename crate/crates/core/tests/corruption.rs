use std::f64::consts::PI;

use cochsid::corruption::{
    add_reverb, apply_corruption, apply_corruption_traced, center_clip, gen_pink_noise,
    gen_white_noise, mix_at_snr, peak_clip, synth_rir, CorruptionSpec, NoiseSource,
    RoomImpulseResponse, DEFAULT_DURATION_FACTOR,
};
use cochsid::signal::save_wav;
use cochsid::AudioClip;
use proptest::prelude::*;

fn mean_square(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64
}

fn sine(n: usize) -> AudioClip {
    AudioClip::new((0..n).map(|i| 0.8 * (2.0 * PI * 220.0 * i as f64 / 8000.0).sin()).collect(), 8000).unwrap()
}

/// Welch estimate at one frequency: Hann-windowed segments, half overlap.
fn welch_at(x: &[f64], freq: f64, sr: f64, seg: usize) -> f64 {
    let win: Vec<f64> = (0..seg).map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / seg as f64).cos()).collect();
    let w = 2.0 * PI * freq / sr;
    let (cos, sin): (Vec<f64>, Vec<f64>) = (0..seg).map(|t| ((w * t as f64).cos(), (w * t as f64).sin())).unzip();
    let mut acc = 0.0;
    let mut n = 0;
    let mut start = 0;
    while start + seg <= x.len() {
        let (mut re, mut im) = (0.0, 0.0);
        for t in 0..seg {
            let v = x[start + t] * win[t];
            re += v * cos[t];
            im -= v * sin[t];
        }
        acc += re * re + im * im;
        n += 1;
        start += seg / 2;
    }
    acc / n as f64
}

#[test]
fn pink_noise_falls_ten_db_per_decade() {
    let sr = 8000.0;
    let x = gen_pink_noise(1 << 18, 8000, 1).unwrap().samples;
    let freqs: Vec<f64> = (0..16).map(|i| 50.0 * (3000.0f64 / 50.0).powf(i as f64 / 15.0)).collect();
    let pts: Vec<(f64, f64)> = freqs
        .iter()
        .map(|&f| (f.log10(), 10.0 * welch_at(&x, f, sr, 2048).log10()))
        .collect();
    let n = pts.len() as f64;
    let (mx, my) = (pts.iter().map(|p| p.0).sum::<f64>() / n, pts.iter().map(|p| p.1).sum::<f64>() / n);
    let slope = pts.iter().map(|(a, b)| (a - mx) * (b - my)).sum::<f64>()
        / pts.iter().map(|(a, _)| (a - mx) * (a - mx)).sum::<f64>();
    assert!((slope + 10.0).abs() <= 1.5, "slope {slope} dB/decade");
}

#[test]
fn pink_and_white_noise_are_zero_mean() {
    for x in [gen_pink_noise(1_000_000, 8000, 1).unwrap(), gen_white_noise(1_000_000, 8000, 1).unwrap()] {
        let mean = x.samples.iter().sum::<f64>() / x.len() as f64;
        assert!(mean.abs() < 0.01, "mean {mean}");
    }
}

#[test]
fn white_noise_has_unit_variance() {
    let x = gen_white_noise(1_000_000, 8000, 1).unwrap().samples;
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / x.len() as f64;
    assert!(mean.abs() <= 0.005 && (var - 1.0).abs() <= 0.01, "mean {mean} var {var}");
}

#[test]
fn rir_schroeder_decay_at_200_ms() {
    let rir = synth_rir(200.0, DEFAULT_DURATION_FACTOR, 8000, 5).unwrap();
    assert_eq!(rir.taps.len(), 2400);
    assert_eq!(rir.taps[0], 1.0);
    let total: f64 = rir.taps.iter().map(|v| v * v).sum();
    let mut rest = total;
    let mut cross = None;
    for (k, v) in rir.taps.iter().enumerate() {
        if 10.0 * (rest / total).log10() <= -60.0 {
            cross = Some(k as f64 / 8.0);
            break;
        }
        rest -= v * v;
    }
    let ms = cross.expect("decay reaches -60 dB");
    assert!((ms - 200.0).abs() <= 10.0, "crossed at {ms} ms");
}

#[test]
fn reverb_matches_direct_convolution() {
    let mut rng = cochsid::seed::rng(3);
    use rand::Rng;
    let x: Vec<f64> = (0..1000).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let taps: Vec<f64> = (0..100).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let rir = RoomImpulseResponse { taps: taps.clone(), sample_rate: 8000, t60_ms: 10.0 };
    let y = add_reverb(&AudioClip::new(x.clone(), 8000).unwrap(), &rir).unwrap();
    for n in 0..x.len() {
        let want: f64 = (0..taps.len()).filter(|&k| k <= n).map(|k| taps[k] * x[n - k]).sum();
        assert!((y.samples[n] - want).abs() < 1e-12);
    }
}

#[test]
fn center_clipped_sine_power_matches_pointwise_rule() {
    let clip = sine(8000);
    let c = 0.3 * clip.peak();
    let oracle: Vec<f64> = clip
        .samples
        .iter()
        .map(|&t| if t >= c { t - c } else if t <= -c { t + c } else { 0.0 })
        .collect();
    let out = center_clip(&clip, 0.3).unwrap();
    assert_eq!(mean_square(&out.samples), mean_square(&oracle));
}

#[test]
fn peak_clipped_sine_is_bounded_and_untouched_below_threshold() {
    let clip = sine(8000);
    let c = 0.3 * clip.peak();
    let out = peak_clip(&clip, 0.3).unwrap();
    for (&t, &z) in clip.samples.iter().zip(&out.samples) {
        assert!(z.abs() <= c);
        if t.abs() <= c {
            assert_eq!(z, t);
        }
    }
}

#[test]
fn reverb_then_file_noise_keeps_target_snr() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("babble.wav");
    // a few overlapping "talkers" stand in for recorded babble
    let babble: Vec<f64> = (0..6000)
        .map(|i| {
            let t = i as f64 / 8000.0;
            0.2 * ((2.0 * PI * 180.0 * t).sin() + (2.0 * PI * 237.0 * t).sin() + (2.0 * PI * 310.0 * t).sin())
        })
        .collect();
    save_wav(&AudioClip::new(babble, 8000).unwrap(), &path).unwrap();
    let spec = CorruptionSpec::noise(NoiseSource::file(&path), -5.0);
    let spec = CorruptionSpec { reverb_ms: Some(200.0), ..spec };
    let speech = sine(16000);
    let out = apply_corruption_traced(&speech, &spec, 8).unwrap();
    assert!((out.measured_snr_db.unwrap() + 5.0).abs() < 1e-6);
    // independent re-measurement against the reverberated speech
    let rir = synth_rir(200.0, DEFAULT_DURATION_FACTOR, 8000, cochsid::seed::derive(8, &["rir"])).unwrap();
    let wet = add_reverb(&speech, &rir).unwrap();
    let noise: Vec<f64> = out.clip.samples.iter().zip(&wet.samples).map(|(m, s)| m - s).collect();
    let snr = 10.0 * (mean_square(&wet.samples) / mean_square(&noise)).log10();
    assert!((snr + 5.0).abs() < 1e-6, "{snr}");
}

fn signal() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, 64..512)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn mixing_hits_the_target_snr(s in signal(), seed in any::<u64>(), idx in 0usize..5) {
        prop_assume!(mean_square(&s) > 1e-6);
        let target = [-5.0, 0.0, 5.0, 10.0, 15.0][idx];
        let speech = AudioClip::new(s, 8000).unwrap();
        let noise = gen_white_noise(speech.len() / 2 + 1, 8000, seed).unwrap();
        let mix = mix_at_snr(&speech, &noise, target).unwrap();
        let added: Vec<f64> = mix.samples.iter().zip(&speech.samples).map(|(m, s)| m - s).collect();
        let measured = 10.0 * (mean_square(&speech.samples) / mean_square(&added)).log10();
        prop_assert!((measured - target).abs() < 1e-6);
    }

    #[test]
    fn clipping_is_odd_and_bounded(s in signal(), fraction in 0.05f64..1.0) {
        prop_assume!(s.iter().any(|v| *v != 0.0));
        let clip = AudioClip::new(s.clone(), 8000).unwrap();
        let neg = AudioClip::new(s.iter().map(|v| -v).collect(), 8000).unwrap();
        let c = fraction * clip.peak();
        let (cc, cn) = (center_clip(&clip, fraction).unwrap(), center_clip(&neg, fraction).unwrap());
        let (pc, pn) = (peak_clip(&clip, fraction).unwrap(), peak_clip(&neg, fraction).unwrap());
        for i in 0..s.len() {
            prop_assert_eq!(cn.samples[i], -cc.samples[i]);
            prop_assert_eq!(pn.samples[i], -pc.samples[i]);
            prop_assert!(cc.samples[i].abs() <= s[i].abs());
            prop_assert!(pc.samples[i].abs() <= c);
        }
        // order preserved inside each clipped region
        for i in 0..s.len() {
            for j in 0..s.len() {
                if s[i] <= s[j] {
                    prop_assert!(cc.samples[i] <= cc.samples[j]);
                    prop_assert!(pc.samples[i] <= pc.samples[j]);
                }
            }
        }
    }

    #[test]
    fn reverb_is_linear(x in signal(), a in -2.0f64..2.0, b in -2.0f64..2.0, seed in any::<u64>()) {
        let y: Vec<f64> = x.iter().rev().map(|v| v * 0.5).collect();
        let rir = synth_rir(20.0, DEFAULT_DURATION_FACTOR, 8000, seed).unwrap();
        let clip = |v: Vec<f64>| AudioClip::new(v, 8000).unwrap();
        let combo = add_reverb(&clip(x.iter().zip(&y).map(|(p, q)| a * p + b * q).collect()), &rir).unwrap();
        let rx = add_reverb(&clip(x.clone()), &rir).unwrap();
        let ry = add_reverb(&clip(y.clone()), &rir).unwrap();
        for i in 0..x.len() {
            prop_assert!((combo.samples[i] - (a * rx.samples[i] + b * ry.samples[i])).abs() < 1e-10);
        }
    }

    #[test]
    fn corruption_is_reproducible(seed in any::<u64>(), snr in -5.0f64..15.0, ms in 10.0f64..300.0) {
        let spec = CorruptionSpec { reverb_ms: Some(ms), ..CorruptionSpec::noise(NoiseSource::pink(), snr) };
        let c = sine(2000);
        prop_assert_eq!(apply_corruption(&c, &spec, seed).unwrap(), apply_corruption(&c, &spec, seed).unwrap());
    }
}
