//! Amplitude distortions: center clipping and peak clipping.
//!
//! Both use `C_th = fraction * max|x|` over the whole clip.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::signal::AudioClip;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ClipKind {
    Center,
    Peak,
}

impl fmt::Display for ClipKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ClipKind::Center => "center",
            ClipKind::Peak => "peak",
        })
    }
}

impl FromStr for ClipKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "center" => Ok(ClipKind::Center),
            "peak" => Ok(ClipKind::Peak),
            other => Err(Error::InvalidParam(format!("unknown clip kind {other:?}"))),
        }
    }
}

fn threshold(clip: &AudioClip, fraction: f64) -> Result<f64> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::InvalidParam(format!(
            "clip threshold fraction must be in (0, 1], got {fraction}"
        )));
    }
    let peak = clip.peak();
    if peak == 0.0 {
        return Err(Error::SilentClip);
    }
    Ok(fraction * peak)
}

/// Center clipping of one sample against threshold `c`.
pub fn center_clip_sample(t: f64, c: f64) -> f64 {
    if t >= c {
        t - c
    } else if t <= -c {
        t + c
    } else {
        0.0
    }
}

pub fn center_clip(clip: &AudioClip, threshold_fraction: f64) -> Result<AudioClip> {
    let c = threshold(clip, threshold_fraction)?;
    Ok(clip.with_samples(clip.samples.iter().map(|&t| center_clip_sample(t, c)).collect()))
}

pub fn peak_clip(clip: &AudioClip, threshold_fraction: f64) -> Result<AudioClip> {
    let c = threshold(clip, threshold_fraction)?;
    Ok(clip.with_samples(clip.samples.iter().map(|&t| t.clamp(-c, c)).collect()))
}

pub fn apply_clip(clip: &AudioClip, kind: ClipKind, fraction: f64) -> Result<AudioClip> {
    match kind {
        ClipKind::Center => center_clip(clip, fraction),
        ClipKind::Peak => peak_clip(clip, fraction),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn clip(v: Vec<f64>) -> AudioClip {
        AudioClip::new(v, 8000).unwrap()
    }

    #[test]
    fn center_clip_example() {
        let out = center_clip(&clip(vec![1.0, 0.2, -0.5]), 0.3).unwrap();
        let expected = [0.7, 0.0, -0.2];
        for (o, e) in out.samples.iter().zip(expected) {
            assert!((o - e).abs() < 1e-15);
        }
    }

    #[test]
    fn center_clip_full_threshold_zeroes_everything() {
        let out = center_clip(&clip(vec![1.0, -1.0, 0.4, -0.9]), 1.0).unwrap();
        assert!(out.samples.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn peak_clip_examples() {
        let out = peak_clip(&clip(vec![1.0, 0.3, -0.8]), 0.5).unwrap();
        assert_eq!(out.samples, vec![0.5, 0.3, -0.5]);
        let x = clip(vec![0.1, -0.7, 0.3]);
        assert_eq!(peak_clip(&x, 1.0).unwrap(), x);
    }

    #[test]
    fn silent_and_bad_fraction() {
        assert!(matches!(
            center_clip(&clip(vec![0.0; 3]), 0.3),
            Err(Error::SilentClip)
        ));
        assert!(matches!(peak_clip(&clip(vec![0.0; 3]), 0.3), Err(Error::SilentClip)));
        assert!(peak_clip(&clip(vec![1.0]), 0.0).is_err());
        assert!(peak_clip(&clip(vec![1.0]), 1.5).is_err());
    }

    proptest! {
        #[test]
        fn odd_symmetric_and_bounded(
            xs in proptest::collection::vec(-1.0f64..1.0, 1..64),
            frac in 0.05f64..1.0,
        ) {
            prop_assume!(xs.iter().any(|&v| v != 0.0));
            let pos = clip(xs.clone());
            let neg = clip(xs.iter().map(|v| -v).collect());
            let c = frac * pos.peak();
            for kind in [ClipKind::Center, ClipKind::Peak] {
                let a = apply_clip(&pos, kind, frac).unwrap();
                let b = apply_clip(&neg, kind, frac).unwrap();
                for ((ya, yb), x) in a.samples.iter().zip(&b.samples).zip(&xs) {
                    prop_assert_eq!(*ya, -*yb);
                    match kind {
                        ClipKind::Center => prop_assert!(ya.abs() <= x.abs()),
                        ClipKind::Peak => prop_assert!(ya.abs() <= c),
                    }
                }
            }
        }
    }
}
