//! Controlled corruption of speech: additive noise at a target SNR, synthetic
//! reverberation and amplitude clipping.
//!
//! A [`CorruptionSpec`] has a canonical text form used by manifests and the
//! CLI, for example `noise=file:babble.wav@-5dB;reverb=200ms;clip=center:0.6`.
//! Stages run in the order reverb, noise, clip; absent stages are skipped.

mod clip;
mod noise;
mod reverb;

use std::fmt;
use std::str::FromStr;

pub use clip::{apply_clip, center_clip, center_clip_sample, peak_clip, ClipKind};
pub use noise::{
    gen_pink_noise, gen_white_noise, mix_at_snr, mix_at_snr_detailed, snr_gain, Mix, NoiseKind,
    NoiseSource,
};
pub use reverb::{
    add_reverb, decay_time_ms, schroeder_decay_db, synth_rir, RoomImpulseResponse,
    DEFAULT_DURATION_FACTOR,
};

use crate::error::{Error, Result};
use crate::seed;
use crate::signal::AudioClip;

#[derive(Clone, Debug, PartialEq)]
pub struct NoiseSpec {
    pub source: NoiseSource,
    pub snr_db: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClipSpec {
    pub kind: ClipKind,
    pub fraction: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct CorruptionSpec {
    pub noise: Option<NoiseSpec>,
    pub reverb_ms: Option<f64>,
    pub clip: Option<ClipSpec>,
}

impl CorruptionSpec {
    pub fn noise(source: NoiseSource, snr_db: f64) -> Self {
        Self {
            noise: Some(NoiseSpec { source, snr_db }),
            ..Self::default()
        }
    }

    pub fn reverb(t60_ms: f64) -> Self {
        Self {
            reverb_ms: Some(t60_ms),
            ..Self::default()
        }
    }

    pub fn clip(kind: ClipKind, fraction: f64) -> Self {
        Self {
            clip: Some(ClipSpec { kind, fraction }),
            ..Self::default()
        }
    }

    pub fn is_empty(&self) -> bool {
        self.noise.is_none() && self.reverb_ms.is_none() && self.clip.is_none()
    }

    pub fn validate(&self) -> Result<()> {
        if self.is_empty() {
            return Err(Error::EmptyCorruption);
        }
        if let Some(n) = &self.noise {
            if !n.snr_db.is_finite() {
                return Err(Error::InvalidParam(format!("SNR must be finite, got {}", n.snr_db)));
            }
        }
        if let Some(r) = self.reverb_ms {
            if !(r > 0.0 && r.is_finite()) {
                return Err(Error::InvalidParam(format!("reverb delay must be positive, got {r}")));
            }
        }
        if let Some(c) = self.clip {
            if !(c.fraction > 0.0 && c.fraction <= 1.0) {
                return Err(Error::InvalidParam(format!(
                    "clip fraction must be in (0, 1], got {}",
                    c.fraction
                )));
            }
        }
        Ok(())
    }
}

impl fmt::Display for CorruptionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts = Vec::new();
        if let Some(n) = &self.noise {
            parts.push(format!("noise={}@{}dB", n.source, n.snr_db));
        }
        if let Some(r) = self.reverb_ms {
            parts.push(format!("reverb={r}ms"));
        }
        if let Some(c) = self.clip {
            parts.push(format!("clip={}:{}", c.kind, c.fraction));
        }
        f.write_str(&parts.join(";"))
    }
}

fn parse_number(text: &str, suffix: &str) -> Option<f64> {
    let t = text.trim();
    let t = t
        .strip_suffix(suffix)
        .or_else(|| t.strip_suffix(&suffix.to_ascii_lowercase()))
        .unwrap_or(t);
    t.trim().parse::<f64>().ok().filter(|v| v.is_finite())
}

impl FromStr for CorruptionSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let err = |reason: String| Error::SpecParse {
            spec: s.to_string(),
            reason,
        };
        let mut spec = CorruptionSpec::default();
        for part in s.split(';').map(str::trim).filter(|p| !p.is_empty()) {
            let (key, value) = part
                .split_once('=')
                .ok_or_else(|| err(format!("expected key=value, got {part:?}")))?;
            match key.trim() {
                "noise" => {
                    let (src, snr) = value
                        .rsplit_once('@')
                        .ok_or_else(|| err("noise needs <source>@<snr>dB".into()))?;
                    let snr_db =
                        parse_number(snr, "dB").ok_or_else(|| err(format!("bad SNR {snr:?}")))?;
                    let source: NoiseSource = src.parse().map_err(|e: Error| err(e.to_string()))?;
                    if spec.noise.replace(NoiseSpec { source, snr_db }).is_some() {
                        return Err(err("noise given twice".into()));
                    }
                }
                "reverb" => {
                    let ms = parse_number(value, "ms")
                        .ok_or_else(|| err(format!("bad reverb delay {value:?}")))?;
                    if spec.reverb_ms.replace(ms).is_some() {
                        return Err(err("reverb given twice".into()));
                    }
                }
                "clip" => {
                    let (kind, frac) = value
                        .split_once(':')
                        .ok_or_else(|| err("clip needs <center|peak>:<fraction>".into()))?;
                    let kind: ClipKind = kind.trim().parse().map_err(|e: Error| err(e.to_string()))?;
                    let fraction = parse_number(frac, "")
                        .ok_or_else(|| err(format!("bad clip fraction {frac:?}")))?;
                    if spec.clip.replace(ClipSpec { kind, fraction }).is_some() {
                        return Err(err("clip given twice".into()));
                    }
                }
                other => return Err(err(format!("unknown key {other:?}"))),
            }
        }
        spec.validate().map_err(|e| match e {
            Error::EmptyCorruption => e,
            other => err(other.to_string()),
        })?;
        Ok(spec)
    }
}

/// Result of [`apply_corruption_traced`].
#[derive(Clone, Debug)]
pub struct Corrupted {
    pub clip: AudioClip,
    /// SNR re-measured between the (possibly reverberated) speech and the
    /// scaled noise, when a noise stage ran.
    pub measured_snr_db: Option<f64>,
}

/// Applies reverb, then noise relative to the reverberated speech, then
/// clipping. Deterministic for a fixed `(clip, spec, seed)`.
pub fn apply_corruption_traced(
    clip: &AudioClip,
    spec: &CorruptionSpec,
    seed: u64,
) -> Result<Corrupted> {
    spec.validate()?;
    let mut current = clip.clone();
    if let Some(t60) = spec.reverb_ms {
        let rir = synth_rir(
            t60,
            DEFAULT_DURATION_FACTOR,
            current.sample_rate,
            seed::derive(seed, &["rir"]),
        )?;
        current = add_reverb(&current, &rir)?;
    }
    let mut measured_snr_db = None;
    if let Some(n) = &spec.noise {
        let noise = n
            .source
            .realize(current.len(), current.sample_rate, seed)?;
        let mix = mix_at_snr_detailed(&current, &noise, n.snr_db)?;
        measured_snr_db = Some(mix.measured_snr_db(&current));
        current = mix.mixture;
    }
    if let Some(c) = spec.clip {
        current = apply_clip(&current, c.kind, c.fraction)?;
    }
    Ok(Corrupted {
        clip: current,
        measured_snr_db,
    })
}

pub fn apply_corruption(clip: &AudioClip, spec: &CorruptionSpec, seed: u64) -> Result<AudioClip> {
    apply_corruption_traced(clip, spec, seed).map(|c| c.clip)
}
