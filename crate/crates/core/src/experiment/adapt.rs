use rayon::prelude::*;

use super::manifest::{DatasetManifest, ManifestEntry, Split};
use crate::corruption::{apply_corruption, CorruptionSpec, NoiseSource};
use crate::error::{Error, Result};
use crate::gammatone::Frontend;
use crate::matrix::Matrix;
use crate::seed;
use crate::signal::{load_wav, resample, vad_trim, AudioClip, VadParams};

/// Which corrupted copies of each training utterance to add.
#[derive(Clone, Debug, PartialEq)]
pub struct AdaptationPlan {
    pub adapt_noise: NoiseSource,
    pub adapt_snrs: Vec<f64>,
    pub include_clean: bool,
}

impl AdaptationPlan {
    /// Clean utterances plus one copy with `noise` at -5 dB.
    pub fn noise_adapted(noise: NoiseSource) -> Self {
        Self {
            adapt_noise: noise,
            adapt_snrs: vec![-5.0],
            include_clean: true,
        }
    }

    /// Clean utterances only: the noise-free baseline.
    pub fn clean_only() -> Self {
        Self {
            adapt_noise: NoiseSource::white(),
            adapt_snrs: Vec::new(),
            include_clean: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.include_clean && self.adapt_snrs.is_empty() {
            return Err(Error::EmptyPlan);
        }
        if let Some(s) = self.adapt_snrs.iter().find(|s| !s.is_finite()) {
            return Err(Error::InvalidParam(format!("non-finite adaptation SNR {s}")));
        }
        Ok(())
    }

    /// Images produced per training utterance.
    pub fn variants(&self) -> Vec<CorruptionSpec> {
        let mut v = Vec::new();
        if self.include_clean {
            v.push(CorruptionSpec::default());
        }
        for &snr in &self.adapt_snrs {
            v.push(CorruptionSpec::noise(self.adapt_noise.clone(), snr));
        }
        v
    }
}

/// Feature images with speaker labels.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledImages {
    pub images: Vec<Matrix>,
    pub labels: Vec<usize>,
    pub n_speakers: usize,
}

/// An utterance after VAD and resampling, ready for corruption.
#[derive(Clone, Debug)]
pub struct PreparedUtterance {
    pub utterance_id: String,
    pub label: usize,
    pub clip: AudioClip,
}

/// Loads, VAD-trims and resamples every entry of `split`.
pub fn prepare_split(
    manifest: &DatasetManifest,
    split: Split,
    frontend: &Frontend,
) -> Result<Vec<PreparedUtterance>> {
    let labels = manifest.speaker_labels();
    let entries = manifest.split(split);
    if entries.is_empty() {
        return Err(Error::Manifest(format!("{split} split is empty")));
    }
    entries
        .par_iter()
        .map(|e| {
            Ok(PreparedUtterance {
                utterance_id: e.utterance_id.clone(),
                label: labels[&e.speaker_id],
                clip: prepare_clip(e, frontend.config.sample_rate())?,
            })
        })
        .collect()
}

fn prepare_clip(entry: &ManifestEntry, sample_rate: u32) -> Result<AudioClip> {
    let clip = load_wav(&entry.wav_path)?;
    let trimmed = vad_trim(&clip, &VadParams::default())?;
    if trimmed.samples.iter().all(|&v| v == 0.0) {
        return Err(Error::InvalidParam(format!(
            "{}: no speech left after VAD",
            entry.utterance_id
        )));
    }
    if trimmed.sample_rate == sample_rate {
        Ok(trimmed)
    } else {
        resample(&trimmed, sample_rate)
    }
}

/// Seed for one utterance under one condition. Training and evaluation use
/// different `role` strings, so test noise is never the training realization.
pub fn utterance_seed(seed: u64, role: &str, utterance_id: &str, spec: &CorruptionSpec) -> u64 {
    let condition = if spec.is_empty() { "clean".to_string() } else { spec.to_string() };
    seed::derive(seed, &[role, utterance_id, &condition])
}

/// Feature image of `utt` under `spec` (empty spec = clean).
pub fn corrupted_image(
    utt: &PreparedUtterance,
    spec: &CorruptionSpec,
    frontend: &Frontend,
    seed: u64,
) -> Result<Matrix> {
    let clip = if spec.is_empty() {
        utt.clip.clone()
    } else {
        apply_corruption(&utt.clip, spec, seed)?
    };
    Ok(frontend.feature_image(&clip)?.values)
}

/// Training images for `plan`: per train utterance the clean image (if
/// enabled) and one corrupted image per adaptation SNR, utterance-major.
pub fn build_adapted_training_set(
    manifest: &DatasetManifest,
    plan: &AdaptationPlan,
    frontend: &Frontend,
    seed: u64,
) -> Result<LabeledImages> {
    plan.validate()?;
    let utts = prepare_split(manifest, Split::Train, frontend)?;
    let variants = plan.variants();
    let jobs: Vec<(&PreparedUtterance, &CorruptionSpec)> = utts
        .iter()
        .flat_map(|u| variants.iter().map(move |v| (u, v)))
        .collect();
    let images = jobs
        .par_iter()
        .map(|(u, spec)| {
            corrupted_image(u, spec, frontend, utterance_seed(seed, "train", &u.utterance_id, spec))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LabeledImages {
        images,
        labels: jobs.iter().map(|(u, _)| u.label).collect(),
        n_speakers: manifest.speakers().len(),
    })
}
